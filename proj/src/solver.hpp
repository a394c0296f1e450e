#pragma once

// Segregation-minimizing school mergers.
//
// A plan partitions the schools into clusters of one to three pairwise
// adjacent schools. Inside a cluster the grade domain is cut into contiguous
// spans, one per member, and every member serves its span for the combined
// attendance area. Because district totals do not change under a merger, the
// dissimilarity index decomposes into a sum of per-cluster terms; the solver
// picks the best split per candidate cluster once, then searches over
// partitions (exact branch-and-bound, or local search with restarts on large
// instances).
//
// All objective arithmetic is exact: a school's term is kept as the integer
//   |w_s (T - w_T) - (t_s - w_s) w_T|
// and D is that sum over 2 w_T (T - w_T).

#include <chrono>
#include <cstdint>
#include <optional>
#include <stop_token>
#include <string>
#include <utility>
#include <vector>

#include "district.hpp"

namespace schoolmerge::solver {

// Inclusive [start, end].
struct GradeSpan {
  GradeLevel start;
  GradeLevel end;
  bool contains(std::size_t g) const { return start.index <= g && g <= end.index; }
  auto operator<=>(const GradeSpan&) const = default;
};

// Members sorted by index; spans parallel to members. An empty span is a
// closed school, only ever produced when p_min == 0.
struct Cluster {
  std::vector<SchoolIndex> members;
  std::vector<std::optional<GradeSpan>> spans;

  std::size_t size() const { return members.size(); }
  std::optional<std::size_t> position(SchoolIndex s) const;
  bool operator==(const Cluster&) const = default;
};

struct MergerPlan {
  std::vector<Cluster> clusters;
  bool operator==(const MergerPlan&) const = default;
};

MergerPlan identity_plan(const DistrictInstance& instance);
// Sorts clusters by first member.
void canonicalize(MergerPlan& plan);

using SchoolPair = std::pair<std::string, std::string>;

struct SolveConfig {
  double p_min = 0.8;
  bool allow_triples = true;
  std::chrono::milliseconds time_limit = std::chrono::minutes(30);
  std::uint64_t seed = 0;
  std::vector<SchoolPair> required_pairs;
  std::vector<SchoolPair> forbidden_pairs;
  // Overrides the instance's focal groups when set.
  std::optional<std::vector<std::string>> focal_groups;
  // Allow clusters spanning more than one district id.
  bool interdistrict = false;

  // Exact search runs when the instance has at most this many schools.
  std::size_t exact_max_schools = 60;
  std::uint64_t max_nodes = 50'000'000;
  std::size_t restarts = 8;
  std::stop_token stop;
  // Test hook: report pruning decisions against this plan in stats.
  std::optional<MergerPlan> audit_plan;
};

// Focal partition the objective uses under `config`.
GroupTaxonomy objective_of(const DistrictInstance& instance, const SolveConfig& config);

// Throws ConfigError on unknown ids, non-adjacent required pairs or overlap
// between required and forbidden pairs.
void validate_config(const DistrictInstance& instance, const SolveConfig& config);

enum class SolveStatus { optimal, feasible, infeasible };
const char* to_string(SolveStatus status);

struct SearchStats {
  std::uint64_t nodes = 0;
  std::uint64_t restarts = 0;
  std::size_t candidate_clusters = 0;
  double wall_seconds = 0.0;
  bool exact_search = false;
  bool exhausted = false;
  bool cancelled = false;
  // Filled only when audit_plan is set.
  std::uint64_t audit_violations = 0;
};

struct SolveResult {
  MergerPlan plan;
  double d_before = 0.0;
  double d_after = 0.0;
  SolveStatus status = SolveStatus::infeasible;
  SearchStats stats;
  // Integer objective numerators (sum of school terms) and their scale.
  std::int64_t score_before = 0;
  std::int64_t score_after = 0;
  std::int64_t switchers = 0;
};

// Post-merger grade x group enrollment of `school`: every grade in its span
// gathers that grade from all cluster members.
Enrollment post_merger_enrollment(const Cluster& cluster, SchoolIndex school,
                                  const DistrictInstance& instance);

struct CapacityViolation {
  enum class Kind { current_lower, current_upper, future_lower, future_upper };
  Kind kind;
  SchoolIndex school;
  // The school whose enrollment/capacity bounds the check (== school for current_*).
  SchoolIndex reference;
  double value;
  double bound;
};
const char* to_string(CapacityViolation::Kind kind);

struct CapacityCheck {
  bool ok = true;
  std::vector<CapacityViolation> violations;
};

// Current-capacity bounds for every member plus projected-future bounds for
// every ordered pair (s, s') where s' ends at a higher grade than s.
CapacityCheck check_capacity(const Cluster& cluster, const DistrictInstance& instance, double p_min);

struct SpanChoice {
  std::vector<std::optional<GradeSpan>> spans;  // parallel to sorted members
  std::int64_t score = 0;                       // sum of member terms
  std::int64_t switchers = 0;
  double contribution = 0.0;                    // score / (w_T (T - w_T))
};

// Best capacity-feasible contiguous split of the grade domain among
// `members` (2 or 3 pairwise-adjacent schools), or nullopt when none fits.
std::optional<SpanChoice> best_span_assignment(std::vector<SchoolIndex> members,
                                               const DistrictInstance& instance, double p_min,
                                               const GroupTaxonomy& taxonomy);

struct CandidateCluster {
  std::vector<SchoolIndex> members;
  SpanChoice choice;
};

// All singletons, adjacent pairs and (optionally) adjacency triangles, each
// with its best split. Clusters without a feasible split are dropped.
std::vector<CandidateCluster> enumerate_feasible_clusters(const DistrictInstance& instance,
                                                          const SolveConfig& config);

// Sum of per-school terms for a plan, and plan-level switcher count.
std::int64_t plan_score(const MergerPlan& plan, const DistrictInstance& instance,
                        const GroupTaxonomy& taxonomy);
std::int64_t plan_switchers(const MergerPlan& plan, const DistrictInstance& instance);
double score_to_d(std::int64_t score, const SchoolTotals& district);

// Every invariant a plan must satisfy (partition, sizes, adjacency, span
// coverage, capacity, required/forbidden pairs). Empty when valid.
std::vector<std::string> plan_violations(const MergerPlan& plan, const DistrictInstance& instance,
                                         const SolveConfig& config);

SolveResult solve(const DistrictInstance& instance, const SolveConfig& config);

}  // namespace schoolmerge::solver
