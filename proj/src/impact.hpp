#pragma once

// Family- and district-level impacts of a merger plan: who switches
// schools, how travel times change for them, post-merger demographics, opt-out
// adjusted segregation and closures.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "metrics.hpp"
#include "solver.hpp"

namespace schoolmerge::impact {

// Students of each group living in a block, attributed to their status quo school.
struct BlockRow {
  std::string block_id;
  SchoolIndex school = 0;
  std::vector<double> counts;  // indexed like the instance taxonomy
};

struct BlockWeights {
  std::vector<BlockRow> rows;
};

// CSV header: block_id, school_id, then one column per group label. Missing
// group columns count as zero.
BlockWeights block_weights_from_csv(const std::string& text, const DistrictInstance& instance);
BlockWeights load_block_weights(const std::filesystem::path& path, const DistrictInstance& instance);

struct TravelMatrix {
  std::map<std::pair<std::string, SchoolIndex>, double> minutes;
  std::optional<double> find(const std::string& block, SchoolIndex school) const;
};

// CSV header: block_id, school_id, minutes.
TravelMatrix travel_matrix_from_csv(const std::string& text, const DistrictInstance& instance);
TravelMatrix load_travel_matrix(const std::filesystem::path& path, const DistrictInstance& instance);

struct ZeroWeightError : Error {
  using Error::Error;
};

struct Flow {
  SchoolIndex from = 0;
  SchoolIndex to = 0;
  std::size_t grade = 0;
  std::size_t group = 0;
  Count count = 0;
  auto operator<=>(const Flow&) const = default;
};

// Reassigned status quo students, one entry per (from, to, grade, group)
// with a positive count. Sorted.
std::vector<Flow> switchers(const solver::MergerPlan& plan, const DistrictInstance& instance);

// Post-merger enrollment of every school, rebuilt from status quo minus
// outflows plus inflows.
std::vector<Enrollment> post_enrollments(const solver::MergerPlan& plan, const DistrictInstance& instance);

// Splits `count` students of `group` from `school` over the school's blocks:
// block b gets count * weight_b / population, where population is the
// school's enrollment in the group (30 of 100 students live in block b, so
// 30/100 of the switchers do). Without a population the weights' own sum is
// used. Throws ZeroWeightError when the weights sum to 0.
std::map<std::string, double> apportion_to_blocks(SchoolIndex school, std::size_t group, double count,
                                                  const BlockWeights& blocks,
                                                  std::optional<double> population = std::nullopt);

struct GroupTravel {
  std::string group;
  double switchers = 0.0;
  std::optional<double> mean_before;
  std::optional<double> mean_after;
};

struct BlockFlow {
  SchoolIndex from = 0;
  SchoolIndex to = 0;
  std::size_t group = 0;
  std::string block_id;
  double count = 0.0;
  double minutes_before = 0.0;
  double minutes_after = 0.0;
};

struct TravelSummary {
  std::vector<GroupTravel> groups;
  GroupTravel overall;
  bool no_switchers = true;
  std::vector<BlockFlow> block_flows;
  std::vector<std::string> diagnostics;
};

// Means over apportioned (fractional) switchers; before uses block to old
// school minutes, after uses block to new school minutes. Throws
// MissingDataError listing every absent (block, school) pair.
TravelSummary travel_deltas(const solver::MergerPlan& plan, const DistrictInstance& instance,
                            const BlockWeights& blocks, const TravelMatrix& travel);

struct OptOutResult {
  std::vector<metrics::SchoolDemographics> schools;
  std::vector<double> ratios;  // clamped to [0, 1], indexed like the taxonomy
  double total = 0.0;
  double focal = 0.0;
  double d = 0.0;
};

// Students at schools in merged clusters leave at their group's ratio; they
// are removed from school and district totals. Missing groups default to 0.
OptOutResult apply_opt_out(const solver::MergerPlan& plan, const DistrictInstance& instance,
                           const GroupTaxonomy& taxonomy, const std::map<std::string, double>& ratios);

struct ClosureEntry {
  SchoolIndex school = 0;
  Count pre_total = 0;
  Count post_total = 0;
  double ratio = 1.0;
  bool closed = false;
  bool severely_reduced = false;  // post <= 50% of pre
};

std::vector<ClosureEntry> closure_report(const solver::MergerPlan& plan, const DistrictInstance& instance);

struct SchoolImpact {
  SchoolIndex school = 0;
  Count pre_total = 0;
  Count post_total = 0;
  Count post_focal = 0;
  std::vector<Count> post_by_group;
};

struct ImpactReport {
  double d_before = 0.0;
  double d_after = 0.0;
  std::vector<std::string> group_labels;
  std::vector<Count> students_by_group;
  std::vector<Count> switchers_by_group;
  Count students = 0;
  Count switcher_total = 0;
  std::optional<TravelSummary> travel;
  std::vector<SchoolImpact> schools;
  std::vector<ClosureEntry> closures;
  std::optional<OptOutResult> opt_out;
  std::vector<std::string> diagnostics;

  double switcher_share() const {
    return students > 0 ? static_cast<double>(switcher_total) / static_cast<double>(students) : 0.0;
  }
  std::optional<double> mean_travel_delta() const;
};

struct AnalysisInputs {
  const BlockWeights* blocks = nullptr;
  const TravelMatrix* travel = nullptr;
  const std::map<std::string, double>* opt_out_ratios = nullptr;
};

ImpactReport analyze(const solver::MergerPlan& plan, const DistrictInstance& instance,
                     const GroupTaxonomy& taxonomy, const AnalysisInputs& inputs = {});

nlohmann::json report_to_json(const ImpactReport& report, const DistrictInstance& instance);
// group,students,switchers,switcher_pct,mean_before,mean_after,delta_minutes
std::string report_summary_csv(const ImpactReport& report);
// from,to,group,block_id,count,minutes_before,minutes_after
std::string block_flows_csv(const TravelSummary& travel, const DistrictInstance& instance);

}  // namespace schoolmerge::impact
