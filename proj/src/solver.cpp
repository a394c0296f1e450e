#include "solver.hpp"

#include <algorithm>
#include <cstdlib>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "log.hpp"

namespace schoolmerge::solver {

std::optional<std::size_t> Cluster::position(SchoolIndex s) const {
  for (std::size_t i = 0; i < members.size(); ++i) {
    if (members[i] == s) return i;
  }
  return std::nullopt;
}

MergerPlan identity_plan(const DistrictInstance& instance) {
  MergerPlan plan;
  const GradeSpan full{GradeLevel{0}, GradeLevel{instance.grade_count() - 1}};
  for (SchoolIndex s = 0; s < instance.size(); ++s) plan.clusters.push_back({{s}, {full}});
  return plan;
}

void canonicalize(MergerPlan& plan) {
  std::sort(plan.clusters.begin(), plan.clusters.end(),
            [](const Cluster& a, const Cluster& b) { return a.members < b.members; });
}

const char* to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::optimal: return "optimal";
    case SolveStatus::feasible: return "feasible";
    case SolveStatus::infeasible: return "infeasible";
  }
  return "unknown";
}

const char* to_string(CapacityViolation::Kind kind) {
  switch (kind) {
    case CapacityViolation::Kind::current_lower: return "current_lower";
    case CapacityViolation::Kind::current_upper: return "current_upper";
    case CapacityViolation::Kind::future_lower: return "future_lower";
    case CapacityViolation::Kind::future_upper: return "future_upper";
  }
  return "unknown";
}

GroupTaxonomy objective_of(const DistrictInstance& instance, const SolveConfig& config) {
  if (!config.focal_groups) return instance.taxonomy();
  try {
    return instance.taxonomy().with_focal(*config.focal_groups);
  } catch (const ValidationError& e) {
    throw ConfigError("objective", e.what());
  }
}

namespace {

std::pair<SchoolIndex, SchoolIndex> resolve_pair(const DistrictInstance& instance, const SchoolPair& p,
                                                 const char* kind) {
  auto a = instance.index_of(p.first);
  auto b = instance.index_of(p.second);
  if (!a || !b) {
    throw ConfigError("known_school", std::string(kind) + " pair (" + p.first + ", " + p.second +
                                          ") names an unknown school");
  }
  if (*a == *b) {
    throw ConfigError("distinct_schools", std::string(kind) + " pair repeats school '" + p.first + "'");
  }
  return std::minmax(*a, *b);
}

std::set<std::pair<SchoolIndex, SchoolIndex>> resolve_pairs(const DistrictInstance& instance,
                                                            const std::vector<SchoolPair>& pairs,
                                                            const char* kind) {
  std::set<std::pair<SchoolIndex, SchoolIndex>> out;
  for (const auto& p : pairs) out.insert(resolve_pair(instance, p, kind));
  return out;
}

// Objective data for one (instance, focal partition).
struct Objective {
  const DistrictInstance* instance;
  SchoolTotals district;
  std::size_t grades;
  std::vector<std::vector<Count>> total;  // [school][grade]
  std::vector<std::vector<Count>> focal;
  std::vector<Count> current;

  Objective(const DistrictInstance& inst, const GroupTaxonomy& taxonomy)
      : instance(&inst), district(inst.district_totals(taxonomy)), grades(inst.grade_count()) {
    require_nondegenerate(district);
    for (const auto& s : inst.schools()) {
      std::vector<Count> t(grades, 0), f(grades, 0);
      for (std::size_t g = 0; g < grades; ++g) {
        for (std::size_t k = 0; k < taxonomy.size(); ++k) {
          t[g] += s.enrollment.at(g, k);
          if (taxonomy.is_focal(k)) f[g] += s.enrollment.at(g, k);
        }
      }
      current.push_back(std::accumulate(t.begin(), t.end(), Count{0}));
      total.push_back(std::move(t));
      focal.push_back(std::move(f));
    }
  }

  std::int64_t term(Count t, Count w) const {
    return std::llabs(w * (district.total - district.focal) - (t - w) * district.focal);
  }
};

// Shared capacity rule over already-computed post-merger totals.
bool capacity_rule(const std::vector<SchoolIndex>& members,
                   const std::vector<std::optional<GradeSpan>>& spans, const std::vector<Count>& post,
                   const DistrictInstance& instance, double p_min,
                   std::vector<CapacityViolation>* out) {
  bool ok = true;
  auto current = [&](std::size_t i) {
    return static_cast<double>(instance.school(members[i]).enrollment.total());
  };
  auto capacity = [&](std::size_t i) { return static_cast<double>(instance.school(members[i]).capacity); };
  auto flag = [&](CapacityViolation::Kind kind, std::size_t i, std::size_t ref, double value, double bound) {
    ok = false;
    if (out) out->push_back({kind, members[i], members[ref], value, bound});
  };
  for (std::size_t i = 0; i < members.size(); ++i) {
    const auto value = static_cast<double>(post[i]);
    if (value < p_min * current(i)) flag(CapacityViolation::Kind::current_lower, i, i, value, p_min * current(i));
    if (value > capacity(i)) flag(CapacityViolation::Kind::current_upper, i, i, value, capacity(i));
    if (!ok && !out) return false;
  }
  for (std::size_t i = 0; i < members.size(); ++i) {
    if (!spans[i]) continue;
    const auto value = static_cast<double>(post[i]);
    for (std::size_t j = 0; j < members.size(); ++j) {
      if (j == i || !spans[j] || spans[j]->end.index <= spans[i]->end.index) continue;
      if (value < p_min * current(j)) flag(CapacityViolation::Kind::future_lower, i, j, value, p_min * current(j));
      if (value > capacity(j)) flag(CapacityViolation::Kind::future_upper, i, j, value, capacity(j));
      if (!ok && !out) return false;
    }
  }
  return ok;
}

// Every ordered contiguous split of [0, G) among k members. Empty parts are
// allowed only when `allow_empty`.
std::vector<std::vector<std::optional<GradeSpan>>> contiguous_splits(std::size_t k, std::size_t grades,
                                                                     bool allow_empty) {
  std::set<std::vector<std::optional<GradeSpan>>> out;
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::vector<std::size_t> cuts(k + 1, 0);
  cuts[k] = grades;
  // cuts[1..k-1] non-decreasing in [0, grades]
  auto emit = [&] {
    std::vector<std::optional<GradeSpan>> spans(k);
    for (std::size_t part = 0; part < k; ++part) {
      const std::size_t lo = cuts[part], hi = cuts[part + 1];
      if (lo == hi) {
        if (!allow_empty) return;
        continue;
      }
      spans[order[part]] = GradeSpan{GradeLevel{lo}, GradeLevel{hi - 1}};
    }
    out.insert(std::move(spans));
  };
  do {
    if (k == 1) {
      emit();
    } else if (k == 2) {
      for (cuts[1] = 0; cuts[1] <= grades; ++cuts[1]) emit();
    } else {
      for (cuts[1] = 0; cuts[1] <= grades; ++cuts[1]) {
        for (cuts[2] = cuts[1]; cuts[2] <= grades; ++cuts[2]) emit();
      }
    }
  } while (std::next_permutation(order.begin(), order.end()));
  return {out.begin(), out.end()};
}

std::optional<SpanChoice> best_split(const std::vector<SchoolIndex>& members, const Objective& obj,
                                     double p_min) {
  const auto& instance = *obj.instance;
  const std::size_t grades = obj.grades;
  std::vector<Count> cluster_total(grades, 0), cluster_focal(grades, 0);
  for (SchoolIndex m : members) {
    for (std::size_t g = 0; g < grades; ++g) {
      cluster_total[g] += obj.total[m][g];
      cluster_focal[g] += obj.focal[m][g];
    }
  }
  std::optional<SpanChoice> best;
  std::vector<std::size_t> best_starts;
  std::vector<Count> post(members.size());
  for (auto& spans : contiguous_splits(members.size(), grades, p_min == 0.0)) {
    SpanChoice c;
    std::vector<std::size_t> starts(members.size(), grades + 1);
    for (std::size_t i = 0; i < members.size(); ++i) {
      Count t = 0, w = 0;
      for (std::size_t g = 0; g < grades; ++g) {
        if (spans[i] && spans[i]->contains(g)) {
          t += cluster_total[g];
          w += cluster_focal[g];
        } else {
          c.switchers += obj.total[members[i]][g];
        }
      }
      post[i] = t;
      c.score += obj.term(t, w);
      if (spans[i]) starts[i] = spans[i]->start.index;
    }
    if (!capacity_rule(members, spans, post, instance, p_min, nullptr)) continue;
    // Ties: fewer switchers, then lower spans to lower ids.
    if (!best || std::tie(c.score, c.switchers, starts) < std::tie(best->score, best->switchers, best_starts)) {
      c.spans = std::move(spans);
      best = std::move(c);
      best_starts = std::move(starts);
    }
  }
  if (best) {
    best->contribution = static_cast<double>(best->score) /
                         (static_cast<double>(obj.district.focal) *
                          static_cast<double>(obj.district.total - obj.district.focal));
  }
  return best;
}

SpanChoice singleton_choice(SchoolIndex s, const Objective& obj) {
  SpanChoice c;
  c.spans = {GradeSpan{GradeLevel{0}, GradeLevel{obj.grades - 1}}};
  Count w = 0;
  for (std::size_t g = 0; g < obj.grades; ++g) w += obj.focal[s][g];
  c.score = obj.term(obj.current[s], w);
  c.contribution = static_cast<double>(c.score) /
                   (static_cast<double>(obj.district.focal) *
                    static_cast<double>(obj.district.total - obj.district.focal));
  return c;
}

std::vector<CandidateCluster> enumerate_with(const DistrictInstance& instance, const SolveConfig& config,
                                             const Objective& obj) {
  const auto forbidden = resolve_pairs(instance, config.forbidden_pairs, "forbidden");
  auto allowed = [&](SchoolIndex a, SchoolIndex b) {
    if (forbidden.count(std::minmax(a, b))) return false;
    return config.interdistrict || instance.school(a).district_id == instance.school(b).district_id;
  };
  std::vector<CandidateCluster> out;
  for (SchoolIndex s = 0; s < instance.size(); ++s) out.push_back({{s}, singleton_choice(s, obj)});
  for (const auto& [a, b] : instance.edges()) {
    if (!allowed(a, b)) continue;
    if (auto c = best_split({a, b}, obj, config.p_min)) out.push_back({{a, b}, std::move(*c)});
  }
  if (config.allow_triples) {
    for (const auto& [a, b] : instance.edges()) {
      if (!allowed(a, b)) continue;
      for (SchoolIndex c : instance.neighbors(b)) {
        if (c <= b || !instance.adjacent(a, c) || !allowed(a, c) || !allowed(b, c)) continue;
        if (auto choice = best_split({a, b, c}, obj, config.p_min)) {
          out.push_back({{a, b, c}, std::move(*choice)});
        }
      }
    }
  }
  return out;
}

// Ordering of complete plans: objective, then switchers, then number of
// merged clusters, then the sorted member lists of merged clusters.
struct PlanKey {
  std::int64_t score = 0;
  std::int64_t switchers = 0;
  std::size_t merged = 0;
  std::vector<std::vector<SchoolIndex>> clusters;

  auto operator<=>(const PlanKey&) const = default;
};

class Search {
 public:
  Search(const DistrictInstance& instance, const SolveConfig& config, const GroupTaxonomy& taxonomy,
         std::vector<CandidateCluster> candidates,
         std::set<std::pair<SchoolIndex, SchoolIndex>> required,
         std::chrono::steady_clock::time_point start)
      : instance_(instance), config_(config), taxonomy_(taxonomy), cands_(std::move(candidates)),
        required_(std::move(required)), start_(start), n_(instance.size()) {
    stats.candidate_clusters = cands_.size();
    singleton_of_.assign(n_, 0);
    containing_.assign(n_, {});
    for (std::size_t c = 0; c < cands_.size(); ++c) {
      if (cands_[c].members.size() == 1) singleton_of_[cands_[c].members[0]] = c;
      for (SchoolIndex m : cands_[c].members) containing_[m].push_back(c);
    }
  }

  SearchStats stats;
  std::optional<std::vector<std::size_t>> best;
  PlanKey best_key;

  void consider(const std::vector<std::size_t>& chosen) {
    PlanKey key = key_of(chosen);
    if (!best || key < best_key) {
      best = chosen;
      std::sort(best->begin(), best->end());
      best_key = std::move(key);
    }
  }

  void consider_identity() {
    if (!required_.empty()) return;
    std::vector<std::size_t> chosen(singleton_of_.begin(), singleton_of_.end());
    consider(chosen);
  }

  bool out_of_time() {
    if (config_.stop.stop_requested()) {
      stats.cancelled = true;
      return true;
    }
    return std::chrono::steady_clock::now() - start_ >= config_.time_limit;
  }

  // Steepest descent from the identity plan, then from randomized starts.
  void local_search(std::size_t restarts) {
    std::mt19937_64 rng(config_.seed);
    std::vector<std::size_t> merged;
    for (std::size_t c = 0; c < cands_.size(); ++c) {
      if (cands_[c].members.size() > 1) merged.push_back(c);
    }
    for (std::size_t round = 0; round <= restarts; ++round) {
      if (out_of_time()) return;
      owner_.assign(singleton_of_.begin(), singleton_of_.end());
      if (round > 0) {
        ++stats.restarts;
        std::shuffle(merged.begin(), merged.end(), rng);
        for (std::size_t c : merged) {
          if ((rng() & 1U) == 0) continue;
          bool free = true;
          for (SchoolIndex m : cands_[c].members) free = free && owner_[m] == singleton_of_[m];
          if (free) {
            for (SchoolIndex m : cands_[c].members) owner_[m] = c;
          }
        }
      }
      descend(merged);
      if (violations() == 0) consider(active());
    }
  }

  // Exact DFS over partitions. Returns true when the space was exhausted.
  bool branch_and_bound() {
    stats.exact_search = true;
    std::vector<std::vector<std::size_t>> lists(n_);
    lb6_.assign(n_, std::numeric_limits<std::int64_t>::max());
    for (SchoolIndex s = 0; s < n_; ++s) {
      for (std::size_t c : containing_[s]) {
        if (!splits_required(cands_[c].members)) lists[s].push_back(c);
      }
      if (lists[s].empty()) return true;  // nothing can cover s: infeasible
      std::stable_sort(lists[s].begin(), lists[s].end(), [&](std::size_t a, std::size_t b) {
        return per_member6(a) < per_member6(b);
      });
      lb6_[s] = per_member6(lists[s].front());
    }
    lists_ = std::move(lists);
    order_.resize(n_);
    std::iota(order_.begin(), order_.end(), 0);
    std::stable_sort(order_.begin(), order_.end(), [&](SchoolIndex a, SchoolIndex b) {
      return instance_.neighbors(a).size() > instance_.neighbors(b).size();
    });
    if (config_.audit_plan) {
      for (const auto& cl : config_.audit_plan->clusters) audit_sets_.insert(cl.members);
      audit_score_ = plan_score(*config_.audit_plan, instance_, taxonomy_);
    }
    assigned_.assign(n_, false);
    chosen_.clear();
    std::int64_t rem = 0;
    for (auto v : lb6_) rem += v;
    aborted_ = false;
    dfs(0, 0, 0, rem, true);
    return !aborted_;
  }

  MergerPlan plan_of(const std::vector<std::size_t>& chosen) const {
    MergerPlan plan;
    for (std::size_t c : chosen) plan.clusters.push_back({cands_[c].members, cands_[c].choice.spans});
    canonicalize(plan);
    return plan;
  }

 private:
  std::int64_t per_member6(std::size_t c) const {
    return 6 * cands_[c].choice.score / static_cast<std::int64_t>(cands_[c].members.size());
  }

  bool splits_required(const std::vector<SchoolIndex>& members) const {
    for (const auto& [a, b] : required_) {
      const bool ha = std::find(members.begin(), members.end(), a) != members.end();
      const bool hb = std::find(members.begin(), members.end(), b) != members.end();
      if (ha != hb) return true;
    }
    return false;
  }

  PlanKey key_of(const std::vector<std::size_t>& chosen) const {
    PlanKey key;
    for (std::size_t c : chosen) {
      key.score += cands_[c].choice.score;
      key.switchers += cands_[c].choice.switchers;
      if (cands_[c].members.size() > 1) {
        ++key.merged;
        key.clusters.push_back(cands_[c].members);
      }
    }
    std::sort(key.clusters.begin(), key.clusters.end());
    return key;
  }

  std::vector<std::size_t> active() const {
    std::set<std::size_t> s(owner_.begin(), owner_.end());
    return {s.begin(), s.end()};
  }

  std::size_t violations() const {
    std::size_t v = 0;
    for (const auto& [a, b] : required_) v += owner_[a] != owner_[b];
    return v;
  }

  struct Move {
    std::size_t violations;
    std::int64_t score;
    std::int64_t switchers;
    auto operator<=>(const Move&) const = default;
  };

  void descend(const std::vector<std::size_t>& merged_candidates) {
    auto current_move = [&] {
      Move m{violations(), 0, 0};
      for (std::size_t c : active()) {
        m.score += cands_[c].choice.score;
        m.switchers += cands_[c].choice.switchers;
      }
      return m;
    };
    Move now = current_move();
    for (;;) {
      if (out_of_time()) return;
      std::optional<Move> best_move;
      std::size_t best_cand = 0;
      bool best_is_dissolve = false;
      // Insert a candidate: dissolve every cluster it overlaps into singletons.
      for (std::size_t c : merged_candidates) {
        const auto& mem = cands_[c].members;
        if (owner_[mem[0]] == c) continue;
        std::set<std::size_t> hit;
        for (SchoolIndex m : mem) hit.insert(owner_[m]);
        Move mv = now;
        std::set<SchoolIndex> freed;
        for (std::size_t h : hit) {
          mv.score -= cands_[h].choice.score;
          mv.switchers -= cands_[h].choice.switchers;
          for (SchoolIndex m : cands_[h].members) freed.insert(m);
        }
        mv.score += cands_[c].choice.score;
        mv.switchers += cands_[c].choice.switchers;
        for (SchoolIndex m : freed) {
          if (std::find(mem.begin(), mem.end(), m) != mem.end()) continue;
          mv.score += cands_[singleton_of_[m]].choice.score;
        }
        mv.violations = violations_after(mem, freed);
        if (mv < now && (!best_move || mv < *best_move)) {
          best_move = mv;
          best_cand = c;
          best_is_dissolve = false;
        }
      }
      // Dissolve an existing merged cluster.
      for (std::size_t c : active()) {
        const auto& mem = cands_[c].members;
        if (mem.size() == 1) continue;
        Move mv = now;
        mv.score -= cands_[c].choice.score;
        mv.switchers -= cands_[c].choice.switchers;
        for (SchoolIndex m : mem) mv.score += cands_[singleton_of_[m]].choice.score;
        std::set<SchoolIndex> freed(mem.begin(), mem.end());
        mv.violations = violations_after({}, freed);
        if (mv < now && (!best_move || mv < *best_move)) {
          best_move = mv;
          best_cand = c;
          best_is_dissolve = true;
        }
      }
      if (!best_move) return;
      const auto& mem = cands_[best_cand].members;
      if (best_is_dissolve) {
        for (SchoolIndex m : mem) owner_[m] = singleton_of_[m];
      } else {
        std::set<std::size_t> hit;
        for (SchoolIndex m : mem) hit.insert(owner_[m]);
        for (std::size_t h : hit) {
          for (SchoolIndex m : cands_[h].members) owner_[m] = singleton_of_[m];
        }
        for (SchoolIndex m : mem) owner_[m] = best_cand;
      }
      now = *best_move;
    }
  }

  // Required-pair violations if `placed` becomes one cluster and every other
  // school in `freed` becomes a singleton.
  std::size_t violations_after(const std::vector<SchoolIndex>& placed, const std::set<SchoolIndex>& freed) const {
    auto in_placed = [&](SchoolIndex s) { return std::find(placed.begin(), placed.end(), s) != placed.end(); };
    std::size_t v = 0;
    for (const auto& [a, b] : required_) {
      const bool ta = freed.count(a) || in_placed(a);
      const bool tb = freed.count(b) || in_placed(b);
      if (!ta && !tb) {
        v += owner_[a] != owner_[b];
      } else {
        v += !(in_placed(a) && in_placed(b));
      }
    }
    return v;
  }

  bool audit_consistent() const {
    for (std::size_t c : chosen_) {
      if (!audit_sets_.count(cands_[c].members)) return false;
    }
    return true;
  }

  void dfs(std::size_t pos, std::int64_t fixed, std::int64_t switchers, std::int64_t rem6, bool consistent) {
    if (aborted_) return;
    ++stats.nodes;
    if (stats.nodes >= config_.max_nodes || ((stats.nodes & 255U) == 0 && out_of_time()) ||
        config_.stop.stop_requested()) {
      if (config_.stop.stop_requested()) stats.cancelled = true;
      aborted_ = true;
      return;
    }
    while (pos < n_ && assigned_[order_[pos]]) ++pos;
    if (pos == n_) {
      consider(chosen_);
      return;
    }
    const SchoolIndex s = order_[pos];
    for (std::size_t c : lists_[s]) {
      const auto& cand = cands_[c];
      bool free = true;
      for (SchoolIndex m : cand.members) free = free && !assigned_[m];
      if (!free) continue;
      std::int64_t next_rem = rem6;
      for (SchoolIndex m : cand.members) next_rem -= lb6_[m];
      const std::int64_t next_fixed = fixed + cand.choice.score;
      const std::int64_t next_sw = switchers + cand.choice.switchers;
      const std::int64_t bound6 = 6 * next_fixed + next_rem;
      const bool child_consistent = consistent && config_.audit_plan && audit_sets_.count(cand.members);
      if (child_consistent && bound6 > 6 * audit_score_) ++stats.audit_violations;
      if (best) {
        const std::int64_t inc6 = 6 * best_key.score;
        if (bound6 > inc6 || (bound6 == inc6 && next_sw > best_key.switchers)) {
          if (child_consistent) ++stats.audit_violations;
          continue;
        }
      }
      for (SchoolIndex m : cand.members) assigned_[m] = true;
      chosen_.push_back(c);
      dfs(pos + 1, next_fixed, next_sw, next_rem, child_consistent);
      chosen_.pop_back();
      for (SchoolIndex m : cand.members) assigned_[m] = false;
      if (aborted_) return;
    }
  }

  const DistrictInstance& instance_;
  const SolveConfig& config_;
  const GroupTaxonomy& taxonomy_;
  std::vector<CandidateCluster> cands_;
  std::set<std::pair<SchoolIndex, SchoolIndex>> required_;
  std::chrono::steady_clock::time_point start_;
  std::size_t n_;

  std::vector<std::size_t> singleton_of_;
  std::vector<std::vector<std::size_t>> containing_;
  std::vector<std::size_t> owner_;

  std::vector<std::vector<std::size_t>> lists_;
  std::vector<std::int64_t> lb6_;
  std::vector<SchoolIndex> order_;
  std::vector<bool> assigned_;
  std::vector<std::size_t> chosen_;
  bool aborted_ = false;
  std::set<std::vector<SchoolIndex>> audit_sets_;
  std::int64_t audit_score_ = 0;
};

}  // namespace

void validate_config(const DistrictInstance& instance, const SolveConfig& config) {
  if (!(config.p_min >= 0.0 && config.p_min <= 1.0)) {
    throw ConfigError("p_min_range", "p_min must lie in [0, 1]");
  }
  const auto required = resolve_pairs(instance, config.required_pairs, "required");
  const auto forbidden = resolve_pairs(instance, config.forbidden_pairs, "forbidden");
  for (const auto& [a, b] : required) {
    const auto& ia = instance.school(a).id;
    const auto& ib = instance.school(b).id;
    if (!instance.adjacent(a, b)) {
      throw ConfigError("required_pair_adjacent", "required pair (" + ia + ", " + ib + ") is not adjacent");
    }
    if (forbidden.count({a, b})) {
      throw ConfigError("required_forbidden_disjoint",
                        "pair (" + ia + ", " + ib + ") is both required and forbidden");
    }
    if (!config.interdistrict && instance.school(a).district_id != instance.school(b).district_id) {
      throw ConfigError("required_pair_same_district",
                        "required pair (" + ia + ", " + ib + ") crosses districts without interdistrict mode");
    }
  }
  objective_of(instance, config);
}

Enrollment post_merger_enrollment(const Cluster& cluster, SchoolIndex school, const DistrictInstance& instance) {
  const auto pos = cluster.position(school);
  if (!pos) throw std::invalid_argument("school is not a member of the cluster");
  Enrollment out(instance.grade_count(), instance.taxonomy().size());
  const auto& span = cluster.spans[*pos];
  if (!span) return out;
  for (std::size_t g = span->start.index; g <= span->end.index; ++g) {
    for (SchoolIndex m : cluster.members) {
      const auto& e = instance.school(m).enrollment;
      for (std::size_t k = 0; k < e.groups(); ++k) out.at(g, k) += e.at(g, k);
    }
  }
  return out;
}

CapacityCheck check_capacity(const Cluster& cluster, const DistrictInstance& instance, double p_min) {
  std::vector<Count> post;
  for (SchoolIndex m : cluster.members) post.push_back(post_merger_enrollment(cluster, m, instance).total());
  CapacityCheck out;
  out.ok = capacity_rule(cluster.members, cluster.spans, post, instance, p_min, &out.violations);
  return out;
}

std::optional<SpanChoice> best_span_assignment(std::vector<SchoolIndex> members, const DistrictInstance& instance,
                                               double p_min, const GroupTaxonomy& taxonomy) {
  if (members.size() < 2 || members.size() > 3) {
    throw std::invalid_argument("span assignment needs two or three members");
  }
  std::sort(members.begin(), members.end());
  Objective obj(instance, taxonomy);
  return best_split(members, obj, p_min);
}

std::vector<CandidateCluster> enumerate_feasible_clusters(const DistrictInstance& instance, const SolveConfig& config) {
  Objective obj(instance, objective_of(instance, config));
  return enumerate_with(instance, config, obj);
}

std::int64_t plan_score(const MergerPlan& plan, const DistrictInstance& instance, const GroupTaxonomy& taxonomy) {
  const auto district = instance.district_totals(taxonomy);
  std::int64_t score = 0;
  for (const auto& cl : plan.clusters) {
    for (SchoolIndex m : cl.members) {
      const auto t = school_totals(post_merger_enrollment(cl, m, instance), taxonomy);
      score += std::llabs(t.focal * (district.total - district.focal) - (t.total - t.focal) * district.focal);
    }
  }
  return score;
}

std::int64_t plan_switchers(const MergerPlan& plan, const DistrictInstance& instance) {
  std::int64_t out = 0;
  for (const auto& cl : plan.clusters) {
    for (std::size_t i = 0; i < cl.members.size(); ++i) {
      const auto& e = instance.school(cl.members[i]).enrollment;
      for (std::size_t g = 0; g < e.grades(); ++g) {
        if (!cl.spans[i] || !cl.spans[i]->contains(g)) out += e.grade_total(g);
      }
    }
  }
  return out;
}

double score_to_d(std::int64_t score, const SchoolTotals& district) {
  return static_cast<double>(score) /
         (2.0 * static_cast<double>(district.focal) * static_cast<double>(district.total - district.focal));
}

std::vector<std::string> plan_violations(const MergerPlan& plan, const DistrictInstance& instance,
                                         const SolveConfig& config) {
  std::vector<std::string> out;
  std::vector<int> seen(instance.size(), 0);
  const auto forbidden = resolve_pairs(instance, config.forbidden_pairs, "forbidden");
  const auto required = resolve_pairs(instance, config.required_pairs, "required");
  std::vector<std::size_t> cluster_of(instance.size(), 0);
  const std::size_t grades = instance.grade_count();
  for (std::size_t ci = 0; ci < plan.clusters.size(); ++ci) {
    const auto& cl = plan.clusters[ci];
    const std::string label = "cluster " + std::to_string(ci);
    if (cl.members.empty() || cl.members.size() > 3) out.push_back(label + ": size must be 1, 2 or 3");
    if (cl.members.size() == 3 && !config.allow_triples) out.push_back(label + ": triples are disabled");
    if (cl.spans.size() != cl.members.size()) {
      out.push_back(label + ": span list does not match members");
      continue;
    }
    if (!std::is_sorted(cl.members.begin(), cl.members.end())) out.push_back(label + ": members not sorted");
    for (std::size_t i = 0; i < cl.members.size(); ++i) {
      const SchoolIndex a = cl.members[i];
      if (a >= instance.size()) {
        out.push_back(label + ": unknown school index");
        continue;
      }
      ++seen[a];
      cluster_of[a] = ci;
      for (std::size_t j = i + 1; j < cl.members.size(); ++j) {
        const SchoolIndex b = cl.members[j];
        if (b >= instance.size()) continue;
        const std::string pair = " (" + instance.school(a).id + ", " + instance.school(b).id + ")";
        if (!instance.adjacent(a, b)) out.push_back(label + ": members not adjacent" + pair);
        if (forbidden.count(std::minmax(a, b))) out.push_back(label + ": forbidden pair merged" + pair);
        if (!config.interdistrict && instance.school(a).district_id != instance.school(b).district_id) {
          out.push_back(label + ": cross-district merge" + pair);
        }
      }
      const auto& sp = cl.spans[i];
      if (sp && (sp->start > sp->end || sp->end.index >= grades)) out.push_back(label + ": malformed span");
      if (!sp && config.p_min > 0.0) out.push_back(label + ": empty span requires p_min = 0");
    }
    for (std::size_t g = 0; g < grades; ++g) {
      int owners = 0;
      for (const auto& sp : cl.spans) owners += sp && sp->contains(g);
      if (owners != 1) out.push_back(label + ": grade " + instance.grade_labels()[g] + " served by " +
                                     std::to_string(owners) + " members");
    }
    if (cl.members.size() == 1) {
      if (!cl.spans[0] || cl.spans[0]->start.index != 0 || cl.spans[0]->end.index + 1 != grades) {
        out.push_back(label + ": singleton must serve the full grade domain");
      }
      // The status quo is always allowed even when the capacity proxy is
      // below current enrollment (the loader warns about that case).
      const auto& s = instance.school(cl.members[0]);
      if (s.enrollment.total() > s.capacity) continue;
    }
    const auto cap = check_capacity(cl, instance, config.p_min);
    for (const auto& v : cap.violations) {
      out.push_back(label + ": capacity " + to_string(v.kind) + " at " + instance.school(v.school).id);
    }
  }
  for (SchoolIndex s = 0; s < instance.size(); ++s) {
    if (seen[s] != 1) {
      out.push_back("school " + instance.school(s).id + " appears in " + std::to_string(seen[s]) + " clusters");
    }
  }
  for (const auto& [a, b] : required) {
    if (seen[a] == 1 && seen[b] == 1 && cluster_of[a] != cluster_of[b]) {
      out.push_back("required pair (" + instance.school(a).id + ", " + instance.school(b).id + ") not merged");
    }
  }
  return out;
}

SolveResult solve(const DistrictInstance& instance, const SolveConfig& config) {
  const auto start = std::chrono::steady_clock::now();
  validate_config(instance, config);
  const auto taxonomy = objective_of(instance, config);
  const Objective obj(instance, taxonomy);
  auto candidates = enumerate_with(instance, config, obj);

  SolveResult result;
  for (SchoolIndex s = 0; s < instance.size(); ++s) result.score_before += singleton_choice(s, obj).score;
  result.d_before = score_to_d(result.score_before, obj.district);

  Search search(instance, config, taxonomy, std::move(candidates),
                resolve_pairs(instance, config.required_pairs, "required"), start);
  search.consider_identity();
  const bool exact = instance.size() <= config.exact_max_schools;
  search.local_search(exact ? config.restarts : std::max<std::size_t>(config.restarts, 32));
  bool exhausted = false;
  if (exact && !search.stats.cancelled && !search.out_of_time()) exhausted = search.branch_and_bound();
  result.stats = search.stats;
  result.stats.exhausted = exhausted;

  if (search.best) {
    result.plan = search.plan_of(*search.best);
    result.score_after = search.best_key.score;
    result.switchers = search.best_key.switchers;
    result.status = exhausted ? SolveStatus::optimal : SolveStatus::feasible;
  } else {
    result.plan = identity_plan(instance);
    result.score_after = result.score_before;
    result.status = SolveStatus::infeasible;
  }
  result.d_after = score_to_d(result.score_after, obj.district);

  if (result.status != SolveStatus::infeasible) {
    auto problems = plan_violations(result.plan, instance, config);
    if (!problems.empty()) throw std::logic_error("solver produced an invalid plan: " + problems.front());
  }
  result.stats.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  log::debug("solve " + instance.name() + ": " + to_string(result.status) + " nodes=" +
             std::to_string(result.stats.nodes) + " restarts=" + std::to_string(result.stats.restarts));
  return result;
}

}  // namespace schoolmerge::solver
