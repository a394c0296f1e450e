#include "impact.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "tables.hpp"

namespace schoolmerge::impact {

using nlohmann::json;

namespace {

SchoolIndex school_index(const DistrictInstance& instance, const std::string& id, const std::string& where) {
  auto idx = instance.index_of(id);
  if (!idx) throw ValidationError(where + ": unknown school id '" + id + "'");
  return *idx;
}

}  // namespace

BlockWeights block_weights_from_csv(const std::string& text, const DistrictInstance& instance) {
  const auto table = csv::parse(text);
  const auto block_col = table.require_column("block_id");
  const auto school_col = table.require_column("school_id");
  const auto& taxonomy = instance.taxonomy();
  std::vector<std::optional<std::size_t>> group_col(taxonomy.size());
  for (std::size_t c = 0; c < table.header.size(); ++c) {
    if (c == block_col || c == school_col) continue;
    auto k = taxonomy.index_of(table.header[c]);
    if (!k) throw ValidationError("block weights column '" + table.header[c] + "' is not a known group");
    group_col[*k] = c;
  }
  BlockWeights out;
  for (const auto& row : table.rows) {
    BlockRow r;
    r.block_id = row[block_col];
    r.school = school_index(instance, row[school_col], "block weights");
    r.counts.assign(taxonomy.size(), 0.0);
    for (std::size_t k = 0; k < taxonomy.size(); ++k) {
      if (!group_col[k]) continue;
      r.counts[k] = csv::to_double(row[*group_col[k]], "block weights");
      if (r.counts[k] < 0.0) throw ValidationError("block weights must be non-negative");
    }
    out.rows.push_back(std::move(r));
  }
  return out;
}

BlockWeights load_block_weights(const std::filesystem::path& path, const DistrictInstance& instance) {
  return block_weights_from_csv(csv::read_text(path), instance);
}

std::optional<double> TravelMatrix::find(const std::string& block, SchoolIndex school) const {
  auto it = minutes.find({block, school});
  if (it == minutes.end()) return std::nullopt;
  return it->second;
}

TravelMatrix travel_matrix_from_csv(const std::string& text, const DistrictInstance& instance) {
  const auto table = csv::parse(text);
  const auto block_col = table.require_column("block_id");
  const auto school_col = table.require_column("school_id");
  const auto minutes_col = table.require_column("minutes");
  TravelMatrix out;
  for (const auto& row : table.rows) {
    const double m = csv::to_double(row[minutes_col], "travel matrix");
    if (m < 0.0) throw ValidationError("travel minutes must be non-negative");
    out.minutes[{row[block_col], school_index(instance, row[school_col], "travel matrix")}] = m;
  }
  return out;
}

TravelMatrix load_travel_matrix(const std::filesystem::path& path, const DistrictInstance& instance) {
  return travel_matrix_from_csv(csv::read_text(path), instance);
}

std::vector<Flow> switchers(const solver::MergerPlan& plan, const DistrictInstance& instance) {
  std::vector<Flow> out;
  for (const auto& cl : plan.clusters) {
    if (cl.members.size() < 2) continue;
    for (std::size_t g = 0; g < instance.grade_count(); ++g) {
      std::optional<SchoolIndex> owner;
      for (std::size_t i = 0; i < cl.members.size(); ++i) {
        if (cl.spans[i] && cl.spans[i]->contains(g)) owner = cl.members[i];
      }
      if (!owner) continue;
      for (SchoolIndex m : cl.members) {
        if (m == *owner) continue;
        const auto& e = instance.school(m).enrollment;
        for (std::size_t k = 0; k < e.groups(); ++k) {
          if (e.at(g, k) > 0) out.push_back({m, *owner, g, k, e.at(g, k)});
        }
      }
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<Enrollment> post_enrollments(const solver::MergerPlan& plan, const DistrictInstance& instance) {
  std::vector<Enrollment> post;
  for (const auto& s : instance.schools()) post.push_back(s.enrollment);
  for (const auto& f : switchers(plan, instance)) {
    post[f.from].at(f.grade, f.group) -= f.count;
    post[f.to].at(f.grade, f.group) += f.count;
  }
  return post;
}

std::map<std::string, double> apportion_to_blocks(SchoolIndex school, std::size_t group, double count,
                                                  const BlockWeights& blocks, std::optional<double> population) {
  double weight_sum = 0.0;
  for (const auto& r : blocks.rows) {
    if (r.school == school) weight_sum += r.counts[group];
  }
  if (!(weight_sum > 0.0)) throw ZeroWeightError("no block weight for this school and group");
  const double denom = population && *population > 0.0 ? *population : weight_sum;
  std::map<std::string, double> out;
  for (const auto& r : blocks.rows) {
    if (r.school != school) continue;
    // multiply first: 40 * 30 / 100 stays exact
    out[r.block_id] += count * r.counts[group] / denom;
  }
  return out;
}

TravelSummary travel_deltas(const solver::MergerPlan& plan, const DistrictInstance& instance,
                            const BlockWeights& blocks, const TravelMatrix& travel) {
  const auto& taxonomy = instance.taxonomy();
  TravelSummary out;
  std::vector<double> weight(taxonomy.size(), 0.0), before(taxonomy.size(), 0.0), after(taxonomy.size(), 0.0);
  std::set<std::pair<std::string, std::string>> missing;
  std::set<std::pair<SchoolIndex, std::size_t>> skipped;

  // Blocks do not carry grades: collapse flows to (from, to, group).
  std::map<std::tuple<SchoolIndex, SchoolIndex, std::size_t>, double> collapsed;
  for (const auto& f : switchers(plan, instance)) {
    collapsed[{f.from, f.to, f.group}] += static_cast<double>(f.count);
  }
  out.no_switchers = collapsed.empty();
  if (out.no_switchers) out.diagnostics.push_back("no switchers");

  for (const auto& [key, count] : collapsed) {
    const auto [from, to, group] = key;
    std::map<std::string, double> parts;
    try {
      parts = apportion_to_blocks(from, group, count, blocks,
                                  static_cast<double>(instance.school(from).enrollment.group_total(group)));
    } catch (const ZeroWeightError&) {
      if (skipped.insert({from, group}).second) {
        out.diagnostics.push_back("no block weights for group '" + taxonomy.groups()[group] + "' at school '" +
                                  instance.school(from).id + "'; excluded from travel statistics");
      }
      continue;
    }
    for (const auto& [block, share] : parts) {
      auto old_minutes = travel.find(block, from);
      auto new_minutes = travel.find(block, to);
      if (!old_minutes) missing.insert({block, instance.school(from).id});
      if (!new_minutes) missing.insert({block, instance.school(to).id});
      if (!old_minutes || !new_minutes) continue;
      out.block_flows.push_back({from, to, group, block, share, *old_minutes, *new_minutes});
      weight[group] += share;
      before[group] += share * *old_minutes;
      after[group] += share * *new_minutes;
    }
  }
  if (!missing.empty()) {
    std::vector<std::string> items;
    for (const auto& [b, s] : missing) items.push_back(b + " -> " + s);
    std::string msg = "travel matrix is missing " + std::to_string(items.size()) + " (block, school) pairs:";
    for (std::size_t i = 0; i < items.size() && i < 10; ++i) msg += " " + items[i];
    throw MissingDataError(msg, std::move(items));
  }
  double all_w = 0.0, all_before = 0.0, all_after = 0.0;
  for (std::size_t k = 0; k < taxonomy.size(); ++k) {
    GroupTravel g{taxonomy.groups()[k], weight[k], std::nullopt, std::nullopt};
    if (weight[k] > 0.0) {
      g.mean_before = before[k] / weight[k];
      g.mean_after = after[k] / weight[k];
    }
    all_w += weight[k];
    all_before += before[k];
    all_after += after[k];
    out.groups.push_back(std::move(g));
  }
  out.overall = {"overall", all_w, std::nullopt, std::nullopt};
  if (all_w > 0.0) {
    out.overall.mean_before = all_before / all_w;
    out.overall.mean_after = all_after / all_w;
  }
  return out;
}

OptOutResult apply_opt_out(const solver::MergerPlan& plan, const DistrictInstance& instance,
                           const GroupTaxonomy& taxonomy, const std::map<std::string, double>& ratios) {
  OptOutResult out;
  out.ratios.assign(taxonomy.size(), 0.0);
  for (const auto& [label, r] : ratios) {
    auto k = taxonomy.index_of(label);
    if (!k) throw ValidationError("opt-out ratio for unknown group '" + label + "'");
    if (!std::isfinite(r)) throw ValidationError("opt-out ratio for '" + label + "' is not finite");
    out.ratios[*k] = std::clamp(r, 0.0, 1.0);
  }
  std::vector<bool> merged(instance.size(), false);
  for (const auto& cl : plan.clusters) {
    for (SchoolIndex m : cl.members) merged[m] = cl.members.size() >= 2;
  }
  const auto post = post_enrollments(plan, instance);
  for (SchoolIndex s = 0; s < instance.size(); ++s) {
    metrics::SchoolDemographics d{instance.school(s).id, 0.0, 0.0};
    for (std::size_t k = 0; k < taxonomy.size(); ++k) {
      const double stay = merged[s] ? 1.0 - out.ratios[k] : 1.0;
      const double c = static_cast<double>(post[s].group_total(k)) * stay;
      d.total += c;
      if (taxonomy.is_focal(k)) d.focal += c;
    }
    out.total += d.total;
    out.focal += d.focal;
    out.schools.push_back(std::move(d));
  }
  out.d = metrics::dissimilarity(out.schools, out.total, out.focal);
  return out;
}

std::vector<ClosureEntry> closure_report(const solver::MergerPlan& plan, const DistrictInstance& instance) {
  const auto post = post_enrollments(plan, instance);
  std::vector<ClosureEntry> out;
  for (SchoolIndex s = 0; s < instance.size(); ++s) {
    ClosureEntry e;
    e.school = s;
    e.pre_total = instance.school(s).enrollment.total();
    e.post_total = post[s].total();
    if (e.pre_total > 0) {
      e.ratio = static_cast<double>(e.post_total) / static_cast<double>(e.pre_total);
    } else {
      e.ratio = e.post_total > 0 ? std::numeric_limits<double>::infinity() : 1.0;
    }
    e.closed = e.post_total == 0 && e.pre_total > 0;
    e.severely_reduced = e.pre_total > 0 && 2 * e.post_total <= e.pre_total;
    out.push_back(e);
  }
  return out;
}

std::optional<double> ImpactReport::mean_travel_delta() const {
  if (!travel || !travel->overall.mean_before) return std::nullopt;
  return *travel->overall.mean_after - *travel->overall.mean_before;
}

ImpactReport analyze(const solver::MergerPlan& plan, const DistrictInstance& instance,
                     const GroupTaxonomy& taxonomy, const AnalysisInputs& inputs) {
  ImpactReport r;
  r.group_labels = taxonomy.groups();
  r.students_by_group.assign(taxonomy.size(), 0);
  r.switchers_by_group.assign(taxonomy.size(), 0);
  for (const auto& s : instance.schools()) {
    for (std::size_t k = 0; k < taxonomy.size(); ++k) r.students_by_group[k] += s.enrollment.group_total(k);
  }
  for (const auto& f : switchers(plan, instance)) r.switchers_by_group[f.group] += f.count;
  for (std::size_t k = 0; k < taxonomy.size(); ++k) {
    r.students += r.students_by_group[k];
    r.switcher_total += r.switchers_by_group[k];
  }

  const auto post = post_enrollments(plan, instance);
  std::vector<metrics::SchoolDemographics> post_demo;
  for (SchoolIndex s = 0; s < instance.size(); ++s) {
    SchoolImpact si;
    si.school = s;
    si.pre_total = instance.school(s).enrollment.total();
    si.post_total = post[s].total();
    for (std::size_t k = 0; k < taxonomy.size(); ++k) {
      si.post_by_group.push_back(post[s].group_total(k));
      if (taxonomy.is_focal(k)) si.post_focal += post[s].group_total(k);
    }
    post_demo.push_back({instance.school(s).id, static_cast<double>(si.post_total),
                         static_cast<double>(si.post_focal)});
    r.schools.push_back(std::move(si));
  }
  r.d_before = metrics::dissimilarity(metrics::current_demographics(instance, taxonomy));
  r.d_after = metrics::dissimilarity(post_demo);
  r.closures = closure_report(plan, instance);

  if (inputs.blocks && inputs.travel) {
    r.travel = travel_deltas(plan, instance, *inputs.blocks, *inputs.travel);
    r.diagnostics.insert(r.diagnostics.end(), r.travel->diagnostics.begin(), r.travel->diagnostics.end());
  } else if (r.switcher_total == 0) {
    r.diagnostics.push_back("no switchers");
  }
  if (inputs.opt_out_ratios) r.opt_out = apply_opt_out(plan, instance, taxonomy, *inputs.opt_out_ratios);
  return r;
}

namespace {

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

json report_to_json(const ImpactReport& r, const DistrictInstance& instance) {
  json out;
  out["d_before"] = r.d_before;
  out["d_after"] = r.d_after;
  out["students"] = r.students;
  out["switchers"] = r.switcher_total;
  out["switcher_share"] = r.switcher_share();
  json groups = json::array();
  for (std::size_t k = 0; k < r.group_labels.size(); ++k) {
    json g{{"group", r.group_labels[k]},
           {"students", r.students_by_group[k]},
           {"switchers", r.switchers_by_group[k]}};
    if (r.travel) {
      g["mean_travel_before"] = optional_number(r.travel->groups[k].mean_before);
      g["mean_travel_after"] = optional_number(r.travel->groups[k].mean_after);
    }
    groups.push_back(std::move(g));
  }
  out["groups"] = std::move(groups);
  if (r.travel) {
    out["travel"] = {{"switchers_apportioned", r.travel->overall.switchers},
                     {"mean_before", optional_number(r.travel->overall.mean_before)},
                     {"mean_after", optional_number(r.travel->overall.mean_after)},
                     {"mean_delta", optional_number(r.mean_travel_delta())}};
  } else {
    out["travel"] = nullptr;
  }
  json schools = json::array();
  for (std::size_t i = 0; i < r.schools.size(); ++i) {
    const auto& s = r.schools[i];
    const auto& c = r.closures[i];
    json by_group = json::object();
    for (std::size_t k = 0; k < r.group_labels.size(); ++k) by_group[r.group_labels[k]] = s.post_by_group[k];
    schools.push_back({{"school", instance.school(s.school).id},
                       {"pre_total", s.pre_total},
                       {"post_total", s.post_total},
                       {"post_focal", s.post_focal},
                       {"post_by_group", std::move(by_group)},
                       {"ratio", std::isfinite(c.ratio) ? json(c.ratio) : json(nullptr)},
                       {"closed", c.closed},
                       {"severely_reduced", c.severely_reduced}});
  }
  out["schools"] = std::move(schools);
  if (r.opt_out) {
    json ratios = json::object();
    for (std::size_t k = 0; k < r.group_labels.size(); ++k) ratios[r.group_labels[k]] = r.opt_out->ratios[k];
    out["opt_out"] = {{"ratios", std::move(ratios)},
                      {"d_after", r.opt_out->d},
                      {"students_remaining", r.opt_out->total}};
  } else {
    out["opt_out"] = nullptr;
  }
  out["diagnostics"] = r.diagnostics;
  return out;
}

std::string report_summary_csv(const ImpactReport& r) {
  std::string out = "group,students,switchers,switcher_pct,mean_before,mean_after,delta_minutes\n";
  auto row = [&](const std::string& label, Count students, Count sw, const GroupTravel* t) {
    const double pct = students > 0 ? 100.0 * static_cast<double>(sw) / static_cast<double>(students) : 0.0;
    std::vector<std::string> f{label, std::to_string(students), std::to_string(sw), csv::number(pct), "", "", ""};
    if (t && t->mean_before) {
      f[4] = csv::number(*t->mean_before);
      f[5] = csv::number(*t->mean_after);
      f[6] = csv::number(*t->mean_after - *t->mean_before);
    }
    out += csv::join(f) + "\n";
  };
  for (std::size_t k = 0; k < r.group_labels.size(); ++k) {
    row(r.group_labels[k], r.students_by_group[k], r.switchers_by_group[k], r.travel ? &r.travel->groups[k] : nullptr);
  }
  row("overall", r.students, r.switcher_total, r.travel ? &r.travel->overall : nullptr);
  return out;
}

std::string block_flows_csv(const TravelSummary& travel, const DistrictInstance& instance) {
  std::string out = "from,to,group,block_id,count,minutes_before,minutes_after\n";
  for (const auto& f : travel.block_flows) {
    out += csv::join({instance.school(f.from).id, instance.school(f.to).id, instance.taxonomy().groups()[f.group],
                      f.block_id, csv::number(f.count), csv::number(f.minutes_before),
                      csv::number(f.minutes_after)}) +
           "\n";
  }
  return out;
}

}  // namespace schoolmerge::impact
