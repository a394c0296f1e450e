#include "scenario.hpp"

#include <atomic>
#include <fstream>
#include <set>
#include <thread>

#include "log.hpp"
#include "metrics.hpp"
#include "plan_io.hpp"
#include "stats.hpp"
#include "tables.hpp"

namespace schoolmerge::scenario {

using nlohmann::json;

namespace {

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

std::vector<std::pair<std::string, std::string>> pair_list(const json& v) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& p : v) out.emplace_back(p.at(0).get<std::string>(), p.at(1).get<std::string>());
  return out;
}

std::string number_label(double v) {
  auto s = csv::number(v);
  return s.empty() ? "nan" : s;
}

std::string sanitize(std::string s) {
  for (char& c : s) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '.' && c != '_') c = '_';
  }
  return s;
}

}  // namespace

ScenarioSpec spec_from_json(const json& doc, const std::filesystem::path& base_dir) {
  ScenarioSpec spec;
  try {
    for (const auto& p : doc.value("instances", json::array())) spec.instances.push_back(resolve(base_dir, p));
    if (doc.contains("config")) spec.config = doc["config"];
    if (doc.contains("sweep")) {
      const auto& sw = doc["sweep"];
      if (sw.contains("p_min")) spec.p_min_values = sw["p_min"].get<std::vector<double>>();
      if (sw.contains("objective")) spec.objectives = sw["objective"].get<std::vector<std::string>>();
    }
    for (const auto& f : doc.value("interdistrict", json::array())) {
      FusionSpec fs;
      fs.name = f.at("name").get<std::string>();
      for (const auto& p : f.at("instances")) fs.instances.push_back(resolve(base_dir, p));
      fs.cross_adjacency = pair_list(f.value("cross_adjacency", json::array()));
      spec.interdistrict.push_back(std::move(fs));
    }
    if (doc.contains("travel")) {
      for (auto it = doc["travel"].begin(); it != doc["travel"].end(); ++it) {
        spec.travel[it.key()] = {resolve(base_dir, it.value().at("blocks")),
                                 resolve(base_dir, it.value().at("travel"))};
      }
    }
    if (doc.contains("opt_out_ratios")) {
      spec.opt_out_ratios = doc["opt_out_ratios"].get<std::map<std::string, double>>();
    }
    spec.workers = doc.value("workers", std::size_t{1});
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed scenario spec: ") + e.what());
  }
  for (double p : spec.p_min_values) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("p_min_range", "sweep p_min values must lie in [0, 1]");
  }
  if (spec.instances.empty() && spec.interdistrict.empty()) throw ParseError("scenario spec lists no instances");
  return spec;
}

ScenarioSpec load_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open scenario spec '" + path.string() + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError("malformed scenario spec '" + path.string() + "': " + e.what());
  }
  return spec_from_json(doc, path.parent_path());
}

DistrictInstance fuse_districts(const std::vector<DistrictInstance>& instances,
                                const std::vector<std::pair<std::string, std::string>>& cross_adjacency,
                                std::string name) {
  if (instances.empty()) throw ValidationError("nothing to fuse");
  const auto& first = instances.front();
  std::vector<School> schools;
  std::vector<std::pair<std::string, std::string>> adjacency;
  for (const auto& inst : instances) {
    if (inst.grade_labels() != first.grade_labels()) {
      throw ValidationError("cannot fuse '" + inst.name() + "': grade domain differs from '" + first.name() + "'");
    }
    if (!(inst.taxonomy() == first.taxonomy())) {
      throw ValidationError("cannot fuse '" + inst.name() + "': group taxonomy differs from '" + first.name() + "'");
    }
    for (const auto& s : inst.schools()) schools.push_back(s);
    for (const auto& [a, b] : inst.edges()) adjacency.emplace_back(inst.school(a).id, inst.school(b).id);
  }
  adjacency.insert(adjacency.end(), cross_adjacency.begin(), cross_adjacency.end());
  return DistrictInstance::create(std::move(name), first.grade_labels(), first.taxonomy(), std::move(schools),
                                  adjacency);
}

namespace {

std::vector<OwnDistrictMetrics> own_metrics(const DistrictInstance& inst, const GroupTaxonomy& taxonomy,
                                            const solver::MergerPlan& plan) {
  const auto post = impact::post_enrollments(plan, inst);
  std::vector<OwnDistrictMetrics> out;
  for (const auto& d : inst.district_ids()) {
    std::vector<metrics::SchoolDemographics> before, after;
    for (SchoolIndex s = 0; s < inst.size(); ++s) {
      if (inst.school(s).district_id != d) continue;
      auto b = school_totals(inst.school(s).enrollment, taxonomy);
      auto a = school_totals(post[s], taxonomy);
      before.push_back({inst.school(s).id, double(b.total), double(b.focal)});
      after.push_back({inst.school(s).id, double(a.total), double(a.focal)});
    }
    OwnDistrictMetrics m{d, std::nullopt, std::nullopt};
    try {
      m.d_before = metrics::dissimilarity(before);
    } catch (const Error&) {
    }
    try {
      m.d_after = metrics::dissimilarity(after);
    } catch (const Error&) {
    }
    out.push_back(std::move(m));
  }
  return out;
}

struct CellJob {
  std::shared_ptr<const DistrictInstance> instance;
  std::string error;  // load error, reported for every cell of this instance
  std::string name;
  bool fused = false;
  const TravelInputs* travel = nullptr;
};

void run_cell(Cell& cell, const CellJob& job, const ScenarioSpec& spec) {
  try {
    if (!job.error.empty()) throw Error(job.error);
    const auto& inst = *job.instance;
    json cfg = spec.config;
    cfg["p_min"] = cell.p_min;
    if (cell.objective != "default") cfg["objective"] = cell.objective;
    if (job.fused) cfg["interdistrict"] = true;
    cell.config = config_from_json(cfg, inst);
    const auto taxonomy = solver::objective_of(inst, cell.config);
    cell.result = solver::solve(inst, cell.config);

    std::optional<impact::BlockWeights> blocks;
    std::optional<impact::TravelMatrix> travel;
    if (job.travel) {
      blocks = impact::load_block_weights(job.travel->blocks, inst);
      travel = impact::load_travel_matrix(job.travel->travel, inst);
    }
    impact::AnalysisInputs in;
    if (blocks) {
      in.blocks = &*blocks;
      in.travel = &*travel;
    }
    if (spec.opt_out_ratios) in.opt_out_ratios = &*spec.opt_out_ratios;
    cell.impact = impact::analyze(cell.result->plan, inst, taxonomy, in);
    try {
      cell.gearys_c = metrics::district_gearys_c(inst, taxonomy);
    } catch (const Error&) {
      cell.gearys_c.reset();
    }
    if (job.fused) cell.own = own_metrics(inst, taxonomy, cell.result->plan);
  } catch (const std::exception& e) {
    cell.error = e.what();
    log::warn("cell " + cell.id + " failed: " + cell.error);
  }
}

}  // namespace

BatchResult run_scenarios(const ScenarioSpec& spec, std::optional<std::size_t> workers) {
  std::vector<CellJob> jobs;
  for (const auto& path : spec.instances) {
    CellJob job;
    job.name = path.stem().string();
    try {
      job.instance = std::make_shared<const DistrictInstance>(load_instance(path));
      job.name = job.instance->name();
    } catch (const std::exception& e) {
      job.error = e.what();
    }
    jobs.push_back(std::move(job));
  }
  for (const auto& f : spec.interdistrict) {
    CellJob job;
    job.name = f.name;
    job.fused = true;
    try {
      std::vector<DistrictInstance> parts;
      for (const auto& p : f.instances) parts.push_back(load_instance(p));
      job.instance = std::make_shared<const DistrictInstance>(fuse_districts(parts, f.cross_adjacency, f.name));
    } catch (const std::exception& e) {
      job.error = e.what();
    }
    jobs.push_back(std::move(job));
  }
  for (auto& job : jobs) {
    auto it = spec.travel.find(job.name);
    if (it != spec.travel.end()) job.travel = &it->second;
  }

  std::vector<double> p_values = spec.p_min_values;
  if (p_values.empty()) p_values.push_back(spec.config.value("p_min", 0.8));
  std::vector<std::string> objectives = spec.objectives;
  if (objectives.empty()) objectives.push_back("default");

  BatchResult batch;
  std::vector<std::size_t> job_of;
  for (std::size_t j = 0; j < jobs.size(); ++j) {
    for (double p : p_values) {
      for (const auto& obj : objectives) {
        Cell c;
        c.instance_name = jobs[j].name;
        c.instance = jobs[j].instance;
        c.fused = jobs[j].fused;
        c.p_min = p;
        c.objective = obj;
        c.district = jobs[j].name;
        if (jobs[j].instance && jobs[j].instance->district_ids().size() == 1 && !c.fused) {
          c.district = *jobs[j].instance->district_ids().begin();
        }
        c.id = sanitize(c.instance_name + "__pmin" + number_label(p) + "__" + obj);
        batch.cells.push_back(std::move(c));
        job_of.push_back(j);
      }
    }
  }

  const std::size_t n_workers = std::max<std::size_t>(1, workers.value_or(spec.workers));
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < batch.cells.size(); i = next++) run_cell(batch.cells[i], jobs[job_of[i]], spec);
  };
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 1; w < n_workers; ++w) pool.emplace_back(work);
    work();
  }
  return batch;
}

namespace {

const std::vector<std::string> kSummaryHeader = {
    "cell",     "instance",      "scope",       "district",   "p_min",      "objective",
    "status",   "schools",       "d_before",    "d_after",    "delta_d_relative",
    "switchers", "switcher_pct", "mean_travel_before", "mean_travel_after", "delta_travel",
    "gearys_c", "merged_clusters", "opt_out_d_after", "error"};

std::string opt(const std::optional<double>& v) { return v ? csv::number(*v) : std::string(); }

}  // namespace

std::string summary_csv(const BatchResult& batch) {
  std::string out = csv::join(kSummaryHeader) + "\n";
  for (const auto& c : batch.cells) {
    std::vector<std::string> f(kSummaryHeader.size());
    f[0] = c.id;
    f[1] = c.instance_name;
    f[2] = c.fused ? "union" : "district";
    f[3] = c.district;
    f[4] = csv::number(c.p_min);
    f[5] = c.objective;
    if (c.instance) f[7] = std::to_string(c.instance->size());
    if (c.error.empty() && c.result && c.impact) {
      const auto& r = *c.result;
      const auto& im = *c.impact;
      f[6] = solver::to_string(r.status);
      f[8] = csv::number(r.d_before);
      f[9] = csv::number(r.d_after);
      f[10] = csv::number((r.d_after - r.d_before) / r.d_before);
      f[11] = std::to_string(im.switcher_total);
      f[12] = csv::number(100.0 * im.switcher_share());
      if (im.travel) {
        f[13] = opt(im.travel->overall.mean_before);
        f[14] = opt(im.travel->overall.mean_after);
        f[15] = opt(im.mean_travel_delta());
      }
      f[16] = opt(c.gearys_c);
      std::size_t merged = 0;
      for (const auto& cl : r.plan.clusters) merged += cl.members.size() > 1;
      f[17] = std::to_string(merged);
      if (im.opt_out) f[18] = csv::number(im.opt_out->d);
    } else {
      f[6] = "error";
      f[19] = c.error;
    }
    out += csv::join(f) + "\n";
    for (const auto& own : c.own) {
      std::vector<std::string> g(kSummaryHeader.size());
      g[0] = c.id;
      g[1] = c.instance_name;
      g[2] = "own:" + own.district;
      g[3] = own.district;
      g[4] = f[4];
      g[5] = f[5];
      g[6] = f[6];
      g[8] = opt(own.d_before);
      g[9] = opt(own.d_after);
      if (own.d_before && own.d_after && *own.d_before > 0.0) {
        g[10] = csv::number((*own.d_after - *own.d_before) / *own.d_before);
      }
      out += csv::join(g) + "\n";
    }
  }
  return out;
}

std::vector<DistrictMetrics> district_metrics(const BatchResult& batch) {
  std::vector<DistrictMetrics> out;
  for (const auto& c : batch.cells) {
    if (c.fused || !c.error.empty() || !c.result || !c.impact) continue;
    DistrictMetrics m;
    m.district = c.district;
    m.p_min = c.p_min;
    m.objective = c.objective;
    m.d_before = c.result->d_before;
    m.d_after = c.result->d_after;
    m.delta_d_relative = (m.d_after - m.d_before) / m.d_before;
    m.delta_t = c.impact->mean_travel_delta();
    m.gearys_c = c.gearys_c;
    out.push_back(std::move(m));
  }
  return out;
}

std::vector<DistrictMetrics> district_metrics_from_summary(const std::string& text) {
  const auto t = csv::parse(text);
  const auto scope = t.require_column("scope");
  const auto district = t.require_column("district");
  const auto p_min = t.require_column("p_min");
  const auto objective = t.require_column("objective");
  const auto d_before = t.require_column("d_before");
  const auto d_after = t.require_column("d_after");
  const auto delta = t.require_column("delta_d_relative");
  const auto dt = t.require_column("delta_travel");
  const auto c = t.require_column("gearys_c");
  const auto err = t.require_column("error");
  std::vector<DistrictMetrics> out;
  for (const auto& r : t.rows) {
    if (r[scope] != "district" || !r[err].empty() || r[d_before].empty()) continue;
    DistrictMetrics m;
    m.district = r[district];
    m.p_min = csv::to_double(r[p_min], "summary p_min");
    m.objective = r[objective];
    m.d_before = csv::to_double(r[d_before], "summary d_before");
    m.d_after = csv::to_double(r[d_after], "summary d_after");
    m.delta_d_relative = csv::to_double(r[delta], "summary delta_d_relative");
    if (!r[dt].empty()) m.delta_t = csv::to_double(r[dt], "summary delta_travel");
    if (!r[c].empty()) m.gearys_c = csv::to_double(r[c], "summary gearys_c");
    out.push_back(std::move(m));
  }
  return out;
}

namespace {

json association(const std::vector<double>& x, const std::vector<double>& y) {
  json out;
  out["n"] = x.size();
  if (x.size() < 3) {
    out["spearman_rho"] = nullptr;
    out["pearson_r"] = nullptr;
    out["ols_slope"] = nullptr;
    out["ols_intercept"] = nullptr;
    out["flag"] = "insufficient data";
    return out;
  }
  auto rho = stats::spearman(x, y);
  auto r = stats::pearson(x, y);
  auto fit = stats::ols(x, y);
  out["spearman_rho"] = rho ? json(*rho) : json(nullptr);
  out["pearson_r"] = r ? json(*r) : json(nullptr);
  out["ols_slope"] = fit ? json(fit->slope) : json(nullptr);
  out["ols_intercept"] = fit ? json(fit->intercept) : json(nullptr);
  out["flag"] = rho ? json(nullptr) : json("zero rank variance");
  return out;
}

}  // namespace

json correlation_report(const std::vector<DistrictMetrics>& rows) {
  if (rows.size() < 3) {
    throw InsufficientDataError("correlation needs at least 3 districts, got " + std::to_string(rows.size()));
  }
  json out;
  json table = json::array();
  std::vector<double> cx, cy, tx, ty;
  for (const auto& m : rows) {
    table.push_back({{"district", m.district},
                     {"d_before", m.d_before},
                     {"d_after", m.d_after},
                     {"delta_d_relative", m.delta_d_relative},
                     {"delta_t", m.delta_t ? json(*m.delta_t) : json(nullptr)},
                     {"gearys_c", m.gearys_c ? json(*m.gearys_c) : json(nullptr)}});
    if (m.gearys_c) {
      cx.push_back(*m.gearys_c);
      cy.push_back(m.delta_d_relative);
    }
    if (m.delta_t) {
      tx.push_back(*m.delta_t);
      ty.push_back(m.delta_d_relative);
    }
  }
  std::vector<double> decreases;
  for (const auto& m : rows) decreases.push_back(m.delta_d_relative);
  out["districts"] = std::move(table);
  out["gearys_c_vs_delta_d"] = association(cx, cy);
  out["delta_t_vs_delta_d"] = association(tx, ty);
  auto med = stats::lower_median(decreases);
  out["median_delta_d_relative"] = med ? json(*med) : json(nullptr);
  return out;
}

json grouped_correlations(const std::vector<DistrictMetrics>& rows) {
  std::map<std::pair<double, std::string>, std::vector<DistrictMetrics>> groups;
  for (const auto& m : rows) groups[{m.p_min, m.objective}].push_back(m);
  json out = json::array();
  for (const auto& [key, members] : groups) {
    json g{{"p_min", key.first}, {"objective", key.second}};
    try {
      g["report"] = correlation_report(members);
    } catch (const InsufficientDataError& e) {
      g["report"] = nullptr;
      g["error"] = e.what();
    }
    out.push_back(std::move(g));
  }
  return out;
}

std::vector<RedistrictingRow> redistricting_from_csv(const std::string& text) {
  const auto t = csv::parse(text);
  const auto d = t.require_column("district_id");
  const auto dd = t.require_column("delta_d_relative");
  const auto ps = t.require_column("percent_switching");
  std::vector<RedistrictingRow> out;
  for (const auto& r : t.rows) {
    out.push_back({r[d], csv::to_double(r[dd], "redistricting delta_d_relative"),
                   csv::to_double(r[ps], "redistricting percent_switching")});
  }
  return out;
}

CrossoverTable crossover_table(const std::vector<DistrictMetrics>& mergers,
                               const std::vector<RedistrictingRow>& redistricting) {
  std::map<std::string, const DistrictMetrics*> by_district;
  for (const auto& m : mergers) {
    if (!by_district.emplace(m.district, &m).second) {
      throw ConfigError("unique_district", "district '" + m.district +
                                               "' appears more than once; filter by p_min/objective");
    }
  }
  CrossoverTable out;
  std::set<std::string> matched;
  for (const auto& r : redistricting) {
    auto it = by_district.find(r.district);
    if (it == by_district.end()) {
      out.unmatched_redistricting.push_back(r.district);
      continue;
    }
    matched.insert(r.district);
    const auto& m = *it->second;
    CrossPolicyRecord rec;
    rec.district = r.district;
    rec.mergers_delta_d = m.delta_d_relative;
    rec.mergers_delta_t = m.delta_t;
    if (!m.delta_t) {
      rec.flags.push_back("no travel data");
    } else if (*m.delta_t == 0.0) {
      rec.flags.push_back("zero travel change");
    } else {
      rec.mergers_ratio = m.delta_d_relative / *m.delta_t;
    }
    rec.redistricting_delta_d = r.delta_d_relative;
    rec.percent_switching = r.percent_switching;
    if (r.percent_switching == 0.0) {
      rec.flags.push_back("zero percent switching");
    } else {
      rec.redistricting_ratio = r.delta_d_relative / r.percent_switching;
    }
    out.records.push_back(std::move(rec));
  }
  for (const auto& [d, _] : by_district) {
    if (!matched.count(d)) out.unmatched_mergers.push_back(d);
  }
  std::sort(out.records.begin(), out.records.end(),
            [](const CrossPolicyRecord& a, const CrossPolicyRecord& b) { return a.district < b.district; });
  if (out.records.empty()) out.warnings.push_back("no district appears in both merger and redistricting results");
  if (!out.unmatched_mergers.empty()) {
    out.warnings.push_back(std::to_string(out.unmatched_mergers.size()) +
                           " district(s) have no redistricting results");
  }
  return out;
}

std::string crossover_csv(const CrossoverTable& table) {
  std::string out =
      "district_id,mergers_delta_d_relative,mergers_delta_t,mergers_ratio,redistricting_delta_d_relative,"
      "percent_switching,redistricting_ratio,flags\n";
  for (const auto& r : table.records) {
    std::string flags;
    for (const auto& f : r.flags) flags += (flags.empty() ? "" : ";") + f;
    out += csv::join({r.district, csv::number(r.mergers_delta_d), opt(r.mergers_delta_t), opt(r.mergers_ratio),
                      csv::number(r.redistricting_delta_d), csv::number(r.percent_switching),
                      opt(r.redistricting_ratio), flags}) +
           "\n";
  }
  return out;
}

void write_outputs(const BatchResult& batch, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir / "cells");
  for (const auto& c : batch.cells) {
    if (!c.error.empty() || !c.result || !c.impact) continue;
    auto plan = result_to_json(*c.result, *c.instance, c.config, false);
    csv::write_file(out_dir / "cells" / (c.id + ".plan.json"), plan.dump(2) + "\n");
    csv::write_file(out_dir / "cells" / (c.id + ".impact.json"),
                    impact::report_to_json(*c.impact, *c.instance).dump(2) + "\n");
    csv::write_file(out_dir / "cells" / (c.id + ".impact.csv"), impact::report_summary_csv(*c.impact));
  }
  csv::write_file(out_dir / "summary.csv", summary_csv(batch));
  csv::write_file(out_dir / "correlations.json", grouped_correlations(district_metrics(batch)).dump(2) + "\n");
}

}  // namespace schoolmerge::scenario
