#include "plan_io.hpp"

#include <algorithm>
#include <set>

namespace schoolmerge {

using nlohmann::json;
using solver::SolveConfig;

namespace {

std::vector<solver::SchoolPair> pairs_from(const json& v, const char* key) {
  if (!v.is_array()) throw ConfigError(key, std::string(key) + " must be an array of [id, id] pairs");
  std::vector<solver::SchoolPair> out;
  for (const auto& p : v) {
    if (p.is_array() && p.size() == 2 && p[0].is_string() && p[1].is_string()) {
      out.emplace_back(p[0].get<std::string>(), p[1].get<std::string>());
    } else if (p.is_string()) {
      // "A,B" shorthand as accepted on the command line
      const auto s = p.get<std::string>();
      const auto comma = s.find(',');
      if (comma == std::string::npos) throw ConfigError(key, "pair '" + s + "' is not of the form a,b");
      out.emplace_back(s.substr(0, comma), s.substr(comma + 1));
    } else {
      throw ConfigError(key, std::string(key) + " entries must be [id, id] pairs");
    }
  }
  return out;
}

json pairs_to(const std::vector<solver::SchoolPair>& pairs) {
  json out = json::array();
  for (const auto& [a, b] : pairs) out.push_back({a, b});
  return out;
}

}  // namespace

SolveConfig config_from_json(const json& doc, const DistrictInstance& instance, SolveConfig base) {
  static const std::set<std::string> known = {
      "p_min",   "allow_triples", "time_limit_s",  "seed",          "require",  "forbid",
      "objective", "focal_groups", "interdistrict", "exact_max_schools", "max_nodes", "restarts"};
  if (doc.is_null()) return base;
  if (!doc.is_object()) throw ConfigError("config", "config must be a JSON object");
  SolveConfig c = std::move(base);
  try {
    for (auto it = doc.begin(); it != doc.end(); ++it) {
      if (!known.count(it.key())) throw ConfigError("config", "unknown config key '" + it.key() + "'");
    }
    if (doc.contains("p_min")) c.p_min = doc["p_min"].get<double>();
    if (doc.contains("allow_triples")) c.allow_triples = doc["allow_triples"].get<bool>();
    if (doc.contains("time_limit_s")) {
      const double s = doc["time_limit_s"].get<double>();
      if (!(s > 0.0)) throw ConfigError("time_limit", "time_limit_s must be positive");
      c.time_limit = std::chrono::milliseconds(static_cast<std::int64_t>(s * 1000.0));
    }
    if (doc.contains("seed")) c.seed = doc["seed"].get<std::uint64_t>();
    if (doc.contains("require")) c.required_pairs = pairs_from(doc["require"], "require");
    if (doc.contains("forbid")) c.forbidden_pairs = pairs_from(doc["forbid"], "forbid");
    if (doc.contains("interdistrict")) c.interdistrict = doc["interdistrict"].get<bool>();
    if (doc.contains("exact_max_schools")) c.exact_max_schools = doc["exact_max_schools"].get<std::size_t>();
    if (doc.contains("max_nodes")) c.max_nodes = doc["max_nodes"].get<std::uint64_t>();
    if (doc.contains("restarts")) c.restarts = doc["restarts"].get<std::size_t>();
    if (doc.contains("focal_groups") && !doc["focal_groups"].is_null()) {
      c.focal_groups = doc["focal_groups"].get<std::vector<std::string>>();
    }
    if (doc.contains("objective") && !doc["objective"].is_null()) {
      if (doc.contains("focal_groups") && !doc["focal_groups"].is_null()) {
        throw ConfigError("objective", "objective and focal_groups are mutually exclusive");
      }
      c.focal_groups = objective_taxonomy(instance.taxonomy(), doc["objective"].get<std::string>()).focal_labels();
    }
  } catch (const json::exception& e) {
    throw ConfigError("config", std::string("malformed config: ") + e.what());
  }
  solver::validate_config(instance, c);
  return c;
}

json config_to_json(const SolveConfig& c) {
  json out;
  out["p_min"] = c.p_min;
  out["allow_triples"] = c.allow_triples;
  out["time_limit_s"] = static_cast<double>(c.time_limit.count()) / 1000.0;
  out["seed"] = c.seed;
  out["require"] = pairs_to(c.required_pairs);
  out["forbid"] = pairs_to(c.forbidden_pairs);
  out["focal_groups"] = c.focal_groups ? json(*c.focal_groups) : json(nullptr);
  out["interdistrict"] = c.interdistrict;
  out["exact_max_schools"] = c.exact_max_schools;
  out["max_nodes"] = c.max_nodes;
  out["restarts"] = c.restarts;
  return out;
}

json clusters_to_json(const solver::MergerPlan& plan, const DistrictInstance& instance) {
  json clusters = json::array();
  for (const auto& cl : plan.clusters) {
    json members = json::array();
    json spans = json::array();
    for (std::size_t i = 0; i < cl.members.size(); ++i) {
      const auto& id = instance.school(cl.members[i]).id;
      members.push_back(id);
      json sp{{"school", id}, {"start", nullptr}, {"end", nullptr}};
      if (cl.spans[i]) {
        sp["start"] = instance.grade_labels()[cl.spans[i]->start.index];
        sp["end"] = instance.grade_labels()[cl.spans[i]->end.index];
      }
      spans.push_back(std::move(sp));
    }
    clusters.push_back({{"members", std::move(members)}, {"spans", std::move(spans)}});
  }
  return clusters;
}

json result_to_json(const solver::SolveResult& r, const DistrictInstance& instance, const SolveConfig& config,
                    bool include_timing) {
  json out;
  out["format"] = kPlanFormat;
  out["instance"] = instance.name();
  out["district_ids"] = instance.district_ids();
  out["grade_domain"] = instance.grade_labels();
  out["status"] = solver::to_string(r.status);
  out["d_before"] = r.d_before;
  out["d_after"] = r.d_after;
  out["switchers"] = r.switchers;
  out["clusters"] = clusters_to_json(r.plan, instance);
  out["config"] = config_to_json(config);
  out["stats"] = {{"nodes", r.stats.nodes},
                  {"restarts", r.stats.restarts},
                  {"candidate_clusters", r.stats.candidate_clusters},
                  {"exact_search", r.stats.exact_search},
                  {"exhausted", r.stats.exhausted},
                  {"cancelled", r.stats.cancelled}};
  if (include_timing) out["stats"]["wall_time_s"] = r.stats.wall_seconds;
  return out;
}

LoadedPlan plan_from_json(const json& doc, const DistrictInstance& instance) {
  LoadedPlan out;
  try {
    if (doc.value("format", std::string{}) != kPlanFormat) {
      throw ParseError(std::string("plan file format must be '") + kPlanFormat + "'");
    }
    out.status = doc.at("status").get<std::string>();
    out.d_before = doc.at("d_before").get<double>();
    out.d_after = doc.at("d_after").get<double>();
    if (doc.contains("config")) {
      json cfg = doc["config"];
      out.config = config_from_json(cfg, instance);
    }
    for (const auto& cd : doc.at("clusters")) {
      solver::Cluster cl;
      std::vector<std::pair<SchoolIndex, std::optional<solver::GradeSpan>>> entries;
      for (const auto& sp : cd.at("spans")) {
        const auto id = sp.at("school").get<std::string>();
        auto idx = instance.index_of(id);
        if (!idx) throw ValidationError("plan names unknown school '" + id + "'");
        std::optional<solver::GradeSpan> span;
        if (!sp.at("start").is_null()) {
          auto a = instance.grade_of(sp.at("start").get<std::string>());
          auto b = instance.grade_of(sp.at("end").get<std::string>());
          if (!a || !b) throw ValidationError("plan uses a grade outside the instance grade domain");
          span = solver::GradeSpan{*a, *b};
        }
        entries.emplace_back(*idx, span);
      }
      std::sort(entries.begin(), entries.end(), [](const auto& x, const auto& y) { return x.first < y.first; });
      for (auto& [idx, span] : entries) {
        cl.members.push_back(idx);
        cl.spans.push_back(span);
      }
      out.plan.clusters.push_back(std::move(cl));
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed plan file: ") + e.what());
  }
  solver::canonicalize(out.plan);
  auto problems = solver::plan_violations(out.plan, instance, out.config);
  if (!problems.empty()) throw ValidationError("plan file is not a valid plan: " + problems.front());
  return out;
}

}  // namespace schoolmerge
