#pragma once

// JSON forms of solve configs and plan files.
//
// Plan file (format "schoolmerge-plan/1"):
//   { "format", "instance", "district_ids", "grade_domain", "status",
//     "d_before", "d_after", "switchers",
//     "clusters": [ { "members": [id...],
//                     "spans": [ { "school", "start", "end" } ... ] } ],
//     "config": { ...echo... }, "stats": { ... } }
// A closed school has "start" and "end" set to null.

#include "json.hpp"
#include "solver.hpp"

namespace schoolmerge {

inline constexpr const char* kPlanFormat = "schoolmerge-plan/1";

// Recognized keys: p_min, allow_triples, time_limit_s, seed, require, forbid,
// objective ("white-vs-poc" | "bhwa"), focal_groups, interdistrict,
// exact_max_schools, max_nodes, restarts. Unknown keys are rejected.
// `objective` is resolved against the instance taxonomy into focal_groups.
solver::SolveConfig config_from_json(const nlohmann::json& doc, const DistrictInstance& instance,
                                     solver::SolveConfig base = {});
nlohmann::json config_to_json(const solver::SolveConfig& config);

nlohmann::json clusters_to_json(const solver::MergerPlan& plan, const DistrictInstance& instance);
// Batch outputs pass include_timing = false so reruns are byte-identical.
nlohmann::json result_to_json(const solver::SolveResult& result, const DistrictInstance& instance,
                              const solver::SolveConfig& config, bool include_timing = true);

struct LoadedPlan {
  solver::MergerPlan plan;
  solver::SolveConfig config;
  std::string status;
  double d_before = 0.0;
  double d_after = 0.0;
};

// Resolves ids against `instance`; throws ParseError / ValidationError.
LoadedPlan plan_from_json(const nlohmann::json& doc, const DistrictInstance& instance);

}  // namespace schoolmerge
