#include "schoolmerge/schoolmerge.h"

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <memory>
#include <string>

#include "impact.hpp"
#include "json.hpp"
#include "metrics.hpp"
#include "plan_io.hpp"
#include "scenario.hpp"
#include "service.hpp"
#include "solver.hpp"
#include "tables.hpp"

using nlohmann::json;
namespace sm = schoolmerge;

struct sm_instance {
  sm::DistrictInstance inst;
};

struct sm_result {
  std::shared_ptr<const sm::DistrictInstance> inst;
  sm::solver::SolveConfig config;
  sm::solver::SolveResult result;
};

struct sm_server {
  std::unique_ptr<sm::service::Server> server;
};

namespace {

thread_local std::string last_error;
thread_local std::string last_detail;

void clear_error() {
  last_error.clear();
  last_detail.clear();
}

sm_status fail(sm_status status, std::string msg, std::string detail = {}) {
  last_error = std::move(msg);
  last_detail = std::move(detail);
  return status;
}

// Maps the library's exception hierarchy onto status codes.
template <class F>
sm_status guarded(F&& f) {
  clear_error();
  try {
    f();
    return SM_OK;
  } catch (const sm::ConfigError& e) {
    return fail(SM_ERR_CONFIG, e.what(), e.constraint);
  } catch (const sm::MissingDataError& e) {
    return fail(SM_ERR_MISSING_DATA, e.what(), json(e.missing).dump());
  } catch (const sm::DegenerateTotalsError& e) {
    return fail(SM_ERR_DEGENERATE, e.what());
  } catch (const sm::scenario::InsufficientDataError& e) {
    return fail(SM_ERR_INSUFFICIENT_DATA, e.what());
  } catch (const sm::ParseError& e) {
    return fail(SM_ERR_PARSE, e.what());
  } catch (const sm::ValidationError& e) {
    return fail(SM_ERR_VALIDATION, e.what());
  } catch (const sm::impact::ZeroWeightError& e) {
    return fail(SM_ERR_VALIDATION, e.what());
  } catch (const json::exception& e) {
    return fail(SM_ERR_PARSE, std::string("malformed JSON: ") + e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(SM_ERR_IO, e.what());
  } catch (const sm::Error& e) {
    return fail(SM_ERR_IO, e.what());
  } catch (const std::exception& e) {
    return fail(SM_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(SM_ERR_INTERNAL, "unknown error");
  }
}

char* dup(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

json parse_optional(const char* text) {
  if (!text || !*text) return json(nullptr);
  return json::parse(text);
}

sm_status null_argument() { return fail(SM_ERR_ARGUMENT, "null argument"); }

}  // namespace

extern "C" {

SM_API const char* sm_version(void) { return "0.1.0"; }

SM_API const char* sm_status_name(sm_status status) {
  switch (status) {
    case SM_OK: return "ok";
    case SM_ERR_PARSE: return "parse_error";
    case SM_ERR_VALIDATION: return "validation_error";
    case SM_ERR_CONFIG: return "config_error";
    case SM_ERR_MISSING_DATA: return "missing_data";
    case SM_ERR_DEGENERATE: return "degenerate_totals";
    case SM_ERR_IO: return "io_error";
    case SM_ERR_INSUFFICIENT_DATA: return "insufficient_data";
    case SM_ERR_ARGUMENT: return "invalid_argument";
    case SM_ERR_INTERNAL: return "internal_error";
  }
  return "unknown";
}

SM_API const char* sm_last_error(void) { return last_error.c_str(); }
SM_API const char* sm_last_error_detail(void) { return last_detail.c_str(); }
SM_API void sm_string_free(char* s) { std::free(s); }

SM_API sm_status sm_instance_load(const char* path, sm_instance** out) {
  if (!path || !out) return null_argument();
  return guarded([&] { *out = new sm_instance{sm::load_instance(path)}; });
}

SM_API sm_status sm_instance_from_json(const char* text, sm_instance** out) {
  if (!text || !out) return null_argument();
  return guarded([&] {
    json doc;
    try {
      doc = json::parse(text);
    } catch (const json::exception& e) {
      throw sm::ParseError(std::string("malformed instance JSON: ") + e.what());
    }
    *out = new sm_instance{sm::instance_from_json(doc)};
  });
}

SM_API void sm_instance_free(sm_instance* instance) { delete instance; }

SM_API sm_status sm_instance_summary(const sm_instance* instance, char** json_out) {
  if (!instance || !json_out) return null_argument();
  return guarded([&] {
    const auto& inst = instance->inst;
    const auto& tax = inst.taxonomy();
    json out{{"name", inst.name()},
             {"schools", inst.size()},
             {"edges", inst.edges().size()},
             {"district_ids", inst.district_ids()},
             {"grade_domain", inst.grade_labels()},
             {"groups", tax.groups()},
             {"focal_groups", tax.focal_labels()},
             {"baseline_d", sm::metrics::dissimilarity(sm::metrics::current_demographics(inst, tax))},
             {"warnings", inst.warnings()}};
    try {
      out["gearys_c"] = sm::metrics::district_gearys_c(inst, tax);
    } catch (const sm::Error& e) {
      out["gearys_c"] = nullptr;
      out["gearys_c_error"] = e.what();
    }
    *json_out = dup(out.dump());
  });
}

SM_API sm_status sm_solve(const sm_instance* instance, const char* config_json, sm_result** out) {
  if (!instance || !out) return null_argument();
  return guarded([&] {
    json cfg_doc;
    try {
      cfg_doc = parse_optional(config_json);
    } catch (const json::exception& e) {
      throw sm::ConfigError("config", std::string("malformed config JSON: ") + e.what());
    }
    auto r = std::make_unique<sm_result>();
    r->inst = std::make_shared<const sm::DistrictInstance>(instance->inst);
    r->config = sm::config_from_json(cfg_doc, *r->inst);
    r->result = sm::solver::solve(*r->inst, r->config);
    *out = r.release();
  });
}

SM_API void sm_result_free(sm_result* result) { delete result; }

SM_API sm_status sm_result_summary(const sm_result* result, char** json_out) {
  if (!result || !json_out) return null_argument();
  return guarded([&] {
    const auto& r = result->result;
    std::size_t merged = 0;
    for (const auto& c : r.plan.clusters) merged += c.size() > 1;
    json out{{"status", sm::solver::to_string(r.status)},
             {"d_before", r.d_before},
             {"d_after", r.d_after},
             {"switchers", r.switchers},
             {"merged_clusters", merged},
             {"nodes", r.stats.nodes},
             {"wall_time_s", r.stats.wall_seconds}};
    *json_out = dup(out.dump());
  });
}

SM_API sm_status sm_result_plan(const sm_result* result, int include_timing, char** json_out) {
  if (!result || !json_out) return null_argument();
  return guarded([&] {
    *json_out = dup(sm::result_to_json(result->result, *result->inst, result->config, include_timing != 0).dump(2));
  });
}

SM_API sm_status sm_impact(const sm_instance* instance, const char* plan_json, const char* options_json,
                           char** json_out) {
  if (!instance || !plan_json || !json_out) return null_argument();
  return guarded([&] {
    const auto& inst = instance->inst;
    json plan_doc;
    try {
      plan_doc = json::parse(plan_json);
    } catch (const json::exception& e) {
      throw sm::ParseError(std::string("malformed plan JSON: ") + e.what());
    }
    const auto loaded = sm::plan_from_json(plan_doc, inst);
    const json opts = parse_optional(options_json);
    std::optional<sm::impact::BlockWeights> blocks;
    std::optional<sm::impact::TravelMatrix> travel;
    std::optional<std::map<std::string, double>> ratios;
    if (opts.is_object()) {
      const bool has_blocks = opts.contains("blocks") && !opts["blocks"].is_null();
      const bool has_travel = opts.contains("travel") && !opts["travel"].is_null();
      if (has_blocks != has_travel) throw sm::ConfigError("travel_inputs", "blocks and travel must be given together");
      if (has_blocks) {
        blocks = sm::impact::load_block_weights(opts["blocks"].get<std::string>(), inst);
        travel = sm::impact::load_travel_matrix(opts["travel"].get<std::string>(), inst);
      }
      if (opts.contains("opt_out_ratios") && !opts["opt_out_ratios"].is_null()) {
        ratios = opts["opt_out_ratios"].get<std::map<std::string, double>>();
      }
    }
    sm::impact::AnalysisInputs in;
    if (blocks) {
      in.blocks = &*blocks;
      in.travel = &*travel;
    }
    if (ratios) in.opt_out_ratios = &*ratios;
    const auto taxonomy = sm::solver::objective_of(inst, loaded.config);
    const auto report = sm::impact::analyze(loaded.plan, inst, taxonomy, in);
    json out{{"report", sm::impact::report_to_json(report, inst)},
             {"summary_csv", sm::impact::report_summary_csv(report)},
             {"block_flows_csv", report.travel ? json(sm::impact::block_flows_csv(*report.travel, inst)) : json(nullptr)}};
    *json_out = dup(out.dump());
  });
}

SM_API sm_status sm_sweep(const char* spec_path, size_t workers, const char* out_dir, char** json_out) {
  if (!spec_path || !out_dir || !json_out) return null_argument();
  return guarded([&] {
    const auto spec = sm::scenario::load_spec(spec_path);
    const auto batch =
        sm::scenario::run_scenarios(spec, workers ? std::optional<std::size_t>(workers) : std::nullopt);
    const std::filesystem::path out(out_dir);
    sm::scenario::write_outputs(batch, out);
    std::size_t failed = 0;
    json errors = json::array();
    for (const auto& c : batch.cells) {
      if (c.error.empty()) continue;
      ++failed;
      errors.push_back({{"cell", c.id}, {"error", c.error}});
    }
    json result{{"cells", batch.cells.size()},
                {"failed", failed},
                {"errors", errors},
                {"summary_csv", (out / "summary.csv").string()},
                {"correlations", (out / "correlations.json").string()}};
    *json_out = dup(result.dump());
  });
}

SM_API sm_status sm_correlate(const char* summary_csv, char** json_out) {
  if (!summary_csv || !json_out) return null_argument();
  return guarded([&] {
    const auto rows = sm::scenario::district_metrics_from_summary(summary_csv);
    *json_out = dup(sm::scenario::grouped_correlations(rows).dump(2));
  });
}

SM_API sm_status sm_crossover(const char* summary_csv, const char* redistricting_csv, const char* filter_json,
                              char** json_out) {
  if (!summary_csv || !redistricting_csv || !json_out) return null_argument();
  return guarded([&] {
    auto rows = sm::scenario::district_metrics_from_summary(summary_csv);
    const json filter = parse_optional(filter_json);
    if (filter.is_object()) {
      std::erase_if(rows, [&](const sm::scenario::DistrictMetrics& m) {
        if (filter.contains("p_min") && !filter["p_min"].is_null() && m.p_min != filter["p_min"].get<double>()) {
          return true;
        }
        return filter.contains("objective") && !filter["objective"].is_null() &&
               m.objective != filter["objective"].get<std::string>();
      });
    }
    const auto table = sm::scenario::crossover_table(rows, sm::scenario::redistricting_from_csv(redistricting_csv));
    json records = json::array();
    auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
    for (const auto& r : table.records) {
      records.push_back({{"district_id", r.district},
                         {"mergers_delta_d_relative", r.mergers_delta_d},
                         {"mergers_delta_t", opt(r.mergers_delta_t)},
                         {"mergers_ratio", opt(r.mergers_ratio)},
                         {"redistricting_delta_d_relative", r.redistricting_delta_d},
                         {"percent_switching", r.percent_switching},
                         {"redistricting_ratio", opt(r.redistricting_ratio)},
                         {"flags", r.flags}});
    }
    json out{{"csv", sm::scenario::crossover_csv(table)},
             {"records", records},
             {"unmatched_mergers", table.unmatched_mergers},
             {"unmatched_redistricting", table.unmatched_redistricting},
             {"warnings", table.warnings}};
    *json_out = dup(out.dump());
  });
}

SM_API sm_status sm_server_create(const char* data_dir, size_t workers, sm_server** out) {
  if (!data_dir || !out) return null_argument();
  return guarded([&] {
    *out = new sm_server{std::make_unique<sm::service::Server>(sm::service::Options{data_dir, workers})};
  });
}

SM_API sm_status sm_server_bind(sm_server* server, const char* host, int port, int* bound_port) {
  if (!server || !host) return null_argument();
  return guarded([&] {
    const int p = server->server->bind(host, port);
    if (p < 0) throw sm::Error("cannot bind " + std::string(host) + ":" + std::to_string(port));
    if (bound_port) *bound_port = p;
  });
}

SM_API sm_status sm_server_run(sm_server* server) {
  if (!server) return null_argument();
  return guarded([&] { server->server->run(); });
}

SM_API void sm_server_stop(sm_server* server) {
  if (server) server->server->stop();
}

SM_API void sm_server_free(sm_server* server) { delete server; }

}  // extern "C"
