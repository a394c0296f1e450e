// schoolmerge command-line front end. Thin shell over the C API.
//
// Exit codes: 0 success, 1 usage error, 2 invalid input (parse, validation,
// missing data, degenerate totals, I/O), 3 configuration conflict,
// 4 internal error. Results go to stdout, diagnostics to stderr.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "schoolmerge/schoolmerge.h"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

enum Exit { kOk = 0, kUsage = 1, kInput = 2, kConfig = 3, kInternal = 4 };

struct Failure {
  int code;
};

int exit_code(sm_status s) {
  switch (s) {
    case SM_OK: return kOk;
    case SM_ERR_CONFIG: return kConfig;
    case SM_ERR_INTERNAL: return kInternal;
    case SM_ERR_ARGUMENT: return kInternal;
    default: return kInput;
  }
}

void check(sm_status s) {
  if (s == SM_OK) return;
  std::cerr << "error: " << sm_last_error() << '\n';
  if (s == SM_ERR_CONFIG && *sm_last_error_detail()) std::cerr << "constraint: " << sm_last_error_detail() << '\n';
  throw Failure{exit_code(s)};
}

// Owns a string returned by the library.
struct Owned {
  char* p = nullptr;
  ~Owned() { sm_string_free(p); }
  std::string str() const { return p ? p : ""; }
  json parse() const { return json::parse(str()); }
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    std::cerr << "error: cannot open '" << path << "'\n";
    throw Failure{kInput};
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary);
  if (!out || !(out << text)) {
    std::cerr << "error: cannot write '" << path.string() << "'\n";
    throw Failure{kInput};
  }
}

json read_json_file(const std::string& path, const char* what) {
  try {
    return json::parse(read_file(path));
  } catch (const json::exception& e) {
    std::cerr << "error: " << what << " '" << path << "' is not valid JSON: " << e.what() << '\n';
    throw Failure{kInput};
  }
}

class Instance {
 public:
  explicit Instance(const std::string& path) { check(sm_instance_load(path.c_str(), &h_)); }
  ~Instance() { sm_instance_free(h_); }
  Instance(const Instance&) = delete;
  Instance& operator=(const Instance&) = delete;
  sm_instance* get() const { return h_; }

 private:
  sm_instance* h_ = nullptr;
};

void print_warnings(const Instance& inst) {
  Owned s;
  check(sm_instance_summary(inst.get(), &s.p));
  for (const auto& w : s.parse()["warnings"]) std::cerr << "warning: " << w.get<std::string>() << '\n';
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

struct SolveFlags {
  std::string config_file;
  std::optional<double> p_min;
  bool no_triples = false;
  std::optional<double> time_limit;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> forbid;
  std::vector<std::string> require;
  std::optional<std::string> objective;
  std::vector<std::string> focal_groups;
  bool interdistrict = false;

  void add(CLI::App* app) {
    app->add_option("--config", config_file, "JSON solve config; flags override its keys")->check(CLI::ExistingFile);
    app->add_option("--p-min", p_min, "Minimum post-merger enrollment as a share of current");
    app->add_flag("--no-triples", no_triples, "Only consider pairs");
    app->add_option("--time-limit", time_limit, "Solver time limit in seconds")->check(CLI::PositiveNumber);
    app->add_option("--seed", seed, "Random seed for local search restarts");
    app->add_option("--forbid", forbid, "Never merge schools a,b (repeatable)")->take_all();
    app->add_option("--require", require, "Always merge schools a,b (repeatable)")->take_all();
    auto* obj = app->add_option("--objective", objective, "Group dichotomy")
                    ->check(CLI::IsMember({"white-vs-poc", "bhwa"}));
    app->add_option("--focal-groups", focal_groups, "Explicit focal group labels")->excludes(obj);
    app->add_flag("--interdistrict", interdistrict, "Allow clusters across district ids");
  }

  json config() const {
    json cfg = config_file.empty() ? json::object() : read_json_file(config_file, "config");
    if (!cfg.is_object()) {
      std::cerr << "error: config file must hold a JSON object\n";
      throw Failure{kConfig};
    }
    if (p_min) cfg["p_min"] = *p_min;
    if (no_triples) cfg["allow_triples"] = false;
    if (time_limit) cfg["time_limit_s"] = *time_limit;
    if (seed) cfg["seed"] = *seed;
    if (!forbid.empty()) cfg["forbid"] = forbid;
    if (!require.empty()) cfg["require"] = require;
    if (objective) {
      cfg.erase("focal_groups");
      cfg["objective"] = *objective;
    }
    if (!focal_groups.empty()) {
      cfg.erase("objective");
      cfg["focal_groups"] = focal_groups;
    }
    if (interdistrict) cfg["interdistrict"] = true;
    return cfg;
  }
};

int cmd_validate(const std::string& path) {
  Instance inst(path);
  print_warnings(inst);
  Owned s;
  check(sm_instance_summary(inst.get(), &s.p));
  const auto j = s.parse();
  std::cout << "valid: " << j["name"].get<std::string>() << ", " << j["schools"] << " schools, " << j["edges"]
            << " adjacencies, D " << fixed(j["baseline_d"].get<double>(), 3);
  if (j["gearys_c"].is_number()) std::cout << ", C " << fixed(j["gearys_c"].get<double>(), 3);
  std::cout << '\n';
  return kOk;
}

int cmd_solve(const std::string& path, const SolveFlags& flags, const std::string& out_dir) {
  Instance inst(path);
  print_warnings(inst);
  const auto cfg = flags.config();
  sm_result* raw = nullptr;
  check(sm_solve(inst.get(), cfg.dump().c_str(), &raw));
  std::unique_ptr<sm_result, decltype(&sm_result_free)> result(raw, &sm_result_free);
  Owned plan, summary;
  check(sm_result_plan(result.get(), 1, &plan.p));
  check(sm_result_summary(result.get(), &summary.p));
  const auto s = summary.parse();
  const auto file = fs::path(out_dir) / (fs::path(path).stem().string() + ".plan.json");
  write_file(file, plan.str() + "\n");
  const auto status = s["status"].get<std::string>();
  if (status == "infeasible") std::cerr << "warning: required pairs cannot be satisfied; identity plan written\n";
  std::cout << "D " << fixed(s["d_before"].get<double>(), 3) << " → " << fixed(s["d_after"].get<double>(), 3)
            << " (" << status << "), " << s["switchers"] << " switchers, " << s["merged_clusters"]
            << " merged clusters, " << fixed(s["wall_time_s"].get<double>(), 3) << " s\n";
  std::cout << "plan: " << file.string() << '\n';
  return status == "infeasible" ? kConfig : kOk;
}

int cmd_impact(const std::string& plan_path, const std::string& instance_path, const std::string& blocks,
               const std::string& travel, const std::string& opt_out, const std::string& out_dir) {
  Instance inst(instance_path);
  print_warnings(inst);
  json opts = json::object();
  if (!blocks.empty()) {
    opts["blocks"] = blocks;
    opts["travel"] = travel;
  }
  if (!opt_out.empty()) opts["opt_out_ratios"] = read_json_file(opt_out, "opt-out ratios");
  const auto plan = read_file(plan_path);
  Owned out;
  const auto st = sm_impact(inst.get(), plan.c_str(), opts.dump().c_str(), &out.p);
  if (st == SM_ERR_MISSING_DATA) {
    std::cerr << "error: " << sm_last_error() << '\n';
    for (const auto& item : json::parse(sm_last_error_detail())) std::cerr << "missing: " << item.get<std::string>() << '\n';
    return kInput;
  }
  check(st);
  const auto j = out.parse();
  const auto& r = j["report"];
  const fs::path dir(out_dir);
  write_file(dir / "impact.json", r.dump(2) + "\n");
  write_file(dir / "impact.csv", j["summary_csv"].get<std::string>());
  if (j["block_flows_csv"].is_string()) write_file(dir / "block_flows.csv", j["block_flows_csv"].get<std::string>());
  for (const auto& d : r["diagnostics"]) std::cerr << "note: " << d.get<std::string>() << '\n';

  std::cout << r["switchers"] << " switchers (" << fixed(100.0 * r["switcher_share"].get<double>(), 1) << "%)";
  if (r["travel"].is_object() && r["travel"]["mean_delta"].is_number()) {
    const double dt = r["travel"]["mean_delta"].get<double>();
    std::cout << ", mean ΔT " << (dt >= 0 ? "+" : "") << fixed(dt, 2) << " min";
  }
  std::cout << ", D " << fixed(r["d_before"].get<double>(), 3) << " → " << fixed(r["d_after"].get<double>(), 3);
  if (r["opt_out"].is_object()) std::cout << " (opt-out adjusted " << fixed(r["opt_out"]["d_after"].get<double>(), 3) << ")";
  std::cout << '\n';
  return kOk;
}

int cmd_sweep(const std::string& spec, std::size_t workers, const std::string& out_dir) {
  Owned out;
  check(sm_sweep(spec.c_str(), workers, out_dir.c_str(), &out.p));
  const auto j = out.parse();
  for (const auto& e : j["errors"]) {
    std::cerr << "cell " << e["cell"].get<std::string>() << " failed: " << e["error"].get<std::string>() << '\n';
  }
  std::cout << j["cells"] << " cells (" << j["failed"] << " failed), summary: " << j["summary_csv"].get<std::string>()
            << '\n';
  return kOk;
}

int cmd_correlate(const std::string& summary, const std::string& out_file) {
  const auto text = read_file(summary);
  Owned out;
  check(sm_correlate(text.c_str(), &out.p));
  const auto j = out.parse();
  for (const auto& g : j) {
    if (g.contains("error")) std::cerr << "note: p_min " << g["p_min"] << " " << g["objective"].get<std::string>()
                                       << ": " << g["error"].get<std::string>() << '\n';
  }
  if (out_file.empty()) {
    std::cout << j.dump(2) << '\n';
  } else {
    write_file(out_file, j.dump(2) + "\n");
    std::cout << "correlations: " << out_file << '\n';
  }
  return kOk;
}

int cmd_crossover(const std::string& summary, const std::string& redistricting, std::optional<double> p_min,
                  std::optional<std::string> objective, const std::string& out_file) {
  const auto a = read_file(summary);
  const auto b = read_file(redistricting);
  json filter = json::object();
  if (p_min) filter["p_min"] = *p_min;
  if (objective) filter["objective"] = *objective;
  Owned out;
  check(sm_crossover(a.c_str(), b.c_str(), filter.dump().c_str(), &out.p));
  const auto j = out.parse();
  for (const auto& w : j["warnings"]) std::cerr << "warning: " << w.get<std::string>() << '\n';
  if (out_file.empty()) {
    std::cout << j["csv"].get<std::string>();
  } else {
    write_file(out_file, j["csv"].get<std::string>());
    std::cout << j["records"].size() << " districts joined: " << out_file << '\n';
  }
  return kOk;
}

int cmd_serve(const std::string& data_dir, const std::string& host, int port, std::size_t workers) {
  sm_server* raw = nullptr;
  check(sm_server_create(data_dir.c_str(), workers, &raw));
  std::unique_ptr<sm_server, decltype(&sm_server_free)> server(raw, &sm_server_free);
  int bound = 0;
  check(sm_server_bind(server.get(), host.c_str(), port, &bound));
  std::cout << "listening on http://" << host << ":" << bound << std::endl;
  check(sm_server_run(server.get()));
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Segregation-minimizing school mergers"};
  app.require_subcommand(1);
  app.set_version_flag("--version", sm_version());

  std::string instance, plan, spec, summary, redistricting, blocks, travel, opt_out, out_dir = ".", out_file;
  std::string data_dir = "data", host = "127.0.0.1";
  std::size_t workers = 0;
  int port = 8080;
  std::optional<double> filter_p_min;
  std::optional<std::string> filter_objective;
  SolveFlags solve_flags;

  auto* validate = app.add_subcommand("validate", "Check an instance file");
  validate->add_option("instance", instance)->required();

  auto* solve = app.add_subcommand("solve", "Find a segregation-minimizing merger plan");
  solve->add_option("instance", instance)->required();
  solve_flags.add(solve);
  solve->add_option("--out", out_dir, "Directory for the plan file");

  auto* impact = app.add_subcommand("impact", "Switchers, travel and enrollment impacts of a plan");
  impact->add_option("plan", plan)->required()->check(CLI::ExistingFile);
  impact->add_option("instance", instance)->required();
  auto* b = impact->add_option("--blocks", blocks, "Block weights CSV")->check(CLI::ExistingFile);
  auto* t = impact->add_option("--travel", travel, "Travel time CSV")->check(CLI::ExistingFile);
  b->needs(t);
  t->needs(b);
  impact->add_option("--opt-out-ratios", opt_out, "JSON map of group to opt-out ratio")->check(CLI::ExistingFile);
  impact->add_option("--out", out_dir, "Output directory");

  auto* sweep = app.add_subcommand("sweep", "Run a scenario batch");
  sweep->add_option("spec", spec)->required()->check(CLI::ExistingFile);
  sweep->add_option("--workers", workers, "Concurrent cells (default: from spec)");
  sweep->add_option("--out", out_dir, "Output directory");

  auto* correlate = app.add_subcommand("correlate", "Cross-district correlations from a sweep summary");
  correlate->add_option("summary", summary)->required()->check(CLI::ExistingFile);
  correlate->add_option("--out", out_file, "Write JSON here instead of stdout");

  auto* crossover = app.add_subcommand("crossover", "Join merger results with redistricting results");
  crossover->add_option("summary", summary)->required()->check(CLI::ExistingFile);
  crossover->add_option("redistricting", redistricting)->required()->check(CLI::ExistingFile);
  crossover->add_option("--p-min", filter_p_min, "Use only rows with this p_min");
  crossover->add_option("--objective", filter_objective, "Use only rows with this objective");
  crossover->add_option("--out", out_file, "Write CSV here instead of stdout");

  auto* serve = app.add_subcommand("serve", "Run the HTTP service");
  serve->add_option("--port", port, "Port (0 picks a free one)")->check(CLI::Range(0, 65535));
  serve->add_option("--host", host, "Bind address");
  serve->add_option("--data-dir", data_dir, "Instances and job store");
  serve->add_option("--workers", workers, "Concurrent solver jobs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  try {
    if (*validate) return cmd_validate(instance);
    if (*solve) return cmd_solve(instance, solve_flags, out_dir);
    if (*impact) return cmd_impact(plan, instance, blocks, travel, opt_out, out_dir);
    if (*sweep) return cmd_sweep(spec, workers, out_dir);
    if (*correlate) return cmd_correlate(summary, out_file);
    if (*crossover) return cmd_crossover(summary, redistricting, filter_p_min, filter_objective, out_file);
    if (*serve) return cmd_serve(data_dir, host, port, workers ? workers : 1);
  } catch (const Failure& f) {
    return f.code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInternal;
  }
  return kUsage;
}
