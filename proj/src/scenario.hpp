#pragma once

// Batch orchestration: sweeps over instances x p_min x objective, fused
// inter-district runs, cross-district correlation tables and the comparison
// against externally supplied redistricting results.

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "impact.hpp"
#include "json.hpp"
#include "solver.hpp"

namespace schoolmerge::scenario {

struct FusionSpec {
  std::string name;
  std::vector<std::filesystem::path> instances;
  std::vector<std::pair<std::string, std::string>> cross_adjacency;
};

struct TravelInputs {
  std::filesystem::path blocks;
  std::filesystem::path travel;
};

// Scenario file (JSON):
//   instances      list of instance paths (relative to the scenario file)
//   config         solve config template (see config_from_json)
//   sweep          { "p_min": [...], "objective": ["default" | "white-vs-poc" | "bhwa", ...] }
//   interdistrict  [ { "name", "instances": [...], "cross_adjacency": [[a, b], ...] } ]
//   travel         { instance name: { "blocks": csv, "travel": csv } }
//   opt_out_ratios { group: ratio }
//   workers        concurrent cells
struct ScenarioSpec {
  std::vector<std::filesystem::path> instances;
  nlohmann::json config = nlohmann::json::object();
  std::vector<double> p_min_values;
  std::vector<std::string> objectives;
  std::vector<FusionSpec> interdistrict;
  std::map<std::string, TravelInputs> travel;
  std::optional<std::map<std::string, double>> opt_out_ratios;
  std::size_t workers = 1;
};

ScenarioSpec spec_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir);
ScenarioSpec load_spec(const std::filesystem::path& path);

// Union of schools; adjacency is every within-district edge plus
// `cross_adjacency`. Requires identical grade domains and taxonomies.
DistrictInstance fuse_districts(const std::vector<DistrictInstance>& instances,
                                const std::vector<std::pair<std::string, std::string>>& cross_adjacency,
                                std::string name);

// Segregation restricted to one district's own schools and totals.
struct OwnDistrictMetrics {
  std::string district;
  std::optional<double> d_before;
  std::optional<double> d_after;
};

struct Cell {
  std::string id;
  std::string instance_name;
  std::string district;
  double p_min = 0.0;
  std::string objective;
  bool fused = false;
  std::shared_ptr<const DistrictInstance> instance;
  solver::SolveConfig config;
  std::optional<solver::SolveResult> result;
  std::optional<impact::ImpactReport> impact;
  std::optional<double> gearys_c;
  std::vector<OwnDistrictMetrics> own;
  std::string error;
};

struct BatchResult {
  std::vector<Cell> cells;
};

// Per-cell failures are recorded in Cell::error and never abort the batch.
// Cell order is fixed by the spec, independent of `workers`.
BatchResult run_scenarios(const ScenarioSpec& spec, std::optional<std::size_t> workers = std::nullopt);

std::string summary_csv(const BatchResult& batch);

// One row per district and configuration, as consumed by correlation and
// crossover reports.
struct DistrictMetrics {
  std::string district;
  double p_min = 0.0;
  std::string objective;
  double d_before = 0.0;
  double d_after = 0.0;
  double delta_d_relative = 0.0;
  std::optional<double> delta_t;
  std::optional<double> gearys_c;
};

std::vector<DistrictMetrics> district_metrics(const BatchResult& batch);
std::vector<DistrictMetrics> district_metrics_from_summary(const std::string& csv_text);

struct InsufficientDataError : Error {
  using Error::Error;
};

// Spearman rho plus OLS fit of relative change in D over Geary's C and
// over the change in travel time. Needs at least three districts.
nlohmann::json correlation_report(const std::vector<DistrictMetrics>& rows);
// Groups rows by (p_min, objective) and reports each group; groups with fewer
// than three districts carry an "error" entry instead.
nlohmann::json grouped_correlations(const std::vector<DistrictMetrics>& rows);

struct RedistrictingRow {
  std::string district;
  double delta_d_relative = 0.0;
  double percent_switching = 0.0;
};

// CSV header: district_id, delta_d_relative, percent_switching.
std::vector<RedistrictingRow> redistricting_from_csv(const std::string& text);

struct CrossPolicyRecord {
  std::string district;
  double mergers_delta_d = 0.0;
  std::optional<double> mergers_delta_t;
  std::optional<double> mergers_ratio;  // delta D / delta T
  double redistricting_delta_d = 0.0;
  double percent_switching = 0.0;
  std::optional<double> redistricting_ratio;  // delta D / percent switching
  std::vector<std::string> flags;
};

struct CrossoverTable {
  std::vector<CrossPolicyRecord> records;
  std::vector<std::string> unmatched_mergers;
  std::vector<std::string> unmatched_redistricting;
  std::vector<std::string> warnings;
};

// Throws ConfigError if a district appears more than once in `mergers`.
CrossoverTable crossover_table(const std::vector<DistrictMetrics>& mergers,
                               const std::vector<RedistrictingRow>& redistricting);
std::string crossover_csv(const CrossoverTable& table);

// Writes cells/<id>.plan.json, cells/<id>.impact.json, cells/<id>.impact.csv,
// summary.csv and correlations.json under `out_dir`.
void write_outputs(const BatchResult& batch, const std::filesystem::path& out_dir);

}  // namespace schoolmerge::scenario
