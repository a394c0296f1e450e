#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "scenario.hpp"
#include "tables.hpp"
#include "support/brute_force.hpp"
#include "support/random_instance.hpp"
#include "support/rank_oracle.hpp"

using namespace schoolmerge;
using namespace schoolmerge::scenario;
using nlohmann::json;
using testing_support::fixture;
using testing_support::load_fixture;

namespace {

ScenarioSpec spec_of(const json& doc) { return spec_from_json(doc, SM_FIXTURES_DIR); }

DistrictMetrics row(std::string d, double delta, std::optional<double> dt, std::optional<double> c) {
  DistrictMetrics m;
  m.district = std::move(d);
  m.p_min = 0.8;
  m.objective = "default";
  m.d_before = 0.5;
  m.d_after = 0.5 * (1 + delta);
  m.delta_d_relative = delta;
  m.delta_t = dt;
  m.gearys_c = c;
  return m;
}

}  // namespace

TEST_CASE("cell cardinality") {
  const auto batch = run_scenarios(spec_of({{"instances", {"pair.json", "path3.json", "k3.json"}},
                                            {"sweep", {{"p_min", {0.8}}}}}));
  REQUIRE(batch.cells.size() == 3);
  for (const auto& c : batch.cells) CHECK(c.error.empty());
  const auto full = load_spec(fixture("sweep.json"));
  CHECK(full.instances.size() == 8);
  CHECK(full.p_min_values.size() == 3);
  CHECK(full.objectives.size() == 2);
}

TEST_CASE("p_min sweep is non-increasing") {
  const auto batch = run_scenarios(spec_of({{"instances", {"four_schools.json", "synth_1.json", "synth_5.json"}},
                                            {"sweep", {{"p_min", {0.8, 0.5, 0.0}}}},
                                            {"workers", 2}}));
  REQUIRE(batch.cells.size() == 9);
  for (std::size_t i = 0; i < batch.cells.size(); i += 3) {
    const auto& c = batch.cells;
    REQUIRE(c[i].result);
    REQUIRE(c[i + 2].result);
    CHECK(c[i].result->status == solver::SolveStatus::optimal);
    CHECK(c[i + 1].result->d_after <= c[i].result->d_after);
    CHECK(c[i + 2].result->d_after <= c[i + 1].result->d_after);
  }
  // and on the 4-school fixture the exhaustive optimum agrees at every level
  const auto inst = load_fixture("four_schools.json");
  for (std::size_t j = 0; j < 3; ++j) {
    oracle::Options opt;
    opt.p_min = batch.cells[j].p_min;
    CHECK(batch.cells[j].result->d_after == doctest::Approx(oracle::brute_force(inst, opt).d).epsilon(1e-9));
  }
}

TEST_CASE("per-cell failures do not abort the batch") {
  const auto batch = run_scenarios(spec_of({{"instances", {"pair.json", "no_such_file.json", "degenerate.json"}}}));
  REQUIRE(batch.cells.size() == 3);
  CHECK(batch.cells[0].error.empty());
  CHECK_FALSE(batch.cells[1].error.empty());
  CHECK_FALSE(batch.cells[2].error.empty());
  const auto csv_text = summary_csv(batch);
  CHECK(std::count(csv_text.begin(), csv_text.end(), '\n') == 4);
  CHECK(csv_text.find(",error,") != std::string::npos);
}

TEST_CASE("spec validation") {
  CHECK_THROWS_AS(spec_of({{"instances", json::array()}}), ParseError);
  CHECK_THROWS_AS(spec_of({{"instances", {"pair.json"}}, {"sweep", {{"p_min", {1.5}}}}}), ConfigError);
  CHECK_THROWS_AS(load_spec(fixture("nope.json")), ParseError);
}

TEST_CASE("fusing two districts") {
  const auto c = load_fixture("district_c.json");
  const auto d = load_fixture("district_d.json");
  SUBCASE("construction conserves schools and enrollment") {
    const auto f = fuse_districts({c, d}, {{"C3", "D1"}}, "c_plus_d");
    CHECK(f.size() == 6);
    CHECK(f.edges().size() == 5);
    CHECK(f.district_totals().total == c.district_totals().total + d.district_totals().total);
    CHECK(f.district_totals().focal == c.district_totals().focal + d.district_totals().focal);
    CHECK(f.district_ids().size() == 2);
  }
  SUBCASE("without cross edges nothing spans the border") {
    const auto f = fuse_districts({c, d}, {}, "apart");
    solver::SolveConfig cfg;
    cfg.interdistrict = true;
    const auto r = solver::solve(f, cfg);
    for (const auto& cl : r.plan.clusters) {
      std::set<std::string> ds;
      for (auto m : cl.members) ds.insert(f.school(m).district_id);
      CHECK(ds.size() == 1);
    }
  }
  SUBCASE("the border pair lowers union D, matching the exhaustive optimum") {
    const auto f = fuse_districts({c, d}, {{"C3", "D1"}}, "c_plus_d");
    solver::SolveConfig within;
    const auto r0 = solver::solve(f, within);
    solver::SolveConfig across;
    across.interdistrict = true;
    const auto r1 = solver::solve(f, across);
    CHECK(r1.d_after < r0.d_after);
    oracle::Options opt;
    opt.interdistrict = true;
    CHECK(r1.d_after == doctest::Approx(oracle::brute_force(f, opt).d).epsilon(1e-9));
  }
  SUBCASE("mismatched grade domains") {
    const auto three = load_fixture("three_school.json");
    CHECK_THROWS_AS(fuse_districts({c, three}, {}, "bad"), ValidationError);
  }
}

TEST_CASE("fused cells report union and own-district rows") {
  json fusion = {{"name", "c_plus_d"},
                 {"instances", {"district_c.json", "district_d.json"}},
                 {"cross_adjacency", json::array({json::array({"C3", "D1"})})}};
  const auto batch =
      run_scenarios(spec_of({{"interdistrict", json::array({fusion})}, {"sweep", {{"p_min", {0.8}}}}}));
  REQUIRE(batch.cells.size() == 1);
  const auto& cell = batch.cells[0];
  REQUIRE(cell.error.empty());
  CHECK(cell.fused);
  CHECK(cell.config.interdistrict);
  REQUIRE(cell.own.size() == 2);
  CHECK(cell.own[0].district == "C");
  CHECK(cell.own[1].district == "D");
  const auto csv_text = summary_csv(batch);
  CHECK(csv_text.find(",union,") != std::string::npos);
  CHECK(csv_text.find(",own:C,") != std::string::npos);
  CHECK(csv_text.find(",own:D,") != std::string::npos);
}

TEST_CASE("batch determinism across worker counts") {
  const auto spec = load_spec(fixture("sweep_small.json"));
  const auto a = summary_csv(run_scenarios(spec, 1));
  const auto b = summary_csv(run_scenarios(spec, 3));
  const auto c = summary_csv(run_scenarios(spec, 3));
  CHECK(a == b);
  CHECK(b == c);
}

TEST_CASE("correlation report") {
  SUBCASE("perfectly monotone data gives rho = -1") {
    std::vector<DistrictMetrics> rows;
    for (int i = 0; i < 5; ++i) rows.push_back(row("d" + std::to_string(i), -0.1 * i, 1.0 + i, 0.2 * i));
    const auto j = correlation_report(rows);
    CHECK(j["gearys_c_vs_delta_d"]["spearman_rho"].get<double>() == doctest::Approx(-1.0));
    CHECK(j["gearys_c_vs_delta_d"]["ols_slope"].get<double>() == doctest::Approx(-0.5));
    CHECK(j["delta_t_vs_delta_d"]["spearman_rho"].get<double>() == doctest::Approx(-1.0));
    CHECK(j["median_delta_d_relative"].get<double>() == doctest::Approx(-0.2));
  }
  SUBCASE("constant change in D is flagged") {
    std::vector<DistrictMetrics> rows;
    for (int i = 0; i < 4; ++i) rows.push_back(row("d" + std::to_string(i), -0.2, 1.0 + i, 0.1 * i));
    const auto j = correlation_report(rows);
    CHECK(j["gearys_c_vs_delta_d"]["spearman_rho"].is_null());
    CHECK(j["gearys_c_vs_delta_d"]["flag"] == "zero rank variance");
  }
  SUBCASE("fewer than three districts") {
    CHECK_THROWS_AS(correlation_report({row("a", -0.1, 1, 1), row("b", -0.2, 2, 2)}), InsufficientDataError);
  }
  SUBCASE("lower median for even counts") {
    std::vector<DistrictMetrics> rows;
    for (int i = 0; i < 4; ++i) rows.push_back(row("d" + std::to_string(i), -0.1 * (i + 1), std::nullopt, 1.0 + i));
    CHECK(correlation_report(rows)["median_delta_d_relative"].get<double>() == doctest::Approx(-0.3));
  }
}

TEST_CASE("correlation over the synthetic districts matches an independent rank correlation") {
  json travel = json::object();
  json names = json::array();
  for (int d = 1; d <= 5; ++d) {
    const std::string n = "synth_" + std::to_string(d);
    names.push_back(n + ".json");
    travel[n] = {{"blocks", n + ".blocks.csv"}, {"travel", n + ".travel.csv"}};
  }
  const auto batch = run_scenarios(spec_of({{"instances", names}, {"travel", travel}, {"workers", 2}}));
  const auto rows = district_metrics(batch);
  REQUIRE(rows.size() == 5);
  std::vector<double> c, dd, dt, ddt;
  for (const auto& m : rows) {
    REQUIRE(m.gearys_c);
    REQUIRE(m.delta_t);
    c.push_back(*m.gearys_c);
    dd.push_back(m.delta_d_relative);
    dt.push_back(*m.delta_t);
  }
  const auto j = correlation_report(rows);
  CHECK(j["gearys_c_vs_delta_d"]["spearman_rho"].get<double>() == doctest::Approx(testing_support::spearman_oracle(c, dd)));
  CHECK(j["delta_t_vs_delta_d"]["spearman_rho"].get<double>() == doctest::Approx(testing_support::spearman_oracle(dt, dd)));
  // the summary CSV round trip feeds the same numbers back
  const auto again = district_metrics_from_summary(summary_csv(batch));
  REQUIRE(again.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) CHECK(again[i].delta_d_relative == doctest::Approx(rows[i].delta_d_relative));
}

TEST_CASE("crossover table") {
  const auto redistricting = redistricting_from_csv(csv::read_text(fixture("redistricting.csv")));
  REQUIRE(redistricting.size() == 3);
  SUBCASE("two matched districts with hand ratios") {
    const auto t = crossover_table({row("synth_2", -0.3, 2.0, 0.9), row("synth_4", -0.4, 0.0, 0.5),
                                    row("synth_1", -0.1, 1.0, 0.7)},
                                   redistricting);
    REQUIRE(t.records.size() == 2);
    CHECK(t.records[0].district == "synth_2");
    CHECK(*t.records[0].mergers_ratio == doctest::Approx(-0.15));
    CHECK(*t.records[0].redistricting_ratio == doctest::Approx(-0.12 / 8.5));
    // zero travel change: flagged, no ratio
    CHECK_FALSE(t.records[1].mergers_ratio);
    CHECK(t.records[1].flags == std::vector<std::string>{"zero travel change"});
    CHECK(*t.records[1].redistricting_ratio == doctest::Approx(-0.2 / 11.0));
    CHECK(t.unmatched_redistricting == std::vector<std::string>{"elsewhere"});
    CHECK(t.unmatched_mergers == std::vector<std::string>{"synth_1"});
    const auto text = crossover_csv(t);
    CHECK(std::count(text.begin(), text.end(), '\n') == 3);
  }
  SUBCASE("no overlap gives an empty table and a warning") {
    const auto t = crossover_table({row("x", -0.1, 1, 1)}, redistricting);
    CHECK(t.records.empty());
    CHECK_FALSE(t.warnings.empty());
  }
  SUBCASE("a district listed twice is ambiguous") {
    CHECK_THROWS_AS(crossover_table({row("synth_2", -0.1, 1, 1), row("synth_2", -0.2, 1, 1)}, redistricting),
                    ConfigError);
  }
}
