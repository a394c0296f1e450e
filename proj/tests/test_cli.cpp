// Drives the installed command-line binary as a subprocess.

#include "doctest.h"

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include "json.hpp"
#include "support/rank_oracle.hpp"
#include "tables.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string fixture(const std::string& name) { return (fs::path(SM_FIXTURES_DIR) / name).string(); }

std::string slurp(const fs::path& path) {
  std::ifstream in(path);
  return {std::istreambuf_iterator<char>(in), {}};
}

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

struct Sandbox {
  fs::path dir;
  Sandbox() {
    std::random_device rd;
    dir = fs::temp_directory_path() / ("sm-cli-" + std::to_string(rd()) + std::to_string(rd()));
    fs::create_directories(dir);
  }
  ~Sandbox() {
    std::error_code ec;
    fs::remove_all(dir, ec);
  }

  Run run(const std::string& args) const {
    const auto err_file = dir / "stderr.txt";
    const std::string cmd = std::string("'") + SM_CLI_PATH + "' " + args + " 2>'" + err_file.string() + "'";
    Run r;
    FILE* p = popen(cmd.c_str(), "r");
    REQUIRE(p);
    char buf[4096];
    std::size_t n;
    while ((n = fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
    const int status = pclose(p);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.err = slurp(err_file);
    return r;
  }
};

std::string q(const std::string& s) { return "'" + s + "'"; }

}  // namespace

TEST_CASE("validate") {
  Sandbox sb;
  const auto r = sb.run("validate " + q(fixture("four_schools.json")));
  CHECK(r.code == 0);
  CHECK(r.out.rfind("valid: four_schools, 4 schools, 3 adjacencies", 0) == 0);
  CHECK(sb.run("validate " + q(fixture("degenerate.json"))).code == 2);
}

TEST_CASE("solve") {
  Sandbox sb;
  const auto out = q(sb.dir.string());
  SUBCASE("pair fixture") {
    const auto r = sb.run("solve " + q(fixture("pair.json")) + " --p-min 0.8 --seed 7 --out " + out);
    CHECK(r.code == 0);
    CHECK(r.out.find("D 1.000 → 0.000 (optimal)") != std::string::npos);
    CHECK(r.err.empty());
    const auto plan = json::parse(slurp(sb.dir / "pair.plan.json"));
    CHECK(plan["d_after"] == 0.0);
    // the config echo reproduces the run
    CHECK(plan["config"]["p_min"] == 0.8);
    CHECK(plan["config"]["seed"] == 7);
  }
  SUBCASE("forbidding the only edge keeps the identity plan") {
    const auto r = sb.run("solve " + q(fixture("pair.json")) + " --forbid A,B --out " + out);
    CHECK(r.code == 0);
    CHECK(r.out.find("D 1.000 → 1.000") != std::string::npos);
    const auto plan = json::parse(slurp(sb.dir / "pair.plan.json"));
    CHECK(plan["d_after"] == plan["d_before"]);
    CHECK(plan["clusters"].size() == 2);
  }
  SUBCASE("flags override the config file") {
    std::ofstream(sb.dir / "cfg.json") << R"({"p_min": 0.0, "seed": 3})";
    const auto r = sb.run("solve " + q(fixture("pair.json")) + " --config " + q((sb.dir / "cfg.json").string()) +
                          " --p-min 0.5 --out " + out);
    CHECK(r.code == 0);
    const auto plan = json::parse(slurp(sb.dir / "pair.plan.json"));
    CHECK(plan["config"]["p_min"] == 0.5);
    CHECK(plan["config"]["seed"] == 3);
  }
  SUBCASE("errors") {
    CHECK(sb.run("solve " + q((sb.dir / "missing.json").string())).code == 2);
    const auto adj = sb.run("solve " + q(fixture("path3.json")) + " --require A,C --out " + out);
    CHECK(adj.code == 3);
    CHECK(adj.err.find("required_pair_adjacent") != std::string::npos);
    CHECK(adj.out.empty());
    CHECK(sb.run("solve " + q(fixture("pair.json")) + " --p-min 1.5 --out " + out).code == 3);
    CHECK(sb.run("solve " + q(fixture("pair.json")) + " --no-such-flag").code == 1);
    CHECK(sb.run("solve " + q(fixture("pair.json")) + " --objective bhwa --focal-groups white").code == 1);
    CHECK(sb.run("frobnicate").code == 1);
  }
}

TEST_CASE("impact") {
  Sandbox sb;
  const auto out = q(sb.dir.string());
  const auto inst = q(fixture("abc_xyz.json"));
  SUBCASE("identity plan") {
    const auto r = sb.run("impact " + q(fixture("abc_xyz.identity.plan.json")) + " " + inst + " --out " + out);
    CHECK(r.code == 0);
    CHECK(r.out.rfind("0 switchers", 0) == 0);
  }
  SUBCASE("worked apportionment example") {
    const auto r = sb.run("impact " + q(fixture("abc_xyz.plan.json")) + " " + inst + " --blocks " +
                          q(fixture("abc_xyz.blocks.csv")) + " --travel " + q(fixture("abc_xyz.travel.csv")) +
                          " --out " + out);
    REQUIRE(r.code == 0);
    const auto flows = schoolmerge::csv::parse(slurp(sb.dir / "block_flows.csv"));
    const auto block = flows.require_column("block_id");
    const auto count = flows.require_column("count");
    std::map<std::string, std::string> got;
    for (const auto& row : flows.rows) got[row[block]] = row[count];
    CHECK(got["b1"] == "12");
    CHECK(got["b2"] == "10");
    CHECK(got["b3"] == "6");
    CHECK(got["b4"] == "16");
    CHECK(fs::exists(sb.dir / "impact.json"));
    CHECK(fs::exists(sb.dir / "impact.csv"));
  }
  SUBCASE("missing travel pair") {
    const auto r = sb.run("impact " + q(fixture("abc_xyz.plan.json")) + " " + inst + " --blocks " +
                          q(fixture("abc_xyz.blocks.csv")) + " --travel " +
                          q(fixture("abc_xyz.travel_missing.csv")) + " --out " + out);
    CHECK(r.code == 2);
    CHECK(r.err.find("missing: b3 -> XYZ") != std::string::npos);
  }
  SUBCASE("blocks need travel") {
    CHECK(sb.run("impact " + q(fixture("abc_xyz.plan.json")) + " " + inst + " --blocks " +
                 q(fixture("abc_xyz.blocks.csv")))
              .code == 1);
  }
}

TEST_CASE("sweep, correlate and crossover") {
  Sandbox sb;
  SUBCASE("p_min sweep gives a non-increasing d_after column") {
    const auto r = sb.run("sweep " + q(fixture("sweep_small.json")) + " --out " + q(sb.dir.string()));
    REQUIRE(r.code == 0);
    const auto t = schoolmerge::csv::parse(slurp(sb.dir / "summary.csv"));
    const auto d = t.require_column("d_after");
    REQUIRE(t.rows.size() == 9);
    for (std::size_t i = 0; i < 9; i += 3) {
      CHECK(std::stod(t.rows[i + 1][d]) <= std::stod(t.rows[i][d]));
      CHECK(std::stod(t.rows[i + 2][d]) <= std::stod(t.rows[i + 1][d]));
    }
  }
  SUBCASE("correlate and crossover over the synthetic districts") {
    json travel = json::object();
    json names = json::array();
    for (int i = 1; i <= 5; ++i) {
      const std::string n = "synth_" + std::to_string(i);
      names.push_back(fixture(n + ".json"));
      travel[n] = {{"blocks", fixture(n + ".blocks.csv")}, {"travel", fixture(n + ".travel.csv")}};
    }
    std::ofstream(sb.dir / "spec.json") << json{{"instances", names}, {"travel", travel}}.dump();
    const auto outdir = sb.dir / "out";
    REQUIRE(sb.run("sweep " + q((sb.dir / "spec.json").string()) + " --workers 3 --out " + q(outdir.string())).code ==
            0);
    const auto summary = (outdir / "summary.csv").string();

    const auto c = sb.run("correlate " + q(summary));
    REQUIRE(c.code == 0);
    const auto j = json::parse(c.out);
    REQUIRE(j.size() == 1);
    const auto& rep = j[0]["report"]["gearys_c_vs_delta_d"];
    CHECK(rep["ols_slope"].is_number());
    const auto t = schoolmerge::csv::parse(slurp(summary));
    std::vector<double> x, y;
    for (const auto& row : t.rows) {
      x.push_back(std::stod(row[t.require_column("gearys_c")]));
      y.push_back(std::stod(row[t.require_column("delta_d_relative")]));
    }
    CHECK(rep["spearman_rho"].get<double>() == doctest::Approx(testing_support::spearman_oracle(x, y)));

    const auto x2 = sb.run("crossover " + q(summary) + " " + q(fixture("redistricting.csv")));
    CHECK(x2.code == 0);
    CHECK(std::count(x2.out.begin(), x2.out.end(), '\n') == 3);  // header + 2 districts
    CHECK(x2.out.find("\nsynth_2,") != std::string::npos);
    CHECK(x2.out.find("\nsynth_4,") != std::string::npos);
    CHECK(x2.err.find("no redistricting results") != std::string::npos);
  }
}
