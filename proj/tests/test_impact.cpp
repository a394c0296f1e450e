#include "doctest.h"

#include <fstream>
#include <numeric>

#include "impact.hpp"
#include "plan_io.hpp"
#include "support/brute_force.hpp"
#include "support/random_instance.hpp"

using namespace schoolmerge;
using namespace schoolmerge::impact;
using schoolmerge::solver::Cluster;
using schoolmerge::solver::GradeSpan;
using schoolmerge::solver::MergerPlan;
using testing_support::fixture;
using testing_support::load_fixture;

namespace {

GradeSpan span(std::size_t a, std::size_t b) { return GradeSpan{GradeLevel{a}, GradeLevel{b}}; }

MergerPlan load_plan(const std::string& name, const DistrictInstance& inst) {
  std::ifstream in(fixture(name));
  return plan_from_json(nlohmann::json::parse(in), inst).plan;
}

// A K-2, B 3-5
MergerPlan pair_split() {
  MergerPlan p;
  p.clusters.push_back(Cluster{{0, 1}, {span(0, 2), span(3, 5)}});
  return p;
}

Count sum_flows(const std::vector<Flow>& flows) {
  return std::accumulate(flows.begin(), flows.end(), Count{0}, [](Count a, const Flow& f) { return a + f.count; });
}

}  // namespace

TEST_CASE("switchers") {
  const auto inst = load_fixture("pair.json");
  SUBCASE("identity plan moves nobody") {
    CHECK(switchers(solver::identity_plan(inst), inst).empty());
  }
  SUBCASE("A K-2 / B 3-5") {
    const auto flows = switchers(pair_split(), inst);
    for (const auto& f : flows) {
      if (f.from == 0) {
        CHECK(f.to == 1);
        CHECK(f.grade >= 3);
      } else {
        CHECK(f.to == 0);
        CHECK(f.grade <= 2);
      }
    }
    // 20 per grade and school, three grades each way
    Count a_to_b = 0, b_to_a = 0;
    for (const auto& f : flows) (f.from == 0 ? a_to_b : b_to_a) += f.count;
    CHECK(a_to_b == 60);
    CHECK(b_to_a == 60);
    const auto r = analyze(pair_split(), inst, inst.taxonomy());
    CHECK(r.switcher_total == 120);
    CHECK(r.students == 240);
    CHECK(r.switcher_share() == 0.5);
  }
}

TEST_CASE("the paper's apportionment example") {
  const auto inst = load_fixture("abc_xyz.json");
  const auto blocks = load_block_weights(fixture("abc_xyz.blocks.csv"), inst);
  const auto abc = *inst.index_of("ABC");
  const auto black = *inst.taxonomy().index_of("black");
  const auto parts = apportion_to_blocks(abc, black, 40, blocks, 100.0);
  REQUIRE(parts.size() == 4);
  CHECK(parts.at("b1") == 12.0);
  CHECK(parts.at("b2") == 10.0);
  CHECK(parts.at("b3") == 6.0);
  CHECK(parts.at("b4") == 16.0);
}

TEST_CASE("apportionment edge cases") {
  const auto inst = load_fixture("abc_xyz.json");
  const auto blocks = load_block_weights(fixture("abc_xyz.blocks.csv"), inst);
  const auto xyz = *inst.index_of("XYZ");
  const auto abc = *inst.index_of("ABC");
  const auto& tax = inst.taxonomy();
  SUBCASE("single block takes everything") {
    BlockWeights one{{BlockRow{"only", abc, {0, 7, 0, 0}}}};
    const auto parts = apportion_to_blocks(abc, *tax.index_of("black"), 13, one);
    CHECK(parts.at("only") == 13.0);
  }
  SUBCASE("zero switchers") {
    for (const auto& [b, v] : apportion_to_blocks(abc, *tax.index_of("black"), 0, blocks, 100.0)) CHECK(v == 0.0);
  }
  SUBCASE("without a population the weights are normalized") {
    const auto parts = apportion_to_blocks(xyz, *tax.index_of("white"), 60, blocks);
    CHECK(parts.at("y1") == doctest::Approx(35.0));
    CHECK(parts.at("y2") == doctest::Approx(25.0));
  }
  SUBCASE("no weight for the group") {
    CHECK_THROWS_AS(apportion_to_blocks(xyz, *tax.index_of("black"), 5, blocks), ZeroWeightError);
  }
}

TEST_CASE("apportionment conserves the switcher count") {
  for (int d = 1; d <= 5; ++d) {
    const std::string name = "synth_" + std::to_string(d);
    const auto inst = load_fixture(name + ".json");
    const auto blocks = load_block_weights(fixture(name + ".blocks.csv"), inst);
    for (SchoolIndex s = 0; s < inst.size(); ++s) {
      for (std::size_t k = 0; k < inst.taxonomy().size(); ++k) {
        if (inst.school(s).enrollment.group_total(k) == 0) continue;
        const double count = 17.0;
        const auto parts = apportion_to_blocks(s, k, count, blocks);
        double sum = 0;
        for (const auto& [b, v] : parts) sum += v;
        CHECK(sum == doctest::Approx(count).epsilon(1e-9));
      }
    }
  }
}

TEST_CASE("travel deltas") {
  const auto inst = load_fixture("abc_xyz.json");
  const auto blocks = load_block_weights(fixture("abc_xyz.blocks.csv"), inst);
  const auto travel = load_travel_matrix(fixture("abc_xyz.travel.csv"), inst);
  SUBCASE("identity plan flags no switchers") {
    const auto t = travel_deltas(load_plan("abc_xyz.identity.plan.json", inst), inst, blocks, travel);
    CHECK(t.no_switchers);
    CHECK(t.block_flows.empty());
    CHECK_FALSE(t.overall.mean_before);
  }
  SUBCASE("one block, 4 minutes before and 7 after") {
    BlockWeights one{{BlockRow{"b1", *inst.index_of("ABC"), {0, 100, 0, 0}},
                      BlockRow{"y1", *inst.index_of("XYZ"), {120, 0, 0, 0}}}};
    TravelMatrix m;
    m.minutes[{"b1", *inst.index_of("ABC")}] = 4;
    m.minutes[{"b1", *inst.index_of("XYZ")}] = 7;
    m.minutes[{"y1", *inst.index_of("ABC")}] = 10;
    m.minutes[{"y1", *inst.index_of("XYZ")}] = 4;
    const auto t = travel_deltas(load_plan("abc_xyz.plan.json", inst), inst, one, m);
    const auto& black = t.groups[*inst.taxonomy().index_of("black")];
    CHECK(*black.mean_before == 4.0);
    CHECK(*black.mean_after == 7.0);
  }
  SUBCASE("multi-block means by hand") {
    const auto t = travel_deltas(load_plan("abc_xyz.plan.json", inst), inst, blocks, travel);
    const auto& tax = inst.taxonomy();
    // black ABC -> XYZ: 12, 10, 6, 16 students at (4,7), (5,9), (3,6), (6,8)
    const auto& black = t.groups[*tax.index_of("black")];
    CHECK(black.switchers == doctest::Approx(44.0));
    CHECK(*black.mean_before == doctest::Approx(212.0 / 44.0));
    CHECK(*black.mean_after == doctest::Approx(338.0 / 44.0));
    // white XYZ -> ABC: 60 of 120, blocks 70/50 -> 35 and 25 at (4,10), (5,12)
    const auto& white = t.groups[*tax.index_of("white")];
    CHECK(white.switchers == doctest::Approx(60.0));
    CHECK(*white.mean_before == doctest::Approx(265.0 / 60.0));
    CHECK(*white.mean_after == doctest::Approx(650.0 / 60.0));
    CHECK(*t.overall.mean_before == doctest::Approx(477.0 / 104.0));
    CHECK(*t.overall.mean_after == doctest::Approx(988.0 / 104.0));
    CHECK_FALSE(t.groups[*tax.index_of("asian")].mean_before);
  }
  SUBCASE("missing pair is named") {
    const auto partial = load_travel_matrix(fixture("abc_xyz.travel_missing.csv"), inst);
    try {
      travel_deltas(load_plan("abc_xyz.plan.json", inst), inst, blocks, partial);
      FAIL("expected MissingDataError");
    } catch (const MissingDataError& e) {
      REQUIRE(e.missing.size() == 1);
      CHECK(e.missing[0] == "b3 -> XYZ");
    }
  }
  SUBCASE("block flow CSV carries the 12/10/6/16 split") {
    const auto t = travel_deltas(load_plan("abc_xyz.plan.json", inst), inst, blocks, travel);
    const auto text = block_flows_csv(t, inst);
    CHECK(text.find("ABC,XYZ,black,b1,12,") != std::string::npos);
    CHECK(text.find("ABC,XYZ,black,b2,10,") != std::string::npos);
    CHECK(text.find("ABC,XYZ,black,b3,6,") != std::string::npos);
    CHECK(text.find("ABC,XYZ,black,b4,16,") != std::string::npos);
  }
}

TEST_CASE("conservation and cross-module consistency") {
  for (std::uint64_t seed = 500; seed < 540; ++seed) {
    const auto inst = testing_support::random_instance(seed);
    solver::SolveConfig cfg;
    cfg.p_min = seed % 2 ? 0.5 : 0.0;
    const auto r = solver::solve(inst, cfg);
    const auto post = post_enrollments(r.plan, inst);
    Enrollment before(inst.grade_count(), inst.taxonomy().size()), after = before;
    for (SchoolIndex s = 0; s < inst.size(); ++s) {
      for (std::size_t g = 0; g < inst.grade_count(); ++g) {
        for (std::size_t k = 0; k < inst.taxonomy().size(); ++k) {
          before.at(g, k) += inst.school(s).enrollment.at(g, k);
          after.at(g, k) += post[s].at(g, k);
        }
      }
    }
    CHECK(before == after);
    for (const auto& cl : r.plan.clusters) {
      for (SchoolIndex m : cl.members) CHECK(post[m] == solver::post_merger_enrollment(cl, m, inst));
    }
    CHECK(sum_flows(switchers(r.plan, inst)) == solver::plan_switchers(r.plan, inst));
  }
}

TEST_CASE("opt-out") {
  const auto inst = load_fixture("synth_3.json");
  solver::SolveConfig cfg;
  cfg.seed = 7;
  const auto r = solver::solve(inst, cfg);
  SUBCASE("zero ratios reproduce the unadjusted D bit for bit") {
    std::map<std::string, double> zero{{"white", 0.0}, {"black", 0.0}, {"hispanic", 0.0}, {"asian", 0.0}};
    const auto rep = analyze(r.plan, inst, inst.taxonomy(), {nullptr, nullptr, &zero});
    REQUIRE(rep.opt_out);
    CHECK(rep.opt_out->d == rep.d_after);
    CHECK(rep.opt_out->d == r.d_after);
  }
  SUBCASE("ratios above 1 are clamped") {
    const auto o = apply_opt_out(r.plan, inst, inst.taxonomy(), {{"white", 3.0}});
    CHECK(o.ratios[*inst.taxonomy().index_of("white")] == 1.0);
  }
  SUBCASE("unknown group") {
    CHECK_THROWS_AS(apply_opt_out(r.plan, inst, inst.taxonomy(), {{"martian", 0.1}}), ValidationError);
  }
  SUBCASE("all ratios 1 on a fully merged pair is degenerate") {
    const auto pair = load_fixture("pair.json");
    std::map<std::string, double> all{{"white", 1}, {"black", 1}, {"hispanic", 1}, {"asian", 1}};
    CHECK_THROWS_AS(apply_opt_out(pair_split(), pair, pair.taxonomy(), all), DegenerateTotalsError);
  }
  SUBCASE("all ratios 1 leaves D over the unmerged remainder") {
    std::map<std::string, double> all{{"white", 1}, {"black", 1}, {"hispanic", 1}, {"asian", 1}};
    REQUIRE(r.plan.clusters.size() < inst.size());
    const auto o = apply_opt_out(r.plan, inst, inst.taxonomy(), all);
    std::vector<metrics::SchoolDemographics> rest;
    for (const auto& cl : r.plan.clusters) {
      if (cl.size() != 1) continue;
      const auto t = school_totals(inst.school(cl.members[0]), inst.taxonomy());
      rest.push_back({inst.school(cl.members[0]).id, double(t.total), double(t.focal)});
    }
    CHECK(o.d == doctest::Approx(metrics::dissimilarity(rest)).epsilon(1e-12));
  }
}

TEST_CASE("closure report") {
  SUBCASE("identity plan keeps every ratio at exactly 1") {
    const auto inst = load_fixture("synth_1.json");
    for (const auto& c : closure_report(solver::identity_plan(inst), inst)) {
      CHECK(c.ratio == 1.0);
      CHECK_FALSE(c.closed);
    }
  }
  SUBCASE("p_min 0.8 plans keep every school at 0.8 or more") {
    for (int d = 1; d <= 5; ++d) {
      const auto inst = load_fixture("synth_" + std::to_string(d) + ".json");
      const auto r = solver::solve(inst, {});
      for (const auto& c : closure_report(r.plan, inst)) CHECK(c.ratio >= 0.8);
    }
  }
  SUBCASE("p_min 0 optimum closes a school") {
    // one grade: the only integrating split puts everyone in one building
    GroupTaxonomy tax({"white", "black"}, {"white"});
    School a{"A", "d", Enrollment(1, 2), 100};
    a.enrollment.at(0, 0) = 30;
    School b{"B", "d", Enrollment(1, 2), 100};
    b.enrollment.at(0, 1) = 30;
    const auto inst = DistrictInstance::create("close", {"K"}, tax, {a, b}, {{"A", "B"}});
    oracle::Options opt;
    opt.p_min = 0.0;
    const auto o = oracle::brute_force(inst, opt);
    CHECK(o.d == 0.0);
    solver::SolveConfig cfg;
    cfg.p_min = 0.0;
    const auto r = solver::solve(inst, cfg);
    CHECK(r.d_after == 0.0);
    const auto closures = closure_report(r.plan, inst);
    CHECK(std::count_if(closures.begin(), closures.end(), [](const auto& c) { return c.closed; }) == 1);
    CHECK(std::count_if(closures.begin(), closures.end(), [](const auto& c) { return c.severely_reduced; }) == 1);
  }
}

TEST_CASE("report serialization") {
  const auto inst = load_fixture("abc_xyz.json");
  const auto blocks = load_block_weights(fixture("abc_xyz.blocks.csv"), inst);
  const auto travel = load_travel_matrix(fixture("abc_xyz.travel.csv"), inst);
  const auto plan = load_plan("abc_xyz.plan.json", inst);
  const auto rep = analyze(plan, inst, inst.taxonomy(), {&blocks, &travel, nullptr});
  const auto j = report_to_json(rep, inst);
  CHECK(j["switchers"] == 100);
  CHECK(j["schools"].size() == 2);
  CHECK(j["opt_out"].is_null());
  const auto csv_text = report_summary_csv(rep);
  CHECK(csv_text.rfind("group,students,switchers,switcher_pct,mean_before,mean_after,delta_minutes\n", 0) == 0);
  CHECK(csv_text.find("\noverall,") != std::string::npos);
  CHECK(*rep.mean_travel_delta() == doctest::Approx((988.0 - 477.0) / 104.0));
}
