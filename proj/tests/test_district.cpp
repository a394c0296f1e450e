#include "doctest.h"

#include <fstream>

#include "district.hpp"
#include "support/random_instance.hpp"

using namespace schoolmerge;
using nlohmann::json;
using testing_support::fixture;
using testing_support::load_fixture;

namespace {

json four_schools_doc() {
  std::ifstream in(fixture("four_schools.json"));
  return json::parse(in);
}

}  // namespace

TEST_CASE("four-school fixture loads with 4 schools and 3 edges") {
  const auto inst = load_fixture("four_schools.json");
  CHECK(inst.size() == 4);
  CHECK(inst.edges().size() == 3);
  CHECK(inst.grade_count() == 6);
  CHECK(inst.adjacent(*inst.index_of("S1"), *inst.index_of("S2")));
  CHECK_FALSE(inst.adjacent(*inst.index_of("S1"), *inst.index_of("S3")));
  CHECK(inst.warnings().empty());
}

TEST_CASE("instance JSON round-trips") {
  const auto inst = load_fixture("four_schools.json");
  const auto again = instance_from_json(instance_to_json(inst));
  CHECK(again.size() == inst.size());
  CHECK(again.edges() == inst.edges());
  for (SchoolIndex s = 0; s < inst.size(); ++s) {
    CHECK(again.school(s).id == inst.school(s).id);
    CHECK(again.school(s).enrollment == inst.school(s).enrollment);
    CHECK(again.school(s).capacity == inst.school(s).capacity);
  }
}

TEST_CASE("all-focal instance is degenerate") {
  CHECK_THROWS_WITH_AS(load_fixture("degenerate.json"), doctest::Contains("degenerate group totals"),
                       DegenerateTotalsError);
}

TEST_CASE("edge naming an unknown school is rejected") {
  auto doc = four_schools_doc();
  doc["adjacency"].push_back({"S1", "NOPE"});
  CHECK_THROWS_AS(instance_from_json(doc), ValidationError);
}

TEST_CASE("malformed documents") {
  SUBCASE("self loop") {
    auto doc = four_schools_doc();
    doc["adjacency"].push_back({"S2", "S2"});
    CHECK_THROWS_AS(instance_from_json(doc), ValidationError);
  }
  SUBCASE("duplicate school id") {
    auto doc = four_schools_doc();
    doc["schools"].push_back(doc["schools"][0]);
    CHECK_THROWS_AS(instance_from_json(doc), ValidationError);
  }
  SUBCASE("negative count") {
    auto doc = four_schools_doc();
    doc["schools"][0]["enrollment"]["K"]["white"] = -1;
    CHECK_THROWS_AS(instance_from_json(doc), ValidationError);
  }
  SUBCASE("unknown grade") {
    auto doc = four_schools_doc();
    doc["schools"][0]["enrollment"]["7"] = {{"white", 3}};
    CHECK_THROWS_AS(instance_from_json(doc), ValidationError);
  }
  SUBCASE("unknown group") {
    auto doc = four_schools_doc();
    doc["schools"][0]["enrollment"]["K"]["martian"] = 3;
    CHECK_THROWS_AS(instance_from_json(doc), ValidationError);
  }
  SUBCASE("missing field") {
    auto doc = four_schools_doc();
    doc.erase("groups");
    CHECK_THROWS_AS(instance_from_json(doc), ParseError);
  }
  SUBCASE("focal group not a group") {
    auto doc = four_schools_doc();
    doc["focal_groups"] = {"purple"};
    CHECK_THROWS_AS(instance_from_json(doc), ValidationError);
  }
}

TEST_CASE("missing file is a parse error") {
  CHECK_THROWS_AS(load_instance(fixture("does_not_exist.json")), ParseError);
}

TEST_CASE("enrollment above capacity only warns") {
  auto doc = four_schools_doc();
  doc["schools"][0]["capacity"] = 10;
  const auto inst = instance_from_json(doc);
  REQUIRE(inst.warnings().size() == 1);
  CHECK(inst.warnings()[0].find("S1") != std::string::npos);
}

TEST_CASE("schools are ordered by id regardless of file order") {
  auto doc = four_schools_doc();
  std::reverse(doc["schools"].begin(), doc["schools"].end());
  const auto inst = instance_from_json(doc);
  CHECK(inst.school(0).id == "S1");
  CHECK(inst.school(3).id == "S4");
}

TEST_CASE("school totals") {
  GroupTaxonomy tax({"white", "black"}, {"white"});
  SUBCASE("focal [10, 20] and complement [5, 5] over two grades") {
    Enrollment e(2, 2);
    e.at(0, 0) = 10;
    e.at(1, 0) = 20;
    e.at(0, 1) = 5;
    e.at(1, 1) = 5;
    const auto t = school_totals(e, tax);
    CHECK(t.total == 40);
    CHECK(t.focal == 30);
  }
  SUBCASE("empty school") {
    const auto t = school_totals(Enrollment(2, 2), tax);
    CHECK(t.total == 0);
    CHECK(t.focal == 0);
  }
}

TEST_CASE("objective taxonomies") {
  GroupTaxonomy base({"White", "Black", "Hispanic", "Asian", "Other"}, {"White"});
  SUBCASE("white-vs-poc") {
    const auto t = objective_taxonomy(base, "white-vs-poc");
    CHECK(t.focal_labels() == std::vector<std::string>{"White"});
  }
  SUBCASE("bhwa puts White and Asian together") {
    const auto t = objective_taxonomy(base, "bhwa");
    CHECK(t.focal_labels() == std::vector<std::string>{"White", "Asian"});
  }
  SUBCASE("unknown variant") { CHECK_THROWS_AS(objective_taxonomy(base, "nope"), ConfigError); }
}

TEST_CASE("district totals on the pair fixture") {
  const auto inst = load_fixture("pair.json");
  const auto t = inst.district_totals();
  CHECK(t.total == 240);
  CHECK(t.focal == 120);
}
