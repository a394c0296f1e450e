#pragma once

// District instances: schools, grade x group enrollments, adjacency and the
// demographic group taxonomy used by the segregation objective.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

namespace schoolmerge {

using SchoolIndex = std::size_t;
using Count = std::int64_t;

// Error hierarchy shared by every module. The C API maps each onto a status code.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ParseError : Error {
  using Error::Error;
};
struct ValidationError : Error {
  using Error::Error;
};
struct ConfigError : Error {
  // Name of the violated constraint, reported by the service as-is.
  std::string constraint;
  ConfigError(std::string constraint_name, const std::string& what)
      : Error(what), constraint(std::move(constraint_name)) {}
};
struct DegenerateTotalsError : Error {
  using Error::Error;
};
struct MissingDataError : Error {
  std::vector<std::string> missing;
  MissingDataError(const std::string& what, std::vector<std::string> items)
      : Error(what), missing(std::move(items)) {}
};

struct GradeLevel {
  std::size_t index = 0;
  auto operator<=>(const GradeLevel&) const = default;
};

// Ordered group labels plus the focal/complement split the dissimilarity
// index is computed over. Every label sits on exactly one side.
class GroupTaxonomy {
 public:
  GroupTaxonomy() = default;
  GroupTaxonomy(std::vector<std::string> groups, const std::vector<std::string>& focal_labels);

  const std::vector<std::string>& groups() const { return groups_; }
  std::size_t size() const { return groups_.size(); }
  bool is_focal(std::size_t group) const { return focal_[group]; }
  std::vector<std::string> focal_labels() const;
  std::optional<std::size_t> index_of(std::string_view label) const;

  // Same labels, different split.
  GroupTaxonomy with_focal(const std::vector<std::string>& focal_labels) const {
    return GroupTaxonomy(groups_, focal_labels);
  }

  bool operator==(const GroupTaxonomy&) const = default;

 private:
  std::vector<std::string> groups_;
  std::vector<bool> focal_;
};

// Named objective variants: "white-vs-poc" (White vs. students of color) and
// "bhwa" (White/Asian vs. Black/Hispanic). Labels are matched case-insensitively.
GroupTaxonomy objective_taxonomy(const GroupTaxonomy& base, std::string_view variant);

// Dense grade x group count matrix.
class Enrollment {
 public:
  Enrollment() = default;
  Enrollment(std::size_t grades, std::size_t groups)
      : grades_(grades), groups_(groups), counts_(grades * groups, 0) {}

  std::size_t grades() const { return grades_; }
  std::size_t groups() const { return groups_; }
  Count& at(std::size_t grade, std::size_t group) { return counts_[grade * groups_ + group]; }
  Count at(std::size_t grade, std::size_t group) const { return counts_[grade * groups_ + group]; }

  Count total() const;
  Count grade_total(std::size_t grade) const;
  Count group_total(std::size_t group) const;

  Enrollment& operator+=(const Enrollment& other);
  bool operator==(const Enrollment&) const = default;

 private:
  std::size_t grades_ = 0;
  std::size_t groups_ = 0;
  std::vector<Count> counts_;
};

struct School {
  std::string id;
  std::string district_id;
  Enrollment enrollment;
  Count capacity = 0;
};

struct SchoolTotals {
  Count total = 0;
  Count focal = 0;
};

SchoolTotals school_totals(const Enrollment& enrollment, const GroupTaxonomy& taxonomy);
inline SchoolTotals school_totals(const School& school, const GroupTaxonomy& taxonomy) {
  return school_totals(school.enrollment, taxonomy);
}

// Validated, immutable district (or fused multi-district) instance. Schools
// are kept sorted by id so index order and id order agree.
class DistrictInstance {
 public:
  using Edge = std::pair<SchoolIndex, SchoolIndex>;

  // Validates every invariant; throws ValidationError / DegenerateTotalsError.
  static DistrictInstance create(std::string name, std::vector<std::string> grade_labels,
                                 GroupTaxonomy taxonomy, std::vector<School> schools,
                                 const std::vector<std::pair<std::string, std::string>>& adjacency);

  const std::string& name() const { return name_; }
  const std::vector<std::string>& grade_labels() const { return grade_labels_; }
  std::size_t grade_count() const { return grade_labels_.size(); }
  const GroupTaxonomy& taxonomy() const { return taxonomy_; }
  const std::vector<School>& schools() const { return schools_; }
  const School& school(SchoolIndex i) const { return schools_[i]; }
  std::size_t size() const { return schools_.size(); }
  const std::vector<Edge>& edges() const { return edges_; }
  const std::vector<SchoolIndex>& neighbors(SchoolIndex i) const { return neighbors_[i]; }
  bool adjacent(SchoolIndex a, SchoolIndex b) const;
  std::optional<SchoolIndex> index_of(std::string_view id) const;
  const std::set<std::string>& district_ids() const { return district_ids_; }
  // Non-fatal load diagnostics (e.g. enrollment above capacity).
  const std::vector<std::string>& warnings() const { return warnings_; }

  SchoolTotals district_totals(const GroupTaxonomy& taxonomy) const;
  SchoolTotals district_totals() const { return district_totals(taxonomy_); }

  std::optional<GradeLevel> grade_of(std::string_view label) const;

 private:
  std::string name_;
  std::vector<std::string> grade_labels_;
  GroupTaxonomy taxonomy_;
  std::vector<School> schools_;
  std::vector<Edge> edges_;
  std::vector<std::vector<SchoolIndex>> neighbors_;
  std::set<std::string> district_ids_;
  std::vector<std::string> warnings_;
};

// Rejects w_T in {0, T}; the dissimilarity index is undefined there.
void require_nondegenerate(const SchoolTotals& district);

DistrictInstance instance_from_json(const nlohmann::json& doc, std::string fallback_name = {});
DistrictInstance load_instance(const std::filesystem::path& path);
nlohmann::json instance_to_json(const DistrictInstance& instance);

}  // namespace schoolmerge
