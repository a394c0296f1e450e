#include "metrics.hpp"

#include <cmath>

namespace schoolmerge::metrics {

double dissimilarity(std::span<const SchoolDemographics> schools, double total, double focal_total) {
  if (!(total > 0.0) || !(focal_total > 0.0) || !(focal_total < total)) {
    throw DegenerateTotalsError("degenerate group totals: focal " + std::to_string(focal_total) +
                                " of " + std::to_string(total));
  }
  const double complement_total = total - focal_total;
  double sum = 0.0;
  for (const auto& s : schools) {
    if (s.focal > s.total || s.focal < 0.0) {
      throw ValidationError("school '" + s.school_id + "' has focal count outside [0, total]");
    }
    sum += std::abs(s.focal / focal_total - (s.total - s.focal) / complement_total);
  }
  return 0.5 * sum;
}

double dissimilarity(std::span<const SchoolDemographics> schools) {
  double total = 0.0;
  double focal = 0.0;
  for (const auto& s : schools) {
    total += s.total;
    focal += s.focal;
  }
  return dissimilarity(schools, total, focal);
}

std::vector<SchoolDemographics> current_demographics(const DistrictInstance& instance,
                                                     const GroupTaxonomy& taxonomy) {
  std::vector<SchoolDemographics> out;
  out.reserve(instance.size());
  for (const auto& s : instance.schools()) {
    auto t = school_totals(s.enrollment, taxonomy);
    out.push_back({s.id, static_cast<double>(t.total), static_cast<double>(t.focal)});
  }
  return out;
}

double SpatialWeights::at(const std::string& from, const std::string& to) const {
  auto r = rows.find(from);
  if (r == rows.end()) return 0.0;
  auto c = r->second.find(to);
  return c == r->second.end() ? 0.0 : c->second;
}

double SpatialWeights::sum() const {
  double s = 0.0;
  for (const auto& [_, row] : rows) {
    for (const auto& [__, w] : row) s += w;
  }
  return s;
}

SpatialWeights build_spatial_weights(const DistrictInstance& instance, bool standardize) {
  // Schools without students have no proportion; treat them as absent, then
  // drop anyone left without a neighbor.
  std::vector<bool> usable(instance.size());
  for (SchoolIndex i = 0; i < instance.size(); ++i) {
    usable[i] = instance.school(i).enrollment.total() > 0;
  }
  SpatialWeights w;
  w.row_standardized = standardize;
  for (SchoolIndex i = 0; i < instance.size(); ++i) {
    const auto& id = instance.school(i).id;
    std::map<std::string, double> row;
    if (usable[i]) {
      const double pop = static_cast<double>(instance.school(i).enrollment.total());
      for (SchoolIndex j : instance.neighbors(i)) {
        if (usable[j]) row[instance.school(j).id] = pop;
      }
    }
    if (row.empty()) {
      w.excluded.push_back(id);
      continue;
    }
    if (standardize) {
      double sum = 0.0;
      for (const auto& [_, v] : row) sum += v;
      for (auto& [_, v] : row) v /= sum;
    }
    w.rows.emplace(id, std::move(row));
  }
  return w;
}

double gearys_c(const SpatialWeights& weights, const std::map<std::string, double>& x, double x_bar) {
  const std::size_t n = weights.included();
  if (n < 2) throw ValidationError("Geary's C needs at least two schools with neighbors");
  auto value = [&](const std::string& id) {
    auto it = x.find(id);
    if (it == x.end()) throw ValidationError("no value for school '" + id + "'");
    return it->second;
  };
  double numerator = 0.0;
  double weight_sum = 0.0;
  double spread = 0.0;
  for (const auto& [s, row] : weights.rows) {
    const double xs = value(s);
    spread += (xs - x_bar) * (xs - x_bar);
    for (const auto& [t, wst] : row) {
      const double d = xs - value(t);
      numerator += wst * d * d;
      weight_sum += wst;
    }
  }
  if (spread == 0.0) throw ValidationError("zero variance: every school has the same proportion");
  const double denominator = 2.0 / static_cast<double>(n - 1) * spread * weight_sum;
  return numerator / denominator;
}

double district_gearys_c(const DistrictInstance& instance, const GroupTaxonomy& taxonomy) {
  const auto weights = build_spatial_weights(instance, true);
  std::map<std::string, double> x;
  for (const auto& s : instance.schools()) {
    auto t = school_totals(s.enrollment, taxonomy);
    if (t.total > 0) x[s.id] = static_cast<double>(t.focal) / static_cast<double>(t.total);
  }
  const auto d = instance.district_totals(taxonomy);
  return gearys_c(weights, x, static_cast<double>(d.focal) / static_cast<double>(d.total));
}

}  // namespace schoolmerge::metrics
