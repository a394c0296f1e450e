#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "district.hpp"

namespace schoolmerge::metrics {

// Totals may be fractional once opt-out scaling is applied.
struct SchoolDemographics {
  std::string school_id;
  double total = 0.0;
  double focal = 0.0;
};

// D = 1/2 * sum_s |w_s/w_T - (t_s - w_s)/(T - w_T)|.
// Throws DegenerateTotalsError unless 0 < w_T < T, ValidationError on w_s > t_s.
double dissimilarity(std::span<const SchoolDemographics> schools, double total, double focal_total);

// Same, with district totals taken as the sum over `schools`.
double dissimilarity(std::span<const SchoolDemographics> schools);

std::vector<SchoolDemographics> current_demographics(const DistrictInstance& instance,
                                                     const GroupTaxonomy& taxonomy);

// Row-major weights keyed by school id. Raw weight for an adjacent pair
// (s, s') is the total enrollment of s, so the raw matrix is not symmetric.
struct SpatialWeights {
  std::map<std::string, std::map<std::string, double>> rows;
  bool row_standardized = false;
  // Schools left out of the matrix (no neighbors, or no students).
  std::vector<std::string> excluded;

  double at(const std::string& from, const std::string& to) const;
  double sum() const;
  std::size_t included() const { return rows.size(); }
};

SpatialWeights build_spatial_weights(const DistrictInstance& instance, bool standardize = true);

// Geary's C with the district-wide proportion as the central value.
// |S| counts the schools included in `weights`.
double gearys_c(const SpatialWeights& weights, const std::map<std::string, double>& x, double x_bar);

// Convenience: focal proportions per school, district proportion as x_bar.
double district_gearys_c(const DistrictInstance& instance, const GroupTaxonomy& taxonomy);

}  // namespace schoolmerge::metrics
