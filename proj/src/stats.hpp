#pragma once

#include <optional>
#include <span>
#include <vector>

namespace schoolmerge::stats {

// Lower median for even counts. nullopt on empty input.
std::optional<double> lower_median(std::vector<double> values);

// Average ranks (1-based), ties share the mean rank.
std::vector<double> ranks(std::span<const double> values);

// nullopt when either side has zero variance.
std::optional<double> pearson(std::span<const double> x, std::span<const double> y);
std::optional<double> spearman(std::span<const double> x, std::span<const double> y);

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
};
// Ordinary least squares y = slope * x + intercept; nullopt when x is constant.
std::optional<LineFit> ols(std::span<const double> x, std::span<const double> y);

}  // namespace schoolmerge::stats
