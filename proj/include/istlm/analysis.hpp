#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace istlm {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

struct FitResult {
  double slope = 0.0;
  double intercept = 0.0;
  std::vector<std::size_t> inliers;  // ascending point indices
};

// Least squares on vertical residuals; every point is an inlier.
FitResult OlsFit(const std::vector<Point2>& points);

struct RansacOptions {
  std::optional<double> threshold;  // default: 1.5 x median |residual| of a pilot OLS fit
  int iterations = 100;
  std::size_t min_inliers = 2;
  std::uint64_t seed = 0;
};

// Two-point hypotheses scored by consensus size, ties broken by lower mean
// |residual| over the consensus set; the winner is refit by OLS. With at most
// eight points all pairs are enumerated and the seed is unused.
// Returns std::nullopt when no hypothesis gathers min_inliers points.
std::optional<FitResult> RansacFit(const std::vector<Point2>& points, const RansacOptions& options = {});

double DefaultRansacThreshold(const std::vector<Point2>& points);

double Pearson(const std::vector<Point2>& points);

struct RatioMetric {
  int n = 0;
  int m = 0;
  double metric = 0.0;
};

struct FamilyGrouping {
  std::map<int, std::vector<RatioMetric>> families;  // keyed by m / n, each ordered by n
  std::vector<RatioMetric> excluded;
};

// Families x:2x, x:3x, x:4x. Other ratios (and non-streaming rows, n <= 0) land in `excluded`.
FamilyGrouping GroupByFamily(const std::vector<RatioMetric>& results);

}  // namespace istlm
