#include "istlm/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "istlm/error.hpp"

namespace istlm {
namespace {

struct Line {
  double slope;
  double intercept;
  double Residual(const Point2& p) const { return p.y - (slope * p.x + intercept); }
};

Line OlsLine(const std::vector<Point2>& points, const std::vector<std::size_t>& subset) {
  if (subset.size() < 2) throw DataError("line fit needs at least two points");
  double mx = 0.0, my = 0.0;
  for (auto i : subset) {
    mx += points[i].x;
    my += points[i].y;
  }
  mx /= static_cast<double>(subset.size());
  my /= static_cast<double>(subset.size());
  double sxx = 0.0, sxy = 0.0;
  for (auto i : subset) {
    sxx += (points[i].x - mx) * (points[i].x - mx);
    sxy += (points[i].x - mx) * (points[i].y - my);
  }
  if (sxx == 0.0) throw DataError("degenerate line fit: all x values are equal");
  const double slope = sxy / sxx;
  return {slope, my - slope * mx};
}

std::vector<std::size_t> AllIndices(std::size_t n) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  return idx;
}

}  // namespace

FitResult OlsFit(const std::vector<Point2>& points) {
  const auto all = AllIndices(points.size());
  const Line line = OlsLine(points, all);
  return {line.slope, line.intercept, all};
}

double DefaultRansacThreshold(const std::vector<Point2>& points) {
  const Line pilot = OlsLine(points, AllIndices(points.size()));
  std::vector<double> residuals;
  for (const auto& p : points) residuals.push_back(std::abs(pilot.Residual(p)));
  std::sort(residuals.begin(), residuals.end());
  const std::size_t n = residuals.size();
  const double median = n % 2 ? residuals[n / 2] : 0.5 * (residuals[n / 2 - 1] + residuals[n / 2]);
  if (median > 0.0) return 1.5 * median;
  // Exact pilot fit for at least half the points: accept only near-exact agreement.
  double scale = 0.0;
  for (const auto& p : points) scale = std::max(scale, std::abs(p.y));
  return std::max(scale, 1.0) * 1e-9;
}

std::optional<FitResult> RansacFit(const std::vector<Point2>& points, const RansacOptions& options) {
  if (points.size() < 2) throw DataError("RANSAC needs at least two points");
  const double threshold = options.threshold ? *options.threshold : DefaultRansacThreshold(points);
  if (!(threshold > 0.0)) throw UsageError("RANSAC threshold must be positive");

  std::vector<std::size_t> best;
  double best_error = 0.0;
  auto consider = [&](std::size_t a, std::size_t b) {
    if (points[a].x == points[b].x) return;
    const double slope = (points[b].y - points[a].y) / (points[b].x - points[a].x);
    const Line line{slope, points[a].y - slope * points[a].x};
    std::vector<std::size_t> consensus;
    double error = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      const double r = std::abs(line.Residual(points[i]));
      if (r <= threshold) {
        consensus.push_back(i);
        error += r;
      }
    }
    if (consensus.empty()) return;
    error /= static_cast<double>(consensus.size());
    if (consensus.size() > best.size() || (consensus.size() == best.size() && error < best_error)) {
      best = std::move(consensus);
      best_error = error;
    }
  };

  if (points.size() <= 8) {
    for (std::size_t a = 0; a < points.size(); ++a) {
      for (std::size_t b = a + 1; b < points.size(); ++b) consider(a, b);
    }
  } else {
    std::mt19937_64 rng(options.seed);
    std::uniform_int_distribution<std::size_t> pick(0, points.size() - 1);
    for (int it = 0; it < options.iterations; ++it) {
      const std::size_t a = pick(rng);
      std::size_t b = pick(rng);
      while (b == a) b = pick(rng);
      consider(a, b);
    }
  }
  if (best.size() < std::max<std::size_t>(2, options.min_inliers)) return std::nullopt;
  Line line;
  try {
    line = OlsLine(points, best);
  } catch (const Error&) {
    return std::nullopt;
  }
  return FitResult{line.slope, line.intercept, best};
}

double Pearson(const std::vector<Point2>& points) {
  if (points.size() < 2) throw DataError("Pearson correlation needs at least two points");
  double mx = 0.0, my = 0.0;
  for (const auto& p : points) {
    mx += p.x;
    my += p.y;
  }
  mx /= static_cast<double>(points.size());
  my /= static_cast<double>(points.size());
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (const auto& p : points) {
    sxx += (p.x - mx) * (p.x - mx);
    syy += (p.y - my) * (p.y - my);
    sxy += (p.x - mx) * (p.y - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw DataError("Pearson correlation undefined for zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

FamilyGrouping GroupByFamily(const std::vector<RatioMetric>& results) {
  FamilyGrouping grouping;
  for (const auto& r : results) {
    if (r.n > 0 && r.m > 0 && r.m % r.n == 0 && r.m / r.n >= 2 && r.m / r.n <= 4) {
      grouping.families[r.m / r.n].push_back(r);
    } else {
      grouping.excluded.push_back(r);
    }
  }
  for (auto& [family, members] : grouping.families) {
    std::stable_sort(members.begin(), members.end(), [](const auto& a, const auto& b) { return a.n < b.n; });
  }
  return grouping;
}

}  // namespace istlm
