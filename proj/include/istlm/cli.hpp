#pragma once

#include <string>
#include <vector>

#include "istlm/analysis.hpp"
#include "istlm/interleave.hpp"
#include "istlm/measures.hpp"

namespace istlm {

// Runs the istlm command line. Exit codes: 0 success, 1 usage error,
// 2 data or validation error, 3 numerical failure.
int Dispatch(int argc, const char* const* argv);
int Dispatch(const std::vector<std::string>& args);  // args[0] is the program name

// File name of a ratio's statistics table inside a stats directory ("1x3.csv", "inf.csv").
std::string StatsFileName(const Ratio& ratio);

struct FamilyFit {
  std::string family;   // "x:2x", "x:3x", "x:4x" or "all"
  std::string measure;  // mu_D, sigma_D, A, F
  std::vector<Point2> points;
  std::vector<std::string> labels;  // ratio of each point
  std::optional<FitResult> fit;
  double pearson = 0.0;  // nan when undefined
  Point2 centroid;
};

// Correlates per-ratio aggregate measures with error rates, per ratio family and pooled.
std::vector<FamilyFit> AnalyzeFamilies(const std::vector<RatioMetric>& results,
                                       const std::vector<std::pair<Ratio, MeasureAggregate>>& stats,
                                       const RansacOptions& ransac);
std::string FamilyFitsToCsv(const std::vector<FamilyFit>& fits);
std::string FamilyFitsToSvg(const std::vector<FamilyFit>& fits);

}  // namespace istlm
