#pragma once

#include <string>
#include <vector>

#include "istlm/corpus.hpp"
#include "istlm/interleave.hpp"

namespace istlm {

struct MeasureOptions {
  int max_positions = kDefaultMaxWords;  // J
  bool abs_distance = false;             // |pos(y) - pos(x)| instead of the signed offset
  bool any_token_access = false;         // a future word counts once any of its text tokens is visible
  int threads = 1;
};

// Running (count, mean, M2) with a deterministic merge.
struct Moments {
  long count = 0;
  double mean = 0.0;
  double m2 = 0.0;
  void Add(double x);
  void Merge(const Moments& other);
  double PopulationStddev() const;
};

struct MeasureTable {
  std::vector<double> mu_D;
  std::vector<double> sigma_D;
  std::vector<double> A;
  std::vector<double> F;
  std::vector<long> count;
  std::size_t size() const { return count.size(); }
  bool present(std::size_t j) const { return count[j] > 0; }
};

struct MeasureAggregate {
  double mu_D = 0.0;
  double sigma_D = 0.0;
  double A = 0.0;
  double F = 0.0;
  long count = 0;
};

// Per-word quantities for one sample and position index (built without EOS).
double WordDistance(const Sample& sample, const PositionIndex& positions, int word, bool abs_distance = false);
double AccessibleFutureWords(const Sample& sample, const PositionIndex& positions, int word,
                             bool any_token_access = false);
double PrecedenceFraction(const Sample& sample, const PositionIndex& positions, int word);

MeasureTable CorpusMeasures(const Corpus& corpus, const Ratio& ratio, const MeasureOptions& options = {});
MeasureAggregate AggregateMeasures(const MeasureTable& table);

// CSV with columns j,mu_D,sigma_D,A,F,count; absent positions have empty fields,
// and a final j=-1 row carries the aggregate.
std::string MeasuresToCsv(const MeasureTable& table);
// Reads back the j=-1 aggregate row of a file written by MeasuresToCsv.
MeasureAggregate ReadAggregateRow(const std::string& csv);

}  // namespace istlm
