#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "istlm/corpus.hpp"
#include "istlm/interleave.hpp"
#include "istlm/tinylm.hpp"

namespace istlm {

struct TrainConfig {
  double lr = 2e-3;
  int warmup = 200;
  int steps = 2000;
  int batch_size = 16;
  std::uint64_t seed = 1;
  double clip_norm = 1.0;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double adam_eps = 1e-9;
  std::function<void(int step, double loss)> on_step;
};

struct TrainResult {
  Parameters<float> params;
  std::vector<double> loss_curve;  // batch loss per step
};

// Linear warmup to cfg.lr over cfg.warmup steps, then inverse-sqrt decay. Steps are 1-based.
double LearningRate(const TrainConfig& cfg, int step);

// Same-length buckets: sequence indices grouped by exact length, each group
// cut into batches of at most batch_size, in ascending index order.
std::vector<std::vector<std::size_t>> LengthBuckets(const std::vector<std::size_t>& lengths, int batch_size);

// Adam with warmup and inverse-sqrt decay over same-length batches. The batch
// order is a pure function of cfg.seed. Throws NumericError (with the step
// number) if the loss diverges.
TrainResult Train(const Corpus& corpus, const Ratio& ratio, const ModelConfig& model, const TrainConfig& cfg);

}  // namespace istlm
