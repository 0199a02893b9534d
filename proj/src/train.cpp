#include "istlm/train.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include <spdlog/spdlog.h>

#include "istlm/error.hpp"

namespace istlm {

double LearningRate(const TrainConfig& cfg, int step) {
  const double s = std::max(step, 1);
  const double w = std::max(cfg.warmup, 1);
  return cfg.lr * (s < w ? s / w : std::sqrt(w / s));
}

std::vector<std::vector<std::size_t>> LengthBuckets(const std::vector<std::size_t>& lengths, int batch_size) {
  if (batch_size < 1) throw UsageError("batch size must be positive");
  std::map<std::size_t, std::vector<std::size_t>> by_length;
  for (std::size_t i = 0; i < lengths.size(); ++i) by_length[lengths[i]].push_back(i);
  std::vector<std::vector<std::size_t>> batches;
  for (const auto& [len, members] : by_length) {
    for (std::size_t start = 0; start < members.size(); start += static_cast<std::size_t>(batch_size)) {
      const auto end = std::min(members.size(), start + static_cast<std::size_t>(batch_size));
      batches.emplace_back(members.begin() + static_cast<std::ptrdiff_t>(start),
                           members.begin() + static_cast<std::ptrdiff_t>(end));
    }
  }
  return batches;
}

TrainResult Train(const Corpus& corpus, const Ratio& ratio, const ModelConfig& model, const TrainConfig& cfg) {
  model.Validate();
  if (corpus.samples.empty()) throw UsageError("training corpus is empty");
  if (cfg.steps < 0) throw UsageError("step count must be non-negative");
  if (corpus.v_text > model.v_text || corpus.v_speech > model.v_speech) {
    throw UsageError("corpus vocabulary exceeds the model vocabulary");
  }

  std::vector<InterleavedSeq> sequences;
  std::vector<std::size_t> lengths;
  sequences.reserve(corpus.samples.size());
  for (const auto& s : corpus.samples) {
    sequences.push_back(PrepareTrainingSequence(s, ratio, model.limits()));
    lengths.push_back(sequences.back().elements.size());
  }

  TrainResult result{InitParams<float>(model, model.seed), {}};
  Parameters<float>& params = result.params;
  Parameters<float> first = Parameters<float>::Zeros(model);
  Parameters<float> second = Parameters<float>::Zeros(model);

  std::mt19937_64 rng(cfg.seed);
  std::map<std::size_t, std::vector<std::size_t>> by_length;
  for (std::size_t i = 0; i < lengths.size(); ++i) by_length[lengths[i]].push_back(i);
  std::vector<std::vector<std::size_t>> epoch;
  std::size_t cursor = 0;
  auto next_epoch = [&] {
    epoch.clear();
    for (auto& [len, members] : by_length) {
      std::shuffle(members.begin(), members.end(), rng);
      for (std::size_t start = 0; start < members.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
        const auto end = std::min(members.size(), start + static_cast<std::size_t>(cfg.batch_size));
        epoch.emplace_back(members.begin() + static_cast<std::ptrdiff_t>(start),
                           members.begin() + static_cast<std::ptrdiff_t>(end));
      }
    }
    std::shuffle(epoch.begin(), epoch.end(), rng);
    cursor = 0;
  };
  if (cfg.batch_size < 1) throw UsageError("batch size must be positive");
  next_epoch();

  std::vector<InterleavedSeq> batch;
  for (int step = 1; step <= cfg.steps; ++step) {
    // Batches without a supervised target cannot occur: every prepared sequence supervises speech EOS.
    if (cursor == epoch.size()) next_epoch();
    batch.clear();
    for (std::size_t idx : epoch[cursor++]) batch.push_back(sequences[idx]);

    LossAndGradients<float> lg;
    try {
      lg = LossAndGrads<float>(params, batch);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::Numeric) throw NumericError("training diverged at step " + std::to_string(step));
      throw;
    }

    double norm_sq = 0.0;
    lg.grads.ForEach([&](const std::string&, const Matrix<float>& g) { norm_sq += g.cast<double>().squaredNorm(); });
    if (!std::isfinite(norm_sq)) throw NumericError("training diverged at step " + std::to_string(step));
    const double norm = std::sqrt(norm_sq);
    const float clip = cfg.clip_norm > 0.0 && norm > cfg.clip_norm ? static_cast<float>(cfg.clip_norm / norm) : 1.0f;

    const double lr = LearningRate(cfg, step);
    const auto b1 = static_cast<float>(cfg.beta1), b2 = static_cast<float>(cfg.beta2);
    const auto step_size = static_cast<float>(lr * std::sqrt(1.0 - std::pow(cfg.beta2, step)) /
                                              (1.0 - std::pow(cfg.beta1, step)));
    const auto eps = static_cast<float>(cfg.adam_eps);

    std::vector<Matrix<float>*> p_list, m_list, v_list, g_list;
    params.ForEach([&](const std::string&, Matrix<float>& m) { p_list.push_back(&m); });
    first.ForEach([&](const std::string&, Matrix<float>& m) { m_list.push_back(&m); });
    second.ForEach([&](const std::string&, Matrix<float>& m) { v_list.push_back(&m); });
    lg.grads.ForEach([&](const std::string&, Matrix<float>& m) { g_list.push_back(&m); });
    for (std::size_t i = 0; i < p_list.size(); ++i) {
      auto g = (g_list[i]->array() * clip).eval();
      *m_list[i] = (b1 * m_list[i]->array() + (1.0f - b1) * g).matrix();
      *v_list[i] = (b2 * v_list[i]->array() + (1.0f - b2) * g.square()).matrix();
      p_list[i]->array() -= step_size * m_list[i]->array() / (v_list[i]->array().sqrt() + eps);
    }

    result.loss_curve.push_back(static_cast<double>(lg.loss));
    if (cfg.on_step) cfg.on_step(step, static_cast<double>(lg.loss));
    if (step % 100 == 0) spdlog::debug("step {} loss {:.4f} lr {:.2e}", step, lg.loss, lr);
  }
  return result;
}

}  // namespace istlm
