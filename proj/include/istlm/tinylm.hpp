#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "istlm/interleave.hpp"

namespace istlm {

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using ColVector = Eigen::Matrix<T, Eigen::Dynamic, 1>;
template <typename T>
using RowVector = Eigen::Matrix<T, 1, Eigen::Dynamic>;

struct ModelConfig {
  int layers = 4;
  int heads = 4;
  int d_model = 128;
  int d_ff = 512;
  int v_text = 64;
  int v_speech = 256;
  int max_pos_text = 512;
  int max_pos_speech = 512;
  std::uint64_t seed = 0;

  void Validate() const;  // throws UsageError
  PositionLimits limits() const { return {max_pos_text, max_pos_speech}; }
  int output_size() const { return v_speech + 1; }
  int speech_eos() const { return v_speech; }  // output class of the speech end-of-stream symbol
  bool operator==(const ModelConfig&) const = default;
};

template <typename T>
struct LayerWeights {
  Matrix<T> norm1_gain, norm1_bias;
  Matrix<T> qkv, qkv_bias;  // [d x 3d]: queries, keys, values; heads are contiguous column groups
  Matrix<T> attn_out, attn_out_bias;
  Matrix<T> norm2_gain, norm2_bias;
  Matrix<T> ff_in, ff_in_bias;
  Matrix<T> ff_out, ff_out_bias;
};

// Named tensor set of the model. Vectors are stored as 1 x n matrices so that
// every tensor can be visited uniformly; the same type carries gradients and
// optimizer moments.
template <typename T>
struct Parameters {
  ModelConfig config;
  Matrix<T> text_embedding;    // [(v_text + 1) x d], last row is text EOS
  Matrix<T> speech_embedding;  // [(v_speech + 1) x d], last row is speech EOS
  Matrix<T> text_position;     // [max_pos_text x d]
  Matrix<T> speech_position;   // [max_pos_speech x d]
  std::vector<LayerWeights<T>> layers;
  Matrix<T> final_gain, final_bias;
  Matrix<T> head;  // [d x (v_speech + 1)]

  static Parameters Zeros(const ModelConfig& config);

  template <typename F>
  void ForEach(F&& fn) {
    VisitAll(*this, fn);
  }
  template <typename F>
  void ForEach(F&& fn) const {
    VisitAll(*this, fn);
  }

  std::size_t Count() const;

  template <typename U>
  Parameters<U> Cast() const {
    Parameters<U> out = Parameters<U>::Zeros(config);
    std::vector<const Matrix<T>*> src;
    ForEach([&](const std::string&, const Matrix<T>& m) { src.push_back(&m); });
    std::size_t i = 0;
    out.ForEach([&](const std::string&, Matrix<U>& m) { m = src[i++]->template cast<U>(); });
    return out;
  }

 private:
  template <typename Self, typename F>
  static void VisitAll(Self& self, F& fn) {
    fn("embedding.text", self.text_embedding);
    fn("embedding.speech", self.speech_embedding);
    fn("position.text", self.text_position);
    fn("position.speech", self.speech_position);
    for (std::size_t l = 0; l < self.layers.size(); ++l) {
      auto& w = self.layers[l];
      const std::string p = "layers." + std::to_string(l) + ".";
      fn(p + "norm1.gain", w.norm1_gain);
      fn(p + "norm1.bias", w.norm1_bias);
      fn(p + "attn.qkv", w.qkv);
      fn(p + "attn.qkv_bias", w.qkv_bias);
      fn(p + "attn.out", w.attn_out);
      fn(p + "attn.out_bias", w.attn_out_bias);
      fn(p + "norm2.gain", w.norm2_gain);
      fn(p + "norm2.bias", w.norm2_bias);
      fn(p + "ff.in", w.ff_in);
      fn(p + "ff.in_bias", w.ff_in_bias);
      fn(p + "ff.out", w.ff_out);
      fn(p + "ff.out_bias", w.ff_out_bias);
    }
    fn("final_norm.gain", self.final_gain);
    fn("final_norm.bias", self.final_bias);
    fn("head", self.head);
  }
};

// Weights ~ Normal(0, 0.02); normalization gains 1 and all biases 0.
template <typename T>
Parameters<T> InitParams(const ModelConfig& config, std::uint64_t seed);

// Activations retained by Forward for the backward pass.
template <typename T>
struct LayerCache {
  Matrix<T> input, norm1_hat, norm1_out, qkv, context, hidden, norm2_hat, norm2_out, ff_pre, ff_act;
  ColVector<T> norm1_rstd, norm2_rstd;
  std::vector<Matrix<T>> probs;  // index seq * heads + head, each [len x len], zero above the diagonal
};

template <typename T>
struct ForwardCache {
  std::vector<int> offsets;  // row offset of each sequence; offsets.back() is the total row count
  std::vector<LayerCache<T>> layers;
  Matrix<T> final_input, final_hat, final_out;
  ColVector<T> final_rstd;
};

// Logits for every element of every sequence, stacked row-wise in batch order
// ([sum of lengths x (v_speech + 1)]). Row t of a sequence scores element t + 1.
template <typename T>
Matrix<T> Forward(const Parameters<T>& params, std::span<const InterleavedSeq> batch, ForwardCache<T>* cache = nullptr);

// Per-sequence view of Forward: one [len x (v_speech + 1)] matrix per sequence.
template <typename T>
std::vector<Matrix<T>> ForwardLogits(const Parameters<T>& params, std::span<const InterleavedSeq> batch);

// Mean cross-entropy over supervised next-token targets. When `dlogits` is
// given it receives d(loss)/d(logits). Throws DataError when nothing is
// supervised and NumericError when the loss is not finite.
template <typename T>
T MaskedCrossEntropy(const Matrix<T>& logits, std::span<const InterleavedSeq> batch, int v_speech,
                     Matrix<T>* dlogits = nullptr, long* supervised = nullptr);

template <typename T>
struct LossAndGradients {
  T loss{};
  long supervised = 0;
  Parameters<T> grads;
};

template <typename T>
LossAndGradients<T> LossAndGrads(const Parameters<T>& params, std::span<const InterleavedSeq> batch);

template <typename T>
struct DecodeState {
  std::vector<Matrix<T>> keys;    // per layer, [capacity x d]
  std::vector<Matrix<T>> values;  // per layer, [capacity x d]
  int text_count = 0;
  int speech_count = 0;
  int length = 0;
};

template <typename T>
DecodeState<T> NewDecodeState(const ModelConfig& config);

// Appends one element (its modal position comes from the state's counters)
// and returns the logits for the next element.
template <typename T>
RowVector<T> DecodeStep(const Parameters<T>& params, DecodeState<T>& state, Modality modality, TokenId token);

struct SamplingParams {
  double temperature = 1.0;
  int top_k = 25;
};

// Draws an output class (v_speech denotes speech EOS) from the top_k logits at
// the given temperature. With allow_eos false the EOS class is excluded.
int SampleToken(std::span<const float> logits, const SamplingParams& sampling, std::mt19937_64& rng,
                bool allow_eos = true);

}  // namespace istlm
