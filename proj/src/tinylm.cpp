#include "istlm/tinylm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "istlm/error.hpp"

namespace istlm {
namespace {

constexpr double kNormEps = 1e-5;

template <typename T>
const T kGeluScale = static_cast<T>(0.7978845608028654);  // sqrt(2 / pi)
template <typename T>
const T kGeluCubic = static_cast<T>(0.044715);

template <typename T>
Matrix<T> Gelu(const Matrix<T>& x) {
  const auto v = x.array();
  const auto t = (kGeluScale<T> * (v + kGeluCubic<T> * v.cube())).tanh();
  return (static_cast<T>(0.5) * v * (static_cast<T>(1) + t)).matrix();
}

template <typename T>
Matrix<T> GeluGrad(const Matrix<T>& x) {
  const auto v = x.array();
  const Eigen::Array<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> t =
      (kGeluScale<T> * (v + kGeluCubic<T> * v.cube())).tanh();
  return (static_cast<T>(0.5) * (static_cast<T>(1) + t) +
          static_cast<T>(0.5) * v * (static_cast<T>(1) - t.square()) * kGeluScale<T> *
              (static_cast<T>(1) + static_cast<T>(3) * kGeluCubic<T> * v.square()))
      .matrix();
}

template <typename T>
void NormForward(const Matrix<T>& x, const Matrix<T>& gain, const Matrix<T>& bias, Matrix<T>& hat, ColVector<T>& rstd,
                 Matrix<T>& out) {
  const auto d = static_cast<T>(x.cols());
  const ColVector<T> mean = x.rowwise().sum() / d;
  hat = x.colwise() - mean;
  rstd = ((hat.array().square().rowwise().sum() / d) + static_cast<T>(kNormEps)).rsqrt().matrix();
  hat = hat.array().colwise() * rstd.array();
  out = (hat.array().rowwise() * gain.row(0).array()).rowwise() + bias.row(0).array();
}

template <typename T>
Matrix<T> NormBackward(const Matrix<T>& dout, const Matrix<T>& hat, const ColVector<T>& rstd, const Matrix<T>& gain,
                       Matrix<T>& dgain, Matrix<T>& dbias) {
  dgain.row(0) += (dout.array() * hat.array()).colwise().sum().matrix();
  dbias.row(0) += dout.colwise().sum();
  const Matrix<T> dhat = dout.array().rowwise() * gain.row(0).array();
  const auto d = static_cast<T>(dout.cols());
  const ColVector<T> mean_dhat = dhat.rowwise().sum() / d;
  const ColVector<T> mean_dhat_hat = (dhat.array() * hat.array()).rowwise().sum().matrix() / d;
  Matrix<T> dx = dhat.colwise() - mean_dhat;
  dx -= (hat.array().colwise() * mean_dhat_hat.array()).matrix();
  return dx.array().colwise() * rstd.array();
}

// Softmax over columns [0, i] of each row i; columns above the diagonal are zeroed.
template <typename T>
void CausalSoftmaxInPlace(Matrix<T>& scores) {
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    auto row = scores.row(i);
    const T max = row.head(i + 1).maxCoeff();
    auto head = row.head(i + 1).array();
    head = (head - max).exp();
    head /= head.sum();
    row.tail(scores.cols() - i - 1).setZero();
  }
}

void CheckElement(const ModelConfig& config, const Element& e) {
  if (e.modality == Modality::Text) {
    if (e.token != kEos && (e.token < 0 || e.token >= config.v_text)) {
      throw DataError("text token " + std::to_string(e.token) + " outside vocabulary");
    }
    if (e.modal_position < 0 || e.modal_position >= config.max_pos_text) {
      throw DataError("text position overflow at " + std::to_string(e.modal_position));
    }
  } else {
    if (e.token != kEos && (e.token < 0 || e.token >= config.v_speech)) {
      throw DataError("speech token " + std::to_string(e.token) + " outside vocabulary");
    }
    if (e.modal_position < 0 || e.modal_position >= config.max_pos_speech) {
      throw DataError("speech position overflow at " + std::to_string(e.modal_position));
    }
  }
}

template <typename T>
auto EmbeddingRow(const Parameters<T>& p, const Element& e) {
  const auto& table = e.modality == Modality::Text ? p.text_embedding : p.speech_embedding;
  const Eigen::Index row = e.token == kEos ? table.rows() - 1 : e.token;
  const auto& pos = e.modality == Modality::Text ? p.text_position : p.speech_position;
  return (table.row(row) + pos.row(e.modal_position)).eval();
}

}  // namespace

void ModelConfig::Validate() const {
  if (layers < 1 || heads < 1 || d_model < 1 || d_ff < 1) throw UsageError("model dimensions must be positive");
  if (d_model % heads != 0) throw UsageError("d_model must be divisible by heads");
  if (v_text < 1 || v_speech < 1) throw UsageError("vocabulary sizes must be at least 1");
  if (max_pos_text < 1 || max_pos_speech < 1) throw UsageError("position tables must be non-empty");
}

template <typename T>
Parameters<T> Parameters<T>::Zeros(const ModelConfig& config) {
  config.Validate();
  const int d = config.d_model;
  Parameters<T> p;
  p.config = config;
  p.text_embedding = Matrix<T>::Zero(config.v_text + 1, d);
  p.speech_embedding = Matrix<T>::Zero(config.v_speech + 1, d);
  p.text_position = Matrix<T>::Zero(config.max_pos_text, d);
  p.speech_position = Matrix<T>::Zero(config.max_pos_speech, d);
  p.layers.resize(static_cast<std::size_t>(config.layers));
  for (auto& w : p.layers) {
    w.norm1_gain = Matrix<T>::Zero(1, d);
    w.norm1_bias = Matrix<T>::Zero(1, d);
    w.qkv = Matrix<T>::Zero(d, 3 * d);
    w.qkv_bias = Matrix<T>::Zero(1, 3 * d);
    w.attn_out = Matrix<T>::Zero(d, d);
    w.attn_out_bias = Matrix<T>::Zero(1, d);
    w.norm2_gain = Matrix<T>::Zero(1, d);
    w.norm2_bias = Matrix<T>::Zero(1, d);
    w.ff_in = Matrix<T>::Zero(d, config.d_ff);
    w.ff_in_bias = Matrix<T>::Zero(1, config.d_ff);
    w.ff_out = Matrix<T>::Zero(config.d_ff, d);
    w.ff_out_bias = Matrix<T>::Zero(1, d);
  }
  p.final_gain = Matrix<T>::Zero(1, d);
  p.final_bias = Matrix<T>::Zero(1, d);
  p.head = Matrix<T>::Zero(d, config.output_size());
  return p;
}

template <typename T>
std::size_t Parameters<T>::Count() const {
  std::size_t n = 0;
  ForEach([&](const std::string&, const Matrix<T>& m) { n += static_cast<std::size_t>(m.size()); });
  return n;
}

template <typename T>
Parameters<T> InitParams(const ModelConfig& config, std::uint64_t seed) {
  Parameters<T> p = Parameters<T>::Zeros(config);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 0.02);
  p.ForEach([&](const std::string& name, Matrix<T>& m) {
    const bool is_gain = name.ends_with(".gain");
    const bool is_bias = name.ends_with("bias");
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      m.data()[i] = is_gain ? T(1) : is_bias ? T(0) : static_cast<T>(normal(rng));
    }
  });
  return p;
}

template <typename T>
Matrix<T> Forward(const Parameters<T>& params, std::span<const InterleavedSeq> batch, ForwardCache<T>* cache) {
  const ModelConfig& cfg = params.config;
  const int d = cfg.d_model;
  const int heads = cfg.heads;
  const int dh = d / heads;
  const T scale = static_cast<T>(1) / std::sqrt(static_cast<T>(dh));

  std::vector<int> offsets{0};
  for (const auto& seq : batch) offsets.push_back(offsets.back() + static_cast<int>(seq.elements.size()));
  const int rows = offsets.back();

  Matrix<T> x(rows, d);
  for (std::size_t s = 0; s < batch.size(); ++s) {
    for (std::size_t t = 0; t < batch[s].elements.size(); ++t) {
      const Element& e = batch[s].elements[t];
      CheckElement(cfg, e);
      x.row(offsets[s] + static_cast<int>(t)) = EmbeddingRow(params, e);
    }
  }

  if (cache) {
    cache->offsets = offsets;
    cache->layers.assign(params.layers.size(), {});
  }
  LayerCache<T> scratch;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& w = params.layers[l];
    LayerCache<T>& c = cache ? cache->layers[l] : scratch;
    c.input = x;
    NormForward(x, w.norm1_gain, w.norm1_bias, c.norm1_hat, c.norm1_rstd, c.norm1_out);
    c.qkv.noalias() = c.norm1_out * w.qkv;
    c.qkv.rowwise() += w.qkv_bias.row(0);
    c.context.setZero(rows, d);
    c.probs.clear();
    for (std::size_t s = 0; s < batch.size(); ++s) {
      const int o = offsets[s];
      const int len = offsets[s + 1] - o;
      if (len == 0) continue;
      for (int h = 0; h < heads; ++h) {
        const auto q = c.qkv.block(o, h * dh, len, dh);
        const auto k = c.qkv.block(o, d + h * dh, len, dh);
        const auto v = c.qkv.block(o, 2 * d + h * dh, len, dh);
        Matrix<T> probs = (q * k.transpose()) * scale;
        CausalSoftmaxInPlace(probs);
        c.context.block(o, h * dh, len, dh).noalias() = probs * v;
        if (cache) c.probs.push_back(std::move(probs));
      }
    }
    c.hidden = x;
    c.hidden.noalias() += c.context * w.attn_out;
    c.hidden.rowwise() += w.attn_out_bias.row(0);
    NormForward(c.hidden, w.norm2_gain, w.norm2_bias, c.norm2_hat, c.norm2_rstd, c.norm2_out);
    c.ff_pre.noalias() = c.norm2_out * w.ff_in;
    c.ff_pre.rowwise() += w.ff_in_bias.row(0);
    c.ff_act = Gelu(c.ff_pre);
    x = c.hidden;
    x.noalias() += c.ff_act * w.ff_out;
    x.rowwise() += w.ff_out_bias.row(0);
  }

  Matrix<T> hat, out;
  ColVector<T> rstd;
  NormForward(x, params.final_gain, params.final_bias, hat, rstd, out);
  Matrix<T> logits = out * params.head;
  if (cache) {
    cache->final_input = std::move(x);
    cache->final_hat = std::move(hat);
    cache->final_rstd = std::move(rstd);
    cache->final_out = std::move(out);
  }
  return logits;
}

template <typename T>
std::vector<Matrix<T>> ForwardLogits(const Parameters<T>& params, std::span<const InterleavedSeq> batch) {
  const Matrix<T> stacked = Forward(params, batch);
  std::vector<Matrix<T>> out;
  Eigen::Index offset = 0;
  for (const auto& seq : batch) {
    const auto len = static_cast<Eigen::Index>(seq.elements.size());
    out.push_back(stacked.middleRows(offset, len));
    offset += len;
  }
  return out;
}

template <typename T>
T MaskedCrossEntropy(const Matrix<T>& logits, std::span<const InterleavedSeq> batch, int v_speech, Matrix<T>* dlogits,
                     long* supervised) {
  long count = 0;
  for (const auto& seq : batch) {
    if (!seq.elements.empty() && seq.loss_mask.size() != seq.elements.size() - 1) {
      throw DataError("loss mask length must be sequence length - 1");
    }
    count += std::count(seq.loss_mask.begin(), seq.loss_mask.end(), true);
  }
  if (count == 0) throw DataError("batch has no supervised positions");
  if (dlogits) dlogits->setZero(logits.rows(), logits.cols());

  T total = 0;
  const T inv = static_cast<T>(1) / static_cast<T>(count);
  Eigen::Index offset = 0;
  for (const auto& seq : batch) {
    for (std::size_t t = 0; t < seq.loss_mask.size(); ++t) {
      if (!seq.loss_mask[t]) continue;
      const Element& target = seq.elements[t + 1];
      const Eigen::Index cls = target.token == kEos ? v_speech : target.token;
      const auto row = logits.row(offset + static_cast<Eigen::Index>(t));
      const T max = row.maxCoeff();
      const auto shifted = (row.array() - max).exp();
      const T sum = shifted.sum();
      total += std::log(sum) + max - row(cls);
      if (dlogits) {
        auto drow = dlogits->row(offset + static_cast<Eigen::Index>(t));
        drow = (shifted / sum).matrix() * inv;
        drow(cls) -= inv;
      }
    }
    offset += static_cast<Eigen::Index>(seq.elements.size());
  }
  const T loss = total * inv;
  if (!std::isfinite(static_cast<double>(loss))) throw NumericError("loss is not finite");
  if (supervised) *supervised = count;
  return loss;
}

template <typename T>
LossAndGradients<T> LossAndGrads(const Parameters<T>& params, std::span<const InterleavedSeq> batch) {
  const ModelConfig& cfg = params.config;
  const int d = cfg.d_model;
  const int heads = cfg.heads;
  const int dh = d / heads;
  const T scale = static_cast<T>(1) / std::sqrt(static_cast<T>(dh));

  ForwardCache<T> cache;
  const Matrix<T> logits = Forward(params, batch, &cache);
  LossAndGradients<T> result;
  result.grads = Parameters<T>::Zeros(cfg);
  Matrix<T> dlogits;
  result.loss = MaskedCrossEntropy(logits, batch, cfg.v_speech, &dlogits, &result.supervised);
  Parameters<T>& g = result.grads;

  g.head.noalias() = cache.final_out.transpose() * dlogits;
  const Matrix<T> dfinal = dlogits * params.head.transpose();
  Matrix<T> dx = NormBackward(dfinal, cache.final_hat, cache.final_rstd, params.final_gain, g.final_gain, g.final_bias);

  const auto& offsets = cache.offsets;
  for (std::size_t li = params.layers.size(); li-- > 0;) {
    const auto& w = params.layers[li];
    const LayerCache<T>& c = cache.layers[li];
    auto& gw = g.layers[li];

    // x_out = hidden + gelu(norm2(hidden) W1 + b1) W2 + b2
    gw.ff_out.noalias() = c.ff_act.transpose() * dx;
    gw.ff_out_bias.row(0) = dx.colwise().sum();
    Matrix<T> dpre = (dx * w.ff_out.transpose()).array() * GeluGrad(c.ff_pre).array();
    gw.ff_in.noalias() = c.norm2_out.transpose() * dpre;
    gw.ff_in_bias.row(0) = dpre.colwise().sum();
    const Matrix<T> dnorm2 = dpre * w.ff_in.transpose();
    Matrix<T> dhidden = dx + NormBackward(dnorm2, c.norm2_hat, c.norm2_rstd, w.norm2_gain, gw.norm2_gain, gw.norm2_bias);

    // hidden = input + context Wo + bo
    gw.attn_out.noalias() = c.context.transpose() * dhidden;
    gw.attn_out_bias.row(0) = dhidden.colwise().sum();
    const Matrix<T> dcontext = dhidden * w.attn_out.transpose();
    Matrix<T> dqkv = Matrix<T>::Zero(c.qkv.rows(), c.qkv.cols());
    std::size_t prob_index = 0;
    for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
      const int o = offsets[s];
      const int len = offsets[s + 1] - o;
      if (len == 0) continue;
      for (int h = 0; h < heads; ++h) {
        const Matrix<T>& probs = c.probs[prob_index++];
        const auto q = c.qkv.block(o, h * dh, len, dh);
        const auto k = c.qkv.block(o, d + h * dh, len, dh);
        const auto v = c.qkv.block(o, 2 * d + h * dh, len, dh);
        const auto dctx = dcontext.block(o, h * dh, len, dh);
        const Matrix<T> dprobs = dctx * v.transpose();
        dqkv.block(o, 2 * d + h * dh, len, dh).noalias() = probs.transpose() * dctx;
        const ColVector<T> row_dot = (dprobs.array() * probs.array()).rowwise().sum().matrix();
        const Matrix<T> dscores = (probs.array() * (dprobs.colwise() - row_dot).array()).matrix() * scale;
        dqkv.block(o, h * dh, len, dh).noalias() = dscores * k;
        dqkv.block(o, d + h * dh, len, dh).noalias() = dscores.transpose() * q;
      }
    }
    gw.qkv.noalias() = c.norm1_out.transpose() * dqkv;
    gw.qkv_bias.row(0) = dqkv.colwise().sum();
    const Matrix<T> dnorm1 = dqkv * w.qkv.transpose();
    dx = dhidden + NormBackward(dnorm1, c.norm1_hat, c.norm1_rstd, w.norm1_gain, gw.norm1_gain, gw.norm1_bias);
  }

  for (std::size_t s = 0; s < batch.size(); ++s) {
    for (std::size_t t = 0; t < batch[s].elements.size(); ++t) {
      const Element& e = batch[s].elements[t];
      const auto grad_row = dx.row(offsets[s] + static_cast<int>(t));
      auto& table = e.modality == Modality::Text ? g.text_embedding : g.speech_embedding;
      table.row(e.token == kEos ? table.rows() - 1 : e.token) += grad_row;
      auto& pos = e.modality == Modality::Text ? g.text_position : g.speech_position;
      pos.row(e.modal_position) += grad_row;
    }
  }
  return result;
}

template <typename T>
DecodeState<T> NewDecodeState(const ModelConfig& config) {
  DecodeState<T> state;
  const int capacity = config.max_pos_text + config.max_pos_speech;
  state.keys.assign(static_cast<std::size_t>(config.layers), Matrix<T>(capacity, config.d_model));
  state.values.assign(static_cast<std::size_t>(config.layers), Matrix<T>(capacity, config.d_model));
  return state;
}

template <typename T>
RowVector<T> DecodeStep(const Parameters<T>& params, DecodeState<T>& state, Modality modality, TokenId token) {
  const ModelConfig& cfg = params.config;
  const int d = cfg.d_model;
  const int heads = cfg.heads;
  const int dh = d / heads;
  const T scale = static_cast<T>(1) / std::sqrt(static_cast<T>(dh));

  const Element e{modality, token, modality == Modality::Text ? state.text_count : state.speech_count};
  CheckElement(cfg, e);
  if (state.keys.size() != params.layers.size()) throw DataError("decode state does not match the model");
  const int t = state.length;
  const int len = t + 1;

  Matrix<T> x = EmbeddingRow(params, e);
  Matrix<T> hat, u;
  ColVector<T> rstd;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& w = params.layers[l];
    NormForward(x, w.norm1_gain, w.norm1_bias, hat, rstd, u);
    Matrix<T> qkv = u * w.qkv;
    qkv += w.qkv_bias;
    state.keys[l].row(t) = qkv.block(0, d, 1, d);
    state.values[l].row(t) = qkv.block(0, 2 * d, 1, d);
    Matrix<T> context(1, d);
    for (int h = 0; h < heads; ++h) {
      const auto q = qkv.block(0, h * dh, 1, dh);
      const auto k = state.keys[l].block(0, h * dh, len, dh);
      const auto v = state.values[l].block(0, h * dh, len, dh);
      RowVector<T> scores = (q * k.transpose()) * scale;
      const T max = scores.maxCoeff();
      scores = (scores.array() - max).exp().matrix();
      scores /= scores.sum();
      context.block(0, h * dh, 1, dh).noalias() = scores * v;
    }
    Matrix<T> hidden = x + context * w.attn_out + w.attn_out_bias;
    NormForward(hidden, w.norm2_gain, w.norm2_bias, hat, rstd, u);
    Matrix<T> pre = u * w.ff_in + w.ff_in_bias;
    x = hidden + Gelu(pre) * w.ff_out + w.ff_out_bias;
  }
  NormForward(x, params.final_gain, params.final_bias, hat, rstd, u);

  ++state.length;
  (modality == Modality::Text ? state.text_count : state.speech_count) += 1;
  return u * params.head;
}

int SampleToken(std::span<const float> logits, const SamplingParams& sampling, std::mt19937_64& rng, bool allow_eos) {
  if (!(sampling.temperature > 0.0)) throw UsageError("temperature must be positive");
  const int classes = static_cast<int>(logits.size());
  if (sampling.top_k < 1 || sampling.top_k > classes) throw UsageError("top_k must lie in [1, vocabulary size]");
  for (float v : logits) {
    if (!std::isfinite(v)) throw NumericError("non-finite logit");
  }
  const int eos = classes - 1;
  std::vector<int> order;
  order.reserve(logits.size());
  for (int i = 0; i < classes; ++i) {
    if (allow_eos || i != eos) order.push_back(i);
  }
  if (order.empty()) throw UsageError("no admissible output class");
  const auto k = std::min<std::size_t>(static_cast<std::size_t>(sampling.top_k), order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(), [&](int a, int b) {
    return logits[static_cast<std::size_t>(a)] > logits[static_cast<std::size_t>(b)] ||
           (logits[static_cast<std::size_t>(a)] == logits[static_cast<std::size_t>(b)] && a < b);
  });
  order.resize(k);
  if (k == 1) return order[0];
  std::vector<double> weights(k);
  const double top = logits[static_cast<std::size_t>(order[0])];
  for (std::size_t i = 0; i < k; ++i) {
    weights[i] = std::exp((logits[static_cast<std::size_t>(order[i])] - top) / sampling.temperature);
  }
  std::discrete_distribution<int> pick(weights.begin(), weights.end());
  return order[static_cast<std::size_t>(pick(rng))];
}

#define ISTLM_INSTANTIATE(T)                                                                                       \
  template struct Parameters<T>;                                                                                   \
  template Parameters<T> InitParams<T>(const ModelConfig&, std::uint64_t);                                         \
  template Matrix<T> Forward<T>(const Parameters<T>&, std::span<const InterleavedSeq>, ForwardCache<T>*);          \
  template std::vector<Matrix<T>> ForwardLogits<T>(const Parameters<T>&, std::span<const InterleavedSeq>);         \
  template T MaskedCrossEntropy<T>(const Matrix<T>&, std::span<const InterleavedSeq>, int, Matrix<T>*, long*);     \
  template LossAndGradients<T> LossAndGrads<T>(const Parameters<T>&, std::span<const InterleavedSeq>);             \
  template DecodeState<T> NewDecodeState<T>(const ModelConfig&);                                                   \
  template RowVector<T> DecodeStep<T>(const Parameters<T>&, DecodeState<T>&, Modality, TokenId);

ISTLM_INSTANTIATE(float)
ISTLM_INSTANTIATE(double)
ISTLM_INSTANTIATE(long double)

#undef ISTLM_INSTANTIATE

}  // namespace istlm
