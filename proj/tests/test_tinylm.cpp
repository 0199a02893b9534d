#include <doctest.h>

#include <cmath>
#include <random>

#include "istlm/checkpoint.hpp"
#include "istlm/error.hpp"
#include "istlm/tinylm.hpp"

using namespace istlm;

namespace {

ModelConfig Small() {
  ModelConfig c;
  c.layers = 2;
  c.heads = 2;
  c.d_model = 16;
  c.d_ff = 24;
  c.v_text = 6;
  c.v_speech = 10;
  c.max_pos_text = 12;
  c.max_pos_speech = 24;
  c.seed = 4;
  return c;
}

// Wider-than-init random weights so that every gradient is well away from zero.
template <typename T>
Parameters<T> Scrambled(const ModelConfig& c, std::uint64_t seed) {
  Parameters<T> p = Parameters<T>::Zeros(c);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 0.35);
  p.ForEach([&](const std::string& name, Matrix<T>& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      m.data()[i] = static_cast<T>((name.ends_with(".gain") ? 1.0 : 0.0) + normal(rng));
    }
  });
  return p;
}

Sample RandomSample(std::mt19937_64& rng, const ModelConfig& c, int S, int T) {
  Sample s;
  s.id = "g";
  for (int i = 0; i < S; ++i) s.text.push_back(static_cast<TokenId>(rng() % c.v_text));
  for (int i = 0; i < T; ++i) s.speech.push_back(static_cast<TokenId>(rng() % c.v_speech));
  return s;
}

std::vector<InterleavedSeq> Batch(const ModelConfig& c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return {PrepareTrainingSequence(RandomSample(rng, c, 3, 7), Ratio::Streaming(1, 3)),
          PrepareTrainingSequence(RandomSample(rng, c, 4, 5), Ratio::Streaming(2, 2)),
          PrepareTrainingSequence(RandomSample(rng, c, 2, 4), Ratio::NonStreaming())};
}

template <typename T>
T Loss(const Parameters<T>& p, const std::vector<InterleavedSeq>& batch) {
  const Matrix<T> logits = Forward<T>(p, batch);
  return MaskedCrossEntropy<T>(logits, batch, p.config.v_speech);
}

}  // namespace

TEST_CASE("initialization") {
  const ModelConfig c = Small();
  const auto a = InitParams<float>(c, 3), b = InitParams<float>(c, 3), other = InitParams<float>(c, 4);
  CHECK(SerializeCheckpoint(a) == SerializeCheckpoint(b));
  CHECK(SerializeCheckpoint(a) != SerializeCheckpoint(other));
  a.ForEach([](const std::string& name, const Matrix<float>& m) {
    CHECK(m.allFinite());
    if (name.ends_with(".gain")) CHECK((m.array() == 1.0f).all());
    if (name.ends_with("bias")) CHECK((m.array() == 0.0f).all());
  });
  const ModelConfig d;
  const std::size_t per_layer = 2 * 128 + 128 * 384 + 384 + 128 * 128 + 128 + 2 * 128 + 128 * 512 + 512 + 512 * 128 + 128;
  const std::size_t expected = (65 + 257 + 512 + 512) * 128 + 4 * per_layer + 2 * 128 + 128 * 257;
  CHECK(Parameters<float>::Zeros(d).Count() == expected);
  CHECK_THROWS_AS([] { ModelConfig bad; bad.heads = 3; bad.Validate(); }(), Error);
}

TEST_CASE("forward shapes and positional encoding") {
  const ModelConfig c = Small();
  const auto p = InitParams<double>(c, 1);
  InterleavedSeq one;
  one.elements = {{Modality::Text, 2, 0}};
  one.loss_mask = {};
  const std::vector<InterleavedSeq> b1{one};
  const Matrix<double> logits = Forward<double>(p, b1);
  CHECK(logits.rows() == 1);
  CHECK(logits.cols() == c.v_speech + 1);

  InterleavedSeq two;
  two.elements = {{Modality::Speech, 3, 0}, {Modality::Speech, 3, 1}};
  const std::vector<InterleavedSeq> b2{two};
  const Matrix<double> l2 = Forward<double>(p, b2);
  // Without positions both rows would see the same context.
  InterleavedSeq shifted;
  shifted.elements = {{Modality::Speech, 3, 1}};
  const std::vector<InterleavedSeq> b3{shifted};
  InterleavedSeq base;
  base.elements = {{Modality::Speech, 3, 0}};
  const std::vector<InterleavedSeq> b4{base};
  CHECK((Forward<double>(p, b3) - Forward<double>(p, b4)).cwiseAbs().maxCoeff() > 1e-6);
  CHECK((l2.row(0) - l2.row(1)).cwiseAbs().maxCoeff() > 1e-6);
}

TEST_CASE("causality") {
  const ModelConfig c = Small();
  const auto p = Scrambled<double>(c, 9);
  auto batch = Batch(c, 2);
  const Matrix<double> before = Forward<double>(p, std::span(batch).first(1));
  auto& seq = batch[0];
  const std::size_t t = 5;
  std::mt19937_64 rng(1);
  std::shuffle(seq.elements.begin() + t + 1, seq.elements.end(), rng);
  for (std::size_t i = t + 1; i < seq.elements.size(); ++i) seq.elements[i].token = static_cast<TokenId>(rng() % 6);
  const Matrix<double> after = Forward<double>(p, std::span(batch).first(1));
  CHECK((before.topRows(t + 1) - after.topRows(t + 1)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((before.bottomRows(before.rows() - t - 1) - after.bottomRows(after.rows() - t - 1)).cwiseAbs().maxCoeff() >
        1e-6);
}

TEST_CASE("batched forward equals one sequence at a time") {
  const ModelConfig c = Small();
  const auto p = Scrambled<double>(c, 5);
  const auto batch = Batch(c, 3);
  const auto parts = ForwardLogits<double>(p, batch);
  for (std::size_t s = 0; s < batch.size(); ++s) {
    const Matrix<double> alone = Forward<double>(p, std::span(batch).subspan(s, 1));
    CHECK((alone - parts[s]).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("masked cross-entropy") {
  const ModelConfig c = Small();
  const auto batch = Batch(c, 4);
  long rows = 0, supervised_rows = 0;
  for (const auto& s : batch) {
    rows += static_cast<long>(s.elements.size());
    for (bool b : s.loss_mask) supervised_rows += b;
  }
  const Matrix<double> zeros = Matrix<double>::Zero(rows, c.v_speech + 1);
  long supervised = 0;
  const double uniform = MaskedCrossEntropy<double>(zeros, batch, c.v_speech, nullptr, &supervised);
  CHECK(std::abs(uniform - std::log(11.0)) < 1e-12);
  CHECK(supervised == supervised_rows);

  const Matrix<double> zeros256 = Matrix<double>::Zero(rows, 257);
  CHECK(std::abs(MaskedCrossEntropy<double>(zeros256, batch, 256) - std::log(257.0)) < 1e-6);

  // Rows whose target is text, and each final row, are unsupervised.
  std::mt19937_64 rng(2);
  std::normal_distribution<double> normal(0.0, 3.0);
  Matrix<double> logits = Matrix<double>::Zero(rows, c.v_speech + 1);
  for (Eigen::Index i = 0; i < logits.size(); ++i) logits.data()[i] = normal(rng);
  const double base = MaskedCrossEntropy<double>(logits, batch, c.v_speech);
  Matrix<double> perturbed = logits;
  int offset = 0;
  for (const auto& s : batch) {
    for (std::size_t t = 0; t < s.elements.size(); ++t) {
      const bool sup = t < s.loss_mask.size() && s.loss_mask[t];
      if (!sup) perturbed.row(offset + static_cast<int>(t)).array() += 100.0 * normal(rng);
    }
    offset += static_cast<int>(s.elements.size());
  }
  CHECK(MaskedCrossEntropy<double>(perturbed, batch, c.v_speech) == base);

  InterleavedSeq text_only;
  text_only.elements = {{Modality::Text, 1, 0}, {Modality::Text, 2, 1}};
  text_only.loss_mask = {false};
  const std::vector<InterleavedSeq> none{text_only};
  CHECK_THROWS_AS(MaskedCrossEntropy<double>(Matrix<double>::Zero(2, 11), none, 10), Error);
}

TEST_CASE("gradients match central finite differences") {
  const ModelConfig c = Small();
  const auto p = Scrambled<long double>(c, 13);
  const auto batch = Batch(c, 6);
  const auto lg = LossAndGrads<long double>(p, batch);
  CHECK(std::abs(static_cast<double>(lg.loss - Loss(p, batch))) < 1e-15);

  std::vector<const Matrix<long double>*> grads;
  lg.grads.ForEach([&](const std::string&, const Matrix<long double>& g) { grads.push_back(&g); });
  Parameters<long double> work = p;
  const long double h = 1e-4L;
  double worst = 0.0;
  std::string worst_name;
  std::size_t checked = 0, k = 0;
  work.ForEach([&](const std::string& name, Matrix<long double>& m) {
    const Matrix<long double>& g = *grads[k++];
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      const long double saved = m.data()[i];
      m.data()[i] = saved + h;
      const long double up = Loss(work, batch);
      m.data()[i] = saved - h;
      const long double down = Loss(work, batch);
      m.data()[i] = saved;
      const long double fd = (up - down) / (2 * h);
      const long double an = g.data()[i];
      const long double scale = std::max({std::abs(fd), std::abs(an), 1e-6L});
      const double rel = static_cast<double>(std::abs(fd - an) / scale);
      if (rel > worst) {
        worst = rel;
        worst_name = name;
      }
      ++checked;
    }
  });
  INFO("worst tensor " << worst_name << " relative error " << worst);
  CHECK(checked == p.Count());
  CHECK(worst < 1e-4);
}

TEST_CASE("incremental decoding equals full recompute") {
  const ModelConfig c = Small();
  const auto p = Scrambled<double>(c, 21);
  std::mt19937_64 rng(8);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const auto seq = PrepareTrainingSequence(RandomSample(rng, c, 1 + static_cast<int>(rng() % 5), 1 + static_cast<int>(rng() % 12)),
                                             Ratio::Streaming(1 + static_cast<int>(rng() % 3), 1 + static_cast<int>(rng() % 4)));
    const std::vector<InterleavedSeq> batch{seq};
    const Matrix<double> full = Forward<double>(p, batch);
    DecodeState<double> state = NewDecodeState<double>(c);
    const std::size_t prefix = 1 + rng() % seq.elements.size();
    for (std::size_t t = 0; t < prefix; ++t) {
      const auto& e = seq.elements[t];
      const RowVector<double> row = DecodeStep<double>(p, state, e.modality, e.token);
      CHECK(state.length == static_cast<int>(t + 1));
      worst = std::max(worst, (row - full.row(static_cast<Eigen::Index>(t))).cwiseAbs().maxCoeff());
    }
  }
  CHECK(worst < 1e-6);

  // Single precision stays close as well.
  const auto pf = p.Cast<float>();
  DecodeState<float> sf = NewDecodeState<float>(c);
  const RowVector<float> first = DecodeStep<float>(pf, sf, Modality::Text, 1);
  InterleavedSeq one;
  one.elements = {{Modality::Text, 1, 0}};
  const std::vector<InterleavedSeq> b{one};
  CHECK((first - Forward<float>(pf, b).row(0)).cwiseAbs().maxCoeff() < 1e-5f);
}

TEST_CASE("sampling") {
  std::vector<float> logits{0.1f, 2.0f, -1.0f, 1.9f, 0.5f};
  std::mt19937_64 rng(1);
  for (int i = 0; i < 20; ++i) CHECK(SampleToken(logits, {1.0, 1}, rng) == 1);
  std::vector<float> peaked(5, -1e4f);
  peaked[3] = 1e4f;
  for (int i = 0; i < 20; ++i) CHECK(SampleToken(peaked, {1.0, 5}, rng) == 3);
  std::vector<float> eos_heavy{0.0f, 0.0f, 50.0f};
  for (int i = 0; i < 20; ++i) CHECK(SampleToken(eos_heavy, {1.0, 3}, rng, false) != 2);
  std::mt19937_64 a(5), b(5);
  std::vector<int> sa, sb;
  for (int i = 0; i < 50; ++i) {
    sa.push_back(SampleToken(logits, {1.0, 3}, a));
    sb.push_back(SampleToken(logits, {1.0, 3}, b));
  }
  CHECK(sa == sb);
  for (int s : sa) CHECK((s == 1 || s == 3 || s == 4));
}

TEST_CASE("checkpoint round trip") {
  const ModelConfig c = Small();
  const auto p = InitParams<float>(c, 2);
  const std::string bytes = SerializeCheckpoint(p);
  CHECK(bytes.rfind("ISTLM1", 0) == 0);
  const auto back = DeserializeCheckpoint(bytes);
  CHECK(back.config == c);
  CHECK(SerializeCheckpoint(back) == bytes);
  CHECK_THROWS_AS(DeserializeCheckpoint(bytes.substr(0, bytes.size() - 3)), Error);
  CHECK_THROWS_AS(DeserializeCheckpoint("garbage"), Error);
  CHECK(ModelConfigFromJson(ModelConfigToJson(c)) == c);
}
