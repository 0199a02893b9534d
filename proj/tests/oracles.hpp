// Independent reference implementations used by the unit and acceptance tests.
#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "istlm/corpus.hpp"
#include "istlm/interleave.hpp"
#include "istlm/measures.hpp"

namespace oracle {

using istlm::Modality;
using istlm::TokenId;

// Closed-form sequence positions of text token i and speech token j.
inline int TextPosition(int i, int n, int m, int T) { return i + std::min((i / n) * m, T); }
inline int SpeechPosition(int j, int n, int m, int S) { return j + std::min((j / m + 1) * n, S); }

struct Slot {
  Modality modality;
  int index;
};

// Places every token at its closed-form position; n == 0 means all text then all speech.
inline std::vector<Slot> Layout(int S, int T, int n, int m) {
  std::vector<Slot> seq(static_cast<std::size_t>(S + T), Slot{Modality::Text, -1});
  for (int i = 0; i < S; ++i) seq[n ? TextPosition(i, n, m, T) : i] = {Modality::Text, i};
  for (int j = 0; j < T; ++j) seq[n ? SpeechPosition(j, n, m, S) : S + j] = {Modality::Speech, j};
  return seq;
}

struct Positions {
  std::vector<int> text, speech;
};

inline Positions Enumerate(const istlm::Sample& s, const istlm::Ratio& r) {
  const int S = static_cast<int>(s.text.size()), T = static_cast<int>(s.speech.size());
  Positions p{std::vector<int>(S), std::vector<int>(T)};
  const auto seq = Layout(S, T, r.text_chunk(), r.speech_chunk());
  for (int pos = 0; pos < S + T; ++pos) {
    (seq[pos].modality == Modality::Text ? p.text : p.speech)[seq[pos].index] = pos;
  }
  return p;
}

struct WordMeasures {
  double D, A, F;
};

// Brute force straight from the definitions, scanning every pair of positions.
inline WordMeasures Measure(const istlm::Sample& s, const istlm::Ratio& r, std::size_t j) {
  const Positions p = Enumerate(s, r);
  const auto& w = s.words[j];
  double D = 0, A = 0, F = 0;
  for (int k = w.speech.begin; k < w.speech.end; ++k) {
    double d = 0;
    for (int t = w.text.begin; t < w.text.end; ++t) d += p.speech[k] - p.text[t];
    D += d / w.text.size();
    for (std::size_t f = j + 1; f < s.words.size(); ++f) {
      bool all = true;
      for (int t = s.words[f].text.begin; t < s.words[f].text.end; ++t) all = all && p.text[t] < p.speech[k];
      A += all;
    }
    bool before = true;
    for (int t = w.text.begin; t < w.text.end; ++t) before = before && p.speech[k] < p.text[t];
    F += before;
  }
  const double l2 = w.speech.size();
  return {D / l2, A / l2, F / l2};
}

struct Column {
  std::vector<double> D, A, F;
};

// Two-pass mean and population deviation per word position.
inline istlm::MeasureTable Table(const istlm::Corpus& c, const istlm::Ratio& r, int J) {
  std::vector<Column> cols(J);
  for (const auto& s : c.samples) {
    for (std::size_t j = 0; j < s.words.size() && j < static_cast<std::size_t>(J); ++j) {
      const auto wm = Measure(s, r, j);
      cols[j].D.push_back(wm.D);
      cols[j].A.push_back(wm.A);
      cols[j].F.push_back(wm.F);
    }
  }
  istlm::MeasureTable t;
  for (const auto& col : cols) {
    const double n = col.D.size();
    auto mean = [&](const std::vector<double>& v) {
      double x = 0;
      for (double e : v) x += e;
      return n ? x / n : 0.0;
    };
    const double mu = mean(col.D);
    double var = 0;
    for (double e : col.D) var += (e - mu) * (e - mu);
    t.mu_D.push_back(mu);
    t.sigma_D.push_back(n ? std::sqrt(var / n) : 0.0);
    t.A.push_back(mean(col.A));
    t.F.push_back(mean(col.F));
    t.count.push_back(static_cast<long>(n));
  }
  return t;
}

// Random sample with W words, each owning 1..max_text text and 1..max_speech speech tokens.
inline istlm::Sample RandomSample(std::mt19937_64& rng, int max_words, int max_text, int max_speech,
                                  const std::string& id = "r") {
  istlm::Sample s;
  s.id = id;
  const int W = std::uniform_int_distribution<int>(1, max_words)(rng);
  for (int w = 0; w < W; ++w) {
    const int lt = std::uniform_int_distribution<int>(1, max_text)(rng);
    const int ls = std::uniform_int_distribution<int>(1, max_speech)(rng);
    istlm::WordSpan span;
    span.word_index = w;
    span.text = {static_cast<int>(s.text.size()), static_cast<int>(s.text.size()) + lt};
    span.speech = {static_cast<int>(s.speech.size()), static_cast<int>(s.speech.size()) + ls};
    for (int i = 0; i < lt; ++i) s.text.push_back(static_cast<TokenId>(rng() % 64));
    for (int i = 0; i < ls; ++i) s.speech.push_back(static_cast<TokenId>(rng() % 256));
    s.words.push_back(span);
  }
  return s;
}

}  // namespace oracle
