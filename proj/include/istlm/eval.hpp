#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "istlm/corpus.hpp"
#include "istlm/interleave.hpp"
#include "istlm/tinylm.hpp"
#include "istlm/train.hpp"

namespace istlm {

std::size_t EditDistance(const std::vector<TokenId>& a, const std::vector<TokenId>& b);

// EditDistance(ref, hyp) / |ref|; throws DataError for an empty reference.
double TokenErrorRate(const std::vector<TokenId>& ref, const std::vector<TokenId>& hyp);

struct SweepConfig {
  std::vector<Ratio> ratios;
  ModelConfig model;
  TrainConfig train;
  SamplingParams sampling;
  int eval_samples = 200;  // taken from the end of the corpus; the rest trains
  std::uint64_t seed = 1;
  int threads = 1;
};

struct SweepRow {
  Ratio ratio = Ratio::NonStreaming();
  double token_error_rate = 0.0;
  double mean_first_packet_latency = 0.0;
  std::size_t samples = 0;
  std::optional<std::string> failure;
};

struct SweepResult {
  std::vector<SweepRow> rows;
};

struct EvalOutcome {
  double token_error_rate = 0.0;
  double mean_first_packet_latency = 0.0;
  std::size_t samples = 0;
};

// Continuation-style evaluation: the first word of each sample is the prompt,
// the remaining words are synthesized and decoded through the lexicon.
EvalOutcome EvaluateContinuation(const Parameters<float>& params, const std::vector<Sample>& samples,
                                 const Lexicon& lexicon, const Ratio& ratio, const SamplingParams& sampling,
                                 std::uint64_t seed, int threads = 1);

struct SplitCorpus {
  Corpus train;
  std::vector<Sample> eval;
};
// Last `eval_samples` samples with at least two words form the evaluation split.
SplitCorpus SplitForSweep(const Corpus& corpus, int eval_samples);

// Trains and evaluates one model per ratio. A failing ratio is recorded and the sweep continues.
SweepResult RunSweep(const Corpus& corpus, const Lexicon& lexicon, const SweepConfig& config);

// Columns n,m,ter,latency,samples; n = m = -1 for the non-streaming layout.
std::string SweepToCsv(const SweepResult& result);
SweepResult SweepFromCsv(const std::string& csv);

}  // namespace istlm
