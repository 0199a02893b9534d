#include "istlm/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <spdlog/spdlog.h>

#include "istlm/error.hpp"
#include "istlm/stream.hpp"
#include "istlm/util.hpp"

namespace istlm {

std::size_t EditDistance(const std::vector<TokenId>& a, const std::vector<TokenId>& b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double TokenErrorRate(const std::vector<TokenId>& ref, const std::vector<TokenId>& hyp) {
  if (ref.empty()) throw DataError("token error rate needs a non-empty reference");
  return static_cast<double>(EditDistance(ref, hyp)) / static_cast<double>(ref.size());
}

EvalOutcome EvaluateContinuation(const Parameters<float>& params, const std::vector<Sample>& samples,
                                 const Lexicon& lexicon, const Ratio& ratio, const SamplingParams& sampling,
                                 std::uint64_t seed, int threads) {
  struct PerSample {
    double ter = 0.0;
    double latency = 0.0;
    bool has_latency = false;
  };
  std::vector<PerSample> outcomes(samples.size());
  const PositionLimits limits = params.config.limits();
  ParallelFor(samples.size(), threads, [&](std::size_t i) {
    const Sample& s = samples[i];
    if (s.words.size() < 2) throw DataError("sample '" + s.id + "' has no words to continue");
    const WordSpan& first = s.words.front();
    StreamRequest request;
    request.prompt_text.assign(s.text.begin(), s.text.begin() + first.text.end);
    request.prompt_speech.assign(s.speech.begin(), s.speech.begin() + first.speech.end);
    request.target_text.assign(s.text.begin() + first.text.end, s.text.end());
    request.ratio = ratio;
    request.sampling = sampling;
    request.seed = seed + 0x9E3779B97F4A7C15ULL * (i + 1);
    request.max_generated =
        std::min(DefaultMaxGenerated(request), limits.speech - static_cast<int>(request.prompt_speech.size()));
    const StreamResult result = SynthesizeStream(params, request);
    outcomes[i].ter = TokenErrorRate(request.target_text, DecodeSpeechToText(lexicon, result.generated_speech));
    for (const auto& e : result.events) {
      if (e.kind == StreamEventKind::SpeechSampled) {
        outcomes[i].latency = e.step;
        outcomes[i].has_latency = true;
        break;
      }
    }
  });
  EvalOutcome out;
  std::size_t with_latency = 0;
  for (const auto& o : outcomes) {
    out.token_error_rate += o.ter;
    if (o.has_latency) {
      out.mean_first_packet_latency += o.latency;
      ++with_latency;
    }
  }
  out.samples = samples.size();
  if (!samples.empty()) out.token_error_rate /= static_cast<double>(samples.size());
  out.mean_first_packet_latency =
      with_latency ? out.mean_first_packet_latency / static_cast<double>(with_latency) : std::nan("");
  return out;
}

SplitCorpus SplitForSweep(const Corpus& corpus, int eval_samples) {
  if (eval_samples < 1) throw UsageError("evaluation split must hold at least one sample");
  SplitCorpus split;
  split.train.v_text = corpus.v_text;
  split.train.v_speech = corpus.v_speech;
  std::vector<bool> held(corpus.samples.size(), false);
  int taken = 0;
  for (std::size_t i = corpus.samples.size(); i-- > 0 && taken < eval_samples;) {
    if (corpus.samples[i].words.size() >= 2) {
      held[i] = true;
      ++taken;
    }
  }
  for (std::size_t i = 0; i < corpus.samples.size(); ++i) {
    (held[i] ? split.eval : split.train.samples).push_back(corpus.samples[i]);
  }
  if (split.eval.empty()) throw DataError("no sample has two or more words for evaluation");
  if (split.train.samples.empty()) throw DataError("evaluation split leaves no training samples");
  return split;
}

SweepResult RunSweep(const Corpus& corpus, const Lexicon& lexicon, const SweepConfig& config) {
  const SplitCorpus split = SplitForSweep(corpus, config.eval_samples);
  SweepResult result;
  result.rows.resize(config.ratios.size());
  // Ratios run concurrently; leftover workers go to per-sample evaluation.
  const int outer = std::max(1, std::min<int>(config.threads, static_cast<int>(config.ratios.size())));
  const int inner = std::max(1, config.threads / outer);
  ParallelFor(config.ratios.size(), outer, [&](std::size_t r) {
    SweepRow& row = result.rows[r];
    row.ratio = config.ratios[r];
    try {
      TrainConfig train = config.train;
      train.seed = config.seed;
      train.on_step = nullptr;
      ModelConfig model = config.model;
      model.seed = config.seed;
      const TrainResult trained = Train(split.train, row.ratio, model, train);
      const EvalOutcome eval =
          EvaluateContinuation(trained.params, split.eval, lexicon, row.ratio, config.sampling, config.seed, inner);
      row.token_error_rate = eval.token_error_rate;
      row.mean_first_packet_latency = eval.mean_first_packet_latency;
      row.samples = eval.samples;
      spdlog::info("ratio {}: ter {:.4f} latency {:.2f} final loss {:.4f}", row.ratio.ToString(),
                   row.token_error_rate, row.mean_first_packet_latency,
                   trained.loss_curve.empty() ? 0.0 : trained.loss_curve.back());
    } catch (const std::exception& e) {
      row.failure = e.what();
      row.token_error_rate = std::nan("");
      row.mean_first_packet_latency = std::nan("");
      spdlog::warn("ratio {} failed: {}", row.ratio.ToString(), e.what());
    }
  });
  return result;
}

std::string SweepToCsv(const SweepResult& result) {
  std::ostringstream out;
  out << "n,m,ter,latency,samples\n";
  for (const auto& row : result.rows) {
    const int n = row.ratio.streaming() ? row.ratio.text_chunk() : -1;
    const int m = row.ratio.streaming() ? row.ratio.speech_chunk() : -1;
    const double nan = std::nan("");
    out << n << ',' << m << ',' << FormatReal(row.failure ? nan : row.token_error_rate) << ','
        << FormatReal(row.failure ? nan : row.mean_first_packet_latency) << ',' << row.samples << '\n';
  }
  return out.str();
}

SweepResult SweepFromCsv(const std::string& csv) {
  SweepResult result;
  std::istringstream in(csv);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 || line.empty()) continue;
    const auto f = SplitString(line, ',');
    if (f.size() != 5) throw DataError("sweep CSV line " + std::to_string(line_no) + ": expected 5 fields");
    SweepRow row;
    try {
      const int n = std::stoi(f[0]), m = std::stoi(f[1]);
      row.ratio = n < 0 ? Ratio::NonStreaming() : Ratio::Streaming(n, m);
      row.token_error_rate = std::stod(f[2]);
      row.mean_first_packet_latency = std::stod(f[3]);
      row.samples = std::stoul(f[4]);
    } catch (const Error&) {
      throw DataError("sweep CSV line " + std::to_string(line_no) + ": invalid ratio");
    } catch (const std::exception&) {
      throw DataError("sweep CSV line " + std::to_string(line_no) + ": malformed number");
    }
    if (std::isnan(row.token_error_rate)) row.failure = "failed";
    result.rows.push_back(row);
  }
  return result;
}

}  // namespace istlm
