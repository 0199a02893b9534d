#pragma once

#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "istlm/interleave.hpp"
#include "istlm/tinylm.hpp"

namespace istlm {

// Autoregressive model seen by the scheduler: feed one element, get logits
// (over speech classes plus speech EOS, last) for the next one.
class StreamModel {
 public:
  virtual ~StreamModel() = default;
  virtual void Reset() = 0;
  virtual std::vector<float> Feed(Modality modality, TokenId token) = 0;
  virtual int speech_vocab() const = 0;
  virtual PositionLimits limits() const = 0;
};

// Adapter running the transformer with a KV cache.
class TinyLmStreamModel final : public StreamModel {
 public:
  explicit TinyLmStreamModel(const Parameters<float>& params);
  void Reset() override;
  std::vector<float> Feed(Modality modality, TokenId token) override;
  int speech_vocab() const override { return params_.config.v_speech; }
  PositionLimits limits() const override { return params_.config.limits(); }

 private:
  const Parameters<float>& params_;
  DecodeState<float> state_;
};

// Picks the next speech class from logits. eos_allowed is false while text remains.
// The returned class equals speech_vocab() for speech EOS.
using SpeechChooser = std::function<int(std::span<const float> logits, bool eos_allowed)>;

SpeechChooser TopKSampler(const SamplingParams& sampling, std::uint64_t seed);
// Emits `speech` in order, then speech EOS.
SpeechChooser TeacherForcing(std::vector<TokenId> speech, int speech_vocab);

struct StreamRequest {
  std::vector<TokenId> prompt_text;
  std::vector<TokenId> prompt_speech;
  std::vector<TokenId> target_text;
  Ratio ratio = Ratio::NonStreaming();
  std::optional<int> max_generated;  // default 10 x total text tokens + 64
  SamplingParams sampling;
  std::uint64_t seed = 0;
};

enum class StreamEventKind {
  TextFed,
  SpeechForced,
  SpeechSampled,
  TextEosFed,
  SpeechEosEmitted,
  DrainEntered,
  SpeechEosSuppressed,
};

const char* ToString(StreamEventKind kind);

struct StreamEvent {
  int step = 0;  // sequence position of the element (or of the next element, for markers)
  StreamEventKind kind = StreamEventKind::TextFed;
  std::optional<TokenId> token;
  bool operator==(const StreamEvent&) const = default;
};

enum class Termination { Eos, Cap };

struct StreamResult {
  std::vector<TokenId> generated_speech;
  std::vector<StreamEvent> events;
  Termination terminated_by = Termination::Eos;
};

int DefaultMaxGenerated(const StreamRequest& request);

StreamResult SynthesizeStream(StreamModel& model, const StreamRequest& request, const SpeechChooser& chooser);
StreamResult SynthesizeStream(const Parameters<float>& params, const StreamRequest& request);

// Interleaved element order (modality, token) realized by a result's event log.
std::vector<Element> FedElements(const StreamResult& result);

// Sequence steps elapsed before the first sampled speech token.
int FirstPacketLatency(const StreamResult& result);

struct ReleaseCall {
  Range emit;
  Range feed;
  int trigger = 0;  // tokens generated when this call can run
};

struct ReleasePlan {
  std::vector<ReleaseCall> calls;
};

ReleasePlan ChunkReleasePlan(int total_tokens, int chunk_size, int right_context);
std::string ReleasePlanToCsv(const ReleasePlan& plan);

std::string StreamResultToJson(const StreamResult& result);

}  // namespace istlm
