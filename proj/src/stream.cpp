#include "istlm/stream.hpp"

#include <algorithm>
#include <climits>
#include <memory>
#include <sstream>

#include <json.hpp>

#include "istlm/error.hpp"

namespace istlm {

TinyLmStreamModel::TinyLmStreamModel(const Parameters<float>& params)
    : params_(params), state_(NewDecodeState<float>(params.config)) {}

void TinyLmStreamModel::Reset() {
  state_.length = 0;
  state_.text_count = 0;
  state_.speech_count = 0;
}

std::vector<float> TinyLmStreamModel::Feed(Modality modality, TokenId token) {
  const RowVector<float> logits = DecodeStep(params_, state_, modality, token);
  return {logits.data(), logits.data() + logits.size()};
}

SpeechChooser TopKSampler(const SamplingParams& sampling, std::uint64_t seed) {
  auto rng = std::make_shared<std::mt19937_64>(seed);
  return [sampling, rng](std::span<const float> logits, bool eos_allowed) {
    return SampleToken(logits, sampling, *rng, eos_allowed);
  };
}

SpeechChooser TeacherForcing(std::vector<TokenId> speech, int speech_vocab) {
  auto cursor = std::make_shared<std::size_t>(0);
  return [speech = std::move(speech), speech_vocab, cursor](std::span<const float>, bool) {
    return *cursor < speech.size() ? speech[(*cursor)++] : speech_vocab;
  };
}

const char* ToString(StreamEventKind kind) {
  switch (kind) {
    case StreamEventKind::TextFed: return "TextFed";
    case StreamEventKind::SpeechForced: return "SpeechForced";
    case StreamEventKind::SpeechSampled: return "SpeechSampled";
    case StreamEventKind::TextEosFed: return "TextEosFed";
    case StreamEventKind::SpeechEosEmitted: return "SpeechEosEmitted";
    case StreamEventKind::DrainEntered: return "DrainEntered";
    case StreamEventKind::SpeechEosSuppressed: return "SpeechEosSuppressed";
  }
  return "?";
}

int DefaultMaxGenerated(const StreamRequest& request) {
  return 10 * static_cast<int>(request.prompt_text.size() + request.target_text.size()) + 64;
}

namespace {

class Scheduler {
 public:
  Scheduler(StreamModel& model, const StreamRequest& request, const SpeechChooser& chooser)
      : model_(model), request_(request), chooser_(chooser), eos_class_(model.speech_vocab()) {
    cap_ = request.max_generated.value_or(DefaultMaxGenerated(request));
    if (cap_ < 1) throw UsageError("max_generated must be at least 1");
  }

  StreamResult Run() {
    std::vector<TokenId> text = request_.prompt_text;
    text.insert(text.end(), request_.target_text.begin(), request_.target_text.end());
    text.push_back(kEos);
    const PositionLimits limits = model_.limits();
    if (static_cast<int>(text.size()) > limits.text || static_cast<int>(request_.prompt_speech.size()) > limits.speech) {
      throw DataError("request exceeds the model's position tables");
    }

    model_.Reset();
    const std::size_t n = request_.ratio.streaming() ? static_cast<std::size_t>(request_.ratio.text_chunk()) : SIZE_MAX;
    const int m = request_.ratio.streaming() ? request_.ratio.speech_chunk() : 0;
    std::size_t fed_text = 0;
    while (!done_) {
      const std::size_t stop = fed_text + std::min(n, text.size() - fed_text);
      for (; fed_text < stop; ++fed_text) {
        const TokenId tok = text[fed_text];
        Feed(Modality::Text, tok, tok == kEos ? StreamEventKind::TextEosFed : StreamEventKind::TextFed);
      }
      if (fed_text == text.size()) break;
      for (int slot = 0; slot < m && !done_; ++slot) SpeechSlot(false);
    }
    if (!done_) {
      result_.events.push_back({position_, StreamEventKind::DrainEntered, std::nullopt});
      while (!done_) SpeechSlot(true);
    }
    return std::move(result_);
  }

 private:
  void Feed(Modality modality, TokenId token, StreamEventKind kind) {
    result_.events.push_back({position_, kind, token});
    logits_ = model_.Feed(modality, token);
    ++position_;
  }

  void SpeechSlot(bool eos_allowed) {
    if (forced_ < request_.prompt_speech.size()) {
      Feed(Modality::Speech, request_.prompt_speech[forced_++], StreamEventKind::SpeechForced);
      return;
    }
    int cls = chooser_(logits_, true);
    if (cls == eos_class_ && !eos_allowed) {
      result_.events.push_back({position_, StreamEventKind::SpeechEosSuppressed, std::nullopt});
      cls = chooser_(logits_, false);
      if (cls == eos_class_) throw DataError("speech chooser returned EOS while EOS was disallowed");
    }
    if (cls == eos_class_) {
      result_.events.push_back({position_, StreamEventKind::SpeechEosEmitted, std::nullopt});
      result_.terminated_by = Termination::Eos;
      done_ = true;
      return;
    }
    if (cls < 0 || cls > eos_class_) throw DataError("speech chooser returned an invalid class");
    result_.generated_speech.push_back(cls);
    Feed(Modality::Speech, cls, StreamEventKind::SpeechSampled);
    if (static_cast<int>(result_.generated_speech.size()) >= cap_) {
      result_.terminated_by = Termination::Cap;
      done_ = true;
    }
  }

  StreamModel& model_;
  const StreamRequest& request_;
  const SpeechChooser& chooser_;
  const int eos_class_;
  int cap_ = 0;
  StreamResult result_;
  std::vector<float> logits_;
  std::size_t forced_ = 0;
  int position_ = 0;
  bool done_ = false;
};

}  // namespace

StreamResult SynthesizeStream(StreamModel& model, const StreamRequest& request, const SpeechChooser& chooser) {
  return Scheduler(model, request, chooser).Run();
}

StreamResult SynthesizeStream(const Parameters<float>& params, const StreamRequest& request) {
  TinyLmStreamModel model(params);
  return SynthesizeStream(model, request, TopKSampler(request.sampling, request.seed));
}

std::vector<Element> FedElements(const StreamResult& result) {
  std::vector<Element> out;
  int text = 0, speech = 0;
  for (const auto& e : result.events) {
    switch (e.kind) {
      case StreamEventKind::TextFed:
      case StreamEventKind::TextEosFed:
        out.push_back({Modality::Text, *e.token, text++});
        break;
      case StreamEventKind::SpeechForced:
      case StreamEventKind::SpeechSampled:
        out.push_back({Modality::Speech, *e.token, speech++});
        break;
      case StreamEventKind::SpeechEosEmitted:
        out.push_back({Modality::Speech, kEos, speech++});
        break;
      default:
        break;
    }
  }
  return out;
}

int FirstPacketLatency(const StreamResult& result) {
  for (const auto& e : result.events) {
    if (e.kind == StreamEventKind::SpeechSampled) return e.step;
  }
  throw DataError("stream produced no sampled speech tokens");
}

ReleasePlan ChunkReleasePlan(int total_tokens, int chunk_size, int right_context) {
  if (chunk_size < 1) throw UsageError("chunk size must be at least 1");
  if (right_context < 0) throw UsageError("right context must be non-negative");
  if (total_tokens < 0) throw UsageError("token count must be non-negative");
  ReleasePlan plan;
  for (int begin = 0; begin < total_tokens; begin += chunk_size) {
    const int emit_end = std::min(begin + chunk_size, total_tokens);
    const int feed_end = std::min(begin + chunk_size + right_context, total_tokens);
    plan.calls.push_back({{begin, emit_end}, {begin, feed_end}, feed_end});
  }
  return plan;
}

std::string ReleasePlanToCsv(const ReleasePlan& plan) {
  std::ostringstream out;
  out << "call,emit_begin,emit_end,feed_begin,feed_end,trigger\n";
  for (std::size_t i = 0; i < plan.calls.size(); ++i) {
    const auto& c = plan.calls[i];
    out << i << ',' << c.emit.begin << ',' << c.emit.end << ',' << c.feed.begin << ',' << c.feed.end << ','
        << c.trigger << '\n';
  }
  return out.str();
}

std::string StreamResultToJson(const StreamResult& result) {
  nlohmann::ordered_json j;
  j["generated"] = result.generated_speech;
  auto events = nlohmann::ordered_json::array();
  for (const auto& e : result.events) {
    events.push_back({e.step, ToString(e.kind), e.token ? nlohmann::ordered_json(*e.token) : nullptr});
  }
  j["events"] = std::move(events);
  bool sampled = false;
  for (const auto& e : result.events) sampled = sampled || e.kind == StreamEventKind::SpeechSampled;
  j["latency"] = sampled ? nlohmann::ordered_json(FirstPacketLatency(result)) : nullptr;
  j["terminated_by"] = result.terminated_by == Termination::Eos ? "eos" : "cap";
  return j.dump() + "\n";
}

}  // namespace istlm
