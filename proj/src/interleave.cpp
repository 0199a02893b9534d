#include "istlm/interleave.hpp"

#include <algorithm>
#include <charconv>
#include <climits>

#include "istlm/error.hpp"

namespace istlm {

Ratio Ratio::Streaming(int n, int m) {
  if (n < 1) throw UsageError("n must be ≥ 1");
  if (m < 1) throw UsageError("m must be ≥ 1");
  return Ratio(n, m);
}

Ratio Ratio::Parse(std::string_view text) {
  if (text == "inf") return NonStreaming();
  const auto colon = text.find(':');
  if (colon == std::string_view::npos) throw UsageError("ratio must be N:M or inf, got '" + std::string(text) + "'");
  auto parse_int = [&](std::string_view part) {
    int value = 0;
    const auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), value);
    if (ec != std::errc() || ptr != part.data() + part.size()) {
      throw UsageError("ratio must be N:M or inf, got '" + std::string(text) + "'");
    }
    return value;
  };
  return Streaming(parse_int(text.substr(0, colon)), parse_int(text.substr(colon + 1)));
}

std::string Ratio::ToString() const {
  return streaming() ? std::to_string(n_) + ":" + std::to_string(m_) : std::string("inf");
}

InterleavedSeq Interleave(const std::vector<TokenId>& text, const std::vector<TokenId>& speech, const Ratio& ratio) {
  const std::size_t n = ratio.streaming() ? static_cast<std::size_t>(ratio.text_chunk()) : SIZE_MAX;
  const std::size_t m = ratio.streaming() ? static_cast<std::size_t>(ratio.speech_chunk()) : SIZE_MAX;
  InterleavedSeq seq;
  seq.elements.reserve(text.size() + speech.size());
  std::size_t i = 0, j = 0;
  while (i < text.size() || j < speech.size()) {
    for (const std::size_t stop = i + std::min(n, text.size() - i); i < stop; ++i) {
      seq.elements.push_back({Modality::Text, text[i], static_cast<int>(i)});
    }
    for (const std::size_t stop = j + std::min(m, speech.size() - j); j < stop; ++j) {
      seq.elements.push_back({Modality::Speech, speech[j], static_cast<int>(j)});
    }
  }
  if (!seq.elements.empty()) {
    seq.loss_mask.reserve(seq.elements.size() - 1);
    for (std::size_t t = 1; t < seq.elements.size(); ++t) {
      seq.loss_mask.push_back(seq.elements[t].modality == Modality::Speech);
    }
  }
  return seq;
}

std::pair<std::vector<TokenId>, std::vector<TokenId>> Deinterleave(const InterleavedSeq& seq) {
  std::pair<std::vector<TokenId>, std::vector<TokenId>> out;
  for (const auto& e : seq.elements) {
    (e.modality == Modality::Text ? out.first : out.second).push_back(e.token);
  }
  return out;
}

InterleavedSeq PrepareTrainingSequence(const Sample& sample, const Ratio& ratio, std::optional<PositionLimits> limits) {
  const int text_len = static_cast<int>(sample.text.size()) + 1;
  const int speech_len = static_cast<int>(sample.speech.size()) + 1;
  if (limits && (text_len > limits->text || speech_len > limits->speech)) {
    throw DataError("sample '" + sample.id + "': sequence needs " + std::to_string(text_len) + " text and " +
                    std::to_string(speech_len) + " speech positions, model allows " + std::to_string(limits->text) +
                    " and " + std::to_string(limits->speech));
  }
  auto text = sample.text;
  auto speech = sample.speech;
  text.push_back(kEos);
  speech.push_back(kEos);
  return Interleave(text, speech, ratio);
}

PositionIndex::PositionIndex(const InterleavedSeq& seq) {
  inverse_.reserve(seq.elements.size());
  for (std::size_t k = 0; k < seq.elements.size(); ++k) {
    const auto& e = seq.elements[k];
    auto& stream = e.modality == Modality::Text ? text_ : speech_;
    inverse_.emplace_back(e.modality, static_cast<int>(stream.size()));
    stream.push_back(static_cast<int>(k));
  }
}

int PositionIndex::position(Modality modality, int stream_index) const {
  const auto& stream = modality == Modality::Text ? text_ : speech_;
  if (stream_index < 0 || static_cast<std::size_t>(stream_index) >= stream.size()) {
    throw DataError("stream index " + std::to_string(stream_index) + " out of range");
  }
  return stream[static_cast<std::size_t>(stream_index)];
}

std::pair<Modality, int> PositionIndex::locate(int position) const {
  if (position < 0 || static_cast<std::size_t>(position) >= inverse_.size()) {
    throw DataError("sequence position " + std::to_string(position) + " out of range");
  }
  return inverse_[static_cast<std::size_t>(position)];
}

}  // namespace istlm
