#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "istlm/corpus.hpp"

namespace istlm {

enum class Modality : std::uint8_t { Text, Speech };

// End-of-stream marker inside an Element; the model maps it to the extra
// embedding row of the element's modality.
inline constexpr TokenId kEos = -1;

// Fixed text:speech chunk ratio n:m, or the non-streaming layout (all text, then all speech).
class Ratio {
 public:
  static Ratio Streaming(int n, int m);  // throws UsageError unless n, m >= 1
  static Ratio NonStreaming() { return Ratio(); }
  // Grammar: "N:M" or "inf".
  static Ratio Parse(std::string_view text);

  bool streaming() const { return n_ > 0; }
  int text_chunk() const { return n_; }    // 0 when non-streaming
  int speech_chunk() const { return m_; }  // 0 when non-streaming
  std::string ToString() const;
  bool operator==(const Ratio&) const = default;

 private:
  Ratio() = default;
  Ratio(int n, int m) : n_(n), m_(m) {}
  int n_ = 0;
  int m_ = 0;
};

struct Element {
  Modality modality = Modality::Text;
  TokenId token = 0;  // kEos for either end-of-stream symbol
  int modal_position = 0;
  bool eos() const { return token == kEos; }
  bool operator==(const Element&) const = default;
};

struct InterleavedSeq {
  std::vector<Element> elements;
  // loss_mask[t] is true iff elements[t + 1] is a speech element (speech EOS included).
  std::vector<bool> loss_mask;
};

InterleavedSeq Interleave(const std::vector<TokenId>& text, const std::vector<TokenId>& speech, const Ratio& ratio);
std::pair<std::vector<TokenId>, std::vector<TokenId>> Deinterleave(const InterleavedSeq& seq);

struct PositionLimits {
  int text = 512;
  int speech = 512;
};

// Appends text EOS and speech EOS, interleaves, and checks that each modality fits its position table.
InterleavedSeq PrepareTrainingSequence(const Sample& sample, const Ratio& ratio,
                                       std::optional<PositionLimits> limits = std::nullopt);

// Sequence position of every element, by modality and stream index.
class PositionIndex {
 public:
  explicit PositionIndex(const InterleavedSeq& seq);
  int position(Modality modality, int stream_index) const;
  std::pair<Modality, int> locate(int position) const;
  const std::vector<int>& text() const { return text_; }
  const std::vector<int>& speech() const { return speech_; }

 private:
  std::vector<int> text_;
  std::vector<int> speech_;
  std::vector<std::pair<Modality, int>> inverse_;
};

}  // namespace istlm
