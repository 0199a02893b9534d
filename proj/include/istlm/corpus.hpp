#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace istlm {

using TokenId = std::int32_t;

// Half-open interval [begin, end) over token indices.
struct Range {
  int begin = 0;
  int end = 0;
  int size() const { return end - begin; }
  bool operator==(const Range&) const = default;
};

// Alignment of one word onto both token streams.
struct WordSpan {
  int word_index = 0;
  Range text;
  Range speech;
  bool operator==(const WordSpan&) const = default;
};

struct Sample {
  std::string id;
  std::vector<TokenId> text;
  std::vector<TokenId> speech;
  std::vector<WordSpan> words;
  bool operator==(const Sample&) const = default;
};

struct VocabSizes {
  int text = 64;
  int speech = 256;
};

inline constexpr int kDefaultMaxWords = 72;

struct Corpus {
  std::vector<Sample> samples;
  int v_text = 64;
  int v_speech = 256;
  bool operator==(const Corpus&) const = default;
};

// Synthetic stand-in for a speech tokenizer: each text symbol s owns the
// speech-token block {4s, .., 4s+3} and a motif drawn from it with motif[0] = 4s.
struct Lexicon {
  int v_text = 64;
  int v_speech = 256;
  double jitter_prob = 0.25;
  std::vector<std::vector<TokenId>> motifs;
  bool operator==(const Lexicon&) const = default;
};

struct SyntheticConfig {
  int n_samples = 10000;
  int words_min = 2;
  int words_max = 48;
  double jitter_prob = 0.25;
  int v_text = 64;
  int v_speech = 256;
  std::uint64_t seed = 1;
};

struct SyntheticData {
  Corpus corpus;
  Lexicon lexicon;
};

// Throws DataError naming the sample id and the violated rule.
void ValidateSample(const Sample& sample, const VocabSizes& vocab, int max_words = kDefaultMaxWords);
void ValidateCorpus(const Corpus& corpus, int max_words = kDefaultMaxWords);

std::string SampleToJson(const Sample& sample);
Sample SampleFromJson(const std::string& line);

Corpus ParseJsonl(const std::string& contents, const VocabSizes& vocab = {},
                  int max_words = kDefaultMaxWords);
Corpus LoadJsonl(const std::string& path, const VocabSizes& vocab = {},
                 int max_words = kDefaultMaxWords);
std::string CorpusToJsonl(const Corpus& corpus);
void SaveJsonl(const Corpus& corpus, const std::string& path);

std::string LexiconToJson(const Lexicon& lexicon);
Lexicon LexiconFromJson(const std::string& contents);
Lexicon LoadLexicon(const std::string& path);
void SaveLexicon(const Lexicon& lexicon, const std::string& path);

SyntheticData GenerateSynthetic(const SyntheticConfig& config);

// Greedy left-to-right decoding of speech tokens back into text symbols. Total:
// tokens that do not match a motif decode to their block owner one at a time.
std::vector<TokenId> DecodeSpeechToText(const Lexicon& lexicon, const std::vector<TokenId>& speech);

}  // namespace istlm
