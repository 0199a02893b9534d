#include "istlm/corpus.hpp"

#include <algorithm>
#include <cstdio>
#include <random>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "istlm/error.hpp"
#include "istlm/util.hpp"

namespace istlm {
namespace {

using Json = nlohmann::json;
using OrderedJson = nlohmann::ordered_json;

[[noreturn]] void Fail(const Sample& sample, const std::string& rule) {
  throw DataError("sample '" + sample.id + "': " + rule);
}

void CheckPartition(const Sample& sample, bool text_side, int total) {
  int cursor = 0;
  for (const auto& w : sample.words) {
    const Range r = text_side ? w.text : w.speech;
    const char* stream = text_side ? "text" : "speech";
    if (r.begin >= r.end) Fail(sample, std::string("empty ") + stream + " span at word " + std::to_string(w.word_index));
    if (r.begin < cursor) Fail(sample, "spans overlap");
    if (r.begin > cursor) Fail(sample, std::string("spans leave a gap in the ") + stream + " stream");
    cursor = r.end;
  }
  if (cursor != total) {
    Fail(sample, std::string("spans do not cover the ") + (text_side ? "text" : "speech") + " stream");
  }
}

}  // namespace

void ValidateSample(const Sample& sample, const VocabSizes& vocab, int max_words) {
  if (sample.text.empty()) Fail(sample, "empty text stream");
  if (sample.speech.empty()) Fail(sample, "empty speech stream");
  if (sample.words.empty()) Fail(sample, "no word spans");
  if (static_cast<int>(sample.words.size()) > max_words) {
    Fail(sample, "word count " + std::to_string(sample.words.size()) + " exceeds maximum " +
                     std::to_string(max_words));
  }
  for (std::size_t i = 0; i < sample.words.size(); ++i) {
    if (sample.words[i].word_index != static_cast<int>(i)) Fail(sample, "word indices not sequential");
  }
  for (TokenId t : sample.text) {
    if (t < 0 || t >= vocab.text) Fail(sample, "text token " + std::to_string(t) + " out of vocabulary");
  }
  for (TokenId t : sample.speech) {
    if (t < 0 || t >= vocab.speech) Fail(sample, "speech token " + std::to_string(t) + " out of vocabulary");
  }
  CheckPartition(sample, true, static_cast<int>(sample.text.size()));
  CheckPartition(sample, false, static_cast<int>(sample.speech.size()));
}

void ValidateCorpus(const Corpus& corpus, int max_words) {
  std::unordered_set<std::string> seen;
  const VocabSizes vocab{corpus.v_text, corpus.v_speech};
  for (const auto& s : corpus.samples) {
    ValidateSample(s, vocab, max_words);
    if (!seen.insert(s.id).second) Fail(s, "duplicate id");
  }
}

std::string SampleToJson(const Sample& sample) {
  OrderedJson j;
  j["id"] = sample.id;
  j["text"] = sample.text;
  j["speech"] = sample.speech;
  auto words = OrderedJson::array();
  for (const auto& w : sample.words) {
    words.push_back({w.text.begin, w.text.end, w.speech.begin, w.speech.end});
  }
  j["words"] = std::move(words);
  return j.dump();
}

Sample SampleFromJson(const std::string& line) {
  const Json j = Json::parse(line);
  Sample s;
  s.id = j.at("id").get<std::string>();
  s.text = j.at("text").get<std::vector<TokenId>>();
  s.speech = j.at("speech").get<std::vector<TokenId>>();
  const auto& words = j.at("words");
  for (std::size_t i = 0; i < words.size(); ++i) {
    const auto span = words[i].get<std::vector<int>>();
    if (span.size() != 4) throw DataError("sample '" + s.id + "': word span must have 4 entries");
    s.words.push_back({static_cast<int>(i), {span[0], span[1]}, {span[2], span[3]}});
  }
  return s;
}

Corpus ParseJsonl(const std::string& contents, const VocabSizes& vocab, int max_words) {
  Corpus corpus;
  corpus.v_text = vocab.text;
  corpus.v_speech = vocab.speech;
  std::unordered_set<std::string> seen;
  std::istringstream in(contents);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Sample sample;
    try {
      sample = SampleFromJson(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError("line " + std::to_string(line_no) + ": parse error: " + e.what());
    }
    ValidateSample(sample, vocab, max_words);
    if (!seen.insert(sample.id).second) Fail(sample, "duplicate id");
    corpus.samples.push_back(std::move(sample));
  }
  return corpus;
}

Corpus LoadJsonl(const std::string& path, const VocabSizes& vocab, int max_words) {
  return ParseJsonl(ReadFile(path), vocab, max_words);
}

std::string CorpusToJsonl(const Corpus& corpus) {
  std::string out;
  for (const auto& s : corpus.samples) {
    out += SampleToJson(s);
    out += '\n';
  }
  return out;
}

void SaveJsonl(const Corpus& corpus, const std::string& path) { WriteFile(path, CorpusToJsonl(corpus)); }

std::string LexiconToJson(const Lexicon& lexicon) {
  OrderedJson j;
  j["v_text"] = lexicon.v_text;
  j["v_speech"] = lexicon.v_speech;
  j["jitter_prob"] = lexicon.jitter_prob;
  j["motifs"] = lexicon.motifs;
  return j.dump() + "\n";
}

Lexicon LexiconFromJson(const std::string& contents) {
  Lexicon lex;
  try {
    const Json j = Json::parse(contents);
    lex.v_text = j.at("v_text").get<int>();
    lex.v_speech = j.at("v_speech").get<int>();
    lex.jitter_prob = j.at("jitter_prob").get<double>();
    lex.motifs = j.at("motifs").get<std::vector<std::vector<TokenId>>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("lexicon parse error: ") + e.what());
  }
  if (static_cast<int>(lex.motifs.size()) != lex.v_text) throw DataError("lexicon: one motif per text symbol required");
  for (std::size_t s = 0; s < lex.motifs.size(); ++s) {
    const auto& motif = lex.motifs[s];
    if (motif.empty() || motif[0] != static_cast<TokenId>(4 * s)) {
      throw DataError("lexicon: motif " + std::to_string(s) + " must start with its block base");
    }
    for (TokenId t : motif) {
      if (t / 4 != static_cast<TokenId>(s) || t >= lex.v_speech) {
        throw DataError("lexicon: motif " + std::to_string(s) + " leaves its speech-token block");
      }
    }
  }
  return lex;
}

Lexicon LoadLexicon(const std::string& path) { return LexiconFromJson(ReadFile(path)); }

void SaveLexicon(const Lexicon& lexicon, const std::string& path) { WriteFile(path, LexiconToJson(lexicon)); }

SyntheticData GenerateSynthetic(const SyntheticConfig& config) {
  if (config.v_speech % 4 != 0 || config.v_text < 1 || config.v_speech < 4 * config.v_text) {
    throw UsageError("speech vocabulary must be a multiple of 4 with one 4-token block per text symbol");
  }
  if (config.words_min < 1 || config.words_min > config.words_max || config.words_max > kDefaultMaxWords) {
    throw UsageError("word counts must satisfy 1 <= words_min <= words_max <= 72");
  }
  if (config.jitter_prob < 0.0 || config.jitter_prob > 1.0) throw UsageError("jitter_prob must lie in [0, 1]");
  if (config.n_samples < 0) throw UsageError("sample count must be non-negative");

  std::mt19937_64 rng(config.seed);
  SyntheticData data;
  Lexicon& lex = data.lexicon;
  lex.v_text = config.v_text;
  lex.v_speech = config.v_speech;
  lex.jitter_prob = config.jitter_prob;
  std::uniform_int_distribution<int> motif_len(2, 4);
  std::uniform_int_distribution<int> block_offset(1, 3);
  for (int s = 0; s < config.v_text; ++s) {
    std::vector<TokenId> motif{4 * s};
    const int len = motif_len(rng);
    for (int k = 1; k < len; ++k) motif.push_back(4 * s + block_offset(rng));
    lex.motifs.push_back(std::move(motif));
  }

  Corpus& corpus = data.corpus;
  corpus.v_text = config.v_text;
  corpus.v_speech = config.v_speech;
  std::uniform_int_distribution<int> word_count(config.words_min, config.words_max);
  std::uniform_int_distribution<int> symbol(0, config.v_text - 1);
  std::bernoulli_distribution jitter(config.jitter_prob);
  char id[32];
  for (int i = 0; i < config.n_samples; ++i) {
    Sample s;
    std::snprintf(id, sizeof(id), "syn-%06d", i);
    s.id = id;
    const int words = word_count(rng);
    for (int w = 0; w < words; ++w) {
      const TokenId sym = symbol(rng);
      const auto& motif = lex.motifs[static_cast<std::size_t>(sym)];
      const int text_begin = static_cast<int>(s.text.size());
      const int speech_begin = static_cast<int>(s.speech.size());
      s.text.push_back(sym);
      s.speech.insert(s.speech.end(), motif.begin(), motif.end());
      if (jitter(rng)) s.speech.push_back(motif.back());
      s.words.push_back({w, {text_begin, static_cast<int>(s.text.size())},
                         {speech_begin, static_cast<int>(s.speech.size())}});
    }
    corpus.samples.push_back(std::move(s));
  }
  return data;
}

std::vector<TokenId> DecodeSpeechToText(const Lexicon& lexicon, const std::vector<TokenId>& speech) {
  std::vector<TokenId> out;
  std::size_t p = 0;
  while (p < speech.size()) {
    const TokenId sym = speech[p] / 4;
    out.push_back(sym);
    std::size_t advance = 1;
    if (sym >= 0 && static_cast<std::size_t>(sym) < lexicon.motifs.size()) {
      const auto& motif = lexicon.motifs[static_cast<std::size_t>(sym)];
      if (p + motif.size() <= speech.size() &&
          std::equal(motif.begin(), motif.end(), speech.begin() + static_cast<std::ptrdiff_t>(p))) {
        advance = motif.size();
        // A one-token motif has no final token distinct from the next word onset.
        if (motif.size() > 1 && p + advance < speech.size() && speech[p + advance] == motif.back()) ++advance;
      }
    }
    p += advance;
  }
  return out;
}

}  // namespace istlm
