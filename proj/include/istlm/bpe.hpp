#pragma once

#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "istlm/corpus.hpp"

namespace istlm {

// Symbol appended to every whitespace-delimited word before merging. It decodes
// to nothing and is dropped from encodings when left unmerged; whitespace characters are kept as standalone symbols so that
// decoding is an exact inverse of encoding.
inline constexpr std::string_view kWordEnd = "</w>";

class BpeModel {
 public:
  BpeModel() = default;
  BpeModel(std::vector<std::pair<std::string, std::string>> merges, std::map<std::string, TokenId> vocab);

  const std::vector<std::pair<std::string, std::string>>& merges() const { return merges_; }
  const std::map<std::string, TokenId>& vocab() const { return vocab_; }
  std::size_t size() const { return symbols_.size(); }
  const std::string& symbol(TokenId id) const;

  std::vector<TokenId> Encode(std::string_view text) const;
  std::string Decode(const std::vector<TokenId>& tokens) const;

  std::string ToJson() const;
  static BpeModel FromJson(const std::string& contents);

 private:
  void Index();
  std::vector<TokenId> EncodeWord(const std::vector<std::string>& chars) const;

  std::vector<std::pair<std::string, std::string>> merges_;
  std::map<std::string, TokenId> vocab_;
  std::vector<std::string> symbols_;
  std::map<std::pair<TokenId, TokenId>, std::pair<int, TokenId>> merge_rank_;  // -> (rank, merged id)
};

// Greedy pair-merge training over whitespace-split words. Equal-frequency pairs
// are broken by the lexicographically smallest (left, right) symbol strings.
BpeModel BpeTrain(const std::vector<std::string>& texts, std::size_t target_size);

// UTF-8 code points of `text`, each as its own string. Throws DataError on malformed input.
std::vector<std::string> SplitCodePoints(std::string_view text);

}  // namespace istlm
