#include "istlm/bpe.hpp"

#include <algorithm>
#include <set>
#include <unordered_map>

#include <json.hpp>

#include "istlm/error.hpp"

namespace istlm {
namespace {

bool IsSpace(const std::string& cp) {
  return cp.size() == 1 && (cp[0] == ' ' || cp[0] == '\t' || cp[0] == '\n' || cp[0] == '\r' ||
                            cp[0] == '\v' || cp[0] == '\f');
}

// A unit is either one whitespace code point or one word: its code points plus the word-end marker.
struct Unit {
  std::vector<std::string> symbols;
  std::size_t byte_offset = 0;
  bool is_word = false;
};

std::vector<Unit> Segment(std::string_view text) {
  if (const auto pos = text.find(kWordEnd); pos != std::string_view::npos) {
    throw DataError("text contains the reserved word-end marker at byte offset " + std::to_string(pos));
  }
  std::vector<Unit> units;
  std::size_t offset = 0;
  Unit word{{}, 0, true};
  for (auto& cp : SplitCodePoints(text)) {
    if (IsSpace(cp)) {
      if (!word.symbols.empty()) {
        word.symbols.emplace_back(kWordEnd);
        units.push_back(std::move(word));
        word = Unit{{}, 0, true};
      }
      units.push_back({{cp}, offset, false});
    } else {
      if (word.symbols.empty()) word.byte_offset = offset;
      word.symbols.push_back(cp);
    }
    offset += cp.size();
  }
  if (!word.symbols.empty()) {
    word.symbols.emplace_back(kWordEnd);
    units.push_back(std::move(word));
  }
  return units;
}

}  // namespace

std::vector<std::string> SplitCodePoints(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const auto lead = static_cast<unsigned char>(text[i]);
    std::size_t len = 1;
    if (lead >= 0xF0) len = 4;
    else if (lead >= 0xE0) len = 3;
    else if (lead >= 0xC0) len = 2;
    else if (lead >= 0x80) throw DataError("malformed UTF-8 at byte offset " + std::to_string(i));
    if (i + len > text.size()) throw DataError("truncated UTF-8 at byte offset " + std::to_string(i));
    out.emplace_back(text.substr(i, len));
    i += len;
  }
  return out;
}

BpeModel::BpeModel(std::vector<std::pair<std::string, std::string>> merges, std::map<std::string, TokenId> vocab)
    : merges_(std::move(merges)), vocab_(std::move(vocab)) {
  Index();
}

void BpeModel::Index() {
  symbols_.assign(vocab_.size(), {});
  std::vector<bool> seen(vocab_.size(), false);
  for (const auto& [sym, id] : vocab_) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab_.size() || seen[static_cast<std::size_t>(id)]) {
      throw DataError("BPE vocabulary ids must be dense and unique");
    }
    seen[static_cast<std::size_t>(id)] = true;
    symbols_[static_cast<std::size_t>(id)] = sym;
  }
  merge_rank_.clear();
  for (std::size_t r = 0; r < merges_.size(); ++r) {
    const auto& [left, right] = merges_[r];
    const auto l = vocab_.find(left), rr = vocab_.find(right), m = vocab_.find(left + right);
    if (l == vocab_.end() || rr == vocab_.end() || m == vocab_.end()) {
      throw DataError("BPE merge " + std::to_string(r) + " refers to symbols missing from the vocabulary");
    }
    merge_rank_.emplace(std::make_pair(l->second, rr->second), std::make_pair(static_cast<int>(r), m->second));
  }
}

const std::string& BpeModel::symbol(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= symbols_.size()) {
    throw DataError("token id " + std::to_string(id) + " out of range for vocabulary of size " +
                    std::to_string(symbols_.size()));
  }
  return symbols_[static_cast<std::size_t>(id)];
}

std::vector<TokenId> BpeModel::EncodeWord(const std::vector<std::string>& chars) const {
  std::vector<TokenId> ids;
  ids.reserve(chars.size());
  for (const auto& c : chars) ids.push_back(vocab_.at(c));
  while (ids.size() > 1) {
    int best_rank = -1;
    TokenId merged = 0;
    for (std::size_t i = 0; i + 1 < ids.size(); ++i) {
      const auto it = merge_rank_.find({ids[i], ids[i + 1]});
      if (it != merge_rank_.end() && (best_rank < 0 || it->second.first < best_rank)) {
        best_rank = it->second.first;
        merged = it->second.second;
      }
    }
    if (best_rank < 0) break;
    const auto& pair = merges_[static_cast<std::size_t>(best_rank)];
    const TokenId left = vocab_.at(pair.first), right = vocab_.at(pair.second);
    std::vector<TokenId> next;
    next.reserve(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (i + 1 < ids.size() && ids[i] == left && ids[i + 1] == right) {
        next.push_back(merged);
        ++i;
      } else {
        next.push_back(ids[i]);
      }
    }
    ids = std::move(next);
  }
  return ids;
}

std::vector<TokenId> BpeModel::Encode(std::string_view text) const {
  std::vector<TokenId> out;
  for (const auto& unit : Segment(text)) {
    std::size_t offset = unit.byte_offset;
    for (const auto& sym : unit.symbols) {
      if (!vocab_.count(sym)) {
        if (sym == kWordEnd) throw DataError("BPE vocabulary lacks the word-end marker");
        throw DataError("unknown character '" + sym + "' at byte offset " + std::to_string(offset));
      }
      offset += sym.size();
    }
    // A word end left unmerged carries no text, so it is not emitted.
    for (TokenId id : EncodeWord(unit.symbols)) {
      if (symbols_[static_cast<std::size_t>(id)] != kWordEnd) out.push_back(id);
    }
  }
  return out;
}

std::string BpeModel::Decode(const std::vector<TokenId>& tokens) const {
  std::string out;
  for (TokenId id : tokens) {
    const std::string& sym = symbol(id);
    if (sym.size() >= kWordEnd.size() && std::string_view(sym).substr(sym.size() - kWordEnd.size()) == kWordEnd) {
      out.append(sym, 0, sym.size() - kWordEnd.size());
    } else {
      out += sym;
    }
  }
  return out;
}

std::string BpeModel::ToJson() const {
  nlohmann::ordered_json j;
  auto merges = nlohmann::ordered_json::array();
  for (const auto& [l, r] : merges_) merges.push_back({l, r});
  j["merges"] = std::move(merges);
  nlohmann::ordered_json vocab = nlohmann::ordered_json::object();
  for (const auto& [sym, id] : vocab_) vocab[sym] = id;
  j["vocab"] = std::move(vocab);
  return j.dump() + "\n";
}

BpeModel BpeModel::FromJson(const std::string& contents) {
  try {
    const auto j = nlohmann::json::parse(contents);
    std::vector<std::pair<std::string, std::string>> merges;
    for (const auto& m : j.at("merges")) merges.emplace_back(m.at(0).get<std::string>(), m.at(1).get<std::string>());
    std::map<std::string, TokenId> vocab;
    for (const auto& [sym, id] : j.at("vocab").items()) vocab.emplace(sym, id.get<TokenId>());
    return BpeModel(std::move(merges), std::move(vocab));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("BPE model parse error: ") + e.what());
  }
}

BpeModel BpeTrain(const std::vector<std::string>& texts, std::size_t target_size) {
  if (texts.empty()) throw UsageError("BPE training needs at least one text");

  // Distinct words with their frequencies; whitespace units never merge and only contribute base symbols.
  std::map<std::vector<std::string>, long> word_counts;
  std::set<std::string> base{std::string(kWordEnd)};
  for (const auto& text : texts) {
    for (auto& unit : Segment(text)) {
      base.insert(unit.symbols.begin(), unit.symbols.end());
      if (unit.is_word) ++word_counts[unit.symbols];
    }
  }
  if (target_size < base.size()) {
    throw UsageError("target size " + std::to_string(target_size) + " is below the " + std::to_string(base.size()) +
                     " base symbols");
  }

  std::map<std::string, TokenId> vocab;
  for (const auto& sym : base) vocab.emplace(sym, static_cast<TokenId>(vocab.size()));

  std::vector<std::pair<std::vector<std::string>, long>> words(word_counts.begin(), word_counts.end());
  std::vector<std::pair<std::string, std::string>> merges;
  while (vocab.size() < target_size) {
    std::map<std::pair<std::string, std::string>, long> pair_counts;
    for (const auto& [syms, count] : words) {
      for (std::size_t i = 0; i + 1 < syms.size(); ++i) pair_counts[{syms[i], syms[i + 1]}] += count;
    }
    // std::map iterates pairs in lexicographic order, so the first maximum wins ties.
    const std::pair<std::string, std::string>* best = nullptr;
    long best_count = 0;
    for (const auto& [pair, count] : pair_counts) {
      if (count > best_count && !vocab.count(pair.first + pair.second)) {
        best = &pair;
        best_count = count;
      }
    }
    if (best == nullptr) break;
    const auto chosen = *best;
    const std::string merged = chosen.first + chosen.second;
    for (auto& [syms, count] : words) {
      std::vector<std::string> next;
      next.reserve(syms.size());
      for (std::size_t i = 0; i < syms.size(); ++i) {
        if (i + 1 < syms.size() && syms[i] == chosen.first && syms[i + 1] == chosen.second) {
          next.push_back(merged);
          ++i;
        } else {
          next.push_back(syms[i]);
        }
      }
      syms = std::move(next);
    }
    vocab.emplace(merged, static_cast<TokenId>(vocab.size()));
    merges.push_back(chosen);
  }
  return BpeModel(std::move(merges), std::move(vocab));
}

}  // namespace istlm
