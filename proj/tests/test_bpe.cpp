#include <doctest.h>

#include <map>
#include <random>
#include <set>

#include "istlm/bpe.hpp"
#include "istlm/error.hpp"

using namespace istlm;

namespace {

using Merge = std::pair<std::string, std::string>;

// Straightforward trainer over ASCII: re-counts every adjacent pair in every word each round.
std::vector<Merge> NaiveMerges(const std::vector<std::string>& texts, std::size_t merges_wanted) {
  std::vector<std::vector<std::string>> words;
  std::set<std::string> known{"</w>"};
  for (const auto& t : texts) {
    std::vector<std::string> cur;
    for (char c : t + " ") {
      if (c == ' ') {
        if (!cur.empty()) {
          cur.push_back("</w>");
          words.push_back(cur);
        }
        cur.clear();
      } else {
        cur.emplace_back(1, c);
        known.insert(cur.back());
      }
    }
  }
  std::vector<Merge> out;
  while (out.size() < merges_wanted) {
    std::map<Merge, int> counts;
    for (const auto& w : words) {
      for (std::size_t i = 0; i + 1 < w.size(); ++i) ++counts[{w[i], w[i + 1]}];
    }
    Merge best;
    int best_count = 0;
    for (const auto& [p, c] : counts) {
      if (c > best_count && !known.count(p.first + p.second)) {
        best = p;
        best_count = c;
      }
    }
    if (best_count == 0) break;
    for (auto& w : words) {
      std::vector<std::string> next;
      for (std::size_t i = 0; i < w.size(); ++i) {
        if (i + 1 < w.size() && w[i] == best.first && w[i + 1] == best.second) {
          next.push_back(best.first + best.second);
          ++i;
        } else {
          next.push_back(w[i]);
        }
      }
      w = next;
    }
    known.insert(best.first + best.second);
    out.push_back(best);
  }
  return out;
}

std::vector<std::string> Symbols(const BpeModel& m, const std::vector<TokenId>& ids) {
  std::vector<std::string> out;
  for (auto id : ids) out.push_back(m.symbol(id));
  return out;
}

std::string RandomAscii(std::mt19937_64& rng, std::size_t len) {
  static const std::string alphabet = "abcde fgh";
  std::string s;
  for (std::size_t i = 0; i < len; ++i) s += alphabet[rng() % alphabet.size()];
  return s;
}

}  // namespace

TEST_CASE("greedy merges on the hand example") {
  // Base symbols: a b c d </w>.
  const BpeModel m = BpeTrain({"aaabdaaabac"}, 5 + 3);
  const std::vector<Merge> expected{{"a", "a"}, {"a", "b"}, {"aa", "ab"}};
  CHECK(m.merges() == expected);
  CHECK(m.merges() == NaiveMerges({"aaabdaaabac"}, 3));
  const auto enc = m.Encode("aaabdaaabac");
  CHECK(Symbols(m, enc) == std::vector<std::string>{"aaab", "d", "aaab", "a", "c"});
  CHECK(Symbols(m, m.Encode("aaab")) == std::vector<std::string>{"aaab"});
}

TEST_CASE("zero merges") {
  const BpeModel m = BpeTrain({"ab"}, 3);
  CHECK(m.merges().empty());
  CHECK(m.Encode("ab") == std::vector<TokenId>{m.vocab().at("a"), m.vocab().at("b")});
  CHECK_THROWS_AS(BpeTrain({"ab"}, 2), Error);
}

TEST_CASE("unknown character") {
  const BpeModel m = BpeTrain({"abc"}, 10);
  try {
    m.Encode("a\xE2\x9C\x88");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Data);
    CHECK(std::string(e.what()).find("byte offset 1") != std::string::npos);
  }
}

TEST_CASE("decode") {
  const BpeModel m = BpeTrain({"hello world"}, 20);
  CHECK(m.Decode({}).empty());
  CHECK_THROWS_AS(m.Decode({static_cast<TokenId>(m.size())}), Error);
  CHECK_THROWS_AS(m.Decode({-1}), Error);
}

TEST_CASE("round trip and oracle agreement on random text") {
  std::mt19937_64 rng(3);
  std::vector<std::string> corpus;
  for (int i = 0; i < 40; ++i) corpus.push_back(RandomAscii(rng, 30));
  const BpeModel m = BpeTrain(corpus, 60);
  CHECK(m.merges() == NaiveMerges(corpus, m.merges().size()));
  for (int i = 0; i < 100; ++i) {
    const std::string s = RandomAscii(rng, rng() % 40);
    CHECK(m.Decode(m.Encode(s)) == s);
  }
  CHECK(m.Decode(m.Encode("  a  b ")) == "  a  b ");
}

TEST_CASE("determinism, monotone compression and json") {
  std::mt19937_64 rng(5);
  std::vector<std::string> corpus;
  for (int i = 0; i < 30; ++i) corpus.push_back(RandomAscii(rng, 25));
  CHECK(BpeTrain(corpus, 40).merges() == BpeTrain(corpus, 40).merges());
  std::size_t prev = SIZE_MAX;
  for (std::size_t size : {11, 20, 40, 80, 160}) {
    const BpeModel m = BpeTrain(corpus, size);
    std::size_t total = 0;
    for (const auto& t : corpus) total += m.Encode(t).size();
    CHECK(total <= prev);
    prev = total;
    const BpeModel back = BpeModel::FromJson(m.ToJson());
    CHECK(back.merges() == m.merges());
    CHECK(back.vocab() == m.vocab());
  }
}

TEST_CASE("reserved marker in input") {
  const BpeModel m = BpeTrain({"abc"}, 10);
  CHECK_THROWS_AS(m.Encode("a</w>"), Error);
}
