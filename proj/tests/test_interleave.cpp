#include <doctest.h>

#include <random>

#include "istlm/error.hpp"
#include "istlm/interleave.hpp"
#include "oracles.hpp"

using namespace istlm;

namespace {

// Text ids 0.., speech ids 100.. so that the layout is readable in failures.
std::vector<TokenId> Ids(int count, int base) {
  std::vector<TokenId> v;
  for (int i = 0; i < count; ++i) v.push_back(base + i);
  return v;
}

std::vector<TokenId> Flat(const InterleavedSeq& seq) {
  std::vector<TokenId> v;
  for (const auto& e : seq.elements) v.push_back(e.token);
  return v;
}

std::vector<int> Mask(const InterleavedSeq& seq) { return {seq.loss_mask.begin(), seq.loss_mask.end()}; }

Sample MakeSample(int S, int T) {
  Sample s;
  s.id = "s";
  s.text = Ids(S, 0);
  s.speech = Ids(T, 100);
  return s;
}

}  // namespace

TEST_CASE("ratio parsing") {
  CHECK(Ratio::Parse("1:3") == Ratio::Streaming(1, 3));
  CHECK(Ratio::Parse("inf") == Ratio::NonStreaming());
  CHECK(Ratio::Parse("12:36").ToString() == "12:36");
  CHECK(Ratio::NonStreaming().ToString() == "inf");
  for (const char* bad : {"0:3", "3:0", "1-3", "", "a:b", "1:", "-1:2"}) {
    CHECK_THROWS_AS(Ratio::Parse(bad), Error);
  }
  try {
    Ratio::Parse("0:3");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Usage);
    CHECK(std::string(e.what()) == "n must be ≥ 1");
  }
}

TEST_CASE("hand examples") {
  CHECK(Flat(Interleave(Ids(3, 0), Ids(6, 100), Ratio::Streaming(1, 2))) ==
        std::vector<TokenId>{0, 100, 101, 1, 102, 103, 2, 104, 105});
  CHECK(Flat(Interleave(Ids(2, 0), Ids(7, 100), Ratio::Streaming(1, 2))) ==
        std::vector<TokenId>{0, 100, 101, 1, 102, 103, 104, 105, 106});
  CHECK(Flat(Interleave(Ids(2, 0), Ids(5, 100), Ratio::NonStreaming())) ==
        std::vector<TokenId>{0, 1, 100, 101, 102, 103, 104});
}

TEST_CASE("deinterleave") {
  CHECK(Deinterleave(InterleavedSeq{}).first.empty());
  const auto [x, y] = Deinterleave(Interleave(Ids(3, 0), Ids(6, 100), Ratio::Streaming(1, 2)));
  CHECK(x == Ids(3, 0));
  CHECK(y == Ids(6, 100));
}

TEST_CASE("training sequence EOS and mask") {
  const auto a = PrepareTrainingSequence(MakeSample(1, 2), Ratio::Streaming(1, 2));
  CHECK(Flat(a) == std::vector<TokenId>{0, 100, 101, kEos, kEos});
  CHECK(a.elements[3].modality == Modality::Text);
  CHECK(a.elements[4].modality == Modality::Speech);
  CHECK(Mask(a) == std::vector<int>{1, 1, 0, 1});

  const auto b = PrepareTrainingSequence(MakeSample(2, 2), Ratio::NonStreaming());
  CHECK(Flat(b) == std::vector<TokenId>{0, 1, kEos, 100, 101, kEos});
  CHECK(Mask(b) == std::vector<int>{0, 0, 1, 1, 1});
}

TEST_CASE("position limits") {
  PositionLimits limits{4, 4};
  CHECK_NOTHROW(PrepareTrainingSequence(MakeSample(3, 3), Ratio::Streaming(1, 3), limits));
  try {
    PrepareTrainingSequence(MakeSample(3, 4), Ratio::Streaming(1, 3), limits);
    FAIL("expected an overflow error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Data);
    CHECK(std::string(e.what()).find("'s'") != std::string::npos);
  }
}

TEST_CASE("position index") {
  const auto seq = Interleave(Ids(3, 0), Ids(6, 100), Ratio::Streaming(1, 2));
  const PositionIndex idx(seq);
  CHECK(idx.position(Modality::Speech, 2) == 4);
  CHECK(idx.position(Modality::Text, 0) == 0);
  CHECK(idx.locate(4) == std::make_pair(Modality::Speech, 2));
  CHECK_THROWS(idx.position(Modality::Text, 3));
}

TEST_CASE("random sequences match the closed-form layout") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 6), m = 1 + static_cast<int>(rng() % 6);
    const int S = static_cast<int>(rng() % 15), T = static_cast<int>(rng() % 30);
    const Ratio r = trial % 7 == 0 ? Ratio::NonStreaming() : Ratio::Streaming(n, m);
    const auto seq = Interleave(Ids(S, 0), Ids(T, 100), r);
    const auto layout = oracle::Layout(S, T, r.text_chunk(), r.speech_chunk());
    REQUIRE(seq.elements.size() == layout.size());
    const PositionIndex idx(seq);
    for (std::size_t p = 0; p < layout.size(); ++p) {
      CHECK(seq.elements[p].modality == layout[p].modality);
      CHECK(seq.elements[p].modal_position == layout[p].index);
      CHECK(idx.locate(static_cast<int>(p)) == std::make_pair(layout[p].modality, layout[p].index));
      CHECK(idx.position(layout[p].modality, layout[p].index) == static_cast<int>(p));
    }
    const auto prepared = PrepareTrainingSequence(MakeSample(S, T), r);
    long supervised = 0;
    for (bool b : prepared.loss_mask) supervised += b;
    CHECK(supervised == T + 1);
  }
}
