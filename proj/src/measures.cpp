#include "istlm/measures.hpp"

#include <cmath>
#include <sstream>

#include "istlm/error.hpp"
#include "istlm/util.hpp"

namespace istlm {
namespace {

constexpr std::size_t kBlockSize = 256;

const WordSpan& Word(const Sample& sample, int word) {
  if (word < 0 || static_cast<std::size_t>(word) >= sample.words.size()) {
    throw DataError("sample '" + sample.id + "': word index " + std::to_string(word) + " out of range");
  }
  return sample.words[static_cast<std::size_t>(word)];
}

struct PositionAccumulator {
  Moments D, A, F;
  void Merge(const PositionAccumulator& o) {
    D.Merge(o.D);
    A.Merge(o.A);
    F.Merge(o.F);
  }
};

}  // namespace

void Moments::Add(double x) {
  ++count;
  const double delta = x - mean;
  mean += delta / static_cast<double>(count);
  m2 += delta * (x - mean);
}

void Moments::Merge(const Moments& other) {
  if (other.count == 0) return;
  if (count == 0) {
    *this = other;
    return;
  }
  const double n = static_cast<double>(count + other.count);
  const double delta = other.mean - mean;
  mean += delta * static_cast<double>(other.count) / n;
  m2 += other.m2 + delta * delta * static_cast<double>(count) * static_cast<double>(other.count) / n;
  count += other.count;
}

double Moments::PopulationStddev() const {
  return count > 0 ? std::sqrt(std::max(0.0, m2 / static_cast<double>(count))) : 0.0;
}

double WordDistance(const Sample& sample, const PositionIndex& positions, int word, bool abs_distance) {
  const WordSpan& w = Word(sample, word);
  double outer = 0.0;
  for (int k = w.speech.begin; k < w.speech.end; ++k) {
    const int py = positions.position(Modality::Speech, k);
    double inner = 0.0;
    for (int r = w.text.begin; r < w.text.end; ++r) {
      const double d = py - positions.position(Modality::Text, r);
      inner += abs_distance ? std::abs(d) : d;
    }
    outer += inner / w.text.size();
  }
  return outer / w.speech.size();
}

double AccessibleFutureWords(const Sample& sample, const PositionIndex& positions, int word, bool any_token_access) {
  const WordSpan& w = Word(sample, word);
  // Position at which each later word becomes accessible.
  std::vector<int> reveal;
  for (std::size_t f = static_cast<std::size_t>(word) + 1; f < sample.words.size(); ++f) {
    const Range t = sample.words[f].text;
    reveal.push_back(any_token_access ? positions.position(Modality::Text, t.begin)
                                      : positions.position(Modality::Text, t.end - 1));
  }
  double total = 0.0;
  for (int k = w.speech.begin; k < w.speech.end; ++k) {
    const int py = positions.position(Modality::Speech, k);
    long visible = 0;
    for (int pos : reveal) visible += pos < py ? 1 : 0;
    total += static_cast<double>(visible);
  }
  return total / w.speech.size();
}

double PrecedenceFraction(const Sample& sample, const PositionIndex& positions, int word) {
  const WordSpan& w = Word(sample, word);
  const int first_text = positions.position(Modality::Text, w.text.begin);
  long before = 0;
  for (int k = w.speech.begin; k < w.speech.end; ++k) before += positions.position(Modality::Speech, k) < first_text;
  return static_cast<double>(before) / w.speech.size();
}

MeasureTable CorpusMeasures(const Corpus& corpus, const Ratio& ratio, const MeasureOptions& options) {
  if (options.max_positions <= 0) throw UsageError("number of word positions must be positive");
  const auto J = static_cast<std::size_t>(options.max_positions);
  const std::size_t n_blocks = (corpus.samples.size() + kBlockSize - 1) / kBlockSize;
  std::vector<std::vector<PositionAccumulator>> blocks(n_blocks, std::vector<PositionAccumulator>(J));

  ParallelFor(n_blocks, options.threads, [&](std::size_t b) {
    auto& acc = blocks[b];
    const std::size_t end = std::min(corpus.samples.size(), (b + 1) * kBlockSize);
    for (std::size_t i = b * kBlockSize; i < end; ++i) {
      const Sample& s = corpus.samples[i];
      const PositionIndex positions(Interleave(s.text, s.speech, ratio));
      const std::size_t words = std::min(J, s.words.size());
      for (std::size_t j = 0; j < words; ++j) {
        const int w = static_cast<int>(j);
        acc[j].D.Add(WordDistance(s, positions, w, options.abs_distance));
        acc[j].A.Add(AccessibleFutureWords(s, positions, w, options.any_token_access));
        acc[j].F.Add(PrecedenceFraction(s, positions, w));
      }
    }
  });

  std::vector<PositionAccumulator> total(J);
  for (const auto& block : blocks) {
    for (std::size_t j = 0; j < J; ++j) total[j].Merge(block[j]);
  }
  MeasureTable table;
  for (const auto& acc : total) {
    table.mu_D.push_back(acc.D.mean);
    table.sigma_D.push_back(acc.D.PopulationStddev());
    table.A.push_back(acc.A.mean);
    table.F.push_back(acc.F.mean);
    table.count.push_back(acc.D.count);
  }
  return table;
}

MeasureAggregate AggregateMeasures(const MeasureTable& table) {
  MeasureAggregate agg;
  for (std::size_t j = 0; j < table.size(); ++j) {
    if (!table.present(j)) continue;
    const double c = static_cast<double>(table.count[j]);
    agg.mu_D += c * table.mu_D[j];
    agg.sigma_D += c * table.sigma_D[j];
    agg.A += c * table.A[j];
    agg.F += c * table.F[j];
    agg.count += table.count[j];
  }
  if (agg.count == 0) throw DataError("measure table has no populated word positions");
  const double total = static_cast<double>(agg.count);
  agg.mu_D /= total;
  agg.sigma_D /= total;
  agg.A /= total;
  agg.F /= total;
  return agg;
}

std::string MeasuresToCsv(const MeasureTable& table) {
  std::ostringstream out;
  out << "j,mu_D,sigma_D,A,F,count\n";
  for (std::size_t j = 0; j < table.size(); ++j) {
    out << j << ',';
    if (table.present(j)) {
      out << FormatReal(table.mu_D[j]) << ',' << FormatReal(table.sigma_D[j]) << ',' << FormatReal(table.A[j]) << ','
          << FormatReal(table.F[j]);
    } else {
      out << ",,,";
    }
    out << ',' << table.count[j] << '\n';
  }
  const auto agg = AggregateMeasures(table);
  out << "-1," << FormatReal(agg.mu_D) << ',' << FormatReal(agg.sigma_D) << ',' << FormatReal(agg.A) << ','
      << FormatReal(agg.F) << ',' << agg.count << '\n';
  return out.str();
}

MeasureAggregate ReadAggregateRow(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("-1,", 0) != 0) continue;
    const auto f = SplitString(line, ',');
    if (f.size() != 6) break;
    try {
      return {std::stod(f[1]), std::stod(f[2]), std::stod(f[3]), std::stod(f[4]), std::stol(f[5])};
    } catch (const std::exception&) {
      break;
    }
  }
  throw DataError("statistics CSV lacks a valid aggregate (j=-1) row");
}

}  // namespace istlm
