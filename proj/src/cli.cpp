#include "istlm/cli.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include "istlm/bpe.hpp"
#include "istlm/checkpoint.hpp"
#include "istlm/corpus.hpp"
#include "istlm/error.hpp"
#include "istlm/eval.hpp"
#include "istlm/stream.hpp"
#include "istlm/train.hpp"
#include "istlm/util.hpp"

namespace istlm {
namespace {

struct GlobalConfig {
  int threads = 1;
  std::string log_level = "warn";
};

struct ModelFlags {
  int layers = 4, heads = 4, d_model = 128, d_ff = 512, max_pos = 512;
  void Add(CLI::App* cmd) {
    cmd->add_option("--layers", layers, "Transformer layers")->capture_default_str();
    cmd->add_option("--heads", heads, "Attention heads")->capture_default_str();
    cmd->add_option("--d-model", d_model, "Model width")->capture_default_str();
    cmd->add_option("--d-ff", d_ff, "Feed-forward width")->capture_default_str();
    cmd->add_option("--max-pos", max_pos, "Positions per modality")->capture_default_str();
  }
  ModelConfig Build(int v_text, int v_speech, std::uint64_t seed) const {
    ModelConfig c;
    c.layers = layers;
    c.heads = heads;
    c.d_model = d_model;
    c.d_ff = d_ff;
    c.v_text = v_text;
    c.v_speech = v_speech;
    c.max_pos_text = max_pos;
    c.max_pos_speech = max_pos;
    c.seed = seed;
    c.Validate();
    return c;
  }
};

struct TrainFlags {
  int steps = 3000, warmup = 200, batch_size = 16;
  double lr = 2e-3;
  void Add(CLI::App* cmd, int default_steps) {
    steps = default_steps;
    cmd->add_option("--steps", steps, "Optimizer steps")->capture_default_str();
    cmd->add_option("--warmup", warmup, "Warmup steps")->capture_default_str();
    cmd->add_option("--batch-size", batch_size, "Sequences per batch")->capture_default_str();
    cmd->add_option("--lr", lr, "Peak learning rate")->capture_default_str();
  }
  TrainConfig Build(std::uint64_t seed) const {
    TrainConfig t;
    t.steps = steps;
    t.warmup = warmup;
    t.batch_size = batch_size;
    t.lr = lr;
    t.seed = seed;
    return t;
  }
};

std::vector<TokenId> ReadIdArray(const std::string& path) {
  try {
    return nlohmann::json::parse(ReadFile(path)).get<std::vector<TokenId>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError("'" + path + "' must hold a JSON array of token ids: " + e.what());
  }
}

std::string ReadInput(const std::string& path) {
  if (path == "-") {
    std::ostringstream ss;
    ss << std::cin.rdbuf();
    return ss.str();
  }
  return ReadFile(path);
}

void WriteOutput(const std::string& path, const std::string& contents) {
  if (path == "-") {
    std::cout << contents;
    std::cout.flush();
  } else {
    WriteFile(path, contents);
  }
}

std::vector<std::string> Lines(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

std::string SequenceToJson(const std::string& id, const InterleavedSeq& seq) {
  nlohmann::ordered_json j;
  j["id"] = id;
  auto elements = nlohmann::ordered_json::array();
  for (const auto& e : seq.elements) {
    const char* tag = e.modality == Modality::Text ? "T" : "S";
    elements.push_back({tag, e.eos() ? nlohmann::ordered_json("EOS") : nlohmann::ordered_json(e.token)});
  }
  j["elements"] = std::move(elements);
  auto mask = nlohmann::ordered_json::array();
  for (bool b : seq.loss_mask) mask.push_back(b ? 1 : 0);
  j["mask"] = std::move(mask);
  return j.dump();
}

spdlog::level::level_enum ParseLevel(const std::string& name) {
  const auto level = spdlog::level::from_str(name);
  if (level == spdlog::level::off && name != "off") throw UsageError("unknown log level '" + name + "'");
  return level;
}

void ConfigureLogging(const GlobalConfig& global) {
  auto logger = spdlog::get("istlm");
  if (!logger) logger = spdlog::stderr_logger_mt("istlm");
  spdlog::set_default_logger(logger);
  std::string level = global.log_level;
  if (const char* env = std::getenv("ISTLM_LOG"); env != nullptr && *env != '\0') level = env;
  spdlog::set_level(ParseLevel(level));
}

std::vector<Ratio> ParseRatioList(const std::string& list) {
  std::vector<Ratio> ratios;
  for (const auto& part : SplitString(list, ',')) {
    if (!part.empty()) ratios.push_back(Ratio::Parse(part));
  }
  if (ratios.empty()) throw UsageError("no ratios given");
  return ratios;
}

std::string Svg(const std::vector<FamilyFit>& fits);

}  // namespace

std::string StatsFileName(const Ratio& ratio) {
  return ratio.streaming() ? std::to_string(ratio.text_chunk()) + "x" + std::to_string(ratio.speech_chunk()) + ".csv"
                           : std::string("inf.csv");
}

std::vector<FamilyFit> AnalyzeFamilies(const std::vector<RatioMetric>& results,
                                       const std::vector<std::pair<Ratio, MeasureAggregate>>& stats,
                                       const RansacOptions& ransac) {
  auto lookup = [&](int n, int m) -> const MeasureAggregate& {
    for (const auto& [ratio, agg] : stats) {
      if (ratio.streaming() && ratio.text_chunk() == n && ratio.speech_chunk() == m) return agg;
    }
    throw DataError("no statistics for ratio " + std::to_string(n) + ":" + std::to_string(m));
  };
  const FamilyGrouping grouping = GroupByFamily(results);
  for (const auto& r : grouping.excluded) {
    spdlog::warn("ratio {}:{} is not in a x:2x, x:3x or x:4x family; excluded", r.n, r.m);
  }

  const std::vector<std::pair<std::string, double MeasureAggregate::*>> measures{
      {"mu_D", &MeasureAggregate::mu_D},
      {"sigma_D", &MeasureAggregate::sigma_D},
      {"A", &MeasureAggregate::A},
      {"F", &MeasureAggregate::F}};
  std::vector<FamilyFit> fits;
  for (const auto& [measure, field] : measures) {
    FamilyFit pooled{"all", measure, {}, {}, std::nullopt, 0.0, {}};
    for (const auto& [family, members] : grouping.families) {
      FamilyFit f{"x:" + std::to_string(family) + "x", measure, {}, {}, std::nullopt, 0.0, {}};
      for (const auto& r : members) {
        f.points.push_back({lookup(r.n, r.m).*field, r.metric});
        f.labels.push_back(std::to_string(r.n) + ":" + std::to_string(r.m));
      }
      pooled.points.insert(pooled.points.end(), f.points.begin(), f.points.end());
      pooled.labels.insert(pooled.labels.end(), f.labels.begin(), f.labels.end());
      fits.push_back(std::move(f));
    }
    fits.push_back(std::move(pooled));
  }
  for (auto& f : fits) {
    for (const auto& p : f.points) {
      f.centroid.x += p.x / static_cast<double>(f.points.size());
      f.centroid.y += p.y / static_cast<double>(f.points.size());
    }
    try {
      f.fit = RansacFit(f.points, ransac);
    } catch (const Error&) {
      f.fit = std::nullopt;
    }
    try {
      f.pearson = Pearson(f.points);
    } catch (const Error&) {
      f.pearson = std::nan("");
    }
  }
  return fits;
}

std::string FamilyFitsToCsv(const std::vector<FamilyFit>& fits) {
  std::ostringstream out;
  out << "family,measure,points,slope,intercept,inliers,pearson,centroid_x,centroid_y\n";
  for (const auto& f : fits) {
    out << f.family << ',' << f.measure << ',' << f.points.size() << ',';
    if (f.fit) {
      std::string inliers;
      for (auto i : f.fit->inliers) inliers += (inliers.empty() ? "" : ";") + f.labels[i];
      out << FormatReal(f.fit->slope) << ',' << FormatReal(f.fit->intercept) << ',' << inliers;
    } else {
      out << ",,";
    }
    out << ',' << FormatReal(f.pearson) << ',' << FormatReal(f.centroid.x) << ',' << FormatReal(f.centroid.y) << '\n';
  }
  return out.str();
}

std::string FamilyFitsToSvg(const std::vector<FamilyFit>& fits) { return Svg(fits); }

namespace {

std::string Svg(const std::vector<FamilyFit>& fits) {
  // One panel per measure; families in distinct colours, fitted lines dashed, centroids as large circles.
  const std::vector<std::string> measures{"mu_D", "sigma_D", "A", "F"};
  const std::map<std::string, std::string> colours{{"x:2x", "#1f77b4"}, {"x:3x", "#d62728"}, {"x:4x", "#2ca02c"}};
  const double panel_w = 320, panel_h = 260, margin = 40;
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << panel_w * 4 << "\" height=\"" << panel_h
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  for (std::size_t p = 0; p < measures.size(); ++p) {
    double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
    for (const auto& f : fits) {
      if (f.measure != measures[p] || f.family == "all") continue;
      for (const auto& pt : f.points) {
        x0 = std::min(x0, pt.x);
        x1 = std::max(x1, pt.x);
        y0 = std::min(y0, pt.y);
        y1 = std::max(y1, pt.y);
      }
    }
    if (!(x0 <= x1)) continue;
    if (x1 == x0) x1 = x0 + 1;
    if (y1 == y0) y1 = y0 + 1;
    const double ox = static_cast<double>(p) * panel_w;
    auto sx = [&](double x) { return ox + margin + (x - x0) / (x1 - x0) * (panel_w - 2 * margin); };
    auto sy = [&](double y) { return panel_h - margin - (y - y0) / (y1 - y0) * (panel_h - 2 * margin); };
    svg << "<rect x=\"" << ox + margin << "\" y=\"" << margin << "\" width=\"" << panel_w - 2 * margin
        << "\" height=\"" << panel_h - 2 * margin << "\" fill=\"none\" stroke=\"#888\"/>\n";
    svg << "<text x=\"" << ox + panel_w / 2 << "\" y=\"" << panel_h - 10 << "\" text-anchor=\"middle\">Average "
        << measures[p] << "</text>\n";
    for (const auto& f : fits) {
      if (f.measure != measures[p] || f.family == "all") continue;
      const std::string colour = colours.count(f.family) ? colours.at(f.family) : "#555";
      for (const auto& pt : f.points) {
        svg << "<circle cx=\"" << FormatReal(sx(pt.x)) << "\" cy=\"" << FormatReal(sy(pt.y)) << "\" r=\"3\" fill=\""
            << colour << "\"/>\n";
      }
      svg << "<circle cx=\"" << FormatReal(sx(f.centroid.x)) << "\" cy=\"" << FormatReal(sy(f.centroid.y))
          << "\" r=\"7\" fill=\"none\" stroke=\"" << colour << "\"/>\n";
      if (f.fit) {
        svg << "<line x1=\"" << FormatReal(sx(x0)) << "\" y1=\"" << FormatReal(sy(f.fit->slope * x0 + f.fit->intercept))
            << "\" x2=\"" << FormatReal(sx(x1)) << "\" y2=\"" << FormatReal(sy(f.fit->slope * x1 + f.fit->intercept))
            << "\" stroke=\"" << colour << "\" stroke-dasharray=\"4 3\"/>\n";
      }
    }
  }
  svg << "</svg>\n";
  return svg.str();
}

int Run(int argc, const char* const* argv) {
  CLI::App app{"Interleaved speech-text language modeling toolkit", "istlm"};
  app.require_subcommand(1);
  app.fallthrough();
  GlobalConfig global;
  app.add_option("--threads", global.threads, "Worker threads for corpus-parallel stages")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  app.add_option("--log-level", global.log_level, "trace|debug|info|warn|err|off (ISTLM_LOG overrides)")
      ->capture_default_str();

  std::function<void()> action;
  auto set_action = [&](CLI::App* cmd, std::function<void()> fn) { cmd->callback([&action, fn] { action = fn; }); };

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic aligned corpus and its lexicon");
  SyntheticConfig syn;
  std::string gen_out, gen_lexicon;
  gen->add_option("--samples", syn.n_samples, "Number of samples")->capture_default_str();
  gen->add_option("--seed", syn.seed, "Random seed")->capture_default_str();
  gen->add_option("--words-min", syn.words_min, "Minimum words per sample")->capture_default_str();
  gen->add_option("--words-max", syn.words_max, "Maximum words per sample")->capture_default_str();
  gen->add_option("--jitter", syn.jitter_prob, "Probability of duplicating a motif's final token")
      ->capture_default_str();
  gen->add_option("--v-text", syn.v_text, "Text vocabulary size")->capture_default_str();
  gen->add_option("--v-speech", syn.v_speech, "Speech vocabulary size")->capture_default_str();
  gen->add_option("--out", gen_out, "Corpus JSONL output")->required();
  gen->add_option("--lexicon", gen_lexicon, "Lexicon JSON output")->required();
  set_action(gen, [&] {
    const SyntheticData data = GenerateSynthetic(syn);
    SaveJsonl(data.corpus, gen_out);
    SaveLexicon(data.lexicon, gen_lexicon);
  });

  // bpe
  auto* bpe = app.add_subcommand("bpe", "Byte-pair encoding");
  bpe->require_subcommand(1);
  auto* bpe_train = bpe->add_subcommand("train", "Train a BPE model on a text file (one text per line)");
  std::string bpe_in = "-", bpe_out = "-", bpe_model;
  std::size_t bpe_size = 2000;
  bpe_train->add_option("--in", bpe_in, "Training texts")->required();
  bpe_train->add_option("--size", bpe_size, "Target vocabulary size")->capture_default_str();
  bpe_train->add_option("--out", bpe_out, "Model JSON output")->required();
  set_action(bpe_train, [&] { WriteOutput(bpe_out, BpeTrain(Lines(ReadInput(bpe_in)), bpe_size).ToJson()); });
  auto* bpe_encode = bpe->add_subcommand("encode", "Encode lines of text into token ids");
  bpe_encode->add_option("--model", bpe_model, "Model JSON")->required();
  bpe_encode->add_option("--in", bpe_in, "Input text ('-' for stdin)")->capture_default_str();
  bpe_encode->add_option("--out", bpe_out, "Output ('-' for stdout)")->capture_default_str();
  set_action(bpe_encode, [&] {
    const BpeModel model = BpeModel::FromJson(ReadFile(bpe_model));
    std::string out;
    for (const auto& line : Lines(ReadInput(bpe_in))) {
      const auto ids = model.Encode(line);
      for (std::size_t i = 0; i < ids.size(); ++i) out += (i ? " " : "") + std::to_string(ids[i]);
      out += '\n';
    }
    WriteOutput(bpe_out, out);
  });
  auto* bpe_decode = bpe->add_subcommand("decode", "Decode lines of space-separated token ids");
  bpe_decode->add_option("--model", bpe_model, "Model JSON")->required();
  bpe_decode->add_option("--in", bpe_in, "Input ids ('-' for stdin)")->capture_default_str();
  bpe_decode->add_option("--out", bpe_out, "Output ('-' for stdout)")->capture_default_str();
  set_action(bpe_decode, [&] {
    const BpeModel model = BpeModel::FromJson(ReadFile(bpe_model));
    std::string out;
    for (const auto& line : Lines(ReadInput(bpe_in))) {
      std::vector<TokenId> ids;
      std::istringstream in(line);
      TokenId id;
      while (in >> id) ids.push_back(id);
      if (!in.eof()) throw DataError("malformed token id line: '" + line + "'");
      out += model.Decode(ids) + '\n';
    }
    WriteOutput(bpe_out, out);
  });

  VocabSizes vocab;
  auto add_vocab = [&](CLI::App* cmd) {
    cmd->add_option("--v-text", vocab.text, "Text vocabulary size of the corpus")->capture_default_str();
    cmd->add_option("--v-speech", vocab.speech, "Speech vocabulary size of the corpus")->capture_default_str();
  };

  // interleave
  auto* inter = app.add_subcommand("interleave", "Emit prepared interleaved training sequences");
  std::string corpus_path, ratio_text, out_path;
  bool raw = false;
  inter->add_option("--corpus", corpus_path, "Corpus JSONL")->required();
  inter->add_option("--ratio", ratio_text, "N:M or inf")->required();
  inter->add_option("--out", out_path, "JSONL output")->required();
  inter->add_flag("--raw", raw, "Interleave without EOS symbols");
  add_vocab(inter);
  set_action(inter, [&] {
    const Ratio ratio = Ratio::Parse(ratio_text);
    const Corpus corpus = LoadJsonl(corpus_path, vocab);
    std::string out;
    for (const auto& s : corpus.samples) {
      out += SequenceToJson(s.id, raw ? Interleave(s.text, s.speech, ratio) : PrepareTrainingSequence(s, ratio));
      out += '\n';
    }
    WriteFile(out_path, out);
  });

  // stats
  auto* stats = app.add_subcommand("stats", "Word-level position-aware statistics for one ratio");
  MeasureOptions measure_options;
  stats->add_option("--corpus", corpus_path, "Corpus JSONL")->required();
  stats->add_option("--ratio", ratio_text, "N:M or inf")->required();
  stats->add_option("--out", out_path, "CSV output")->required();
  stats->add_option("--positions", measure_options.max_positions, "Word positions J")->capture_default_str();
  stats->add_flag("--abs-distance", measure_options.abs_distance, "Use absolute rather than signed distance");
  stats->add_flag("--any-token-access", measure_options.any_token_access,
                  "Count a future word once any of its text tokens is visible");
  add_vocab(stats);
  set_action(stats, [&] {
    const Ratio ratio = Ratio::Parse(ratio_text);
    const Corpus corpus = LoadJsonl(corpus_path, vocab);
    measure_options.threads = global.threads;
    WriteFile(out_path, MeasuresToCsv(CorpusMeasures(corpus, ratio, measure_options)));
  });

  // analyze
  auto* analyze = app.add_subcommand("analyze", "Fit measure/error-rate relations per ratio family");
  std::string results_path, stats_dir, svg_path;
  RansacOptions ransac;
  double threshold = 0.0;
  analyze->add_option("--results", results_path, "Sweep CSV")->required();
  analyze->add_option("--stats-dir", stats_dir, "Directory of per-ratio statistics (NxM.csv)")->required();
  analyze->add_option("--out", out_path, "Fits CSV output")->required();
  analyze->add_option("--svg", svg_path, "Optional SVG scatter plot");
  analyze->add_option("--threshold", threshold, "RANSAC residual bound (default: scale-aware)");
  analyze->add_option("--iterations", ransac.iterations, "RANSAC iterations for groups above 8 points")
      ->capture_default_str();
  analyze->add_option("--seed", ransac.seed, "RANSAC seed")->capture_default_str();
  set_action(analyze, [&] {
    if (threshold > 0.0) ransac.threshold = threshold;
    const SweepResult sweep = SweepFromCsv(ReadFile(results_path));
    std::vector<RatioMetric> metrics;
    std::vector<std::pair<Ratio, MeasureAggregate>> aggregates;
    for (const auto& row : sweep.rows) {
      if (row.failure || !row.ratio.streaming()) continue;
      metrics.push_back({row.ratio.text_chunk(), row.ratio.speech_chunk(), row.token_error_rate});
      const auto path = (std::filesystem::path(stats_dir) / StatsFileName(row.ratio)).string();
      aggregates.emplace_back(row.ratio, ReadAggregateRow(ReadFile(path)));
    }
    const auto fits = AnalyzeFamilies(metrics, aggregates, ransac);
    WriteFile(out_path, FamilyFitsToCsv(fits));
    if (!svg_path.empty()) WriteFile(svg_path, FamilyFitsToSvg(fits));
  });

  // train
  auto* train = app.add_subcommand("train", "Train the interleaved language model");
  ModelFlags model_flags;
  TrainFlags train_flags;
  std::uint64_t seed = 1;
  std::string loss_out;
  train->add_option("--corpus", corpus_path, "Corpus JSONL")->required();
  train->add_option("--ratio", ratio_text, "N:M or inf")->required();
  train->add_option("--out", out_path, "Checkpoint output")->required();
  train->add_option("--seed", seed, "Seed for initialization and data order")->capture_default_str();
  train->add_option("--loss-out", loss_out, "Optional CSV of the per-step loss");
  model_flags.Add(train);
  train_flags.Add(train, 3000);
  add_vocab(train);
  set_action(train, [&] {
    const Ratio ratio = Ratio::Parse(ratio_text);
    const Corpus corpus = LoadJsonl(corpus_path, vocab);
    const ModelConfig model = model_flags.Build(vocab.text, vocab.speech, seed);
    TrainConfig cfg = train_flags.Build(seed);
    cfg.on_step = [](int step, double loss) {
      if (step % 100 == 0) spdlog::info("step {} loss {:.4f}", step, loss);
    };
    const TrainResult result = Train(corpus, ratio, model, cfg);
    SaveCheckpoint(result.params, out_path);
    if (!loss_out.empty()) {
      std::string csv = "step,loss\n";
      for (std::size_t i = 0; i < result.loss_curve.size(); ++i) {
        csv += std::to_string(i + 1) + "," + FormatReal(result.loss_curve[i]) + "\n";
      }
      WriteFile(loss_out, csv);
    }
  });

  // synth
  auto* synth = app.add_subcommand("synth", "Streaming synthesis of speech tokens");
  std::string ckpt, prompt_text_path, prompt_speech_path, text_path;
  SamplingParams sampling;
  int max_generated = 0;
  synth->add_option("--ckpt", ckpt, "Checkpoint")->required();
  synth->add_option("--ratio", ratio_text, "N:M or inf")->required();
  synth->add_option("--prompt-text", prompt_text_path, "JSON array of prompt text ids");
  synth->add_option("--prompt-speech", prompt_speech_path, "JSON array of prompt speech ids");
  synth->add_option("--text", text_path, "JSON array of target text ids")->required();
  synth->add_option("--seed", seed, "Sampling seed")->capture_default_str();
  synth->add_option("--out", out_path, "Result JSON output")->required();
  synth->add_option("--temperature", sampling.temperature, "Sampling temperature")->capture_default_str();
  synth->add_option("--top-k", sampling.top_k, "Sample among the k most likely classes")->capture_default_str();
  synth->add_option("--max-generated", max_generated, "Generation cap (default 10 x text tokens + 64)");
  set_action(synth, [&] {
    const Parameters<float> params = LoadCheckpoint(ckpt);
    StreamRequest request;
    request.ratio = Ratio::Parse(ratio_text);
    if (!prompt_text_path.empty()) request.prompt_text = ReadIdArray(prompt_text_path);
    if (!prompt_speech_path.empty()) request.prompt_speech = ReadIdArray(prompt_speech_path);
    request.target_text = ReadIdArray(text_path);
    request.sampling = sampling;
    request.seed = seed;
    if (max_generated > 0) request.max_generated = max_generated;
    WriteFile(out_path, StreamResultToJson(SynthesizeStream(params, request)));
  });

  // release-plan
  auto* plan = app.add_subcommand("release-plan", "Chunk-wise detokenizer release schedule as CSV");
  int tokens = 0, chunk = 0, right = 0;
  std::string plan_out = "-";
  plan->add_option("--tokens", tokens, "Total generated tokens")->required();
  plan->add_option("--chunk", chunk, "Chunk size")->required();
  plan->add_option("--right", right, "Right-context lookahead")->capture_default_str();
  plan->add_option("--out", plan_out, "Output ('-' for stdout)")->capture_default_str();
  set_action(plan, [&] { WriteOutput(plan_out, ReleasePlanToCsv(ChunkReleasePlan(tokens, chunk, right))); });

  // sweep
  auto* sweep = app.add_subcommand("sweep", "Train and evaluate one model per ratio");
  std::string lexicon_path, ratios_text;
  int eval_samples = 200;
  SamplingParams sweep_sampling;
  ModelFlags sweep_model;
  TrainFlags sweep_train;
  std::string sweep_stats_dir;
  sweep->add_option("--corpus", corpus_path, "Corpus JSONL")->required();
  sweep->add_option("--lexicon", lexicon_path, "Lexicon JSON")->required();
  sweep->add_option("--ratios", ratios_text, "Comma-separated N:M or inf")->required();
  sweep->add_option("--out", out_path, "Sweep CSV output")->required();
  sweep->add_option("--seed", seed, "Seed for training and sampling")->capture_default_str();
  sweep->add_option("--eval-samples", eval_samples, "Held-out samples for evaluation")->capture_default_str();
  sweep->add_option("--temperature", sweep_sampling.temperature, "Sampling temperature")->capture_default_str();
  sweep->add_option("--top-k", sweep_sampling.top_k, "Sample among the k most likely classes")
      ->capture_default_str();
  sweep->add_option("--stats-dir", sweep_stats_dir, "Also write per-ratio statistics (NxM.csv) here");
  sweep_model.Add(sweep);
  sweep_train.Add(sweep, 3000);
  set_action(sweep, [&] {
    const Lexicon lexicon = LoadLexicon(lexicon_path);
    const Corpus corpus = LoadJsonl(corpus_path, {lexicon.v_text, lexicon.v_speech});
    SweepConfig cfg;
    cfg.ratios = ParseRatioList(ratios_text);
    cfg.model = sweep_model.Build(lexicon.v_text, lexicon.v_speech, seed);
    cfg.train = sweep_train.Build(seed);
    cfg.sampling = sweep_sampling;
    cfg.eval_samples = eval_samples;
    cfg.seed = seed;
    cfg.threads = global.threads;
    if (!sweep_stats_dir.empty()) {
      std::filesystem::create_directories(sweep_stats_dir);
      MeasureOptions opts;
      opts.threads = global.threads;
      for (const auto& ratio : cfg.ratios) {
        WriteFile((std::filesystem::path(sweep_stats_dir) / StatsFileName(ratio)).string(),
                  MeasuresToCsv(CorpusMeasures(corpus, ratio, opts)));
      }
    }
    WriteFile(out_path, SweepToCsv(RunSweep(corpus, lexicon, cfg)));
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help();
    return static_cast<int>(ErrorKind::Usage);
  }
  ConfigureLogging(global);
  if (action) action();
  return 0;
}

}  // namespace

int Dispatch(int argc, const char* const* argv) {
  try {
    return Run(argc, argv);
  } catch (const Error& e) {
    std::cerr << "istlm: " << e.what() << '\n';
    return static_cast<int>(e.kind());
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "istlm: " << e.what() << '\n';
    return static_cast<int>(ErrorKind::Data);
  } catch (const std::exception& e) {
    std::cerr << "istlm: " << e.what() << '\n';
    return static_cast<int>(ErrorKind::Data);
  }
}

int Dispatch(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  return Dispatch(static_cast<int>(argv.size()), argv.data());
}

}  // namespace istlm
