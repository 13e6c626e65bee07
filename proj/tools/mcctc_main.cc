// Copyright 2026 The mcctc Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Command-line driver: gen-data, train, decode, score, analyze, avg-ckpt.
//
// Exit codes: 0 success, 1 I/O failure, 2 configuration or compatibility
// error, 3 numeric failure.

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "mcctc/config.h"
#include "mcctc/container.h"
#include "mcctc/data.h"
#include "mcctc/decode.h"
#include "mcctc/error.h"
#include "mcctc/model.h"
#include "mcctc/score.h"
#include "mcctc/trainer.h"
#include "mcctc/vocab.h"

namespace fs = std::filesystem;
using namespace mcctc;

namespace {

constexpr int kExitIo = 1;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

VocabPair LoadVocabs(const fs::path& data_dir) {
  return {Vocabulary::Load(data_dir / "char_vocab.txt"),
          Vocabulary::Load(data_dir / "pinyin_vocab.txt")};
}

std::vector<std::string> ReadLines(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

std::vector<TokenizedUtterance> ManifestRefs(const Manifest& m) {
  std::vector<TokenizedUtterance> refs;
  for (const auto& r : m.records) refs.push_back({r.utt_id, Tokenize(r.text)});
  return refs;
}

void WriteText(const std::string& text, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(out_path);
  if (!out) throw IoError("cannot write " + out_path);
  out << text;
}

// ---------------------------------------------------------------------------

struct GenDataArgs {
  std::string config;
  std::optional<uint64_t> seed;
};

int GenData(const GenDataArgs& args) {
  const RunConfig cfg = LoadRunConfig(args.config, args.seed);
  const SynthCorpus corpus = GenCorpus(cfg.synth);
  WriteCorpus(corpus, cfg.data_dir);
  {
    std::ofstream echo(fs::path(cfg.data_dir) / "synth.json");
    echo << ToJson(cfg.synth).dump(2) << '\n';
  }
  long man = 0;
  long eng = 0;
  long cs = 0;
  for (const auto& u : corpus.train) {
    bool has_man = false;
    bool has_eng = false;
    for (const auto& t : u.tokens) {
      const bool m = IsMandarinToken(t);
      man += m;
      eng += !m;
      has_man |= m;
      has_eng |= !m;
    }
    cs += has_man && has_eng;
  }
  std::map<std::string, int> group;
  for (const auto& [ch, py] : corpus.inventory.table.entries()) ++group[py];
  int largest = 0;
  for (const auto& [py, n] : group) largest = std::max(largest, n);
  std::printf(
      "wrote %s: train %zu, val %zu, test %zu utterances\n"
      "  char vocab %d, pinyin vocab %d, largest homophone group %d\n"
      "  train tokens: %.1f%% Mandarin, %.1f%% English; %.1f%% code-switched "
      "utterances\n",
      cfg.data_dir.c_str(), corpus.train.size(), corpus.val.size(),
      corpus.test.size(), corpus.vocabs.char_vocab.size(),
      corpus.vocabs.pinyin_vocab.size(), largest,
      100.0 * man / std::max(1L, man + eng), 100.0 * eng / std::max(1L, man + eng),
      100.0 * cs / std::max<size_t>(1, corpus.train.size()));
  return 0;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::optional<uint64_t> seed;
};

int TrainCmd(const TrainArgs& args) {
  const RunConfig cfg = LoadRunConfig(args.config, args.seed);
  const fs::path data(cfg.data_dir);
  const VocabPair vocabs = LoadVocabs(data);
  const PinyinTable table = PinyinTable::Load(data / "pinyin_table.txt");
  const auto train = ExamplesFromManifest(ReadManifest(data / "train.jsonl"),
                                          vocabs, table);
  const auto val =
      ExamplesFromManifest(ReadManifest(data / "val.jsonl"), vocabs, table);
  const auto text = ReadLines(data / "train_text.txt");
  const auto smoother = MakeSmoother(cfg, vocabs.char_vocab, text);
  ModelBundle bundle(cfg.model, vocabs.char_vocab, vocabs.pinyin_vocab, cfg.seed);
  spdlog::info("training {} on {} utterances ({} parameters)",
               ArchitectureName(cfg.model.architecture), train.size(),
               bundle.NumParameterValues());
  fs::create_directories(cfg.out_dir);
  {
    std::ofstream echo(fs::path(cfg.out_dir) / "config.json");
    echo << ToJson(cfg).dump(2) << '\n';
  }
  const TrainResult result = Train(&bundle, train, val, cfg, *smoother, cfg.out_dir);
  const auto& last = result.epochs.back();
  std::vector<fs::path> paths;
  for (const auto& e : result.epochs) paths.push_back(e.checkpoint);
  const fs::path avg_path = fs::path(cfg.out_dir) / "average.ckpt";
  const size_t k = std::min<size_t>(cfg.average_top_k, paths.size());
  SaveCheckpoint(AverageCheckpoints(paths, cfg.average_top_k), avg_path,
                 {{"averaged_from", k}});
  spdlog::info("averaged {} checkpoints into {}", k, avg_path.string());
  std::printf("trained %zu epochs; final val TER %.2f%%, masked accuracy %.3f\n",
              result.epochs.size(), 100 * last.val_ter, last.val_accuracy);
  return 0;
}

// ---------------------------------------------------------------------------

struct DecodeArgs {
  std::string config;
  std::string checkpoint;
  std::string manifest;
  std::string out;
  std::optional<double> p_thres;
  std::optional<int> iterations;
  std::optional<std::string> architecture;
  std::optional<std::string> mask_source;
  std::optional<int> workers;
  std::vector<double> sweep;
};

int DecodeCmd(const DecodeArgs& args) {
  DecodeConfig dcfg;
  const ModelBundle bundle = LoadCheckpoint(args.checkpoint);
  dcfg.architecture = bundle.architecture();
  if (!args.config.empty()) dcfg = LoadRunConfig(args.config).decode;
  if (args.p_thres) dcfg.p_thres = *args.p_thres;
  if (args.iterations) dcfg.iterations = *args.iterations;
  if (args.architecture) dcfg.architecture = ParseArchitecture(*args.architecture);
  if (args.mask_source) dcfg.mask_source = ParseMaskSource(*args.mask_source);
  if (args.workers) dcfg.num_workers = *args.workers;
  dcfg.Validate();
  CheckCompatible(bundle, dcfg);
  const Manifest manifest = ReadManifest(args.manifest);
  std::vector<DecodeInput> inputs;
  for (const auto& r : manifest.records) {
    Matrix feats = ReadFeatures(manifest.FeaturePath(r));
    if (feats.cols != bundle.config().encoder.input_dim) {
      throw ConfigError("utterance '" + r.utt_id + "' has feature size " +
                        std::to_string(feats.cols) + ", model expects " +
                        std::to_string(bundle.config().encoder.input_dim));
    }
    inputs.push_back({r.utt_id, std::move(feats)});
  }
  if (!args.sweep.empty()) {
    const auto refs = ManifestRefs(manifest);
    std::printf("%8s %8s %8s\n", "p_thres", "TER%", "RTF");
    for (double p : args.sweep) {
      DecodeConfig c = dcfg;
      c.p_thres = p;
      c.Validate();
      const auto hyps = DecodeCorpus(bundle, inputs, c);
      const auto report =
          ScoreCorpus(refs, HypothesisTokens(hyps), &bundle.char_vocab());
      std::printf("%8.4f %8.2f %8.4f\n", p, 100 * report.ter(), MeasureRtf(hyps));
    }
    return 0;
  }
  const auto hyps = DecodeCorpus(bundle, inputs, dcfg);
  WriteHypotheses(hyps, args.out);
  std::fprintf(stderr, "decoded %zu utterances, RTF %.4f\n", hyps.size(),
               hyps.empty() ? 0.0 : MeasureRtf(hyps));
  return 0;
}

// ---------------------------------------------------------------------------

struct ScoreArgs {
  std::string ref;
  std::vector<std::string> hyps;
  std::string vocab;
  std::string pinyin_table;
  std::string format = "table";
  std::string out;
};

ErrorReport ScoreOne(const Manifest& ref, const std::string& hyp_path,
                     const Vocabulary* vocab, const PinyinTable* table,
                     std::vector<Hypothesis>* hyps_out) {
  const auto hyps = ReadHypotheses(hyp_path);
  const auto refs = ManifestRefs(ref);
  const auto toks = HypothesisTokens(hyps);
  ErrorReport report = ScoreCorpus(refs, toks, vocab);
  if (table != nullptr) report.per = PerScore(refs, toks, *table, vocab).per;
  double audio = 0;
  for (const auto& h : hyps) audio += h.audio_ms;
  if (audio > 0) report.rtf = MeasureRtf(hyps);
  if (hyps_out != nullptr) *hyps_out = hyps;
  return report;
}

int ScoreCmd(const ScoreArgs& args) {
  const Manifest ref = ReadManifest(args.ref, /*check_features=*/false);
  std::optional<Vocabulary> vocab;
  if (!args.vocab.empty()) vocab = Vocabulary::Load(args.vocab);
  std::optional<PinyinTable> table;
  if (!args.pinyin_table.empty()) table = PinyinTable::Load(args.pinyin_table);
  std::vector<ErrorReport> reports;
  for (const auto& h : args.hyps) {
    reports.push_back(ScoreOne(ref, h, vocab ? &*vocab : nullptr,
                               table ? &*table : nullptr, nullptr));
  }
  if (args.format == "json") {
    nlohmann::json j = nlohmann::json::array();
    for (size_t i = 0; i < reports.size(); ++i) {
      auto r = ToJson(reports[i]);
      r["hyp"] = args.hyps[i];
      j.push_back(r);
    }
    WriteText((reports.size() == 1 ? j[0] : j).dump(2) + "\n", args.out);
  } else {
    std::vector<std::pair<std::string, const ErrorReport*>> rows;
    for (size_t i = 0; i < reports.size(); ++i) {
      rows.emplace_back(fs::path(args.hyps[i]).stem().string(), &reports[i]);
    }
    WriteText(FormatReportTable(rows), args.out);
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct AnalyzeArgs {
  std::string ref;
  std::string hyp_a;
  std::string hyp_b;
  std::string vocab;
  std::string pinyin_table;
  std::string format = "table";
  std::string out;
};

int AnalyzeCmd(const AnalyzeArgs& args) {
  const Manifest ref = ReadManifest(args.ref, /*check_features=*/false);
  std::optional<Vocabulary> vocab;
  if (!args.vocab.empty()) vocab = Vocabulary::Load(args.vocab);
  std::optional<PinyinTable> table;
  if (!args.pinyin_table.empty()) table = PinyinTable::Load(args.pinyin_table);
  const Vocabulary* v = vocab ? &*vocab : nullptr;
  const PinyinTable* t = table ? &*table : nullptr;
  const ErrorReport a = ScoreOne(ref, args.hyp_a, v, t, nullptr);
  const ErrorReport b = ScoreOne(ref, args.hyp_b, v, t, nullptr);
  const size_t n = a.utterances.size();
  // std::vector<bool> has no contiguous storage to hand out as a span.
  auto ca = std::make_unique<bool[]>(n);
  auto cb = std::make_unique<bool[]>(n);
  std::vector<double> ea, eb;
  for (size_t i = 0; i < n; ++i) {
    ca[i] = a.utterances[i].correct;
    cb[i] = b.utterances[i].correct;
    ea.push_back(a.utterances[i].NormalizedError());
    eb.push_back(b.utterances[i].NormalizedError());
  }
  const McNemarResult mc = McNemar(std::span<const bool>(ca.get(), n),
                                   std::span<const bool>(cb.get(), n));
  TTestResult tt;
  if (ea.size() >= 2) tt = PairedTTest(ea, eb);
  nlohmann::json j = {
      {"system_a", ToJson(a)},
      {"system_b", ToJson(b)},
      {"ter_delta", b.ter() - a.ter()},
      {"mcnemar", {{"b", mc.b}, {"c", mc.c}, {"p", mc.p}}},
      {"ttest", {{"mean_diff", tt.mean_diff}, {"t", tt.t}, {"df", tt.df},
                 {"p", tt.p}}}};
  if (args.format == "json") {
    WriteText(j.dump(2) + "\n", args.out);
    return 0;
  }
  std::vector<std::pair<std::string, const ErrorReport*>> rows = {
      {fs::path(args.hyp_a).stem().string(), &a},
      {fs::path(args.hyp_b).stem().string(), &b}};
  std::string text = FormatReportTable(rows);
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "\nTER delta (b - a): %+.2f points\n"
                "McNemar: b=%ld c=%ld p=%.6g\n"
                "paired t-test: mean diff %+.4f, t=%.4f, df=%d, p=%.6g\n",
                100 * (b.ter() - a.ter()), mc.b, mc.c, mc.p, tt.mean_diff, tt.t,
                tt.df, tt.p);
  WriteText(text + buf, args.out);
  return 0;
}

// ---------------------------------------------------------------------------

struct AvgArgs {
  std::string dir;
  int k = 5;
  std::string out;
};

int AvgCmd(const AvgArgs& args) {
  std::vector<fs::path> paths;
  std::error_code ec;
  for (const auto& e : fs::directory_iterator(args.dir, ec)) {
    if (e.path().extension() == ".ckpt") paths.push_back(e.path());
  }
  if (ec) throw IoError("cannot list " + args.dir + ": " + ec.message());
  if (paths.empty()) throw IoError("no .ckpt files in " + args.dir);
  std::sort(paths.begin(), paths.end());
  const ModelBundle avg = AverageCheckpoints(paths, args.k);
  SaveCheckpoint(avg, args.out,
                 {{"averaged_from", std::min<size_t>(args.k, paths.size())}});
  std::fprintf(stderr, "averaged %zu of %zu checkpoints into %s\n",
               std::min<size_t>(args.k, paths.size()), paths.size(),
               args.out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_mt("mcctc"));
  spdlog::set_pattern("[%H:%M:%S %^%l%$] %v");

  CLI::App app{"Mandarin-English code-switching Mask-CTC toolkit"};
  app.require_subcommand(1);
  int exit_code = 0;

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic corpus");
  gen_cmd->add_option("--config", gen.config, "Run config (JSON)")->required();
  gen_cmd->add_option("--seed", gen.seed, "Override the seed");

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Train a model");
  train_cmd->add_option("--config", train.config, "Run config (JSON)")->required();
  train_cmd->add_option("--seed", train.seed, "Override the seed");

  DecodeArgs dec;
  auto* dec_cmd = app.add_subcommand("decode", "Decode a manifest");
  dec_cmd->add_option("--config", dec.config, "Run config supplying decode settings");
  dec_cmd->add_option("--checkpoint", dec.checkpoint, "Model checkpoint")->required();
  dec_cmd->add_option("--manifest", dec.manifest, "Manifest to decode")->required();
  dec_cmd->add_option("--out", dec.out, "Hypothesis JSON-lines output");
  dec_cmd->add_option("--p-thres", dec.p_thres, "Masking threshold");
  dec_cmd->add_option("--iterations", dec.iterations, "CMLM iterations K");
  dec_cmd->add_option("--architecture", dec.architecture,
                      "ctc_only, mask_ctc or mask_ctc_p2m");
  dec_cmd->add_option("--mask-source", dec.mask_source, "ctc or p2m");
  dec_cmd->add_option("--workers", dec.workers, "Decoding threads");
  dec_cmd->add_option("--sweep-p-thres", dec.sweep,
                      "Print TER/RTF for each threshold instead of writing");

  ScoreArgs score;
  auto* score_cmd = app.add_subcommand("score", "Score hypotheses");
  score_cmd->add_option("--ref", score.ref, "Reference manifest")->required();
  score_cmd->add_option("--hyp", score.hyps, "Hypothesis file(s)")->required();
  score_cmd->add_option("--vocab", score.vocab, "Character vocabulary");
  score_cmd->add_option("--pinyin-table", score.pinyin_table,
                        "Character-to-Pinyin table (enables PER)");
  score_cmd->add_option("--format", score.format, "table or json")
      ->check(CLI::IsMember({"table", "json"}));
  score_cmd->add_option("--out", score.out, "Output file (default stdout)");

  AnalyzeArgs an;
  auto* an_cmd = app.add_subcommand("analyze", "Compare two systems");
  an_cmd->add_option("--ref", an.ref, "Reference manifest")->required();
  an_cmd->add_option("--hyp-a", an.hyp_a, "System A hypotheses")->required();
  an_cmd->add_option("--hyp-b", an.hyp_b, "System B hypotheses")->required();
  an_cmd->add_option("--vocab", an.vocab, "Character vocabulary");
  an_cmd->add_option("--pinyin-table", an.pinyin_table, "Pinyin table");
  an_cmd->add_option("--format", an.format, "table or json")
      ->check(CLI::IsMember({"table", "json"}));
  an_cmd->add_option("--out", an.out, "Output file (default stdout)");

  AvgArgs avg;
  auto* avg_cmd = app.add_subcommand("avg-ckpt", "Average the best checkpoints");
  avg_cmd->add_option("--dir", avg.dir, "Checkpoint directory")->required();
  avg_cmd->add_option("--k", avg.k, "How many to average")
      ->check(CLI::PositiveNumber);
  avg_cmd->add_option("--out", avg.out, "Averaged checkpoint")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*gen_cmd) {
      exit_code = GenData(gen);
    } else if (*train_cmd) {
      exit_code = TrainCmd(train);
    } else if (*dec_cmd) {
      if (dec.out.empty() && dec.sweep.empty()) {
        throw ConfigError("decode needs --out or --sweep-p-thres");
      }
      exit_code = DecodeCmd(dec);
    } else if (*score_cmd) {
      exit_code = ScoreCmd(score);
    } else if (*an_cmd) {
      exit_code = AnalyzeCmd(an);
    } else if (*avg_cmd) {
      exit_code = AvgCmd(avg);
    }
  } catch (const IoError& e) {
    spdlog::error("{}", e.what());
    return kExitIo;
  } catch (const NumericError& e) {
    spdlog::error("{}", e.what());
    return kExitNumeric;
  } catch (const std::invalid_argument& e) {
    // ConfigError, ShapeError and argument validation all land here.
    spdlog::error("{}", e.what());
    return kExitConfig;
  } catch (const std::out_of_range& e) {
    spdlog::error("{}", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitIo;
  }
  return exit_code;
}
