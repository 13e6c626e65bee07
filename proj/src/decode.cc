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

#include "mcctc/decode.h"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <numeric>
#include <thread>

#include "mcctc/error.h"
#include "mcctc/json_util.h"

namespace mcctc {
namespace {

constexpr double kMsPerFrame = 10.0;

// Argmax over one row of logits skipping the excluded ids; returns
// (id, softmax probability).
std::pair<int, double> BestToken(const double* logits, int vocab, int exclude_a,
                                 int exclude_b) {
  double max = -INFINITY;
  for (int v = 0; v < vocab; ++v) max = std::max(max, logits[v]);
  double z = 0;
  for (int v = 0; v < vocab; ++v) z += std::exp(logits[v] - max);
  int best = -1;
  for (int v = 0; v < vocab; ++v) {
    if (v == exclude_a || v == exclude_b) continue;
    if (best < 0 || logits[v] > logits[best]) best = v;
  }
  return {best, std::exp(logits[best] - max) / z};
}

}  // namespace

std::string_view MaskSourceName(MaskSource s) {
  return s == MaskSource::kCtc ? "ctc" : "p2m";
}

MaskSource ParseMaskSource(std::string_view name) {
  if (name == "ctc") return MaskSource::kCtc;
  if (name == "p2m") return MaskSource::kP2m;
  throw ConfigError("unknown mask source '" + std::string(name) +
                    "' (expected ctc or p2m)");
}

void DecodeConfig::Validate() const {
  if (!(p_thres > 0 && p_thres <= 1)) {
    throw ConfigError("decode.p_thres must be in (0,1]");
  }
  if (iterations < 1) throw ConfigError("decode.iterations must be >= 1");
  if (num_workers < 1) throw ConfigError("decode.num_workers must be >= 1");
}

nlohmann::json ToJson(const DecodeConfig& c) {
  return {{"p_thres", c.p_thres},
          {"iterations", c.iterations},
          {"architecture", ArchitectureName(c.architecture)},
          {"mask_source", MaskSourceName(c.mask_source)},
          {"num_workers", c.num_workers}};
}

DecodeConfig DecodeConfigFromJson(const nlohmann::json& j) {
  constexpr std::string_view kWhere = "decode";
  RejectUnknownKeys(
      j, {"p_thres", "iterations", "architecture", "mask_source", "num_workers"},
      kWhere);
  DecodeConfig c;
  ReadOptional(j, "p_thres", &c.p_thres, kWhere);
  ReadOptional(j, "iterations", &c.iterations, kWhere);
  std::string arch(ArchitectureName(c.architecture));
  ReadOptional(j, "architecture", &arch, kWhere);
  c.architecture = ParseArchitecture(arch);
  std::string source(MaskSourceName(c.mask_source));
  ReadOptional(j, "mask_source", &source, kWhere);
  c.mask_source = ParseMaskSource(source);
  ReadOptional(j, "num_workers", &c.num_workers, kWhere);
  return c;
}

std::string Hypothesis::text() const {
  return Detokenize(tokens);
}

GreedyResult CtcGreedy(std::span<const double> log_probs, int frames,
                       int vocab, int blank, int exclude) {
  GreedyResult out;
  int prev = -1;
  for (int t = 0; t < frames; ++t) {
    const double* row = log_probs.data() + static_cast<size_t>(t) * vocab;
    int best = -1;
    for (int v = 0; v < vocab; ++v) {
      if (v == exclude) continue;
      if (best < 0 || row[v] > row[best]) best = v;
    }
    const double p = std::exp(row[best]);
    if (best != blank) {
      if (best != prev) {
        out.ids.push_back(best);
        out.confidences.push_back(p);
      } else {
        out.confidences.back() = std::max(out.confidences.back(), p);
      }
    }
    prev = best;
  }
  for (auto& c : out.confidences) c = std::clamp(c, 0.0, 1.0);
  return out;
}

GreedyResult CtcGreedy(const Tensor& log_probs, int blank, int exclude) {
  return CtcGreedy(log_probs.values(), log_probs.dim(0), log_probs.dim(1),
                   blank, exclude);
}

MaskedSequence MaskByThreshold(std::span<const int> ids,
                               std::span<const double> confidences,
                               double p_thres, int mask_id) {
  if (ids.size() != confidences.size()) {
    throw std::invalid_argument("mask_by_threshold: length mismatch");
  }
  MaskedSequence out;
  out.ids.assign(ids.begin(), ids.end());
  for (size_t i = 0; i < ids.size(); ++i) {
    if (confidences[i] < p_thres) {
      out.ids[i] = mask_id;
      out.mask_positions.push_back(static_cast<int>(i));
    }
  }
  return out;
}

std::vector<int> IterationSchedule(int num_masked, int k) {
  if (num_masked < 0 || k < 1) {
    throw std::invalid_argument("iteration_schedule: need n >= 0 and K >= 1");
  }
  if (num_masked == 0) return {};
  const int per = num_masked / k;
  std::vector<int> schedule(k, per);
  schedule.back() = num_masked - (k - 1) * per;
  return schedule;
}

RefineResult CmlmRefine(const ModelBundle& bundle, const MaskedSequence& masked,
                        const Tensor& hidden, int k) {
  const Vocabulary& vocab = bundle.char_vocab();
  const int mask_id = vocab.mask_id();
  masked.Validate(mask_id);
  RefineResult out;
  out.ids = masked.ids;
  out.confidences.assign(masked.ids.size(), 1.0);
  std::vector<int> remaining = masked.mask_positions;
  const int v = vocab.size();
  for (int fill : IterationSchedule(static_cast<int>(remaining.size()), k)) {
    // Nothing would change the inputs, so the pass is skipped.
    if (fill == 0) continue;
    out.mask_history.push_back(remaining);
    const Tensor logits = bundle.CmlmForward(out.ids, hidden);
    struct Candidate {
      double prob;
      int pos;
      int id;
    };
    std::vector<Candidate> cands;
    cands.reserve(remaining.size());
    for (int pos : remaining) {
      const double* row = logits.values().data() + static_cast<size_t>(pos) * v;
      const auto [id, prob] = BestToken(row, v, mask_id, vocab.blank_id());
      cands.push_back({prob, pos, id});
    }
    std::stable_sort(cands.begin(), cands.end(),
                     [](const Candidate& a, const Candidate& b) {
                       return a.prob > b.prob;
                     });
    std::vector<int> committed;
    for (int i = 0; i < fill; ++i) {
      out.ids[cands[i].pos] = cands[i].id;
      out.confidences[cands[i].pos] = cands[i].prob;
      committed.push_back(cands[i].pos);
    }
    std::erase_if(remaining, [&](int p) {
      return std::find(committed.begin(), committed.end(), p) != committed.end();
    });
  }
  return out;
}

void CheckCompatible(const ModelBundle& bundle, const DecodeConfig& cfg) {
  const Architecture have = bundle.architecture();
  const Architecture want = cfg.architecture;
  if (want == Architecture::kCtcOnly || want == have) return;
  throw ConfigError("cannot decode with architecture '" +
                    std::string(ArchitectureName(want)) + "' on a '" +
                    std::string(ArchitectureName(have)) + "' model");
}

Hypothesis DecodeFromEncoder(const ModelBundle& bundle, const EncoderOutput& enc,
                             const DecodeConfig& cfg) {
  CheckCompatible(bundle, cfg);
  NoGradGuard no_grad;
  const Vocabulary& chars = bundle.char_vocab();
  const Vocabulary& ctc_vocab = bundle.ctc_vocab();
  if (enc.ctc_log_probs.dim(1) != ctc_vocab.size()) {
    throw ConfigError("posterior width " +
                      std::to_string(enc.ctc_log_probs.dim(1)) +
                      " does not match CTC vocabulary size " +
                      std::to_string(ctc_vocab.size()));
  }
  const GreedyResult greedy = CtcGreedy(enc.ctc_log_probs, ctc_vocab.blank_id(),
                                        ctc_vocab.mask_id());
  const int length = static_cast<int>(greedy.ids.size());
  Hypothesis hyp;

  // Character-level sequence and confidences before CMLM.
  std::vector<int> char_ids;
  std::vector<double> confidences;
  MaskedSequence masked;
  if (!bundle.has_p2m()) {
    char_ids = greedy.ids;
    confidences = greedy.confidences;
    if (cfg.architecture == Architecture::kMaskCtc) {
      masked = MaskByThreshold(char_ids, confidences, cfg.p_thres,
                               chars.mask_id());
    } else {
      masked.ids = char_ids;
    }
  } else {
    const bool use_masks = cfg.architecture == Architecture::kMaskCtcP2m;
    MaskedSequence pinyin_masked;
    if (use_masks && cfg.mask_source == MaskSource::kCtc) {
      pinyin_masked = MaskByThreshold(greedy.ids, greedy.confidences,
                                      cfg.p_thres, ctc_vocab.mask_id());
    } else {
      pinyin_masked.ids = greedy.ids;
    }
    char_ids.assign(length, chars.mask_id());
    confidences = greedy.confidences;
    if (length > 0) {
      const Tensor logits = bundle.P2mForward(pinyin_masked.ids, enc.hidden);
      const int v = chars.size();
      for (int i = 0; i < length; ++i) {
        const double* row = logits.values().data() + static_cast<size_t>(i) * v;
        const auto [id, prob] =
            BestToken(row, v, chars.mask_id(), chars.blank_id());
        char_ids[i] = id;
        if (cfg.mask_source == MaskSource::kP2m) confidences[i] = prob;
      }
    }
    if (!use_masks) {
      masked.ids = char_ids;
    } else if (cfg.mask_source == MaskSource::kP2m) {
      masked = MaskByThreshold(char_ids, confidences, cfg.p_thres,
                               chars.mask_id());
    } else {
      masked = ApplyMask(char_ids, pinyin_masked.mask_positions,
                         chars.mask_id());
    }
  }

  hyp.masked_positions = masked.mask_positions;
  if (masked.mask_positions.empty()) {
    hyp.ids = masked.ids;
    hyp.confidences = confidences;
  } else {
    RefineResult refined =
        CmlmRefine(bundle, masked, enc.hidden, cfg.iterations);
    hyp.ids = std::move(refined.ids);
    hyp.confidences = confidences;
    for (int p : masked.mask_positions) {
      hyp.confidences[p] = refined.confidences[p];
    }
    hyp.mask_history = std::move(refined.mask_history);
  }
  hyp.tokens = chars.Decode(hyp.ids);
  return hyp;
}

Hypothesis DecodeUtterance(const ModelBundle& bundle, const Matrix& features,
                           const DecodeConfig& cfg) {
  NoGradGuard no_grad;
  const auto start = std::chrono::steady_clock::now();
  const EncoderOutput enc = bundle.EncoderForward(features);
  Hypothesis hyp = DecodeFromEncoder(bundle, enc, cfg);
  const auto stop = std::chrono::steady_clock::now();
  hyp.decode_ms =
      std::chrono::duration<double, std::milli>(stop - start).count();
  hyp.audio_ms = features.rows * kMsPerFrame;
  return hyp;
}

std::vector<Hypothesis> DecodeCorpus(const ModelBundle& bundle,
                                     std::span<const DecodeInput> inputs,
                                     const DecodeConfig& cfg) {
  cfg.Validate();
  CheckCompatible(bundle, cfg);
  std::vector<Hypothesis> out(inputs.size());
  std::atomic<size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  const auto work = [&] {
    for (size_t i = next++; i < inputs.size(); i = next++) {
      try {
        out[i] = DecodeUtterance(bundle, inputs[i].features, cfg);
        out[i].utt_id = inputs[i].utt_id;
      } catch (...) {
        std::lock_guard lock(error_mu);
        if (!error) error = std::current_exception();
      }
    }
  };
  const int workers =
      std::min<int>(cfg.num_workers, std::max<size_t>(inputs.size(), 1));
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  if (error) std::rethrow_exception(error);
  return out;
}

double MeasureRtf(std::span<const Hypothesis> hyps) {
  double decode = 0;
  double audio = 0;
  for (const auto& h : hyps) {
    decode += h.decode_ms;
    audio += h.audio_ms;
  }
  if (audio <= 0) throw std::invalid_argument("rtf: total audio duration is 0");
  return decode / audio;
}

nlohmann::json HypothesisToJson(const Hypothesis& h) {
  return {{"utt_id", h.utt_id},
          {"text", h.text()},
          {"tokens", h.tokens},
          {"confidences", h.confidences},
          {"masked_positions", h.masked_positions},
          {"decode_ms", h.decode_ms},
          {"audio_ms", h.audio_ms}};
}

Hypothesis HypothesisFromJson(const nlohmann::json& j) {
  Hypothesis h;
  try {
    h.utt_id = j.at("utt_id").get<std::string>();
    h.tokens = j.at("tokens").get<std::vector<std::string>>();
    if (j.contains("confidences")) {
      h.confidences = j.at("confidences").get<std::vector<double>>();
    }
    if (j.contains("masked_positions")) {
      h.masked_positions = j.at("masked_positions").get<std::vector<int>>();
    }
    if (j.contains("decode_ms")) h.decode_ms = j.at("decode_ms").get<double>();
    if (j.contains("audio_ms")) h.audio_ms = j.at("audio_ms").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("hypothesis record: ") + e.what());
  }
  return h;
}

void WriteHypotheses(std::span<const Hypothesis> hyps,
                     const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& h : hyps) out << HypothesisToJson(h).dump() << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<Hypothesis> ReadHypotheses(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<Hypothesis> hyps;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      hyps.push_back(HypothesisFromJson(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": " +
                        e.what());
    } catch (const ConfigError& e) {
      throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": " +
                        e.what());
    }
  }
  return hyps;
}

}  // namespace mcctc
