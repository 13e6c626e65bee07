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

#include "mcctc/trainer.h"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

#include "mcctc/embed.h"
#include "mcctc/error.h"

namespace mcctc {
namespace {

std::vector<int> AllPositions(int n) {
  std::vector<int> p(n);
  std::iota(p.begin(), p.end(), 0);
  return p;
}

int ArgmaxExcluding(const double* row, int v, int a, int b) {
  int best = -1;
  for (int i = 0; i < v; ++i) {
    if (i == a || i == b) continue;
    if (best < 0 || row[i] > row[best]) best = i;
  }
  return best;
}

}  // namespace

std::vector<TrainExample> ExamplesFromManifest(const Manifest& manifest,
                                               const VocabPair& vocabs,
                                               const PinyinTable& table) {
  std::vector<TrainExample> out;
  out.reserve(manifest.records.size());
  for (const auto& r : manifest.records) {
    TrainExample ex;
    ex.utt_id = r.utt_id;
    ex.tokens = Tokenize(r.text);
    ex.char_ids = vocabs.char_vocab.Encode(ex.tokens);
    ex.pinyin_ids =
        ToPinyin(ex.char_ids, vocabs.char_vocab, vocabs.pinyin_vocab, table);
    ex.feats = ReadFeatures(manifest.FeaturePath(r));
    if (ex.feats.rows != r.num_frames) {
      throw ConfigError("utterance '" + r.utt_id + "': manifest says " +
                        std::to_string(r.num_frames) + " frames, file has " +
                        std::to_string(ex.feats.rows));
    }
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<TrainExample> ExamplesFromCorpus(
    const SynthCorpus& corpus, std::span<const SynthUtterance> utterances) {
  const Vocabulary& chars = corpus.vocabs.char_vocab;
  std::vector<TrainExample> out;
  out.reserve(utterances.size());
  for (const auto& u : utterances) {
    TrainExample ex;
    ex.utt_id = u.utt_id;
    ex.tokens = u.tokens;
    ex.char_ids = chars.Encode(ex.tokens);
    ex.pinyin_ids = ToPinyin(ex.char_ids, chars, corpus.vocabs.pinyin_vocab,
                             corpus.inventory.table);
    Rng rng = FeatureRng(corpus.config.seed, u.utt_id);
    ex.feats = SynthFeatures(u.tokens, corpus.inventory, corpus.config, rng);
    out.push_back(std::move(ex));
  }
  return out;
}

double LearningRate(const OptimConfig& cfg, int step) {
  if (cfg.warmup_steps == 0) return cfg.learning_rate;
  const double s = std::max(step, 1);
  const double w = cfg.warmup_steps;
  return cfg.learning_rate * std::min(s / w, std::sqrt(w / s));
}

AdamOptimizer::AdamOptimizer(std::vector<Tensor> params, const OptimConfig& cfg)
    : params_(std::move(params)), cfg_(cfg) {
  for (const auto& p : params_) {
    m_.emplace_back(p.size(), 0.0);
    v_.emplace_back(p.size(), 0.0);
  }
}

double AdamOptimizer::Step(double lr) {
  double sq = 0;
  for (const auto& p : params_) {
    for (double g : p.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  const double clip = norm > cfg_.grad_clip ? cfg_.grad_clip / norm : 1.0;
  ++steps_;
  const double b1 = cfg_.adam_beta1;
  const double b2 = cfg_.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, steps_);
  const double c2 = 1.0 - std::pow(b2, steps_);
  for (size_t k = 0; k < params_.size(); ++k) {
    Tensor& p = params_[k];
    if (!p.has_grad()) continue;
    auto values = p.mutable_values();
    auto grad = p.mutable_grad();
    auto& m = m_[k];
    auto& v = v_[k];
    for (size_t i = 0; i < values.size(); ++i) {
      const double g = grad[i] * clip;
      m[i] = b1 * m[i] + (1 - b1) * g;
      v[i] = b2 * v[i] + (1 - b2) * g * g;
      values[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.adam_eps);
    }
    p.ZeroGrad();
  }
  return norm;
}

std::unique_ptr<TargetSmoother> MakeSmoother(
    const RunConfig& cfg, const Vocabulary& char_vocab,
    std::span<const std::string> train_text) {
  const int v = char_vocab.size();
  if (cfg.loss.smoothing == SmoothingMode::kConventional) {
    return std::make_unique<ConventionalSmoothing>(v, cfg.loss.epsilon);
  }
  std::optional<WordEmbedding> emb;
  if (!cfg.smoothing.vectors_path.empty()) {
    emb = LoadVectors(cfg.smoothing.vectors_path, char_vocab).embedding;
  } else {
    const int dim = std::min(cfg.smoothing.ppmi_dim, v);
    emb = TrainPpmiSvd(train_text, char_vocab, dim, cfg.smoothing.ppmi_window);
  }
  auto neighbours = BuildNeighbourSets(*emb, char_vocab, cfg.smoothing);
  return std::make_unique<EmbeddingSmoothing>(v, cfg.loss.epsilon,
                                              std::move(neighbours));
}

LossTerms UtteranceLoss(const ModelBundle& bundle, const TrainExample& ex,
                        const Matrix& feats, const TargetSmoother& smoother,
                        const ForwardOptions& opts, Rng& mask_rng) {
  const EncoderOutput enc = bundle.EncoderForward(feats, opts);
  LossTerms terms;
  const auto& ctc_target = bundle.has_p2m() ? ex.pinyin_ids : ex.char_ids;
  terms.ctc = CtcLoss(enc.ctc_log_probs, ctc_target,
                      bundle.ctc_vocab().blank_id());
  const int length = static_cast<int>(ex.char_ids.size());
  if (length == 0) return terms;
  if (bundle.has_cmlm()) {
    const std::vector<int> mask = SampleMask(length, mask_rng);
    const MaskedSequence masked =
        ApplyMask(ex.char_ids, mask, bundle.char_vocab().mask_id());
    const Tensor logits = bundle.CmlmForward(masked.ids, enc.hidden, opts);
    terms.cmlm = MaskedCrossEntropy(logits, ex.char_ids, mask, smoother);
  }
  if (bundle.has_p2m()) {
    const std::vector<int> mask = SampleMask(length, mask_rng);
    const MaskedSequence masked =
        ApplyMask(ex.pinyin_ids, mask, bundle.pinyin_vocab().mask_id());
    const Tensor logits = bundle.P2mForward(masked.ids, enc.hidden, opts);
    // Every position is supervised: decoding reads P2M output at the
    // observed positions.
    terms.p2m = MaskedCrossEntropy(logits, ex.char_ids, AllPositions(length),
                                   smoother);
  }
  return terms;
}

Tensor MatRegTerm(const ModelBundle& bundle, const LossConfig& cfg) {
  if (cfg.beta == 0 || !bundle.has_cmlm() || bundle.config().tie_weights) {
    return {};
  }
  const Tensor emb_t = Transpose(bundle.CmlmEmbedding());
  const bool ctc_fits = !bundle.has_p2m();
  const bool p2m_fits = bundle.has_p2m();
  bool use_ctc = false;
  bool use_p2m = false;
  switch (cfg.matreg_pair) {
    case MatRegPair::kAuto:
      use_ctc = ctc_fits;
      use_p2m = p2m_fits;
      break;
    case MatRegPair::kCtcEmbedding:
      if (!ctc_fits) {
        throw ConfigError("matreg pair ctc_emb needs a character-level CTC "
                          "head (W_CTC is over the Pinyin vocabulary)");
      }
      use_ctc = true;
      break;
    case MatRegPair::kP2mEmbedding:
      if (!p2m_fits) throw ConfigError("matreg pair p2m_emb needs a P2M decoder");
      use_p2m = true;
      break;
    case MatRegPair::kBoth:
      use_ctc = ctc_fits;
      use_p2m = p2m_fits;
      break;
  }
  Tensor total;
  if (use_ctc) total = MatRegLoss(bundle.CtcWeight(), emb_t);
  if (use_p2m) {
    const Tensor t = MatRegLoss(bundle.P2mOutputWeight(), emb_t);
    total = total.defined() ? Add(total, t) : t;
  }
  return total;
}

ValidationMetrics RunValidation(const ModelBundle& bundle,
                                std::span<const TrainExample> val,
                                const RunConfig& cfg) {
  NoGradGuard no_grad;
  ValidationMetrics m;
  if (val.empty()) return m;
  const Evaluation eval = Evaluate(bundle, val, cfg.decode, nullptr);
  m.ter = eval.report.ter();
  if (!bundle.has_cmlm()) {
    m.accuracy = 1.0 - m.ter;
    return m;
  }
  const Vocabulary& chars = bundle.char_vocab();
  Rng rng(cfg.seed + 17);
  long correct = 0;
  long total = 0;
  for (const auto& ex : val) {
    const int length = static_cast<int>(ex.char_ids.size());
    if (length == 0) continue;
    const std::vector<int> mask = SampleMask(length, rng);
    const MaskedSequence masked = ApplyMask(ex.char_ids, mask, chars.mask_id());
    const EncoderOutput enc = bundle.EncoderForward(ex.feats);
    const Tensor logits = bundle.CmlmForward(masked.ids, enc.hidden);
    const int v = chars.size();
    for (int p : mask) {
      const double* row = logits.values().data() + static_cast<size_t>(p) * v;
      correct += ArgmaxExcluding(row, v, chars.mask_id(), chars.blank_id()) ==
                 ex.char_ids[p];
      ++total;
    }
  }
  m.accuracy = total > 0 ? static_cast<double>(correct) / total : 0.0;
  return m;
}

TrainResult Train(ModelBundle* bundle, std::span<const TrainExample> train,
                  std::span<const TrainExample> val, const RunConfig& cfg,
                  const TargetSmoother& smoother,
                  const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  LossConfig loss_cfg = cfg.loss;
  if (!bundle->has_cmlm()) loss_cfg.alpha = 1.0;
  std::ofstream log;
  if (!out_dir.empty()) {
    std::error_code ec;
    fs::create_directories(out_dir / "ckpt", ec);
    if (ec) throw IoError("cannot create " + (out_dir / "ckpt").string());
    log.open(out_dir / "train_log.jsonl");
    if (!log) throw IoError("cannot write " + (out_dir / "train_log.jsonl").string());
  }
  std::vector<Tensor> params;
  for (auto& p : bundle->parameters()) params.push_back(p.tensor);
  AdamOptimizer opt(params, cfg.optim);
  Rng rng(cfg.seed * 0x9E3779B97F4A7C15ULL + 1);
  ForwardOptions train_opts{.train = true, .rng = &rng};
  std::vector<size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  TrainResult result;
  long batch_id = 0;
  const size_t batch_size = cfg.optim.batch_size;
  for (int epoch = 1; epoch <= cfg.optim.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), rng);
    EpochStats stats;
    stats.epoch = epoch;
    long utterances = 0;
    for (size_t b = 0; b < order.size(); b += batch_size) {
      ++batch_id;
      const size_t end = std::min(order.size(), b + batch_size);
      const double weight = 1.0 / static_cast<double>(end - b);
      for (size_t i = b; i < end; ++i) {
        const TrainExample& ex = train[order[i]];
        Matrix feats = ex.feats;
        if (cfg.augment.enabled) {
          feats = SpecAugment(feats, cfg.augment.time_masks,
                              std::min(cfg.augment.time_width, feats.rows),
                              cfg.augment.freq_masks,
                              std::min(cfg.augment.freq_width, feats.cols), rng);
        }
        LossTerms terms;
        try {
          terms = UtteranceLoss(*bundle, ex, feats, smoother, train_opts, rng);
        } catch (const CtcInfeasibleError& e) {
          spdlog::warn("skipping '{}': {}", ex.utt_id, e.what());
          continue;
        } catch (const NumericError& e) {
          throw NumericError(std::string(e.what()) + " at batch " +
                             std::to_string(batch_id) + " (epoch " +
                             std::to_string(epoch) + ", utterance '" +
                             ex.utt_id + "')");
        }
        const Tensor loss = CombinedLoss(terms, loss_cfg);
        const double value = loss.item();
        if (!std::isfinite(value)) {
          throw NumericError("non-finite loss at batch " +
                             std::to_string(batch_id) + " (epoch " +
                             std::to_string(epoch) + ", utterance '" +
                             ex.utt_id + "')");
        }
        Scale(loss, weight).Backward();
        stats.train_loss += value;
        stats.ctc += terms.ctc.item();
        if (terms.p2m.defined()) stats.p2m += terms.p2m.item();
        if (terms.cmlm.defined()) stats.cmlm += terms.cmlm.item();
        ++utterances;
      }
      const Tensor matreg = MatRegTerm(*bundle, loss_cfg);
      if (matreg.defined()) {
        const double value = matreg.item();
        if (!std::isfinite(value)) {
          throw NumericError("non-finite regularizer at batch " +
                             std::to_string(batch_id));
        }
        Scale(matreg, loss_cfg.beta).Backward();
        stats.matreg = value;
      }
      opt.Step(LearningRate(cfg.optim, opt.steps() + 1));
    }
    if (utterances > 0) {
      stats.train_loss /= utterances;
      stats.ctc /= utterances;
      stats.p2m /= utterances;
      stats.cmlm /= utterances;
    }
    stats.steps = opt.steps();
    const ValidationMetrics vm = RunValidation(*bundle, val, cfg);
    stats.val_ter = vm.ter;
    stats.val_accuracy = vm.accuracy;
    stats.seconds = std::chrono::duration<double>(
                        std::chrono::steady_clock::now() - start)
                        .count();
    if (!out_dir.empty()) {
      char name[32];
      std::snprintf(name, sizeof(name), "epoch_%03d.ckpt", epoch);
      stats.checkpoint = out_dir / "ckpt" / name;
      SaveCheckpoint(*bundle, stats.checkpoint,
                     {{"epoch", epoch},
                      {"val_accuracy", stats.val_accuracy},
                      {"val_ter", stats.val_ter},
                      {"train_loss", stats.train_loss}});
      log << nlohmann::json{{"epoch", epoch},
                            {"steps", stats.steps},
                            {"train_loss", stats.train_loss},
                            {"ctc", stats.ctc},
                            {"p2m", stats.p2m},
                            {"cmlm", stats.cmlm},
                            {"matreg", stats.matreg},
                            {"val_ter", stats.val_ter},
                            {"val_accuracy", stats.val_accuracy},
                            {"lr", LearningRate(cfg.optim, opt.steps())},
                            {"seconds", stats.seconds},
                            {"checkpoint", stats.checkpoint.filename().string()}}
                 .dump()
          << '\n'
          << std::flush;
    }
    spdlog::info(
        "epoch {:3d} loss {:.4f} (ctc {:.3f} p2m {:.3f} cmlm {:.3f}) "
        "val TER {:.2f}% acc {:.3f} [{:.1f}s]",
        epoch, stats.train_loss, stats.ctc, stats.p2m, stats.cmlm,
        100 * stats.val_ter, stats.val_accuracy, stats.seconds);
    result.epochs.push_back(std::move(stats));
  }
  return result;
}

std::vector<TokenizedUtterance> References(
    std::span<const TrainExample> examples) {
  std::vector<TokenizedUtterance> out;
  for (const auto& ex : examples) out.push_back({ex.utt_id, ex.tokens});
  return out;
}

std::vector<TokenizedUtterance> HypothesisTokens(
    std::span<const Hypothesis> hyps) {
  std::vector<TokenizedUtterance> out;
  for (const auto& h : hyps) out.push_back({h.utt_id, h.tokens});
  return out;
}

Evaluation Evaluate(const ModelBundle& bundle,
                    std::span<const TrainExample> examples,
                    const DecodeConfig& cfg, const PinyinTable* table) {
  std::vector<DecodeInput> inputs;
  inputs.reserve(examples.size());
  for (const auto& ex : examples) inputs.push_back({ex.utt_id, ex.feats});
  Evaluation eval;
  eval.hyps = DecodeCorpus(bundle, inputs, cfg);
  const auto refs = References(examples);
  const auto hyps = HypothesisTokens(eval.hyps);
  eval.report = ScoreCorpus(refs, hyps, &bundle.char_vocab());
  if (table != nullptr) {
    eval.report.per = PerScore(refs, hyps, *table, &bundle.char_vocab()).per;
  }
  if (!eval.hyps.empty()) eval.report.rtf = MeasureRtf(eval.hyps);
  return eval;
}

}  // namespace mcctc
