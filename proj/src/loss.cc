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

#include "mcctc/loss.h"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "mcctc/error.h"
#include "mcctc/json_util.h"

namespace mcctc {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double LogAdd(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  if (a < b) std::swap(a, b);
  return a + std::log1p(std::exp(b - a));
}

}  // namespace

std::string_view SmoothingModeName(SmoothingMode m) {
  return m == SmoothingMode::kEmbedding ? "embedding" : "conventional";
}

SmoothingMode ParseSmoothingMode(std::string_view name) {
  if (name == "conventional") return SmoothingMode::kConventional;
  if (name == "embedding") return SmoothingMode::kEmbedding;
  throw ConfigError("unknown smoothing mode '" + std::string(name) + "'");
}

std::string_view MatRegPairName(MatRegPair p) {
  switch (p) {
    case MatRegPair::kAuto:
      return "auto";
    case MatRegPair::kCtcEmbedding:
      return "ctc_emb";
    case MatRegPair::kP2mEmbedding:
      return "p2m_emb";
    case MatRegPair::kBoth:
      return "both";
  }
  return "auto";
}

MatRegPair ParseMatRegPair(std::string_view name) {
  if (name == "auto") return MatRegPair::kAuto;
  if (name == "ctc_emb") return MatRegPair::kCtcEmbedding;
  if (name == "p2m_emb") return MatRegPair::kP2mEmbedding;
  if (name == "both") return MatRegPair::kBoth;
  throw ConfigError("unknown matreg pair '" + std::string(name) + "'");
}

void LossConfig::Validate() const {
  if (!(alpha >= 0 && alpha <= 1)) throw ConfigError("loss.alpha must be in [0,1]");
  if (!(beta >= 0)) throw ConfigError("loss.beta must be >= 0");
  if (!(epsilon > 0 && epsilon < 1)) {
    throw ConfigError("loss.epsilon must be in (0,1)");
  }
}

nlohmann::json ToJson(const LossConfig& c) {
  return {{"alpha", c.alpha},
          {"beta", c.beta},
          {"smoothing", SmoothingModeName(c.smoothing)},
          {"epsilon", c.epsilon},
          {"matreg_pair", MatRegPairName(c.matreg_pair)}};
}

LossConfig LossConfigFromJson(const nlohmann::json& j) {
  constexpr std::string_view kWhere = "loss";
  RejectUnknownKeys(j, {"alpha", "beta", "smoothing", "epsilon", "matreg_pair"},
                    kWhere);
  LossConfig c;
  ReadOptional(j, "alpha", &c.alpha, kWhere);
  ReadOptional(j, "beta", &c.beta, kWhere);
  ReadOptional(j, "epsilon", &c.epsilon, kWhere);
  std::string mode(SmoothingModeName(c.smoothing));
  ReadOptional(j, "smoothing", &mode, kWhere);
  c.smoothing = ParseSmoothingMode(mode);
  std::string pair(MatRegPairName(c.matreg_pair));
  ReadOptional(j, "matreg_pair", &pair, kWhere);
  c.matreg_pair = ParseMatRegPair(pair);
  return c;
}

void MaskedSequence::Validate(int mask_id) const {
  int prev = -1;
  for (int p : mask_positions) {
    if (p < 0 || p >= static_cast<int>(ids.size()) || p <= prev) {
      throw std::invalid_argument("mask position " + std::to_string(p) +
                                  " out of range or not ascending");
    }
    if (ids[p] != mask_id) {
      throw std::invalid_argument("masked position " + std::to_string(p) +
                                  " does not hold the mask id");
    }
    prev = p;
  }
}

MaskedSequence ApplyMask(std::span<const int> ids,
                         std::span<const int> positions, int mask_id) {
  MaskedSequence seq;
  seq.ids.assign(ids.begin(), ids.end());
  seq.mask_positions.assign(positions.begin(), positions.end());
  std::sort(seq.mask_positions.begin(), seq.mask_positions.end());
  for (int p : seq.mask_positions) seq.ids.at(p) = mask_id;
  return seq;
}

// --- CTC --------------------------------------------------------------------

int CtcMinFrames(std::span<const int> target) {
  int frames = static_cast<int>(target.size());
  for (size_t i = 1; i < target.size(); ++i) {
    if (target[i] == target[i - 1]) ++frames;
  }
  return frames;
}

CtcResult CtcForwardBackward(std::span<const double> log_probs, int frames,
                             int vocab, std::span<const int> target,
                             int blank) {
  if (log_probs.size() != static_cast<size_t>(frames) * vocab) {
    throw ShapeError("ctc: log_probs size does not match frames x vocab");
  }
  for (int label : target) {
    if (label < 0 || label >= vocab || label == blank) {
      throw std::invalid_argument("ctc: invalid target label " +
                                  std::to_string(label));
    }
  }
  const int needed = CtcMinFrames(target);
  if (frames < needed || frames == 0) {
    throw CtcInfeasibleError("ctc: target needs " + std::to_string(needed) +
                             " frames, only " + std::to_string(frames) +
                             " available");
  }

  // Extended label sequence: blank, l1, blank, l2, ..., blank.
  const int states = 2 * static_cast<int>(target.size()) + 1;
  std::vector<int> ext(states, blank);
  for (size_t i = 0; i < target.size(); ++i) ext[2 * i + 1] = target[i];
  auto lp = [&](int t, int s) {
    return log_probs[static_cast<size_t>(t) * vocab + ext[s]];
  };
  auto can_skip = [&](int s) {  // transition s-2 -> s allowed
    return s >= 2 && ext[s] != blank && ext[s] != ext[s - 2];
  };

  std::vector<double> alpha(static_cast<size_t>(frames) * states, kNegInf);
  std::vector<double> beta(static_cast<size_t>(frames) * states, kNegInf);
  auto A = [&](int t, int s) -> double& { return alpha[static_cast<size_t>(t) * states + s]; };
  auto B = [&](int t, int s) -> double& { return beta[static_cast<size_t>(t) * states + s]; };

  A(0, 0) = lp(0, 0);
  if (states > 1) A(0, 1) = lp(0, 1);
  for (int t = 1; t < frames; ++t) {
    for (int s = 0; s < states; ++s) {
      double acc = A(t - 1, s);
      if (s >= 1) acc = LogAdd(acc, A(t - 1, s - 1));
      if (can_skip(s)) acc = LogAdd(acc, A(t - 1, s - 2));
      A(t, s) = acc == kNegInf ? kNegInf : acc + lp(t, s);
    }
  }

  // beta excludes the emission at t itself.
  B(frames - 1, states - 1) = 0.0;
  if (states > 1) B(frames - 1, states - 2) = 0.0;
  for (int t = frames - 2; t >= 0; --t) {
    for (int s = 0; s < states; ++s) {
      double acc = B(t + 1, s) + lp(t + 1, s);
      if (s + 1 < states) acc = LogAdd(acc, B(t + 1, s + 1) + lp(t + 1, s + 1));
      if (s + 2 < states && can_skip(s + 2)) {
        acc = LogAdd(acc, B(t + 1, s + 2) + lp(t + 1, s + 2));
      }
      B(t, s) = acc;
    }
  }

  double log_total = A(frames - 1, states - 1);
  if (states > 1) log_total = LogAdd(log_total, A(frames - 1, states - 2));
  if (!std::isfinite(log_total)) {
    throw NumericError("ctc: total path probability is not finite");
  }

  CtcResult result;
  result.nll = -log_total;
  result.grad.assign(log_probs.size(), 0.0);
  for (int t = 0; t < frames; ++t) {
    for (int s = 0; s < states; ++s) {
      const double occ = A(t, s) + B(t, s);
      if (occ == kNegInf) continue;
      result.grad[static_cast<size_t>(t) * vocab + ext[s]] -=
          std::exp(occ - log_total);
    }
  }
  return result;
}

Tensor CtcLoss(const Tensor& log_probs, std::span<const int> target,
               int blank) {
  if (log_probs.rank() != 2) {
    throw ShapeError("ctc: log_probs must be rank 2, got " +
                     ShapeToString(log_probs.shape()));
  }
  CtcResult r = CtcForwardBackward(log_probs.values(), log_probs.dim(0),
                                   log_probs.dim(1), target, blank);
  return CustomOp("ctc_loss", {}, {r.nll}, {log_probs},
                  [grad = std::move(r.grad)](std::span<const double> out_grad,
                                             std::vector<std::span<double>>& g) {
                    if (g[0].empty()) return;
                    for (size_t i = 0; i < grad.size(); ++i) {
                      g[0][i] += out_grad[0] * grad[i];
                    }
                  });
}

// --- masking and smoothing --------------------------------------------------

std::vector<int> SampleMask(int length, Rng& rng) {
  if (length <= 0) return {};
  std::uniform_int_distribution<int> count_dist(1, length);
  const int count = count_dist(rng);
  std::vector<int> positions(length);
  std::iota(positions.begin(), positions.end(), 0);
  // Partial Fisher-Yates: the first `count` slots are a uniform sample.
  for (int i = 0; i < count; ++i) {
    std::uniform_int_distribution<int> pick(i, length - 1);
    std::swap(positions[i], positions[pick(rng)]);
  }
  positions.resize(count);
  std::sort(positions.begin(), positions.end());
  return positions;
}

ConventionalSmoothing::ConventionalSmoothing(int vocab_size, double epsilon)
    : vocab_size_(vocab_size), epsilon_(epsilon) {
  if (vocab_size < 2) throw std::invalid_argument("smoothing needs |V| >= 2");
}

SparseDistribution ConventionalSmoothing::Distribution(int target) const {
  SparseDistribution dist;
  dist.reserve(vocab_size_);
  const double other = epsilon_ / (vocab_size_ - 1);
  for (int y = 0; y < vocab_size_; ++y) {
    dist.emplace_back(y, y == target ? 1.0 - epsilon_ : other);
  }
  return dist;
}

EmbeddingSmoothing::EmbeddingSmoothing(int vocab_size, double epsilon,
                                       std::vector<std::vector<int>> neighbours)
    : vocab_size_(vocab_size),
      epsilon_(epsilon),
      neighbours_(std::move(neighbours)),
      fallback_(vocab_size, epsilon) {
  if (static_cast<int>(neighbours_.size()) != vocab_size) {
    throw std::invalid_argument("embedding smoothing: one neighbour set per token");
  }
  int empty = 0;
  for (const auto& d : neighbours_) empty += d.empty();
  if (empty > 0) {
    spdlog::warn("embedding smoothing: {} of {} tokens have no neighbours and "
                 "use conventional smoothing",
                 empty, vocab_size);
  }
}

SparseDistribution EmbeddingSmoothing::Distribution(int target) const {
  const auto& d = neighbours_.at(target);
  if (d.empty()) return fallback_.Distribution(target);
  SparseDistribution dist;
  dist.reserve(d.size() + 1);
  dist.emplace_back(target, 1.0 - epsilon_);
  const double share = epsilon_ / static_cast<double>(d.size());
  for (int y : d) dist.emplace_back(y, share);
  return dist;
}

Tensor MaskedCrossEntropy(const Tensor& logits, std::span<const int> targets,
                          std::span<const int> mask_positions,
                          const TargetSmoother& smoother) {
  if (mask_positions.empty()) {
    throw std::invalid_argument("masked_ce: empty mask set");
  }
  if (logits.rank() != 2 || logits.dim(1) != smoother.vocab_size() ||
      static_cast<size_t>(logits.dim(0)) != targets.size()) {
    throw ShapeError("masked_ce: logits " + ShapeToString(logits.shape()) +
                     " do not match " + std::to_string(targets.size()) +
                     " targets over |V|=" +
                     std::to_string(smoother.vocab_size()));
  }
  const int vocab = logits.dim(1);
  std::vector<double> q(logits.size(), 0.0);
  for (int pos : mask_positions) {
    if (pos < 0 || pos >= logits.dim(0)) {
      throw std::out_of_range("masked_ce: position " + std::to_string(pos));
    }
    for (const auto& [y, p] : smoother.Distribution(targets[pos])) {
      q[static_cast<size_t>(pos) * vocab + y] += p;
    }
  }
  const Tensor weights = Tensor::Constant(logits.shape(), std::move(q));
  return Scale(Sum(Mul(LogSoftmaxLastDim(logits), weights)),
               -1.0 / static_cast<double>(mask_positions.size()));
}

// --- MatReg -------------------------------------------------------------------

Tensor MatRegLoss(const Tensor& wa, const Tensor& wb) {
  if (wa.rank() != 2 || wa.shape() != wb.shape()) {
    throw ShapeError("matreg: shape mismatch " + ShapeToString(wa.shape()) +
                     " vs " + ShapeToString(wb.shape()));
  }
  const int d = wa.dim(0);
  const int cols = wa.dim(1);
  const auto a = wa.values();
  const auto b = wb.values();
  std::vector<double> norm_a(cols, 0.0), norm_b(cols, 0.0), dot(cols, 0.0);
  for (int i = 0; i < d; ++i) {
    for (int v = 0; v < cols; ++v) {
      const size_t k = static_cast<size_t>(i) * cols + v;
      norm_a[v] += a[k] * a[k];
      norm_b[v] += b[k] * b[k];
      dot[v] += a[k] * b[k];
    }
  }
  std::vector<double> cosine(cols, 0.0);
  int zero_columns = 0;
  double total = 0.0;
  for (int v = 0; v < cols; ++v) {
    norm_a[v] = std::sqrt(norm_a[v]);
    norm_b[v] = std::sqrt(norm_b[v]);
    if (norm_a[v] == 0.0 || norm_b[v] == 0.0) {
      ++zero_columns;
    } else {
      cosine[v] = dot[v] / (norm_a[v] * norm_b[v]);
    }
    total += 1.0 - cosine[v];
  }
  if (zero_columns > 0) {
    spdlog::warn("matreg: {} zero-norm column(s) scored as cos = 0",
                 zero_columns);
  }
  const double loss = cols == 0 ? 0.0 : total / cols;
  return CustomOp(
      "matreg", {}, {loss}, {wa, wb},
      [d, cols, norm_a, norm_b, cosine, av = std::vector<double>(a.begin(), a.end()),
       bv = std::vector<double>(b.begin(), b.end())](
          std::span<const double> out_grad, std::vector<std::span<double>>& g) {
        const double scale = -out_grad[0] / cols;
        for (int i = 0; i < d; ++i) {
          for (int v = 0; v < cols; ++v) {
            if (norm_a[v] == 0.0 || norm_b[v] == 0.0) continue;
            const size_t k = static_cast<size_t>(i) * cols + v;
            const double inv = 1.0 / (norm_a[v] * norm_b[v]);
            if (!g[0].empty()) {
              g[0][k] += scale * (bv[k] * inv -
                                  cosine[v] * av[k] / (norm_a[v] * norm_a[v]));
            }
            if (!g[1].empty()) {
              g[1][k] += scale * (av[k] * inv -
                                  cosine[v] * bv[k] / (norm_b[v] * norm_b[v]));
            }
          }
        }
      });
}

// --- combined -----------------------------------------------------------------

Tensor CombinedLoss(const LossTerms& terms, const LossConfig& cfg) {
  if (!terms.ctc.defined()) throw std::invalid_argument("combined loss needs ctc");
  Tensor total = Scale(terms.ctc, cfg.alpha);
  for (const Tensor* t : {&terms.p2m, &terms.cmlm}) {
    if (t->defined()) total = Add(total, Scale(*t, 1.0 - cfg.alpha));
  }
  if (terms.matreg.defined() && cfg.beta > 0) {
    total = Add(total, Scale(terms.matreg, cfg.beta));
  }
  return total;
}

double CombinedLoss(double ctc, double p2m, double cmlm, double matreg,
                    const LossConfig& cfg) {
  return cfg.alpha * ctc + (1.0 - cfg.alpha) * p2m + (1.0 - cfg.alpha) * cmlm +
         cfg.beta * matreg;
}

}  // namespace mcctc
