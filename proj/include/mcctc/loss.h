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

#ifndef MCCTC_LOSS_H_
#define MCCTC_LOSS_H_

#include <memory>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "mcctc/tensor.h"

namespace mcctc {

enum class SmoothingMode { kConventional, kEmbedding };

// Which (output projection, CMLM input embedding) pairs the cosine
// regularizer ties. kAuto picks (W_CTC, W_emb) for mask_ctc and
// (W_p2m, W_emb) for mask_ctc_p2m.
enum class MatRegPair { kAuto, kCtcEmbedding, kP2mEmbedding, kBoth };

std::string_view SmoothingModeName(SmoothingMode m);
SmoothingMode ParseSmoothingMode(std::string_view name);
std::string_view MatRegPairName(MatRegPair p);
MatRegPair ParseMatRegPair(std::string_view name);

struct LossConfig {
  double alpha = 0.3;
  double beta = 1e-4;
  SmoothingMode smoothing = SmoothingMode::kConventional;
  double epsilon = 0.1;
  MatRegPair matreg_pair = MatRegPair::kAuto;

  void Validate() const;
};

nlohmann::json ToJson(const LossConfig& c);
LossConfig LossConfigFromJson(const nlohmann::json& j);

// A token sequence with an explicit set of masked positions. The ids at
// masked positions hold the vocabulary's mask id.
struct MaskedSequence {
  std::vector<int> ids;
  std::vector<int> mask_positions;  // ascending

  void Validate(int mask_id) const;
};

MaskedSequence ApplyMask(std::span<const int> ids,
                         std::span<const int> positions, int mask_id);

// --- CTC --------------------------------------------------------------------

// Frames needed to emit `target`: one per label plus a blank between each
// pair of equal neighbours.
int CtcMinFrames(std::span<const int> target);

struct CtcResult {
  double nll = 0;
  std::vector<double> grad;  // d nll / d log_probs, frames x vocab
};

// Forward-backward in log space over a frames x vocab matrix of
// log-probabilities. Throws CtcInfeasibleError when the target cannot fit and
// NumericError when the total path probability underflows to zero.
CtcResult CtcForwardBackward(std::span<const double> log_probs, int frames,
                             int vocab, std::span<const int> target,
                             int blank);

// Scalar autodiff node wrapping CtcForwardBackward.
Tensor CtcLoss(const Tensor& log_probs, std::span<const int> target,
               int blank);

// --- masking and smoothed cross-entropy ---------------------------------------

// m ~ Uniform{1..L} positions drawn without replacement; ascending order.
std::vector<int> SampleMask(int length, Rng& rng);

using SparseDistribution = std::vector<std::pair<int, double>>;

class TargetSmoother {
 public:
  virtual ~TargetSmoother() = default;
  virtual SparseDistribution Distribution(int target) const = 0;
  virtual int vocab_size() const = 0;
};

class OneHotTargets : public TargetSmoother {
 public:
  explicit OneHotTargets(int vocab_size) : vocab_size_(vocab_size) {}
  SparseDistribution Distribution(int target) const override {
    return {{target, 1.0}};
  }
  int vocab_size() const override { return vocab_size_; }

 private:
  int vocab_size_;
};

// 1 - eps on the target, eps spread uniformly over every other label.
class ConventionalSmoothing : public TargetSmoother {
 public:
  ConventionalSmoothing(int vocab_size, double epsilon);
  SparseDistribution Distribution(int target) const override;
  int vocab_size() const override { return vocab_size_; }

 private:
  int vocab_size_;
  double epsilon_;
};

// 1 - eps on the target, eps / |D| on each word-embedding neighbour in D.
// Targets with an empty neighbour set fall back to conventional smoothing.
class EmbeddingSmoothing : public TargetSmoother {
 public:
  EmbeddingSmoothing(int vocab_size, double epsilon,
                     std::vector<std::vector<int>> neighbours);
  SparseDistribution Distribution(int target) const override;
  int vocab_size() const override { return vocab_size_; }
  const std::vector<int>& neighbours(int target) const {
    return neighbours_[target];
  }

 private:
  int vocab_size_;
  double epsilon_;
  std::vector<std::vector<int>> neighbours_;
  ConventionalSmoothing fallback_;
};

// Mean over masked positions of -sum_y q(y) log softmax(logits)_y, where q is
// the smoothed target distribution. Throws std::invalid_argument on an empty
// mask set.
Tensor MaskedCrossEntropy(const Tensor& logits, std::span<const int> targets,
                          std::span<const int> mask_positions,
                          const TargetSmoother& smoother);

// --- projection-matrix regularizer -------------------------------------------

// (1/|V|) sum_v [1 - cos(a_v, b_v)] over the columns of two d x |V| matrices.
// A zero-norm column scores cos = 0 (with a warning).
Tensor MatRegLoss(const Tensor& wa, const Tensor& wb);

// --- combined objective -----------------------------------------------------

struct LossTerms {
  Tensor ctc;     // required
  Tensor p2m;     // optional
  Tensor cmlm;    // optional
  Tensor matreg;  // optional
};

// alpha * ctc + (1 - alpha) * (p2m + cmlm) + beta * matreg; undefined terms
// are dropped.
Tensor CombinedLoss(const LossTerms& terms, const LossConfig& cfg);
double CombinedLoss(double ctc, double p2m, double cmlm, double matreg,
                    const LossConfig& cfg);

}  // namespace mcctc

#endif  // MCCTC_LOSS_H_
