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

#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "gtest/gtest.h"
#include "mcctc/error.h"
#include "oracles.h"
#include "test_util.h"

namespace mcctc {
namespace {

using oracle::CtcNllByEnumeration;
using oracle::RandomLogProbRows;
using testing::RandomTensor;

constexpr int kBlank = 0;

// --- CTC ----------------------------------------------------------------------

TEST(CtcTest, SingleFrameSinglePath) {
  const std::vector<double> lp = {std::log(0.4), std::log(0.6)};
  const CtcResult r = CtcForwardBackward(lp, 1, 2, std::vector<int>{1}, kBlank);
  EXPECT_NEAR(r.nll, -std::log(0.6), 1e-12);
  EXPECT_NEAR(r.nll, 0.5108, 1e-4);
}

TEST(CtcTest, TwoUniformFramesHaveThreePaths) {
  const double h = std::log(0.5);
  const std::vector<double> lp = {h, h, h, h};
  const CtcResult r = CtcForwardBackward(lp, 2, 2, std::vector<int>{1}, kBlank);
  EXPECT_NEAR(r.nll, -std::log(0.75), 1e-12);
  EXPECT_NEAR(r.nll, 0.2877, 1e-4);
  EXPECT_NEAR(r.nll, CtcNllByEnumeration(lp, 2, 2, std::vector<int>{1}, kBlank),
              1e-12);
}

TEST(CtcTest, EmptyTargetIsAllBlank) {
  std::mt19937_64 rng(1);
  const std::vector<double> lp = RandomLogProbRows(4, 3, rng);
  const CtcResult r = CtcForwardBackward(lp, 4, 3, {}, kBlank);
  double expected = 0;
  for (int t = 0; t < 4; ++t) expected -= lp[t * 3 + kBlank];
  EXPECT_NEAR(r.nll, expected, 1e-12);
}

TEST(CtcTest, MinFramesCountsRepeats) {
  EXPECT_EQ(CtcMinFrames(std::vector<int>{}), 0);
  EXPECT_EQ(CtcMinFrames(std::vector<int>{1, 2, 3}), 3);
  EXPECT_EQ(CtcMinFrames(std::vector<int>{1, 1, 2, 2}), 6);
}

TEST(CtcTest, InfeasibleTargetIsDistinguished) {
  std::mt19937_64 rng(2);
  const std::vector<double> lp = RandomLogProbRows(2, 3, rng);
  EXPECT_THROW(CtcForwardBackward(lp, 2, 3, std::vector<int>{1, 2, 1}, kBlank),
               CtcInfeasibleError);
  // A repeat needs a separating blank.
  EXPECT_THROW(CtcForwardBackward(lp, 2, 3, std::vector<int>{1, 1}, kBlank),
               CtcInfeasibleError);
}

TEST(CtcTest, ZeroProbabilityIsNumericError) {
  const double ninf = -std::numeric_limits<double>::infinity();
  const std::vector<double> lp = {0.0, ninf};
  EXPECT_THROW(CtcForwardBackward(lp, 1, 2, std::vector<int>{1}, kBlank),
               NumericError);
}

// Exhaustive over small shapes against path enumeration.
TEST(CtcTest, MatchesEnumerationOnAllSmallInstances) {
  std::mt19937_64 rng(3);
  int checked = 0;
  for (int frames = 1; frames <= 6; ++frames) {
    for (int vocab = 2; vocab <= 4; ++vocab) {
      for (int len = 0; len <= 3; ++len) {
        for (int trial = 0; trial < 4; ++trial) {
          std::uniform_int_distribution<int> label(1, vocab - 1);
          std::vector<int> target(len);
          for (auto& y : target) y = label(rng);
          const std::vector<double> lp = RandomLogProbRows(frames, vocab, rng);
          if (CtcMinFrames(target) > frames) {
            EXPECT_THROW(CtcForwardBackward(lp, frames, vocab, target, kBlank),
                         CtcInfeasibleError);
            continue;
          }
          const double got =
              CtcForwardBackward(lp, frames, vocab, target, kBlank).nll;
          EXPECT_NEAR(got,
                      CtcNllByEnumeration(lp, frames, vocab, target, kBlank),
                      1e-9);
          ++checked;
        }
      }
    }
  }
  EXPECT_GT(checked, 200);
}

TEST(CtcTest, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor logits = RandomTensor({5, 4}, rng);
    const std::vector<int> target = {1, 3, 3};
    const double err = GradCheck(
        [&](const Tensor& x) {
          return CtcLoss(LogSoftmaxLastDim(x), target, kBlank);
        },
        logits, 1e-5);
    EXPECT_LT(err, 1e-5);
  }
}

TEST(CtcTest, GradientRowsSumToMinusOneInLogSpace) {
  // d nll / d log p_t(k) = -gamma_t(k); occupation sums to one per frame.
  std::mt19937_64 rng(5);
  const std::vector<double> lp = RandomLogProbRows(6, 4, rng);
  const CtcResult r =
      CtcForwardBackward(lp, 6, 4, std::vector<int>{2, 1}, kBlank);
  for (int t = 0; t < 6; ++t) {
    double s = 0;
    for (int k = 0; k < 4; ++k) s += r.grad[t * 4 + k];
    EXPECT_NEAR(s, -1.0, 1e-10);
  }
}

// --- masking --------------------------------------------------------------------

TEST(SampleMaskTest, SingleTokenIsAlwaysMasked) {
  Rng rng(1);
  for (int i = 0; i < 20; ++i) {
    EXPECT_EQ(SampleMask(1, rng), std::vector<int>{0});
  }
}

TEST(SampleMaskTest, EmptyLengthGivesEmptySet) {
  Rng rng(1);
  EXPECT_TRUE(SampleMask(0, rng).empty());
}

TEST(SampleMaskTest, ReproducibleForSeed) {
  Rng a(42);
  Rng b(42);
  EXPECT_EQ(SampleMask(10, a), SampleMask(10, b));
}

TEST(SampleMaskTest, PositionsAreSortedDistinctAndInRange) {
  Rng rng(7);
  for (int i = 0; i < 500; ++i) {
    const int len = 1 + i % 12;
    const auto m = SampleMask(len, rng);
    ASSERT_FALSE(m.empty());
    for (size_t j = 0; j < m.size(); ++j) {
      EXPECT_GE(m[j], 0);
      EXPECT_LT(m[j], len);
      if (j > 0) EXPECT_LT(m[j - 1], m[j]);
    }
  }
}

TEST(SampleMaskTest, CountIsUniform) {
  Rng rng(11);
  std::vector<int> hist(5, 0);
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) ++hist[SampleMask(4, rng).size()];
  EXPECT_EQ(hist[0], 0);
  for (int m = 1; m <= 4; ++m) {
    EXPECT_NEAR(hist[m] / static_cast<double>(draws), 0.25, 0.02) << "m=" << m;
  }
}

TEST(SampleMaskTest, PositionsAreExchangeable) {
  Rng rng(12);
  std::vector<int> hits(6, 0);
  const int draws = 20000;
  int total = 0;
  for (int i = 0; i < draws; ++i) {
    for (int p : SampleMask(6, rng)) ++hits[p], ++total;
  }
  for (int p = 0; p < 6; ++p) {
    EXPECT_NEAR(hits[p] / static_cast<double>(total), 1.0 / 6, 0.01);
  }
}

TEST(ApplyMaskTest, ReplacesPositions) {
  const MaskedSequence s =
      ApplyMask(std::vector<int>{5, 6, 7}, std::vector<int>{0, 2}, 3);
  EXPECT_EQ(s.ids, (std::vector<int>{3, 6, 3}));
  EXPECT_EQ(s.mask_positions, (std::vector<int>{0, 2}));
  EXPECT_NO_THROW(s.Validate(3));
  EXPECT_THROW(ApplyMask(std::vector<int>{5}, std::vector<int>{1}, 3),
               std::out_of_range);
}

// --- smoothing and cross-entropy ------------------------------------------------

double DistributionMass(const SparseDistribution& d) {
  double s = 0;
  for (const auto& [y, q] : d) s += q;
  return s;
}

TEST(SmoothingTest, ConventionalSpreadsEvenly) {
  const ConventionalSmoothing s(11, 0.1);
  const auto d = s.Distribution(4);
  ASSERT_EQ(d.size(), 11u);
  for (const auto& [y, q] : d) EXPECT_DOUBLE_EQ(q, y == 4 ? 0.9 : 0.01);
  EXPECT_NEAR(DistributionMass(d), 1.0, 1e-15);
}

TEST(SmoothingTest, EmbeddingUsesNeighbours) {
  std::vector<std::vector<int>> nb(6);
  nb[1] = {2, 3};
  const EmbeddingSmoothing s(6, 0.1, nb);
  const auto d = s.Distribution(1);
  ASSERT_EQ(d.size(), 3u);
  EXPECT_EQ(d[0], (std::pair<int, double>{1, 0.9}));
  EXPECT_DOUBLE_EQ(d[1].second, 0.05);
  EXPECT_DOUBLE_EQ(d[2].second, 0.05);
  // Empty neighbour set falls back to conventional smoothing.
  EXPECT_EQ(s.Distribution(0).size(), 6u);
  EXPECT_NEAR(DistributionMass(s.Distribution(0)), 1.0, 1e-15);
}

TEST(MaskedCrossEntropyTest, PerfectPredictionIsZero) {
  const Tensor logits = Tensor::Constant({1, 3}, {0, 1000, 0});
  const OneHotTargets one_hot(3);
  const Tensor loss = MaskedCrossEntropy(logits, std::vector<int>{1},
                                         std::vector<int>{0}, one_hot);
  EXPECT_NEAR(loss.item(), 0.0, 1e-12);
}

TEST(MaskedCrossEntropyTest, UniformLogitsGiveLogV) {
  const Tensor logits = Tensor::Zeros({2, 7});
  const OneHotTargets one_hot(7);
  const Tensor loss = MaskedCrossEntropy(logits, std::vector<int>{1, 2},
                                         std::vector<int>{0, 1}, one_hot);
  EXPECT_NEAR(loss.item(), std::log(7.0), 1e-12);
}

TEST(MaskedCrossEntropyTest, UnmaskedPositionsContributeNothing) {
  std::mt19937_64 rng(1);
  const Tensor a = RandomTensor({3, 5}, rng);
  std::vector<double> v(a.values().begin(), a.values().end());
  for (int k = 0; k < 5; ++k) v[k] += 10 * k;  // perturb row 0 only
  const Tensor b = Tensor::Constant({3, 5}, v);
  const OneHotTargets one_hot(5);
  const std::vector<int> targets = {1, 2, 3};
  const std::vector<int> mask = {1, 2};
  EXPECT_DOUBLE_EQ(MaskedCrossEntropy(a, targets, mask, one_hot).item(),
                   MaskedCrossEntropy(b, targets, mask, one_hot).item());
}

TEST(MaskedCrossEntropyTest, SmoothedTargetMatchesDirectSum) {
  std::mt19937_64 rng(2);
  const int v = 15;
  std::vector<std::vector<int>> nb(v);
  for (int y = 0; y < v; ++y) {
    for (int k = 1; k <= 10; ++k) nb[y].push_back((y + k) % v);
  }
  const EmbeddingSmoothing smoother(v, 0.1, nb);
  const Tensor logits = RandomTensor({4, v}, rng, 2.0);
  const std::vector<int> targets = {3, 9, 0, 14};
  const std::vector<int> mask = {0, 2, 3};
  double expected = 0;
  for (int pos : mask) {
    double mx = -1e300;
    for (int k = 0; k < v; ++k) mx = std::max(mx, logits.at(pos, k));
    double z = 0;
    for (int k = 0; k < v; ++k) z += std::exp(logits.at(pos, k) - mx);
    auto log_p = [&](int k) { return logits.at(pos, k) - mx - std::log(z); };
    const int t = targets[pos];
    expected -= 0.9 * log_p(t);
    for (int n : nb[t]) expected -= 0.01 * log_p(n);
  }
  expected /= mask.size();
  EXPECT_NEAR(MaskedCrossEntropy(logits, targets, mask, smoother).item(),
              expected, 1e-12);
}

TEST(MaskedCrossEntropyTest, EmptyMaskIsAnError) {
  const OneHotTargets one_hot(3);
  EXPECT_THROW(MaskedCrossEntropy(Tensor::Zeros({1, 3}), std::vector<int>{1},
                                  {}, one_hot),
               std::invalid_argument);
}

TEST(MaskedCrossEntropyTest, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(3);
  const ConventionalSmoothing smoother(6, 0.1);
  const std::vector<int> targets = {1, 4, 5};
  const std::vector<int> mask = {0, 2};
  const double err = GradCheck(
      [&](const Tensor& x) {
        return MaskedCrossEntropy(x, targets, mask, smoother);
      },
      RandomTensor({3, 6}, rng), 1e-5);
  EXPECT_LT(err, 1e-6);
}

// --- MatReg ---------------------------------------------------------------------

TEST(MatRegTest, IdenticalMatricesScoreZero) {
  std::mt19937_64 rng(1);
  const Tensor w = RandomTensor({4, 6}, rng);
  EXPECT_NEAR(MatRegLoss(w, w).item(), 0.0, 1e-15);
}

TEST(MatRegTest, NegatedMatricesScoreTwo) {
  std::mt19937_64 rng(2);
  const Tensor w = RandomTensor({4, 6}, rng);
  EXPECT_NEAR(MatRegLoss(w, Scale(w, -1)).item(), 2.0, 1e-15);
}

TEST(MatRegTest, OrthogonalColumnsScoreOne) {
  const Tensor a = Tensor::Constant({2, 2}, {1, 0, 0, 1});
  const Tensor b = Tensor::Constant({2, 2}, {0, 3, -2, 0});
  EXPECT_NEAR(MatRegLoss(a, b).item(), 1.0, 1e-15);
}

TEST(MatRegTest, ScaleInvariant) {
  std::mt19937_64 rng(3);
  const Tensor a = RandomTensor({5, 7}, rng);
  const Tensor b = RandomTensor({5, 7}, rng);
  const double base = MatRegLoss(a, b).item();
  for (double c : {0.25, 2.0, 8.0}) {
    EXPECT_NEAR(MatRegLoss(Scale(a, c), b).item(), base, 1e-14);
    EXPECT_NEAR(MatRegLoss(a, Scale(b, c)).item(), base, 1e-14);
  }
}

TEST(MatRegTest, StaysInRange) {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 200; ++i) {
    const double v = MatRegLoss(RandomTensor({3, 4}, rng),
                                RandomTensor({3, 4}, rng))
                         .item();
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 2.0);
  }
}

TEST(MatRegTest, ZeroColumnCountsAsOrthogonal) {
  const Tensor a = Tensor::Constant({2, 2}, {0, 1, 0, 1});
  const Tensor b = Tensor::Constant({2, 2}, {1, 1, 1, 1});
  // Column 0 of a is zero: 1 - 0; column 1 is parallel: 1 - 1.
  EXPECT_NEAR(MatRegLoss(a, b).item(), 0.5, 1e-15);
}

TEST(MatRegTest, ShapeMismatchThrows) {
  EXPECT_THROW(MatRegLoss(Tensor::Zeros({2, 3}), Tensor::Zeros({3, 2})),
               ShapeError);
}

TEST(MatRegTest, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(5);
  const Tensor b = RandomTensor({4, 5}, rng);
  const double err = GradCheck(
      [&](const Tensor& a) { return MatRegLoss(a, b); },
      RandomTensor({4, 5}, rng), 1e-5);
  EXPECT_LT(err, 1e-6);
}

TEST(MatRegTest, GradientDescentReducesLoss) {
  std::mt19937_64 rng(6);
  Tensor a = Tensor::Parameter({8, 20}, testing::RandomValues(160, rng));
  Tensor b = Tensor::Parameter({8, 20}, testing::RandomValues(160, rng));
  const double start = MatRegLoss(a, b).item();
  for (int step = 0; step < 100; ++step) {
    a.ZeroGrad();
    b.ZeroGrad();
    MatRegLoss(a, b).Backward();
    for (Tensor* t : {&a, &b}) {
      auto v = t->mutable_values();
      const auto g = t->grad();
      for (size_t i = 0; i < v.size(); ++i) v[i] -= 5.0 * g[i];
    }
  }
  const double end = MatRegLoss(a, b).item();
  EXPECT_LE(end, 0.1 * start) << "start " << start << " end " << end;
}

// --- combined ---------------------------------------------------------------------

TEST(CombinedLossTest, Examples) {
  LossConfig cfg;
  EXPECT_NEAR(CombinedLoss(1.0, 2.0, 2.0, 0.0, cfg), 3.1, 1e-12);
  cfg.alpha = 1.0;
  EXPECT_NEAR(CombinedLoss(1.5, 2.0, 2.0, 7.0, cfg), 1.5 + 7e-4, 1e-12);
  cfg.beta = 0;
  EXPECT_DOUBLE_EQ(CombinedLoss(1.5, 2.0, 2.0, 7.0, cfg), 1.5);
}

TEST(CombinedLossTest, TensorFormDropsUndefinedTerms) {
  LossConfig cfg;
  LossTerms terms;
  terms.ctc = Tensor::Scalar(1.0);
  terms.cmlm = Tensor::Scalar(2.0);
  EXPECT_NEAR(CombinedLoss(terms, cfg).item(), 0.3 + 0.7 * 2.0, 1e-12);
  terms.p2m = Tensor::Scalar(2.0);
  terms.matreg = Tensor::Scalar(0.5);
  EXPECT_NEAR(CombinedLoss(terms, cfg).item(),
              CombinedLoss(1.0, 2.0, 2.0, 0.5, cfg), 1e-12);
}

TEST(LossConfigTest, DefaultsAndValidation) {
  LossConfig cfg;
  EXPECT_DOUBLE_EQ(cfg.alpha, 0.3);
  EXPECT_DOUBLE_EQ(cfg.beta, 1e-4);
  EXPECT_DOUBLE_EQ(cfg.epsilon, 0.1);
  cfg.alpha = 1.5;
  EXPECT_THROW(cfg.Validate(), ConfigError);
  cfg = LossConfig();
  cfg.epsilon = 0;
  EXPECT_THROW(cfg.Validate(), ConfigError);
  cfg = LossConfig();
  cfg.smoothing = SmoothingMode::kEmbedding;
  cfg.matreg_pair = MatRegPair::kBoth;
  EXPECT_EQ(ToJson(LossConfigFromJson(ToJson(cfg))), ToJson(cfg));
}

}  // namespace
}  // namespace mcctc
