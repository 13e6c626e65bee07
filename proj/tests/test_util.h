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

#ifndef MCCTC_TESTS_TEST_UTIL_H_
#define MCCTC_TESTS_TEST_UTIL_H_

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "mcctc/container.h"
#include "mcctc/model.h"
#include "mcctc/tensor.h"
#include "mcctc/vocab.h"

namespace mcctc::testing {

inline std::vector<double> RandomValues(size_t n, std::mt19937_64& rng,
                                        double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  std::vector<double> v(n);
  for (auto& x : v) x = normal(rng);
  return v;
}

inline Tensor RandomTensor(Shape shape, std::mt19937_64& rng,
                           double scale = 1.0) {
  const size_t n = NumElements(shape);
  return Tensor::Constant(std::move(shape), RandomValues(n, rng, scale));
}

// sum(w * y) with fixed random w, so no coordinate of the gradient is
// structurally zero.
inline Tensor WeightedSum(const Tensor& y, uint64_t seed = 99) {
  std::mt19937_64 rng(seed);
  return Sum(Mul(y, RandomTensor(y.shape(), rng)));
}

// Central-difference check over every parameter value of `bundle` with the
// same relative error as GradCheck. Coordinates whose analytic and numeric
// gradients are both below `floor` (e.g. attention key biases, whose exact
// gradient is zero) are compared by absolute difference instead.
inline double ParameterGradCheck(ModelBundle* bundle,
                                 const std::function<Tensor()>& loss_fn,
                                 double h = 1e-5, double floor = 1e-7) {
  for (auto& p : bundle->parameters()) p.tensor.ZeroGrad();
  loss_fn().Backward();
  double worst = 0;
  for (auto& p : bundle->parameters()) {
    const std::vector<double> analytic(p.tensor.grad().begin(),
                                       p.tensor.grad().end());
    auto values = p.tensor.mutable_values();
    for (size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      double plus;
      double minus;
      {
        NoGradGuard no_grad;
        values[i] = saved + h;
        plus = loss_fn().item();
        values[i] = saved - h;
        minus = loss_fn().item();
      }
      values[i] = saved;
      const double numeric = (plus - minus) / (2 * h);
      const double a = analytic[i];
      double err;
      if (std::abs(a) < floor && std::abs(numeric) < floor) {
        err = std::abs(a - numeric) / floor * 1e-6;
      } else {
        err = std::abs(a - numeric) / (std::abs(a) + std::abs(numeric) + 1e-12);
      }
      worst = std::max(worst, err);
    }
    p.tensor.ZeroGrad();
  }
  return worst;
}

// Four characters over two readings plus three English words.
inline PinyinTable TinyTable() {
  PinyinTable t;
  t.Add("我", "wo");
  t.Add("窝", "wo");
  t.Add("很", "hen");
  t.Add("狠", "hen");
  return t;
}

inline VocabPair TinyVocabs() {
  const std::vector<std::string> corpus = {"我 窝 很 狠 happy day one"};
  return BuildVocab(corpus, TinyTable());
}

inline ModelConfig TinyModelConfig(Architecture arch, int input_dim = 3) {
  ModelConfig c;
  c.architecture = arch;
  c.encoder.input_dim = input_dim;
  c.encoder.model_dim = 8;
  c.encoder.num_layers = 1;
  c.encoder.num_heads = 2;
  c.encoder.ff_dim = 12;
  c.encoder.subsample_factor = 2;
  c.encoder.dropout = 0.0;
  c.num_cmlm_layers = 1;
  c.num_p2m_layers = 1;
  return c;
}

inline ModelBundle TinyBundle(Architecture arch, uint64_t seed = 7,
                              int input_dim = 3) {
  const VocabPair v = TinyVocabs();
  return ModelBundle(TinyModelConfig(arch, input_dim), v.char_vocab,
                     v.pinyin_vocab, seed);
}

inline Matrix RandomFeatures(int frames, int dim, std::mt19937_64& rng) {
  Matrix m(frames, dim);
  m.data = RandomValues(m.data.size(), rng);
  return m;
}

}  // namespace mcctc::testing

#endif  // MCCTC_TESTS_TEST_UTIL_H_
