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

#ifndef MCCTC_TRAINER_H_
#define MCCTC_TRAINER_H_

#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mcctc/config.h"
#include "mcctc/container.h"
#include "mcctc/data.h"
#include "mcctc/decode.h"
#include "mcctc/loss.h"
#include "mcctc/model.h"
#include "mcctc/score.h"
#include "mcctc/vocab.h"

namespace mcctc {

struct TrainExample {
  std::string utt_id;
  Matrix feats;
  std::vector<std::string> tokens;
  std::vector<int> char_ids;
  std::vector<int> pinyin_ids;
};

std::vector<TrainExample> ExamplesFromManifest(const Manifest& manifest,
                                               const VocabPair& vocabs,
                                               const PinyinTable& table);
// Same features as the files WriteCorpus would produce, without the disk.
std::vector<TrainExample> ExamplesFromCorpus(
    const SynthCorpus& corpus, std::span<const SynthUtterance> utterances);

// Inverse-square-root schedule with linear warmup; `step` counts from 1.
double LearningRate(const OptimConfig& cfg, int step);

class AdamOptimizer {
 public:
  AdamOptimizer(std::vector<Tensor> params, const OptimConfig& cfg);
  // Clips the global gradient norm, updates, and zeroes the gradients.
  // Returns the norm before clipping.
  double Step(double lr);
  int steps() const { return steps_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_, v_;
  OptimConfig cfg_;
  int steps_ = 0;
};

// Conventional smoothing, or embedding smoothing over vectors loaded from
// cfg.smoothing.vectors_path or trained with PPMI+SVD on `train_text`.
std::unique_ptr<TargetSmoother> MakeSmoother(
    const RunConfig& cfg, const Vocabulary& char_vocab,
    std::span<const std::string> train_text);

// One utterance's loss terms without the regularizer; models without
// decoders get the CTC term only.
LossTerms UtteranceLoss(const ModelBundle& bundle, const TrainExample& ex,
                        const Matrix& feats, const TargetSmoother& smoother,
                        const ForwardOptions& opts, Rng& mask_rng);

// The regularizer on the configured pair, or an undefined tensor when it does
// not apply (ctc_only, tied weights, beta 0).
Tensor MatRegTerm(const ModelBundle& bundle, const LossConfig& cfg);

struct ValidationMetrics {
  double ter = 0;
  // Masked-token accuracy of the CMLM given the gold observed tokens; 1 - TER
  // for ctc_only models.
  double accuracy = 0;
};

ValidationMetrics RunValidation(const ModelBundle& bundle,
                                std::span<const TrainExample> val,
                                const RunConfig& cfg);

struct EpochStats {
  int epoch = 0;
  int steps = 0;
  double train_loss = 0;
  double ctc = 0;
  double p2m = 0;
  double cmlm = 0;
  double matreg = 0;
  double val_ter = 0;
  double val_accuracy = 0;
  double seconds = 0;
  std::filesystem::path checkpoint;
};

struct TrainResult {
  std::vector<EpochStats> epochs;
};

// Trains in place. With a non-empty out_dir, writes ckpt/epoch_NNN.ckpt and
// a JSON-lines train_log.jsonl there. A non-finite loss throws NumericError
// naming the batch.
TrainResult Train(ModelBundle* bundle, std::span<const TrainExample> train,
                  std::span<const TrainExample> val, const RunConfig& cfg,
                  const TargetSmoother& smoother,
                  const std::filesystem::path& out_dir = {});

struct Evaluation {
  std::vector<Hypothesis> hyps;
  ErrorReport report;
};

// Decodes and scores; PER is filled when `table` is given.
Evaluation Evaluate(const ModelBundle& bundle,
                    std::span<const TrainExample> examples,
                    const DecodeConfig& cfg, const PinyinTable* table);

std::vector<TokenizedUtterance> References(
    std::span<const TrainExample> examples);
std::vector<TokenizedUtterance> HypothesisTokens(
    std::span<const Hypothesis> hyps);

}  // namespace mcctc

#endif  // MCCTC_TRAINER_H_
