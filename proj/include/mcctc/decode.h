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

#ifndef MCCTC_DECODE_H_
#define MCCTC_DECODE_H_

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "mcctc/container.h"
#include "mcctc/loss.h"
#include "mcctc/model.h"

namespace mcctc {

// Where the confidence used for thresholding comes from in the P2M
// architecture: the CTC (Pinyin) posteriors, or the P2M character posteriors.
enum class MaskSource { kCtc, kP2m };

std::string_view MaskSourceName(MaskSource s);
MaskSource ParseMaskSource(std::string_view name);

struct DecodeConfig {
  double p_thres = 0.99;
  int iterations = 1;  // K
  Architecture architecture = Architecture::kMaskCtcP2m;
  MaskSource mask_source = MaskSource::kCtc;
  int num_workers = 1;

  void Validate() const;
};

nlohmann::json ToJson(const DecodeConfig& c);
DecodeConfig DecodeConfigFromJson(const nlohmann::json& j);

struct Hypothesis {
  std::string utt_id;
  std::vector<int> ids;  // over the character vocabulary
  std::vector<std::string> tokens;
  std::vector<double> confidences;
  std::vector<int> masked_positions;
  // Masked set before each CMLM pass (first entry = masked_positions).
  std::vector<std::vector<int>> mask_history;
  double decode_ms = 0;
  double audio_ms = 0;

  std::string text() const;
};

struct GreedyResult {
  std::vector<int> ids;
  std::vector<double> confidences;
};

// Per-frame argmax, repeats collapsed, blanks dropped. A token's confidence
// is the largest posterior among the frames merged into it. The `exclude`
// label (the mask token, which the CTC head never sees as a target) is never
// chosen.
GreedyResult CtcGreedy(std::span<const double> log_probs, int frames,
                       int vocab, int blank, int exclude = -1);
GreedyResult CtcGreedy(const Tensor& log_probs, int blank, int exclude = -1);

// Positions whose confidence is below p_thres become mask_id.
MaskedSequence MaskByThreshold(std::span<const int> ids,
                               std::span<const double> confidences,
                               double p_thres, int mask_id);

// K entries when n > 0: floor(n/K) for the first K-1, the remainder last.
std::vector<int> IterationSchedule(int num_masked, int k);

struct RefineResult {
  std::vector<int> ids;
  std::vector<double> confidences;  // posterior of each committed fill
  std::vector<std::vector<int>> mask_history;
};

// Fills the masks of `masked` over K iterations. Each pass commits the
// scheduled number of masked positions with the highest posterior; ties go to
// the earlier position. Mask and blank are never predicted.
RefineResult CmlmRefine(const ModelBundle& bundle, const MaskedSequence& masked,
                        const Tensor& hidden, int k);

// Everything after the encoder; `enc` may come from any source with the right
// shapes (used by the contract tests with random posteriors).
Hypothesis DecodeFromEncoder(const ModelBundle& bundle, const EncoderOutput& enc,
                             const DecodeConfig& cfg);

// Full pipeline with timing. audio_ms = frames * 10.
Hypothesis DecodeUtterance(const ModelBundle& bundle, const Matrix& features,
                           const DecodeConfig& cfg);

struct DecodeInput {
  std::string utt_id;
  Matrix features;
};

// Fans utterances out over cfg.num_workers threads; output order = input.
std::vector<Hypothesis> DecodeCorpus(const ModelBundle& bundle,
                                     std::span<const DecodeInput> inputs,
                                     const DecodeConfig& cfg);

// Sum of decode time over sum of audio time.
double MeasureRtf(std::span<const Hypothesis> hyps);

// Throws ConfigError unless `cfg.architecture` can run on the bundle.
void CheckCompatible(const ModelBundle& bundle, const DecodeConfig& cfg);

nlohmann::json HypothesisToJson(const Hypothesis& h);
Hypothesis HypothesisFromJson(const nlohmann::json& j);
void WriteHypotheses(std::span<const Hypothesis> hyps,
                     const std::filesystem::path& path);
std::vector<Hypothesis> ReadHypotheses(const std::filesystem::path& path);

}  // namespace mcctc

#endif  // MCCTC_DECODE_H_
