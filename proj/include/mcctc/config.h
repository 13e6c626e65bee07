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

#ifndef MCCTC_CONFIG_H_
#define MCCTC_CONFIG_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "json.hpp"
#include "mcctc/data.h"
#include "mcctc/decode.h"
#include "mcctc/embed.h"
#include "mcctc/loss.h"
#include "mcctc/model.h"

namespace mcctc {

struct OptimConfig {
  double learning_rate = 2e-3;  // peak, reached at the end of warmup
  int warmup_steps = 300;
  int batch_size = 16;
  int epochs = 30;
  double grad_clip = 5.0;  // global L2 norm
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.98;
  double adam_eps = 1e-9;

  void Validate() const;
};

struct AugmentConfig {
  bool enabled = true;
  int time_masks = 1;
  int time_width = 4;
  int freq_masks = 1;
  int freq_width = 3;

  void Validate() const;
};

struct RunConfig {
  SynthConfig synth;
  ModelConfig model;
  LossConfig loss;
  SmoothingConfig smoothing;
  DecodeConfig decode;
  OptimConfig optim;
  AugmentConfig augment;
  std::string data_dir = "data";
  std::string out_dir = "exp";
  int average_top_k = 5;
  uint64_t seed = 1;

  // Field checks plus cross-field consistency (feature size, architectures).
  void Validate() const;
};

nlohmann::json ToJson(const OptimConfig& c);
nlohmann::json ToJson(const AugmentConfig& c);
nlohmann::json ToJson(const RunConfig& c);
RunConfig RunConfigFromJson(const nlohmann::json& j);
// Parses and validates; `seed` replaces both the run and the corpus seed.
RunConfig LoadRunConfig(const std::filesystem::path& path,
                        std::optional<uint64_t> seed = std::nullopt);

}  // namespace mcctc

#endif  // MCCTC_CONFIG_H_
