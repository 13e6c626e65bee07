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

#include "mcctc/config.h"

#include <fstream>
#include <sstream>

#include "mcctc/error.h"
#include "mcctc/json_util.h"

namespace mcctc {

void OptimConfig::Validate() const {
  if (!(learning_rate > 0)) throw ConfigError("optim.learning_rate must be > 0");
  if (warmup_steps < 0) throw ConfigError("optim.warmup_steps must be >= 0");
  if (batch_size < 1) throw ConfigError("optim.batch_size must be >= 1");
  if (epochs < 1) throw ConfigError("optim.epochs must be >= 1");
  if (!(grad_clip > 0)) throw ConfigError("optim.grad_clip must be > 0");
  if (!(adam_beta1 >= 0 && adam_beta1 < 1) ||
      !(adam_beta2 >= 0 && adam_beta2 < 1)) {
    throw ConfigError("optim.adam_beta1/adam_beta2 must be in [0,1)");
  }
  if (!(adam_eps > 0)) throw ConfigError("optim.adam_eps must be > 0");
}

void AugmentConfig::Validate() const {
  if (time_masks < 0 || time_width < 0 || freq_masks < 0 || freq_width < 0) {
    throw ConfigError("augment: counts and widths must be >= 0");
  }
}

void RunConfig::Validate() const {
  synth.Validate();
  model.Validate();
  loss.Validate();
  smoothing.Validate();
  decode.Validate();
  optim.Validate();
  augment.Validate();
  if (model.encoder.input_dim != synth.feat_dim) {
    throw ConfigError("model.encoder.input_dim (" +
                      std::to_string(model.encoder.input_dim) +
                      ") must equal synth.feat_dim (" +
                      std::to_string(synth.feat_dim) + ")");
  }
  if (decode.architecture != Architecture::kCtcOnly &&
      decode.architecture != model.architecture) {
    throw ConfigError("decode.architecture '" +
                      std::string(ArchitectureName(decode.architecture)) +
                      "' cannot run on model.architecture '" +
                      std::string(ArchitectureName(model.architecture)) + "'");
  }
  if (augment.enabled && augment.freq_width > synth.feat_dim) {
    throw ConfigError("augment.freq_width exceeds synth.feat_dim");
  }
  if (loss.epsilon != smoothing.epsilon) {
    throw ConfigError("loss.epsilon and smoothing.epsilon disagree");
  }
  if (average_top_k < 1) throw ConfigError("average_top_k must be >= 1");
}

nlohmann::json ToJson(const OptimConfig& c) {
  return {{"learning_rate", c.learning_rate}, {"warmup_steps", c.warmup_steps},
          {"batch_size", c.batch_size},       {"epochs", c.epochs},
          {"grad_clip", c.grad_clip},         {"adam_beta1", c.adam_beta1},
          {"adam_beta2", c.adam_beta2},       {"adam_eps", c.adam_eps}};
}

nlohmann::json ToJson(const AugmentConfig& c) {
  return {{"enabled", c.enabled},       {"time_masks", c.time_masks},
          {"time_width", c.time_width}, {"freq_masks", c.freq_masks},
          {"freq_width", c.freq_width}};
}

nlohmann::json ToJson(const RunConfig& c) {
  return {{"synth", ToJson(c.synth)},         {"model", ToJson(c.model)},
          {"loss", ToJson(c.loss)},           {"smoothing", ToJson(c.smoothing)},
          {"decode", ToJson(c.decode)},       {"optim", ToJson(c.optim)},
          {"augment", ToJson(c.augment)},     {"data_dir", c.data_dir},
          {"out_dir", c.out_dir},             {"average_top_k", c.average_top_k},
          {"seed", c.seed}};
}

namespace {

OptimConfig OptimConfigFromJson(const nlohmann::json& j) {
  constexpr std::string_view kWhere = "optim";
  RejectUnknownKeys(j, {"learning_rate", "warmup_steps", "batch_size", "epochs",
                        "grad_clip", "adam_beta1", "adam_beta2", "adam_eps"},
                    kWhere);
  OptimConfig c;
  ReadOptional(j, "learning_rate", &c.learning_rate, kWhere);
  ReadOptional(j, "warmup_steps", &c.warmup_steps, kWhere);
  ReadOptional(j, "batch_size", &c.batch_size, kWhere);
  ReadOptional(j, "epochs", &c.epochs, kWhere);
  ReadOptional(j, "grad_clip", &c.grad_clip, kWhere);
  ReadOptional(j, "adam_beta1", &c.adam_beta1, kWhere);
  ReadOptional(j, "adam_beta2", &c.adam_beta2, kWhere);
  ReadOptional(j, "adam_eps", &c.adam_eps, kWhere);
  return c;
}

AugmentConfig AugmentConfigFromJson(const nlohmann::json& j) {
  constexpr std::string_view kWhere = "augment";
  RejectUnknownKeys(j, {"enabled", "time_masks", "time_width", "freq_masks",
                        "freq_width"},
                    kWhere);
  AugmentConfig c;
  ReadOptional(j, "enabled", &c.enabled, kWhere);
  ReadOptional(j, "time_masks", &c.time_masks, kWhere);
  ReadOptional(j, "time_width", &c.time_width, kWhere);
  ReadOptional(j, "freq_masks", &c.freq_masks, kWhere);
  ReadOptional(j, "freq_width", &c.freq_width, kWhere);
  return c;
}

}  // namespace

RunConfig RunConfigFromJson(const nlohmann::json& j) {
  constexpr std::string_view kWhere = "config";
  RejectUnknownKeys(j, {"synth", "model", "loss", "smoothing", "decode", "optim",
                        "augment", "data_dir", "out_dir", "average_top_k",
                        "seed"},
                    kWhere);
  RunConfig c;
  if (j.contains("synth")) c.synth = SynthConfigFromJson(j["synth"]);
  if (j.contains("model")) c.model = ModelConfigFromJson(j["model"]);
  if (j.contains("loss")) c.loss = LossConfigFromJson(j["loss"]);
  if (j.contains("smoothing")) {
    c.smoothing = SmoothingConfigFromJson(j["smoothing"]);
  }
  // One epsilon may be given for both.
  const bool loss_eps = j.contains("loss") && j["loss"].contains("epsilon");
  const bool smooth_eps =
      j.contains("smoothing") && j["smoothing"].contains("epsilon");
  if (loss_eps && !smooth_eps) c.smoothing.epsilon = c.loss.epsilon;
  if (smooth_eps && !loss_eps) c.loss.epsilon = c.smoothing.epsilon;
  if (j.contains("decode")) c.decode = DecodeConfigFromJson(j["decode"]);
  if (j.contains("optim")) c.optim = OptimConfigFromJson(j["optim"]);
  if (j.contains("augment")) c.augment = AugmentConfigFromJson(j["augment"]);
  ReadOptional(j, "data_dir", &c.data_dir, kWhere);
  ReadOptional(j, "out_dir", &c.out_dir, kWhere);
  ReadOptional(j, "average_top_k", &c.average_top_k, kWhere);
  ReadOptional(j, "seed", &c.seed, kWhere);
  // The decoder follows the model unless told otherwise.
  if (!j.contains("decode") || !j["decode"].contains("architecture")) {
    c.decode.architecture = c.model.architecture;
  }
  if (!j.contains("model") || !j["model"].contains("encoder") ||
      !j["model"]["encoder"].contains("input_dim")) {
    c.model.encoder.input_dim = c.synth.feat_dim;
  }
  return c;
}

RunConfig LoadRunConfig(const std::filesystem::path& path,
                        std::optional<uint64_t> seed) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  RunConfig c = RunConfigFromJson(j);
  if (seed) {
    c.seed = *seed;
    c.synth.seed = *seed;
  }
  c.Validate();
  return c;
}

}  // namespace mcctc
