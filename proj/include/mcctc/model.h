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

#ifndef MCCTC_MODEL_H_
#define MCCTC_MODEL_H_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "mcctc/container.h"
#include "mcctc/tensor.h"
#include "mcctc/vocab.h"

namespace mcctc {

// ctc_only: encoder + CTC over characters.
// mask_ctc: encoder + CTC over characters + CMLM decoder.
// mask_ctc_p2m: encoder + CTC over Pinyin + P2M decoder + CMLM decoder.
enum class Architecture { kCtcOnly, kMaskCtc, kMaskCtcP2m };

std::string_view ArchitectureName(Architecture arch);
Architecture ParseArchitecture(std::string_view name);

struct EncoderConfig {
  int input_dim = 24;
  int model_dim = 64;
  int num_layers = 2;
  int num_heads = 4;
  int ff_dim = 256;
  int subsample_factor = 4;
  double dropout = 0.1;

  void Validate() const;
};

struct ModelConfig {
  EncoderConfig encoder;
  Architecture architecture = Architecture::kMaskCtcP2m;
  int num_cmlm_layers = 2;
  int num_p2m_layers = 1;
  // Shares the MatReg pair instead of regularizing it: W_CTC (mask_ctc) or
  // the P2M output projection (mask_ctc_p2m) becomes the transposed CMLM
  // input embedding.
  bool tie_weights = false;

  void Validate() const;
};

nlohmann::json ToJson(const EncoderConfig& c);
nlohmann::json ToJson(const ModelConfig& c);
// Strict: unknown keys throw ConfigError.
EncoderConfig EncoderConfigFromJson(const nlohmann::json& j);
ModelConfig ModelConfigFromJson(const nlohmann::json& j);

struct ForwardOptions {
  bool train = false;
  Rng* rng = nullptr;  // required when train is set and dropout > 0
};

struct LinearParams {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out]
};
struct NormParams {
  Tensor gain;
  Tensor bias;
};
struct AttentionParams {
  LinearParams query, key, value, output;
};
struct FeedForwardParams {
  LinearParams in, out;
};
struct EncoderLayerParams {
  NormParams norm1, norm2;
  AttentionParams self_attn;
  FeedForwardParams ff;
};
struct DecoderLayerParams {
  NormParams norm1, norm2, norm3;
  AttentionParams self_attn, cross_attn;
  FeedForwardParams ff;
};
struct DecoderParams {
  Tensor embed;  // [|V_in|, d]
  std::vector<DecoderLayerParams> layers;
  NormParams final_norm;
  LinearParams output;  // [d, |V_char|]
};

struct NamedParameter {
  std::string name;
  Tensor tensor;
};

struct EncoderOutput {
  Tensor hidden;         // [T', d]
  Tensor ctc_log_probs;  // [T', |V_ctc|]
};

// Encoder, CTC projection and (depending on the architecture) the P2M and
// CMLM decoders, together with both vocabularies. Mutable only while
// training; concurrent forward passes on a const bundle are safe as long as
// each thread builds its own graph.
class ModelBundle {
 public:
  ModelBundle(ModelConfig config, Vocabulary char_vocab,
              Vocabulary pinyin_vocab, uint64_t seed);

  const ModelConfig& config() const { return config_; }
  Architecture architecture() const { return config_.architecture; }
  const Vocabulary& char_vocab() const { return char_vocab_; }
  const Vocabulary& pinyin_vocab() const { return pinyin_vocab_; }
  // Vocabulary the CTC head predicts over.
  const Vocabulary& ctc_vocab() const;
  bool has_p2m() const { return architecture() == Architecture::kMaskCtcP2m; }
  bool has_cmlm() const { return architecture() != Architecture::kCtcOnly; }

  // T' = ceil(T / subsample_factor).
  EncoderOutput EncoderForward(const Matrix& features,
                               const ForwardOptions& opts = {}) const;
  // ids over V_pinyin (mask id at masked positions) -> [L, |V_char|] logits.
  Tensor P2mForward(std::span<const int> pinyin_ids, const Tensor& hidden,
                    const ForwardOptions& opts = {}) const;
  // ids over V_char (mask id at masked positions) -> [L, |V_char|] logits.
  Tensor CmlmForward(std::span<const int> char_ids, const Tensor& hidden,
                     const ForwardOptions& opts = {}) const;

  // d x |V_ctc|.
  Tensor CtcWeight() const;
  // d x |V_char|.
  Tensor P2mOutputWeight() const;
  // |V_char| x d.
  const Tensor& CmlmEmbedding() const { return cmlm_.embed; }

  std::vector<NamedParameter>& parameters() { return params_; }
  const std::vector<NamedParameter>& parameters() const { return params_; }
  size_t NumParameterValues() const;

 private:
  Tensor Register(std::string name, Shape shape, std::vector<double> values);
  LinearParams MakeLinear(const std::string& name, int in, int out, Rng& rng);
  NormParams MakeNorm(const std::string& name, int dim);
  AttentionParams MakeAttention(const std::string& name, int d, Rng& rng);
  FeedForwardParams MakeFeedForward(const std::string& name, int d, int ff,
                                    Rng& rng);
  DecoderParams MakeDecoder(const std::string& name, int in_vocab,
                            int out_vocab, int layers, bool tie_output,
                            Rng& rng);
  Tensor DecoderForward(const DecoderParams& dec, std::span<const int> ids,
                        int in_vocab, const Tensor& hidden,
                        const ForwardOptions& opts) const;

  ModelConfig config_;
  Vocabulary char_vocab_;
  Vocabulary pinyin_vocab_;
  std::vector<NamedParameter> params_;

  LinearParams frontend_;
  std::vector<EncoderLayerParams> encoder_layers_;
  NormParams encoder_norm_;
  LinearParams ctc_;  // weight undefined when tied
  DecoderParams p2m_;
  DecoderParams cmlm_;
};

// Sinusoidal position table, [length, d]. Row i encodes position
// (i + 0.5) * stride - 0.5, so stride 1 gives the integer positions and a
// stride of T'/L places L decoder tokens at the centres of their expected
// spans on a T'-step encoder time axis.
Tensor PositionalEncoding(int length, int d, double stride = 1.0);

void SaveCheckpoint(const ModelBundle& bundle,
                    const std::filesystem::path& path,
                    const nlohmann::json& extra_meta = nlohmann::json::object());
ModelBundle LoadCheckpoint(const std::filesystem::path& path);
// Overwrites the parameters of `bundle`; every array must be present with the
// exact expected shape, else ConfigError naming the offending array.
void LoadParameters(const std::filesystem::path& path, ModelBundle* bundle);
nlohmann::json ReadCheckpointMeta(const std::filesystem::path& path);

// Parameter-wise mean over the k checkpoints with the highest recorded
// "val_accuracy" (all of them if k >= paths.size()).
ModelBundle AverageCheckpoints(std::span<const std::filesystem::path> paths,
                               int k);

}  // namespace mcctc

#endif  // MCCTC_MODEL_H_
