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

#include "mcctc/model.h"

#include <algorithm>
#include <cmath>
#include <map>

#include "mcctc/error.h"
#include "mcctc/json_util.h"

namespace mcctc {
namespace {

Tensor Linear(const LinearParams& p, const Tensor& x) {
  return Add(MatMul(x, p.weight), p.bias);
}

Tensor Norm(const NormParams& p, const Tensor& x) {
  return Add(Mul(LayerNormLastDim(x), p.gain), p.bias);
}

Tensor Attention(const AttentionParams& p, const Tensor& query,
                 const Tensor& memory, int num_heads, double dropout,
                 const ForwardOptions& opts) {
  const Tensor q = Linear(p.query, query);
  const Tensor k = Linear(p.key, memory);
  const Tensor v = Linear(p.value, memory);
  const int d = q.dim(1);
  const int head_dim = d / num_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
  std::vector<Tensor> heads;
  heads.reserve(num_heads);
  for (int h = 0; h < num_heads; ++h) {
    const int lo = h * head_dim;
    const int hi = lo + head_dim;
    Tensor scores = Scale(
        MatMul(Slice(q, 1, lo, hi), Transpose(Slice(k, 1, lo, hi))), scale);
    Tensor weights =
        Dropout(SoftmaxLastDim(scores), dropout, opts.train, opts.rng);
    heads.push_back(MatMul(weights, Slice(v, 1, lo, hi)));
  }
  return Linear(p.output, Concat(heads, 1));
}

Tensor FeedForward(const FeedForwardParams& p, const Tensor& x, double dropout,
                   const ForwardOptions& opts) {
  return Linear(p.out, Dropout(Gelu(Linear(p.in, x)), dropout, opts.train,
                               opts.rng));
}

}  // namespace

std::string_view ArchitectureName(Architecture arch) {
  switch (arch) {
    case Architecture::kCtcOnly:
      return "ctc_only";
    case Architecture::kMaskCtc:
      return "mask_ctc";
    case Architecture::kMaskCtcP2m:
      return "mask_ctc_p2m";
  }
  return "mask_ctc_p2m";
}

Architecture ParseArchitecture(std::string_view name) {
  if (name == "ctc_only") return Architecture::kCtcOnly;
  if (name == "mask_ctc") return Architecture::kMaskCtc;
  if (name == "mask_ctc_p2m") return Architecture::kMaskCtcP2m;
  throw ConfigError("unknown architecture '" + std::string(name) + "'");
}

void EncoderConfig::Validate() const {
  if (input_dim <= 0) throw ConfigError("encoder.input_dim must be > 0");
  if (model_dim <= 0 || num_heads <= 0 || model_dim % num_heads != 0) {
    throw ConfigError("encoder.model_dim must be a positive multiple of num_heads");
  }
  if (num_layers < 0) throw ConfigError("encoder.num_layers must be >= 0");
  if (ff_dim <= 0) throw ConfigError("encoder.ff_dim must be > 0");
  if (subsample_factor < 1) {
    throw ConfigError("encoder.subsample_factor must be >= 1");
  }
  if (dropout < 0 || dropout >= 1) {
    throw ConfigError("encoder.dropout must be in [0, 1)");
  }
}

void ModelConfig::Validate() const {
  encoder.Validate();
  if (num_cmlm_layers < 1) throw ConfigError("num_cmlm_layers must be >= 1");
  if (num_p2m_layers < 1) throw ConfigError("num_p2m_layers must be >= 1");
  if (tie_weights && architecture == Architecture::kCtcOnly) {
    throw ConfigError("tie_weights needs a CMLM decoder");
  }
}

nlohmann::json ToJson(const EncoderConfig& c) {
  return {{"input_dim", c.input_dim},   {"model_dim", c.model_dim},
          {"num_layers", c.num_layers}, {"num_heads", c.num_heads},
          {"ff_dim", c.ff_dim},         {"subsample_factor", c.subsample_factor},
          {"dropout", c.dropout}};
}

nlohmann::json ToJson(const ModelConfig& c) {
  return {{"encoder", ToJson(c.encoder)},
          {"architecture", ArchitectureName(c.architecture)},
          {"num_cmlm_layers", c.num_cmlm_layers},
          {"num_p2m_layers", c.num_p2m_layers},
          {"tie_weights", c.tie_weights}};
}

EncoderConfig EncoderConfigFromJson(const nlohmann::json& j) {
  constexpr std::string_view kWhere = "model.encoder";
  RejectUnknownKeys(j, {"input_dim", "model_dim", "num_layers", "num_heads",
                        "ff_dim", "subsample_factor", "dropout"},
                    kWhere);
  EncoderConfig c;
  ReadOptional(j, "input_dim", &c.input_dim, kWhere);
  ReadOptional(j, "model_dim", &c.model_dim, kWhere);
  ReadOptional(j, "num_layers", &c.num_layers, kWhere);
  ReadOptional(j, "num_heads", &c.num_heads, kWhere);
  ReadOptional(j, "ff_dim", &c.ff_dim, kWhere);
  ReadOptional(j, "subsample_factor", &c.subsample_factor, kWhere);
  ReadOptional(j, "dropout", &c.dropout, kWhere);
  return c;
}

ModelConfig ModelConfigFromJson(const nlohmann::json& j) {
  constexpr std::string_view kWhere = "model";
  RejectUnknownKeys(j, {"encoder", "architecture", "num_cmlm_layers",
                        "num_p2m_layers", "tie_weights"},
                    kWhere);
  ModelConfig c;
  if (j.contains("encoder")) c.encoder = EncoderConfigFromJson(j["encoder"]);
  std::string arch(ArchitectureName(c.architecture));
  ReadOptional(j, "architecture", &arch, kWhere);
  c.architecture = ParseArchitecture(arch);
  ReadOptional(j, "num_cmlm_layers", &c.num_cmlm_layers, kWhere);
  ReadOptional(j, "num_p2m_layers", &c.num_p2m_layers, kWhere);
  ReadOptional(j, "tie_weights", &c.tie_weights, kWhere);
  return c;
}

Tensor PositionalEncoding(int length, int d, double stride) {
  std::vector<double> table(static_cast<size_t>(length) * d);
  for (int row = 0; row < length; ++row) {
    const double pos = (row + 0.5) * stride - 0.5;
    for (int i = 0; i < d; i += 2) {
      const double freq = std::pow(10000.0, -static_cast<double>(i) / d);
      table[static_cast<size_t>(row) * d + i] = std::sin(pos * freq);
      if (i + 1 < d) {
        table[static_cast<size_t>(row) * d + i + 1] = std::cos(pos * freq);
      }
    }
  }
  return Tensor::Constant({length, d}, std::move(table));
}

// --- construction -----------------------------------------------------------

ModelBundle::ModelBundle(ModelConfig config, Vocabulary char_vocab,
                         Vocabulary pinyin_vocab, uint64_t seed)
    : config_(std::move(config)),
      char_vocab_(std::move(char_vocab)),
      pinyin_vocab_(std::move(pinyin_vocab)) {
  config_.Validate();
  Rng rng(seed);
  const auto& enc = config_.encoder;
  const int d = enc.model_dim;
  const int v_char = char_vocab_.size();

  frontend_ = MakeLinear("encoder.frontend",
                         enc.input_dim * enc.subsample_factor, d, rng);
  for (int l = 0; l < enc.num_layers; ++l) {
    const std::string prefix = "encoder.layers." + std::to_string(l);
    EncoderLayerParams layer;
    layer.norm1 = MakeNorm(prefix + ".norm1", d);
    layer.self_attn = MakeAttention(prefix + ".self_attn", d, rng);
    layer.norm2 = MakeNorm(prefix + ".norm2", d);
    layer.ff = MakeFeedForward(prefix + ".ff", d, enc.ff_dim, rng);
    encoder_layers_.push_back(std::move(layer));
  }
  encoder_norm_ = MakeNorm("encoder.final_norm", d);

  const bool tie_ctc =
      config_.tie_weights && config_.architecture == Architecture::kMaskCtc;
  const bool tie_p2m =
      config_.tie_weights && config_.architecture == Architecture::kMaskCtcP2m;
  const int v_ctc = ctc_vocab().size();
  if (tie_ctc) {
    ctc_.bias = Register("ctc.bias", {v_ctc}, std::vector<double>(v_ctc, 0.0));
  } else {
    ctc_ = MakeLinear("ctc", d, v_ctc, rng);
  }
  if (has_p2m()) {
    p2m_ = MakeDecoder("p2m", pinyin_vocab_.size(), v_char,
                       config_.num_p2m_layers, tie_p2m, rng);
  }
  if (has_cmlm()) {
    cmlm_ = MakeDecoder("cmlm", v_char, v_char, config_.num_cmlm_layers,
                        false, rng);
  }
}

const Vocabulary& ModelBundle::ctc_vocab() const {
  return has_p2m() ? pinyin_vocab_ : char_vocab_;
}

Tensor ModelBundle::Register(std::string name, Shape shape,
                             std::vector<double> values) {
  Tensor t = Tensor::Parameter(std::move(shape), std::move(values));
  params_.push_back({std::move(name), t});
  return t;
}

LinearParams ModelBundle::MakeLinear(const std::string& name, int in, int out,
                                     Rng& rng) {
  const double limit = std::sqrt(6.0 / (in + out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  std::vector<double> w(static_cast<size_t>(in) * out);
  for (auto& x : w) x = dist(rng);
  LinearParams p;
  p.weight = Register(name + ".weight", {in, out}, std::move(w));
  p.bias = Register(name + ".bias", {out}, std::vector<double>(out, 0.0));
  return p;
}

NormParams ModelBundle::MakeNorm(const std::string& name, int dim) {
  NormParams p;
  p.gain = Register(name + ".gain", {dim}, std::vector<double>(dim, 1.0));
  p.bias = Register(name + ".bias", {dim}, std::vector<double>(dim, 0.0));
  return p;
}

AttentionParams ModelBundle::MakeAttention(const std::string& name, int d,
                                           Rng& rng) {
  AttentionParams p;
  p.query = MakeLinear(name + ".query", d, d, rng);
  p.key = MakeLinear(name + ".key", d, d, rng);
  p.value = MakeLinear(name + ".value", d, d, rng);
  p.output = MakeLinear(name + ".output", d, d, rng);
  return p;
}

FeedForwardParams ModelBundle::MakeFeedForward(const std::string& name, int d,
                                               int ff, Rng& rng) {
  FeedForwardParams p;
  p.in = MakeLinear(name + ".in", d, ff, rng);
  p.out = MakeLinear(name + ".out", ff, d, rng);
  return p;
}

DecoderParams ModelBundle::MakeDecoder(const std::string& name, int in_vocab,
                                       int out_vocab, int layers,
                                       bool tie_output, Rng& rng) {
  const int d = config_.encoder.model_dim;
  DecoderParams dec;
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> embed(static_cast<size_t>(in_vocab) * d);
  for (auto& x : embed) x = normal(rng);
  dec.embed = Register(name + ".embed", {in_vocab, d}, std::move(embed));
  for (int l = 0; l < layers; ++l) {
    const std::string prefix = name + ".layers." + std::to_string(l);
    DecoderLayerParams layer;
    layer.norm1 = MakeNorm(prefix + ".norm1", d);
    layer.self_attn = MakeAttention(prefix + ".self_attn", d, rng);
    layer.norm2 = MakeNorm(prefix + ".norm2", d);
    layer.cross_attn = MakeAttention(prefix + ".cross_attn", d, rng);
    layer.norm3 = MakeNorm(prefix + ".norm3", d);
    layer.ff = MakeFeedForward(prefix + ".ff", d, config_.encoder.ff_dim, rng);
    dec.layers.push_back(std::move(layer));
  }
  dec.final_norm = MakeNorm(name + ".final_norm", d);
  if (tie_output) {
    dec.output.bias = Register(name + ".output.bias", {out_vocab},
                               std::vector<double>(out_vocab, 0.0));
  } else {
    dec.output = MakeLinear(name + ".output", d, out_vocab, rng);
  }
  return dec;
}

size_t ModelBundle::NumParameterValues() const {
  size_t n = 0;
  for (const auto& p : params_) n += p.tensor.size();
  return n;
}

// --- forward ----------------------------------------------------------------

EncoderOutput ModelBundle::EncoderForward(const Matrix& features,
                                          const ForwardOptions& opts) const {
  const auto& enc = config_.encoder;
  if (features.cols != enc.input_dim) {
    throw ShapeError("encoder: feature dim mismatch, got " +
                     std::to_string(features.cols) + ", model expects " +
                     std::to_string(enc.input_dim));
  }
  if (features.rows <= 0) throw ShapeError("encoder: empty feature matrix");
  const int s = enc.subsample_factor;
  const int steps = (features.rows + s - 1) / s;
  const int width = s * enc.input_dim;
  // Stack s consecutive frames per output step, zero-padding the tail.
  std::vector<double> stacked(static_cast<size_t>(steps) * width, 0.0);
  std::copy(features.data.begin(), features.data.end(), stacked.begin());
  Tensor x = Tensor::Constant({steps, width}, std::move(stacked));

  const double p = enc.dropout;
  Tensor h = Relu(Linear(frontend_, x));
  h = Dropout(Add(h, PositionalEncoding(steps, enc.model_dim)), p, opts.train,
              opts.rng);
  for (const auto& layer : encoder_layers_) {
    const Tensor n1 = Norm(layer.norm1, h);
    h = Add(h, Dropout(Attention(layer.self_attn, n1, n1, enc.num_heads, p, opts),
                       p, opts.train, opts.rng));
    h = Add(h, Dropout(FeedForward(layer.ff, Norm(layer.norm2, h), p, opts), p,
                       opts.train, opts.rng));
  }
  EncoderOutput out;
  out.hidden = Norm(encoder_norm_, h);
  out.ctc_log_probs =
      LogSoftmaxLastDim(Add(MatMul(out.hidden, CtcWeight()), ctc_.bias));
  return out;
}

Tensor ModelBundle::DecoderForward(const DecoderParams& dec,
                                   std::span<const int> ids, int in_vocab,
                                   const Tensor& hidden,
                                   const ForwardOptions& opts) const {
  const int out_vocab = char_vocab_.size();
  for (int id : ids) {
    if (id < 0 || id >= in_vocab) {
      throw std::out_of_range("decoder input id " + std::to_string(id) +
                              " out of range [0," + std::to_string(in_vocab) +
                              ")");
    }
  }
  if (ids.empty()) return Tensor::Zeros({0, out_vocab});
  const auto& enc = config_.encoder;
  const double p = enc.dropout;
  const int length = static_cast<int>(ids.size());
  // Token positions live on the encoder's time axis, which gives cross
  // attention a location prior for each token.
  const double stride = static_cast<double>(hidden.dim(0)) / length;
  Tensor h = Add(EmbedLookup(dec.embed, ids),
                 PositionalEncoding(length, enc.model_dim, stride));
  h = Dropout(h, p, opts.train, opts.rng);
  for (const auto& layer : dec.layers) {
    const Tensor n1 = Norm(layer.norm1, h);
    h = Add(h, Dropout(Attention(layer.self_attn, n1, n1, enc.num_heads, p, opts),
                       p, opts.train, opts.rng));
    h = Add(h, Dropout(Attention(layer.cross_attn, Norm(layer.norm2, h), hidden,
                                 enc.num_heads, p, opts),
                       p, opts.train, opts.rng));
    h = Add(h, Dropout(FeedForward(layer.ff, Norm(layer.norm3, h), p, opts), p,
                       opts.train, opts.rng));
  }
  const Tensor weight =
      dec.output.weight.defined() ? dec.output.weight : Transpose(cmlm_.embed);
  return Add(MatMul(Norm(dec.final_norm, h), weight), dec.output.bias);
}

Tensor ModelBundle::P2mForward(std::span<const int> pinyin_ids,
                               const Tensor& hidden,
                               const ForwardOptions& opts) const {
  if (!has_p2m()) throw ConfigError("model has no P2M decoder");
  return DecoderForward(p2m_, pinyin_ids, pinyin_vocab_.size(), hidden, opts);
}

Tensor ModelBundle::CmlmForward(std::span<const int> char_ids,
                                const Tensor& hidden,
                                const ForwardOptions& opts) const {
  if (!has_cmlm()) throw ConfigError("model has no CMLM decoder");
  return DecoderForward(cmlm_, char_ids, char_vocab_.size(), hidden, opts);
}

Tensor ModelBundle::CtcWeight() const {
  return ctc_.weight.defined() ? ctc_.weight : Transpose(cmlm_.embed);
}

Tensor ModelBundle::P2mOutputWeight() const {
  if (!has_p2m()) throw ConfigError("model has no P2M decoder");
  return p2m_.output.weight.defined() ? p2m_.output.weight
                                      : Transpose(cmlm_.embed);
}

// --- checkpoints ------------------------------------------------------------

namespace {

nlohmann::json VocabToJson(const Vocabulary& v) {
  nlohmann::json arr = nlohmann::json::array();
  for (int i = 0; i < v.size(); ++i) {
    arr.push_back({v.token(i), LangTagName(v.tag(i))});
  }
  return arr;
}

Vocabulary VocabFromJson(const nlohmann::json& arr) {
  Vocabulary v;
  for (size_t i = 4; i < arr.size(); ++i) {
    v.Add(arr[i].at(0).get<std::string>(),
          ParseLangTag(arr[i].at(1).get<std::string>()));
  }
  return v;
}

ModelBundle BundleFromMeta(const nlohmann::json& meta,
                           const std::filesystem::path& path) {
  try {
    return ModelBundle(ModelConfigFromJson(meta.at("model_config")),
                       VocabFromJson(meta.at("char_vocab")),
                       VocabFromJson(meta.at("pinyin_vocab")), 0);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": checkpoint header incomplete: " +
                      e.what());
  }
}

void CopyArrays(const Container& c, const std::filesystem::path& path,
                ModelBundle* bundle) {
  auto& params = bundle->parameters();
  if (c.arrays.size() != params.size()) {
    throw ConfigError(path.string() + ": checkpoint has " +
                      std::to_string(c.arrays.size()) + " arrays, model has " +
                      std::to_string(params.size()));
  }
  for (auto& p : params) {
    const NamedArray* a = c.Find(p.name);
    if (a == nullptr) {
      throw ConfigError(path.string() + ": missing array '" + p.name + "'");
    }
    if (a->shape != p.tensor.shape()) {
      throw ConfigError(path.string() + ": array '" + p.name + "' has shape " +
                        ShapeToString(a->shape) + ", model expects " +
                        ShapeToString(p.tensor.shape()));
    }
    std::copy(a->data.begin(), a->data.end(), p.tensor.mutable_values().begin());
  }
}

}  // namespace

void SaveCheckpoint(const ModelBundle& bundle,
                    const std::filesystem::path& path,
                    const nlohmann::json& extra_meta) {
  Container c;
  c.meta = extra_meta;
  c.meta["kind"] = "mcctc-checkpoint";
  c.meta["model_config"] = ToJson(bundle.config());
  c.meta["char_vocab"] = VocabToJson(bundle.char_vocab());
  c.meta["pinyin_vocab"] = VocabToJson(bundle.pinyin_vocab());
  for (const auto& p : bundle.parameters()) {
    c.arrays.push_back({p.name, p.tensor.shape(),
                        std::vector<double>(p.tensor.values().begin(),
                                            p.tensor.values().end())});
  }
  WriteContainer(c, path);
}

ModelBundle LoadCheckpoint(const std::filesystem::path& path) {
  Container c = ReadContainer(path);
  ModelBundle bundle = BundleFromMeta(c.meta, path);
  CopyArrays(c, path, &bundle);
  return bundle;
}

void LoadParameters(const std::filesystem::path& path, ModelBundle* bundle) {
  CopyArrays(ReadContainer(path), path, bundle);
}

nlohmann::json ReadCheckpointMeta(const std::filesystem::path& path) {
  return ReadContainer(path).meta;
}

ModelBundle AverageCheckpoints(std::span<const std::filesystem::path> paths,
                               int k) {
  if (paths.empty()) throw ConfigError("average: no checkpoints given");
  if (k < 1) throw ConfigError("average: k must be >= 1");
  std::vector<Container> all;
  for (const auto& p : paths) all.push_back(ReadContainer(p));

  std::vector<size_t> order(all.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  auto accuracy = [&](size_t i) {
    return all[i].meta.value("val_accuracy", 0.0);
  };
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return accuracy(a) > accuracy(b); });
  order.resize(std::min<size_t>(k, order.size()));

  const Container& first = all[order[0]];
  ModelBundle bundle = BundleFromMeta(first.meta, paths[order[0]]);
  Container mean = first;
  for (size_t n = 1; n < order.size(); ++n) {
    const Container& other = all[order[n]];
    for (auto& a : mean.arrays) {
      const NamedArray* b = other.Find(a.name);
      if (b == nullptr || b->shape != a.shape) {
        throw ConfigError("average: array '" + a.name + "' differs in " +
                          paths[order[n]].string());
      }
      for (size_t i = 0; i < a.data.size(); ++i) a.data[i] += b->data[i];
    }
  }
  const auto count = static_cast<double>(order.size());
  for (auto& a : mean.arrays) {
    for (auto& x : a.data) x /= count;
  }
  CopyArrays(mean, paths[order[0]], &bundle);
  return bundle;
}

}  // namespace mcctc
