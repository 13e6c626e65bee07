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

#ifndef MCCTC_DATA_H_
#define MCCTC_DATA_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "mcctc/container.h"
#include "mcctc/tensor.h"
#include "mcctc/vocab.h"

namespace mcctc {

struct SynthConfig {
  int num_chars = 60;
  int num_pinyin = 24;  // < num_chars, so some characters share a reading
  int num_eng_words = 30;
  int train_utterances = 2000;
  int val_utterances = 200;
  int test_utterances = 200;
  int min_length = 4;
  int max_length = 10;
  // Chance that the next token comes from the other language.
  double switch_prob = 0.15;
  // Successors per token and language in the token-level Markov chain; the
  // only source of homophone disambiguation.
  int successors = 3;
  int feat_dim = 24;
  int min_duration = 6;  // frames per token
  int max_duration = 10;
  double noise_stddev = 0.5;
  uint64_t seed = 1;

  void Validate() const;
};

nlohmann::json ToJson(const SynthConfig& c);
SynthConfig SynthConfigFromJson(const nlohmann::json& j);

// Everything fixed once per corpus: token inventories, readings, acoustic
// templates (one per pronunciation unit) and the successor graph.
struct SynthInventory {
  std::vector<std::string> chars;
  std::vector<std::string> pinyin;
  std::vector<std::string> eng_words;
  PinyinTable table;
  // Pronunciation unit (a Pinyin syllable or an English word) -> template.
  std::map<std::string, std::vector<double>, std::less<>> templates;
  // token -> successors in the same / the other language.
  std::map<std::string, std::vector<std::string>, std::less<>> same_next;
  std::map<std::string, std::vector<std::string>, std::less<>> switch_next;
};

struct SynthUtterance {
  std::string utt_id;
  std::vector<std::string> tokens;
  std::string text() const { return Detokenize(tokens); }
};

struct SynthCorpus {
  SynthConfig config;
  SynthInventory inventory;
  std::vector<SynthUtterance> train, val, test;
  VocabPair vocabs;
};

// Deterministic in cfg.seed. Transcripts never repeat across splits.
SynthCorpus GenCorpus(const SynthConfig& cfg);

// Per-token duration ~ U{min..max}; each frame is the token's template plus
// N(0, noise^2). Throws std::invalid_argument for tokens outside the
// inventory.
Matrix SynthFeatures(std::span<const std::string> tokens,
                     const SynthInventory& inventory, const SynthConfig& cfg,
                     Rng& rng);
// The stream used for an utterance's features, fixed by seed and id.
Rng FeatureRng(uint64_t seed, std::string_view utt_id);

// Zeroes num_time_masks spans of time_width frames and num_freq_masks bands
// of freq_width channels, on a copy.
Matrix SpecAugment(const Matrix& features, int num_time_masks, int time_width,
                   int num_freq_masks, int freq_width, Rng& rng);

struct ManifestRecord {
  std::string utt_id;
  std::string text;
  std::string feats_path;  // relative paths resolve against the manifest dir
  int num_frames = 0;
  bool operator==(const ManifestRecord&) const = default;
};

struct Manifest {
  std::filesystem::path base_dir;
  std::vector<ManifestRecord> records;

  std::filesystem::path FeaturePath(const ManifestRecord& r) const;
};

// Throws ConfigError naming the record number for duplicate ids, missing
// fields, or feature files that do not exist.
Manifest ReadManifest(const std::filesystem::path& path,
                      bool check_features = true);
void WriteManifest(const Manifest& manifest, const std::filesystem::path& path);

// Writes manifests, features, vocabularies, the Pinyin table and training
// text under out_dir:
//   {train,val,test}.jsonl  feats/<split>/<utt>.feats
//   char_vocab.txt  pinyin_vocab.txt  pinyin_table.txt  train_text.txt
void WriteCorpus(const SynthCorpus& corpus, const std::filesystem::path& out_dir);

}  // namespace mcctc

#endif  // MCCTC_DATA_H_
