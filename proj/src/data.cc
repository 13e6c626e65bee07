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

#include "mcctc/data.h"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <fstream>
#include <random>
#include <set>
#include <unordered_set>

#include "mcctc/error.h"
#include "mcctc/json_util.h"

namespace mcctc {
namespace {

constexpr const char* kInitials[] = {"b", "p", "m", "f", "d", "t", "n",
                                     "l", "g", "k", "h", "j", "q", "x",
                                     "zh", "ch", "sh", "r", "z", "c", "s"};
constexpr const char* kFinals[] = {"a",  "o",  "e",  "i",   "u",   "ai",  "ei",
                                   "ao", "ou", "an", "en",  "ang", "eng", "ong"};
constexpr int kCjkFirst = 0x4E00;
constexpr int kCjkLast = 0x9FA5;

std::string EncodeUtf8(int cp) {
  std::string s;
  s += static_cast<char>(0xE0 | (cp >> 12));
  s += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
  s += static_cast<char>(0x80 | (cp & 0x3F));
  return s;
}

int UniformInt(Rng& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

template <typename T>
const T& Pick(const std::vector<T>& v, Rng& rng) {
  return v[UniformInt(rng, 0, static_cast<int>(v.size()) - 1)];
}

// Up to n distinct entries of `pool`, in sampled order.
std::vector<std::string> Sample(std::vector<std::string> pool, int n, Rng& rng) {
  std::shuffle(pool.begin(), pool.end(), rng);
  pool.resize(std::min<size_t>(pool.size(), n));
  return pool;
}

std::string MakeWord(Rng& rng) {
  static const std::string kConsonants = "bcdfgklmnprstvwz";
  static const std::string kVowels = "aeiou";
  const int len = UniformInt(rng, 4, 7);
  std::string w;
  for (int i = 0; i < len; ++i) {
    const std::string& set = (i % 2 == 0) ? kConsonants : kVowels;
    w += set[UniformInt(rng, 0, static_cast<int>(set.size()) - 1)];
  }
  return w;
}

SynthInventory MakeInventory(const SynthConfig& cfg, Rng& rng) {
  SynthInventory inv;
  std::vector<std::string> syllables;
  for (const char* i : kInitials) {
    for (const char* f : kFinals) syllables.push_back(std::string(i) + f);
  }
  inv.pinyin = Sample(syllables, cfg.num_pinyin, rng);
  std::sort(inv.pinyin.begin(), inv.pinyin.end());

  std::set<int> codepoints;
  while (static_cast<int>(codepoints.size()) < cfg.num_chars) {
    codepoints.insert(UniformInt(rng, kCjkFirst, kCjkLast));
  }
  for (int cp : codepoints) inv.chars.push_back(EncodeUtf8(cp));
  // Every reading gets one character, the rest are spread at random.
  std::vector<std::string> order = inv.chars;
  std::shuffle(order.begin(), order.end(), rng);
  for (size_t i = 0; i < order.size(); ++i) {
    const std::string& reading =
        i < inv.pinyin.size() ? inv.pinyin[i] : Pick(inv.pinyin, rng);
    inv.table.Add(order[i], reading);
  }

  const std::set<std::string> taken(syllables.begin(), syllables.end());
  std::set<std::string> words;
  while (static_cast<int>(words.size()) < cfg.num_eng_words) {
    std::string w = MakeWord(rng);
    if (!taken.contains(w)) words.insert(std::move(w));
  }
  inv.eng_words.assign(words.begin(), words.end());

  std::normal_distribution<double> normal(0.0, 1.0);
  auto make_template = [&] {
    std::vector<double> t(cfg.feat_dim);
    for (auto& x : t) x = normal(rng);
    return t;
  };
  for (const auto& p : inv.pinyin) inv.templates[p] = make_template();
  for (const auto& w : inv.eng_words) inv.templates[w] = make_template();

  for (const auto& c : inv.chars) {
    std::vector<std::string> pool;
    const std::string& reading = inv.table.At(c);
    for (const auto& o : inv.chars) {
      // Adjacent homophones would be acoustically inseparable.
      if (inv.table.At(o) != reading) pool.push_back(o);
    }
    inv.same_next[c] = Sample(pool, cfg.successors, rng);
    inv.switch_next[c] = Sample(inv.eng_words, cfg.successors, rng);
  }
  for (const auto& w : inv.eng_words) {
    std::vector<std::string> pool;
    for (const auto& o : inv.eng_words) {
      if (o != w) pool.push_back(o);
    }
    inv.same_next[w] = Sample(pool, cfg.successors, rng);
    inv.switch_next[w] = Sample(inv.chars, cfg.successors, rng);
  }
  return inv;
}

std::vector<std::string> MakeTranscript(const SynthConfig& cfg,
                                        const SynthInventory& inv, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int length = UniformInt(rng, cfg.min_length, cfg.max_length);
  const bool have_eng = !inv.eng_words.empty();
  bool mandarin = !have_eng || unit(rng) < 0.5;
  std::vector<std::string> tokens;
  tokens.push_back(mandarin ? Pick(inv.chars, rng) : Pick(inv.eng_words, rng));
  while (static_cast<int>(tokens.size()) < length) {
    const std::string& prev = tokens.back();
    const bool switch_lang = have_eng && unit(rng) < cfg.switch_prob;
    const auto& next = switch_lang ? inv.switch_next.at(prev)
                                   : inv.same_next.at(prev);
    if (switch_lang) mandarin = !mandarin;
    tokens.push_back(Pick(next, rng));
  }
  return tokens;
}

uint64_t Fnv1a(std::string_view s) {
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

void SynthConfig::Validate() const {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError("synth: " + msg);
  };
  require(num_chars >= 2, "num_chars must be >= 2");
  require(num_pinyin >= 2, "num_pinyin must be >= 2");
  require(num_pinyin < num_chars, "num_pinyin must be < num_chars");
  require(num_pinyin <= static_cast<int>(std::size(kInitials) * std::size(kFinals)),
          "num_pinyin exceeds the syllable inventory");
  require(num_chars <= kCjkLast - kCjkFirst + 1, "num_chars too large");
  require(num_eng_words >= 0, "num_eng_words must be >= 0");
  require(num_eng_words != 1, "num_eng_words must be 0 or >= 2");
  require(train_utterances >= 1 && val_utterances >= 1 && test_utterances >= 1,
          "every split needs >= 1 utterance");
  require(min_length >= 1 && min_length <= max_length,
          "need 1 <= min_length <= max_length");
  require(switch_prob >= 0 && switch_prob <= 1, "switch_prob must be in [0,1]");
  require(switch_prob == 0 || num_eng_words >= 2,
          "code-switching needs English words");
  require(successors >= 1, "successors must be >= 1");
  require(feat_dim >= 1, "feat_dim must be >= 1");
  require(min_duration >= 1 && min_duration <= max_duration,
          "need 1 <= min_duration <= max_duration");
  require(noise_stddev >= 0, "noise_stddev must be >= 0");
}

nlohmann::json ToJson(const SynthConfig& c) {
  return {{"num_chars", c.num_chars},
          {"num_pinyin", c.num_pinyin},
          {"num_eng_words", c.num_eng_words},
          {"train_utterances", c.train_utterances},
          {"val_utterances", c.val_utterances},
          {"test_utterances", c.test_utterances},
          {"min_length", c.min_length},
          {"max_length", c.max_length},
          {"switch_prob", c.switch_prob},
          {"successors", c.successors},
          {"feat_dim", c.feat_dim},
          {"min_duration", c.min_duration},
          {"max_duration", c.max_duration},
          {"noise_stddev", c.noise_stddev},
          {"seed", c.seed}};
}

SynthConfig SynthConfigFromJson(const nlohmann::json& j) {
  constexpr std::string_view kWhere = "synth";
  RejectUnknownKeys(
      j, {"num_chars", "num_pinyin", "num_eng_words", "train_utterances",
          "val_utterances", "test_utterances", "min_length", "max_length",
          "switch_prob", "successors", "feat_dim", "min_duration",
          "max_duration", "noise_stddev", "seed"},
      kWhere);
  SynthConfig c;
  ReadOptional(j, "num_chars", &c.num_chars, kWhere);
  ReadOptional(j, "num_pinyin", &c.num_pinyin, kWhere);
  ReadOptional(j, "num_eng_words", &c.num_eng_words, kWhere);
  ReadOptional(j, "train_utterances", &c.train_utterances, kWhere);
  ReadOptional(j, "val_utterances", &c.val_utterances, kWhere);
  ReadOptional(j, "test_utterances", &c.test_utterances, kWhere);
  ReadOptional(j, "min_length", &c.min_length, kWhere);
  ReadOptional(j, "max_length", &c.max_length, kWhere);
  ReadOptional(j, "switch_prob", &c.switch_prob, kWhere);
  ReadOptional(j, "successors", &c.successors, kWhere);
  ReadOptional(j, "feat_dim", &c.feat_dim, kWhere);
  ReadOptional(j, "min_duration", &c.min_duration, kWhere);
  ReadOptional(j, "max_duration", &c.max_duration, kWhere);
  ReadOptional(j, "noise_stddev", &c.noise_stddev, kWhere);
  ReadOptional(j, "seed", &c.seed, kWhere);
  return c;
}

SynthCorpus GenCorpus(const SynthConfig& cfg) {
  cfg.Validate();
  Rng rng(cfg.seed);
  SynthCorpus corpus;
  corpus.config = cfg;
  corpus.inventory = MakeInventory(cfg, rng);
  std::unordered_set<std::string> seen;
  auto fill = [&](std::vector<SynthUtterance>* split, const char* name,
                  int count) {
    const long max_attempts = 100L * count + 1000;
    long attempts = 0;
    while (static_cast<int>(split->size()) < count) {
      if (++attempts > max_attempts) {
        throw ConfigError(
            std::string("synth: inventory too small to draw ") +
            std::to_string(count) + " distinct " + name + " utterances");
      }
      auto tokens = MakeTranscript(cfg, corpus.inventory, rng);
      if (!seen.insert(Detokenize(tokens)).second) continue;
      char id[64];
      std::snprintf(id, sizeof(id), "%s_%05zu", name, split->size());
      split->push_back({id, std::move(tokens)});
    }
  };
  fill(&corpus.train, "train", cfg.train_utterances);
  fill(&corpus.val, "val", cfg.val_utterances);
  fill(&corpus.test, "test", cfg.test_utterances);

  // Build over the whole inventory so no split meets an unknown token.
  std::vector<std::string> lines;
  std::vector<std::string> all = corpus.inventory.chars;
  all.insert(all.end(), corpus.inventory.eng_words.begin(),
             corpus.inventory.eng_words.end());
  lines.push_back(Detokenize(all));
  corpus.vocabs = BuildVocab(lines, corpus.inventory.table);
  return corpus;
}

Rng FeatureRng(uint64_t seed, std::string_view utt_id) {
  std::seed_seq seq{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32),
                    static_cast<uint32_t>(Fnv1a(utt_id)),
                    static_cast<uint32_t>(Fnv1a(utt_id) >> 32)};
  return Rng(seq);
}

Matrix SynthFeatures(std::span<const std::string> tokens,
                     const SynthInventory& inventory, const SynthConfig& cfg,
                     Rng& rng) {
  std::vector<const std::vector<double>*> units;
  std::vector<int> durations;
  int total = 0;
  for (const auto& t : tokens) {
    std::string_view unit = t;
    if (IsMandarinToken(t)) {
      const std::string* reading = inventory.table.Find(t);
      if (reading == nullptr) {
        throw std::invalid_argument("synth_features: unknown token '" + t + "'");
      }
      unit = *reading;
    }
    const auto it = inventory.templates.find(unit);
    if (it == inventory.templates.end()) {
      throw std::invalid_argument("synth_features: unknown token '" + t + "'");
    }
    units.push_back(&it->second);
    durations.push_back(UniformInt(rng, cfg.min_duration, cfg.max_duration));
    total += durations.back();
  }
  Matrix feats(total, cfg.feat_dim);
  std::normal_distribution<double> noise(0.0, 1.0);
  int frame = 0;
  for (size_t i = 0; i < units.size(); ++i) {
    for (int k = 0; k < durations[i]; ++k, ++frame) {
      for (int d = 0; d < cfg.feat_dim; ++d) {
        const double n = cfg.noise_stddev > 0 ? cfg.noise_stddev * noise(rng) : 0.0;
        feats(frame, d) = (*units[i])[d] + n;
      }
    }
  }
  return feats;
}

Matrix SpecAugment(const Matrix& features, int num_time_masks, int time_width,
                   int num_freq_masks, int freq_width, Rng& rng) {
  if (time_width > features.rows || freq_width > features.cols ||
      time_width < 0 || freq_width < 0) {
    throw std::invalid_argument("spec_augment: mask wider than the features");
  }
  Matrix out = features;
  for (int m = 0; m < num_time_masks && time_width > 0; ++m) {
    const int t0 = UniformInt(rng, 0, features.rows - time_width);
    for (int t = t0; t < t0 + time_width; ++t) {
      for (int d = 0; d < features.cols; ++d) out(t, d) = 0;
    }
  }
  for (int m = 0; m < num_freq_masks && freq_width > 0; ++m) {
    const int f0 = UniformInt(rng, 0, features.cols - freq_width);
    for (int t = 0; t < features.rows; ++t) {
      for (int d = f0; d < f0 + freq_width; ++d) out(t, d) = 0;
    }
  }
  return out;
}

std::filesystem::path Manifest::FeaturePath(const ManifestRecord& r) const {
  const std::filesystem::path p(r.feats_path);
  return p.is_absolute() ? p : base_dir / p;
}

Manifest ReadManifest(const std::filesystem::path& path, bool check_features) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read manifest " + path.string());
  Manifest m;
  m.base_dir = path.parent_path();
  std::set<std::string> ids;
  std::string line;
  int record = 0;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ++record;
    const std::string where =
        path.string() + ": record " + std::to_string(record);
    ManifestRecord r;
    try {
      const auto j = nlohmann::json::parse(line);
      for (const char* key : {"utt_id", "text", "feats_path", "num_frames"}) {
        if (!j.contains(key)) {
          throw ConfigError(where + ": missing field '" + key + "'");
        }
      }
      r.utt_id = j.at("utt_id").get<std::string>();
      r.text = j.at("text").get<std::string>();
      r.feats_path = j.at("feats_path").get<std::string>();
      r.num_frames = j.at("num_frames").get<int>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(where + ": " + e.what());
    }
    if (!ids.insert(r.utt_id).second) {
      throw ConfigError(where + ": duplicate utt_id '" + r.utt_id + "'");
    }
    if (check_features && !std::filesystem::exists(m.FeaturePath(r))) {
      throw ConfigError(where + ": feature file '" + r.feats_path +
                        "' does not exist");
    }
    m.records.push_back(std::move(r));
  }
  return m;
}

void WriteManifest(const Manifest& manifest, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest " + path.string());
  for (const auto& r : manifest.records) {
    out << nlohmann::json{{"utt_id", r.utt_id},
                          {"text", r.text},
                          {"feats_path", r.feats_path},
                          {"num_frames", r.num_frames}}
               .dump()
        << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

void WriteCorpus(const SynthCorpus& corpus, const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  const std::pair<const char*, const std::vector<SynthUtterance>*> splits[] = {
      {"train", &corpus.train}, {"val", &corpus.val}, {"test", &corpus.test}};
  for (const auto& [name, utts] : splits) {
    const fs::path rel = fs::path("feats") / name;
    fs::create_directories(out_dir / rel, ec);
    if (ec) throw IoError("cannot create " + (out_dir / rel).string());
    Manifest m;
    m.base_dir = out_dir;
    for (const auto& u : *utts) {
      Rng rng = FeatureRng(corpus.config.seed, u.utt_id);
      const Matrix feats =
          SynthFeatures(u.tokens, corpus.inventory, corpus.config, rng);
      const fs::path file = rel / (u.utt_id + ".feats");
      WriteFeatures(feats, out_dir / file);
      m.records.push_back({u.utt_id, u.text(), file.generic_string(), feats.rows});
    }
    WriteManifest(m, out_dir / (std::string(name) + ".jsonl"));
  }
  corpus.vocabs.char_vocab.Save(out_dir / "char_vocab.txt");
  corpus.vocabs.pinyin_vocab.Save(out_dir / "pinyin_vocab.txt");
  corpus.inventory.table.Save(out_dir / "pinyin_table.txt");
  std::ofstream text(out_dir / "train_text.txt");
  if (!text) throw IoError("cannot write train_text.txt");
  for (const auto& u : corpus.train) text << u.text() << '\n';
}

}  // namespace mcctc
