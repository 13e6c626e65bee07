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

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "gtest/gtest.h"
#include "mcctc/error.h"

namespace mcctc {
namespace {

namespace fs = std::filesystem;

SynthConfig SmallConfig() {
  SynthConfig c;
  c.train_utterances = 120;
  c.val_utterances = 20;
  c.test_utterances = 20;
  return c;
}

fs::path TempDir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "mcctc_data_test" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string Slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

bool IsSwitch(const std::string& a, const std::string& b) {
  return IsMandarinToken(a) != IsMandarinToken(b);
}

TEST(SynthConfigTest, Validation) {
  SynthConfig c;
  EXPECT_NO_THROW(c.Validate());
  c.num_pinyin = c.num_chars;
  EXPECT_THROW(c.Validate(), ConfigError);
  c = SynthConfig();
  c.min_length = 5;
  c.max_length = 4;
  EXPECT_THROW(c.Validate(), ConfigError);
  c = SynthConfig();
  c.noise_stddev = -1;
  EXPECT_THROW(c.Validate(), ConfigError);
  c = SynthConfig();
  c.seed = 77;
  c.switch_prob = 0.3;
  EXPECT_EQ(ToJson(SynthConfigFromJson(ToJson(c))), ToJson(c));
}

TEST(GenCorpusTest, DeterministicInSeed) {
  const SynthCorpus a = GenCorpus(SmallConfig());
  const SynthCorpus b = GenCorpus(SmallConfig());
  ASSERT_EQ(a.train.size(), b.train.size());
  for (size_t i = 0; i < a.train.size(); ++i) {
    EXPECT_EQ(a.train[i].tokens, b.train[i].tokens);
  }
  SynthConfig other = SmallConfig();
  other.seed = 2;
  EXPECT_NE(GenCorpus(other).train[0].tokens, a.train[0].tokens);
}

TEST(GenCorpusTest, WrittenFilesAreByteIdentical) {
  const fs::path d1 = TempDir("det1");
  const fs::path d2 = TempDir("det2");
  WriteCorpus(GenCorpus(SmallConfig()), d1);
  WriteCorpus(GenCorpus(SmallConfig()), d2);
  for (const char* f : {"train.jsonl", "test.jsonl", "char_vocab.txt",
                        "pinyin_table.txt", "train_text.txt",
                        "feats/val/val_00003.feats"}) {
    EXPECT_EQ(Slurp(d1 / f), Slurp(d2 / f)) << f;
  }
}

TEST(GenCorpusTest, SplitsAreDisjointAndSized) {
  const SynthCorpus c = GenCorpus(SmallConfig());
  EXPECT_EQ(c.train.size(), 120u);
  EXPECT_EQ(c.val.size(), 20u);
  EXPECT_EQ(c.test.size(), 20u);
  std::set<std::string> texts;
  for (const auto* split : {&c.train, &c.val, &c.test}) {
    for (const auto& u : *split) {
      EXPECT_TRUE(texts.insert(u.text()).second) << u.text();
      EXPECT_GE(u.tokens.size(), 4u);
      EXPECT_LE(u.tokens.size(), 10u);
    }
  }
  EXPECT_EQ(c.train[7].utt_id, "train_00007");
}

TEST(GenCorpusTest, NoSwitchingGivesMonolingualUtterances) {
  SynthConfig cfg = SmallConfig();
  cfg.switch_prob = 0;
  const SynthCorpus c = GenCorpus(cfg);
  for (const auto& u : c.train) {
    for (size_t i = 1; i < u.tokens.size(); ++i) {
      EXPECT_FALSE(IsSwitch(u.tokens[i - 1], u.tokens[i])) << u.text();
    }
  }
}

TEST(GenCorpusTest, ReadingsAreSurjectiveWithHomophones) {
  SynthConfig cfg = SmallConfig();
  cfg.num_chars = 50;
  cfg.num_pinyin = 20;
  const SynthCorpus c = GenCorpus(cfg);
  std::map<std::string, int> group;
  for (const auto& ch : c.inventory.chars) ++group[c.inventory.table.At(ch)];
  EXPECT_EQ(group.size(), 20u);
  int largest = 0;
  for (const auto& [py, n] : group) largest = std::max(largest, n);
  EXPECT_GE(largest, 3);
  EXPECT_LT(c.vocabs.pinyin_vocab.size(), c.vocabs.char_vocab.size());
  for (const auto& py : c.inventory.pinyin) EXPECT_TRUE(IsPinyinSyllable(py));
  for (const auto& w : c.inventory.eng_words) {
    EXPECT_EQ(std::count(c.inventory.pinyin.begin(), c.inventory.pinyin.end(), w),
              0);
  }
}

TEST(GenCorpusTest, SwitchRateMatchesConfig) {
  SynthConfig cfg;
  cfg.train_utterances = 2000;
  cfg.val_utterances = 10;
  cfg.test_utterances = 10;
  const SynthCorpus c = GenCorpus(cfg);
  long transitions = 0;
  long switches = 0;
  for (const auto& u : c.train) {
    for (size_t i = 1; i < u.tokens.size(); ++i) {
      ++transitions;
      switches += IsSwitch(u.tokens[i - 1], u.tokens[i]);
    }
  }
  EXPECT_NEAR(static_cast<double>(switches) / transitions, cfg.switch_prob, 0.02);
}

TEST(GenCorpusTest, TooSmallInventoryIsAConfigError) {
  SynthConfig cfg = SmallConfig();
  cfg.num_chars = 3;
  cfg.num_pinyin = 2;
  cfg.num_eng_words = 0;
  cfg.switch_prob = 0;
  cfg.successors = 1;
  cfg.min_length = cfg.max_length = 2;
  EXPECT_THROW(GenCorpus(cfg), ConfigError);
}

TEST(SynthFeaturesTest, LengthIsSumOfDurations) {
  const SynthCorpus c = GenCorpus(SmallConfig());
  SynthConfig cfg = c.config;
  cfg.min_duration = cfg.max_duration = 7;
  Rng rng(1);
  const Matrix f = SynthFeatures(c.train[0].tokens, c.inventory, cfg, rng);
  EXPECT_EQ(f.rows, 7 * static_cast<int>(c.train[0].tokens.size()));
  EXPECT_EQ(f.cols, cfg.feat_dim);
}

TEST(SynthFeaturesTest, NoiselessFeaturesRepeatTemplates) {
  const SynthCorpus c = GenCorpus(SmallConfig());
  SynthConfig cfg = c.config;
  cfg.noise_stddev = 0;
  cfg.min_duration = cfg.max_duration = 3;
  Rng rng(2);
  const auto& tokens = c.train[1].tokens;
  const Matrix f = SynthFeatures(tokens, c.inventory, cfg, rng);
  for (size_t i = 0; i < tokens.size(); ++i) {
    const std::string* reading = c.inventory.table.Find(tokens[i]);
    const auto& tmpl = c.inventory.templates.at(reading ? *reading : tokens[i]);
    for (int k = 0; k < 3; ++k) {
      for (int d = 0; d < cfg.feat_dim; ++d) {
        EXPECT_EQ(f(static_cast<int>(3 * i) + k, d), tmpl[d]);
      }
    }
  }
}

TEST(SynthFeaturesTest, HomophonesShareFeatures) {
  const SynthCorpus c = GenCorpus(SmallConfig());
  std::map<std::string, std::vector<std::string>> groups;
  for (const auto& ch : c.inventory.chars) {
    groups[c.inventory.table.At(ch)].push_back(ch);
  }
  const auto it = std::find_if(groups.begin(), groups.end(),
                               [](const auto& g) { return g.second.size() >= 2; });
  ASSERT_NE(it, groups.end());
  SynthConfig cfg = c.config;
  Rng r1(5);
  Rng r2(5);
  const std::vector<std::string> a = {it->second[0]};
  const std::vector<std::string> b = {it->second[1]};
  // Same stream, same reading: identical features, noise included.
  EXPECT_EQ(SynthFeatures(a, c.inventory, cfg, r1),
            SynthFeatures(b, c.inventory, cfg, r2));
}

TEST(SynthFeaturesTest, UnknownTokenThrows) {
  const SynthCorpus c = GenCorpus(SmallConfig());
  Rng rng(1);
  EXPECT_THROW(SynthFeatures(std::vector<std::string>{"zzzzq"}, c.inventory,
                             c.config, rng),
               std::invalid_argument);
}

TEST(SynthFeaturesTest, FeatureStreamDependsOnSeedAndId) {
  Rng a = FeatureRng(1, "train_00001");
  Rng b = FeatureRng(1, "train_00001");
  Rng c = FeatureRng(1, "train_00002");
  Rng d = FeatureRng(2, "train_00001");
  const auto x = a();
  EXPECT_EQ(x, b());
  EXPECT_NE(x, c());
  EXPECT_NE(x, d());
}

// Softmax regression on per-token mean features recovers the pronunciation
// unit, so the acoustic task is learnable.
TEST(SynthFeaturesTest, LinearProbeRecoversUnits) {
  SynthConfig cfg = SmallConfig();
  cfg.noise_stddev = 0.1;
  const SynthCorpus c = GenCorpus(cfg);
  std::vector<std::string> units;
  for (const auto& [unit, tmpl] : c.inventory.templates) units.push_back(unit);
  std::map<std::string, int> unit_id;
  for (size_t i = 0; i < units.size(); ++i) unit_id[units[i]] = static_cast<int>(i);
  std::vector<std::string> tokens = c.inventory.chars;
  tokens.insert(tokens.end(), c.inventory.eng_words.begin(),
                c.inventory.eng_words.end());

  struct Sample {
    std::vector<double> x;
    int y;
  };
  Rng rng(3);
  auto draw = [&](int per_token) {
    std::vector<Sample> out;
    for (const auto& t : tokens) {
      const std::string* reading = c.inventory.table.Find(t);
      const int y = unit_id.at(reading ? *reading : t);
      for (int k = 0; k < per_token; ++k) {
        const Matrix f =
            SynthFeatures(std::vector<std::string>{t}, c.inventory, cfg, rng);
        std::vector<double> mean(cfg.feat_dim + 1, 0.0);
        for (int r = 0; r < f.rows; ++r) {
          for (int d = 0; d < f.cols; ++d) mean[d] += f(r, d) / f.rows;
        }
        mean[cfg.feat_dim] = 1.0;  // bias
        out.push_back({mean, y});
      }
    }
    return out;
  };
  const auto train = draw(4);
  const auto test = draw(2);
  const int k = static_cast<int>(units.size());
  const int dim = cfg.feat_dim + 1;
  std::vector<double> w(static_cast<size_t>(k) * dim, 0.0);
  auto scores = [&](const std::vector<double>& x) {
    std::vector<double> s(k, 0.0);
    for (int j = 0; j < k; ++j) {
      for (int d = 0; d < dim; ++d) s[j] += w[j * dim + d] * x[d];
    }
    return s;
  };
  for (int epoch = 0; epoch < 300; ++epoch) {
    std::vector<double> grad(w.size(), 0.0);
    for (const auto& s : train) {
      auto p = scores(s.x);
      const double mx = *std::max_element(p.begin(), p.end());
      double z = 0;
      for (auto& v : p) z += (v = std::exp(v - mx));
      for (int j = 0; j < k; ++j) {
        const double g = p[j] / z - (j == s.y ? 1.0 : 0.0);
        for (int d = 0; d < dim; ++d) grad[j * dim + d] += g * s.x[d];
      }
    }
    for (size_t i = 0; i < w.size(); ++i) w[i] -= 0.5 * grad[i] / train.size();
  }
  int correct = 0;
  for (const auto& s : test) {
    const auto p = scores(s.x);
    correct += std::max_element(p.begin(), p.end()) - p.begin() == s.y;
  }
  EXPECT_GT(static_cast<double>(correct) / test.size(), 0.9);
}

TEST(SpecAugmentTest, ZeroMasksIsIdentity) {
  Matrix m(10, 6);
  for (size_t i = 0; i < m.data.size(); ++i) m.data[i] = 1.0 + i;
  Rng rng(1);
  EXPECT_EQ(SpecAugment(m, 0, 3, 0, 2, rng), m);
}

TEST(SpecAugmentTest, FullWidthMaskZeroesEverything) {
  Matrix m(5, 4);
  std::fill(m.data.begin(), m.data.end(), 2.0);
  Rng rng(2);
  const Matrix out = SpecAugment(m, 1, 5, 0, 0, rng);
  for (double x : out.data) EXPECT_EQ(x, 0.0);
  const Matrix out2 = SpecAugment(m, 0, 0, 1, 4, rng);
  for (double x : out2.data) EXPECT_EQ(x, 0.0);
}

TEST(SpecAugmentTest, SingleMasksCoverRequestedArea) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    Matrix m(20, 8);
    std::fill(m.data.begin(), m.data.end(), 1.0);
    const Matrix out = SpecAugment(m, 1, 4, 1, 3, rng);
    const long zeros = std::count(out.data.begin(), out.data.end(), 0.0);
    // 4 rows x 8 + 3 columns x 20 - overlap 4 x 3.
    EXPECT_EQ(zeros, 4 * 8 + 3 * 20 - 4 * 3);
  }
}

TEST(SpecAugmentTest, DeterministicAndNonMutating) {
  Matrix m(12, 5);
  for (size_t i = 0; i < m.data.size(); ++i) m.data[i] = 0.5 + i;
  const Matrix copy = m;
  Rng a(9);
  Rng b(9);
  EXPECT_EQ(SpecAugment(m, 2, 2, 1, 1, a), SpecAugment(m, 2, 2, 1, 1, b));
  EXPECT_EQ(m, copy);
  EXPECT_THROW(SpecAugment(m, 1, 13, 0, 0, a), std::invalid_argument);
}

TEST(ManifestTest, RoundTrip) {
  const fs::path dir = TempDir("manifest");
  Manifest m;
  m.base_dir = dir;
  m.records = {{"a", "我 happy", "feats/a.feats", 12},
               {"b", "很", "feats/b.feats", 7}};
  fs::create_directories(dir / "feats");
  WriteFeatures(Matrix(12, 2), dir / "feats/a.feats");
  WriteFeatures(Matrix(7, 2), dir / "feats/b.feats");
  WriteManifest(m, dir / "m.jsonl");
  const Manifest back = ReadManifest(dir / "m.jsonl");
  EXPECT_EQ(back.records, m.records);
  EXPECT_EQ(back.FeaturePath(back.records[0]), dir / "feats/a.feats");
}

TEST(ManifestTest, EmptyFileIsEmptyManifest) {
  const fs::path dir = TempDir("empty");
  std::ofstream(dir / "m.jsonl").close();
  EXPECT_TRUE(ReadManifest(dir / "m.jsonl").records.empty());
}

void ExpectRecordError(const fs::path& path, const std::string& needle) {
  try {
    ReadManifest(path);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
  }
}

TEST(ManifestTest, ErrorsNameTheRecord) {
  const fs::path dir = TempDir("errors");
  WriteFeatures(Matrix(3, 2), dir / "x.feats");
  const std::string ok =
      R"({"utt_id":"a","text":"t","feats_path":"x.feats","num_frames":3})";
  std::ofstream(dir / "dup.jsonl")
      << ok << "\n" << ok << "\n";
  ExpectRecordError(dir / "dup.jsonl", "record 2");
  std::ofstream(dir / "missing.jsonl")
      << ok << "\n" << R"({"utt_id":"b","text":"t","num_frames":3})" << "\n";
  ExpectRecordError(dir / "missing.jsonl", "record 2");
  std::ofstream(dir / "dangling.jsonl")
      << R"({"utt_id":"a","text":"t","feats_path":"nope.feats","num_frames":3})"
      << "\n";
  ExpectRecordError(dir / "dangling.jsonl", "record 1");
  EXPECT_NO_THROW(ReadManifest(dir / "dangling.jsonl", /*check_features=*/false));
}

TEST(WriteCorpusTest, ManifestsMatchFeatures) {
  const fs::path dir = TempDir("corpus");
  const SynthCorpus c = GenCorpus(SmallConfig());
  WriteCorpus(c, dir);
  const Manifest m = ReadManifest(dir / "val.jsonl");
  ASSERT_EQ(m.records.size(), c.val.size());
  for (size_t i = 0; i < m.records.size(); ++i) {
    EXPECT_EQ(m.records[i].text, c.val[i].text());
    const Matrix f = ReadFeatures(m.FeaturePath(m.records[i]));
    EXPECT_EQ(f.rows, m.records[i].num_frames);
    EXPECT_EQ(f.cols, c.config.feat_dim);
    Rng rng = FeatureRng(c.config.seed, c.val[i].utt_id);
    EXPECT_EQ(f, SynthFeatures(c.val[i].tokens, c.inventory, c.config, rng));
  }
  EXPECT_EQ(Vocabulary::Load(dir / "char_vocab.txt"), c.vocabs.char_vocab);
  EXPECT_EQ(PinyinTable::Load(dir / "pinyin_table.txt").entries(),
            c.inventory.table.entries());
}

}  // namespace
}  // namespace mcctc
