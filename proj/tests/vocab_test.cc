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

#include "mcctc/vocab.h"

#include <filesystem>
#include <random>

#include "gtest/gtest.h"
#include "mcctc/error.h"

namespace mcctc {
namespace {

PinyinTable Fig1Table() {
  PinyinTable t;
  t.Add("我", "wo");
  t.Add("很", "hen");
  t.Add("狠", "hen");
  return t;
}

TEST(VocabTest, SpecialsComeFirst) {
  Vocabulary v;
  ASSERT_EQ(v.size(), 4);
  EXPECT_EQ(v.token(v.blank_id()), "<blank>");
  EXPECT_EQ(v.token(v.unk_id()), "<unk>");
  EXPECT_EQ(v.token(v.noise_id()), "<noise>");
  EXPECT_EQ(v.token(v.mask_id()), "<mask>");
  for (int id = 0; id < 4; ++id) EXPECT_TRUE(v.IsSpecial(id));
}

TEST(VocabTest, AddValidatesTags) {
  Vocabulary v;
  EXPECT_EQ(v.Add("我", LangTag::kManChar), 4);
  EXPECT_THROW(v.Add("我们", LangTag::kManChar), std::invalid_argument);
  EXPECT_THROW(v.Add("abc", LangTag::kManChar), std::invalid_argument);
  EXPECT_EQ(v.Add("hen3", LangTag::kPinyin), 5);
  EXPECT_THROW(v.Add("Hen", LangTag::kPinyin), std::invalid_argument);
  EXPECT_THROW(v.Add("hen33", LangTag::kPinyin), std::invalid_argument);
  EXPECT_THROW(v.Add("我", LangTag::kManChar), std::invalid_argument);
}

TEST(VocabTest, TokenizeSplitsCjkPerCharacter) {
  EXPECT_EQ(Tokenize("我很happy"),
            (std::vector<std::string>{"我", "很", "happy"}));
  EXPECT_EQ(Tokenize("happy day"), (std::vector<std::string>{"happy", "day"}));
  EXPECT_EQ(Tokenize("我 happy 很"),
            (std::vector<std::string>{"我", "happy", "很"}));
  EXPECT_TRUE(Tokenize("   ").empty());
}

TEST(VocabTest, BuildVocabFigureOneExample) {
  const std::vector<std::string> corpus = {"我很happy"};
  const VocabPair v = BuildVocab(corpus, Fig1Table());
  EXPECT_TRUE(v.char_vocab.Find("我"));
  EXPECT_TRUE(v.char_vocab.Find("很"));
  EXPECT_TRUE(v.char_vocab.Find("happy"));
  EXPECT_TRUE(v.pinyin_vocab.Find("wo"));
  EXPECT_TRUE(v.pinyin_vocab.Find("hen"));
  EXPECT_TRUE(v.pinyin_vocab.Find("happy"));
  EXPECT_FALSE(v.pinyin_vocab.Find("我"));
  EXPECT_EQ(v.pinyin_vocab.tag(*v.pinyin_vocab.Find("wo")), LangTag::kPinyin);
  EXPECT_EQ(v.pinyin_vocab.tag(*v.pinyin_vocab.Find("happy")), LangTag::kEng);
}

TEST(VocabTest, HomophonesShareOnePinyinEntry) {
  const std::vector<std::string> corpus = {"很 狠"};
  const VocabPair v = BuildVocab(corpus, Fig1Table());
  EXPECT_EQ(v.char_vocab.size(), 4 + 2);
  EXPECT_EQ(v.pinyin_vocab.size(), 4 + 1);
  EXPECT_LT(v.pinyin_vocab.size(), v.char_vocab.size());
}

TEST(VocabTest, EnglishOnlyCorpusGivesSameTokens) {
  const std::vector<std::string> corpus = {"good day", "day one"};
  const VocabPair v = BuildVocab(corpus, PinyinTable());
  EXPECT_EQ(v.char_vocab.tokens(), v.pinyin_vocab.tokens());
}

TEST(VocabTest, MissingCharacterIsNamed) {
  const std::vector<std::string> corpus = {"我你"};
  try {
    BuildVocab(corpus, Fig1Table());
    FAIL() << "expected an error";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("你"), std::string::npos);
  }
}

TEST(VocabTest, ToPinyinExamples) {
  const std::vector<std::string> corpus = {"我很狠happy"};
  const PinyinTable table = Fig1Table();
  const VocabPair v = BuildVocab(corpus, table);
  const std::vector<std::string> in = {"我", "很", "happy"};
  const auto ids = ToPinyin(v.char_vocab.Encode(in), v.char_vocab,
                            v.pinyin_vocab, table);
  EXPECT_EQ(v.pinyin_vocab.Decode(ids),
            (std::vector<std::string>{"wo", "hen", "happy"}));
  EXPECT_TRUE(ToPinyin({}, v.char_vocab, v.pinyin_vocab, table).empty());
  const std::vector<std::string> homophones = {"狠", "很"};
  const auto hh = ToPinyin(v.char_vocab.Encode(homophones), v.char_vocab,
                           v.pinyin_vocab, table);
  ASSERT_EQ(hh.size(), 2u);
  EXPECT_EQ(hh[0], hh[1]);
  EXPECT_EQ(v.pinyin_vocab.token(hh[0]), "hen");
}

TEST(VocabTest, ToPinyinPreservesLengthOnRandomInput) {
  const std::vector<std::string> corpus = {"我很狠happy day"};
  const PinyinTable table = Fig1Table();
  const VocabPair v = BuildVocab(corpus, table);
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> pick(0, v.char_vocab.size() - 1);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<int> ids(trial % 13);
    for (auto& id : ids) id = pick(rng);
    const auto out = ToPinyin(ids, v.char_vocab, v.pinyin_vocab, table);
    ASSERT_EQ(out.size(), ids.size());
    for (size_t i = 0; i < ids.size(); ++i) {
      if (v.char_vocab.tag(ids[i]) != LangTag::kManChar) {
        EXPECT_EQ(v.pinyin_vocab.token(out[i]), v.char_vocab.token(ids[i]));
      }
    }
  }
}

TEST(VocabTest, EncodeDecodeRoundTrip) {
  const std::vector<std::string> corpus = {"我很happy day"};
  const VocabPair v = BuildVocab(corpus, Fig1Table());
  const auto tokens = Tokenize("我 很happy   day");
  EXPECT_EQ(Detokenize(v.char_vocab.Decode(v.char_vocab.Encode(tokens))),
            "我 很 happy day");
  const std::vector<std::string> unknown = {"zzz"};
  EXPECT_EQ(v.char_vocab.Encode(unknown)[0], v.char_vocab.unk_id());
}

TEST(VocabTest, PolyphonesKeepFirstReading) {
  PinyinTable t;
  EXPECT_TRUE(t.Add("行", "xing"));
  EXPECT_FALSE(t.Add("行", "hang"));
  EXPECT_EQ(t.At("行"), "xing");
  EXPECT_THROW(t.At("好"), std::out_of_range);
}

TEST(VocabTest, FilesRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "mcctc_vocab_test";
  std::filesystem::create_directories(dir);
  const std::vector<std::string> corpus = {"我很happy"};
  const PinyinTable table = Fig1Table();
  const VocabPair v = BuildVocab(corpus, table);
  v.char_vocab.Save(dir / "v.txt");
  EXPECT_EQ(Vocabulary::Load(dir / "v.txt"), v.char_vocab);
  table.Save(dir / "t.txt");
  EXPECT_EQ(PinyinTable::Load(dir / "t.txt").entries(), table.entries());
  EXPECT_THROW(Vocabulary::Load(dir / "missing.txt"), IoError);
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace mcctc
