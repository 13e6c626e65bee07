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

#ifndef MCCTC_VOCAB_H_
#define MCCTC_VOCAB_H_

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace mcctc {

enum class LangTag { kManChar, kPinyin, kEng, kSpecial };

std::string_view LangTagName(LangTag tag);
LangTag ParseLangTag(std::string_view name);

inline constexpr std::string_view kBlankToken = "<blank>";
inline constexpr std::string_view kUnkToken = "<unk>";
inline constexpr std::string_view kNoiseToken = "<noise>";
inline constexpr std::string_view kMaskToken = "<mask>";

// Dense token inventory. Ids 0..3 are always <blank>, <unk>, <noise>, <mask>.
class Vocabulary {
 public:
  Vocabulary();

  // Appends a token and returns its id. Adding an existing token is an error.
  int Add(std::string token, LangTag tag);

  int size() const { return static_cast<int>(tokens_.size()); }
  const std::string& token(int id) const;
  LangTag tag(int id) const;
  std::optional<int> Find(std::string_view token) const;
  int IdOrUnk(std::string_view token) const;

  int blank_id() const { return 0; }
  int unk_id() const { return 1; }
  int noise_id() const { return 2; }
  int mask_id() const { return 3; }
  bool IsSpecial(int id) const { return tag(id) == LangTag::kSpecial; }

  std::vector<int> Encode(std::span<const std::string> tokens) const;
  std::vector<std::string> Decode(std::span<const int> ids) const;

  // One `token<TAB>LANG_TAG` per line; the line number is the id.
  void Save(const std::filesystem::path& path) const;
  static Vocabulary Load(const std::filesystem::path& path);

  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::vector<LangTag>& tags() const { return tags_; }

  bool operator==(const Vocabulary& other) const {
    return tokens_ == other.tokens_ && tags_ == other.tags_;
  }

 private:
  std::vector<std::string> tokens_;
  std::vector<LangTag> tags_;
  std::unordered_map<std::string, int> id_of_;
};

// Character -> Pinyin. A character listed more than once keeps its first
// reading, so the mapping is always a function.
class PinyinTable {
 public:
  // Returns false if `ch` already had a reading (the new one is dropped).
  bool Add(const std::string& ch, const std::string& pinyin);
  const std::string* Find(std::string_view ch) const;
  // Throws std::out_of_range naming the character.
  const std::string& At(std::string_view ch) const;
  size_t size() const { return map_.size(); }
  const std::map<std::string, std::string, std::less<>>& entries() const {
    return map_;
  }

  // UTF-8, one `CHAR<TAB>pinyin` pair per line.
  void Save(const std::filesystem::path& path) const;
  static PinyinTable Load(const std::filesystem::path& path);

 private:
  std::map<std::string, std::string, std::less<>> map_;
};

struct VocabPair {
  Vocabulary char_vocab;
  Vocabulary pinyin_vocab;
};

// True for a token made of exactly one CJK ideograph.
bool IsMandarinToken(std::string_view token);
// True for `[a-z]+[0-9]?`.
bool IsPinyinSyllable(std::string_view token);
// Tag a bare token string would receive in a character vocabulary.
LangTag ClassifyToken(std::string_view token);

// Splits CJK ideographs into single-character tokens and everything else on
// whitespace. Order is preserved.
std::vector<std::string> Tokenize(std::string_view text);
std::string Detokenize(std::span<const std::string> tokens);

// Builds the character vocabulary (Mandarin characters, English words,
// specials) and the Pinyin vocabulary that replaces every character with its
// reading. Throws std::invalid_argument naming any character missing from the
// table.
VocabPair BuildVocab(std::span<const std::string> corpus_lines,
                     const PinyinTable& table);

// Maps a character-vocabulary sequence onto the Pinyin vocabulary,
// position by position.
std::vector<int> ToPinyin(std::span<const int> char_ids,
                          const Vocabulary& char_vocab,
                          const Vocabulary& pinyin_vocab,
                          const PinyinTable& table);

// Token-string version used by scoring.
std::vector<std::string> ToPinyinTokens(std::span<const std::string> tokens,
                                        const PinyinTable& table);

}  // namespace mcctc

#endif  // MCCTC_VOCAB_H_
