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

#include <algorithm>
#include <fstream>
#include <set>
#include <stdexcept>

#include "mcctc/error.h"

namespace mcctc {
namespace {

// Decodes one UTF-8 code point starting at `pos`; advances `pos`. Invalid
// bytes decode as themselves so tokenization never throws.
char32_t NextCodePoint(std::string_view s, size_t* pos) {
  const auto c = static_cast<unsigned char>(s[*pos]);
  int len = 1;
  char32_t cp = c;
  if (c >= 0xF0 && c < 0xF8) {
    len = 4;
    cp = c & 0x07;
  } else if (c >= 0xE0) {
    len = 3;
    cp = c & 0x0F;
  } else if (c >= 0xC0) {
    len = 2;
    cp = c & 0x1F;
  }
  if (*pos + len > s.size()) {
    ++*pos;
    return c;
  }
  for (int i = 1; i < len; ++i) {
    cp = (cp << 6) | (static_cast<unsigned char>(s[*pos + i]) & 0x3F);
  }
  *pos += len;
  return len == 1 ? c : cp;
}

bool IsCjk(char32_t cp) {
  return (cp >= 0x4E00 && cp <= 0x9FFF) || (cp >= 0x3400 && cp <= 0x4DBF) ||
         (cp >= 0xF900 && cp <= 0xFAFF) || (cp >= 0x20000 && cp <= 0x2A6DF);
}

bool IsSpace(char32_t cp) {
  return cp == ' ' || cp == '\t' || cp == '\n' || cp == '\r' || cp == '\f' ||
         cp == '\v' || cp == 0x3000;
}

std::vector<std::string> SplitTab(const std::string& line) {
  std::vector<std::string> parts;
  size_t start = 0;
  while (true) {
    size_t tab = line.find('\t', start);
    parts.push_back(line.substr(start, tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return parts;
}

void StripCr(std::string* line) {
  if (!line->empty() && line->back() == '\r') line->pop_back();
}

}  // namespace

std::string_view LangTagName(LangTag tag) {
  switch (tag) {
    case LangTag::kManChar:
      return "MAN_CHAR";
    case LangTag::kPinyin:
      return "PINYIN";
    case LangTag::kEng:
      return "ENG";
    case LangTag::kSpecial:
      return "SPECIAL";
  }
  return "SPECIAL";
}

LangTag ParseLangTag(std::string_view name) {
  if (name == "MAN_CHAR") return LangTag::kManChar;
  if (name == "PINYIN") return LangTag::kPinyin;
  if (name == "ENG") return LangTag::kEng;
  if (name == "SPECIAL") return LangTag::kSpecial;
  throw std::invalid_argument("unknown language tag '" + std::string(name) +
                              "'");
}

Vocabulary::Vocabulary() {
  for (auto special : {kBlankToken, kUnkToken, kNoiseToken, kMaskToken}) {
    Add(std::string(special), LangTag::kSpecial);
  }
}

int Vocabulary::Add(std::string token, LangTag tag) {
  if (token.empty()) throw std::invalid_argument("empty token");
  if (tag == LangTag::kManChar && !IsMandarinToken(token)) {
    throw std::invalid_argument("MAN_CHAR token '" + token +
                                "' is not a single character");
  }
  if (tag == LangTag::kPinyin && !IsPinyinSyllable(token)) {
    throw std::invalid_argument("PINYIN token '" + token +
                                "' does not match [a-z]+[0-9]?");
  }
  const int id = size();
  auto [it, inserted] = id_of_.emplace(token, id);
  if (!inserted) {
    throw std::invalid_argument("duplicate token '" + token + "'");
  }
  tokens_.push_back(std::move(token));
  tags_.push_back(tag);
  return id;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) {
    throw std::out_of_range("token id " + std::to_string(id) +
                            " out of range for vocabulary of size " +
                            std::to_string(size()));
  }
  return tokens_[id];
}

LangTag Vocabulary::tag(int id) const {
  if (id < 0 || id >= size()) {
    throw std::out_of_range("token id " + std::to_string(id) + " out of range");
  }
  return tags_[id];
}

std::optional<int> Vocabulary::Find(std::string_view token) const {
  auto it = id_of_.find(std::string(token));
  if (it == id_of_.end()) return std::nullopt;
  return it->second;
}

int Vocabulary::IdOrUnk(std::string_view token) const {
  return Find(token).value_or(unk_id());
}

std::vector<int> Vocabulary::Encode(std::span<const std::string> tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(IdOrUnk(t));
  return ids;
}

std::vector<std::string> Vocabulary::Decode(std::span<const int> ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (int id : ids) out.push_back(token(id));
  return out;
}

void Vocabulary::Save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write vocabulary " + path.string());
  for (int i = 0; i < size(); ++i) {
    out << tokens_[i] << '\t' << LangTagName(tags_[i]) << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

Vocabulary Vocabulary::Load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read vocabulary " + path.string());
  Vocabulary vocab;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    StripCr(&line);
    const int id = line_no++;
    if (line.empty()) continue;
    auto parts = SplitTab(line);
    if (parts.size() != 2) {
      throw ConfigError(path.string() + ":" + std::to_string(line_no) +
                        ": expected token<TAB>tag");
    }
    const LangTag tag = ParseLangTag(parts[1]);
    if (id < 4) {
      if (parts[0] != vocab.token(id) || tag != LangTag::kSpecial) {
        throw ConfigError(path.string() + ":" + std::to_string(line_no) +
                          ": expected special token " + vocab.token(id));
      }
      continue;
    }
    if (id != vocab.size()) {
      throw ConfigError(path.string() + ": blank line inside vocabulary");
    }
    try {
      vocab.Add(parts[0], tag);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": " +
                        e.what());
    }
  }
  return vocab;
}

bool PinyinTable::Add(const std::string& ch, const std::string& pinyin) {
  if (!IsMandarinToken(ch)) {
    throw std::invalid_argument("pinyin table key '" + ch +
                                "' is not a single character");
  }
  if (!IsPinyinSyllable(pinyin)) {
    throw std::invalid_argument("invalid pinyin '" + pinyin + "' for " + ch);
  }
  return map_.emplace(ch, pinyin).second;
}

const std::string* PinyinTable::Find(std::string_view ch) const {
  auto it = map_.find(ch);
  return it == map_.end() ? nullptr : &it->second;
}

const std::string& PinyinTable::At(std::string_view ch) const {
  const std::string* p = Find(ch);
  if (p == nullptr) {
    throw std::out_of_range("character '" + std::string(ch) +
                            "' has no pinyin mapping");
  }
  return *p;
}

void PinyinTable::Save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write pinyin table " + path.string());
  for (const auto& [ch, py] : map_) out << ch << '\t' << py << '\n';
}

PinyinTable PinyinTable::Load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read pinyin table " + path.string());
  PinyinTable table;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    StripCr(&line);
    if (line.empty()) continue;
    auto parts = SplitTab(line);
    if (parts.size() != 2) {
      throw ConfigError(path.string() + ":" + std::to_string(line_no) +
                        ": expected CHAR<TAB>pinyin");
    }
    try {
      table.Add(parts[0], parts[1]);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": " +
                        e.what());
    }
  }
  return table;
}

bool IsMandarinToken(std::string_view token) {
  if (token.empty()) return false;
  size_t pos = 0;
  const char32_t cp = NextCodePoint(token, &pos);
  return pos == token.size() && IsCjk(cp);
}

bool IsPinyinSyllable(std::string_view token) {
  size_t i = 0;
  while (i < token.size() && token[i] >= 'a' && token[i] <= 'z') ++i;
  if (i == 0) return false;
  if (i == token.size()) return true;
  return i + 1 == token.size() && token[i] >= '0' && token[i] <= '9';
}

LangTag ClassifyToken(std::string_view token) {
  if (IsMandarinToken(token)) return LangTag::kManChar;
  if (token == kBlankToken || token == kUnkToken || token == kNoiseToken ||
      token == kMaskToken) {
    return LangTag::kSpecial;
  }
  return LangTag::kEng;
}

std::vector<std::string> Tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string word;
  auto flush = [&] {
    if (!word.empty()) tokens.push_back(std::move(word));
    word.clear();
  };
  size_t pos = 0;
  while (pos < text.size()) {
    const size_t start = pos;
    const char32_t cp = NextCodePoint(text, &pos);
    if (IsSpace(cp)) {
      flush();
    } else if (IsCjk(cp)) {
      flush();
      tokens.emplace_back(text.substr(start, pos - start));
    } else {
      word.append(text.substr(start, pos - start));
    }
  }
  flush();
  return tokens;
}

std::string Detokenize(std::span<const std::string> tokens) {
  std::string out;
  for (size_t i = 0; i < tokens.size(); ++i) {
    if (i > 0) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

VocabPair BuildVocab(std::span<const std::string> corpus_lines,
                     const PinyinTable& table) {
  std::set<std::string> chars;
  std::set<std::string> words;
  for (const auto& line : corpus_lines) {
    for (auto& tok : Tokenize(line)) {
      switch (ClassifyToken(tok)) {
        case LangTag::kManChar:
          if (table.Find(tok) == nullptr) {
            throw std::invalid_argument("character '" + tok +
                                        "' is missing from the pinyin table");
          }
          chars.insert(std::move(tok));
          break;
        case LangTag::kEng:
          words.insert(std::move(tok));
          break;
        default:
          break;
      }
    }
  }

  VocabPair pair;
  for (const auto& ch : chars) pair.char_vocab.Add(ch, LangTag::kManChar);
  for (const auto& w : words) pair.char_vocab.Add(w, LangTag::kEng);

  std::set<std::string> readings;
  for (const auto& ch : chars) readings.insert(table.At(ch));
  for (const auto& py : readings) pair.pinyin_vocab.Add(py, LangTag::kPinyin);
  // An English word spelled like a syllable shares the syllable's entry.
  for (const auto& w : words) {
    if (!pair.pinyin_vocab.Find(w)) pair.pinyin_vocab.Add(w, LangTag::kEng);
  }
  return pair;
}

std::vector<int> ToPinyin(std::span<const int> char_ids,
                          const Vocabulary& char_vocab,
                          const Vocabulary& pinyin_vocab,
                          const PinyinTable& table) {
  std::vector<int> out;
  out.reserve(char_ids.size());
  for (int id : char_ids) {
    const std::string& tok = char_vocab.token(id);
    if (char_vocab.tag(id) == LangTag::kManChar) {
      out.push_back(pinyin_vocab.IdOrUnk(table.At(tok)));
    } else {
      out.push_back(pinyin_vocab.IdOrUnk(tok));
    }
  }
  return out;
}

std::vector<std::string> ToPinyinTokens(std::span<const std::string> tokens,
                                        const PinyinTable& table) {
  std::vector<std::string> out;
  out.reserve(tokens.size());
  for (const auto& tok : tokens) {
    out.push_back(IsMandarinToken(tok) ? table.At(tok) : tok);
  }
  return out;
}

}  // namespace mcctc
