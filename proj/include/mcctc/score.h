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

#ifndef MCCTC_SCORE_H_
#define MCCTC_SCORE_H_

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "mcctc/vocab.h"

namespace mcctc {

enum class EditKind { kMatch, kSub, kDel, kIns };

struct AlignmentOp {
  EditKind kind;
  int ref = -1;  // index into ref; -1 for insertions
  int hyp = -1;  // index into hyp; -1 for deletions
};

// Unit-cost Levenshtein alignment. Backtrace from the end prefers
// match > sub > del > ins among optimal predecessors.
std::vector<AlignmentOp> Align(std::span<const std::string> ref,
                               std::span<const std::string> hyp);
int EditDistance(std::span<const std::string> ref,
                 std::span<const std::string> hyp);

struct ErrorCounts {
  long sub = 0;
  long del = 0;
  long ins = 0;
  long errors() const { return sub + del + ins; }
  ErrorCounts& operator+=(const ErrorCounts& o) {
    sub += o.sub;
    del += o.del;
    ins += o.ins;
    return *this;
  }
};

inline constexpr int kNumLangTags = 4;

struct UtteranceScore {
  std::string utt_id;
  int ref_tokens = 0;
  int errors = 0;
  bool correct = false;  // exact sentence match
  // errors / ref_tokens (errors alone for an empty reference).
  double NormalizedError() const;
};

// Counts per language are indexed by LangTag. Substitutions and deletions
// belong to the reference token's language, insertions to the hypothesis
// token's language. All rates are fractions of the total reference token
// count, so the per-language parts add up to the overall figure.
struct ErrorReport {
  long ref_tokens = 0;
  std::array<long, kNumLangTags> ref_by_lang{};
  ErrorCounts all;
  std::array<ErrorCounts, kNumLangTags> by_lang{};
  std::vector<UtteranceScore> utterances;
  // Mandarin-portion errors after mapping characters to Pinyin, over
  // ref_tokens; set from PerScore when a Pinyin table is available.
  std::optional<double> per;
  std::optional<double> rtf;

  double Rate(long count) const;
  double ter() const { return Rate(all.errors()); }
  double LangTer(LangTag tag) const {
    return Rate(by_lang[static_cast<int>(tag)].errors());
  }
};

struct TokenizedUtterance {
  std::string utt_id;
  std::vector<std::string> tokens;
};

// Language tag of a bare token: the vocabulary's tag when known, otherwise
// inferred from its spelling.
LangTag TokenTag(const std::string& token, const Vocabulary* vocab);

// Hypotheses are matched to references by utt_id. A missing hypothesis
// counts as all deletions (with a warning).
ErrorReport ScoreCorpus(std::span<const TokenizedUtterance> refs,
                        std::span<const TokenizedUtterance> hyps,
                        const Vocabulary* vocab);

struct PinyinScore {
  // Mandarin-portion Pinyin errors / reference tokens, counted on the
  // alignment that first minimizes Mandarin-charged edits and then total
  // edits.
  double per = 0;
  // All Pinyin-level errors / reference tokens on the plain alignment.
  double per_all = 0;
  ErrorCounts mandarin;
  ErrorCounts all;
  long ref_tokens = 0;
};

// Maps Mandarin characters on both sides to Pinyin and rescores at that
// level. Throws std::out_of_range naming any uncovered character.
PinyinScore PerScore(std::span<const TokenizedUtterance> refs,
                     std::span<const TokenizedUtterance> hyps,
                     const PinyinTable& table, const Vocabulary* vocab);

struct McNemarResult {
  long b = 0;  // A right, B wrong
  long c = 0;  // A wrong, B right
  double p = 1;
};

// Exact two-sided binomial McNemar test on paired sentence correctness.
McNemarResult McNemar(std::span<const bool> a_correct,
                      std::span<const bool> b_correct);
// Two-sided exact binomial p for b successes out of b + c at 1/2.
double McNemarP(long b, long c);

struct TTestResult {
  double mean_diff = 0;
  double t = 0;
  int df = 0;
  double p = 1;
};

// Two-sided paired t-test on per-utterance differences a - b.
TTestResult PairedTTest(std::span<const double> a, std::span<const double> b);

// Regularized incomplete beta I_x(a, b) by continued fraction.
double IncompleteBeta(double a, double b, double x);
// P(|T| >= |t|) for Student's t with df degrees of freedom.
double StudentTTwoSided(double t, double df);

nlohmann::json ToJson(const ErrorReport& r);
// Aligned text table: TER (all, Man, Pinyin, Eng) | Sub | Del (all, Man, Eng)
// | Ins, all in percent.
std::string FormatReportTable(std::span<const std::pair<std::string,
                                                        const ErrorReport*>>
                                  rows);

}  // namespace mcctc

#endif  // MCCTC_SCORE_H_
