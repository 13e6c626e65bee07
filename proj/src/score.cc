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

#include "mcctc/score.h"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>
#include <utility>

namespace mcctc {
namespace {

constexpr int Tag(LangTag t) { return static_cast<int>(t); }

std::vector<int> EditTable(std::span<const std::string> ref,
                           std::span<const std::string> hyp) {
  const size_t n = ref.size();
  const size_t m = hyp.size();
  std::vector<int> d((n + 1) * (m + 1));
  auto at = [&](size_t i, size_t j) -> int& { return d[i * (m + 1) + j]; };
  for (size_t i = 0; i <= n; ++i) at(i, 0) = static_cast<int>(i);
  for (size_t j = 0; j <= m; ++j) at(0, j) = static_cast<int>(j);
  for (size_t i = 1; i <= n; ++i) {
    for (size_t j = 1; j <= m; ++j) {
      const int diag = at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      at(i, j) = std::min({diag, at(i - 1, j) + 1, at(i, j - 1) + 1});
    }
  }
  return d;
}

// Ref-side token strings, with Mandarin characters replaced by a marked
// Pinyin so they cannot collide with an English word of the same spelling.
struct MappedUtterance {
  std::vector<std::string> tokens;
  std::vector<LangTag> tags;
};

MappedUtterance MapToPinyin(const std::vector<std::string>& tokens,
                            const PinyinTable& table, const Vocabulary* vocab) {
  MappedUtterance out;
  for (const auto& t : tokens) {
    const LangTag tag = TokenTag(t, vocab);
    if (tag == LangTag::kManChar) {
      out.tokens.push_back("\x01" + table.At(t));
    } else {
      out.tokens.push_back(t);
    }
    out.tags.push_back(tag);
  }
  return out;
}

// Alignment minimizing (Mandarin-charged edits, total edits)
// lexicographically, where sub/del charge the reference token and ins the
// hypothesis token. The projected character-level alignment is always a
// candidate, so Mandarin errors can only shrink when homophones merge.
std::vector<AlignmentOp> MandarinFirstAlign(std::span<const std::string> ref,
                                            std::span<const LangTag> ref_tags,
                                            std::span<const std::string> hyp,
                                            std::span<const LangTag> hyp_tags) {
  using Cost = std::pair<int, int>;  // (mandarin, total)
  const size_t n = ref.size();
  const size_t m = hyp.size();
  auto man = [](LangTag t) { return t == LangTag::kManChar ? 1 : 0; };
  std::vector<Cost> d((n + 1) * (m + 1));
  auto at = [&](size_t i, size_t j) -> Cost& { return d[i * (m + 1) + j]; };
  auto plus = [](Cost c, int mandarin) {
    return Cost{c.first + mandarin, c.second + 1};
  };
  for (size_t i = 1; i <= n; ++i) at(i, 0) = plus(at(i - 1, 0), man(ref_tags[i - 1]));
  for (size_t j = 1; j <= m; ++j) at(0, j) = plus(at(0, j - 1), man(hyp_tags[j - 1]));
  for (size_t i = 1; i <= n; ++i) {
    for (size_t j = 1; j <= m; ++j) {
      const Cost diag = ref[i - 1] == hyp[j - 1]
                            ? at(i - 1, j - 1)
                            : plus(at(i - 1, j - 1), man(ref_tags[i - 1]));
      at(i, j) = std::min({diag, plus(at(i - 1, j), man(ref_tags[i - 1])),
                           plus(at(i, j - 1), man(hyp_tags[j - 1]))});
    }
  }
  std::vector<AlignmentOp> ops;
  size_t i = n;
  size_t j = m;
  while (i > 0 || j > 0) {
    const Cost here = at(i, j);
    if (i > 0 && j > 0) {
      const bool same = ref[i - 1] == hyp[j - 1];
      if (same && here == at(i - 1, j - 1)) {
        ops.push_back({EditKind::kMatch, static_cast<int>(i - 1),
                       static_cast<int>(j - 1)});
        --i, --j;
        continue;
      }
      if (!same && here == plus(at(i - 1, j - 1), man(ref_tags[i - 1]))) {
        ops.push_back({EditKind::kSub, static_cast<int>(i - 1),
                       static_cast<int>(j - 1)});
        --i, --j;
        continue;
      }
    }
    if (i > 0 && here == plus(at(i - 1, j), man(ref_tags[i - 1]))) {
      ops.push_back({EditKind::kDel, static_cast<int>(i - 1), -1});
      --i;
    } else {
      ops.push_back({EditKind::kIns, -1, static_cast<int>(j - 1)});
      --j;
    }
  }
  std::reverse(ops.begin(), ops.end());
  return ops;
}

void Attribute(const std::vector<AlignmentOp>& ops,
               std::span<const LangTag> ref_tags,
               std::span<const LangTag> hyp_tags,
               std::array<ErrorCounts, kNumLangTags>* by_lang,
               ErrorCounts* all) {
  for (const auto& op : ops) {
    switch (op.kind) {
      case EditKind::kMatch:
        break;
      case EditKind::kSub:
        ++(*by_lang)[Tag(ref_tags[op.ref])].sub;
        ++all->sub;
        break;
      case EditKind::kDel:
        ++(*by_lang)[Tag(ref_tags[op.ref])].del;
        ++all->del;
        break;
      case EditKind::kIns:
        ++(*by_lang)[Tag(hyp_tags[op.hyp])].ins;
        ++all->ins;
        break;
    }
  }
}

std::map<std::string, const TokenizedUtterance*> IndexById(
    std::span<const TokenizedUtterance> hyps) {
  std::map<std::string, const TokenizedUtterance*> index;
  for (const auto& h : hyps) {
    if (!index.emplace(h.utt_id, &h).second) {
      throw std::invalid_argument("duplicate hypothesis for utterance '" +
                                  h.utt_id + "'");
    }
  }
  return index;
}

const std::vector<std::string>& HypTokens(
    const std::map<std::string, const TokenizedUtterance*>& index,
    const std::string& utt_id, bool warn) {
  static const std::vector<std::string> kEmpty;
  const auto it = index.find(utt_id);
  if (it != index.end()) return it->second->tokens;
  if (warn) {
    spdlog::warn("no hypothesis for utterance '{}', scored as deletions",
                 utt_id);
  }
  return kEmpty;
}

}  // namespace

std::vector<AlignmentOp> Align(std::span<const std::string> ref,
                               std::span<const std::string> hyp) {
  const std::vector<int> d = EditTable(ref, hyp);
  const size_t m = hyp.size();
  auto at = [&](size_t i, size_t j) { return d[i * (m + 1) + j]; };
  std::vector<AlignmentOp> ops;
  size_t i = ref.size();
  size_t j = hyp.size();
  while (i > 0 || j > 0) {
    const int here = at(i, j);
    if (i > 0 && j > 0) {
      const bool same = ref[i - 1] == hyp[j - 1];
      if (same && here == at(i - 1, j - 1)) {
        ops.push_back({EditKind::kMatch, static_cast<int>(i - 1),
                       static_cast<int>(j - 1)});
        --i, --j;
        continue;
      }
      if (!same && here == at(i - 1, j - 1) + 1) {
        ops.push_back({EditKind::kSub, static_cast<int>(i - 1),
                       static_cast<int>(j - 1)});
        --i, --j;
        continue;
      }
    }
    if (i > 0 && here == at(i - 1, j) + 1) {
      ops.push_back({EditKind::kDel, static_cast<int>(i - 1), -1});
      --i;
    } else {
      ops.push_back({EditKind::kIns, -1, static_cast<int>(j - 1)});
      --j;
    }
  }
  std::reverse(ops.begin(), ops.end());
  return ops;
}

int EditDistance(std::span<const std::string> ref,
                 std::span<const std::string> hyp) {
  return EditTable(ref, hyp).back();
}

double UtteranceScore::NormalizedError() const {
  return ref_tokens > 0 ? static_cast<double>(errors) / ref_tokens
                        : static_cast<double>(errors);
}

double ErrorReport::Rate(long count) const {
  if (ref_tokens == 0) return count == 0 ? 0.0 : 1.0;
  return static_cast<double>(count) / static_cast<double>(ref_tokens);
}

LangTag TokenTag(const std::string& token, const Vocabulary* vocab) {
  if (vocab != nullptr) {
    if (auto id = vocab->Find(token)) return vocab->tag(*id);
  }
  return ClassifyToken(token);
}

ErrorReport ScoreCorpus(std::span<const TokenizedUtterance> refs,
                        std::span<const TokenizedUtterance> hyps,
                        const Vocabulary* vocab) {
  const auto index = IndexById(hyps);
  ErrorReport report;
  for (const auto& ref : refs) {
    const auto& hyp = HypTokens(index, ref.utt_id, /*warn=*/true);
    std::vector<LangTag> ref_tags;
    std::vector<LangTag> hyp_tags;
    for (const auto& t : ref.tokens) ref_tags.push_back(TokenTag(t, vocab));
    for (const auto& t : hyp) hyp_tags.push_back(TokenTag(t, vocab));
    ErrorCounts utt;
    Attribute(Align(ref.tokens, hyp), ref_tags, hyp_tags, &report.by_lang,
              &utt);
    report.all += utt;
    report.ref_tokens += static_cast<long>(ref.tokens.size());
    for (LangTag tag : ref_tags) ++report.ref_by_lang[Tag(tag)];
    report.utterances.push_back({ref.utt_id,
                                 static_cast<int>(ref.tokens.size()),
                                 static_cast<int>(utt.errors()),
                                 ref.tokens == hyp});
  }
  if (index.size() > refs.size()) {
    spdlog::warn("{} hypotheses have no reference and were ignored",
                 index.size() - refs.size());
  }
  return report;
}

PinyinScore PerScore(std::span<const TokenizedUtterance> refs,
                     std::span<const TokenizedUtterance> hyps,
                     const PinyinTable& table, const Vocabulary* vocab) {
  const auto index = IndexById(hyps);
  PinyinScore score;
  std::array<ErrorCounts, kNumLangTags> by_lang{};
  for (const auto& ref : refs) {
    const auto& hyp = HypTokens(index, ref.utt_id, /*warn=*/false);
    const MappedUtterance r = MapToPinyin(ref.tokens, table, vocab);
    const MappedUtterance h = MapToPinyin(hyp, table, vocab);
    Attribute(Align(r.tokens, h.tokens), r.tags, h.tags, &by_lang, &score.all);
    std::array<ErrorCounts, kNumLangTags> mandarin_first{};
    ErrorCounts unused;
    Attribute(MandarinFirstAlign(r.tokens, r.tags, h.tokens, h.tags), r.tags,
              h.tags, &mandarin_first, &unused);
    score.mandarin += mandarin_first[Tag(LangTag::kManChar)];
    score.ref_tokens += static_cast<long>(ref.tokens.size());
  }
  const double n = static_cast<double>(score.ref_tokens);
  score.per = n > 0 ? score.mandarin.errors() / n : 0.0;
  score.per_all = n > 0 ? score.all.errors() / n : 0.0;
  return score;
}

double McNemarP(long b, long c) {
  const long n = b + c;
  if (n == 0) return 1.0;
  const long k = std::min(b, c);
  const double log_half_n = n * std::log(0.5);
  double tail = 0;
  for (long i = 0; i <= k; ++i) {
    tail += std::exp(std::lgamma(n + 1.0) - std::lgamma(i + 1.0) -
                     std::lgamma(n - i + 1.0) + log_half_n);
  }
  return std::min(1.0, 2.0 * tail);
}

McNemarResult McNemar(std::span<const bool> a_correct,
                      std::span<const bool> b_correct) {
  if (a_correct.size() != b_correct.size()) {
    throw std::invalid_argument("mcnemar: unpaired samples");
  }
  McNemarResult r;
  for (size_t i = 0; i < a_correct.size(); ++i) {
    r.b += a_correct[i] && !b_correct[i];
    r.c += !a_correct[i] && b_correct[i];
  }
  if (r.b + r.c == 0) {
    spdlog::warn("mcnemar: no discordant pairs, p = 1");
  }
  r.p = McNemarP(r.b, r.c);
  return r;
}

double IncompleteBeta(double a, double b, double x) {
  if (x < 0 || x > 1 || a <= 0 || b <= 0) {
    throw std::invalid_argument("incomplete beta: argument out of range");
  }
  if (x == 0 || x == 1) return x;
  const double log_front = std::lgamma(a + b) - std::lgamma(a) -
                           std::lgamma(b) + a * std::log(x) +
                           b * std::log1p(-x);
  // The continued fraction converges fast below (a+1)/(a+b+2); use the
  // symmetry I_x(a,b) = 1 - I_{1-x}(b,a) above it.
  if (x > (a + 1) / (a + b + 2)) return 1.0 - IncompleteBeta(b, a, 1.0 - x);
  constexpr double kTiny = 1e-300;
  constexpr double kEps = 1e-16;
  double c = 1.0;
  double d = 1.0 - (a + b) * x / (a + 1);
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double f = d;
  for (int m = 1; m <= 10000; ++m) {
    const double m2 = 2.0 * m;
    double num = m * (b - m) * x / ((a + m2 - 1) * (a + m2));
    d = 1.0 + num * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + num / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    f *= d * c;
    num = -(a + m) * (a + b + m) * x / ((a + m2) * (a + m2 + 1));
    d = 1.0 + num * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + num / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double delta = d * c;
    f *= delta;
    if (std::abs(delta - 1.0) < kEps) break;
  }
  return std::exp(log_front) * f / a;
}

double StudentTTwoSided(double t, double df) {
  if (!std::isfinite(t)) return 0.0;
  return IncompleteBeta(df / 2.0, 0.5, df / (df + t * t));
}

TTestResult PairedTTest(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("paired t-test: unpaired samples");
  }
  const size_t n = a.size();
  if (n < 2) throw std::invalid_argument("paired t-test: need n >= 2");
  TTestResult r;
  r.df = static_cast<int>(n - 1);
  double mean = 0;
  for (size_t i = 0; i < n; ++i) mean += a[i] - b[i];
  mean /= static_cast<double>(n);
  double ss = 0;
  for (size_t i = 0; i < n; ++i) {
    const double dev = a[i] - b[i] - mean;
    ss += dev * dev;
  }
  r.mean_diff = mean;
  if (ss == 0) {
    if (mean == 0) {
      r.t = 0;
      r.p = 1;
    } else {
      spdlog::warn("paired t-test: constant nonzero difference, p = 0");
      r.t = std::copysign(std::numeric_limits<double>::infinity(), mean);
      r.p = 0;
    }
    return r;
  }
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  r.t = mean / (sd / std::sqrt(static_cast<double>(n)));
  r.p = StudentTTwoSided(r.t, r.df);
  return r;
}

nlohmann::json ToJson(const ErrorReport& r) {
  auto counts = [](const ErrorCounts& c) {
    return nlohmann::json{{"sub", c.sub}, {"del", c.del}, {"ins", c.ins},
                          {"errors", c.errors()}};
  };
  nlohmann::json by_lang = nlohmann::json::object();
  for (int t = 0; t < kNumLangTags; ++t) {
    const auto tag = static_cast<LangTag>(t);
    by_lang[std::string(LangTagName(tag))] = {
        {"ref_tokens", r.ref_by_lang[t]},
        {"counts", counts(r.by_lang[t])},
        {"ter", r.LangTer(tag)},
        {"del_rate", r.Rate(r.by_lang[t].del)}};
  }
  nlohmann::json j = {{"ref_tokens", r.ref_tokens},
                      {"counts", counts(r.all)},
                      {"ter", r.ter()},
                      {"sub_rate", r.Rate(r.all.sub)},
                      {"del_rate", r.Rate(r.all.del)},
                      {"ins_rate", r.Rate(r.all.ins)},
                      {"by_lang", by_lang},
                      {"num_utterances", r.utterances.size()}};
  long correct = 0;
  for (const auto& u : r.utterances) correct += u.correct;
  j["sentence_accuracy"] =
      r.utterances.empty() ? 0.0
                           : static_cast<double>(correct) / r.utterances.size();
  if (r.per) j["per"] = *r.per;
  if (r.rtf) j["rtf"] = *r.rtf;
  return j;
}

std::string FormatReportTable(
    std::span<const std::pair<std::string, const ErrorReport*>> rows) {
  size_t name_width = 6;
  for (const auto& [name, report] : rows) {
    name_width = std::max(name_width, name.size());
  }
  std::ostringstream out;
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "%-*s | %6s %6s %6s %6s | %6s | %6s %6s %6s | %6s\n",
                static_cast<int>(name_width), "System", "TER", "Man", "Pinyin",
                "Eng", "Sub", "Del", "Man", "Eng", "Ins");
  out << buf;
  out << std::string(name_width, '-')
      << "-+-----------------------------+--------+----------------------+-------\n";
  const int man = Tag(LangTag::kManChar);
  const int eng = Tag(LangTag::kEng);
  for (const auto& [name, r] : rows) {
    char per[16];
    if (r->per) {
      std::snprintf(per, sizeof(per), "%6.1f", 100 * *r->per);
    } else {
      std::snprintf(per, sizeof(per), "%6s", "-");
    }
    std::snprintf(buf, sizeof(buf),
                  "%-*s | %6.1f %6.1f %s %6.1f | %6.1f | %6.1f %6.1f %6.1f | "
                  "%6.1f\n",
                  static_cast<int>(name_width), name.c_str(), 100 * r->ter(),
                  100 * r->LangTer(LangTag::kManChar), per,
                  100 * r->LangTer(LangTag::kEng), 100 * r->Rate(r->all.sub),
                  100 * r->Rate(r->all.del), 100 * r->Rate(r->by_lang[man].del),
                  100 * r->Rate(r->by_lang[eng].del), 100 * r->Rate(r->all.ins));
    out << buf;
  }
  return out.str();
}

}  // namespace mcctc
