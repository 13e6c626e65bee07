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

#include "mcctc/embed.h"

#include <spdlog/spdlog.h>

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "mcctc/error.h"
#include "mcctc/json_util.h"

namespace mcctc {

WordEmbedding::WordEmbedding(int dim, int vocab_size)
    : dim_(dim),
      data_(static_cast<size_t>(vocab_size) * dim, 0.0),
      norms_(vocab_size, 0.0),
      present_(vocab_size, false) {
  if (dim <= 0) throw std::invalid_argument("embedding dim must be > 0");
}

void WordEmbedding::SetVector(int id, std::span<const double> values) {
  if (static_cast<int>(values.size()) != dim_) {
    throw std::invalid_argument("vector of length " +
                                std::to_string(values.size()) +
                                " for embedding dim " + std::to_string(dim_));
  }
  std::copy(values.begin(), values.end(),
            data_.begin() + static_cast<size_t>(id) * dim_);
  double sq = 0;
  for (double x : values) sq += x * x;
  norms_.at(id) = std::sqrt(sq);
  present_[id] = true;
}

int WordEmbedding::NumVectors() const {
  int n = 0;
  for (int i = 0; i < vocab_size(); ++i) n += HasVector(i);
  return n;
}

double WordEmbedding::Cosine(int a, int b) const {
  const auto va = vector(a);
  const auto vb = vector(b);
  double dot = 0;
  for (int i = 0; i < dim_; ++i) dot += va[i] * vb[i];
  return dot / (norms_[a] * norms_[b]);
}

LoadedEmbedding LoadVectors(const std::filesystem::path& path,
                            const Vocabulary& vocab) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read word vectors " + path.string());
  std::string line;
  if (!std::getline(in, line)) {
    throw ConfigError(path.string() + ":1: missing '<count> <dim>' header");
  }
  std::istringstream header(line);
  long count = -1;
  long dim = -1;
  std::string extra;
  if (!(header >> count >> dim) || (header >> extra) || count < 0 || dim <= 0) {
    throw ConfigError(path.string() + ":1: malformed header '" + line + "'");
  }
  LoadedEmbedding out{WordEmbedding(static_cast<int>(dim), vocab.size())};
  std::vector<double> values(dim);
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::istringstream row(line);
    std::string token;
    row >> token;
    long n = 0;
    std::string field;
    while (row >> field) {
      if (n >= dim) {
        throw ConfigError(path.string() + ":" + std::to_string(line_no) +
                          ": more than " + std::to_string(dim) + " values");
      }
      try {
        size_t used = 0;
        values[n] = std::stod(field, &used);
        if (used != field.size()) throw std::invalid_argument(field);
      } catch (const std::exception&) {
        throw ConfigError(path.string() + ":" + std::to_string(line_no) +
                          ": malformed value '" + field + "'");
      }
      ++n;
    }
    if (n != dim) {
      throw ConfigError(path.string() + ":" + std::to_string(line_no) +
                        ": expected " + std::to_string(dim) + " values, got " +
                        std::to_string(n));
    }
    ++out.rows;
    if (auto id = vocab.Find(token)) {
      out.embedding.SetVector(*id, values);
      ++out.matched;
    }
  }
  if (out.rows != count) {
    throw ConfigError(path.string() + ": header announces " +
                      std::to_string(count) + " rows, file has " +
                      std::to_string(out.rows));
  }
  int covered = 0;
  for (int i = 0; i < vocab.size(); ++i) covered += out.embedding.HasVector(i);
  out.coverage = vocab.size() == 0 ? 0.0 : static_cast<double>(covered) / vocab.size();
  spdlog::info("word vectors: {} rows, {} matched, vocabulary coverage {:.3f}",
               out.rows, out.matched, out.coverage);
  return out;
}

void SaveVectors(const WordEmbedding& emb, const Vocabulary& vocab,
                 const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out.precision(17);
  int rows = 0;
  for (int i = 0; i < vocab.size(); ++i) rows += emb.HasVector(i);
  out << rows << ' ' << emb.dim() << '\n';
  for (int i = 0; i < vocab.size(); ++i) {
    if (!emb.HasVector(i)) continue;
    out << vocab.token(i);
    for (double x : emb.vector(i)) out << ' ' << x;
    out << '\n';
  }
}

Eigen::MatrixXd PpmiMatrix(std::span<const std::string> corpus_lines,
                           const Vocabulary& vocab, int window) {
  if (window < 1) throw std::invalid_argument("ppmi: window must be >= 1");
  const int n = vocab.size();
  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(n, n);
  for (const auto& line : corpus_lines) {
    const auto tokens = Tokenize(line);
    std::vector<int> ids;
    for (const auto& t : tokens) {
      if (auto id = vocab.Find(t)) ids.push_back(*id);
    }
    for (size_t i = 0; i < ids.size(); ++i) {
      const size_t hi = std::min(ids.size(), i + window + 1);
      for (size_t j = i + 1; j < hi; ++j) {
        counts(ids[i], ids[j]) += 1;
        counts(ids[j], ids[i]) += 1;
      }
    }
  }
  const double total = counts.sum();
  Eigen::MatrixXd ppmi = Eigen::MatrixXd::Zero(n, n);
  if (total == 0) return ppmi;
  const Eigen::VectorXd row = counts.rowwise().sum();
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (counts(i, j) == 0) continue;
      const double pmi = std::log(counts(i, j) * total / (row(i) * row(j)));
      ppmi(i, j) = std::max(0.0, pmi);
    }
  }
  return ppmi;
}

TruncatedSvdResult TruncatedSvd(const Eigen::MatrixXd& m, int rank) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  rank = std::min<int>(rank, static_cast<int>(svd.singularValues().size()));
  TruncatedSvdResult r;
  r.u = svd.matrixU().leftCols(rank);
  r.v = svd.matrixV().leftCols(rank);
  r.values = svd.singularValues().head(rank);
  for (int k = 0; k < rank; ++k) {
    Eigen::Index arg = 0;
    r.u.col(k).cwiseAbs().maxCoeff(&arg);
    if (r.u(arg, k) < 0) {
      r.u.col(k) *= -1;
      r.v.col(k) *= -1;
    }
  }
  return r;
}

WordEmbedding TrainPpmiSvd(std::span<const std::string> corpus_lines,
                           const Vocabulary& vocab, int dim, int window) {
  if (dim < 1 || dim > vocab.size()) {
    throw std::invalid_argument("ppmi_svd: dim must be in [1, |V|]");
  }
  const Eigen::MatrixXd ppmi = PpmiMatrix(corpus_lines, vocab, window);
  WordEmbedding emb(dim, vocab.size());
  if (ppmi.isZero(0)) {
    spdlog::warn("ppmi_svd: empty co-occurrence matrix, all vectors are zero");
  }
  const TruncatedSvdResult svd = TruncatedSvd(ppmi, dim);
  std::vector<double> row(dim, 0.0);
  int unseen = 0;
  for (int i = 0; i < vocab.size(); ++i) {
    double sq = 0;
    for (int k = 0; k < svd.values.size(); ++k) {
      row[k] = svd.u(i, k) * std::sqrt(svd.values(k));
      sq += row[k] * row[k];
    }
    const double norm = std::sqrt(sq);
    // Rows of an all-zero PPMI row carry only rounding noise.
    if (ppmi.row(i).isZero(0) || norm < 1e-12) {
      std::fill(row.begin(), row.end(), 0.0);
      if (!vocab.IsSpecial(i)) ++unseen;
    } else {
      for (auto& x : row) x /= norm;
    }
    emb.SetVector(i, row);
  }
  if (unseen > 0) {
    spdlog::warn("ppmi_svd: {} vocabulary token(s) never observed, zero vectors",
                 unseen);
  }
  return emb;
}

namespace {

std::vector<std::pair<double, int>> ScoredCandidates(int target,
                                                     const WordEmbedding& emb,
                                                     const CandidateFilter& keep) {
  std::vector<std::pair<double, int>> scored;
  if (!emb.HasVector(target)) {
    spdlog::warn("similarity: token id {} has no vector, empty neighbour set",
                 target);
    return scored;
  }
  for (int y = 0; y < emb.vocab_size(); ++y) {
    if (y == target || !emb.HasVector(y)) continue;
    if (keep && !keep(y)) continue;
    scored.emplace_back(emb.Cosine(target, y), y);
  }
  return scored;
}

}  // namespace

std::vector<int> SimilarByThreshold(int target, const WordEmbedding& emb,
                                    double tau, const CandidateFilter& keep) {
  std::vector<int> out;
  for (const auto& [cosine, y] : ScoredCandidates(target, emb, keep)) {
    if (cosine >= tau) out.push_back(y);
  }
  return out;
}

std::vector<int> SimilarTopN(int target, const WordEmbedding& emb, int n,
                             const CandidateFilter& keep) {
  auto scored = ScoredCandidates(target, emb, keep);
  const auto better = [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  };
  const size_t take = std::min<size_t>(std::max(n, 0), scored.size());
  std::partial_sort(scored.begin(), scored.begin() + take, scored.end(), better);
  std::vector<int> out;
  out.reserve(take);
  for (size_t i = 0; i < take; ++i) out.push_back(scored[i].second);
  return out;
}

std::vector<double> SmoothDistribution(int target, std::span<const int> d,
                                       double epsilon, int vocab_size) {
  std::vector<double> p(vocab_size, 0.0);
  if (d.empty()) {
    spdlog::warn("smoothing: empty neighbour set for id {}, using uniform "
                 "label smoothing",
                 target);
    const double other = epsilon / (vocab_size - 1);
    std::fill(p.begin(), p.end(), other);
  } else {
    const double share = epsilon / static_cast<double>(d.size());
    for (int y : d) {
      if (y == target) {
        throw std::invalid_argument("smoothing: target inside its own D");
      }
      p.at(y) = share;
    }
  }
  p.at(target) = 1.0 - epsilon;
  return p;
}

void SmoothingConfig::Validate() const {
  if (!(tau > -1 && tau < 1)) throw ConfigError("smoothing.tau must be in (-1,1)");
  if (top_n < 1) throw ConfigError("smoothing.top_n must be >= 1");
  if (!(epsilon > 0 && epsilon < 1)) {
    throw ConfigError("smoothing.epsilon must be in (0,1)");
  }
  if (ppmi_dim < 1) throw ConfigError("smoothing.ppmi_dim must be >= 1");
  if (ppmi_window < 1) throw ConfigError("smoothing.ppmi_window must be >= 1");
}

nlohmann::json ToJson(const SmoothingConfig& c) {
  return {{"mode", c.mode == SimilarityMode::kTopN ? "topn" : "threshold"},
          {"tau", c.tau},
          {"top_n", c.top_n},
          {"epsilon", c.epsilon},
          {"same_language_only", c.same_language_only},
          {"vectors_path", c.vectors_path},
          {"ppmi_dim", c.ppmi_dim},
          {"ppmi_window", c.ppmi_window}};
}

SmoothingConfig SmoothingConfigFromJson(const nlohmann::json& j) {
  constexpr std::string_view kWhere = "smoothing";
  RejectUnknownKeys(j, {"mode", "tau", "top_n", "epsilon", "same_language_only",
                        "vectors_path", "ppmi_dim", "ppmi_window"},
                    kWhere);
  SmoothingConfig c;
  std::string mode = "topn";
  ReadOptional(j, "mode", &mode, kWhere);
  if (mode == "topn") {
    c.mode = SimilarityMode::kTopN;
  } else if (mode == "threshold") {
    c.mode = SimilarityMode::kThreshold;
  } else {
    throw ConfigError("smoothing.mode must be 'topn' or 'threshold'");
  }
  ReadOptional(j, "tau", &c.tau, kWhere);
  ReadOptional(j, "top_n", &c.top_n, kWhere);
  ReadOptional(j, "epsilon", &c.epsilon, kWhere);
  ReadOptional(j, "same_language_only", &c.same_language_only, kWhere);
  ReadOptional(j, "vectors_path", &c.vectors_path, kWhere);
  ReadOptional(j, "ppmi_dim", &c.ppmi_dim, kWhere);
  ReadOptional(j, "ppmi_window", &c.ppmi_window, kWhere);
  return c;
}

std::vector<std::vector<int>> BuildNeighbourSets(const WordEmbedding& emb,
                                                 const Vocabulary& vocab,
                                                 const SmoothingConfig& cfg) {
  std::vector<std::vector<int>> sets(vocab.size());
  for (int id = 0; id < vocab.size(); ++id) {
    if (vocab.IsSpecial(id) || !emb.HasVector(id)) continue;
    CandidateFilter keep = [&vocab, &cfg, id](int y) {
      if (vocab.IsSpecial(y)) return false;
      return !cfg.same_language_only || vocab.tag(y) == vocab.tag(id);
    };
    sets[id] = cfg.mode == SimilarityMode::kTopN
                   ? SimilarTopN(id, emb, cfg.top_n, keep)
                   : SimilarByThreshold(id, emb, cfg.tau, keep);
  }
  return sets;
}

}  // namespace mcctc
