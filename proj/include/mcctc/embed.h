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

#ifndef MCCTC_EMBED_H_
#define MCCTC_EMBED_H_

#include <Eigen/Core>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "mcctc/vocab.h"

namespace mcctc {

// One optional vector per vocabulary id. A token "has a vector" when one was
// assigned and its norm is nonzero.
class WordEmbedding {
 public:
  WordEmbedding(int dim, int vocab_size);

  int dim() const { return dim_; }
  int vocab_size() const { return static_cast<int>(present_.size()); }
  bool HasVector(int id) const { return present_.at(id) && norms_[id] > 0; }
  std::span<const double> vector(int id) const {
    return {data_.data() + static_cast<size_t>(id) * dim_,
            static_cast<size_t>(dim_)};
  }
  void SetVector(int id, std::span<const double> values);
  int NumVectors() const;
  // Cosine similarity; both ids must have vectors.
  double Cosine(int a, int b) const;

 private:
  int dim_;
  std::vector<double> data_;
  std::vector<double> norms_;
  std::vector<bool> present_;
};

struct LoadedEmbedding {
  WordEmbedding embedding;
  int rows = 0;
  int matched = 0;
  double coverage = 0;  // fraction of vocabulary ids that received a vector
};

// Text format: first line `<count> <dim>`, then `token v1 ... v_dim` per row.
// Rows for tokens outside `vocab` are ignored.
LoadedEmbedding LoadVectors(const std::filesystem::path& path,
                            const Vocabulary& vocab);
void SaveVectors(const WordEmbedding& emb, const Vocabulary& vocab,
                 const std::filesystem::path& path);

// Symmetric positive-PMI matrix from co-occurrence counts within +-window.
Eigen::MatrixXd PpmiMatrix(std::span<const std::string> corpus_lines,
                           const Vocabulary& vocab, int window);

struct TruncatedSvdResult {
  Eigen::MatrixXd u;       // n x rank
  Eigen::VectorXd values;  // rank
  Eigen::MatrixXd v;       // n x rank
};
// Deterministic: each singular pair is sign-normalized so the largest-magnitude
// entry of u is positive.
TruncatedSvdResult TruncatedSvd(const Eigen::MatrixXd& m, int rank);

// PPMI -> rank-dim SVD -> rows U * sqrt(S), L2-normalized. Tokens never seen
// in the corpus get a zero vector (and count as vector-less).
WordEmbedding TrainPpmiSvd(std::span<const std::string> corpus_lines,
                           const Vocabulary& vocab, int dim, int window);

using CandidateFilter = std::function<bool(int id)>;

// {y != target : cos(e(target), e(y)) >= tau}, ascending ids.
std::vector<int> SimilarByThreshold(int target, const WordEmbedding& emb,
                                    double tau,
                                    const CandidateFilter& keep = nullptr);
// The n highest-cosine tokens other than `target`, best first; ties go to the
// smaller id.
std::vector<int> SimilarTopN(int target, const WordEmbedding& emb, int n,
                             const CandidateFilter& keep = nullptr);

// P(target) = 1 - eps, P(y) = eps / |D| for y in D, 0 elsewhere. An empty D
// falls back to uniform eps over the other labels (with a warning).
std::vector<double> SmoothDistribution(int target, std::span<const int> d,
                                       double epsilon, int vocab_size);

enum class SimilarityMode { kThreshold, kTopN };

struct SmoothingConfig {
  SimilarityMode mode = SimilarityMode::kTopN;
  double tau = 0.5;
  int top_n = 10;
  double epsilon = 0.1;
  // Restrict D to tokens sharing the target's language tag.
  bool same_language_only = false;
  // Embedding source: a word-vector file, or PPMI+SVD on the training text.
  std::string vectors_path;
  int ppmi_dim = 32;
  int ppmi_window = 2;

  void Validate() const;
};

nlohmann::json ToJson(const SmoothingConfig& c);
SmoothingConfig SmoothingConfigFromJson(const nlohmann::json& j);

// D for every vocabulary id; specials and vector-less tokens get {}.
std::vector<std::vector<int>> BuildNeighbourSets(const WordEmbedding& emb,
                                                 const Vocabulary& vocab,
                                                 const SmoothingConfig& cfg);

}  // namespace mcctc

#endif  // MCCTC_EMBED_H_
