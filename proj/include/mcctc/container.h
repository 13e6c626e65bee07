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

#ifndef MCCTC_CONTAINER_H_
#define MCCTC_CONTAINER_H_

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "mcctc/tensor.h"

namespace mcctc {

// Row-major float64 matrix used for features and posteriors outside the
// autodiff graph.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c) {}
  double& operator()(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
  double operator()(int r, int c) const {
    return data[static_cast<size_t>(r) * cols + c];
  }
  const double* row(int r) const { return data.data() + static_cast<size_t>(r) * cols; }
  bool operator==(const Matrix&) const = default;

  static Matrix FromTensor(const Tensor& t);
};

struct NamedArray {
  std::string name;
  Shape shape;
  std::vector<double> data;
};

// On-disk layout:
//   "MCCS1\n"
//   one line of compact JSON: {"version":1,"arrays":[{name,shape,offset,
//                              nbytes}...],"meta":{...}}
//   "\n"
//   concatenated little-endian float64 payloads; offsets are relative to the
//   first payload byte.
struct Container {
  std::vector<NamedArray> arrays;
  nlohmann::json meta = nlohmann::json::object();

  const NamedArray* Find(const std::string& name) const;
};

inline constexpr int kContainerVersion = 1;

void WriteContainer(const Container& c, const std::filesystem::path& path);
// Throws IoError for unreadable or truncated files and ConfigError for a bad
// magic, version, or header.
Container ReadContainer(const std::filesystem::path& path);

// Feature files hold a single T x dim array named "feats".
void WriteFeatures(const Matrix& feats, const std::filesystem::path& path);
Matrix ReadFeatures(const std::filesystem::path& path);

}  // namespace mcctc

#endif  // MCCTC_CONTAINER_H_
