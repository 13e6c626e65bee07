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

#include "mcctc/container.h"

#include <bit>
#include <cstring>
#include <fstream>

#include "mcctc/error.h"

namespace mcctc {
namespace {

constexpr char kMagic[] = "MCCS1";

static_assert(std::endian::native == std::endian::little,
              "container I/O assumes a little-endian host");

}  // namespace

Matrix Matrix::FromTensor(const Tensor& t) {
  if (t.rank() != 2) {
    throw ShapeError("expected a rank-2 tensor, got " + ShapeToString(t.shape()));
  }
  Matrix m(t.dim(0), t.dim(1));
  std::copy(t.values().begin(), t.values().end(), m.data.begin());
  return m;
}

const NamedArray* Container::Find(const std::string& name) const {
  for (const auto& a : arrays) {
    if (a.name == name) return &a;
  }
  return nullptr;
}

void WriteContainer(const Container& c, const std::filesystem::path& path) {
  nlohmann::json header;
  header["version"] = kContainerVersion;
  header["arrays"] = nlohmann::json::array();
  size_t offset = 0;
  for (const auto& a : c.arrays) {
    if (a.data.size() != NumElements(a.shape)) {
      throw ShapeError("array '" + a.name + "' has " +
                       std::to_string(a.data.size()) + " values for shape " +
                       ShapeToString(a.shape));
    }
    const size_t nbytes = a.data.size() * sizeof(double);
    header["arrays"].push_back(
        {{"name", a.name}, {"shape", a.shape}, {"offset", offset}, {"nbytes", nbytes}});
    offset += nbytes;
  }
  header["meta"] = c.meta;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << kMagic << '\n' << header.dump() << '\n';
  for (const auto& a : c.arrays) {
    out.write(reinterpret_cast<const char*>(a.data.data()),
              static_cast<std::streamsize>(a.data.size() * sizeof(double)));
  }
  if (!out) throw IoError("write failed for " + path.string());
}

Container ReadContainer(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::string magic;
  if (!std::getline(in, magic)) throw IoError(path.string() + ": empty file");
  if (magic != kMagic) {
    throw ConfigError(path.string() + ": bad magic, not an MCCS1 container");
  }
  std::string header_line;
  if (!std::getline(in, header_line)) {
    throw IoError(path.string() + ": truncated header");
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_line);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string() + ": unreadable header: " + e.what());
  }

  Container c;
  try {
    if (header.at("version").get<int>() != kContainerVersion) {
      throw ConfigError(path.string() + ": unsupported container version " +
                        header.at("version").dump());
    }
    if (header.contains("meta")) c.meta = header["meta"];
    const std::streampos payload_start = in.tellg();
    for (const auto& entry : header.at("arrays")) {
      NamedArray a;
      a.name = entry.at("name").get<std::string>();
      a.shape = entry.at("shape").get<Shape>();
      const size_t offset = entry.at("offset").get<size_t>();
      const size_t nbytes = entry.at("nbytes").get<size_t>();
      if (nbytes != NumElements(a.shape) * sizeof(double)) {
        throw ConfigError(path.string() + ": array '" + a.name +
                          "' byte count does not match its shape");
      }
      a.data.resize(NumElements(a.shape));
      in.seekg(payload_start + static_cast<std::streamoff>(offset));
      in.read(reinterpret_cast<char*>(a.data.data()),
              static_cast<std::streamsize>(nbytes));
      if (!in || static_cast<size_t>(in.gcount()) != nbytes) {
        throw IoError(path.string() + ": truncated payload for array '" +
                      a.name + "'");
      }
      c.arrays.push_back(std::move(a));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": malformed header: " + e.what());
  }
  return c;
}

void WriteFeatures(const Matrix& feats, const std::filesystem::path& path) {
  Container c;
  c.arrays.push_back({"feats", {feats.rows, feats.cols}, feats.data});
  WriteContainer(c, path);
}

Matrix ReadFeatures(const std::filesystem::path& path) {
  Container c = ReadContainer(path);
  const NamedArray* a = c.Find("feats");
  if (a == nullptr || a->shape.size() != 2) {
    throw ConfigError(path.string() + ": no rank-2 'feats' array");
  }
  Matrix m(a->shape[0], a->shape[1]);
  m.data = a->data;
  return m;
}

}  // namespace mcctc
