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

#ifndef MCCTC_JSON_UTIL_H_
#define MCCTC_JSON_UTIL_H_

#include <initializer_list>
#include <string>
#include <string_view>

#include "json.hpp"
#include "mcctc/error.h"

namespace mcctc {

// Rejects keys of `j` outside `allowed`; `where` prefixes the message.
inline void RejectUnknownKeys(const nlohmann::json& j,
                              std::initializer_list<std::string_view> allowed,
                              std::string_view where) {
  if (!j.is_object()) {
    throw ConfigError(std::string(where) + ": expected an object");
  }
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    for (auto a : allowed) known |= (a == key);
    if (!known) {
      throw ConfigError(std::string(where) + ": unknown key '" + key + "'");
    }
  }
}

// Reads j[key] into *out when present, converting type errors to ConfigError.
template <typename T>
void ReadOptional(const nlohmann::json& j, const char* key, T* out,
                  std::string_view where) {
  if (!j.contains(key)) return;
  try {
    *out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string(where) + "." + key + ": " + e.what());
  }
}

}  // namespace mcctc

#endif  // MCCTC_JSON_UTIL_H_
