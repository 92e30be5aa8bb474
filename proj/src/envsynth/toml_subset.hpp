// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string_view>

#include <nlohmann/json.hpp>

namespace exploitbench::envsynth::detail {

class TomlError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Enough TOML for pyproject files: tables, arrays of tables, dotted keys,
// all four string forms, arrays, inline tables. Numbers, booleans and dates
// come back as their raw text.
nlohmann::json parse_toml(std::string_view text);

}  // namespace exploitbench::envsynth::detail
