// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace exploitbench::util {

std::string base64_encode(std::string_view bytes);

// Standard alphabet with padding. Returns nullopt on any malformed input.
std::optional<std::string> base64_decode(std::string_view text);

// Lowercase hex SHA-256 digest.
std::string sha256_hex(std::string_view bytes);

// Replaces invalid UTF-8 sequences with U+FFFD.
std::string utf8_lossy(std::string_view bytes);

std::string trim(std::string_view s);

bool starts_with_ci(std::string_view s, std::string_view prefix);

std::string to_lower(std::string_view s);

}  // namespace exploitbench::util
