// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string_view>
#include <vector>

namespace exploitbench::diffkit::detail {

struct TextLine {
  std::string_view text;
  bool eol = true;
};

// Splits on '\n'. A trailing fragment without '\n' becomes a line with
// eol=false; a trailing '\n' does not produce an empty line.
inline std::vector<TextLine> split_lines(std::string_view bytes) {
  std::vector<TextLine> out;
  std::size_t start = 0;
  while (start < bytes.size()) {
    auto nl = bytes.find('\n', start);
    if (nl == std::string_view::npos) {
      out.push_back({bytes.substr(start), false});
      break;
    }
    out.push_back({bytes.substr(start, nl - start), true});
    start = nl + 1;
  }
  return out;
}

inline std::string_view strip_cr(std::string_view s) {
  if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
  return s;
}

}  // namespace exploitbench::diffkit::detail
