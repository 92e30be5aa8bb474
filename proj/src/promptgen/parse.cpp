// SPDX-License-Identifier: Apache-2.0
#include <vector>

#include <spdlog/spdlog.h>

#include "exploitbench/diffkit.hpp"
#include "exploitbench/promptgen.hpp"
#include "exploitbench/util/encoding.hpp"

namespace exploitbench::promptgen {

namespace {

struct Span {
  std::size_t begin;
  std::size_t end;  // exclusive
};

// Byte spans of each line, terminator excluded.
std::vector<Span> line_spans(std::string_view s) {
  std::vector<Span> out;
  std::size_t pos = 0;
  while (pos < s.size()) {
    auto nl = s.find('\n', pos);
    if (nl == std::string_view::npos) nl = s.size();
    out.push_back({pos, nl});
    pos = nl + 1;
  }
  return out;
}

bool is_fence(std::string_view line) { return util::trim(line).starts_with("```"); }

}  // namespace

std::string_view to_string(ParsedResponse::Outcome o) {
  switch (o) {
    case ParsedResponse::Outcome::Abstained: return "Abstained";
    case ParsedResponse::Outcome::PatchEmitted: return "PatchEmitted";
    case ParsedResponse::Outcome::Malformed: return "Malformed";
  }
  return "?";
}

ParsedResponse parse_response(std::string_view text) {
  ParsedResponse r;
  std::string_view body = text;

  // One outermost fenced block: the first fence line to the last fence line.
  auto spans = line_spans(text);
  std::size_t open = spans.size(), close = spans.size();
  for (std::size_t i = 0; i < spans.size(); ++i) {
    if (is_fence(text.substr(spans[i].begin, spans[i].end - spans[i].begin))) {
      open = i;
      break;
    }
  }
  for (std::size_t i = spans.size(); i-- > open + 1;) {
    if (util::trim(text.substr(spans[i].begin, spans[i].end - spans[i].begin)) == "```") {
      close = i;
      break;
    }
  }
  if (open < spans.size() && close < spans.size()) {
    r.fenced = true;
    auto inner_begin = open + 1 < spans.size() ? spans[open + 1].begin : text.size();
    auto inner_end = spans[close].begin;
    body = text.substr(inner_begin, inner_end > inner_begin ? inner_end - inner_begin : 0);
    r.had_prose = !util::trim(text.substr(0, spans[open].begin)).empty() ||
                  !util::trim(text.substr(std::min(text.size(), spans[close].end + 1))).empty();
  }

  auto trimmed = util::trim(body);
  if (trimmed.empty() || trimmed == kNoPatchSentinel) {
    r.outcome = ParsedResponse::Outcome::Abstained;
    return r;
  }

  auto patch = diffkit::extract_patch_text(body);
  if (!patch && r.fenced) patch = diffkit::extract_patch_text(text);
  if (!patch) {
    r.outcome = ParsedResponse::Outcome::Malformed;
    r.reason = "no diff headers";
    return r;
  }
  r.outcome = ParsedResponse::Outcome::PatchEmitted;
  r.patch_text = std::move(*patch);
  if (!r.fenced) {
    auto at = text.find(r.patch_text);
    r.had_prose = at != std::string_view::npos &&
                  (!util::trim(text.substr(0, at)).empty() ||
                   !util::trim(text.substr(at + r.patch_text.size())).empty());
  }
  if (text.find(kNoPatchSentinel) != std::string_view::npos) {
    r.sentinel_with_patch = true;
    spdlog::warn("response carries both the no-patch sentinel and a diff; the diff is used");
  }
  return r;
}

}  // namespace exploitbench::promptgen
