// SPDX-License-Identifier: Apache-2.0
#include <charconv>

#include "exploitbench/diffkit.hpp"
#include "lines.hpp"

namespace exploitbench::diffkit {

using detail::split_lines;
using detail::strip_cr;
using detail::TextLine;

std::string_view to_string(ParseErrorKind kind) {
  switch (kind) {
    case ParseErrorKind::EmptyPatch: return "EmptyPatch";
    case ParseErrorKind::MalformedHunkHeader: return "MalformedHunkHeader";
    case ParseErrorKind::DuplicateTarget: return "DuplicateTarget";
    case ParseErrorKind::OverlappingHunks: return "OverlappingHunks";
  }
  return "?";
}

namespace {

bool is_header_pair(const std::vector<TextLine>& lines, std::size_t i) {
  return i + 1 < lines.size() && lines[i].text.starts_with("--- ") &&
         lines[i + 1].text.starts_with("+++ ");
}

std::string unquote_c(std::string_view s) {
  std::string out;
  for (std::size_t i = 1; i < s.size(); ++i) {
    char c = s[i];
    if (c == '"') break;
    if (c == '\\' && i + 1 < s.size()) {
      char e = s[++i];
      switch (e) {
        case 'n': out.push_back('\n'); break;
        case 't': out.push_back('\t'); break;
        case '"': out.push_back('"'); break;
        case '\\': out.push_back('\\'); break;
        default:
          if (e >= '0' && e <= '7' && i + 2 < s.size()) {
            int v = (e - '0') * 64 + (s[i + 1] - '0') * 8 + (s[i + 2] - '0');
            out.push_back(static_cast<char>(v));
            i += 2;
          } else {
            out.push_back(e);
          }
      }
      continue;
    }
    out.push_back(c);
  }
  return out;
}

std::string header_path(std::string_view line) {
  auto s = strip_cr(line.substr(4));
  if (!s.empty() && s.front() == '"') return unquote_c(s);
  auto tab = s.find('\t');
  if (tab != std::string_view::npos) s = s.substr(0, tab);
  while (!s.empty() && (s.back() == ' ')) s.remove_suffix(1);
  return std::string(s);
}

bool read_number(std::string_view& s, std::size_t& out) {
  auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  if (res.ec != std::errc() || res.ptr == s.data()) return false;
  s.remove_prefix(static_cast<std::size_t>(res.ptr - s.data()));
  return true;
}

bool read_range(std::string_view& s, char sign, std::size_t& start,
                std::size_t& len) {
  if (s.empty() || s.front() != sign) return false;
  s.remove_prefix(1);
  if (!read_number(s, start)) return false;
  len = 1;
  if (!s.empty() && s.front() == ',') {
    s.remove_prefix(1);
    if (!read_number(s, len)) return false;
  }
  return true;
}

bool parse_hunk_header(std::string_view line, Hunk& h) {
  auto s = strip_cr(line);
  if (!s.starts_with("@@ ")) return false;
  s.remove_prefix(3);
  if (!read_range(s, '-', h.old_start, h.old_len)) return false;
  if (!s.starts_with(" ")) return false;
  s.remove_prefix(1);
  if (!read_range(s, '+', h.new_start, h.new_len)) return false;
  if (!s.starts_with(" @@")) return false;
  s.remove_prefix(3);
  h.section = std::string(s);
  return true;
}

[[noreturn]] void malformed(std::size_t line_no, const std::string& why) {
  throw PatchParseError(ParseErrorKind::MalformedHunkHeader,
                        "line " + std::to_string(line_no + 1) + ": " + why);
}

// Reads the body of `h` starting at lines[i]; returns the index after it.
std::size_t read_body(const std::vector<TextLine>& lines, std::size_t i,
                      Hunk& h, std::size_t header_line) {
  std::size_t need_old = h.old_len;
  std::size_t need_new = h.new_len;
  while (need_old > 0 || need_new > 0) {
    if (i >= lines.size()) {
      malformed(header_line, "hunk body ends before the counts in its header");
    }
    auto text = lines[i].text;
    if (text.starts_with("\\")) {
      if (!h.lines.empty()) h.lines.back().eol = false;
      ++i;
      continue;
    }
    if (is_header_pair(lines, i) && i + 2 < lines.size() &&
        lines[i + 2].text.starts_with("@@ ")) {
      malformed(header_line, "hunk body ends before the counts in its header");
    }
    HunkLine hl;
    if (strip_cr(text).empty()) {
      // Blank context line whose leading space was lost.
      hl.tag = LineTag::Context;
      hl.text = std::string(text);
    } else {
      switch (text.front()) {
        case ' ': hl.tag = LineTag::Context; break;
        case '-': hl.tag = LineTag::Del; break;
        case '+': hl.tag = LineTag::Add; break;
        default:
          malformed(header_line, "hunk body ends before the counts in its header");
      }
      hl.text = std::string(text.substr(1));
    }
    bool takes_old = hl.tag != LineTag::Add;
    bool takes_new = hl.tag != LineTag::Del;
    if ((takes_old && need_old == 0) || (takes_new && need_new == 0)) {
      malformed(header_line, "hunk body disagrees with the counts in its header");
    }
    if (takes_old) --need_old;
    if (takes_new) --need_new;
    h.lines.push_back(std::move(hl));
    ++i;
  }
  while (i < lines.size() && lines[i].text.starts_with("\\")) {
    if (!h.lines.empty()) h.lines.back().eol = false;
    ++i;
  }
  return i;
}

std::size_t effective_begin(const Hunk& h) {
  return h.old_len == 0 ? h.old_start + 1 : h.old_start;
}

}  // namespace

PatchSet parse_patch(std::string_view text) {
  auto lines = split_lines(text);
  PatchSet patch;
  std::size_t i = 0;
  while (i < lines.size()) {
    if (!is_header_pair(lines, i)) {
      ++i;
      continue;
    }
    FileDiff fd;
    fd.old_path = header_path(lines[i].text);
    fd.new_path = header_path(lines[i + 1].text);
    i += 2;
    while (i < lines.size() && lines[i].text.starts_with("@@")) {
      Hunk h;
      if (!parse_hunk_header(lines[i].text, h)) {
        malformed(i, "unparseable hunk header '" + std::string(lines[i].text) + "'");
      }
      i = read_body(lines, i + 1, h, i);
      if (!fd.hunks.empty()) {
        const auto& prev = fd.hunks.back();
        if (effective_begin(h) < effective_begin(prev) + prev.old_len) {
          throw PatchParseError(ParseErrorKind::OverlappingHunks,
                                "hunks out of order or overlapping in " +
                                    fd.new_path);
        }
      }
      fd.hunks.push_back(std::move(h));
    }
    if (fd.hunks.empty()) continue;
    for (const auto& other : patch.files) {
      if (fd.new_path != kNullPath && other.new_path == fd.new_path) {
        throw PatchParseError(ParseErrorKind::DuplicateTarget,
                              "two file sections target " + fd.new_path);
      }
    }
    patch.files.push_back(std::move(fd));
  }
  if (patch.files.empty()) {
    throw PatchParseError(ParseErrorKind::EmptyPatch, "no file headers found");
  }
  return patch;
}

namespace {

std::string quote_if_needed(const std::string& path) {
  bool needs = false;
  for (char c : path) {
    if (c == '\t' || c == '\n' || c == '"' || c == '\\') needs = true;
  }
  if (!needs) return path;
  std::string out = "\"";
  for (char c : path) {
    switch (c) {
      case '\t': out += "\\t"; break;
      case '\n': out += "\\n"; break;
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      default: out.push_back(c);
    }
  }
  out.push_back('"');
  return out;
}

void render_range(std::string& out, std::size_t start, std::size_t len) {
  out += std::to_string(start);
  if (len != 1) {
    out.push_back(',');
    out += std::to_string(len);
  }
}

}  // namespace

std::string render_patch(const PatchSet& patch) {
  std::string out;
  for (const auto& fd : patch.files) {
    out += "--- " + quote_if_needed(fd.old_path) + "\n";
    out += "+++ " + quote_if_needed(fd.new_path) + "\n";
    for (const auto& h : fd.hunks) {
      out += "@@ -";
      render_range(out, h.old_start, h.old_len);
      out += " +";
      render_range(out, h.new_start, h.new_len);
      out += " @@";
      out += h.section;
      out.push_back('\n');
      for (const auto& l : h.lines) {
        out.push_back(l.tag == LineTag::Context ? ' '
                      : l.tag == LineTag::Add   ? '+'
                                                : '-');
        out += l.text;
        out.push_back('\n');
        if (!l.eol) out += "\\ No newline at end of file\n";
      }
    }
  }
  return out;
}

namespace {

bool ab_convention(const std::vector<std::pair<std::string, std::string>>& pairs) {
  bool any = false;
  for (const auto& [o, n] : pairs) {
    if (o != kNullPath) {
      if (!o.starts_with("a/")) return false;
      any = true;
    }
    if (n != kNullPath) {
      if (!n.starts_with("b/")) return false;
      any = true;
    }
  }
  return any;
}

std::string strip_dot(std::string p) {
  while (p.starts_with("./")) p.erase(0, 2);
  return p;
}

}  // namespace

std::set<std::string> target_paths(const PatchSet& patch) {
  std::vector<std::pair<std::string, std::string>> pairs;
  for (const auto& fd : patch.files) pairs.emplace_back(fd.old_path, fd.new_path);
  bool strip = ab_convention(pairs);
  std::set<std::string> out;
  for (const auto& [o, n] : pairs) {
    for (const auto* p : {&o, &n}) {
      if (*p == kNullPath) continue;
      out.insert(strip_dot(strip ? p->substr(2) : *p));
    }
  }
  return out;
}

std::set<std::string> scan_target_paths(std::string_view text) {
  auto lines = split_lines(text);
  std::vector<std::pair<std::string, std::string>> pairs;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (is_header_pair(lines, i)) {
      pairs.emplace_back(header_path(lines[i].text), header_path(lines[i + 1].text));
      ++i;
    }
  }
  bool strip = ab_convention(pairs);
  std::set<std::string> out;
  for (const auto& [o, n] : pairs) {
    for (const auto* p : {&o, &n}) {
      if (*p == kNullPath || p->empty()) continue;
      out.insert(strip_dot(strip ? p->substr(2) : *p));
    }
  }
  return out;
}

std::optional<std::string> extract_patch_text(std::string_view text) {
  auto lines = split_lines(text);
  std::size_t first = lines.size();
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (is_header_pair(lines, i)) {
      first = i;
      break;
    }
  }
  if (first == lines.size()) return std::nullopt;

  std::size_t end = first + 2;
  std::size_t i = first;
  while (i < lines.size()) {
    if (!is_header_pair(lines, i)) {
      ++i;
      continue;
    }
    i += 2;
    end = std::max(end, i);
    while (i < lines.size() && lines[i].text.starts_with("@@")) {
      Hunk h;
      if (!parse_hunk_header(lines[i].text, h)) {
        end = i + 1;
        ++i;
        break;
      }
      ++i;
      std::size_t need_old = h.old_len, need_new = h.new_len;
      while (i < lines.size()) {
        auto t = lines[i].text;
        if (t.starts_with("\\")) {
          ++i;
          continue;
        }
        if (need_old == 0 && need_new == 0) break;
        if (is_header_pair(lines, i)) break;
        char c = t.empty() ? ' ' : t.front();
        if (c != ' ' && c != '+' && c != '-') break;
        if (c != '+' && need_old > 0) --need_old;
        if (c != '-' && need_new > 0) --need_new;
        ++i;
      }
      end = i;
    }
  }
  // Byte offsets of the selected line span.
  std::size_t begin_off = static_cast<std::size_t>(lines[first].text.data() - text.data());
  const auto& last = lines[end - 1];
  std::size_t end_off = static_cast<std::size_t>(last.text.data() - text.data()) +
                        last.text.size() + (last.eol ? 1 : 0);
  return std::string(text.substr(begin_off, end_off - begin_off));
}

}  // namespace exploitbench::diffkit
