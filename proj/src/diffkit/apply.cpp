// SPDX-License-Identifier: Apache-2.0
#include <algorithm>

#include "exploitbench/diffkit.hpp"
#include "lines.hpp"

namespace exploitbench::diffkit {

using detail::split_lines;
using detail::TextLine;

std::string_view to_string(ApplyStatus status) {
  switch (status) {
    case ApplyStatus::Clean: return "Clean";
    case ApplyStatus::Fuzzy: return "Fuzzy";
    case ApplyStatus::Failed: return "Failed";
  }
  return "?";
}

std::string_view to_string(FailureReason reason) {
  switch (reason) {
    case FailureReason::PathMissing: return "PathMissing";
    case FailureReason::ContextMismatch: return "ContextMismatch";
    case FailureReason::AlreadyApplied: return "AlreadyApplied";
    case FailureReason::MalformedHeader: return "MalformedHeader";
  }
  return "?";
}

namespace {

enum class Mode { Strict, Fuzzy };

struct Shape {
  std::vector<const HunkLine*> old_side;
  std::vector<const HunkLine*> new_side;
  long prefix_ctx = 0;
  long suffix_ctx = 0;
  bool has_changes = false;
};

Shape shape_of(const Hunk& h) {
  Shape s;
  for (const auto& l : h.lines) {
    if (l.tag != LineTag::Add) s.old_side.push_back(&l);
    if (l.tag != LineTag::Del) s.new_side.push_back(&l);
    if (l.tag != LineTag::Context) s.has_changes = true;
  }
  for (const auto& l : h.lines) {
    if (l.tag != LineTag::Context) break;
    ++s.prefix_ctx;
  }
  for (auto it = h.lines.rbegin(); it != h.lines.rend(); ++it) {
    if (it->tag != LineTag::Context) break;
    ++s.suffix_ctx;
  }
  return s;
}

Hunk reversed(const Hunk& h) {
  Hunk r = h;
  std::swap(r.old_start, r.new_start);
  std::swap(r.old_len, r.new_len);
  for (auto& l : r.lines) {
    if (l.tag == LineTag::Add) {
      l.tag = LineTag::Del;
    } else if (l.tag == LineTag::Del) {
      l.tag = LineTag::Add;
    }
  }
  return r;
}

long declared_position(const Hunk& h) {
  if (h.old_len == 0) return static_cast<long>(h.old_start);
  return h.old_start == 0 ? 0 : static_cast<long>(h.old_start) - 1;
}

bool same(const TextLine& f, const HunkLine& p) {
  return f.eol == p.eol && f.text == p.text;
}

// Compares pattern lines [prefix_skip, size - suffix_skip) against the file
// with the pattern's first line placed at `pos`.
bool matches_at(const std::vector<TextLine>& file,
                const std::vector<const HunkLine*>& pattern, long pos,
                long prefix_skip, long suffix_skip) {
  const long n = static_cast<long>(file.size());
  const long p = static_cast<long>(pattern.size());
  if (pos < 0) return false;
  for (long i = prefix_skip; i < p - suffix_skip; ++i) {
    long idx = pos + i;
    if (idx >= n) return false;
    if (!same(file[static_cast<std::size_t>(idx)], *pattern[static_cast<std::size_t>(i)])) {
      return false;
    }
  }
  return true;
}

// Mirrors the search of GNU patch's locate_hunk for one fuzz level.
std::optional<long> locate(const std::vector<TextLine>& file, const Shape& s,
                           const Hunk& h, long first_guess, long last_frozen,
                           long fuzz, bool search) {
  const long n = static_cast<long>(file.size());
  const long pat = static_cast<long>(s.old_side.size());
  const long context = std::max(s.prefix_ctx, s.suffix_ctx);
  long prefix_fuzz = fuzz + s.prefix_ctx - context;
  long suffix_fuzz = fuzz + s.suffix_ctx - context;

  if (pat == 0) {
    if (first_guess >= last_frozen && first_guess <= n) return first_guess;
    return std::nullopt;
  }

  const long max_where = n - (pat - suffix_fuzz);
  const long min_where = last_frozen;
  const long max_pos_offset = search ? max_where - first_guess : 0;
  const long max_neg_offset =
      search ? std::min(first_guess - min_where, first_guess) : 0;

  if (prefix_fuzz < 0 && h.old_start <= 1) {
    // Short leading context at the top of the file: only line 1 can match.
    if (suffix_fuzz < 0 && (pat != n || s.prefix_ctx < last_frozen)) {
      return std::nullopt;
    }
    const long offset = -first_guess;
    if (last_frozen <= s.prefix_ctx && offset <= max_pos_offset &&
        (search || offset == 0) &&
        matches_at(file, s.old_side, 0, 0, std::max(suffix_fuzz, 0L))) {
      return 0;
    }
    return std::nullopt;
  }
  prefix_fuzz = std::max(prefix_fuzz, 0L);

  if (suffix_fuzz < 0) {
    // Short trailing context: the hunk must end at end of file.
    const long pos = n - pat;
    if (first_guess - pos <= max_neg_offset && (search || pos == first_guess) &&
        matches_at(file, s.old_side, pos, prefix_fuzz, 0)) {
      return pos;
    }
    return std::nullopt;
  }

  const long max_offset = std::max(max_pos_offset, max_neg_offset);
  for (long offset = 0; offset <= max_offset; ++offset) {
    if (offset <= max_pos_offset &&
        matches_at(file, s.old_side, first_guess + offset, prefix_fuzz, suffix_fuzz)) {
      return first_guess + offset;
    }
    if (offset > 0 && offset <= max_neg_offset &&
        matches_at(file, s.old_side, first_guess - offset, prefix_fuzz, suffix_fuzz)) {
      return first_guess - offset;
    }
  }
  return std::nullopt;
}

bool looks_already_applied(const std::vector<TextLine>& file, const Shape& s,
                           long from) {
  if (!s.has_changes || s.new_side.empty()) return false;
  const long n = static_cast<long>(file.size());
  const long p = static_cast<long>(s.new_side.size());
  for (long pos = std::max(from, 0L); pos + p <= n; ++pos) {
    if (matches_at(file, s.new_side, pos, 0, 0)) return true;
  }
  return false;
}

void append_line(std::string& out, std::string_view text, bool eol) {
  out.append(text);
  if (eol) out.push_back('\n');
}

struct FileResult {
  bool ok = false;
  FailureReason reason = FailureReason::ContextMismatch;
  std::string detail;
  std::string content;
  std::vector<HunkPlacement> placements;
};

FileResult apply_hunks(const FileDiff& fd, const std::string& display_path,
                       std::string_view source, Mode mode, int max_fuzz) {
  FileResult r;
  auto file = split_lines(source);
  const long n = static_cast<long>(file.size());
  long last_frozen = 0;
  long in_offset = 0;

  for (std::size_t hi = 0; hi < fd.hunks.size(); ++hi) {
    const auto& h = fd.hunks[hi];
    const auto s = shape_of(h);
    const long declared = declared_position(h);
    std::optional<long> where;
    int used_fuzz = 0;

    if (mode == Mode::Strict) {
      where = locate(file, s, h, declared, last_frozen, 0, false);
    } else {
      const long context = std::max(s.prefix_ctx, s.suffix_ctx);
      const long top = std::min<long>(max_fuzz, context);
      for (long fuzz = 0; fuzz <= top && !where; ++fuzz) {
        where = locate(file, s, h, declared + in_offset, last_frozen, fuzz, true);
        if (where) {
          used_fuzz = static_cast<int>(fuzz);
        } else if (hi == 0 && s.has_changes) {
          // A first hunk that only fits backwards means the patch is already
          // in the file; GNU patch -N skips the whole file then.
          const Hunk rev = reversed(h);
          const auto rs = shape_of(rev);
          if (locate(file, rs, rev, declared_position(rev) + in_offset,
                     last_frozen, fuzz, true)) {
            r.reason = FailureReason::AlreadyApplied;
            r.detail = display_path + " hunk #1 is already applied";
            return r;
          }
        }
      }
    }

    if (!where) {
      r.reason = looks_already_applied(file, s, last_frozen)
                     ? FailureReason::AlreadyApplied
                     : FailureReason::ContextMismatch;
      r.detail = display_path + " hunk #" + std::to_string(hi + 1);
      return r;
    }

    in_offset = *where - declared;
    r.placements.push_back({display_path, hi, in_offset, used_fuzz});

    for (long i = last_frozen; i < *where && i < n; ++i) {
      append_line(r.content, file[static_cast<std::size_t>(i)].text,
                  file[static_cast<std::size_t>(i)].eol);
    }
    // Only lines up to the last change are consumed; trailing context stays
    // available to the next hunk, as in GNU patch.
    std::size_t stop = 0;
    for (std::size_t i = 0; i < h.lines.size(); ++i) {
      if (h.lines[i].tag != LineTag::Context) stop = i + 1;
    }
    long idx = *where;
    for (std::size_t i = 0; i < stop; ++i) {
      const auto& l = h.lines[i];
      switch (l.tag) {
        case LineTag::Context:
          if (idx < n) {
            append_line(r.content, file[static_cast<std::size_t>(idx)].text,
                        file[static_cast<std::size_t>(idx)].eol);
          }
          ++idx;
          break;
        case LineTag::Del:
          ++idx;
          break;
        case LineTag::Add:
          append_line(r.content, l.text, l.eol);
          break;
      }
    }
    last_frozen = std::max(last_frozen, std::min(idx, n));
  }
  for (long i = last_frozen; i < n; ++i) {
    append_line(r.content, file[static_cast<std::size_t>(i)].text,
                file[static_cast<std::size_t>(i)].eol);
  }
  r.ok = true;
  return r;
}

std::string normalize(const std::string& p, bool strip) {
  if (p == kNullPath) return p;
  std::string out = strip && p.size() > 2 ? p.substr(2) : p;
  while (out.starts_with("./")) out.erase(0, 2);
  return out;
}

bool uses_ab(const PatchSet& patch) {
  bool any = false;
  for (const auto& fd : patch.files) {
    if (fd.old_path != kNullPath) {
      if (!fd.old_path.starts_with("a/")) return false;
      any = true;
    }
    if (fd.new_path != kNullPath) {
      if (!fd.new_path.starts_with("b/")) return false;
      any = true;
    }
  }
  return any;
}

ApplyOutcome run(const PatchSet& patch, const FileTree& tree, Mode mode,
                 int max_fuzz) {
  ApplyOutcome out;
  const bool strip = uses_ab(patch);
  auto fail = [&](FailureReason reason, std::string detail) {
    ApplyOutcome f;
    f.status = ApplyStatus::Failed;
    f.reason = reason;
    f.detail = std::move(detail);
    return f;
  };

  for (const auto& fd : patch.files) {
    const auto old_p = normalize(fd.old_path, strip);
    const auto new_p = normalize(fd.new_path, strip);
    std::string source;
    std::string display = fd.is_deletion() ? old_p : new_p;

    if (fd.is_creation()) {
      auto it = tree.find(new_p);
      if (it != tree.end() && !it->second.empty()) {
        auto probe = apply_hunks(fd, display, "", mode, max_fuzz);
        bool same_content = probe.ok && probe.content == it->second;
        return fail(same_content ? FailureReason::AlreadyApplied
                                 : FailureReason::ContextMismatch,
                    new_p + " already exists");
      }
    } else {
      auto it = tree.find(old_p);
      if (it == tree.end()) it = tree.find(new_p);
      if (it == tree.end()) {
        return fail(FailureReason::PathMissing, old_p + " not found");
      }
      source = it->second;
    }

    auto fr = apply_hunks(fd, display, source, mode, max_fuzz);
    if (!fr.ok) return fail(fr.reason, fr.detail);

    if (fd.is_deletion()) {
      if (!fr.content.empty()) {
        return fail(FailureReason::ContextMismatch,
                    old_p + " has content beyond what the deletion removes");
      }
      out.deleted_files.insert(old_p);
      out.result_files.erase(old_p);
    } else {
      out.result_files[new_p] = std::move(fr.content);
      out.deleted_files.erase(new_p);
      if (!fd.is_creation() && old_p != new_p && tree.count(old_p) > 0) {
        out.deleted_files.insert(old_p);
      }
    }
    out.per_hunk.insert(out.per_hunk.end(), fr.placements.begin(),
                        fr.placements.end());
  }

  bool displaced = std::any_of(out.per_hunk.begin(), out.per_hunk.end(),
                               [](const HunkPlacement& p) {
                                 return p.offset != 0 || p.fuzz != 0;
                               });
  out.status = displaced ? ApplyStatus::Fuzzy : ApplyStatus::Clean;
  return out;
}

}  // namespace

ApplyOutcome apply_strict(const PatchSet& patch, const FileTree& tree) {
  return run(patch, tree, Mode::Strict, 0);
}

ApplyOutcome apply_fuzzy(const PatchSet& patch, const FileTree& tree,
                         int max_fuzz) {
  if (max_fuzz < 0 || max_fuzz > kMaxFuzz) {
    throw std::invalid_argument("max_fuzz must be within 0..2");
  }
  return run(patch, tree, Mode::Fuzzy, max_fuzz);
}

ApplyOutcome apply_two_stage(const PatchSet& patch, const FileTree& tree,
                             int max_fuzz) {
  auto strict = apply_strict(patch, tree);
  if (strict.applied()) return strict;
  auto fuzzy = apply_fuzzy(patch, tree, max_fuzz);
  if (fuzzy.applied()) return fuzzy;
  return strict;
}

ApplyOutcome apply_text(std::string_view patch_text, const FileTree& tree,
                        int max_fuzz) {
  PatchSet patch;
  try {
    patch = parse_patch(patch_text);
  } catch (const PatchParseError& e) {
    ApplyOutcome f;
    f.status = ApplyStatus::Failed;
    f.reason = FailureReason::MalformedHeader;
    f.detail = e.what();
    return f;
  }
  return apply_two_stage(patch, tree, max_fuzz);
}

}  // namespace exploitbench::diffkit
