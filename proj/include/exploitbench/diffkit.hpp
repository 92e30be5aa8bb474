// SPDX-License-Identifier: Apache-2.0
#pragma once

// Unified diffs: parsing, canonical rendering, strict and fuzzy application.
//
// Application never touches the filesystem. It takes a tree of file contents
// and returns the rewritten files separately so callers decide where they go.

#include <cstddef>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "exploitbench/util/file_tree.hpp"

namespace exploitbench::diffkit {

inline constexpr std::string_view kNullPath = "/dev/null";
inline constexpr int kMaxFuzz = 2;

enum class LineTag { Context, Add, Del };

struct HunkLine {
  LineTag tag = LineTag::Context;
  std::string text;  // without the line terminator
  bool eol = true;   // false when followed by "\ No newline at end of file"

  bool operator==(const HunkLine&) const = default;
};

struct Hunk {
  std::size_t old_start = 0;
  std::size_t old_len = 0;
  std::size_t new_start = 0;
  std::size_t new_len = 0;
  std::vector<HunkLine> lines;
  // Anything after the closing "@@" (usually a function signature).
  std::string section;

  bool operator==(const Hunk&) const = default;
};

struct FileDiff {
  std::string old_path;
  std::string new_path;
  std::vector<Hunk> hunks;

  bool is_creation() const { return old_path == kNullPath; }
  bool is_deletion() const { return new_path == kNullPath; }
  bool operator==(const FileDiff&) const = default;
};

struct PatchSet {
  std::vector<FileDiff> files;

  bool operator==(const PatchSet&) const = default;
};

enum class ParseErrorKind {
  EmptyPatch,
  MalformedHunkHeader,
  DuplicateTarget,
  OverlappingHunks,
};

class PatchParseError : public std::runtime_error {
 public:
  PatchParseError(ParseErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ParseErrorKind kind() const { return kind_; }

 private:
  ParseErrorKind kind_;
};

std::string_view to_string(ParseErrorKind kind);

PatchSet parse_patch(std::string_view text);

// Canonical form: no timestamps, single-line ranges written without ",1".
std::string render_patch(const PatchSet& patch);

enum class ApplyStatus { Clean, Fuzzy, Failed };
enum class FailureReason { PathMissing, ContextMismatch, AlreadyApplied, MalformedHeader };

std::string_view to_string(ApplyStatus status);
std::string_view to_string(FailureReason reason);

struct HunkPlacement {
  std::string path;
  std::size_t hunk_index = 0;
  long offset = 0;
  int fuzz = 0;

  bool operator==(const HunkPlacement&) const = default;
};

struct ApplyOutcome {
  ApplyStatus status = ApplyStatus::Failed;
  std::vector<HunkPlacement> per_hunk;
  std::optional<FailureReason> reason;
  std::string detail;
  // Only files the patch created or modified.
  FileTree result_files;
  std::set<std::string> deleted_files;

  bool applied() const { return status != ApplyStatus::Failed; }
};

// Every hunk must match exactly at its declared position.
ApplyOutcome apply_strict(const PatchSet& patch, const FileTree& tree);

// Offset search over the whole file, then up to max_fuzz ignored edge context
// lines. Search order follows GNU patch: nearest position to the expected one
// (declared start plus the displacement of the previous hunk), forward first.
ApplyOutcome apply_fuzzy(const PatchSet& patch, const FileTree& tree,
                         int max_fuzz = kMaxFuzz);

// Strict first; fuzzy only if strict fails.
ApplyOutcome apply_two_stage(const PatchSet& patch, const FileTree& tree,
                             int max_fuzz = kMaxFuzz);

// Parses then applies; parse failures become Failed(MalformedHeader).
ApplyOutcome apply_text(std::string_view patch_text, const FileTree& tree,
                        int max_fuzz = kMaxFuzz);

// Non-null paths touched by the patch. A leading "a/" and "b/" segment is
// stripped when every header follows that convention.
std::set<std::string> target_paths(const PatchSet& patch);

// Header-only scan that survives malformed hunks.
std::set<std::string> scan_target_paths(std::string_view text);

// The span from the first "---"/"+++" header pair to the end of the last hunk
// body, or nullopt when the text has no header pair.
std::optional<std::string> extract_patch_text(std::string_view text);

// Myers line diff rendered as a unified diff with `context` lines of context.
// Returns an empty string when a and b are identical.
std::string unified_diff(std::string_view old_path, std::string_view new_path,
                         std::string_view a, std::string_view b,
                         std::size_t context = 3);

}  // namespace exploitbench::diffkit
