// SPDX-License-Identifier: Apache-2.0
#pragma once

// Advisory pages: HTML reduced to Markdown, then labelled by how much of a
// working exploit they contain.

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "exploitbench/promptgen.hpp"

namespace exploitbench::pocminer {

struct PageDocument {
  std::string url;
  std::string html;
  std::string fetched_at;
};

class HtmlUnparseable : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Throws HtmlUnparseable on NUL bytes, markup cut off at end of input, or
// absurd nesting depth.
std::string html_to_markdown(std::string_view html);

// Tags removed, entities decoded, whitespace collapsed.
std::string strip_tags(std::string_view html);

struct MarkdownResult {
  std::string markdown;
  bool fallback = false;  // html_to_markdown failed; markdown is strip_tags output
  std::string warning;
};

MarkdownResult convert_page(const PageDocument& doc);

enum class PocClass { Executable, Descriptive, Brief };

std::string_view to_string(PocClass c);

class LabelUnparseable : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string build_classification_prompt(std::string_view markdown);
// First whole-word occurrence of a label, case-insensitive.
std::optional<PocClass> extract_label(std::string_view answer);

struct Classification {
  PocClass label = PocClass::Brief;
  std::string rationale;  // the full model answer
  bool truncated = false;
  int attempts = 0;
};

inline constexpr std::size_t kDefaultMarkdownBudget = 60000;
inline constexpr std::string_view kTruncationMarker = "\n\n[... page truncated ...]";

// Keeps the head of an over-budget page. Throws LabelUnparseable when neither
// the answer nor one reprompt names a label.
Classification classify_page(std::string_view markdown, promptgen::ModelClient& client,
                             const std::string& page_id = {},
                             std::size_t budget_chars = kDefaultMarkdownBudget);

// Pages are <name>.html files, each paired with <name>.json holding
// {"url": ..., "fetched_at": ...}. Sorted by name.
std::vector<PageDocument> load_page_directory(const std::filesystem::path& dir);

struct LedgerRecord {
  std::string url;
  std::optional<PocClass> label;
  std::string rationale_sha256;
  std::size_t markdown_length = 0;
  bool fallback = false;
  bool truncated = false;
  std::string error;
};

std::string serialize_ledger_record(const LedgerRecord& r);

// Converts and classifies one page; failures land in the record, not as
// exceptions.
LedgerRecord mine_page(const PageDocument& doc, promptgen::ModelClient& client,
                       std::size_t budget_chars = kDefaultMarkdownBudget);

}  // namespace exploitbench::pocminer
