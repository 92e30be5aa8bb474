// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cctype>
#include <fstream>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "exploitbench/pocminer.hpp"
#include "exploitbench/util/encoding.hpp"
#include "exploitbench/util/file_tree.hpp"

namespace exploitbench::pocminer {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr std::string_view kPromptHead =
    "You are a security analyst reviewing a web page that was referenced by a vulnerability "
    "advisory. Decide how much proof-of-concept (PoC) exploit information the page provides.\n"
    "\n"
    "Classify the page into exactly one of the following three categories:\n"
    "\n"
    "1. Executable: Contains complete, directly runnable code sufficient to reproduce the "
    "vulnerability.\n"
    "2. Descriptive: Lacks a complete script but provides a detailed natural language description "
    "of the exploit mechanism, often with partial code snippets, from which a full PoC could be "
    "constructed.\n"
    "3. Brief: Offers only a high-level summary of the vulnerability, without any actionable "
    "exploitation details or relevant code.\n"
    "\n"
    "Start your answer with the category name on its own line, then give a short justification.\n"
    "\n"
    "<PAGE>\n";

constexpr std::string_view kPromptTail = "\n</PAGE>\n";

constexpr std::string_view kReprompt =
    "\n\nYour previous answer did not name a category. Reply with one word: "
    "Executable, Descriptive or Brief.";

constexpr std::pair<std::string_view, PocClass> kLabels[] = {
    {"executable", PocClass::Executable},
    {"descriptive", PocClass::Descriptive},
    {"brief", PocClass::Brief},
};

bool word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

}  // namespace

std::string_view to_string(PocClass c) {
  switch (c) {
    case PocClass::Executable: return "Executable";
    case PocClass::Descriptive: return "Descriptive";
    case PocClass::Brief: return "Brief";
  }
  return "?";
}

std::string build_classification_prompt(std::string_view markdown) {
  std::string p(kPromptHead);
  p += markdown;
  p += kPromptTail;
  return p;
}

std::optional<PocClass> extract_label(std::string_view answer) {
  std::string lower(answer);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  std::size_t best = std::string::npos;
  std::optional<PocClass> found;
  for (const auto& [word, label] : kLabels) {
    for (auto pos = lower.find(word); pos != std::string::npos; pos = lower.find(word, pos + 1)) {
      bool left = pos == 0 || !word_char(lower[pos - 1]);
      bool right = pos + word.size() == lower.size() || !word_char(lower[pos + word.size()]);
      if (left && right) {
        if (pos < best) {
          best = pos;
          found = label;
        }
        break;
      }
    }
  }
  return found;
}

Classification classify_page(std::string_view markdown, promptgen::ModelClient& client,
                             const std::string& page_id, std::size_t budget_chars) {
  Classification out;
  std::string page(markdown);
  if (page.size() > budget_chars) {
    spdlog::warn("page {} is {} chars, keeping the first {}", page_id, page.size(), budget_chars);
    page.resize(budget_chars);
    page += kTruncationMarker;
    out.truncated = true;
  }
  auto prompt = build_classification_prompt(page);
  promptgen::QueryContext ctx{page_id, "classify"};

  auto answer = client.query(prompt, ctx);
  out.attempts = 1;
  auto label = extract_label(answer);
  if (!label) {
    auto retry = prompt + "\n\nPrevious answer:\n" + answer + std::string(kReprompt);
    auto second = client.query(retry, ctx);
    out.attempts = 2;
    label = extract_label(second);
    answer += "\n\n" + second;
    if (!label) throw LabelUnparseable("no category named in the answer for " + page_id);
  }
  out.label = *label;
  out.rationale = std::move(answer);
  return out;
}

std::vector<PageDocument> load_page_directory(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw std::runtime_error("not a directory: " + dir.string());
  std::vector<fs::path> pages;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".html") pages.push_back(e.path());
  }
  std::sort(pages.begin(), pages.end());
  std::vector<PageDocument> out;
  for (const auto& html_path : pages) {
    auto manifest = html_path;
    manifest.replace_extension(".json");
    if (!fs::exists(manifest)) {
      throw std::runtime_error("missing manifest " + manifest.filename().string());
    }
    auto meta = json::parse(util::read_file(manifest));
    PageDocument doc;
    doc.url = meta.at("url").get<std::string>();
    doc.fetched_at = meta.value("fetched_at", "");
    doc.html = util::read_file(html_path);
    if (doc.html.empty()) throw std::runtime_error("empty page " + html_path.filename().string());
    out.push_back(std::move(doc));
  }
  return out;
}

std::string serialize_ledger_record(const LedgerRecord& r) {
  json j{{"url", r.url},
         {"label", r.label ? json(std::string(to_string(*r.label))) : json(nullptr)},
         {"rationale_sha256", r.rationale_sha256},
         {"markdown_length", r.markdown_length},
         {"fallback", r.fallback},
         {"truncated", r.truncated}};
  if (!r.error.empty()) j["error"] = r.error;
  return j.dump();
}

LedgerRecord mine_page(const PageDocument& doc, promptgen::ModelClient& client,
                       std::size_t budget_chars) {
  LedgerRecord rec;
  rec.url = doc.url;
  auto md = convert_page(doc);
  if (md.fallback) spdlog::warn("{}: {}; using plain text", doc.url, md.warning);
  rec.fallback = md.fallback;
  rec.markdown_length = md.markdown.size();
  try {
    auto c = classify_page(md.markdown, client, doc.url, budget_chars);
    rec.label = c.label;
    rec.truncated = c.truncated;
    rec.rationale_sha256 = util::sha256_hex(c.rationale);
  } catch (const std::exception& e) {
    rec.error = e.what();
  }
  return rec;
}

}  // namespace exploitbench::pocminer
