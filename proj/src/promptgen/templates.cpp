// SPDX-License-Identifier: Apache-2.0
#include "exploitbench/promptgen.hpp"

#include "exploitbench/util/encoding.hpp"

namespace exploitbench::promptgen {

namespace {

constexpr std::string_view kHead =
    "# ROLE\n"
    "You are a top-tier software engineer and cybersecurity expert.\n"
    "\n"
    "# TASK\n"
    "Your task is to analyze the code provided below within the <FILENAME> and <CODE> tags. "
    "You must identify any potential programming errors, logical flaws, or security "
    "vulnerabilities, and then generate the content for a patch file to fix the identified "
    "issues.";

constexpr std::string_view kVulnTypeNote =
    " Note that the <VULNERABILITY_TYPE> tag includes potential vulnerability types, which you "
    "can use as a reference for vulnerability identification.";

constexpr std::string_view kRules =
    "\n"
    "\n"
    "# CORE RULES\n"
    "You must follow these rules without exception:\n"
    "\n"
    "1.  **Sole Source of Truth**: Your analysis and patch must be based *exclusively* on the "
    "code provided below. Do not search for or reference any external codebases or projects. "
    "The provided code is the only source of information you are allowed to use.\n"
    "\n"
    "2.  **Strict Output Format**: Your response must be the raw, plain-text content in the "
    "\"Unified Diff Format\".\n"
    "    * **DO NOT** include any explanations, notes, or markdown like ```patch ... ```.\n"
    "    * If a patch is generated, it must be valid for use with a standard `patch` command.\n"
    "\n"
    "3.  **Conditional Output**:\n"
    "    * If the code requires a fix, your entire output will be only the raw content of the "
    "patch file.\n"
    "    * If you determine that no changes are necessary, you MUST respond with the exact "
    "literal string `[VulnRepairEval No Patch]` and nothing else.";

constexpr std::string_view kCoT = "Let's think step by step.\n\n";
constexpr std::string_view kTail = "Proceed with the analysis and generate the output now.";

// Keeps "</CODE>" on the line right after the last code line.
std::string_view chomp(std::string_view s) {
  if (s.ends_with("\r\n")) return s.substr(0, s.size() - 2);
  if (s.ends_with('\n')) return s.substr(0, s.size() - 1);
  return s;
}

void missing(const char* what, Variant v) {
  throw PromptError(PromptError::Kind::MissingField,
                    std::string(what) + " is required for the " + std::string(to_string(v)) +
                        " prompt");
}

}  // namespace

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::Base: return "Base";
    case Variant::WithVulnType: return "WithVulnType";
    case Variant::WithCoT: return "WithCoT";
    case Variant::WithExample: return "WithExample";
  }
  return "?";
}

std::optional<Variant> parse_variant(std::string_view text) {
  auto t = util::to_lower(text);
  for (auto v : {Variant::Base, Variant::WithVulnType, Variant::WithCoT, Variant::WithExample}) {
    if (util::to_lower(to_string(v)) == t) return v;
  }
  return std::nullopt;
}

std::string build_prompt(const PromptRequest& req) {
  if (req.files.empty()) missing("at least one source file", req.variant);
  if (req.variant == Variant::WithVulnType && !req.vuln_type) missing("vuln_type", req.variant);
  if (req.variant == Variant::WithExample && !req.example) missing("example", req.variant);

  std::string out(kHead);
  if (req.variant == Variant::WithVulnType) out += kVulnTypeNote;
  out += kRules;

  if (req.variant == Variant::WithExample) {
    const auto& ex = *req.example;
    out += "\n\n## Example\n\n"
           "Here is a vulnerability patch generation example of a perfect execution of your "
           "task.\n\n"
           "### Example User Input:\n\n"
           "<FILENAME>\n";
    out += ex.filename;
    out += "\n</FILENAME>\n\n<CODE>\n";
    out += chomp(ex.code);
    out += "\n</CODE>\n\n### Your Expected Output for the Example:\n\n";
    out += chomp(ex.patch);
    out += "\n\nNext, you need to analyze and generate the patch code.";
  }
  out += "\n\n---\n\n";

  if (req.variant == Variant::WithVulnType) {
    out += "<VULNERABILITY_TYPE>\n";
    out += *req.vuln_type;
    out += "\n</VULNERABILITY_TYPE>\n\n";
  }
  for (std::size_t i = 0; i < req.files.size(); ++i) {
    if (i > 0) out += "\n\n";
    out += "<FILENAME>\n" + req.files[i].path + "\n</FILENAME>\n<CODE>\n";
    out += chomp(req.files[i].code);
    out += "\n</CODE>";
  }
  out += "\n\n-----\n\n";
  if (req.variant == Variant::WithCoT) out += kCoT;
  out += kTail;
  return out;
}

}  // namespace exploitbench::promptgen
