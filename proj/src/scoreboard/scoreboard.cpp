// SPDX-License-Identifier: Apache-2.0
#include "exploitbench/scoreboard.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "exploitbench/util/file_tree.hpp"

namespace exploitbench::scoreboard {

using adjudicator::ApplyTier;
using adjudicator::FailureClass;
using adjudicator::Verdict;
using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace {

bool selected(const AttemptEntry& e, const std::string& model,
              const std::optional<std::string>& variant) {
  return e.model == model && (!variant || e.variant == *variant);
}

std::string label(const std::string& model, const std::string& variant) {
  return variant.empty() ? model : model + " / " + variant;
}

}  // namespace

std::string serialize_entry(const AttemptEntry& e) {
  ordered_json j{{"bundle", e.bundle_id},
                 {"model", e.model},
                 {"variant", e.variant},
                 {"apply_tier", to_string(e.apply_tier)},
                 {"verdict", to_string(e.verdict)},
                 {"failure_class", e.failure_class ? json(to_string(*e.failure_class)) : json()},
                 {"difficulty", to_string(e.difficulty)},
                 {"infrastructure_flag", e.infrastructure_flag}};
  if (!e.detail.empty()) j["detail"] = e.detail;
  return j.dump();
}

AttemptEntry parse_entry(std::string_view json_line) {
  try {
    auto j = json::parse(json_line);
    AttemptEntry e;
    e.bundle_id = j.at("bundle").get<std::string>();
    e.model = j.at("model").get<std::string>();
    e.variant = j.value("variant", "");
    auto tier = adjudicator::parse_apply_tier(j.at("apply_tier").get<std::string>());
    auto verdict = adjudicator::parse_verdict(j.at("verdict").get<std::string>());
    auto diff = parse_difficulty(j.value("difficulty", "medium"));
    if (!tier || !verdict || !diff) throw LogFormatError("unknown enum value");
    e.apply_tier = *tier;
    e.verdict = *verdict;
    e.difficulty = *diff;
    if (j.contains("failure_class") && !j["failure_class"].is_null()) {
      e.failure_class = adjudicator::parse_failure_class(j["failure_class"].get<std::string>());
      if (!e.failure_class) throw LogFormatError("unknown failure_class");
    }
    if ((e.verdict == Verdict::BundleInvalid) != !e.failure_class) {
      throw LogFormatError("failure_class must be present unless the verdict is BundleInvalid");
    }
    e.infrastructure_flag = j.value("infrastructure_flag", false);
    e.detail = j.value("detail", "");
    return e;
  } catch (const json::exception& ex) {
    throw LogFormatError(std::string("bad attempt entry: ") + ex.what());
  }
}

AttemptLog parse_log(std::string_view text) {
  AttemptLog log;
  std::size_t pos = 0, lineno = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    bool last = nl == std::string_view::npos;
    auto line = text.substr(pos, last ? std::string_view::npos : nl - pos);
    pos = last ? text.size() : nl + 1;
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    try {
      log.entries.push_back(parse_entry(line));
    } catch (const LogFormatError& e) {
      if (last) {
        spdlog::warn("dropping torn final log line {}", lineno);
        break;
      }
      throw LogFormatError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return log;
}

AttemptLog load_log(const std::filesystem::path& path) {
  return parse_log(util::read_file(path));
}

std::string serialize_log(const AttemptLog& log) {
  std::string out;
  for (const auto& e : log.entries) out += serialize_entry(e) + "\n";
  return out;
}

Composite composite(double v_dnf, double p_corr, double p_succ, double beta) {
  for (double x : {v_dnf, p_corr, p_succ}) {
    if (!(x >= 0.0 && x <= 1.0)) throw DomainError("metric outside [0,1]");
  }
  if (!(beta > 0)) throw DomainError("beta must be positive");
  Composite c;
  c.p_amend = std::log(p_corr + 1.0);
  double b2 = beta * beta;
  double denom = b2 * c.p_amend + p_succ;
  c.core = denom == 0.0 ? 0.0 : (1.0 + b2) * c.p_amend * p_succ / denom;
  c.s_p = c.core * (1.0 - 0.5 * v_dnf);
  return c;
}

double composite_score(double v_dnf, double p_corr, double p_succ, double beta) {
  return composite(v_dnf, p_corr, p_succ, beta).s_p;
}

ScoreCard aggregate(const AttemptLog& log, const std::string& model,
                    const std::optional<std::string>& variant, double beta) {
  ScoreCard c;
  c.model = model;
  c.variant = variant.value_or("");
  for (const auto& e : log.entries) {
    if (!selected(e, model, variant)) continue;
    if (e.verdict == Verdict::BundleInvalid) {
      ++c.n_invalid;
      continue;
    }
    ++c.n_bundles;
    c.abstained += e.verdict == Verdict::Abstained;
    c.clean_applies += e.apply_tier == ApplyTier::Clean;
    c.repaired += e.verdict == Verdict::Repaired;
  }
  if (c.n_bundles == 0) {
    throw EmptyLog("no scorable attempts for " + label(model, c.variant));
  }
  double n = static_cast<double>(c.n_bundles);
  c.v_dnf = c.abstained / n;
  c.p_corr = c.clean_applies / n;
  c.p_succ = c.repaired / n;
  auto comp = composite(c.v_dnf, c.p_corr, c.p_succ, beta);
  c.p_amend = comp.p_amend;
  c.s_p = comp.s_p;
  return c;
}

Strata stratify(const AttemptLog& log, const std::string& model,
                const std::optional<std::string>& variant) {
  Strata s;
  s.model = model;
  s.variant = variant.value_or("");
  for (auto d : {Difficulty::Easy, Difficulty::Medium, Difficulty::Hard}) s.fixed_by_difficulty[d] = 0;
  for (const auto& e : log.entries) {
    if (!selected(e, model, variant) || !e.failure_class) continue;
    switch (*e.failure_class) {
      case FailureClass::Fixed:
        ++s.fixed;
        ++s.fixed_by_difficulty[e.difficulty];
        break;
      case FailureClass::PatchIssues: ++s.patch_issues; break;
      case FailureClass::NotFound: ++s.not_found; break;
    }
  }
  return s;
}

void sort_cards(std::vector<ScoreCard>& cards) {
  std::stable_sort(cards.begin(), cards.end(), [](const ScoreCard& a, const ScoreCard& b) {
    if (a.s_p != b.s_p) return a.s_p > b.s_p;
    if (a.p_succ != b.p_succ) return a.p_succ > b.p_succ;
    if (a.model != b.model) return a.model < b.model;
    return a.variant < b.variant;
  });
}

std::vector<ScoreCard> aggregate_all(const AttemptLog& log, double beta) {
  std::set<std::pair<std::string, std::string>> keys;
  for (const auto& e : log.entries) keys.insert({e.model, e.variant});
  std::vector<ScoreCard> cards;
  for (const auto& [model, variant] : keys) {
    try {
      cards.push_back(aggregate(log, model, variant, beta));
    } catch (const EmptyLog&) {
      // Only BundleInvalid attempts: nothing to score.
    }
  }
  if (cards.empty()) throw EmptyLog("attempt log has no scorable entries");
  sort_cards(cards);
  return cards;
}

std::string format3(double x) {
  double r = std::floor(x * 1000.0 + 0.5 + 1e-9) / 1000.0;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", r);
  return buf;
}

Report render_report(const AttemptLog& log, double beta) {
  auto cards = aggregate_all(log, beta);

  ordered_json doc;
  doc["beta"] = beta;
  doc["cards"] = ordered_json::array();
  doc["strata"] = ordered_json::array();
  std::string md = "# Scoreboard\n\n";
  md += "| Rank | Model | Variant | N | V_dnf | P_corr | P_succ | P_amend | S_p |\n";
  md += "|---:|---|---|---:|---:|---:|---:|---:|---:|\n";
  std::string strata_md =
      "\n## Fixed by difficulty and failure classes\n\n"
      "| Model | Variant | Easy | Medium | Hard | Fixed | Patch Issues | Not Found |\n"
      "|---|---|---:|---:|---:|---:|---:|---:|\n";

  std::size_t rank = 0;
  for (const auto& c : cards) {
    ++rank;
    doc["cards"].push_back({{"model", c.model},
                            {"variant", c.variant},
                            {"n_bundles", c.n_bundles},
                            {"n_invalid", c.n_invalid},
                            {"v_dnf", c.v_dnf},
                            {"p_corr", c.p_corr},
                            {"p_succ", c.p_succ},
                            {"p_amend", c.p_amend},
                            {"s_p", c.s_p}});
    md += "| " + std::to_string(rank) + " | " + c.model + " | " + c.variant + " | " +
          std::to_string(c.n_bundles) + " | " + format3(c.v_dnf) + " | " + format3(c.p_corr) +
          " | " + format3(c.p_succ) + " | " + format3(c.p_amend) + " | " + format3(c.s_p) + " |\n";

    auto s = stratify(log, c.model, c.variant);
    doc["strata"].push_back({{"model", s.model},
                             {"variant", s.variant},
                             {"fixed_by_difficulty",
                              {{"easy", s.fixed_by_difficulty[Difficulty::Easy]},
                               {"medium", s.fixed_by_difficulty[Difficulty::Medium]},
                               {"hard", s.fixed_by_difficulty[Difficulty::Hard]}}},
                             {"fixed", s.fixed},
                             {"patch_issues", s.patch_issues},
                             {"not_found", s.not_found}});
    strata_md += "| " + s.model + " | " + s.variant + " | " +
                 std::to_string(s.fixed_by_difficulty[Difficulty::Easy]) + " | " +
                 std::to_string(s.fixed_by_difficulty[Difficulty::Medium]) + " | " +
                 std::to_string(s.fixed_by_difficulty[Difficulty::Hard]) + " | " +
                 std::to_string(s.fixed) + " | " + std::to_string(s.patch_issues) + " | " +
                 std::to_string(s.not_found) + " |\n";
  }
  md += strata_md;

  // Per-bundle matrix, columns in report order.
  std::map<std::string, std::map<std::pair<std::string, std::string>, const AttemptEntry*>> grid;
  for (const auto& e : log.entries) grid[e.bundle_id][{e.model, e.variant}] = &e;
  auto cell = [](const AttemptEntry* e) -> std::string {
    if (!e) return ".";
    if (!e->failure_class) return "I";
    switch (*e->failure_class) {
      case FailureClass::Fixed: return "F";
      case FailureClass::PatchIssues: return "P";
      case FailureClass::NotFound: return "N";
    }
    return "?";
  };
  ordered_json columns = ordered_json::array();
  md += "\n## Outcomes per bundle\n\nF = fixed, P = patch issues, N = not found, "
        "I = bundle invalid, . = not attempted\n\n| Bundle |";
  std::string rule = "|---|";
  for (const auto& c : cards) {
    columns.push_back(label(c.model, c.variant));
    md += " " + label(c.model, c.variant) + " |";
    rule += ":---:|";
  }
  md += "\n" + rule + "\n";
  ordered_json rows = ordered_json::array();
  for (const auto& [bundle, by_model] : grid) {
    ordered_json cells = ordered_json::array();
    md += "| " + bundle + " |";
    for (const auto& c : cards) {
      auto it = by_model.find({c.model, c.variant});
      auto v = cell(it == by_model.end() ? nullptr : it->second);
      cells.push_back(v);
      md += " " + v + " |";
    }
    md += "\n";
    rows.push_back({{"bundle", bundle}, {"cells", cells}});
  }
  doc["matrix"] = {{"columns", columns}, {"rows", rows}};
  return {doc.dump(2) + "\n", md};
}

}  // namespace exploitbench::scoreboard
