// SPDX-License-Identifier: Apache-2.0
#include "support/published_tables.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "exploitbench/util/file_tree.hpp"

namespace testsupport {

using namespace exploitbench;
using adjudicator::ApplyTier;
using adjudicator::FailureClass;
using adjudicator::Verdict;

const PublishedTables& published_tables() {
  static const PublishedTables tables = [] {
    auto j = nlohmann::json::parse(
        util::read_file(std::filesystem::path(EXPLOITBENCH_FIXTURE_DIR) / "published_tables.json"));
    PublishedTables t;
    t.bundle_count = j.at("bundle_count");
    for (const auto& r : j.at("overall_results")) {
      t.overall.push_back({r.at("model"), r.at("v_dnf"), r.at("p_corr"), r.at("p_succ"), r.at("s_p")});
    }
    for (const auto& r : j.at("fixed_by_difficulty")) {
      t.by_difficulty.push_back({r.at("model"), r.at("easy"), r.at("medium"), r.at("hard"), r.at("total")});
    }
    const auto& per = j.at("per_cve_outcomes");
    t.cves = per.at("cves").get<std::vector<std::string>>();
    t.outcomes = per.at("by_model").get<std::map<std::string, std::string>>();
    for (const auto& [model, totals] : per.at("column_totals").items()) {
      for (const auto& [k, v] : totals.items()) t.column_totals[model][k[0]] = v.get<std::size_t>();
    }
    for (const auto& [cve, tier] : j.at("difficulty_tiers").items()) {
      t.tiers[cve] = *parse_difficulty(tier.get<std::string>());
    }
    return t;
  }();
  return tables;
}

scoreboard::AttemptLog log_from_rates(const OverallRow& row, std::size_t n) {
  auto count = [n](double x) { return static_cast<std::size_t>(std::lround(x * static_cast<double>(n))); };
  std::size_t abstain = count(row.v_dnf), clean = count(row.p_corr), repaired = count(row.p_succ);
  scoreboard::AttemptLog log;
  for (std::size_t i = 0; i < n; ++i) {
    scoreboard::AttemptEntry e;
    e.bundle_id = "B" + std::to_string(i);
    e.model = row.model;
    e.variant = "Base";
    if (i < repaired) {
      e.verdict = Verdict::Repaired;
      e.failure_class = FailureClass::Fixed;
      e.apply_tier = i < clean ? ApplyTier::Clean : ApplyTier::Fuzzy;
    } else if (i < repaired + abstain) {
      e.verdict = Verdict::Abstained;
      e.failure_class = FailureClass::NotFound;
    } else {
      std::size_t cleans_left = clean > repaired ? clean - repaired : 0;
      bool applies = i - repaired - abstain < cleans_left;
      e.verdict = applies ? Verdict::NotRepaired : Verdict::PatchInapplicable;
      e.apply_tier = applies ? ApplyTier::Clean : ApplyTier::None;
      e.failure_class = FailureClass::PatchIssues;
    }
    log.entries.push_back(e);
  }
  return log;
}

scoreboard::AttemptLog log_from_outcomes(const std::string& model) {
  const auto& t = published_tables();
  const auto& letters = t.outcomes.at(model);
  scoreboard::AttemptLog log;
  std::size_t misses = 0;
  for (std::size_t i = 0; i < t.cves.size(); ++i) {
    const auto& cve = t.cves[i];
    std::set<std::string> truth{"src/" + cve + ".py"};
    adjudicator::AttemptVerdict v;
    std::set<std::string> targets;
    switch (letters[i]) {
      case 'F':
        v = {Verdict::Repaired, ApplyTier::Clean};
        targets = truth;
        break;
      case 'P':
        v = {Verdict::PatchInapplicable, ApplyTier::None};
        targets = truth;
        break;
      default:
        if (misses++ % 2 == 0) {
          v = {Verdict::Abstained, ApplyTier::None};
        } else {
          v = {Verdict::NotRepaired, ApplyTier::Clean};
          targets = {"src/unrelated.py"};
        }
    }
    scoreboard::AttemptEntry e;
    e.bundle_id = cve;
    e.model = model;
    e.variant = "Base";
    e.apply_tier = v.tier;
    e.verdict = v.value;
    e.failure_class = adjudicator::classify_failure(v, targets, truth);
    e.difficulty = t.tiers.at(cve);
    log.entries.push_back(e);
  }
  return log;
}

}  // namespace testsupport
