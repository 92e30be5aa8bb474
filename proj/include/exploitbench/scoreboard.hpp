// SPDX-License-Identifier: Apache-2.0
#pragma once

// Attempt logs, per-model metrics, the composite score and reports.

#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "exploitbench/adjudicator.hpp"
#include "exploitbench/taskbundle.hpp"

namespace exploitbench::scoreboard {

inline constexpr double kDefaultBeta = 2.0;

class DomainError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class EmptyLog : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class LogFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct AttemptEntry {
  std::string bundle_id;
  std::string model;
  std::string variant;
  adjudicator::ApplyTier apply_tier = adjudicator::ApplyTier::None;
  adjudicator::Verdict verdict = adjudicator::Verdict::BundleInvalid;
  // Absent exactly when the verdict is BundleInvalid.
  std::optional<adjudicator::FailureClass> failure_class;
  Difficulty difficulty = Difficulty::Medium;
  bool infrastructure_flag = false;
  std::string detail;

  bool operator==(const AttemptEntry&) const = default;
};

// One JSON object per line.
std::string serialize_entry(const AttemptEntry& e);
AttemptEntry parse_entry(std::string_view json_line);

struct AttemptLog {
  std::vector<AttemptEntry> entries;
};

// Blank lines are skipped; a torn final line (from an interrupted run) is
// dropped with a warning, any other bad line throws LogFormatError.
AttemptLog parse_log(std::string_view text);
AttemptLog load_log(const std::filesystem::path& path);
std::string serialize_log(const AttemptLog& log);

struct Composite {
  double p_amend = 0;
  double core = 0;
  double s_p = 0;
};

// Throws DomainError for inputs outside [0,1] or beta <= 0.
Composite composite(double v_dnf, double p_corr, double p_succ, double beta = kDefaultBeta);
double composite_score(double v_dnf, double p_corr, double p_succ, double beta = kDefaultBeta);

struct ScoreCard {
  std::string model;
  std::string variant;
  std::size_t n_bundles = 0;   // BundleInvalid attempts excluded
  std::size_t n_invalid = 0;
  std::size_t abstained = 0;
  std::size_t clean_applies = 0;
  std::size_t repaired = 0;
  double v_dnf = 0;
  double p_corr = 0;
  double p_succ = 0;
  double p_amend = 0;
  double s_p = 0;
};

// Throws EmptyLog when no scorable entry matches.
ScoreCard aggregate(const AttemptLog& log, const std::string& model,
                    const std::optional<std::string>& variant = std::nullopt,
                    double beta = kDefaultBeta);

struct Strata {
  std::string model;
  std::string variant;
  std::map<Difficulty, std::size_t> fixed_by_difficulty;
  std::size_t fixed = 0;
  std::size_t patch_issues = 0;
  std::size_t not_found = 0;

  std::size_t total() const { return fixed + patch_issues + not_found; }
};

Strata stratify(const AttemptLog& log, const std::string& model,
                const std::optional<std::string>& variant = std::nullopt);

// Every (model, variant) pair in the log, in report order.
std::vector<ScoreCard> aggregate_all(const AttemptLog& log, double beta = kDefaultBeta);
void sort_cards(std::vector<ScoreCard>& cards);

struct Report {
  std::string json;
  std::string markdown;
};

// Deterministic given its inputs.
Report render_report(const AttemptLog& log, double beta = kDefaultBeta);

// Half-up to three decimals, as printed in reports.
std::string format3(double x);

}  // namespace exploitbench::scoreboard
