// SPDX-License-Identifier: Apache-2.0
#pragma once

// The batch pipeline behind the command line: bundle validation, model
// evaluation with a resumable attempt log, scoring and advisory mining.

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "exploitbench/adjudicator.hpp"
#include "exploitbench/pocminer.hpp"
#include "exploitbench/promptgen.hpp"
#include "exploitbench/sandbox.hpp"
#include "exploitbench/scoreboard.hpp"
#include "exploitbench/taskbundle.hpp"

namespace exploitbench::harness {

// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFindings = 1;
inline constexpr int kExitInfrastructure = 2;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct HarnessConfig {
  std::string engine = "unix:///var/run/docker.sock";
  std::vector<promptgen::ProviderConfig> providers;
  int parallelism = 1;
  // Overrides every bundle's PoC timeout when set.
  std::optional<int> poc_timeout_s;
  int grace_s = 30;
  std::filesystem::path results_dir = "results";
  double beta = scoreboard::kDefaultBeta;
  std::filesystem::path shim_script;
  std::optional<std::filesystem::path> base_images;
  std::filesystem::path repo_cache;  // defaults to <results_dir>/repos
  sandbox::ResourceCaps caps;
  std::optional<promptgen::WorkedExample> example;
  std::size_t markdown_budget = pocminer::kDefaultMarkdownBudget;

  std::filesystem::path log_path() const { return results_dir / "attempts.jsonl"; }
};

// Relative paths inside the config resolve against base_dir.
HarnessConfig parse_harness_config(std::string_view text, const std::filesystem::path& base_dir);
HarnessConfig load_harness_config(const std::filesystem::path& path);

sandbox::SandboxOptions sandbox_options(const HarnessConfig& config);

// Bundle directories under root (or root itself) whose directory name
// matches the glob.
std::vector<TaskBundle> select_bundles(const std::filesystem::path& root,
                                       const std::string& glob = "*");
bool glob_match(std::string_view pattern, std::string_view text);

// A bundle with its baseline checkout, built image and PoC payload.
struct PreparedBundle {
  TaskBundle bundle;
  FileTree baseline_tree;
  std::string image;
  sandbox::PocPayload payload;
};

PreparedBundle prepare_bundle(TaskBundle bundle, sandbox::Sandbox& box,
                              const HarnessConfig& config);

struct ValidationResult {
  std::string cve_id;
  bool passed = false;
  std::string detail;
};

// Runs the PoC against the unpatched environment. Never throws.
ValidationResult validate_prepared(const PreparedBundle& prepared, sandbox::Sandbox& box,
                                   adjudicator::PocOutcome* baseline_out = nullptr);

std::vector<ValidationResult> validate_bundles(const std::vector<TaskBundle>& bundles,
                                               sandbox::Sandbox& box,
                                               const HarnessConfig& config);

// Appends entries to a JSONL attempt log and remembers which triples it
// already holds.
class AttemptLogWriter {
 public:
  explicit AttemptLogWriter(std::filesystem::path path);

  using Triple = std::tuple<std::string, std::string, std::string>;
  bool completed(const Triple& t) const;
  void append(const scoreboard::AttemptEntry& entry);
  std::size_t size() const;

 private:
  std::filesystem::path path_;
  mutable std::mutex mu_;
  std::set<Triple> done_;
};

// The prompt for one bundle: its vulnerable files at the baseline commit.
promptgen::PromptRequest prompt_request(const PreparedBundle& prepared,
                                        promptgen::Variant variant,
                                        const std::optional<promptgen::WorkedExample>& example);

// One (bundle, model, variant) attempt from prompt to taxonomy. Provider
// failures propagate; sandbox failures become flagged entries.
scoreboard::AttemptEntry run_attempt(const PreparedBundle& prepared,
                                     const adjudicator::PocOutcome& baseline,
                                     promptgen::ModelClient& client, promptgen::Variant variant,
                                     sandbox::Sandbox& box, const HarnessConfig& config);

struct EvaluateSummary {
  std::size_t attempted = 0;
  std::size_t skipped = 0;
  std::size_t repaired = 0;
  std::size_t flagged = 0;
  std::vector<std::string> errors;  // bundles that could not be prepared, provider failures

  int exit_code() const;
};

struct NamedClient {
  std::string model;
  std::shared_ptr<promptgen::ModelClient> client;
};

EvaluateSummary evaluate(const std::vector<TaskBundle>& bundles,
                         const std::vector<NamedClient>& clients,
                         const std::vector<promptgen::Variant>& variants, sandbox::Sandbox& box,
                         const HarnessConfig& config, AttemptLogWriter& log);

// Writes scoreboard.json and scoreboard.md into out_dir.
scoreboard::Report score_log(const std::filesystem::path& log_path,
                             const std::filesystem::path& out_dir, double beta);

struct MineSummary {
  std::size_t pages = 0;
  std::size_t failed = 0;
  std::map<std::string, std::size_t> by_label;
};

// One ledger line per page, in directory order.
MineSummary mine_directory(const std::filesystem::path& pages_dir,
                           promptgen::ModelClient& client,
                           const std::filesystem::path& ledger_path, int parallelism,
                           std::size_t budget_chars = pocminer::kDefaultMarkdownBudget);

// Runs fn(i) for i in [0, n) on up to `workers` threads.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn);

}  // namespace exploitbench::harness
