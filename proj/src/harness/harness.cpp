// SPDX-License-Identifier: Apache-2.0
#include "exploitbench/harness.hpp"

#include <fnmatch.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cctype>
#include <fstream>
#include <thread>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "exploitbench/diffkit.hpp"
#include "exploitbench/envsynth.hpp"
#include "exploitbench/git_repo.hpp"
#include "exploitbench/util/encoding.hpp"

namespace exploitbench::harness {

namespace fs = std::filesystem;
using json = nlohmann::json;
using adjudicator::PocOutcome;
using adjudicator::Verdict;

namespace {

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

std::string image_tag(const TaskBundle& b) {
  std::string id;
  for (char c : b.cve_id) {
    id.push_back(std::isalnum(static_cast<unsigned char>(c)) ? static_cast<char>(std::tolower(c)) : '-');
  }
  std::string commit = b.baseline_commit ? b.baseline_commit->hash.substr(0, 12) : "head";
  return "exploitbench/" + id + ":" + commit;
}

}  // namespace

HarnessConfig parse_harness_config(std::string_view text, const fs::path& base_dir) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  HarnessConfig c;
  try {
    c.engine = j.value("engine", c.engine);
    if (j.contains("providers")) {
      c.providers = promptgen::parse_provider_configs(json{{"providers", j["providers"]}}.dump());
    }
    c.parallelism = j.value("parallelism", c.parallelism);
    if (j.contains("poc_timeout_s")) c.poc_timeout_s = j["poc_timeout_s"].get<int>();
    c.grace_s = j.value("grace_s", c.grace_s);
    c.results_dir = resolve(base_dir, j.value("results_dir", std::string("results")));
    c.beta = j.value("beta", c.beta);
    if (j.contains("shim_script")) c.shim_script = resolve(base_dir, j["shim_script"].get<std::string>());
    if (j.contains("base_images")) c.base_images = resolve(base_dir, j["base_images"].get<std::string>());
    c.repo_cache = j.contains("repo_cache") ? resolve(base_dir, j["repo_cache"].get<std::string>())
                                            : c.results_dir / "repos";
    if (j.contains("caps")) {
      const auto& k = j["caps"];
      c.caps.cpus = k.value("cpus", c.caps.cpus);
      c.caps.memory_bytes = k.value("memory_bytes", c.caps.memory_bytes);
      c.caps.scratch_bytes = k.value("scratch_bytes", c.caps.scratch_bytes);
      c.caps.pids_limit = k.value("pids_limit", c.caps.pids_limit);
    }
    if (j.contains("example")) {
      const auto& e = j["example"];
      promptgen::WorkedExample ex;
      ex.filename = e.at("filename").get<std::string>();
      ex.code = util::read_file(resolve(base_dir, e.at("code_file").get<std::string>()));
      ex.patch = util::read_file(resolve(base_dir, e.at("patch_file").get<std::string>()));
      c.example = std::move(ex);
    }
    c.markdown_budget = j.value("markdown_budget", c.markdown_budget);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("bad config: ") + e.what());
  }
  if (c.parallelism < 1) throw ConfigError("parallelism must be at least 1");
  if (!(c.beta > 0)) throw ConfigError("beta must be positive");
  std::error_code ec;
  fs::create_directories(c.results_dir, ec);
  if (ec || access(c.results_dir.c_str(), W_OK) != 0) {
    throw ConfigError("results directory " + c.results_dir.string() + " is not writable");
  }
  return c;
}

HarnessConfig load_harness_config(const fs::path& path) {
  std::string text;
  try {
    text = util::read_file(path);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  return parse_harness_config(text, fs::absolute(path).parent_path());
}

sandbox::SandboxOptions sandbox_options(const HarnessConfig& config) {
  sandbox::SandboxOptions o;
  o.caps = config.caps;
  o.grace = std::chrono::seconds(config.grace_s);
  if (!config.shim_script.empty()) o.shim_script = util::read_file(config.shim_script);
  return o;
}

bool glob_match(std::string_view pattern, std::string_view text) {
  return fnmatch(std::string(pattern).c_str(), std::string(text).c_str(), 0) == 0;
}

std::vector<TaskBundle> select_bundles(const fs::path& root, const std::string& glob) {
  std::vector<TaskBundle> out;
  for (auto& b : load_suite(root)) {
    auto dir = b.bundle_dir.filename().string();
    if (glob_match(glob, dir) || glob_match(glob, b.cve_id)) out.push_back(std::move(b));
  }
  return out;
}

PreparedBundle prepare_bundle(TaskBundle bundle, sandbox::Sandbox& box, const HarnessConfig& config) {
  auto repo = GitRepo::open_or_clone(resolved_project_ref(bundle), config.repo_cache);
  enrich_bundle(bundle, repo);
  auto problems = check_bundle(bundle, repo);
  if (!problems.empty()) throw std::runtime_error(problems.front());
  if (config.poc_timeout_s) bundle.poc.timeout_s = *config.poc_timeout_s;

  PreparedBundle p;
  p.baseline_tree = repo.export_tree(bundle.baseline_commit->hash);
  auto source = envsynth::detect_dependency_source(p.baseline_tree);
  auto deps = envsynth::extract_dependencies(source, p.baseline_tree);
  for (const auto& w : deps.warnings) spdlog::warn("{}: {}", bundle.cve_id, w);
  auto images = config.base_images ? envsynth::BaseImageTable::from_json_file(*config.base_images)
                                   : envsynth::BaseImageTable();
  auto spec = envsynth::generate_build_spec(bundle, source, deps, images);
  p.image = box.build_image_tar(envsynth::build_context_tar(spec, p.baseline_tree), image_tag(bundle));
  p.payload = sandbox::make_poc_payload(bundle);
  p.bundle = std::move(bundle);
  return p;
}

ValidationResult validate_prepared(const PreparedBundle& prepared, sandbox::Sandbox& box,
                                   PocOutcome* baseline_out) {
  ValidationResult r;
  r.cve_id = prepared.bundle.cve_id;
  sandbox::ContainerPair pair;
  PocOutcome outcome;
  try {
    pair = box.provision_pair(prepared.image, std::nullopt);
    auto run = box.run_differential(pair, prepared.payload);
    outcome = adjudicator::classify_outcome(run.baseline_record, prepared.bundle.expectation);
  } catch (const std::exception& e) {
    outcome = adjudicator::execution_error(e.what());
  }
  box.teardown(pair);
  r.passed = outcome.succeeded();
  r.detail = r.passed ? "exploit succeeded on baseline"
                      : std::string(adjudicator::to_string(outcome.value)) +
                            (outcome.note.empty() ? "" : ": " + outcome.note);
  if (baseline_out) *baseline_out = outcome;
  return r;
}

std::vector<ValidationResult> validate_bundles(const std::vector<TaskBundle>& bundles,
                                               sandbox::Sandbox& box, const HarnessConfig& config) {
  std::vector<ValidationResult> out(bundles.size());
  parallel_for(bundles.size(), config.parallelism, [&](std::size_t i) {
    try {
      auto p = prepare_bundle(bundles[i], box, config);
      out[i] = validate_prepared(p, box);
    } catch (const std::exception& e) {
      out[i] = {bundles[i].cve_id, false, std::string("BundleInvalid: ") + e.what()};
    }
  });
  return out;
}

AttemptLogWriter::AttemptLogWriter(fs::path path) : path_(std::move(path)) {
  if (!fs::exists(path_)) return;
  for (const auto& e : scoreboard::load_log(path_).entries) {
    done_.insert({e.bundle_id, e.model, e.variant});
  }
  // A torn final line would otherwise glue onto the next append.
  auto text = util::read_file(path_);
  if (!text.empty() && text.back() != '\n') {
    auto keep = text.rfind('\n');
    util::write_file(path_, keep == std::string::npos ? "" : text.substr(0, keep + 1));
  }
}

bool AttemptLogWriter::completed(const Triple& t) const {
  std::lock_guard lock(mu_);
  return done_.count(t) > 0;
}

void AttemptLogWriter::append(const scoreboard::AttemptEntry& entry) {
  std::lock_guard lock(mu_);
  if (!done_.insert({entry.bundle_id, entry.model, entry.variant}).second) return;
  if (path_.has_parent_path()) fs::create_directories(path_.parent_path());
  std::ofstream out(path_, std::ios::binary | std::ios::app);
  out << scoreboard::serialize_entry(entry) << '\n';
  out.flush();
  if (!out) throw std::runtime_error("cannot append to " + path_.string());
}

std::size_t AttemptLogWriter::size() const {
  std::lock_guard lock(mu_);
  return done_.size();
}

promptgen::PromptRequest prompt_request(const PreparedBundle& prepared, promptgen::Variant variant,
                                        const std::optional<promptgen::WorkedExample>& example) {
  promptgen::PromptRequest req;
  req.variant = variant;
  for (const auto& path : prepared.bundle.vulnerable_files) {
    auto it = prepared.baseline_tree.find(path);
    if (it == prepared.baseline_tree.end()) {
      throw std::runtime_error(path + " is not in the baseline tree");
    }
    req.files.push_back({path, it->second});
  }
  if (variant == promptgen::Variant::WithVulnType) req.vuln_type = prepared.bundle.vuln_type;
  if (variant == promptgen::Variant::WithExample) req.example = example;
  return req;
}

scoreboard::AttemptEntry run_attempt(const PreparedBundle& prepared, const PocOutcome& baseline,
                                     promptgen::ModelClient& client, promptgen::Variant variant,
                                     sandbox::Sandbox& box, const HarnessConfig& config) {
  const auto& bundle = prepared.bundle;
  scoreboard::AttemptEntry e;
  e.bundle_id = bundle.cve_id;
  e.model = client.name();
  e.variant = std::string(promptgen::to_string(variant));
  e.difficulty = bundle.difficulty;
  if (!baseline.succeeded()) {
    // Nothing to repair; the model is not asked.
    e.verdict = Verdict::BundleInvalid;
    e.detail = "baseline " + std::string(adjudicator::to_string(baseline.value));
    return e;
  }

  auto prompt = promptgen::build_prompt(prompt_request(prepared, variant, config.example));
  auto answer = client.query(prompt, {bundle.cve_id, e.variant});
  auto parsed = promptgen::parse_response(answer);

  adjudicator::AttemptVerdict verdict;
  std::set<std::string> targets;
  if (parsed.outcome == promptgen::ParsedResponse::Outcome::Abstained) {
    verdict = adjudicator::differential_verdict(baseline, std::nullopt, adjudicator::PatchState::abstain());
    e.detail = "abstained";
  } else {
    targets = diffkit::scan_target_paths(parsed.patch_text);
    auto applied = diffkit::apply_text(parsed.patch_text, prepared.baseline_tree);
    auto state = adjudicator::PatchState::from(applied);
    if (!applied.applied()) {
      verdict = adjudicator::differential_verdict(baseline, std::nullopt, state);
      e.detail = parsed.outcome == promptgen::ParsedResponse::Outcome::Malformed
                     ? "malformed response: " + parsed.reason
                     : "patch did not apply: " + applied.detail;
    } else {
      sandbox::ContainerPair pair;
      PocOutcome fresh_baseline = baseline;
      std::optional<PocOutcome> patched;
      try {
        pair = box.provision_pair(prepared.image, applied);
        auto run = box.run_differential(pair, prepared.payload);
        fresh_baseline = adjudicator::classify_outcome(run.baseline_record, bundle.expectation);
        patched = adjudicator::classify_outcome(run.patched_record, bundle.expectation);
      } catch (const std::exception& ex) {
        patched = adjudicator::execution_error(ex.what());
      }
      box.teardown(pair);
      verdict = adjudicator::differential_verdict(fresh_baseline, patched, state);
      if (patched) e.detail = std::string(adjudicator::to_string(patched->value));
      if (patched && !patched->note.empty()) e.detail += ": " + patched->note;
    }
  }
  e.apply_tier = verdict.tier;
  e.verdict = verdict.value;
  e.infrastructure_flag = verdict.infrastructure_flag;
  if (verdict.value != Verdict::BundleInvalid) {
    e.failure_class = adjudicator::classify_failure(verdict, targets, bundle.vulnerable_files);
  }
  return e;
}

int EvaluateSummary::exit_code() const {
  if (!errors.empty()) return kExitInfrastructure;
  return repaired == attempted && flagged == 0 ? kExitOk : kExitFindings;
}

EvaluateSummary evaluate(const std::vector<TaskBundle>& bundles, const std::vector<NamedClient>& clients,
                         const std::vector<promptgen::Variant>& variants, sandbox::Sandbox& box,
                         const HarnessConfig& config, AttemptLogWriter& log) {
  EvaluateSummary summary;
  std::mutex mu;

  // Bundles are prepared and baselined once, then shared by every attempt.
  struct Ready {
    PreparedBundle prepared;
    PocOutcome baseline;
  };
  std::vector<std::optional<Ready>> ready(bundles.size());
  parallel_for(bundles.size(), config.parallelism, [&](std::size_t i) {
    const auto& b = bundles[i];
    bool pending = false;
    for (const auto& c : clients) {
      for (auto v : variants) {
        pending |= !log.completed({b.cve_id, c.model, std::string(promptgen::to_string(v))});
      }
    }
    if (!pending) return;
    try {
      Ready r{prepare_bundle(b, box, config), {}};
      auto check = validate_prepared(r.prepared, box, &r.baseline);
      if (r.baseline.value == PocOutcome::Value::ExecutionError) {
        throw std::runtime_error("baseline run failed: " + r.baseline.note);
      }
      if (!check.passed) spdlog::warn("{}: baseline {}", b.cve_id, check.detail);
      ready[i] = std::move(r);
    } catch (const std::exception& e) {
      std::lock_guard lock(mu);
      summary.errors.push_back(b.cve_id + ": " + e.what());
    }
  });

  struct Task {
    std::size_t bundle;
    std::size_t client;
    promptgen::Variant variant;
  };
  std::vector<Task> tasks;
  for (std::size_t i = 0; i < bundles.size(); ++i) {
    for (std::size_t c = 0; c < clients.size(); ++c) {
      for (auto v : variants) {
        if (log.completed({bundles[i].cve_id, clients[c].model, std::string(promptgen::to_string(v))})) {
          std::lock_guard lock(mu);
          ++summary.skipped;
          continue;
        }
        if (ready[i]) tasks.push_back({i, c, v});
      }
    }
  }
  parallel_for(tasks.size(), config.parallelism, [&](std::size_t k) {
    const auto& t = tasks[k];
    const auto& r = *ready[t.bundle];
    try {
      auto entry = run_attempt(r.prepared, r.baseline, *clients[t.client].client, t.variant, box, config);
      log.append(entry);
      std::lock_guard lock(mu);
      ++summary.attempted;
      if (entry.verdict == Verdict::Repaired) ++summary.repaired;
      if (entry.infrastructure_flag) ++summary.flagged;
      spdlog::info("{} {} {}: {}", entry.bundle_id, entry.model, entry.variant,
                   adjudicator::to_string(entry.verdict));
    } catch (const std::exception& e) {
      std::lock_guard lock(mu);
      summary.errors.push_back(bundles[t.bundle].cve_id + " " + clients[t.client].model + ": " + e.what());
    }
  });
  return summary;
}

scoreboard::Report score_log(const fs::path& log_path, const fs::path& out_dir, double beta) {
  auto report = scoreboard::render_report(scoreboard::load_log(log_path), beta);
  fs::create_directories(out_dir);
  util::write_file(out_dir / "scoreboard.json", report.json);
  util::write_file(out_dir / "scoreboard.md", report.markdown);
  return report;
}

MineSummary mine_directory(const fs::path& pages_dir, promptgen::ModelClient& client,
                           const fs::path& ledger_path, int parallelism, std::size_t budget_chars) {
  auto pages = pocminer::load_page_directory(pages_dir);
  std::vector<pocminer::LedgerRecord> records(pages.size());
  parallel_for(pages.size(), parallelism,
               [&](std::size_t i) { records[i] = pocminer::mine_page(pages[i], client, budget_chars); });
  MineSummary s;
  std::string out;
  for (const auto& r : records) {
    ++s.pages;
    if (r.label) {
      ++s.by_label[std::string(pocminer::to_string(*r.label))];
    } else {
      ++s.failed;
    }
    out += pocminer::serialize_ledger_record(r) + "\n";
  }
  util::write_file(ledger_path, out);
  return s;
}

void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
  std::size_t count = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(workers, 1)));
  if (count <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < count; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace exploitbench::harness
