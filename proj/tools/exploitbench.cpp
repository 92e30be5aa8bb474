// SPDX-License-Identifier: Apache-2.0
// exploitbench: validate bundles, evaluate models, score attempt logs and mine
// advisory pages. Exit 0 when everything passed, 1 on findings, 2 when the
// run itself could not be carried out.

#include <CLI11.hpp>
#include <iostream>

#include <spdlog/spdlog.h>

#include "exploitbench/harness.hpp"

namespace eb = exploitbench;
namespace hs = exploitbench::harness;
namespace fs = std::filesystem;

namespace {

struct Options {
  fs::path config = "exploitbench.json";
  fs::path bundles = "bundles";
  std::string glob = "*";
  std::string model = "*";
  std::vector<std::string> variants{"base"};
  int parallelism = 0;  // 0: from config
  fs::path log;
  fs::path out;
  fs::path pages;
  bool verbose = false;
};

hs::HarnessConfig load_config(const Options& o) {
  auto cfg = hs::load_harness_config(o.config);
  if (o.parallelism > 0) cfg.parallelism = o.parallelism;
  return cfg;
}

std::vector<hs::NamedClient> make_clients(const hs::HarnessConfig& cfg, const std::string& glob,
                                          eb::promptgen::AuditLog* audit) {
  std::vector<hs::NamedClient> out;
  for (const auto& p : cfg.providers) {
    if (!hs::glob_match(glob, p.name)) continue;
    auto provider = std::make_shared<eb::promptgen::OpenAiCompatibleProvider>(p);
    out.push_back({p.name, std::make_shared<eb::promptgen::ModelClient>(provider, p, audit)});
  }
  if (out.empty()) throw hs::ConfigError("no provider matches '" + glob + "'");
  return out;
}

std::vector<eb::promptgen::Variant> parse_variants(const std::vector<std::string>& names) {
  using eb::promptgen::Variant;
  std::vector<Variant> out;
  for (const auto& n : names) {
    if (n == "all") return {Variant::Base, Variant::WithVulnType, Variant::WithCoT, Variant::WithExample};
    auto v = eb::promptgen::parse_variant(n);
    if (!v) throw hs::ConfigError("unknown prompt variant '" + n + "'");
    out.push_back(*v);
  }
  return out;
}

int cmd_validate(const Options& o) {
  auto cfg = load_config(o);
  auto bundles = hs::select_bundles(o.bundles, o.glob);
  eb::sandbox::Sandbox box(eb::sandbox::EngineEndpoint::parse(cfg.engine), hs::sandbox_options(cfg));
  auto results = hs::validate_bundles(bundles, box, cfg);
  bool all = true;
  for (const auto& r : results) {
    std::cout << (r.passed ? "PASS " : "FAIL ") << r.cve_id;
    if (!r.passed) std::cout << " (" << r.detail << ")";
    std::cout << "\n";
    all &= r.passed;
  }
  return all ? hs::kExitOk : hs::kExitFindings;
}

int cmd_evaluate(const Options& o) {
  auto cfg = load_config(o);
  auto variants = parse_variants(o.variants);
  auto bundles = hs::select_bundles(o.bundles, o.glob);
  eb::promptgen::AuditLog audit(cfg.results_dir / "audit.jsonl");
  auto clients = make_clients(cfg, o.model, &audit);
  eb::sandbox::Sandbox box(eb::sandbox::EngineEndpoint::parse(cfg.engine), hs::sandbox_options(cfg));
  hs::AttemptLogWriter log(o.log.empty() ? cfg.log_path() : o.log);
  auto s = hs::evaluate(bundles, clients, variants, box, cfg, log);
  for (const auto& e : s.errors) std::cerr << "error: " << e << "\n";
  std::cout << "attempted " << s.attempted << ", skipped " << s.skipped << ", repaired " << s.repaired
            << ", flagged " << s.flagged << "\n";
  try {
    hs::score_log(o.log.empty() ? cfg.log_path() : o.log, cfg.results_dir, cfg.beta);
  } catch (const eb::scoreboard::EmptyLog&) {
    // Nothing scorable yet; the attempt log speaks for itself.
  }
  return s.exit_code();
}

int cmd_score(const Options& o) {
  double beta = eb::scoreboard::kDefaultBeta;
  fs::path log = o.log;
  fs::path out = o.out;
  if (fs::exists(o.config)) {
    auto cfg = load_config(o);
    beta = cfg.beta;
    if (log.empty()) log = cfg.log_path();
    if (out.empty()) out = cfg.results_dir;
  }
  if (log.empty()) throw hs::ConfigError("no attempt log given");
  if (out.empty()) out = log.parent_path().empty() ? fs::path(".") : log.parent_path();
  auto report = hs::score_log(log, out, beta);
  std::cout << report.markdown;
  return hs::kExitOk;
}

int cmd_mine(const Options& o) {
  auto cfg = load_config(o);
  eb::promptgen::AuditLog audit(cfg.results_dir / "audit.jsonl");
  auto clients = make_clients(cfg, o.model, &audit);
  auto ledger = o.out.empty() ? cfg.results_dir / "poc_ledger.jsonl" : o.out;
  auto s = hs::mine_directory(o.pages, *clients.front().client, ledger, cfg.parallelism,
                              cfg.markdown_budget);
  std::cout << s.pages << " pages";
  for (const auto& [label, n] : s.by_label) std::cout << ", " << label << " " << n;
  std::cout << ", unlabelled " << s.failed << "\n";
  return s.failed == 0 ? hs::kExitOk : hs::kExitFindings;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Exploit-validated patch evaluation harness"};
  app.require_subcommand(1);
  Options o;
  app.add_option("-c,--config", o.config, "Harness config (JSON)");
  app.add_flag("-v,--verbose", o.verbose, "Debug logging");

  auto* validate = app.add_subcommand("validate", "Check that each bundle's PoC works on the baseline");
  auto* evaluate = app.add_subcommand("evaluate", "Query models, apply their patches and adjudicate");
  auto* score = app.add_subcommand("score", "Aggregate an attempt log into scorecards");
  auto* mine = app.add_subcommand("mine", "Classify saved advisory pages by PoC content");

  for (auto* sub : {validate, evaluate}) {
    sub->add_option("-b,--bundles", o.bundles, "Bundle suite directory");
    sub->add_option("-g,--glob", o.glob, "Bundle directory or CVE id glob");
    sub->add_option("-j,--parallelism", o.parallelism, "Concurrent tasks")->check(CLI::PositiveNumber);
  }
  evaluate->add_option("-m,--model", o.model, "Provider name glob");
  evaluate->add_option("-p,--variant", o.variants, "Prompt variant(s): Base, WithVulnType, WithCoT, WithExample or all");
  evaluate->add_option("-l,--log", o.log, "Attempt log (default <results_dir>/attempts.jsonl)");
  score->add_option("-l,--log", o.log, "Attempt log");
  score->add_option("-o,--out", o.out, "Report directory");
  mine->add_option("pages", o.pages, "Directory of <name>.html + <name>.json pairs")->required();
  mine->add_option("-m,--model", o.model, "Provider name glob (first match is used)");
  mine->add_option("-o,--out", o.out, "Ledger path");
  mine->add_option("-j,--parallelism", o.parallelism, "Concurrent pages")->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(o.verbose ? spdlog::level::debug : spdlog::level::info);

  try {
    if (*validate) return cmd_validate(o);
    if (*evaluate) return cmd_evaluate(o);
    if (*score) return cmd_score(o);
    if (*mine) return cmd_mine(o);
  } catch (const eb::scoreboard::EmptyLog& e) {
    std::cerr << "empty log: " << e.what() << "\n";
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
  }
  return hs::kExitInfrastructure;
}
