// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "exploitbench/git_repo.hpp"

namespace exploitbench {

class BundleError : public std::runtime_error {
 public:
  enum class Kind {
    ManifestSyntax,
    ManifestSchema,
    ExpectationInvalid,
    DuplicateCve,
    CommitNotFound,
    RootCommit,
    EmptyGroundTruth,
  };

  BundleError(Kind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

std::string_view to_string(BundleError::Kind kind);

enum class Difficulty { Easy, Medium, Hard };

std::string_view to_string(Difficulty d);
std::optional<Difficulty> parse_difficulty(std::string_view s);

struct CommitRef {
  std::string hash;

  bool operator==(const CommitRef&) const = default;
};

// Lowercases and checks the 7..40 hex rule.
std::optional<CommitRef> make_commit_ref(std::string_view text);

struct PocSpec {
  // Bundle-relative unless in_repo is set, in which case it names a file in
  // the project tree at the baseline commit.
  std::string entrypoint;
  bool in_repo = false;
  std::vector<std::string> aux_files;
  std::vector<std::string> deps;
  int timeout_s = 60;

  bool operator==(const PocSpec&) const = default;
};

struct Matcher {
  enum class Kind { ExitCode, StdoutRegex, StderrRegex, TimeoutExceeded, NonzeroExit };

  Kind kind = Kind::ExitCode;
  int exit_code = 0;
  std::string pattern;
  bool flag = true;  // expected value for TimeoutExceeded / NonzeroExit

  bool operator==(const Matcher&) const = default;
};

struct ExpectationSpec {
  std::vector<Matcher> matchers;

  bool operator==(const ExpectationSpec&) const = default;
};

struct RuntimeSpec {
  std::string python = "3.10";
  std::vector<std::string> system_packages;
  // The PoC normally runs with networking cut; some exploits need a local
  // listener or an outbound request and opt back in here.
  bool network = false;

  bool operator==(const RuntimeSpec&) const = default;
};

struct TaskBundle {
  std::string cve_id;
  std::string project_ref;
  std::vector<CommitRef> fix_commits;
  std::optional<CommitRef> baseline_commit;
  std::set<std::string> vulnerable_files;
  bool needs_derivation = false;
  PocSpec poc;
  ExpectationSpec expectation;
  Difficulty difficulty = Difficulty::Medium;
  std::string vuln_type;
  RuntimeSpec runtime;

  // Directory holding the manifest; bundle-relative paths resolve here.
  std::filesystem::path bundle_dir;

  // Semantic equality (bundle_dir excluded).
  bool same_content(const TaskBundle& other) const;
};

TaskBundle parse_manifest(std::string_view text,
                          const std::filesystem::path& bundle_dir = {});
TaskBundle load_manifest(const std::filesystem::path& path);
std::string serialize_manifest(const TaskBundle& bundle);
void save_manifest(const TaskBundle& bundle, const std::filesystem::path& path);

// Every subdirectory of `root` containing bundle.json. Rejects duplicate ids.
std::vector<TaskBundle> load_suite(const std::filesystem::path& root);

inline constexpr std::string_view kManifestName = "bundle.json";

// project_ref with relative local paths resolved against the bundle dir.
std::string resolved_project_ref(const TaskBundle& bundle);

// Drops every ref that is a strict prefix of another; survivors keep order.
// Exact duplicates collapse to their first occurrence.
std::vector<CommitRef> canonicalize_commit_refs(const std::vector<CommitRef>& refs);

// The fix commit reachable from the repository's checked-out branch. Fixes
// that exist only on other branches are kept in the bundle but skipped here.
CommitRef primary_fix_commit(const GitRepo& repo, const TaskBundle& bundle);

CommitRef resolve_baseline_commit(const GitRepo& repo, const CommitRef& fix_commit);

// True when the path is excluded from ground truth regardless of its diff.
bool is_metadata_path(std::string_view path);
// True when every changed line in a -U0 diff is a version string or pin.
bool is_version_bump_only(std::string_view diff);

std::set<std::string> derive_ground_truth_files(const GitRepo& repo,
                                                const CommitRef& fix_commit);

// Resolves hashes to full length, fills the baseline, and derives
// vulnerable_files when the manifest left them out.
void enrich_bundle(TaskBundle& bundle, const GitRepo& repo);

// Human-readable problems that loading alone cannot catch (PoC entrypoint
// missing from both bundle and baseline tree, etc). Empty means valid.
std::vector<std::string> check_bundle(const TaskBundle& bundle, const GitRepo& repo);

}  // namespace exploitbench
