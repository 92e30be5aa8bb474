// SPDX-License-Identifier: Apache-2.0
#include <regex>
#include <sstream>

#include "exploitbench/taskbundle.hpp"
#include "exploitbench/util/encoding.hpp"

namespace exploitbench {

namespace {

std::vector<std::string_view> components(std::string_view path) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (start <= path.size()) {
    auto slash = path.find('/', start);
    if (slash == std::string_view::npos) slash = path.size();
    if (slash > start) out.push_back(path.substr(start, slash - start));
    start = slash + 1;
  }
  return out;
}

bool ends_with_ci(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() &&
         util::to_lower(s.substr(s.size() - suffix.size())) == suffix;
}

bool is_requirements_file(std::string_view path) {
  auto parts = components(path);
  if (parts.empty()) return false;
  auto base = util::to_lower(parts.back());
  if (base.starts_with("requirements") && (base.ends_with(".txt") || base.ends_with(".in"))) {
    return true;
  }
  return parts.size() > 1 && util::to_lower(parts[parts.size() - 2]) == "requirements" &&
         base.ends_with(".txt");
}

// Files where a pure version change is metadata but any other edit counts.
bool is_packaging_file(std::string_view path) {
  auto parts = components(path);
  if (parts.empty()) return false;
  auto base = parts.back();
  return base == "setup.cfg" || base == "setup.py" || base == "pyproject.toml" ||
         is_requirements_file(path);
}

}  // namespace

bool is_metadata_path(std::string_view path) {
  auto parts = components(path);
  if (parts.empty()) return true;
  const auto base = parts.back();
  const auto lower_base = util::to_lower(base);

  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    auto dir = util::to_lower(parts[i]);
    if (dir == "docs" || dir == "doc" || dir == "tests" || dir == "test") return true;
  }
  if (parts.size() > 1) {
    auto top = parts.front();
    if (top == ".github" || top == ".gitlab" || top == ".circleci" ||
        top == ".azure-pipelines" || top == ".buildkite") {
      return true;
    }
  }
  if (base == ".travis.yml" || base == ".gitlab-ci.yml" || base == "appveyor.yml" ||
      base == ".appveyor.yml" || base == "azure-pipelines.yml" || base == "Jenkinsfile") {
    return true;
  }
  if (lower_base.starts_with("changelog") || lower_base.starts_with("changes")) return true;
  if (ends_with_ci(base, ".md") || ends_with_ci(base, ".rst")) return true;
  if (ends_with_ci(base, ".txt") && !is_requirements_file(path)) return true;
  if (base.starts_with("test_") && base.ends_with(".py")) return true;
  if (base.ends_with("_test.py") || base == "conftest.py") return true;
  return false;
}

bool is_version_bump_only(std::string_view diff) {
  static const std::regex assignment(
      R"re(^(__version__|version|release|VERSION)\s*[:=]\s*["']?v?[0-9][\w.+\-]*["']?\s*,?\s*$)re",
      std::regex::icase);
  static const std::regex pin(
      R"re(^["']?[A-Za-z0-9][A-Za-z0-9._\-]*(\[[^\]]*\])?\s*(===|==|>=|<=|~=|!=|<|>)\s*[0-9][\w.*+\-]*)re"
      R"re((\s*,\s*(===|==|>=|<=|~=|!=|<|>)\s*[0-9][\w.*+\-]*)*\s*(;[^"']*)?["']?\s*,?\s*(#.*)?$)re");
  static const std::regex toml_pin(
      R"re(^[A-Za-z0-9][A-Za-z0-9._\-]*\s*=\s*["'][\^~<>=!]*\s*[0-9][\w.*+\-]*["']\s*,?\s*$)re");

  std::istringstream in{std::string(diff)};
  bool any = false;
  for (std::string line; std::getline(in, line);) {
    if (line.starts_with("+++") || line.starts_with("---")) continue;
    if (line.empty() || (line[0] != '+' && line[0] != '-')) continue;
    auto body = util::trim(std::string_view(line).substr(1));
    if (body.empty()) continue;
    if (!std::regex_match(body, assignment) && !std::regex_match(body, pin) &&
        !std::regex_match(body, toml_pin)) {
      return false;
    }
    any = true;
  }
  return any;
}

std::string resolved_project_ref(const TaskBundle& bundle) {
  const auto& ref = bundle.project_ref;
  bool remote = ref.find("://") != std::string::npos || ref.starts_with("git@");
  std::filesystem::path p(ref);
  if (remote || p.is_absolute() || bundle.bundle_dir.empty()) return ref;
  return (bundle.bundle_dir / p).lexically_normal().string();
}

namespace {

std::string resolve_or_throw(const GitRepo& repo, const CommitRef& ref) {
  auto full = repo.resolve(ref.hash);
  if (!full) {
    throw BundleError(BundleError::Kind::CommitNotFound,
                      "commit " + ref.hash + " not found in " + repo.root().string());
  }
  return *full;
}

}  // namespace

CommitRef primary_fix_commit(const GitRepo& repo, const TaskBundle& bundle) {
  auto head = repo.resolve("HEAD");
  bool any_resolved = false;
  for (const auto& ref : bundle.fix_commits) {
    auto full = repo.resolve(ref.hash);
    if (!full) continue;
    any_resolved = true;
    if (head && repo.is_ancestor(*full, *head)) return CommitRef{*full};
  }
  throw BundleError(BundleError::Kind::CommitNotFound,
                    any_resolved ? bundle.cve_id + ": no fix commit is on the primary branch"
                                 : bundle.cve_id + ": none of the fix commits exist");
}

CommitRef resolve_baseline_commit(const GitRepo& repo, const CommitRef& fix_commit) {
  auto full = resolve_or_throw(repo, fix_commit);
  auto parents = repo.parents(full);
  if (parents.empty()) {
    throw BundleError(BundleError::Kind::RootCommit,
                      "fix commit " + full + " has no parent");
  }
  return CommitRef{parents.front()};
}

std::set<std::string> derive_ground_truth_files(const GitRepo& repo,
                                                const CommitRef& fix_commit) {
  auto full = resolve_or_throw(repo, fix_commit);
  std::set<std::string> out;
  for (const auto& path : repo.changed_paths(full)) {
    if (is_metadata_path(path)) continue;
    if (is_packaging_file(path) && is_version_bump_only(repo.path_diff(full, path))) {
      continue;
    }
    out.insert(path);
  }
  if (out.empty()) {
    throw BundleError(BundleError::Kind::EmptyGroundTruth,
                      "every path changed by " + full +
                          " is metadata; list vulnerable_files in the manifest");
  }
  return out;
}

void enrich_bundle(TaskBundle& bundle, const GitRepo& repo) {
  std::vector<CommitRef> resolved;
  for (const auto& ref : bundle.fix_commits) {
    auto full = repo.resolve(ref.hash);
    resolved.push_back(full ? CommitRef{*full} : ref);
  }
  bundle.fix_commits = canonicalize_commit_refs(resolved);

  auto fix = primary_fix_commit(repo, bundle);
  auto parent = resolve_baseline_commit(repo, fix);
  if (bundle.baseline_commit) {
    auto given = repo.resolve(bundle.baseline_commit->hash);
    if (!given || *given != parent.hash) {
      throw BundleError(BundleError::Kind::ManifestSchema,
                        "baseline_commit: " + bundle.baseline_commit->hash +
                            " is not the first parent of fix commit " + fix.hash);
    }
  }
  bundle.baseline_commit = parent;

  if (bundle.needs_derivation) {
    bundle.vulnerable_files = derive_ground_truth_files(repo, fix);
    bundle.needs_derivation = false;
  }
}

std::vector<std::string> check_bundle(const TaskBundle& bundle, const GitRepo& repo) {
  std::vector<std::string> problems;
  FileTree tree;
  if (bundle.baseline_commit) {
    auto full = repo.resolve(bundle.baseline_commit->hash);
    if (!full) {
      problems.push_back("baseline commit " + bundle.baseline_commit->hash + " not found");
    } else {
      tree = repo.export_tree(*full);
    }
  } else {
    problems.push_back("baseline commit unresolved");
  }

  auto in_bundle = [&](const std::string& p) {
    return std::filesystem::is_regular_file(bundle.bundle_dir / p);
  };
  if (bundle.poc.in_repo ? tree.count(bundle.poc.entrypoint) == 0
                         : !in_bundle(bundle.poc.entrypoint)) {
    problems.push_back("poc.entrypoint " + bundle.poc.entrypoint + " not found");
  }
  for (const auto& aux : bundle.poc.aux_files) {
    if (!in_bundle(aux) && tree.count(aux) == 0) {
      problems.push_back("poc.aux_files entry " + aux + " not found");
    }
  }
  if (bundle.vulnerable_files.empty()) {
    problems.push_back("vulnerable_files is empty");
  }
  for (const auto& f : bundle.vulnerable_files) {
    if (!tree.empty() && tree.count(f) == 0) {
      problems.push_back("vulnerable file " + f + " missing at the baseline commit");
    }
  }
  return problems;
}

}  // namespace exploitbench
