// SPDX-License-Identifier: Apache-2.0
#include "exploitbench/git_repo.hpp"

#include <sstream>

#include "exploitbench/util/encoding.hpp"
#include "exploitbench/util/process.hpp"

namespace exploitbench {

namespace {

constexpr std::string_view kEmptyTree = "4b825dc642cb6eb9a060e54bf8d69288fbee4904";

std::vector<std::string> split_nonempty(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, sep)) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

GitRepo::GitRepo(std::filesystem::path root) : root_(std::move(root)) {
  auto r = util::run_process({"git", "-C", root_.string(), "rev-parse", "--git-dir"});
  if (!r.ok()) {
    throw GitError(GitError::Kind::NotARepository,
                   root_.string() + " is not a git repository");
  }
}

GitRepo GitRepo::open_or_clone(const std::string& project_ref,
                               const std::filesystem::path& cache_dir) {
  std::filesystem::path local(project_ref);
  if (std::filesystem::is_directory(local)) return GitRepo(local);

  auto dest = cache_dir / util::sha256_hex(project_ref).substr(0, 16);
  if (!std::filesystem::exists(dest / ".git")) {
    std::filesystem::create_directories(cache_dir);
    auto r = util::run_process({"git", "clone", "--quiet", project_ref, dest.string()});
    if (!r.ok()) {
      throw GitError(GitError::Kind::CommandFailed,
                     "git clone " + project_ref + " failed: " + util::trim(r.err));
    }
  }
  return GitRepo(dest);
}

std::string GitRepo::git(const std::vector<std::string>& args) const {
  std::vector<std::string> argv{"git", "-C", root_.string()};
  argv.insert(argv.end(), args.begin(), args.end());
  auto r = util::run_process(argv);
  if (!r.ok()) {
    std::string cmd;
    for (const auto& a : args) cmd += " " + a;
    throw GitError(GitError::Kind::CommandFailed, "git" + cmd + ": " + util::trim(r.err));
  }
  return r.out;
}

std::optional<std::string> GitRepo::resolve(const std::string& rev) const {
  auto r = util::run_process({"git", "-C", root_.string(), "rev-parse", "--verify",
                              "--quiet", rev + "^{commit}"});
  if (!r.ok()) return std::nullopt;
  return util::trim(r.out);
}

std::vector<std::string> GitRepo::parents(const std::string& commit) const {
  auto line = git({"rev-list", "--parents", "-n", "1", commit});
  auto fields = split_nonempty(util::trim(line), ' ');
  if (fields.empty()) {
    throw GitError(GitError::Kind::UnknownRevision, "unknown commit " + commit);
  }
  return {fields.begin() + 1, fields.end()};
}

std::vector<std::string> GitRepo::changed_paths(const std::string& commit) const {
  auto ps = parents(commit);
  std::string base = ps.empty() ? std::string(kEmptyTree) : ps.front();
  auto out = git({"diff", "--name-only", "-z", "--no-renames", base, commit});
  return split_nonempty(out, '\0');
}

std::string GitRepo::path_diff(const std::string& commit, const std::string& path) const {
  auto ps = parents(commit);
  std::string base = ps.empty() ? std::string(kEmptyTree) : ps.front();
  return git({"diff", "-U0", "--no-color", base, commit, "--", path});
}

bool GitRepo::is_ancestor(const std::string& ancestor,
                          const std::string& descendant) const {
  auto r = util::run_process({"git", "-C", root_.string(), "merge-base",
                              "--is-ancestor", ancestor, descendant});
  return r.exit_code == 0;
}

FileTree GitRepo::export_tree(const std::string& commit) const {
  auto archive = git({"archive", "--format=tar", commit});
  FileTree tree;
  for (auto& entry : util::read_tar(archive)) {
    if (!entry.directory) tree.emplace(std::move(entry.path), std::move(entry.data));
  }
  return tree;
}

}  // namespace exploitbench
