// SPDX-License-Identifier: Apache-2.0
#pragma once

// Thin wrapper over the git command line. Every call spawns a process; the
// harness only needs a handful of object-model queries per bundle.

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "exploitbench/util/file_tree.hpp"

namespace exploitbench {

class GitError : public std::runtime_error {
 public:
  enum class Kind { NotARepository, UnknownRevision, CommandFailed };

  GitError(Kind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

class GitRepo {
 public:
  explicit GitRepo(std::filesystem::path root);

  // Local paths are opened in place; anything else is cloned (once) into
  // cache_dir under a name derived from the URL.
  static GitRepo open_or_clone(const std::string& project_ref,
                               const std::filesystem::path& cache_dir);

  const std::filesystem::path& root() const { return root_; }

  // Full 40-hex hash, or nullopt when `rev` does not name a commit.
  std::optional<std::string> resolve(const std::string& rev) const;
  std::vector<std::string> parents(const std::string& commit) const;
  // Paths changed relative to the first parent (all paths for a root commit).
  std::vector<std::string> changed_paths(const std::string& commit) const;
  // Zero-context diff of one path against the first parent.
  std::string path_diff(const std::string& commit, const std::string& path) const;
  bool is_ancestor(const std::string& ancestor, const std::string& descendant) const;
  FileTree export_tree(const std::string& commit) const;

 private:
  std::string git(const std::vector<std::string>& args) const;

  std::filesystem::path root_;
};

}  // namespace exploitbench
