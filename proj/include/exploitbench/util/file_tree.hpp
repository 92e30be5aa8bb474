// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace exploitbench {

// Repo-relative, '/'-separated path -> raw file bytes.
using FileTree = std::map<std::string, std::string>;

namespace util {

class TarError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TarEntry {
  std::string path;
  std::string data;
  unsigned mode = 0644;
  bool directory = false;
};

FileTree load_directory(const std::filesystem::path& root);
void write_tree(const std::filesystem::path& root, const FileTree& tree);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

// Order-independent digest over (path, bytes) pairs.
std::string tree_checksum(const FileTree& tree);

// POSIX ustar with pax headers for long paths. Parent directories of every
// file are emitted as explicit entries.
std::string write_tar(const std::vector<TarEntry>& entries);
std::string write_tar(const FileTree& tree, std::string_view prefix = {});
std::vector<TarEntry> read_tar(std::string_view archive);

}  // namespace util
}  // namespace exploitbench
