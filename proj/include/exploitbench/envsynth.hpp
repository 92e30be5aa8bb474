// SPDX-License-Identifier: Apache-2.0
#pragma once

// Works out how a Python project declares its dependencies and renders a
// Dockerfile that rebuilds it at the baseline commit.

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "exploitbench/taskbundle.hpp"
#include "exploitbench/util/file_tree.hpp"

namespace exploitbench::envsynth {

class EnvError : public std::runtime_error {
 public:
  enum class Kind { CyclicInclude, ManifestUnparseable, UnsupportedRuntime, InvalidPackage };

  EnvError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

enum class SourceKind { ProjectManifest, SetupScript, RequirementsFile, FallbackInstall };

std::string_view to_string(SourceKind kind);

struct DependencySource {
  SourceKind kind = SourceKind::FallbackInstall;
  std::optional<std::string> origin_path;
};

enum class Confidence { Exact, Heuristic };

struct DependencySet {
  std::vector<std::string> requirements;
  // Extras of the project itself, e.g. from "-e .[crypto]".
  std::set<std::string> extras_needed;
  Confidence confidence = Confidence::Exact;
  std::vector<std::string> warnings;
};

// PEP 503 normalisation: lowercase, runs of "-", "_", "." become "-".
std::string normalize_name(std::string_view name);
// Distribution name of a requirement line, or empty when none can be read.
std::string requirement_name(std::string_view requirement);

DependencySource detect_dependency_source(const FileTree& tree);
DependencySet extract_dependencies(const DependencySource& source, const FileTree& tree);

// Interpreter version tag -> base image. Ships with python:X.Y-slim defaults
// and can be replaced from a JSON object file.
class BaseImageTable {
 public:
  BaseImageTable();
  static BaseImageTable from_json_file(const std::filesystem::path& path);
  static BaseImageTable from_json_text(const std::string& text);

  // Exact tag first, then major.minor of a longer version.
  std::optional<std::string> lookup(const std::string& version) const;
  void set(const std::string& version, const std::string& image) { table_[version] = image; }

 private:
  std::map<std::string, std::string> table_;
};

inline constexpr std::string_view kProjectDir = "/workspace/project";
inline constexpr std::string_view kRequirementsName = "exploitbench-requirements.txt";

struct BuildSpec {
  std::string base_image_tag;
  std::vector<std::string> system_packages;
  std::vector<std::string> setup_commands;
  std::string workdir = std::string(kProjectDir);
  CommitRef checkout;

  std::string dockerfile;
  // Extra build-context files beside the "project/" directory.
  FileTree context_files;
};

BuildSpec generate_build_spec(const TaskBundle& bundle, const DependencySource& source,
                              const DependencySet& deps,
                              const BaseImageTable& images = BaseImageTable());

// Build context tarball: the project tree under "project/" plus context_files.
std::string build_context_tar(const BuildSpec& spec, const FileTree& project_tree);

}  // namespace exploitbench::envsynth
