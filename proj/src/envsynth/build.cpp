// SPDX-License-Identifier: Apache-2.0
#include <regex>

#include <nlohmann/json.hpp>

#include "exploitbench/envsynth.hpp"
#include "exploitbench/util/file_tree.hpp"

namespace exploitbench::envsynth {

BaseImageTable::BaseImageTable() {
  table_["2.7"] = "python:2.7-slim";
  for (int minor = 6; minor <= 13; ++minor) {
    auto v = "3." + std::to_string(minor);
    table_[v] = "python:" + v + "-slim";
  }
}

BaseImageTable BaseImageTable::from_json_text(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw EnvError(EnvError::Kind::ManifestUnparseable,
                   std::string("base image table: ") + e.what());
  }
  if (!doc.is_object()) {
    throw EnvError(EnvError::Kind::ManifestUnparseable,
                   "base image table must map versions to image tags");
  }
  BaseImageTable t;
  t.table_.clear();
  for (const auto& [version, image] : doc.items()) {
    if (!image.is_string()) {
      throw EnvError(EnvError::Kind::ManifestUnparseable,
                     "base image for " + version + " must be a string");
    }
    t.table_[version] = image.get<std::string>();
  }
  return t;
}

BaseImageTable BaseImageTable::from_json_file(const std::filesystem::path& path) {
  return from_json_text(util::read_file(path));
}

std::optional<std::string> BaseImageTable::lookup(const std::string& version) const {
  if (auto it = table_.find(version); it != table_.end()) return it->second;
  auto first = version.find('.');
  if (first != std::string::npos) {
    auto second = version.find('.', first + 1);
    if (second != std::string::npos) {
      if (auto it = table_.find(version.substr(0, second)); it != table_.end()) {
        return it->second;
      }
    }
  }
  return std::nullopt;
}

namespace {

void check_package_name(const std::string& pkg) {
  static const std::regex ok(R"(^[a-z0-9][a-z0-9+.\-]*(=[A-Za-z0-9.+:~\-]+)?$)");
  if (!std::regex_match(pkg, ok)) {
    throw EnvError(EnvError::Kind::InvalidPackage, "system package name rejected: " + pkg);
  }
}

std::string extras_suffix(const std::set<std::string>& extras) {
  if (extras.empty()) return {};
  std::string out = "[";
  for (const auto& e : extras) out += (out.size() > 1 ? "," : "") + e;
  return out + "]";
}

}  // namespace

BuildSpec generate_build_spec(const TaskBundle& bundle, const DependencySource& source,
                              const DependencySet& deps, const BaseImageTable& images) {
  BuildSpec spec;
  auto image = images.lookup(bundle.runtime.python);
  if (!image) {
    throw EnvError(EnvError::Kind::UnsupportedRuntime,
                   "no base image for interpreter " + bundle.runtime.python);
  }
  spec.base_image_tag = *image;
  if (!bundle.baseline_commit) {
    throw EnvError(EnvError::Kind::UnsupportedRuntime,
                   bundle.cve_id + ": baseline commit must be resolved first");
  }
  spec.checkout = *bundle.baseline_commit;

  for (const auto& pkg : bundle.runtime.system_packages) {
    check_package_name(pkg);
    if (std::find(spec.system_packages.begin(), spec.system_packages.end(), pkg) ==
        spec.system_packages.end()) {
      spec.system_packages.push_back(pkg);
    }
  }

  const std::string pip = "python -m pip install --no-cache-dir";
  const std::string req_path = "/opt/exploitbench/requirements.txt";
  const std::string extras = extras_suffix(deps.extras_needed);
  switch (source.kind) {
    case SourceKind::ProjectManifest:
    case SourceKind::SetupScript:
      spec.setup_commands.push_back(pip + " -e '." + extras + "'");
      break;
    case SourceKind::RequirementsFile: {
      std::string body;
      for (const auto& r : deps.requirements) body += r + "\n";
      spec.context_files[std::string(kRequirementsName)] = body;
      spec.setup_commands.push_back(pip + " -r " + req_path);
      if (!extras.empty()) spec.setup_commands.push_back(pip + " -e '." + extras + "'");
      break;
    }
    case SourceKind::FallbackInstall:
      spec.setup_commands.push_back(pip + " .");
      break;
  }

  std::string& d = spec.dockerfile;
  d += "FROM " + spec.base_image_tag + "\n";
  d += "ENV PYTHONDONTWRITEBYTECODE=1 PIP_DISABLE_PIP_VERSION_CHECK=1 "
       "DEBIAN_FRONTEND=noninteractive\n";
  if (!spec.system_packages.empty()) {
    d += "RUN apt-get update && apt-get install -y --no-install-recommends";
    for (const auto& p : spec.system_packages) d += " " + p;
    d += " && rm -rf /var/lib/apt/lists/*\n";
  }
  d += "WORKDIR " + spec.workdir + "\n";
  d += "COPY project/ " + spec.workdir + "/\n";
  d += "LABEL exploitbench.cve=\"" + bundle.cve_id + "\" exploitbench.checkout=\"" +
       spec.checkout.hash + "\"\n";
  d += "ENV PYTHONPATH=" + spec.workdir + "\n";
  if (source.kind == SourceKind::RequirementsFile) {
    d += "COPY " + std::string(kRequirementsName) + " " + req_path + "\n";
  }
  for (const auto& cmd : spec.setup_commands) d += "RUN " + cmd + "\n";
  return spec;
}

std::string build_context_tar(const BuildSpec& spec, const FileTree& project_tree) {
  std::vector<util::TarEntry> entries;
  entries.push_back({"Dockerfile", spec.dockerfile, 0644, false});
  for (const auto& [path, data] : spec.context_files) {
    entries.push_back({path, data, 0644, false});
  }
  entries.push_back({"project", "", 0755, true});
  for (const auto& [path, data] : project_tree) {
    entries.push_back({"project/" + path, data, 0644, false});
  }
  return util::write_tar(entries);
}

}  // namespace exploitbench::envsynth
