// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <map>
#include <regex>

#include <nlohmann/json.hpp>

#include "exploitbench/taskbundle.hpp"
#include "exploitbench/util/file_tree.hpp"

namespace exploitbench {

using nlohmann::json;

std::string_view to_string(BundleError::Kind kind) {
  switch (kind) {
    case BundleError::Kind::ManifestSyntax: return "ManifestSyntax";
    case BundleError::Kind::ManifestSchema: return "ManifestSchema";
    case BundleError::Kind::ExpectationInvalid: return "ExpectationInvalid";
    case BundleError::Kind::DuplicateCve: return "DuplicateCve";
    case BundleError::Kind::CommitNotFound: return "CommitNotFound";
    case BundleError::Kind::RootCommit: return "RootCommit";
    case BundleError::Kind::EmptyGroundTruth: return "EmptyGroundTruth";
  }
  return "?";
}

std::string_view to_string(Difficulty d) {
  switch (d) {
    case Difficulty::Easy: return "easy";
    case Difficulty::Medium: return "medium";
    case Difficulty::Hard: return "hard";
  }
  return "?";
}

std::optional<Difficulty> parse_difficulty(std::string_view s) {
  if (s == "easy") return Difficulty::Easy;
  if (s == "medium") return Difficulty::Medium;
  if (s == "hard") return Difficulty::Hard;
  return std::nullopt;
}

std::optional<CommitRef> make_commit_ref(std::string_view text) {
  if (text.size() < 7 || text.size() > 40) return std::nullopt;
  CommitRef ref;
  for (char c : text) {
    char l = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (!std::isxdigit(static_cast<unsigned char>(l))) return std::nullopt;
    ref.hash.push_back(l);
  }
  return ref;
}

bool TaskBundle::same_content(const TaskBundle& o) const {
  return cve_id == o.cve_id && project_ref == o.project_ref &&
         fix_commits == o.fix_commits && baseline_commit == o.baseline_commit &&
         vulnerable_files == o.vulnerable_files && needs_derivation == o.needs_derivation &&
         poc == o.poc && expectation == o.expectation && difficulty == o.difficulty &&
         vuln_type == o.vuln_type && runtime == o.runtime;
}

std::vector<CommitRef> canonicalize_commit_refs(const std::vector<CommitRef>& refs) {
  std::vector<CommitRef> out;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const auto& h = refs[i].hash;
    bool drop = false;
    for (std::size_t j = 0; j < refs.size() && !drop; ++j) {
      const auto& other = refs[j].hash;
      if (other.size() > h.size() && other.starts_with(h)) drop = true;
      if (j < i && other == h) drop = true;
    }
    if (!drop) out.push_back(refs[i]);
  }
  return out;
}

namespace {

[[noreturn]] void schema(const std::string& field, const std::string& why) {
  throw BundleError(BundleError::Kind::ManifestSchema, field + ": " + why);
}

const json& require(const json& obj, const char* key, const std::string& path) {
  auto it = obj.find(key);
  if (it == obj.end()) schema(path, "missing");
  return *it;
}

std::string get_string(const json& v, const std::string& path, bool non_empty = true) {
  if (!v.is_string()) schema(path, "must be a string");
  auto s = v.get<std::string>();
  if (non_empty && s.empty()) schema(path, "must not be empty");
  return s;
}

std::vector<std::string> get_strings(const json& obj, const char* key,
                                     const std::string& path) {
  std::vector<std::string> out;
  auto it = obj.find(key);
  if (it == obj.end()) return out;
  if (!it->is_array()) schema(path, "must be a list of strings");
  for (std::size_t i = 0; i < it->size(); ++i) {
    out.push_back(get_string((*it)[i], path + "[" + std::to_string(i) + "]"));
  }
  return out;
}

bool get_bool(const json& obj, const char* key, const std::string& path, bool def) {
  auto it = obj.find(key);
  if (it == obj.end()) return def;
  if (!it->is_boolean()) schema(path, "must be true or false");
  return it->get<bool>();
}

CommitRef get_commit(const json& v, const std::string& path) {
  auto ref = make_commit_ref(get_string(v, path));
  if (!ref) schema(path, "must be 7 to 40 hex digits");
  return *ref;
}

void check_regex(const std::string& pattern, const std::string& path) {
  try {
    std::regex re(pattern);
  } catch (const std::regex_error& e) {
    throw BundleError(BundleError::Kind::ExpectationInvalid,
                      path + ": regex does not compile: " + e.what());
  }
}

Matcher parse_matcher(const json& v, const std::string& path) {
  if (!v.is_object() || v.size() != 1) {
    throw BundleError(BundleError::Kind::ExpectationInvalid,
                      path + ": each matcher is an object with exactly one key");
  }
  const auto& [key, value] = *v.items().begin();
  Matcher m;
  auto bad = [&](const char* what) {
    throw BundleError(BundleError::Kind::ExpectationInvalid, path + "." + key + ": " + what);
  };
  if (key == "exit_code") {
    if (!value.is_number_integer()) bad("must be an integer");
    m.kind = Matcher::Kind::ExitCode;
    m.exit_code = value.get<int>();
  } else if (key == "stdout_regex" || key == "stderr_regex") {
    if (!value.is_string()) bad("must be a string");
    m.kind = key == "stdout_regex" ? Matcher::Kind::StdoutRegex : Matcher::Kind::StderrRegex;
    m.pattern = value.get<std::string>();
    check_regex(m.pattern, path + "." + key);
  } else if (key == "timeout_exceeded" || key == "nonzero_exit") {
    if (!value.is_boolean()) bad("must be true or false");
    m.kind = key == "timeout_exceeded" ? Matcher::Kind::TimeoutExceeded
                                       : Matcher::Kind::NonzeroExit;
    m.flag = value.get<bool>();
  } else {
    bad("unknown matcher");
  }
  return m;
}

json matcher_json(const Matcher& m) {
  switch (m.kind) {
    case Matcher::Kind::ExitCode: return {{"exit_code", m.exit_code}};
    case Matcher::Kind::StdoutRegex: return {{"stdout_regex", m.pattern}};
    case Matcher::Kind::StderrRegex: return {{"stderr_regex", m.pattern}};
    case Matcher::Kind::TimeoutExceeded: return {{"timeout_exceeded", m.flag}};
    case Matcher::Kind::NonzeroExit: return {{"nonzero_exit", m.flag}};
  }
  return {};
}

}  // namespace

TaskBundle parse_manifest(std::string_view text, const std::filesystem::path& bundle_dir) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw BundleError(BundleError::Kind::ManifestSyntax, e.what());
  }
  if (!doc.is_object()) {
    throw BundleError(BundleError::Kind::ManifestSyntax, "manifest must be a JSON object");
  }

  TaskBundle b;
  b.bundle_dir = bundle_dir;
  b.cve_id = get_string(require(doc, "cve_id", "cve_id"), "cve_id");
  b.project_ref = get_string(require(doc, "project_ref", "project_ref"), "project_ref");

  const auto& fixes = require(doc, "fix_commits", "fix_commits");
  if (!fixes.is_array() || fixes.empty()) schema("fix_commits", "must be a non-empty list");
  std::vector<CommitRef> refs;
  for (std::size_t i = 0; i < fixes.size(); ++i) {
    refs.push_back(get_commit(fixes[i], "fix_commits[" + std::to_string(i) + "]"));
  }
  b.fix_commits = canonicalize_commit_refs(refs);

  if (auto it = doc.find("baseline_commit"); it != doc.end() && !it->is_null()) {
    b.baseline_commit = get_commit(*it, "baseline_commit");
  }

  if (auto it = doc.find("vulnerable_files"); it != doc.end() && !it->is_null()) {
    auto files = get_strings(doc, "vulnerable_files", "vulnerable_files");
    if (files.empty()) schema("vulnerable_files", "must not be empty when given");
    b.vulnerable_files = {files.begin(), files.end()};
  } else {
    b.needs_derivation = true;
  }

  const auto& poc = require(doc, "poc", "poc");
  if (!poc.is_object()) schema("poc", "must be an object");
  b.poc.entrypoint = get_string(require(poc, "entrypoint", "poc.entrypoint"), "poc.entrypoint");
  b.poc.in_repo = get_bool(poc, "in_repo", "poc.in_repo", false);
  b.poc.aux_files = get_strings(poc, "aux_files", "poc.aux_files");
  b.poc.deps = get_strings(poc, "deps", "poc.deps");
  if (auto it = poc.find("timeout_s"); it != poc.end()) {
    if (!it->is_number_integer() || it->get<long long>() <= 0 ||
        it->get<long long>() > 86400) {
      schema("poc.timeout_s", "must be a positive integer number of seconds");
    }
    b.poc.timeout_s = it->get<int>();
  }
  if (!bundle_dir.empty() && !b.poc.in_repo &&
      !std::filesystem::is_regular_file(bundle_dir / b.poc.entrypoint)) {
    schema("poc.entrypoint", b.poc.entrypoint + " does not exist in the bundle");
  }

  const auto& exp = require(doc, "expectation", "expectation");
  auto matchers = exp.find("matchers");
  if (!exp.is_object() || matchers == exp.end() || !matchers->is_array() ||
      matchers->empty()) {
    throw BundleError(BundleError::Kind::ExpectationInvalid,
                      "expectation.matchers: must be a non-empty list");
  }
  for (std::size_t i = 0; i < matchers->size(); ++i) {
    b.expectation.matchers.push_back(
        parse_matcher((*matchers)[i], "expectation.matchers[" + std::to_string(i) + "]"));
  }

  if (auto it = doc.find("difficulty"); it != doc.end() && !it->is_null()) {
    auto d = parse_difficulty(get_string(*it, "difficulty"));
    if (!d) schema("difficulty", "must be easy, medium or hard");
    b.difficulty = *d;
  }
  if (auto it = doc.find("vuln_type"); it != doc.end() && !it->is_null()) {
    b.vuln_type = get_string(*it, "vuln_type", false);
  }
  if (auto it = doc.find("runtime"); it != doc.end() && !it->is_null()) {
    if (!it->is_object()) schema("runtime", "must be an object");
    if (auto py = it->find("python"); py != it->end()) {
      b.runtime.python = get_string(*py, "runtime.python");
    }
    b.runtime.system_packages =
        get_strings(*it, "system_packages", "runtime.system_packages");
    b.runtime.network = get_bool(*it, "network", "runtime.network", false);
  }
  return b;
}

TaskBundle load_manifest(const std::filesystem::path& path) {
  std::string text;
  try {
    text = util::read_file(path);
  } catch (const std::exception& e) {
    throw BundleError(BundleError::Kind::ManifestSyntax,
                      "cannot read " + path.string() + ": " + e.what());
  }
  return parse_manifest(text, path.parent_path());
}

std::string serialize_manifest(const TaskBundle& b) {
  json doc;
  doc["cve_id"] = b.cve_id;
  doc["project_ref"] = b.project_ref;
  doc["fix_commits"] = json::array();
  for (const auto& c : b.fix_commits) doc["fix_commits"].push_back(c.hash);
  if (b.baseline_commit) doc["baseline_commit"] = b.baseline_commit->hash;
  if (!b.needs_derivation) doc["vulnerable_files"] = b.vulnerable_files;
  doc["poc"] = {{"entrypoint", b.poc.entrypoint},
                {"aux_files", b.poc.aux_files},
                {"deps", b.poc.deps},
                {"timeout_s", b.poc.timeout_s}};
  if (b.poc.in_repo) doc["poc"]["in_repo"] = true;
  json matchers = json::array();
  for (const auto& m : b.expectation.matchers) matchers.push_back(matcher_json(m));
  doc["expectation"] = {{"matchers", matchers}};
  doc["difficulty"] = to_string(b.difficulty);
  doc["vuln_type"] = b.vuln_type;
  doc["runtime"] = {{"python", b.runtime.python},
                    {"system_packages", b.runtime.system_packages},
                    {"network", b.runtime.network}};
  return doc.dump(2) + "\n";
}

void save_manifest(const TaskBundle& bundle, const std::filesystem::path& path) {
  util::write_file(path, serialize_manifest(bundle));
}

std::vector<TaskBundle> load_suite(const std::filesystem::path& root) {
  std::vector<std::filesystem::path> manifests;
  if (std::filesystem::is_regular_file(root / kManifestName)) {
    manifests.push_back(root / kManifestName);
  }
  if (std::filesystem::is_directory(root)) {
    for (const auto& entry : std::filesystem::directory_iterator(root)) {
      if (entry.is_directory() &&
          std::filesystem::is_regular_file(entry.path() / kManifestName)) {
        manifests.push_back(entry.path() / kManifestName);
      }
    }
  }
  std::sort(manifests.begin(), manifests.end());
  std::vector<TaskBundle> out;
  std::map<std::string, std::filesystem::path> seen;
  for (const auto& m : manifests) {
    auto b = load_manifest(m);
    auto [it, fresh] = seen.emplace(b.cve_id, m);
    if (!fresh) {
      throw BundleError(BundleError::Kind::DuplicateCve,
                        b.cve_id + " appears in both " + it->second.string() + " and " +
                            m.string());
    }
    out.push_back(std::move(b));
  }
  return out;
}

}  // namespace exploitbench
