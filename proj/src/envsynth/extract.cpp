// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cctype>
#include <cstring>
#include <regex>
#include <sstream>

#include "exploitbench/envsynth.hpp"
#include "exploitbench/util/encoding.hpp"
#include "toml_subset.hpp"

namespace exploitbench::envsynth {

std::string_view to_string(SourceKind kind) {
  switch (kind) {
    case SourceKind::ProjectManifest: return "ProjectManifest";
    case SourceKind::SetupScript: return "SetupScript";
    case SourceKind::RequirementsFile: return "RequirementsFile";
    case SourceKind::FallbackInstall: return "FallbackInstall";
  }
  return "?";
}

std::string normalize_name(std::string_view name) {
  std::string out;
  bool in_sep = false;
  for (char c : name) {
    if (c == '-' || c == '_' || c == '.') {
      if (!in_sep) out.push_back('-');
      in_sep = true;
    } else {
      out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
      in_sep = false;
    }
  }
  return out;
}

std::string requirement_name(std::string_view req) {
  auto egg = req.find("#egg=");
  if (egg != std::string_view::npos) {
    auto rest = req.substr(egg + 5);
    auto end = rest.find_first_of("&[ ");
    return normalize_name(rest.substr(0, end));
  }
  auto at = req.find(" @ ");
  if (at != std::string_view::npos) req = req.substr(0, at);
  std::size_t i = 0;
  while (i < req.size() && std::isspace(static_cast<unsigned char>(req[i]))) ++i;
  std::size_t start = i;
  while (i < req.size()) {
    char c = req[i];
    if (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.') {
      ++i;
    } else {
      break;
    }
  }
  if (i == start || !std::isalnum(static_cast<unsigned char>(req[start]))) return {};
  return normalize_name(req.substr(start, i - start));
}

DependencySource detect_dependency_source(const FileTree& tree) {
  if (tree.count("pyproject.toml")) return {SourceKind::ProjectManifest, "pyproject.toml"};
  if (tree.count("setup.py")) return {SourceKind::SetupScript, "setup.py"};
  if (tree.count("requirements.txt")) return {SourceKind::RequirementsFile, "requirements.txt"};
  return {SourceKind::FallbackInstall, std::nullopt};
}

namespace {

[[noreturn]] void unparseable(const std::string& what) {
  throw EnvError(EnvError::Kind::ManifestUnparseable, what);
}

void add_unique(DependencySet& set, std::string req) {
  req = util::trim(req);
  if (req.empty()) return;
  auto name = requirement_name(req);
  for (const auto& existing : set.requirements) {
    auto other = requirement_name(existing);
    if (name.empty() ? existing == req : other == name) return;
  }
  set.requirements.push_back(std::move(req));
}

// ---- pyproject.toml -------------------------------------------------------

std::string poetry_constraint(const std::string& name, const std::string& spec,
                              DependencySet& out) {
  auto s = util::trim(spec);
  if (s.empty() || s == "*") return name;
  char c = s.front();
  if (c == '^' || (c == '~' && !s.starts_with("~="))) {
    out.warnings.push_back(name + ": poetry constraint " + s + " dropped");
    return name;
  }
  if (std::isdigit(static_cast<unsigned char>(c))) return name + "==" + s;
  return name + s;
}

DependencySet from_pyproject(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = detail::parse_toml(text);
  } catch (const detail::TomlError& e) {
    unparseable(std::string("pyproject.toml: ") + e.what());
  }
  DependencySet out;
  const auto project = doc.find("project");
  if (project != doc.end() && project->is_object()) {
    if (auto deps = project->find("dependencies"); deps != project->end()) {
      if (!deps->is_array()) unparseable("pyproject.toml: project.dependencies is not an array");
      for (const auto& d : *deps) {
        if (!d.is_string()) unparseable("pyproject.toml: dependency entries must be strings");
        add_unique(out, d.get<std::string>());
      }
      return out;
    }
    if (auto dyn = project->find("dynamic"); dyn != project->end() && dyn->is_array() &&
        std::find(dyn->begin(), dyn->end(), "dependencies") != dyn->end()) {
      out.confidence = Confidence::Heuristic;
      out.warnings.push_back("pyproject.toml declares dependencies as dynamic");
      return out;
    }
  }

  const nlohmann::json* poetry = nullptr;
  if (auto tool = doc.find("tool"); tool != doc.end() && tool->is_object()) {
    if (auto p = tool->find("poetry"); p != tool->end() && p->is_object()) {
      if (auto d = p->find("dependencies"); d != p->end() && d->is_object()) poetry = &*d;
    }
  }
  if (poetry) {
    out.confidence = Confidence::Heuristic;
    out.warnings.push_back("dependencies read from tool.poetry.dependencies (best effort)");
    for (const auto& [name, value] : poetry->items()) {
      if (name == "python") continue;
      if (value.is_string()) {
        add_unique(out, poetry_constraint(name, value.get<std::string>(), out));
      } else if (value.is_object()) {
        if (value.value("optional", false)) continue;
        std::string req = name;
        if (auto ex = value.find("extras"); ex != value.end() && ex->is_array() && !ex->empty()) {
          req += "[";
          for (std::size_t i = 0; i < ex->size(); ++i) {
            if (i) req += ",";
            req += (*ex)[i].get<std::string>();
          }
          req += "]";
        }
        if (auto v = value.find("version"); v != value.end() && v->is_string()) {
          req = poetry_constraint(req, v->get<std::string>(), out);
        } else {
          out.warnings.push_back(name + ": non-registry poetry source installed by name");
        }
        add_unique(out, req);
      } else {
        out.warnings.push_back(name + ": unsupported poetry dependency form skipped");
      }
    }
    return out;
  }

  out.confidence = Confidence::Heuristic;
  out.warnings.push_back("pyproject.toml has no dependency table");
  return out;
}

// ---- setup.py -------------------------------------------------------------

struct Token {
  enum class Type { Name, String, Op, Other } type;
  std::string text;
  bool dynamic_string = false;  // f-string
};

std::vector<Token> lex_python(std::string_view s) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < s.size()) {
    char c = s[i];
    if (c == '#') {
      while (i < s.size() && s[i] != '\n') ++i;
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c)) || c == '\\') {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < s.size() && j - i < 2 && std::strchr("rRbBuUfF", s[j]) && s[j] != '\0') ++j;
    if (j < s.size() && (s[j] == '"' || s[j] == '\'') &&
        (j == i || !std::isalnum(static_cast<unsigned char>(i > 0 ? s[i - 1] : ' ')))) {
      std::string prefix = util::to_lower(s.substr(i, j - i));
      bool raw = prefix.find('r') != std::string::npos;
      bool fstr = prefix.find('f') != std::string::npos;
      char q = s[j];
      bool triple = s.substr(j, 3) == std::string(3, q);
      std::size_t k = j + (triple ? 3 : 1);
      std::string value;
      while (k < s.size()) {
        if (triple ? s.substr(k, 3) == std::string(3, q) : s[k] == q) break;
        if (!triple && s[k] == '\n') break;
        if (s[k] == '\\' && k + 1 < s.size()) {
          if (raw) {
            value.push_back(s[k]);
            value.push_back(s[k + 1]);
          } else {
            char e = s[k + 1];
            value.push_back(e == 'n' ? '\n' : e == 't' ? '\t' : e);
          }
          k += 2;
          continue;
        }
        value.push_back(s[k]);
        ++k;
      }
      i = std::min(s.size(), k + (triple ? 3 : 1));
      out.push_back({Token::Type::String, value, fstr});
      continue;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t k = i;
      while (k < s.size() &&
             (std::isalnum(static_cast<unsigned char>(s[k])) || s[k] == '_')) {
        ++k;
      }
      out.push_back({Token::Type::Name, std::string(s.substr(i, k - i))});
      i = k;
      continue;
    }
    if (std::isdigit(static_cast<unsigned char>(c))) {
      std::size_t k = i;
      while (k < s.size() && (std::isalnum(static_cast<unsigned char>(s[k])) || s[k] == '.')) ++k;
      out.push_back({Token::Type::Other, std::string(s.substr(i, k - i))});
      i = k;
      continue;
    }
    if (s.substr(i, 2) == "==" || s.substr(i, 2) == "!=" || s.substr(i, 2) == "<=" ||
        s.substr(i, 2) == ">=" || s.substr(i, 2) == "**") {
      out.push_back({Token::Type::Op, std::string(s.substr(i, 2))});
      i += 2;
      continue;
    }
    out.push_back({Token::Type::Op, std::string(1, c)});
    ++i;
  }
  return out;
}

bool is_op(const std::vector<Token>& t, std::size_t i, std::string_view op) {
  return i < t.size() && t[i].type == Token::Type::Op && t[i].text == op;
}

// A list or tuple literal made only of string literals, starting at t[i].
std::optional<std::vector<std::string>> literal_list(const std::vector<Token>& t,
                                                     std::size_t i) {
  if (!is_op(t, i, "[") && !is_op(t, i, "(")) return std::nullopt;
  std::string close = t[i].text == "[" ? "]" : ")";
  std::vector<std::string> items;
  ++i;
  while (i < t.size()) {
    if (is_op(t, i, close)) return items;
    if (t[i].type != Token::Type::String || t[i].dynamic_string) return std::nullopt;
    std::string value;
    while (i < t.size() && t[i].type == Token::Type::String) {
      if (t[i].dynamic_string) return std::nullopt;
      value += t[i].text;
      ++i;
    }
    items.push_back(value);
    if (is_op(t, i, ",")) {
      ++i;
    } else if (!is_op(t, i, close)) {
      return std::nullopt;
    }
  }
  return std::nullopt;
}

DependencySet from_setup_py(const std::string& text) {
  DependencySet out;
  out.confidence = Confidence::Heuristic;
  auto t = lex_python(text);
  for (std::size_t i = 0; i + 1 < t.size(); ++i) {
    std::size_t value_at = 0;
    if (t[i].type == Token::Type::Name && t[i].text == "install_requires" && is_op(t, i + 1, "=")) {
      value_at = i + 2;
    } else if (t[i].type == Token::Type::String && t[i].text == "install_requires" &&
               is_op(t, i + 1, ":")) {
      value_at = i + 2;
    } else {
      continue;
    }
    if (auto items = literal_list(t, value_at)) {
      for (auto& item : *items) add_unique(out, item);
      return out;
    }
    // A bare name may refer to a module-level literal assigned elsewhere.
    if (value_at < t.size() && t[value_at].type == Token::Type::Name &&
        (is_op(t, value_at + 1, ",") || is_op(t, value_at + 1, ")") ||
         is_op(t, value_at + 1, "}"))) {
      const auto& var = t[value_at].text;
      for (std::size_t k = 0; k + 2 < t.size(); ++k) {
        if (t[k].type == Token::Type::Name && t[k].text == var && is_op(t, k + 1, "=")) {
          if (auto items = literal_list(t, k + 2)) {
            for (auto& item : *items) add_unique(out, item);
            return out;
          }
        }
      }
    }
    out.warnings.push_back("install_requires is computed; relying on the in-container install");
    return out;
  }
  out.warnings.push_back("setup.py has no install_requires");
  return out;
}

// ---- requirements.txt -----------------------------------------------------

constexpr int kMaxIncludeDepth = 3;

std::string parent_dir(const std::string& path) {
  auto slash = path.rfind('/');
  return slash == std::string::npos ? std::string() : path.substr(0, slash + 1);
}

std::string join_path(const std::string& dir, const std::string& rel) {
  std::vector<std::string> parts;
  std::stringstream ss(dir + rel);
  for (std::string part; std::getline(ss, part, '/');) {
    if (part.empty() || part == ".") continue;
    if (part == "..") {
      if (!parts.empty()) parts.pop_back();
      continue;
    }
    parts.push_back(part);
  }
  std::string out;
  for (const auto& p : parts) out += (out.empty() ? "" : "/") + p;
  return out;
}

std::vector<std::string> logical_lines(const std::string& text) {
  std::vector<std::string> out;
  std::string pending;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty() && line.back() == '\\') {
      pending += line.substr(0, line.size() - 1);
      continue;
    }
    out.push_back(pending + line);
    pending.clear();
  }
  if (!pending.empty()) out.push_back(pending);
  return out;
}

std::string strip_comment(const std::string& line) {
  if (!line.empty() && line[0] == '#') return {};
  auto pos = line.find(" #");
  auto tab = line.find("\t#");
  pos = std::min(pos, tab);
  return util::trim(pos == std::string::npos ? line : line.substr(0, pos));
}

void read_requirements(const FileTree& tree, const std::string& path, int depth,
                       std::vector<std::string>& stack, DependencySet& out) {
  if (std::find(stack.begin(), stack.end(), path) != stack.end()) {
    std::string chain;
    for (const auto& s : stack) chain += s + " -> ";
    throw EnvError(EnvError::Kind::CyclicInclude, "requirements include loop: " + chain + path);
  }
  auto it = tree.find(path);
  if (it == tree.end()) {
    out.warnings.push_back("included requirements file " + path + " not found");
    return;
  }
  stack.push_back(path);
  static const std::regex self_ref(R"(^(-e\s+|--editable\s+)?\.(/)?(\[([^\]]*)\])?$)");
  for (const auto& raw : logical_lines(it->second)) {
    auto line = strip_comment(raw);
    if (line.empty()) continue;

    std::smatch m;
    if (std::regex_match(line, m, self_ref)) {
      std::stringstream extras(m[4].str());
      for (std::string e; std::getline(extras, e, ',');) {
        e = util::trim(e);
        if (!e.empty()) out.extras_needed.insert(e);
      }
      continue;
    }
    std::string include;
    for (std::string_view opt : {"-r ", "--requirement ", "--requirement=", "-r"}) {
      if (line.starts_with(opt)) {
        include = util::trim(std::string_view(line).substr(opt.size()));
        break;
      }
    }
    if (!include.empty()) {
      if (depth + 1 > kMaxIncludeDepth) {
        out.warnings.push_back("include " + include + " from " + path +
                               " is deeper than 3 levels; skipped");
        continue;
      }
      read_requirements(tree, join_path(parent_dir(path), include), depth + 1, stack, out);
      continue;
    }
    if (line[0] == '-') {
      if (line.starts_with("-e ") || line.starts_with("--editable ")) {
        add_unique(out, line);
      } else {
        out.warnings.push_back("option ignored: " + line);
      }
      continue;
    }
    // Per-requirement options such as --hash belong to pip, not the name.
    auto opt = line.find(" --");
    add_unique(out, util::trim(opt == std::string::npos ? line : line.substr(0, opt)));
  }
  stack.pop_back();
}

}  // namespace

DependencySet extract_dependencies(const DependencySource& source, const FileTree& tree) {
  if (source.kind == SourceKind::FallbackInstall || !source.origin_path) return {};
  auto it = tree.find(*source.origin_path);
  if (it == tree.end()) unparseable(*source.origin_path + " is missing from the tree");
  switch (source.kind) {
    case SourceKind::ProjectManifest:
      return from_pyproject(it->second);
    case SourceKind::SetupScript:
      return from_setup_py(it->second);
    case SourceKind::RequirementsFile: {
      DependencySet out;
      std::vector<std::string> stack;
      read_requirements(tree, *source.origin_path, 0, stack, out);
      return out;
    }
    case SourceKind::FallbackInstall:
      break;
  }
  return {};
}

}  // namespace exploitbench::envsynth
