// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "exploitbench/envsynth.hpp"
#include "exploitbench/util/file_tree.hpp"

using namespace exploitbench;
using namespace exploitbench::envsynth;

namespace {

TaskBundle sample_bundle() {
  TaskBundle b;
  b.cve_id = "CVE-2099-1234";
  b.project_ref = "repo";
  b.fix_commits = {CommitRef{"1111111111111111111111111111111111111111"}};
  b.baseline_commit = CommitRef{"2222222222222222222222222222222222222222"};
  b.vulnerable_files = {"pkg/core.py"};
  b.poc.entrypoint = "exploit.py";
  b.expectation.matchers = {{Matcher::Kind::ExitCode, 0, "", true}};
  b.runtime.python = "3.9";
  return b;
}

EnvError::Kind env_error(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const EnvError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected EnvError";
  return EnvError::Kind::ManifestUnparseable;
}

}  // namespace

TEST(DetectSource, PriorityOrder) {
  EXPECT_EQ(detect_dependency_source({{"pyproject.toml", ""}, {"requirements.txt", ""}}).kind,
            SourceKind::ProjectManifest);
  EXPECT_EQ(detect_dependency_source({{"setup.py", ""}, {"requirements.txt", ""}}).kind,
            SourceKind::SetupScript);
  EXPECT_EQ(detect_dependency_source({{"requirements.txt", ""}}).kind,
            SourceKind::RequirementsFile);
  auto bare = detect_dependency_source({{"main.py", ""}, {"sub/setup.py", ""}});
  EXPECT_EQ(bare.kind, SourceKind::FallbackInstall);
  EXPECT_FALSE(bare.origin_path);
}

TEST(DetectSource, PureFunctionOfCanonicalPaths) {
  const char* canon[] = {"pyproject.toml", "setup.py", "requirements.txt"};
  for (int mask = 0; mask < 8; ++mask) {
    FileTree a{{"noise.py", "x"}};
    FileTree b{{"other/setup.py", ""}, {"README.md", "y"}};
    for (int bit = 0; bit < 3; ++bit) {
      if (mask & (1 << bit)) {
        a[canon[bit]] = "";
        b[canon[bit]] = "different content";
      }
    }
    EXPECT_EQ(detect_dependency_source(a).kind, detect_dependency_source(b).kind);
    auto expected = (mask & 1)   ? SourceKind::ProjectManifest
                    : (mask & 2) ? SourceKind::SetupScript
                    : (mask & 4) ? SourceKind::RequirementsFile
                                 : SourceKind::FallbackInstall;
    EXPECT_EQ(detect_dependency_source(a).kind, expected);
  }
}

TEST(Pyproject, StandardDependencies) {
  FileTree t{{"pyproject.toml", R"([build-system]
requires = ["setuptools>=61"]

[project]
name = "demo"
version = "1.0"
dependencies = [
  "requests>=2.0",  # http
  'PyYAML',
  "pyyaml>=5",
]
[project.optional-dependencies]
dev = ["pytest"]
)"}};
  auto deps = extract_dependencies(detect_dependency_source(t), t);
  EXPECT_EQ(deps.requirements, (std::vector<std::string>{"requests>=2.0", "PyYAML"}));
  EXPECT_EQ(deps.confidence, Confidence::Exact);
}

TEST(Pyproject, SingleRequirement) {
  FileTree t{{"pyproject.toml", "[project]\ndependencies = [\"requests>=2.0\"]\n"}};
  auto deps = extract_dependencies(detect_dependency_source(t), t);
  EXPECT_EQ(deps.requirements, std::vector<std::string>{"requests>=2.0"});
  EXPECT_EQ(deps.confidence, Confidence::Exact);
}

TEST(Pyproject, PoetryBestEffort) {
  FileTree t{{"pyproject.toml", R"([tool.poetry]
name = "demo"

[tool.poetry.dependencies]
python = "^3.8"
requests = "^2.28"
lxml = ">=4.9"
click = "8.1.3"
rich = { version = "*", extras = ["jupyter"] }
pytest = { version = "^7", optional = true }
)"}};
  auto deps = extract_dependencies(detect_dependency_source(t), t);
  EXPECT_EQ(deps.confidence, Confidence::Heuristic);
  EXPECT_EQ(deps.requirements, (std::vector<std::string>{
                                   "click==8.1.3", "lxml>=4.9", "requests", "rich[jupyter]"}));
  EXPECT_FALSE(deps.warnings.empty());
}

TEST(Pyproject, Unparseable) {
  FileTree t{{"pyproject.toml", "[project\nname = 1\n"}};
  EXPECT_EQ(env_error([&] { extract_dependencies(detect_dependency_source(t), t); }),
            EnvError::Kind::ManifestUnparseable);
}

TEST(Pyproject, TomlStringForms) {
  FileTree t{{"pyproject.toml", "[project]\ndependencies = [\"\"\"a\\\n  b>=1\"\"\", '''c''', "
                                "\"d\\u0041\"]\n"}};
  auto deps = extract_dependencies(detect_dependency_source(t), t);
  EXPECT_EQ(deps.requirements, (std::vector<std::string>{"ab>=1", "c", "dA"}));
}

TEST(SetupScript, LiteralList) {
  FileTree t{{"setup.py", R"(from setuptools import setup
# install_requires = ["not-this"]
setup(
    name="demo",
    install_requires=["pyyaml"],
)
)"}};
  auto deps = extract_dependencies(detect_dependency_source(t), t);
  EXPECT_EQ(deps.requirements, std::vector<std::string>{"pyyaml"});
  EXPECT_EQ(deps.confidence, Confidence::Heuristic);
}

TEST(SetupScript, VariableAndTupleAndDict) {
  FileTree via_var{{"setup.py", "REQS = ('six>=1.0', 'attrs')\nsetup(install_requires=REQS)\n"}};
  EXPECT_EQ(extract_dependencies(detect_dependency_source(via_var), via_var).requirements,
            (std::vector<std::string>{"six>=1.0", "attrs"}));
  FileTree via_dict{{"setup.py", "kw = {'install_requires': [\"jinja2<3\"]}\nsetup(**kw)\n"}};
  EXPECT_EQ(extract_dependencies(detect_dependency_source(via_dict), via_dict).requirements,
            std::vector<std::string>{"jinja2<3"});
}

TEST(SetupScript, DynamicListGivesEmptyHeuristic) {
  FileTree t{{"setup.py",
              "reqs = open('requirements.txt').read().splitlines()\n"
              "setup(install_requires=reqs + ['x'])\n"}};
  auto deps = extract_dependencies(detect_dependency_source(t), t);
  EXPECT_TRUE(deps.requirements.empty());
  EXPECT_EQ(deps.confidence, Confidence::Heuristic);
  FileTree comp{{"setup.py", "setup(install_requires=[r for r in base])\n"}};
  EXPECT_TRUE(extract_dependencies(detect_dependency_source(comp), comp).requirements.empty());
}

TEST(Requirements, IncludesCommentsAndOptions) {
  FileTree t{{"requirements.txt",
              "# top\n-r reqs/base.txt\nflask==2.0  # web\n--index-url https://x\n"
              "-e .[crypto]\nFlask>=1\nrequests \\\n  >=2.0\n"},
             {"reqs/base.txt", "-r ../reqs/common.txt\nJinja2==3.0 --hash=sha256:abc\n"},
             {"reqs/common.txt", "markupsafe\n"}};
  auto deps = extract_dependencies(detect_dependency_source(t), t);
  EXPECT_EQ(deps.requirements, (std::vector<std::string>{"markupsafe", "Jinja2==3.0",
                                                         "flask==2.0", "requests   >=2.0"}));
  EXPECT_EQ(deps.extras_needed, std::set<std::string>{"crypto"});
  EXPECT_EQ(deps.confidence, Confidence::Exact);
}

TEST(Requirements, SelfIncludeIsCyclic) {
  FileTree t{{"requirements.txt", "-r more.txt\n"}, {"more.txt", "-r requirements.txt\n"}};
  EXPECT_EQ(env_error([&] { extract_dependencies(detect_dependency_source(t), t); }),
            EnvError::Kind::CyclicInclude);
  FileTree self{{"requirements.txt", "a\n-r requirements.txt\n"}};
  EXPECT_EQ(env_error([&] { extract_dependencies(detect_dependency_source(self), self); }),
            EnvError::Kind::CyclicInclude);
}

TEST(Requirements, DepthLimit) {
  FileTree t{{"requirements.txt", "-r a.txt\n"}, {"a.txt", "a\n-r b.txt\n"},
             {"b.txt", "b\n-r c.txt\n"}, {"c.txt", "c\n-r d.txt\n"}, {"d.txt", "d\n"}};
  auto deps = extract_dependencies(detect_dependency_source(t), t);
  EXPECT_EQ(deps.requirements, (std::vector<std::string>{"a", "b", "c"}));
  EXPECT_FALSE(deps.warnings.empty());
}

TEST(Requirements, NeverInventsPins) {
  FileTree t{{"requirements.txt", "alpha\nbeta[x]\ngamma ; python_version<'3'\n"}};
  auto deps = extract_dependencies(detect_dependency_source(t), t);
  for (const auto& r : deps.requirements) {
    EXPECT_NE(t.at("requirements.txt").find(r), std::string::npos) << r;
  }
}

TEST(Names, Normalization) {
  EXPECT_EQ(normalize_name("Py_YAML.Extra"), "py-yaml-extra");
  EXPECT_EQ(requirement_name("Django>=3 ; python_version>'3'"), "django");
  EXPECT_EQ(requirement_name("-e git+https://x/y.git#egg=My_Pkg"), "my-pkg");
  EXPECT_EQ(requirement_name("pkg @ https://example.com/pkg.whl"), "pkg");
}

TEST(BuildSpec, DeterministicAndOrdered) {
  auto b = sample_bundle();
  b.runtime.system_packages = {"libxml2-dev", "git", "libxml2-dev"};
  FileTree t{{"requirements.txt", "lxml==4.6\n"}};
  auto src = detect_dependency_source(t);
  auto deps = extract_dependencies(src, t);
  auto one = generate_build_spec(b, src, deps);
  auto two = generate_build_spec(b, src, deps);
  EXPECT_EQ(one.dockerfile, two.dockerfile);
  EXPECT_EQ(one.context_files, two.context_files);
  EXPECT_EQ(one.system_packages, (std::vector<std::string>{"libxml2-dev", "git"}));
  EXPECT_EQ(one.checkout, *b.baseline_commit);
  const auto& d = one.dockerfile;
  auto from = d.find("FROM python:3.9-slim");
  auto apt = d.find("apt-get install");
  auto copy = d.find("COPY project/");
  auto install = d.find("-r /opt/exploitbench/requirements.txt");
  ASSERT_NE(from, std::string::npos);
  EXPECT_LT(from, apt);
  EXPECT_LT(apt, copy);
  EXPECT_LT(copy, install);
  EXPECT_EQ(one.context_files.at(std::string(kRequirementsName)), "lxml==4.6\n");
  EXPECT_EQ(d.find("/tmp"), std::string::npos);
}

TEST(BuildSpec, FallbackGolden) {
  auto b = sample_bundle();
  auto spec = generate_build_spec(b, {SourceKind::FallbackInstall, std::nullopt}, {});
  auto golden = util::read_file(std::string(EXPLOITBENCH_FIXTURE_DIR) +
                                "/golden/dockerfile_fallback.txt");
  EXPECT_EQ(spec.dockerfile, golden);
  EXPECT_NE(spec.dockerfile.find("pip install --no-cache-dir ."), std::string::npos);
  EXPECT_EQ(spec.dockerfile.find("requirements"), std::string::npos);
  EXPECT_TRUE(spec.context_files.empty());
}

TEST(BuildSpec, EditableInstallForProjects) {
  auto b = sample_bundle();
  auto spec = generate_build_spec(b, {SourceKind::SetupScript, "setup.py"}, {});
  EXPECT_NE(spec.dockerfile.find("pip install --no-cache-dir -e '.'"), std::string::npos);
}

TEST(BuildSpec, UnsupportedRuntime) {
  auto b = sample_bundle();
  b.runtime.python = "2.4";
  EXPECT_EQ(env_error([&] { generate_build_spec(b, {}, {}); }),
            EnvError::Kind::UnsupportedRuntime);
}

TEST(BuildSpec, RejectsShellyPackageNames) {
  auto b = sample_bundle();
  b.runtime.system_packages = {"curl; rm -rf /"};
  EXPECT_EQ(env_error([&] { generate_build_spec(b, {}, {}); }), EnvError::Kind::InvalidPackage);
}

TEST(BaseImages, TableLookupAndOverride) {
  BaseImageTable defaults;
  EXPECT_EQ(defaults.lookup("3.11.4"), "python:3.11-slim");
  EXPECT_FALSE(defaults.lookup("2.4"));
  auto custom = BaseImageTable::from_json_text(R"({"3.9": "registry.local/py:3.9"})");
  EXPECT_EQ(custom.lookup("3.9"), "registry.local/py:3.9");
  EXPECT_FALSE(custom.lookup("3.10"));
}

TEST(BuildContext, ProjectUnderPrefix) {
  auto b = sample_bundle();
  auto spec = generate_build_spec(b, {SourceKind::FallbackInstall, std::nullopt}, {});
  auto tar = build_context_tar(spec, {{"pkg/core.py", "x = 1\n"}});
  std::map<std::string, std::string> files;
  for (const auto& e : util::read_tar(tar)) {
    if (!e.directory) files[e.path] = e.data;
  }
  EXPECT_EQ(files.at("Dockerfile"), spec.dockerfile);
  EXPECT_EQ(files.at("project/pkg/core.py"), "x = 1\n");
}
