// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "exploitbench/diffkit.hpp"
#include "exploitbench/sandbox.hpp"
#include "support/fake_engine.hpp"

using namespace exploitbench;
using namespace exploitbench::sandbox;
using testsupport::FakeEngine;

namespace {

const FileTree kProject{
    {"pkg/core.py", "def load(data):\n    return eval(data)\n"},
    {"pkg/__init__.py", ""},
    {"setup.py", "from setuptools import setup\nsetup(name='pkg')\n"},
};

const char* kFix =
    "--- a/pkg/core.py\n+++ b/pkg/core.py\n@@ -1,2 +1,2 @@\n def load(data):\n"
    "-    return eval(data)\n+    return None  # FIXED\n";

SandboxOptions quick_options() {
  SandboxOptions o;
  o.grace = std::chrono::seconds(1);
  o.shim_script = "# shim\n";
  return o;
}

FileTree context() {
  FileTree ctx;
  for (const auto& [p, d] : kProject) ctx["project/" + p] = d;
  return ctx;
}

PocPayload payload() {
  PocPayload p;
  p.cve_id = "CVE-2099-0001";
  p.files["exploit.py"] = "import pkg.core\n";
  p.config_template.entrypoint = "/opt/exploitbench/run/poc/exploit.py";
  p.config_template.timeout_s = 1;
  p.config_template.cve_id = p.cve_id;
  return p;
}

struct SandboxFixture : ::testing::Test {
  FakeEngine engine;
  Sandbox box{EngineEndpoint::parse(engine.endpoint()), quick_options()};
  std::string image = box.build_image("FROM python:3.11-slim\n", context(), "eb/test:1");
};

}  // namespace

TEST(EngineEndpoint, ParsesForms) {
  EXPECT_EQ(EngineEndpoint::parse("unix:///var/run/docker.sock").socket_path,
            "/var/run/docker.sock");
  EXPECT_EQ(EngineEndpoint::parse("/tmp/e.sock").socket_path, "/tmp/e.sock");
  auto tcp = EngineEndpoint::parse("tcp://10.0.0.2:2375");
  EXPECT_EQ(tcp.host, "10.0.0.2");
  EXPECT_EQ(tcp.port, 2375);
  EXPECT_FALSE(tcp.is_unix());
}

TEST(Sandbox, UnreachableEngine) {
  try {
    Sandbox s(EngineEndpoint::parse("unix:///nonexistent/engine.sock"), quick_options());
    FAIL();
  } catch (const SandboxError& e) {
    EXPECT_EQ(e.kind(), SandboxError::Kind::EngineUnreachable);
  }
}

TEST_F(SandboxFixture, BuildFailureCarriesLogTail) {
  try {
    box.build_image("FROM python:3.11-slim\nRUN false\n", context(), "eb/broken:1");
    FAIL();
  } catch (const SandboxError& e) {
    EXPECT_EQ(e.kind(), SandboxError::Kind::BuildFailed);
    EXPECT_NE(e.log_tail().find("non-zero code"), std::string::npos);
  }
}

TEST_F(SandboxFixture, PatchLandsOnlyInPatchedContainer) {
  auto outcome = diffkit::apply_text(kFix, kProject);
  ASSERT_TRUE(outcome.applied());
  auto pair = box.provision_pair(image, outcome);
  auto after = kProject;
  for (const auto& [p, d] : outcome.result_files) after[p] = d;
  EXPECT_EQ(box.tree_checksum(pair.baseline), util::tree_checksum(kProject));
  EXPECT_EQ(box.tree_checksum(pair.patched), util::tree_checksum(after));
  box.teardown(pair);
  EXPECT_EQ(engine.container_count(), 0u);
}

TEST_F(SandboxFixture, NoPatchGivesIdenticalTrees) {
  auto pair = box.provision_pair(image, std::nullopt);
  EXPECT_EQ(box.tree_checksum(pair.baseline), box.tree_checksum(pair.patched));
  box.teardown(pair);
}

TEST_F(SandboxFixture, DeletedFilesAreRemoved) {
  auto outcome = diffkit::apply_text(
      "--- a/pkg/__init__.py\n+++ /dev/null\n@@ -0,0 +0,0 @@\n", kProject);
  ASSERT_TRUE(outcome.applied());
  auto pair = box.provision_pair(image, outcome);
  auto after = kProject;
  after.erase("pkg/__init__.py");
  EXPECT_EQ(box.tree_checksum(pair.patched), util::tree_checksum(after));
  box.teardown(pair);
}

TEST_F(SandboxFixture, FailedOutcomeIsContractViolation) {
  auto outcome = diffkit::apply_text("garbage", kProject);
  ASSERT_FALSE(outcome.applied());
  try {
    box.provision_pair(image, outcome);
    FAIL();
  } catch (const SandboxError& e) {
    EXPECT_EQ(e.kind(), SandboxError::Kind::ContractViolation);
  }
  EXPECT_EQ(engine.container_count(), 0u);
}

TEST_F(SandboxFixture, DifferentialRunSeesTheFix) {
  auto pair = box.provision_pair(image, diffkit::apply_text(kFix, kProject));
  auto run = box.run_differential(pair, payload());
  EXPECT_EQ(run.baseline_record.role, "baseline");
  EXPECT_EQ(run.patched_record.role, "patched");
  EXPECT_EQ(run.baseline_record.exit_code, 0);
  EXPECT_EQ(run.patched_record.exit_code, 1);
  EXPECT_EQ(run.baseline_record.stdout_bytes, "pwned\n");
  EXPECT_EQ(engine.running_count(), 0u);
  box.teardown(pair);
}

TEST_F(SandboxFixture, OfflinePocLosesNetworkBeforeRunning) {
  bool saw_network = true;
  std::map<std::string, std::string> env;
  auto inner = testsupport::marker_shim();
  engine.set_shim([&](const testsupport::ShimCall& call) {
    saw_network = call.network_attached;
    env = call.env;
    return inner(call);
  });
  auto p = payload();
  p.config_template.deps = {"requests==2.31.0"};
  auto pair = box.provision_pair(image, std::nullopt);
  box.run_differential(pair, p);
  EXPECT_FALSE(saw_network);
  EXPECT_EQ(env["PIP_NO_INDEX"], "1");
  box.teardown(pair);
}

TEST_F(SandboxFixture, GarbageOutputNamesTheRole) {
  auto inner = testsupport::marker_shim();
  engine.set_shim([&](const testsupport::ShimCall& call) {
    if (call.config.role == "patched") return testsupport::ShimReply{"segfault\n", "", 139};
    return inner(call);
  });
  auto pair = box.provision_pair(image, std::nullopt);
  try {
    box.run_differential(pair, payload());
    FAIL();
  } catch (const ShimProtocolError& e) {
    EXPECT_NE(std::string(e.what()).find("patched"), std::string::npos);
  }
  EXPECT_EQ(engine.running_count(), 0u);
  box.teardown(pair);
}

TEST_F(SandboxFixture, SilentShimExceedsBudget) {
  engine.set_shim([](const testsupport::ShimCall&) {
    return testsupport::ShimReply{"", "", 0, std::chrono::milliseconds(3500)};
  });
  auto pair = box.provision_pair(image, std::nullopt);
  EXPECT_THROW(box.run_differential(pair, payload()), ShimProtocolError);
  box.teardown(pair);
}

TEST_F(SandboxFixture, TeardownIsIdempotent) {
  auto pair = box.provision_pair(image, std::nullopt);
  box.teardown(pair);
  EXPECT_NO_THROW(box.teardown(pair));
  EXPECT_EQ(engine.container_count(), 0u);

  ContainerPair never_started;
  EXPECT_NO_THROW(box.teardown(never_started));

  auto again = box.provision_pair(image, std::nullopt);
  engine.forget_containers();
  EXPECT_NO_THROW(box.teardown(again));
  EXPECT_TRUE(again.baseline.removed);
}

TEST(Sandbox, TeardownWithEngineGoneDoesNotThrow) {
  ContainerPair pair;
  std::optional<Sandbox> box;
  {
    FakeEngine engine;
    box.emplace(EngineEndpoint::parse(engine.endpoint()), quick_options());
    auto image = box->build_image("FROM python:3.11-slim\n", context(), "eb/t:1");
    pair = box->provision_pair(image, std::nullopt);
  }
  EXPECT_NO_THROW(box->teardown(pair));
  EXPECT_FALSE(pair.baseline.removed);
}

TEST_F(SandboxFixture, SweepRemovesManagedContainers) {
  box.provision_pair(image, std::nullopt);
  box.provision_pair(image, std::nullopt);
  EXPECT_EQ(box.sweep(), 4u);
  EXPECT_EQ(engine.container_count(), 0u);
}
