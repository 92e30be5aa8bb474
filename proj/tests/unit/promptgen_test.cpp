// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <random>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "exploitbench/promptgen.hpp"
#include "exploitbench/util/file_tree.hpp"
#include "support/temp_dir.hpp"

using namespace exploitbench;
using namespace exploitbench::promptgen;

namespace {

const std::filesystem::path kFixtures = EXPLOITBENCH_FIXTURE_DIR;

std::string golden(const std::string& name) {
  return util::read_file(kFixtures / "golden" / ("prompt_" + name + ".txt"));
}

// Filling every slot with its own placeholder text yields the bare template.
PromptRequest placeholders(Variant v) {
  PromptRequest r;
  r.variant = v;
  r.files = {{"File name to be analyzed.", "File code to be analyzed."}};
  if (v == Variant::WithVulnType) r.vuln_type = "Specific type of vulnerabilities.";
  if (v == Variant::WithExample) {
    r.example = WorkedExample{"Some example file name.", "Some example file code.",
                              "Content of the corresponding example patch file"};
  }
  return r;
}

RetryPolicy no_sleep(std::vector<std::chrono::milliseconds>* sleeps = nullptr) {
  RetryPolicy p;
  p.sleep = [sleeps](std::chrono::milliseconds d) {
    if (sleeps) sleeps->push_back(d);
  };
  return p;
}

}  // namespace

TEST(Prompt, TemplatesMatchGoldens) {
  EXPECT_EQ(build_prompt(placeholders(Variant::Base)), golden("base"));
  EXPECT_EQ(build_prompt(placeholders(Variant::WithVulnType)), golden("vulntype"));
  EXPECT_EQ(build_prompt(placeholders(Variant::WithCoT)), golden("cot"));
  EXPECT_EQ(build_prompt(placeholders(Variant::WithExample)), golden("example"));
}

TEST(Prompt, CoreRulesAndSentinelPresent) {
  for (auto v : {Variant::Base, Variant::WithVulnType, Variant::WithCoT, Variant::WithExample}) {
    auto p = build_prompt(placeholders(v));
    EXPECT_NE(p.find("**Sole Source of Truth**"), std::string::npos);
    EXPECT_NE(p.find("**Strict Output Format**"), std::string::npos);
    EXPECT_NE(p.find("**Conditional Output**"), std::string::npos);
    EXPECT_NE(p.find("`[VulnRepairEval No Patch]`"), std::string::npos);
    EXPECT_EQ(p.find("Let's think step by step.") != std::string::npos, v == Variant::WithCoT);
  }
}

TEST(Prompt, CoTDiffersFromBaseOnlyByTheDirective) {
  auto base = build_prompt(placeholders(Variant::Base));
  auto cot = build_prompt(placeholders(Variant::WithCoT));
  auto at = cot.find("Let's think step by step.\n\n");
  ASSERT_NE(at, std::string::npos);
  EXPECT_EQ(cot.substr(0, at) + cot.substr(at + 27), base);
}

TEST(Prompt, SubstitutesFilesAndKeepsCodeBytes) {
  PromptRequest r;
  r.files = {{"pkg/a.py", "x = 1\n"}, {"pkg/b.py", "y = eval(s)\n"}};
  auto p = build_prompt(r);
  EXPECT_NE(p.find("<FILENAME>\npkg/a.py\n</FILENAME>\n<CODE>\nx = 1\n</CODE>\n\n<FILENAME>\npkg/b.py"),
            std::string::npos);
  EXPECT_LT(p.find("pkg/a.py"), p.find("pkg/b.py"));
}

TEST(Prompt, MissingFields) {
  PromptRequest r;
  r.files = {{"a.py", "x"}};
  r.variant = Variant::WithVulnType;
  EXPECT_THROW(build_prompt(r), PromptError);
  r.variant = Variant::WithExample;
  EXPECT_THROW(build_prompt(r), PromptError);
  r.variant = Variant::Base;
  r.files.clear();
  EXPECT_THROW(build_prompt(r), PromptError);
}

TEST(Prompt, VariantNames) {
  EXPECT_EQ(parse_variant("withcot"), Variant::WithCoT);
  EXPECT_EQ(parse_variant("Base"), Variant::Base);
  EXPECT_FALSE(parse_variant("cot-ish"));
}

TEST(ParseResponse, LabeledCorpus) {
  auto dir = kFixtures / "model_outputs";
  auto labels = nlohmann::json::parse(util::read_file(dir / "labels.json"));
  for (const auto& [file, label] : labels.items()) {
    SCOPED_TRACE(file);
    auto r = parse_response(util::read_file(dir / file));
    EXPECT_EQ(to_string(r.outcome), label.get<std::string>());
    if (r.outcome == ParsedResponse::Outcome::PatchEmitted) {
      auto expected = dir / (std::filesystem::path(file).stem().string() + ".expected");
      EXPECT_EQ(r.patch_text, util::read_file(expected));
    }
  }
}

TEST(ParseResponse, FlagsAndReasons) {
  auto prose = parse_response("I think this is fine, no changes.");
  EXPECT_EQ(prose.outcome, ParsedResponse::Outcome::Malformed);
  EXPECT_EQ(prose.reason, "no diff headers");

  auto both = parse_response(
      "[VulnRepairEval No Patch]\n--- a/x\n+++ b/x\n@@ -1 +1 @@\n-a\n+b\n");
  EXPECT_EQ(both.outcome, ParsedResponse::Outcome::PatchEmitted);
  EXPECT_TRUE(both.sentinel_with_patch);

  auto fenced = parse_response("Fix:\n```diff\n--- a/x\n+++ b/x\n@@ -1 +1 @@\n-a\n+b\n```\n");
  EXPECT_TRUE(fenced.fenced);
  EXPECT_TRUE(fenced.had_prose);
}

TEST(ParseResponse, NeverThrows) {
  std::mt19937 rng(5);
  const std::string alphabet = "-+@ \n`[]abc/";
  for (int i = 0; i < 2000; ++i) {
    std::string s;
    for (int n = rng() % 80; n > 0; --n) s.push_back(alphabet[rng() % alphabet.size()]);
    EXPECT_NO_THROW(parse_response(s));
  }
}

TEST(ModelClient, ReturnsCannedText) {
  auto p = std::make_shared<ScriptedProvider>("mock", std::vector{ScriptedProvider::text("hi")});
  ModelClient c(p, ProviderConfig{}, nullptr, no_sleep());
  EXPECT_EQ(c.query("prompt", {"CVE-1", "Base"}), "hi");
}

TEST(ModelClient, RetriesTransientFailures) {
  testsupport::TempDir dir;
  AuditLog audit(dir / "audit.jsonl");
  auto p = std::make_shared<ScriptedProvider>(
      "mock", std::vector{ScriptedProvider::fail("503"), ScriptedProvider::fail("503"),
                          ScriptedProvider::text("ok")});
  std::vector<std::chrono::milliseconds> sleeps;
  ModelClient c(p, ProviderConfig{}, &audit, no_sleep(&sleeps));
  EXPECT_EQ(c.query("prompt", {"CVE-1", "Base"}), "ok");
  EXPECT_EQ(c.retries_made(), 2u);
  ASSERT_EQ(sleeps.size(), 2u);
  EXPECT_EQ(sleeps[1], 2 * sleeps[0]);
  auto rec = nlohmann::json::parse(util::read_file(audit.path()));
  EXPECT_EQ(rec["retries"], 2);
  EXPECT_EQ(rec["bundle"], "CVE-1");
  EXPECT_EQ(rec["outcome"], "ok");
}

TEST(ModelClient, GivesUpAfterThreeRetries) {
  auto p = std::make_shared<ScriptedProvider>("mock", std::vector{ScriptedProvider::fail("503")});
  ModelClient c(p, ProviderConfig{}, nullptr, no_sleep());
  EXPECT_THROW(c.query("prompt", {}), ProviderError);
  EXPECT_EQ(p->calls(), 4u);
}

TEST(ModelClient, PermanentErrorsAreNotRetried) {
  auto p = std::make_shared<ScriptedProvider>(
      "mock", std::vector{ScriptedProvider::fail("401", false), ScriptedProvider::text("x")});
  ModelClient c(p, ProviderConfig{}, nullptr, no_sleep());
  EXPECT_THROW(c.query("prompt", {}), ProviderError);
  EXPECT_EQ(p->calls(), 1u);
}

TEST(ModelClient, RequestBudget) {
  auto p = std::make_shared<ScriptedProvider>("mock", std::vector{ScriptedProvider::text("x")});
  ProviderConfig cfg;
  cfg.max_requests = 2;
  ModelClient c(p, cfg, nullptr, no_sleep());
  c.query("a", {});
  c.query("b", {});
  EXPECT_THROW(c.query("c", {}), BudgetExceeded);
}

TEST(ProviderConfig, ParsesRoster) {
  auto roster = parse_provider_configs(R"({"providers":[
    {"name":"gpt-4o","endpoint":"https://api.example.com/v1","model":"gpt-4o",
     "api_key_env":"OPENAI_API_KEY","max_tokens":2048,"requests_per_minute":30},
    {"name":"local","endpoint":"http://127.0.0.1:8000/v1","temperature":null}]})");
  ASSERT_EQ(roster.size(), 2u);
  EXPECT_EQ(roster[0].max_tokens, 2048);
  EXPECT_EQ(roster[0].temperature, 0.0);
  EXPECT_FALSE(roster[1].temperature.has_value());
  EXPECT_EQ(roster[1].model, "local");
  EXPECT_THROW(parse_provider_configs("{"), std::invalid_argument);
}

TEST(OpenAiCompatibleProvider, TalksChatCompletions) {
  httplib::Server srv;
  nlohmann::json seen;
  std::string auth;
  int calls = 0;
  srv.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    if (++calls == 1) {
      res.status = 503;
      return;
    }
    seen = nlohmann::json::parse(req.body);
    auth = req.get_header_value("Authorization");
    res.set_content(R"({"choices":[{"message":{"content":"[VulnRepairEval No Patch]"}}],
                        "usage":{"total_tokens":42}})",
                    "application/json");
  });
  int port = srv.bind_to_any_port("127.0.0.1");
  std::thread t([&] { srv.listen_after_bind(); });
  srv.wait_until_ready();

  ::setenv("EXPLOITBENCH_TEST_KEY", "sk-test", 1);
  ProviderConfig cfg;
  cfg.name = "stub";
  cfg.model = "stub-model";
  cfg.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/v1/";
  cfg.api_key_env = "EXPLOITBENCH_TEST_KEY";
  ModelClient c(std::make_shared<OpenAiCompatibleProvider>(cfg), cfg, nullptr, no_sleep());
  EXPECT_EQ(c.query("hello", {}), "[VulnRepairEval No Patch]");
  EXPECT_EQ(c.tokens_used(), 42u);
  EXPECT_EQ(c.retries_made(), 1u);
  EXPECT_EQ(seen["model"], "stub-model");
  EXPECT_EQ(seen["messages"][0]["content"], "hello");
  EXPECT_EQ(seen["temperature"], 0.0);
  EXPECT_EQ(auth, "Bearer sk-test");
  srv.stop();
  t.join();
}
