// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <random>

#include "exploitbench/adjudicator.hpp"

using namespace exploitbench;
using namespace exploitbench::adjudicator;

namespace {

Matcher regex(Matcher::Kind k, std::string p) {
  Matcher m;
  m.kind = k;
  m.pattern = std::move(p);
  return m;
}

Matcher flag(Matcher::Kind k, bool v = true) {
  Matcher m;
  m.kind = k;
  m.flag = v;
  return m;
}

RunRecord record(std::optional<int> code, std::string out = {}, bool timed_out = false) {
  RunRecord r;
  r.role = "baseline";
  r.exit_code = code;
  r.stdout_bytes = std::move(out);
  r.timed_out = timed_out;
  return r;
}

const PocOutcome kSucceeded{PocOutcome::Value::ExploitSucceeded, {}, {}};
const PocOutcome kFailed{PocOutcome::Value::ExploitFailed, {}, {}};

}  // namespace

TEST(ClassifyOutcome, StdoutRegex) {
  ExpectationSpec exp{{regex(Matcher::Kind::StdoutRegex, "pwned")}};
  EXPECT_TRUE(classify_outcome(record(0, "you got pwned\n"), exp).succeeded());
  EXPECT_EQ(classify_outcome(record(0, "safe\n"), exp).value, PocOutcome::Value::ExploitFailed);
}

TEST(ClassifyOutcome, RegexSeesThroughInvalidUtf8) {
  ExpectationSpec exp{{regex(Matcher::Kind::StdoutRegex, "uid=0")}};
  EXPECT_TRUE(classify_outcome(record(0, std::string("\xff\xfe uid=0(root)\0", 16)), exp).succeeded());
}

TEST(ClassifyOutcome, TimeoutMatcherForRedos) {
  ExpectationSpec exp{{flag(Matcher::Kind::TimeoutExceeded)}};
  EXPECT_TRUE(classify_outcome(record(std::nullopt, {}, true), exp).succeeded());
  EXPECT_FALSE(classify_outcome(record(0), exp).succeeded());
}

TEST(ClassifyOutcome, AllMatchersMustHold) {
  Matcher code;
  code.kind = Matcher::Kind::ExitCode;
  code.exit_code = 0;
  ExpectationSpec exp{{code, regex(Matcher::Kind::StdoutRegex, "pwned")}};
  auto o = classify_outcome(record(0, "nothing"), exp);
  EXPECT_EQ(o.value, PocOutcome::Value::ExploitFailed);
  EXPECT_EQ(o.matched, std::vector<std::size_t>{0});
  EXPECT_TRUE(classify_outcome(record(0, "pwned"), exp).succeeded());
}

TEST(ClassifyOutcome, CrashIsNotAnExecutionError) {
  ExpectationSpec exp{{flag(Matcher::Kind::NonzeroExit, false)}};
  EXPECT_EQ(classify_outcome(record(139), exp).value, PocOutcome::Value::ExploitFailed);
}

TEST(ClassifyOutcome, FailFastDependencyFailure) {
  auto r = record(std::nullopt);
  r.dep_install_ok = false;
  ExpectationSpec exp{{flag(Matcher::Kind::NonzeroExit, false)}};
  EXPECT_EQ(classify_outcome(r, exp, true).value, PocOutcome::Value::ExecutionError);
  EXPECT_NE(classify_outcome(r, exp, false).value, PocOutcome::Value::ExecutionError);
  EXPECT_EQ(execution_error("shim").value, PocOutcome::Value::ExecutionError);
}

TEST(Verdict, Ordering) {
  auto clean = PatchState{false, ApplyTier::Clean};
  EXPECT_EQ(differential_verdict(kSucceeded, kFailed, clean).value, Verdict::Repaired);
  EXPECT_EQ(differential_verdict(kSucceeded, kFailed, clean).tier, ApplyTier::Clean);
  EXPECT_EQ(differential_verdict(kFailed, kFailed, clean).value, Verdict::BundleInvalid);
  EXPECT_EQ(differential_verdict(kFailed, std::nullopt, PatchState::abstain()).value,
            Verdict::BundleInvalid);
  EXPECT_EQ(differential_verdict(kSucceeded, kSucceeded, clean).value, Verdict::NotRepaired);
  EXPECT_EQ(differential_verdict(kSucceeded, std::nullopt, PatchState::abstain()).value,
            Verdict::Abstained);
  EXPECT_EQ(differential_verdict(kSucceeded, std::nullopt, PatchState{}).value,
            Verdict::PatchInapplicable);
  auto infra = differential_verdict(kSucceeded, execution_error("x"), clean);
  EXPECT_EQ(infra.value, Verdict::NotRepaired);
  EXPECT_TRUE(infra.infrastructure_flag);
}

TEST(Verdict, FuzzyToCleanKeepsRepaired) {
  auto fuzzy = differential_verdict(kSucceeded, kFailed, {false, ApplyTier::Fuzzy});
  auto clean = differential_verdict(kSucceeded, kFailed, {false, ApplyTier::Clean});
  EXPECT_EQ(fuzzy.value, Verdict::Repaired);
  EXPECT_EQ(clean.value, Verdict::Repaired);
}

TEST(FailureTaxonomy, Examples) {
  std::set<std::string> gt{"joblib/parallel.py"};
  EXPECT_EQ(classify_failure({Verdict::Repaired, ApplyTier::Clean}, gt, gt), FailureClass::Fixed);
  EXPECT_EQ(classify_failure({Verdict::Abstained, ApplyTier::None}, {}, gt), FailureClass::NotFound);
  EXPECT_EQ(classify_failure({Verdict::PatchInapplicable, ApplyTier::None}, gt, gt),
            FailureClass::PatchIssues);
  EXPECT_EQ(classify_failure({Verdict::NotRepaired, ApplyTier::Clean}, {"joblib/other.py"}, gt),
            FailureClass::NotFound);
  EXPECT_EQ(classify_failure({Verdict::NotRepaired, ApplyTier::Fuzzy}, gt, gt),
            FailureClass::PatchIssues);
  EXPECT_THROW(classify_failure({Verdict::BundleInvalid, ApplyTier::None}, gt, gt),
               std::invalid_argument);
}

TEST(FailureTaxonomy, PartitionOverRandomTuples) {
  std::mt19937 rng(1234);
  const std::vector<std::string> paths{"a.py", "b.py", "pkg/c.py", "pkg/d.py"};
  auto random_set = [&] {
    std::set<std::string> s;
    for (const auto& p : paths) {
      if (rng() % 3 == 0) s.insert(p);
    }
    return s;
  };
  std::map<FailureClass, int> counts;
  int classified = 0;
  for (int i = 0; i < 1000; ++i) {
    auto base = PocOutcome{static_cast<PocOutcome::Value>(rng() % 3), {}, {}};
    std::optional<PocOutcome> patched;
    if (rng() % 4) patched = PocOutcome{static_cast<PocOutcome::Value>(rng() % 3), {}, {}};
    PatchState patch{rng() % 5 == 0, static_cast<ApplyTier>(rng() % 3)};
    auto v = differential_verdict(base, patched, patch);
    if (!base.succeeded()) {
      EXPECT_EQ(v.value, Verdict::BundleInvalid);
      continue;
    }
    if (v.value == Verdict::Repaired) EXPECT_NE(v.tier, ApplyTier::None);
    if (v.value == Verdict::Abstained) EXPECT_EQ(v.tier, ApplyTier::None);
    auto c = classify_failure(v, random_set(), random_set());
    ++counts[c];
    ++classified;
  }
  int sum = 0;
  for (const auto& [_, n] : counts) sum += n;
  EXPECT_EQ(sum, classified);
}

TEST(EnumNames, RoundTrip) {
  for (auto v : {Verdict::Repaired, Verdict::NotRepaired, Verdict::PatchInapplicable,
                 Verdict::Abstained, Verdict::BundleInvalid}) {
    EXPECT_EQ(parse_verdict(to_string(v)), v);
  }
  EXPECT_EQ(parse_apply_tier("fuzzy"), ApplyTier::Fuzzy);
  EXPECT_EQ(parse_failure_class("NotFound"), FailureClass::NotFound);
  EXPECT_FALSE(parse_verdict("Fixed"));
}
