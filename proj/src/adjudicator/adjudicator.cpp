// SPDX-License-Identifier: Apache-2.0
#include "exploitbench/adjudicator.hpp"

#include <algorithm>
#include <regex>

#include "exploitbench/util/encoding.hpp"

namespace exploitbench::adjudicator {

namespace {

bool holds(const Matcher& m, const RunRecord& r) {
  switch (m.kind) {
    case Matcher::Kind::ExitCode:
      return r.exit_code && *r.exit_code == m.exit_code;
    case Matcher::Kind::NonzeroExit:
      return (r.exit_code && *r.exit_code != 0) == m.flag;
    case Matcher::Kind::TimeoutExceeded:
      return r.timed_out == m.flag;
    case Matcher::Kind::StdoutRegex:
    case Matcher::Kind::StderrRegex: {
      auto text = util::utf8_lossy(m.kind == Matcher::Kind::StdoutRegex ? r.stdout_bytes
                                                                        : r.stderr_bytes);
      return std::regex_search(text, std::regex(m.pattern));
    }
  }
  return false;
}

template <typename E, std::size_t N>
std::optional<E> lookup(std::string_view s, const E (&values)[N]) {
  for (auto v : values) {
    if (to_string(v) == s) return v;
  }
  return std::nullopt;
}

}  // namespace

std::string_view to_string(PocOutcome::Value v) {
  switch (v) {
    case PocOutcome::Value::ExploitSucceeded: return "ExploitSucceeded";
    case PocOutcome::Value::ExploitFailed: return "ExploitFailed";
    case PocOutcome::Value::ExecutionError: return "ExecutionError";
  }
  return "?";
}

std::string_view to_string(ApplyTier t) {
  switch (t) {
    case ApplyTier::Clean: return "clean";
    case ApplyTier::Fuzzy: return "fuzzy";
    case ApplyTier::None: return "none";
  }
  return "?";
}

std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::Repaired: return "Repaired";
    case Verdict::NotRepaired: return "NotRepaired";
    case Verdict::PatchInapplicable: return "PatchInapplicable";
    case Verdict::Abstained: return "Abstained";
    case Verdict::BundleInvalid: return "BundleInvalid";
  }
  return "?";
}

std::string_view to_string(FailureClass c) {
  switch (c) {
    case FailureClass::Fixed: return "Fixed";
    case FailureClass::PatchIssues: return "PatchIssues";
    case FailureClass::NotFound: return "NotFound";
  }
  return "?";
}

std::optional<ApplyTier> parse_apply_tier(std::string_view s) {
  static const ApplyTier all[] = {ApplyTier::Clean, ApplyTier::Fuzzy, ApplyTier::None};
  return lookup(s, all);
}

std::optional<Verdict> parse_verdict(std::string_view s) {
  static const Verdict all[] = {Verdict::Repaired, Verdict::NotRepaired,
                                Verdict::PatchInapplicable, Verdict::Abstained,
                                Verdict::BundleInvalid};
  return lookup(s, all);
}

std::optional<FailureClass> parse_failure_class(std::string_view s) {
  static const FailureClass all[] = {FailureClass::Fixed, FailureClass::PatchIssues,
                                     FailureClass::NotFound};
  return lookup(s, all);
}

PocOutcome classify_outcome(const RunRecord& record, const ExpectationSpec& exp,
                            bool fail_fast) {
  PocOutcome out;
  if (fail_fast && !record.dep_install_ok) {
    out.value = PocOutcome::Value::ExecutionError;
    out.note = "dependency installation failed";
    return out;
  }
  for (std::size_t i = 0; i < exp.matchers.size(); ++i) {
    if (holds(exp.matchers[i], record)) out.matched.push_back(i);
  }
  out.value = out.matched.size() == exp.matchers.size() ? PocOutcome::Value::ExploitSucceeded
                                                        : PocOutcome::Value::ExploitFailed;
  return out;
}

PocOutcome execution_error(std::string note) {
  PocOutcome out;
  out.value = PocOutcome::Value::ExecutionError;
  out.note = std::move(note);
  return out;
}

ApplyTier tier_of(const diffkit::ApplyOutcome& outcome) {
  switch (outcome.status) {
    case diffkit::ApplyStatus::Clean: return ApplyTier::Clean;
    case diffkit::ApplyStatus::Fuzzy: return ApplyTier::Fuzzy;
    case diffkit::ApplyStatus::Failed: return ApplyTier::None;
  }
  return ApplyTier::None;
}

AttemptVerdict differential_verdict(const PocOutcome& baseline,
                                    const std::optional<PocOutcome>& patched,
                                    const PatchState& patch) {
  AttemptVerdict v;
  v.tier = patch.abstained ? ApplyTier::None : patch.tier;
  if (!baseline.succeeded()) {
    v.value = Verdict::BundleInvalid;
  } else if (patch.abstained) {
    v.value = Verdict::Abstained;
  } else if (patch.tier == ApplyTier::None) {
    v.value = Verdict::PatchInapplicable;
  } else if (!patched || patched->value == PocOutcome::Value::ExecutionError) {
    // A broken harness must never read as a repair.
    v.value = Verdict::NotRepaired;
    v.infrastructure_flag = true;
  } else {
    v.value = patched->succeeded() ? Verdict::NotRepaired : Verdict::Repaired;
  }
  return v;
}

FailureClass classify_failure(const AttemptVerdict& verdict,
                              const std::set<std::string>& patch_targets,
                              const std::set<std::string>& ground_truth) {
  switch (verdict.value) {
    case Verdict::BundleInvalid:
      throw std::invalid_argument("BundleInvalid attempts have no failure class");
    case Verdict::Repaired:
      return FailureClass::Fixed;
    case Verdict::Abstained:
      return FailureClass::NotFound;
    default:
      break;
  }
  bool overlap = std::any_of(patch_targets.begin(), patch_targets.end(),
                             [&](const std::string& p) { return ground_truth.count(p) > 0; });
  return overlap ? FailureClass::PatchIssues : FailureClass::NotFound;
}

}  // namespace exploitbench::adjudicator
