// SPDX-License-Identifier: Apache-2.0
#pragma once

// PoC outcome classification, the baseline/patched verdict, and the
// Fixed / PatchIssues / NotFound taxonomy. Everything here is pure.

#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "exploitbench/diffkit.hpp"
#include "exploitbench/shim_protocol.hpp"
#include "exploitbench/taskbundle.hpp"

namespace exploitbench::adjudicator {

struct PocOutcome {
  enum class Value { ExploitSucceeded, ExploitFailed, ExecutionError };
  Value value = Value::ExecutionError;
  // Indices of the expectation matchers that held.
  std::vector<std::size_t> matched;
  std::string note;

  bool succeeded() const { return value == Value::ExploitSucceeded; }
};

std::string_view to_string(PocOutcome::Value v);

// Conjunctive: ExploitSucceeded iff every matcher holds. A failed dependency
// install under fail-fast is an infrastructure fault, not an exploit result.
PocOutcome classify_outcome(const RunRecord& record, const ExpectationSpec& exp,
                            bool fail_fast = false);

// For runs that never produced a record (shim protocol errors and the like).
PocOutcome execution_error(std::string note);

enum class ApplyTier { Clean, Fuzzy, None };
enum class Verdict { Repaired, NotRepaired, PatchInapplicable, Abstained, BundleInvalid };

std::string_view to_string(ApplyTier t);
std::string_view to_string(Verdict v);
std::optional<ApplyTier> parse_apply_tier(std::string_view s);
std::optional<Verdict> parse_verdict(std::string_view s);

ApplyTier tier_of(const diffkit::ApplyOutcome& outcome);

struct AttemptVerdict {
  Verdict value = Verdict::BundleInvalid;
  ApplyTier tier = ApplyTier::None;
  // Set when the patched side hit an infrastructure fault; needs review.
  bool infrastructure_flag = false;
};

// What the model produced, as far as the verdict cares.
struct PatchState {
  bool abstained = false;
  ApplyTier tier = ApplyTier::None;  // None: malformed or failed to apply

  static PatchState abstain() { return {true, ApplyTier::None}; }
  static PatchState from(const diffkit::ApplyOutcome& o) { return {false, tier_of(o)}; }
};

// `patched` may be absent when the patch never reached a container.
AttemptVerdict differential_verdict(const PocOutcome& baseline,
                                    const std::optional<PocOutcome>& patched,
                                    const PatchState& patch);

enum class FailureClass { Fixed, PatchIssues, NotFound };

std::string_view to_string(FailureClass c);
std::optional<FailureClass> parse_failure_class(std::string_view s);

// Throws std::invalid_argument for BundleInvalid, which has no class.
FailureClass classify_failure(const AttemptVerdict& verdict,
                              const std::set<std::string>& patch_targets,
                              const std::set<std::string>& ground_truth);

}  // namespace exploitbench::adjudicator
