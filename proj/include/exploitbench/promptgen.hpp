// SPDX-License-Identifier: Apache-2.0
#pragma once

// Repair prompts, model providers and response parsing.

#include <chrono>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace exploitbench::promptgen {

inline constexpr std::string_view kNoPatchSentinel = "[VulnRepairEval No Patch]";

enum class Variant { Base, WithVulnType, WithCoT, WithExample };

std::string_view to_string(Variant v);
// Accepts the enum spelling, case-insensitively ("withcot", "Base", ...).
std::optional<Variant> parse_variant(std::string_view text);

struct SourceFile {
  std::string path;
  std::string code;
};

struct WorkedExample {
  std::string filename;
  std::string code;
  std::string patch;
};

struct PromptRequest {
  Variant variant = Variant::Base;
  // Several files become repeated FILENAME/CODE sections, in the given order.
  std::vector<SourceFile> files;
  std::optional<std::string> vuln_type;     // WithVulnType only
  std::optional<WorkedExample> example;     // WithExample only
};

class PromptError : public std::runtime_error {
 public:
  enum class Kind { MissingField };
  PromptError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

std::string build_prompt(const PromptRequest& req);

struct ParsedResponse {
  enum class Outcome { Abstained, PatchEmitted, Malformed };
  Outcome outcome = Outcome::Malformed;
  std::string patch_text;  // PatchEmitted only
  std::string reason;      // Malformed only
  // Format deviations, logged but not scored.
  bool fenced = false;
  bool had_prose = false;
  bool sentinel_with_patch = false;
};

std::string_view to_string(ParsedResponse::Outcome o);

// Total: never throws.
ParsedResponse parse_response(std::string_view text);

// ---- providers ----

class ProviderError : public std::runtime_error {
 public:
  ProviderError(const std::string& what, bool transient)
      : std::runtime_error(what), transient_(transient) {}
  bool transient() const { return transient_; }

 private:
  bool transient_;
};

class BudgetExceeded : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Completion {
  std::string text;
  // Total tokens reported by the provider, or an estimate.
  std::size_t tokens = 0;
};

struct ProviderConfig {
  std::string name;
  std::string endpoint;  // base URL of an OpenAI-compatible API
  std::string model;
  std::string api_key_env;
  int max_tokens = 4096;
  std::optional<double> temperature = 0.0;
  double requests_per_minute = 0;  // 0 = unlimited
  std::size_t max_requests = 0;    // 0 = unlimited
  std::size_t max_total_tokens = 0;
  int timeout_s = 300;
};

std::vector<ProviderConfig> load_provider_configs(const std::filesystem::path& path);
std::vector<ProviderConfig> parse_provider_configs(std::string_view json_text);

class ModelProvider {
 public:
  virtual ~ModelProvider() = default;
  virtual const std::string& name() const = 0;
  virtual Completion complete(const std::string& prompt) = 0;
};

// Chat-completions over HTTP(S). The credential is read from the environment
// at construction.
class OpenAiCompatibleProvider : public ModelProvider {
 public:
  explicit OpenAiCompatibleProvider(ProviderConfig config);
  const std::string& name() const override { return config_.name; }
  Completion complete(const std::string& prompt) override;

 private:
  ProviderConfig config_;
  std::string api_key_;
};

// Test double: replies are consumed in order; a reply that is an exception
// is thrown instead of returned. The last reply repeats once exhausted.
class ScriptedProvider : public ModelProvider {
 public:
  using Reply = std::function<Completion(const std::string& prompt)>;
  explicit ScriptedProvider(std::string name, std::vector<Reply> replies);
  static Reply text(std::string t);
  static Reply fail(std::string message, bool transient = true);

  const std::string& name() const override { return name_; }
  Completion complete(const std::string& prompt) override;
  std::size_t calls() const;
  std::vector<std::string> prompts() const;

 private:
  std::string name_;
  std::vector<Reply> replies_;
  std::vector<std::string> prompts_;
  mutable std::mutex mu_;
};

// Spaces requests at least 60/rpm seconds apart.
class RateLimiter {
 public:
  explicit RateLimiter(double requests_per_minute);
  void acquire();

 private:
  std::chrono::steady_clock::duration interval_;
  std::chrono::steady_clock::time_point next_;
  std::mutex mu_;
};

// Appends one JSON object per line; thread safe.
class AuditLog {
 public:
  explicit AuditLog(std::filesystem::path path);
  void append(const std::string& json_line);
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::mutex mu_;
};

struct QueryContext {
  std::string bundle_id;
  std::string variant;
};

struct RetryPolicy {
  int max_retries = 3;
  std::chrono::milliseconds initial_backoff{1000};
  // Injectable for tests.
  std::function<void(std::chrono::milliseconds)> sleep;
};

// A provider plus its rate limit, budget and audit trail. Safe to share
// across threads; this is the "provider handle" used by every caller.
class ModelClient {
 public:
  ModelClient(std::shared_ptr<ModelProvider> provider, ProviderConfig limits,
              AuditLog* audit = nullptr, RetryPolicy retry = {});

  const std::string& name() const { return provider_->name(); }
  // Throws ProviderError once retries are spent, BudgetExceeded when a cap
  // would be crossed.
  std::string query(const std::string& prompt, const QueryContext& ctx);

  std::size_t requests_made() const;
  std::size_t tokens_used() const;
  std::size_t retries_made() const;

 private:
  std::shared_ptr<ModelProvider> provider_;
  ProviderConfig limits_;
  AuditLog* audit_;
  RetryPolicy retry_;
  RateLimiter limiter_;
  mutable std::mutex mu_;
  std::size_t requests_ = 0;
  std::size_t tokens_ = 0;
  std::size_t retries_ = 0;
};

}  // namespace exploitbench::promptgen
