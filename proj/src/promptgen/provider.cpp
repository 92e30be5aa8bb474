// SPDX-License-Identifier: Apache-2.0
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "exploitbench/promptgen.hpp"
#include "exploitbench/util/encoding.hpp"
#include "exploitbench/util/file_tree.hpp"

namespace exploitbench::promptgen {

using nlohmann::json;

namespace {

std::size_t estimate_tokens(std::size_t bytes) { return (bytes + 3) / 4; }

std::string utc_now() {
  auto t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

std::vector<ProviderConfig> parse_provider_configs(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("provider config is not JSON: ") + e.what());
  }
  const json& list = doc.is_object() ? doc.value("providers", json::array()) : doc;
  if (!list.is_array()) throw std::invalid_argument("providers must be an array");
  std::vector<ProviderConfig> out;
  for (const auto& p : list) {
    try {
      ProviderConfig c;
      c.name = p.at("name").get<std::string>();
      c.endpoint = p.value("endpoint", "");
      c.model = p.value("model", c.name);
      c.api_key_env = p.value("api_key_env", "");
      c.max_tokens = p.value("max_tokens", c.max_tokens);
      if (p.contains("temperature")) {
        if (p["temperature"].is_null()) {
          c.temperature.reset();
        } else {
          c.temperature = p["temperature"].get<double>();
        }
      }
      c.requests_per_minute = p.value("requests_per_minute", 0.0);
      c.max_requests = p.value("max_requests", std::size_t{0});
      c.max_total_tokens = p.value("max_total_tokens", std::size_t{0});
      c.timeout_s = p.value("timeout_s", c.timeout_s);
      out.push_back(std::move(c));
    } catch (const json::exception& e) {
      throw std::invalid_argument(std::string("bad provider entry: ") + e.what());
    }
  }
  return out;
}

std::vector<ProviderConfig> load_provider_configs(const std::filesystem::path& path) {
  return parse_provider_configs(util::read_file(path));
}

OpenAiCompatibleProvider::OpenAiCompatibleProvider(ProviderConfig config)
    : config_(std::move(config)) {
  if (!config_.api_key_env.empty()) {
    if (const char* key = std::getenv(config_.api_key_env.c_str())) api_key_ = key;
  }
}

Completion OpenAiCompatibleProvider::complete(const std::string& prompt) {
  // Split "scheme://host[:port]/base" into the client origin and path prefix.
  auto scheme_end = config_.endpoint.find("://");
  auto path_start = config_.endpoint.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
  std::string origin = config_.endpoint.substr(0, path_start);
  std::string base = path_start == std::string::npos ? "" : config_.endpoint.substr(path_start);
  while (!base.empty() && base.back() == '/') base.pop_back();

  httplib::Client cli(origin);
  cli.set_connection_timeout(30);
  cli.set_read_timeout(config_.timeout_s);
  cli.set_write_timeout(60);
  httplib::Headers headers;
  if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

  json body{{"model", config_.model},
            {"messages", json::array({{{"role", "user"}, {"content", prompt}}})},
            {"max_tokens", config_.max_tokens}};
  if (config_.temperature) body["temperature"] = *config_.temperature;

  auto res = cli.Post(base + "/chat/completions", headers, body.dump(), "application/json");
  if (!res) {
    throw ProviderError(config_.name + ": transport error: " + httplib::to_string(res.error()),
                        true);
  }
  if (res->status == 429 || res->status >= 500) {
    throw ProviderError(config_.name + ": HTTP " + std::to_string(res->status), true);
  }
  if (res->status != 200) {
    throw ProviderError(config_.name + ": HTTP " + std::to_string(res->status) + ": " +
                            res->body.substr(0, 500),
                        false);
  }
  try {
    auto doc = json::parse(res->body);
    Completion c;
    const auto& content = doc.at("choices").at(0).at("message").at("content");
    c.text = content.is_null() ? "" : content.get<std::string>();
    if (doc.contains("usage") && doc["usage"].contains("total_tokens")) {
      c.tokens = doc["usage"]["total_tokens"].get<std::size_t>();
    } else {
      c.tokens = estimate_tokens(prompt.size() + c.text.size());
    }
    return c;
  } catch (const json::exception& e) {
    throw ProviderError(config_.name + ": unexpected response body: " + e.what(), false);
  }
}

ScriptedProvider::ScriptedProvider(std::string name, std::vector<Reply> replies)
    : name_(std::move(name)), replies_(std::move(replies)) {
  if (replies_.empty()) throw std::invalid_argument("scripted provider needs a reply");
}

ScriptedProvider::Reply ScriptedProvider::text(std::string t) {
  return [t = std::move(t)](const std::string& prompt) {
    return Completion{t, estimate_tokens(prompt.size() + t.size())};
  };
}

ScriptedProvider::Reply ScriptedProvider::fail(std::string message, bool transient) {
  return [message = std::move(message), transient](const std::string&) -> Completion {
    throw ProviderError(message, transient);
  };
}

Completion ScriptedProvider::complete(const std::string& prompt) {
  Reply reply;
  {
    std::lock_guard lock(mu_);
    auto idx = std::min(prompts_.size(), replies_.size() - 1);
    prompts_.push_back(prompt);
    reply = replies_[idx];
  }
  return reply(prompt);
}

std::size_t ScriptedProvider::calls() const {
  std::lock_guard lock(mu_);
  return prompts_.size();
}

std::vector<std::string> ScriptedProvider::prompts() const {
  std::lock_guard lock(mu_);
  return prompts_;
}

RateLimiter::RateLimiter(double requests_per_minute)
    : interval_(requests_per_minute > 0
                    ? std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                          std::chrono::duration<double>(60.0 / requests_per_minute))
                    : std::chrono::steady_clock::duration::zero()),
      next_(std::chrono::steady_clock::now()) {}

void RateLimiter::acquire() {
  if (interval_ == std::chrono::steady_clock::duration::zero()) return;
  std::chrono::steady_clock::time_point slot;
  {
    std::lock_guard lock(mu_);
    auto now = std::chrono::steady_clock::now();
    slot = std::max(now, next_);
    next_ = slot + interval_;
  }
  std::this_thread::sleep_until(slot);
}

AuditLog::AuditLog(std::filesystem::path path) : path_(std::move(path)) {
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
}

void AuditLog::append(const std::string& json_line) {
  std::lock_guard lock(mu_);
  std::ofstream out(path_, std::ios::app | std::ios::binary);
  out << json_line << '\n';
}

ModelClient::ModelClient(std::shared_ptr<ModelProvider> provider, ProviderConfig limits,
                         AuditLog* audit, RetryPolicy retry)
    : provider_(std::move(provider)),
      limits_(std::move(limits)),
      audit_(audit),
      retry_(std::move(retry)),
      limiter_(limits_.requests_per_minute) {
  if (!retry_.sleep) retry_.sleep = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

std::string ModelClient::query(const std::string& prompt, const QueryContext& ctx) {
  auto started = std::chrono::steady_clock::now();
  json rec{{"ts", utc_now()},
           {"provider", provider_->name()},
           {"model", limits_.model},
           {"bundle", ctx.bundle_id},
           {"variant", ctx.variant},
           {"prompt_sha256", util::sha256_hex(prompt)}};
  auto finish = [&](const std::string& outcome) {
    rec["outcome"] = outcome;
    rec["latency_ms"] = std::chrono::duration_cast<std::chrono::milliseconds>(
                            std::chrono::steady_clock::now() - started)
                            .count();
    if (audit_) audit_->append(rec.dump());
  };

  auto backoff = retry_.initial_backoff;
  int retries = 0;
  for (;;) {
    {
      std::lock_guard lock(mu_);
      if ((limits_.max_requests && requests_ >= limits_.max_requests) ||
          (limits_.max_total_tokens && tokens_ >= limits_.max_total_tokens)) {
        rec["retries"] = retries;
        finish("budget_exceeded");
        throw BudgetExceeded(provider_->name() + ": request or token budget exhausted");
      }
      ++requests_;
    }
    limiter_.acquire();
    try {
      auto c = provider_->complete(prompt);
      {
        std::lock_guard lock(mu_);
        tokens_ += c.tokens;
      }
      rec["retries"] = retries;
      rec["tokens"] = c.tokens;
      rec["response_sha256"] = util::sha256_hex(c.text);
      finish("ok");
      return c.text;
    } catch (const ProviderError& e) {
      if (!e.transient() || retries >= retry_.max_retries) {
        rec["retries"] = retries;
        rec["error"] = e.what();
        finish("provider_error");
        throw;
      }
      ++retries;
      {
        std::lock_guard lock(mu_);
        ++retries_;
      }
      spdlog::warn("{} (retry {}/{} in {} ms)", e.what(), retries, retry_.max_retries,
                   backoff.count());
      retry_.sleep(backoff);
      backoff *= 2;
    }
  }
}

std::size_t ModelClient::requests_made() const {
  std::lock_guard lock(mu_);
  return requests_;
}

std::size_t ModelClient::tokens_used() const {
  std::lock_guard lock(mu_);
  return tokens_;
}

std::size_t ModelClient::retries_made() const {
  std::lock_guard lock(mu_);
  return retries_;
}

}  // namespace exploitbench::promptgen
