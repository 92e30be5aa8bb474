// SPDX-License-Identifier: Apache-2.0
#include <sys/socket.h>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "exploitbench/sandbox.hpp"

namespace exploitbench::sandbox {

using nlohmann::json;

std::string_view to_string(SandboxError::Kind kind) {
  switch (kind) {
    case SandboxError::Kind::EngineUnreachable: return "EngineUnreachable";
    case SandboxError::Kind::EngineRequestFailed: return "EngineRequestFailed";
    case SandboxError::Kind::BuildFailed: return "BuildFailed";
    case SandboxError::Kind::ProvisionFailed: return "ProvisionFailed";
    case SandboxError::Kind::PatchWriteFailed: return "PatchWriteFailed";
    case SandboxError::Kind::ContractViolation: return "ContractViolation";
  }
  return "?";
}

EngineEndpoint EngineEndpoint::parse(const std::string& text) {
  EngineEndpoint e;
  std::string rest = text;
  if (rest.starts_with("unix://")) {
    e.socket_path = rest.substr(7);
    return e;
  }
  if (rest.starts_with("/")) {
    e.socket_path = rest;
    return e;
  }
  for (std::string_view scheme : {"tcp://", "http://"}) {
    if (rest.starts_with(scheme)) rest = rest.substr(scheme.size());
  }
  while (!rest.empty() && rest.back() == '/') rest.pop_back();
  auto colon = rest.rfind(':');
  if (colon == std::string::npos || colon == 0) {
    throw SandboxError(SandboxError::Kind::EngineUnreachable,
                       "engine endpoint needs a socket path or host:port: " + text);
  }
  e.host = rest.substr(0, colon);
  try {
    e.port = std::stoi(rest.substr(colon + 1));
  } catch (const std::exception&) {
    throw SandboxError(SandboxError::Kind::EngineUnreachable, "bad engine port in " + text);
  }
  return e;
}

std::string EngineEndpoint::describe() const {
  return is_unix() ? "unix://" + socket_path : "tcp://" + host + ":" + std::to_string(port);
}

void demux_stream(std::string_view raw, std::string& out, std::string& err) {
  std::size_t pos = 0;
  while (pos + 8 <= raw.size()) {
    auto stream = static_cast<unsigned char>(raw[pos]);
    std::uint32_t len = (static_cast<std::uint32_t>(static_cast<unsigned char>(raw[pos + 4])) << 24) |
                        (static_cast<std::uint32_t>(static_cast<unsigned char>(raw[pos + 5])) << 16) |
                        (static_cast<std::uint32_t>(static_cast<unsigned char>(raw[pos + 6])) << 8) |
                        static_cast<std::uint32_t>(static_cast<unsigned char>(raw[pos + 7]));
    pos += 8;
    auto chunk = raw.substr(pos, std::min<std::size_t>(len, raw.size() - pos));
    (stream == 2 ? err : out).append(chunk);
    pos += chunk.size();
  }
}

namespace {

std::string q(const std::string& s) { return httplib::detail::encode_query_param(s); }

}  // namespace

EngineClient::EngineClient(EngineEndpoint endpoint) : endpoint_(std::move(endpoint)) {}

EngineClient::Response EngineClient::request(const std::string& method, const std::string& path,
                                             const std::string& body,
                                             const std::string& content_type,
                                             std::optional<std::chrono::seconds> timeout) const {
  std::unique_ptr<httplib::ClientImpl> cli;
  if (endpoint_.is_unix()) {
    cli = std::make_unique<httplib::ClientImpl>(endpoint_.socket_path, 80);
    cli->set_address_family(AF_UNIX);
  } else {
    cli = std::make_unique<httplib::ClientImpl>(endpoint_.host, endpoint_.port);
  }
  cli->set_connection_timeout(std::chrono::seconds(5));
  cli->set_read_timeout(timeout.value_or(std::chrono::seconds(600)));
  cli->set_write_timeout(std::chrono::seconds(600));

  httplib::Headers headers{{"Host", "docker"}};
  const std::string full = "/" + endpoint_.api_version + path;
  const std::string ctype = content_type.empty() ? "application/json" : content_type;
  httplib::Result r;
  if (method == "GET") {
    r = cli->Get(full, headers);
  } else if (method == "POST") {
    r = cli->Post(full, headers, body, ctype);
  } else if (method == "PUT") {
    r = cli->Put(full, headers, body, ctype);
  } else {
    r = cli->Delete(full, headers);
  }
  if (!r) {
    auto err = r.error();
    if (err == httplib::Error::Read && timeout) return {-1, {}};
    throw SandboxError(SandboxError::Kind::EngineUnreachable,
                       method + " " + path + " on " + endpoint_.describe() + ": " +
                           httplib::to_string(err));
  }
  return {r->status, r->body};
}

bool EngineClient::ping() const {
  try {
    auto r = request("GET", "/_ping", {}, {}, std::chrono::seconds(5));
    return r.status == 200;
  } catch (const SandboxError&) {
    return false;
  }
}

namespace {

[[noreturn]] void request_failed(const std::string& what, int status, const std::string& body,
                                 SandboxError::Kind kind = SandboxError::Kind::EngineRequestFailed) {
  std::string message = body;
  try {
    auto doc = json::parse(body);
    if (doc.is_object() && doc.contains("message")) message = doc["message"].get<std::string>();
  } catch (const json::exception&) {
  }
  throw SandboxError(kind, what + " failed (" + std::to_string(status) + "): " + message);
}

std::string tail_lines(const std::string& log, std::size_t n) {
  std::size_t pos = log.size();
  for (std::size_t i = 0; i < n && pos > 0; ++i) {
    pos = log.rfind('\n', pos - 1);
    if (pos == std::string::npos) return log;
  }
  return log.substr(pos + 1);
}

}  // namespace

std::string EngineClient::build(const std::string& context_tar, const std::string& tag,
                                std::string* log_out) const {
  auto r = request("POST", "/build?t=" + q(tag) + "&rm=1&forcerm=1", context_tar,
                   "application/x-tar");
  std::string log;
  std::string image_id;
  std::string error;
  std::size_t start = 0;
  while (start < r.body.size()) {
    auto end = r.body.find('\n', start);
    if (end == std::string::npos) end = r.body.size();
    auto line = std::string_view(r.body).substr(start, end - start);
    start = end + 1;
    if (line.empty()) continue;
    json msg;
    try {
      msg = json::parse(line);
    } catch (const json::exception&) {
      log.append(line).push_back('\n');
      continue;
    }
    if (msg.contains("stream") && msg["stream"].is_string()) log += msg["stream"].get<std::string>();
    if (msg.contains("error") && msg["error"].is_string()) {
      error = msg["error"].get<std::string>();
      log += error + "\n";
    }
    if (msg.contains("aux") && msg["aux"].is_object() && msg["aux"].contains("ID")) {
      image_id = msg["aux"]["ID"].get<std::string>();
    }
  }
  if (log_out) *log_out = log;
  if (r.status != 200 || !error.empty()) {
    if (error.empty()) error = r.body;
    throw SandboxError(SandboxError::Kind::BuildFailed, "image build for " + tag + " failed: " + error,
                       tail_lines(log, 40));
  }
  return image_id.empty() ? tag : image_id;
}

std::string EngineClient::create_container(const std::string& image, const std::string& name,
                                           const std::map<std::string, std::string>& labels,
                                           const ResourceCaps& caps) const {
  json body{
      {"Image", image},
      {"Cmd", {"sleep", "infinity"}},
      {"Labels", labels},
      {"WorkingDir", "/workspace/project"},
      {"HostConfig",
       {{"NanoCpus", static_cast<std::int64_t>(caps.cpus * 1e9)},
        {"Memory", caps.memory_bytes},
        {"MemorySwap", caps.memory_bytes},
        {"PidsLimit", caps.pids_limit},
        {"Init", true},
        {"Tmpfs", {{"/tmp", "rw,size=" + std::to_string(caps.scratch_bytes)}}}}},
  };
  auto r = request("POST", "/containers/create?name=" + q(name), body.dump());
  if (r.status != 201) {
    request_failed("create container from " + image, r.status, r.body,
                   SandboxError::Kind::ProvisionFailed);
  }
  return json::parse(r.body).at("Id").get<std::string>();
}

void EngineClient::start(const std::string& id) const {
  auto r = request("POST", "/containers/" + id + "/start");
  if (r.status != 204 && r.status != 304) {
    request_failed("start " + id, r.status, r.body, SandboxError::Kind::ProvisionFailed);
  }
}

void EngineClient::put_archive(const std::string& id, const std::string& dir,
                               const std::string& tar) const {
  auto r = request("PUT", "/containers/" + id + "/archive?path=" + q(dir), tar,
                   "application/x-tar");
  if (r.status != 200) request_failed("copy into " + id, r.status, r.body);
}

std::string EngineClient::get_archive(const std::string& id, const std::string& path) const {
  auto r = request("GET", "/containers/" + id + "/archive?path=" + q(path));
  if (r.status != 200) request_failed("copy from " + id, r.status, r.body);
  return r.body;
}

ExecResult EngineClient::exec(const std::string& id, const std::vector<std::string>& cmd,
                              const std::map<std::string, std::string>& env,
                              std::optional<std::chrono::seconds> budget) const {
  json env_list = json::array();
  for (const auto& [k, v] : env) env_list.push_back(k + "=" + v);
  json body{{"AttachStdout", true}, {"AttachStderr", true}, {"Tty", false},
            {"Cmd", cmd},           {"Env", env_list}};
  auto created = request("POST", "/containers/" + id + "/exec", body.dump());
  if (created.status != 201) request_failed("exec in " + id, created.status, created.body);
  auto exec_id = json::parse(created.body).at("Id").get<std::string>();

  ExecResult result;
  auto started = request("POST", "/exec/" + exec_id + "/start",
                         json{{"Detach", false}, {"Tty", false}}.dump(), {},
                         budget.value_or(std::chrono::seconds(3600)));
  if (started.status == -1) {
    result.budget_exceeded = true;
    return result;
  }
  if (started.status != 200) request_failed("exec start in " + id, started.status, started.body);
  demux_stream(started.body, result.out, result.err);

  auto inspect = request("GET", "/exec/" + exec_id + "/json");
  if (inspect.status != 200) request_failed("exec inspect", inspect.status, inspect.body);
  auto doc = json::parse(inspect.body);
  if (doc.contains("ExitCode") && doc["ExitCode"].is_number_integer()) {
    result.exit_code = doc["ExitCode"].get<int>();
  }
  return result;
}

std::vector<std::string> EngineClient::networks(const std::string& id) const {
  auto r = request("GET", "/containers/" + id + "/json");
  if (r.status != 200) request_failed("inspect " + id, r.status, r.body);
  std::vector<std::string> out;
  auto doc = json::parse(r.body);
  auto settings = doc.find("NetworkSettings");
  if (settings != doc.end() && settings->contains("Networks") &&
      (*settings)["Networks"].is_object()) {
    for (const auto& [name, _] : (*settings)["Networks"].items()) out.push_back(name);
  }
  return out;
}

void EngineClient::disconnect(const std::string& id, const std::string& network) const {
  auto r = request("POST", "/networks/" + q(network) + "/disconnect",
                   json{{"Container", id}, {"Force", true}}.dump());
  if (r.status != 200) request_failed("disconnect " + id + " from " + network, r.status, r.body);
}

void EngineClient::stop(const std::string& id, int grace_s) const {
  auto r = request("POST", "/containers/" + id + "/stop?t=" + std::to_string(grace_s));
  if (r.status != 204 && r.status != 304 && r.status != 404) {
    request_failed("stop " + id, r.status, r.body);
  }
}

void EngineClient::remove(const std::string& id) const {
  auto r = request("DELETE", "/containers/" + id + "?force=true&v=true");
  if (r.status != 204 && r.status != 200 && r.status != 404) {
    request_failed("remove " + id, r.status, r.body);
  }
}

std::vector<std::string> EngineClient::list_by_label(const std::string& label) const {
  json filters{{"label", {label}}};
  auto r = request("GET", "/containers/json?all=true&filters=" + q(filters.dump()));
  if (r.status != 200) request_failed("list containers", r.status, r.body);
  std::vector<std::string> out;
  for (const auto& c : json::parse(r.body)) out.push_back(c.at("Id").get<std::string>());
  return out;
}

}  // namespace exploitbench::sandbox
