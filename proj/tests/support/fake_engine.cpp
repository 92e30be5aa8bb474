// SPDX-License-Identifier: Apache-2.0
#include "support/fake_engine.hpp"

#include <sys/socket.h>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "exploitbench/util/encoding.hpp"

namespace testsupport {

using nlohmann::json;
namespace util = exploitbench::util;

ShimHandler marker_shim() {
  return [](const ShimCall& call) {
    bool fixed = false;
    for (const auto& [path, data] : call.fs) {
      if (path.starts_with("workspace/project/") && data.find("FIXED") != std::string::npos) {
        fixed = true;
      }
    }
    exploitbench::RunRecord r;
    r.cve_id = call.config.cve_id;
    r.role = call.config.role;
    r.exit_code = fixed ? 1 : 0;
    r.stdout_bytes = fixed ? "blocked\n" : "pwned\n";
    r.duration_ms = 12;
    r.started_at_utc = "2024-05-01T12:00:00Z";
    ShimReply reply;
    reply.stdout_bytes = "collecting deps\n" + exploitbench::encode_record_line(r) + "\n";
    return reply;
  };
}

namespace {

std::string frame(int stream, std::string_view data) {
  std::string out;
  out.push_back(static_cast<char>(stream));
  out.append(3, '\0');
  auto n = static_cast<std::uint32_t>(data.size());
  out.push_back(static_cast<char>((n >> 24) & 0xFF));
  out.push_back(static_cast<char>((n >> 16) & 0xFF));
  out.push_back(static_cast<char>((n >> 8) & 0xFF));
  out.push_back(static_cast<char>(n & 0xFF));
  out.append(data);
  return out;
}

std::string rel(std::string_view path) {
  while (!path.empty() && path.front() == '/') path.remove_prefix(1);
  while (!path.empty() && path.back() == '/') path.remove_suffix(1);
  return std::string(path);
}

void not_found(httplib::Response& res) {
  res.status = 404;
  res.set_content(R"({"message":"No such container"})", "application/json");
}

}  // namespace

FakeEngine::FakeEngine() : socket_(dir_ / "engine.sock"), server_(std::make_unique<httplib::Server>()) {
  shim_ = marker_shim();
  install_routes();
  server_->set_address_family(AF_UNIX);
  if (!server_->bind_to_port(socket_.string(), 80)) {
    throw std::runtime_error("fake engine could not bind " + socket_.string());
  }
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
}

FakeEngine::~FakeEngine() {
  server_->stop();
  if (thread_.joinable()) thread_.join();
}

void FakeEngine::set_shim(ShimHandler handler) {
  std::lock_guard lock(mu_);
  shim_ = std::move(handler);
}

std::size_t FakeEngine::running_count() const {
  std::lock_guard lock(mu_);
  std::size_t n = 0;
  for (const auto& [_, c] : containers_) n += c.running ? 1 : 0;
  return n;
}

std::size_t FakeEngine::container_count() const {
  std::lock_guard lock(mu_);
  return containers_.size();
}

std::vector<std::string> FakeEngine::requests() const {
  std::lock_guard lock(mu_);
  return requests_;
}

void FakeEngine::forget_containers() {
  std::lock_guard lock(mu_);
  containers_.clear();
}

std::string FakeEngine::run_exec(const std::string& exec_id, int& exit_code) {
  ShimHandler shim;
  ShimReply reply;
  std::optional<exploitbench::ShimConfig> config;
  exploitbench::FileTree fs_copy;
  std::map<std::string, std::string> env;
  bool network = false;
  {
    std::lock_guard lock(mu_);
    auto& ex = execs_.at(exec_id);
    auto& c = containers_.at(ex.container);
    const auto& cmd = ex.cmd;
    if (!c.running) {
      exit_code = 126;
      return frame(2, "container is not running\n");
    }
    if (!cmd.empty() && cmd[0] == "rm") {
      for (std::size_t i = 1; i < cmd.size(); ++i) {
        if (!cmd[i].starts_with("-")) c.fs.erase(rel(cmd[i]));
      }
      exit_code = 0;
      return {};
    }
    if (cmd.size() >= 4 && cmd[1] == "-m" && cmd[2] == "pip" && cmd[3] == "download") {
      exit_code = c.networks.empty() ? 1 : 0;
      return {};
    }
    if (cmd.size() == 3 && cmd[1] == "/opt/exploitbench/runner_shim") {
      auto it = c.fs.find(rel(cmd[2]));
      if (it == c.fs.end() || c.fs.count("opt/exploitbench/runner_shim") == 0) {
        exit_code = 2;
        return frame(2, "python: can't open file\n");
      }
      config = exploitbench::parse_shim_config(it->second);
      fs_copy = c.fs;
      env = ex.env;
      network = !c.networks.empty();
      shim = shim_;
    } else {
      exit_code = 127;
      return frame(2, "unknown command\n");
    }
  }
  reply = shim(ShimCall{fs_copy, *config, env, network});
  if (reply.delay.count() > 0) std::this_thread::sleep_for(reply.delay);
  exit_code = reply.exit_code;
  std::string body;
  if (!reply.stdout_bytes.empty()) body += frame(1, reply.stdout_bytes);
  if (!reply.stderr_bytes.empty()) body += frame(2, reply.stderr_bytes);
  return body;
}

void FakeEngine::install_routes() {
  auto& s = *server_;
  const std::string v = "/v1\\.41";

  s.set_logger([this](const httplib::Request& req, const httplib::Response&) {
    std::lock_guard lock(mu_);
    requests_.push_back(req.method + " " + req.path);
  });

  s.Get(v + "/_ping", [](const httplib::Request&, httplib::Response& res) {
    res.set_content("OK", "text/plain");
  });

  s.Post(v + "/build", [this](const httplib::Request& req, httplib::Response& res) {
    std::string dockerfile;
    exploitbench::FileTree fs;
    for (auto& e : util::read_tar(req.body)) {
      if (e.directory) continue;
      if (e.path == "Dockerfile") {
        dockerfile = e.data;
      } else if (e.path.starts_with("project/")) {
        fs["workspace/" + e.path] = e.data;
      } else {
        fs["opt/exploitbench/context/" + e.path] = e.data;
      }
    }
    std::string out = json{{"stream", "Step 1/1 : FROM base\n"}}.dump() + "\n";
    if (dockerfile.empty() || dockerfile.find("RUN false") != std::string::npos) {
      out += json{{"stream", "Step 2/2 : RUN false\n"}}.dump() + "\n";
      out += json{{"error", "The command '/bin/sh -c false' returned a non-zero code: 1"}}.dump() +
             "\n";
      res.set_content(out, "application/json");
      return;
    }
    std::string id = "sha256:" + util::sha256_hex(req.body);
    {
      std::lock_guard lock(mu_);
      images_[id] = fs;
      if (req.has_param("t")) images_[req.get_param_value("t")] = fs;
    }
    out += json{{"aux", {{"ID", id}}}}.dump() + "\n";
    res.set_content(out, "application/json");
  });

  s.Post(v + "/containers/create", [this](const httplib::Request& req, httplib::Response& res) {
    auto body = json::parse(req.body);
    std::lock_guard lock(mu_);
    auto img = images_.find(body.at("Image").get<std::string>());
    if (img == images_.end()) {
      res.status = 404;
      res.set_content(R"({"message":"No such image"})", "application/json");
      return;
    }
    Container c;
    c.image = img->first;
    c.fs = img->second;
    if (body.contains("Labels")) c.labels = body["Labels"].get<std::map<std::string, std::string>>();
    std::string id = "c" + std::to_string(next_id_++);
    containers_[id] = std::move(c);
    res.status = 201;
    res.set_content(json{{"Id", id}}.dump(), "application/json");
  });

  s.Post(v + "/containers/([^/]+)/start", [this](const httplib::Request& req, httplib::Response& res) {
    std::lock_guard lock(mu_);
    auto it = containers_.find(req.matches[1]);
    if (it == containers_.end()) return not_found(res);
    res.status = it->second.running ? 304 : 204;
    it->second.running = true;
  });

  s.Post(v + "/containers/([^/]+)/stop", [this](const httplib::Request& req, httplib::Response& res) {
    std::lock_guard lock(mu_);
    auto it = containers_.find(req.matches[1]);
    if (it == containers_.end()) return not_found(res);
    res.status = it->second.running ? 204 : 304;
    it->second.running = false;
  });

  s.Delete(v + "/containers/([^/]+)", [this](const httplib::Request& req, httplib::Response& res) {
    std::lock_guard lock(mu_);
    if (containers_.erase(req.matches[1]) == 0) return not_found(res);
    res.status = 204;
  });

  s.Put(v + "/containers/([^/]+)/archive", [this](const httplib::Request& req, httplib::Response& res) {
    std::lock_guard lock(mu_);
    auto it = containers_.find(req.matches[1]);
    if (it == containers_.end()) return not_found(res);
    auto base = rel(req.get_param_value("path"));
    for (auto& e : util::read_tar(req.body)) {
      if (e.directory) continue;
      it->second.fs[base.empty() ? e.path : base + "/" + e.path] = e.data;
    }
    res.status = 200;
  });

  s.Get(v + "/containers/([^/]+)/archive", [this](const httplib::Request& req, httplib::Response& res) {
    std::lock_guard lock(mu_);
    auto it = containers_.find(req.matches[1]);
    if (it == containers_.end()) return not_found(res);
    auto base = rel(req.get_param_value("path"));
    auto leaf = base.substr(base.rfind('/') + 1);
    exploitbench::FileTree out;
    for (const auto& [path, data] : it->second.fs) {
      if (path.starts_with(base + "/")) out[leaf + path.substr(base.size())] = data;
    }
    res.set_content(util::write_tar(out), "application/x-tar");
  });

  s.Get(v + "/containers/([^/]+)/json", [this](const httplib::Request& req, httplib::Response& res) {
    std::lock_guard lock(mu_);
    auto it = containers_.find(req.matches[1]);
    if (it == containers_.end()) return not_found(res);
    json nets = json::object();
    for (const auto& n : it->second.networks) nets[n] = json::object();
    res.set_content(json{{"Id", req.matches[1]}, {"NetworkSettings", {{"Networks", nets}}}}.dump(),
                    "application/json");
  });

  s.Get(v + "/containers/json", [this](const httplib::Request& req, httplib::Response& res) {
    std::vector<std::string> wanted;
    if (req.has_param("filters")) {
      auto f = json::parse(req.get_param_value("filters"));
      if (f.contains("label")) wanted = f["label"].get<std::vector<std::string>>();
    }
    json out = json::array();
    std::lock_guard lock(mu_);
    for (const auto& [id, c] : containers_) {
      bool ok = true;
      for (const auto& w : wanted) {
        auto eq = w.find('=');
        auto key = w.substr(0, eq);
        auto it = c.labels.find(key);
        if (it == c.labels.end() || (eq != std::string::npos && it->second != w.substr(eq + 1))) {
          ok = false;
        }
      }
      if (ok) out.push_back({{"Id", id}, {"Labels", c.labels}});
    }
    res.set_content(out.dump(), "application/json");
  });

  s.Post(v + "/networks/([^/]+)/disconnect", [this](const httplib::Request& req, httplib::Response& res) {
    auto body = json::parse(req.body);
    std::lock_guard lock(mu_);
    auto it = containers_.find(body.at("Container").get<std::string>());
    if (it == containers_.end()) return not_found(res);
    it->second.networks.erase(req.matches[1]);
    res.status = 200;
  });

  s.Post(v + "/containers/([^/]+)/exec", [this](const httplib::Request& req, httplib::Response& res) {
    auto body = json::parse(req.body);
    std::lock_guard lock(mu_);
    if (containers_.count(req.matches[1]) == 0) return not_found(res);
    Exec ex;
    ex.container = req.matches[1];
    ex.cmd = body.at("Cmd").get<std::vector<std::string>>();
    for (const auto& kv : body.value("Env", json::array())) {
      auto s = kv.get<std::string>();
      auto eq = s.find('=');
      ex.env[s.substr(0, eq)] = s.substr(eq + 1);
    }
    std::string id = "e" + std::to_string(next_id_++);
    execs_[id] = std::move(ex);
    res.status = 201;
    res.set_content(json{{"Id", id}}.dump(), "application/json");
  });

  s.Post(v + "/exec/([^/]+)/start", [this](const httplib::Request& req, httplib::Response& res) {
    std::string id = req.matches[1];
    {
      std::lock_guard lock(mu_);
      if (execs_.count(id) == 0) return not_found(res);
    }
    int code = 0;
    auto body = run_exec(id, code);
    {
      std::lock_guard lock(mu_);
      execs_[id].exit_code = code;
    }
    res.set_content(body, "application/vnd.docker.raw-stream");
  });

  s.Get(v + "/exec/([^/]+)/json", [this](const httplib::Request& req, httplib::Response& res) {
    std::lock_guard lock(mu_);
    auto it = execs_.find(req.matches[1]);
    if (it == execs_.end()) return not_found(res);
    json doc{{"Running", !it->second.exit_code.has_value()}};
    doc["ExitCode"] = it->second.exit_code ? json(*it->second.exit_code) : json(nullptr);
    res.set_content(doc.dump(), "application/json");
  });
}

}  // namespace testsupport
