// SPDX-License-Identifier: Apache-2.0
#pragma once

// In-process stand-in for a Docker-compatible engine. Containers are
// in-memory file trees; the runner shim is simulated by a callback.

#include <atomic>
#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "exploitbench/shim_protocol.hpp"
#include "exploitbench/util/file_tree.hpp"
#include "support/temp_dir.hpp"

namespace httplib {
class Server;
}

namespace testsupport {

struct ShimReply {
  std::string stdout_bytes;
  std::string stderr_bytes;
  int exit_code = 0;
  std::chrono::milliseconds delay{0};
};

struct ShimCall {
  // Container filesystem: absolute path without the leading '/'.
  const exploitbench::FileTree& fs;
  const exploitbench::ShimConfig& config;
  const std::map<std::string, std::string>& env;
  bool network_attached;
};

using ShimHandler = std::function<ShimReply(const ShimCall&)>;

// Exploit "succeeds" (exit 0, prints "pwned") unless any file under the
// project carries the text FIXED.
ShimHandler marker_shim();

class FakeEngine {
 public:
  FakeEngine();
  ~FakeEngine();
  FakeEngine(const FakeEngine&) = delete;
  FakeEngine& operator=(const FakeEngine&) = delete;

  std::string endpoint() const { return "unix://" + socket_.string(); }
  void set_shim(ShimHandler handler);

  std::size_t running_count() const;
  std::size_t container_count() const;
  std::vector<std::string> requests() const;
  // Drops all containers as an engine restart would.
  void forget_containers();

 private:
  struct Container {
    std::string image;
    std::map<std::string, std::string> labels;
    bool running = false;
    exploitbench::FileTree fs;
    std::set<std::string> networks{"bridge"};
  };
  struct Exec {
    std::string container;
    std::vector<std::string> cmd;
    std::map<std::string, std::string> env;
    std::optional<int> exit_code;
  };

  void install_routes();
  std::string run_exec(const std::string& exec_id, int& exit_code);

  TempDir dir_;
  std::filesystem::path socket_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;

  mutable std::mutex mu_;
  ShimHandler shim_;
  std::map<std::string, exploitbench::FileTree> images_;
  std::map<std::string, Container> containers_;
  std::map<std::string, Exec> execs_;
  std::vector<std::string> requests_;
  std::atomic<int> next_id_{1};
};

}  // namespace testsupport
