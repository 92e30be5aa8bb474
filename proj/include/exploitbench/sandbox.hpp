// SPDX-License-Identifier: Apache-2.0
#pragma once

// Container engine access over the Docker Engine HTTP API and the
// baseline/patched container pair built on top of it.

#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "exploitbench/diffkit.hpp"
#include "exploitbench/shim_protocol.hpp"
#include "exploitbench/taskbundle.hpp"
#include "exploitbench/util/file_tree.hpp"

namespace exploitbench::sandbox {

class SandboxError : public std::runtime_error {
 public:
  enum class Kind {
    EngineUnreachable,
    EngineRequestFailed,
    BuildFailed,
    ProvisionFailed,
    PatchWriteFailed,
    ContractViolation,
  };

  SandboxError(Kind kind, const std::string& what, std::string log_tail = {})
      : std::runtime_error(what), kind_(kind), log_tail_(std::move(log_tail)) {}
  Kind kind() const { return kind_; }
  const std::string& log_tail() const { return log_tail_; }

 private:
  Kind kind_;
  std::string log_tail_;
};

std::string_view to_string(SandboxError::Kind kind);

struct EngineEndpoint {
  // Either a unix socket path or a TCP host:port.
  std::string socket_path;
  std::string host;
  int port = 0;
  std::string api_version = "v1.41";

  bool is_unix() const { return !socket_path.empty(); }
  // Accepts "unix:///path", "/path", "tcp://host:port", "http://host:port",
  // "host:port".
  static EngineEndpoint parse(const std::string& text);
  std::string describe() const;
};

struct ResourceCaps {
  double cpus = 2.0;
  std::int64_t memory_bytes = 4LL << 30;
  std::int64_t scratch_bytes = 1LL << 30;
  std::int64_t pids_limit = 1024;
};

inline constexpr std::string_view kManagedLabel = "exploitbench.managed";
inline constexpr std::string_view kRoleLabel = "exploitbench.role";
inline constexpr std::string_view kShimPath = "/opt/exploitbench/runner_shim";
inline constexpr std::string_view kRunDir = "/opt/exploitbench/run";
inline constexpr std::string_view kWheelhouse = "/opt/exploitbench/wheelhouse";

struct ExecResult {
  int exit_code = -1;
  std::string out;
  std::string err;
  bool budget_exceeded = false;
};

// One call per HTTP request; no connection state is shared, so a single
// client may be used from several threads.
class EngineClient {
 public:
  explicit EngineClient(EngineEndpoint endpoint);

  const EngineEndpoint& endpoint() const { return endpoint_; }

  bool ping() const;
  // Streams the build; returns the image id. Throws BuildFailed with the
  // tail of the build output on failure.
  std::string build(const std::string& context_tar, const std::string& tag,
                    std::string* log_out = nullptr) const;
  std::string create_container(const std::string& image, const std::string& name,
                               const std::map<std::string, std::string>& labels,
                               const ResourceCaps& caps) const;
  void start(const std::string& id) const;
  void put_archive(const std::string& id, const std::string& dir,
                   const std::string& tar) const;
  std::string get_archive(const std::string& id, const std::string& path) const;
  ExecResult exec(const std::string& id, const std::vector<std::string>& cmd,
                  const std::map<std::string, std::string>& env,
                  std::optional<std::chrono::seconds> budget = std::nullopt) const;
  std::vector<std::string> networks(const std::string& id) const;
  void disconnect(const std::string& id, const std::string& network) const;
  void stop(const std::string& id, int grace_s = 5) const;
  // 404 counts as success.
  void remove(const std::string& id) const;
  std::vector<std::string> list_by_label(const std::string& label) const;

 private:
  struct Response {
    int status = 0;
    std::string body;
  };
  Response request(const std::string& method, const std::string& path,
                   const std::string& body = {}, const std::string& content_type = {},
                   std::optional<std::chrono::seconds> timeout = std::nullopt) const;

  EngineEndpoint endpoint_;
};

// Splits the 8-byte-header multiplexed exec stream into stdout and stderr.
void demux_stream(std::string_view raw, std::string& out, std::string& err);

struct SandboxOptions {
  ResourceCaps caps;
  std::chrono::seconds grace{30};
  // Bytes of the runner shim script, copied into every container.
  std::string shim_script;
  std::string python = "python";
};

struct ContainerHandle {
  std::string id;
  std::string role;
  bool started = false;
  bool removed = false;
};

struct ContainerPair {
  std::string image;
  ContainerHandle baseline;
  ContainerHandle patched;
  std::optional<diffkit::ApplyOutcome> patch_applied;
};

struct DifferentialRun {
  RunRecord baseline_record;
  RunRecord patched_record;
};

// What goes into both containers for one PoC run.
struct PocPayload {
  std::string cve_id;
  FileTree files;  // relative to kRunDir/poc
  ShimConfig config_template;
  bool network = false;
};

// Reads PoC files from the bundle directory and fills the shim config.
PocPayload make_poc_payload(const TaskBundle& bundle);

class Sandbox {
 public:
  // Pings the engine; throws EngineUnreachable if it does not answer.
  Sandbox(EngineEndpoint endpoint, SandboxOptions options);

  EngineClient& engine() { return engine_; }
  const SandboxOptions& options() const { return options_; }

  std::string build_image(const std::string& dockerfile, const FileTree& context,
                          const std::string& tag);
  std::string build_image_tar(const std::string& context_tar, const std::string& tag);

  ContainerPair provision_pair(const std::string& image,
                               const std::optional<diffkit::ApplyOutcome>& patch);
  DifferentialRun run_differential(ContainerPair& pair, const PocPayload& payload);
  // Best effort and idempotent; never throws.
  void teardown(ContainerPair& pair) noexcept;

  // Digest of the project checkout inside a container.
  std::string tree_checksum(const ContainerHandle& c) const;
  // Removes every container carrying the managed label. Returns the count.
  std::size_t sweep() noexcept;

 private:
  ContainerHandle start_container(const std::string& image, const std::string& role);
  RunRecord run_one(const ContainerHandle& c, const PocPayload& payload);

  EngineClient engine_;
  SandboxOptions options_;
};

}  // namespace exploitbench::sandbox
