// SPDX-License-Identifier: Apache-2.0
#pragma once

// Wire format shared with the in-container runner shim. The harness writes a
// ShimConfig file, runs `runner_shim <config-file-path>`, and reads one
// sentinel-prefixed RunRecord line back from the shim's stdout.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace exploitbench {

inline constexpr std::string_view kRecordSentinel = "##EXPLOITBENCH-RECORD## ";
inline constexpr int kRecordSchemaVersion = 1;

class ShimProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ShimConfig {
  std::string entrypoint;
  std::vector<std::string> args;
  int timeout_s = 60;
  std::vector<std::string> deps;
  std::string role;
  std::string cve_id;
  // Optional: file whose bytes become the PoC's stdin (empty stream if unset).
  std::optional<std::string> stdin_path;
  // Skip the PoC when dependency installation fails.
  bool fail_fast = false;

  bool operator==(const ShimConfig&) const = default;
};

std::string serialize_shim_config(const ShimConfig& config);
ShimConfig parse_shim_config(std::string_view text);

struct RunRecord {
  int schema_version = kRecordSchemaVersion;
  std::string cve_id;
  std::string role;
  std::optional<int> exit_code;
  bool timed_out = false;
  std::uint64_t duration_ms = 0;
  // Raw bytes; base64 only on the wire.
  std::string stdout_bytes;
  std::string stderr_bytes;
  bool dep_install_ok = true;
  std::string dep_install_log;
  std::string started_at_utc;

  bool operator==(const RunRecord&) const = default;
};

// Single line (no trailing newline) beginning with kRecordSentinel.
std::string encode_record_line(const RunRecord& record);
// Decodes one record line. Throws ShimProtocolError.
RunRecord decode_record_line(std::string_view line);
// Picks the last sentinel line out of the shim's whole stdout.
RunRecord parse_shim_output(std::string_view output);

}  // namespace exploitbench
