// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace exploitbench::util {

struct ProcessOptions {
  std::optional<std::filesystem::path> cwd;
  std::string stdin_data;
  // Added to (or overriding) the inherited environment.
  std::map<std::string, std::string> env;
  std::optional<std::chrono::milliseconds> timeout;
};

struct ProcessResult {
  int exit_code = -1;  // negative signal number when killed by a signal
  bool timed_out = false;
  std::string out;
  std::string err;

  bool ok() const { return exit_code == 0 && !timed_out; }
};

class ProcessError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Spawns argv[0] (searched on PATH) and collects both output streams.
// Throws ProcessError only when the process cannot be started.
ProcessResult run_process(const std::vector<std::string>& argv,
                          const ProcessOptions& options = {});

}  // namespace exploitbench::util
