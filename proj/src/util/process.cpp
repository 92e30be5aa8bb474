// SPDX-License-Identifier: Apache-2.0
#include "exploitbench/util/process.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <cerrno>
#include <cstring>

extern char** environ;

namespace exploitbench::util {

namespace {

struct Pipe {
  int fds[2] = {-1, -1};

  Pipe() {
    if (::pipe2(fds, O_CLOEXEC) != 0) {
      throw ProcessError(std::string("pipe2: ") + std::strerror(errno));
    }
  }
  ~Pipe() {
    close_read();
    close_write();
  }
  Pipe(const Pipe&) = delete;
  Pipe& operator=(const Pipe&) = delete;

  void close_read() {
    if (fds[0] >= 0) ::close(fds[0]);
    fds[0] = -1;
  }
  void close_write() {
    if (fds[1] >= 0) ::close(fds[1]);
    fds[1] = -1;
  }
};

std::vector<std::string> merged_environment(
    const std::map<std::string, std::string>& extra) {
  std::vector<std::string> out;
  for (char** e = environ; e != nullptr && *e != nullptr; ++e) {
    std::string entry(*e);
    auto eq = entry.find('=');
    std::string key = entry.substr(0, eq);
    if (extra.count(key) == 0) out.push_back(std::move(entry));
  }
  for (const auto& [k, v] : extra) out.push_back(k + "=" + v);
  return out;
}

}  // namespace

ProcessResult run_process(const std::vector<std::string>& argv,
                          const ProcessOptions& options) {
  if (argv.empty()) throw ProcessError("empty argv");

  Pipe in, out, err;
  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_adddup2(&actions, in.fds[0], STDIN_FILENO);
  posix_spawn_file_actions_adddup2(&actions, out.fds[1], STDOUT_FILENO);
  posix_spawn_file_actions_adddup2(&actions, err.fds[1], STDERR_FILENO);
  if (options.cwd) {
    posix_spawn_file_actions_addchdir_np(&actions, options.cwd->c_str());
  }

  posix_spawnattr_t attr;
  posix_spawnattr_init(&attr);
  posix_spawnattr_setflags(&attr, POSIX_SPAWN_SETPGROUP);
  posix_spawnattr_setpgroup(&attr, 0);

  std::vector<char*> cargv;
  for (const auto& a : argv) cargv.push_back(const_cast<char*>(a.c_str()));
  cargv.push_back(nullptr);
  auto envs = merged_environment(options.env);
  std::vector<char*> cenv;
  for (auto& e : envs) cenv.push_back(e.data());
  cenv.push_back(nullptr);

  pid_t pid = -1;
  int rc = ::posix_spawnp(&pid, argv[0].c_str(), &actions, &attr, cargv.data(),
                          cenv.data());
  posix_spawn_file_actions_destroy(&actions);
  posix_spawnattr_destroy(&attr);
  if (rc != 0) {
    throw ProcessError("cannot start '" + argv[0] + "': " + std::strerror(rc));
  }

  in.close_read();
  out.close_write();
  err.close_write();

  ProcessResult result;
  std::size_t stdin_written = 0;
  if (options.stdin_data.empty()) in.close_write();
  if (in.fds[1] >= 0) ::fcntl(in.fds[1], F_SETFL, O_NONBLOCK);

  const auto start = std::chrono::steady_clock::now();
  std::array<char, 65536> buf{};
  while (out.fds[0] >= 0 || err.fds[0] >= 0) {
    std::vector<pollfd> pfds;
    if (out.fds[0] >= 0) pfds.push_back({out.fds[0], POLLIN, 0});
    if (err.fds[0] >= 0) pfds.push_back({err.fds[0], POLLIN, 0});
    if (in.fds[1] >= 0) pfds.push_back({in.fds[1], POLLOUT, 0});

    int wait_ms = 200;
    if (options.timeout) {
      auto elapsed = std::chrono::steady_clock::now() - start;
      if (elapsed >= *options.timeout) {
        ::kill(-pid, SIGKILL);
        result.timed_out = true;
        break;
      }
    }
    int n = ::poll(pfds.data(), pfds.size(), wait_ms);
    if (n < 0 && errno != EINTR) break;
    for (const auto& p : pfds) {
      if (p.revents == 0) continue;
      if (p.fd == in.fds[1]) {
        auto chunk = options.stdin_data.size() - stdin_written;
        auto w = ::write(p.fd, options.stdin_data.data() + stdin_written, chunk);
        if (w > 0) stdin_written += static_cast<std::size_t>(w);
        if (w < 0 && errno != EAGAIN) stdin_written = options.stdin_data.size();
        if (stdin_written >= options.stdin_data.size()) in.close_write();
        continue;
      }
      auto r = ::read(p.fd, buf.data(), buf.size());
      if (r > 0) {
        auto& sink = (p.fd == out.fds[0]) ? result.out : result.err;
        sink.append(buf.data(), static_cast<std::size_t>(r));
      } else if (r == 0 || (r < 0 && errno != EINTR && errno != EAGAIN)) {
        if (p.fd == out.fds[0]) out.close_read();
        else err.close_read();
      }
    }
  }
  in.close_write();

  int status = 0;
  while (::waitpid(pid, &status, 0) < 0 && errno == EINTR) {
  }
  if (WIFEXITED(status)) result.exit_code = WEXITSTATUS(status);
  else if (WIFSIGNALED(status)) result.exit_code = -WTERMSIG(status);
  return result;
}

}  // namespace exploitbench::util
