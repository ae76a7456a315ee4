#pragma once

// Host side of the guest executor protocol. The guest is an external program
// that reads solver code on stdin, runs solver() in isolation and prints a
// single `RESULT <decimal>` line. This header only spawns, bounds and parses.

#include "gsmr/numeric.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/resource.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cstring>
#include <optional>
#include <semaphore>
#include <string>
#include <vector>

namespace gsmr {

struct GuestRequest {
  std::string solver_code;
  std::chrono::milliseconds timeout{5000};
  std::size_t memory_cap = 512u << 20;  // bytes; 0 disables
};

struct GuestResult {
  enum class Status { Ok, Timeout, Crash, NonNumeric };
  Status status = Status::Crash;
  std::optional<Rational> value;
  std::string stderr_excerpt;
};

inline std::string_view to_string(GuestResult::Status s) {
  switch (s) {
    case GuestResult::Status::Ok: return "ok";
    case GuestResult::Status::Timeout: return "timeout";
    case GuestResult::Status::Crash: return "crash";
    case GuestResult::Status::NonNumeric: return "non_numeric";
  }
  return "?";
}

// Parses guest stdout: exactly one non-empty line of the form `RESULT <decimal>`.
inline std::optional<Rational> parse_guest_output(std::string_view out) {
  std::optional<Rational> value;
  std::size_t lines = 0;
  std::size_t start = 0;
  while (start < out.size()) {
    std::size_t end = out.find('\n', start);
    if (end == std::string_view::npos) end = out.size();
    std::string_view line = out.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!line.empty()) {
      ++lines;
      if (!line.starts_with("RESULT ")) return std::nullopt;
      value = parse_rational(line.substr(7));
    }
    start = end + 1;
  }
  if (lines != 1) return std::nullopt;
  return value;
}

class GuestExecutor {
 public:
  // `command` is argv of the guest program, e.g. {"python3", "guest_shim.py"}.
  explicit GuestExecutor(std::vector<std::string> command) : command_(std::move(command)) {
    if (command_.empty()) throw std::invalid_argument("guest command is empty");
  }

  const std::vector<std::string>& command() const { return command_; }

  GuestResult execute(const GuestRequest& request) const {
    slots().acquire();
    struct Release {
      ~Release() { slots().release(); }
    } release;
    return run(request);
  }

 private:
  static constexpr std::size_t kMaxConcurrent = 4;
  static std::counting_semaphore<kMaxConcurrent>& slots() {
    static std::counting_semaphore<kMaxConcurrent> s(kMaxConcurrent);
    return s;
  }

  GuestResult run(const GuestRequest& request) const {
    GuestResult result;
    int in_pipe[2], out_pipe[2], err_pipe[2];
    if (pipe2(in_pipe, O_CLOEXEC) || pipe2(out_pipe, O_CLOEXEC) || pipe2(err_pipe, O_CLOEXEC)) {
      result.stderr_excerpt = std::string("pipe: ") + std::strerror(errno);
      return result;
    }
    std::vector<char*> argv;
    for (const auto& a : command_) argv.push_back(const_cast<char*>(a.c_str()));
    argv.push_back(nullptr);

    pid_t pid = fork();
    if (pid < 0) {
      result.stderr_excerpt = std::string("fork: ") + std::strerror(errno);
      for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1], err_pipe[0], err_pipe[1]}) close(fd);
      return result;
    }
    if (pid == 0) {
      setpgid(0, 0);
      dup2(in_pipe[0], 0);
      dup2(out_pipe[1], 1);
      dup2(err_pipe[1], 2);
      if (request.memory_cap) {
        rlimit lim{request.memory_cap, request.memory_cap};
        setrlimit(RLIMIT_AS, &lim);
      }
      execvp(argv[0], argv.data());
      _exit(127);
    }
    setpgid(pid, pid);
    close(in_pipe[0]);
    close(out_pipe[1]);
    close(err_pipe[1]);

    // Code is small; a blocked write would mean the guest is not reading.
    signal(SIGPIPE, SIG_IGN);
    fcntl(in_pipe[1], F_SETFL, O_NONBLOCK);
    std::string_view pending = request.solver_code;

    auto deadline = std::chrono::steady_clock::now() + request.timeout;
    std::string out, err;
    bool out_open = true, err_open = true, timed_out = false;
    int in_fd = in_pipe[1];
    if (pending.empty()) {
      close(in_fd);
      in_fd = -1;
    }
    while (out_open || err_open) {
      auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
      if (left.count() <= 0) {
        timed_out = true;
        break;
      }
      pollfd fds[3];
      int n = 0;
      int out_idx = -1, err_idx = -1, in_idx = -1;
      if (out_open) fds[out_idx = n++] = {out_pipe[0], POLLIN, 0};
      if (err_open) fds[err_idx = n++] = {err_pipe[0], POLLIN, 0};
      if (in_fd >= 0) fds[in_idx = n++] = {in_fd, POLLOUT, 0};
      int rc = poll(fds, n, static_cast<int>(left.count()));
      if (rc < 0 && errno == EINTR) continue;
      if (rc < 0) break;
      char buf[4096];
      auto drain = [&](int idx, int fd, std::string& sink, bool& open) {
        if (idx < 0 || !(fds[idx].revents & (POLLIN | POLLHUP | POLLERR))) return;
        ssize_t k = read(fd, buf, sizeof buf);
        if (k <= 0) open = false;
        else if (sink.size() < (1u << 20)) sink.append(buf, static_cast<std::size_t>(k));
      };
      drain(out_idx, out_pipe[0], out, out_open);
      drain(err_idx, err_pipe[0], err, err_open);
      if (in_idx >= 0 && (fds[in_idx].revents & (POLLOUT | POLLERR | POLLHUP))) {
        ssize_t k = write(in_fd, pending.data(), pending.size());
        if (k > 0) pending.remove_prefix(static_cast<std::size_t>(k));
        if (k < 0 || pending.empty()) {
          close(in_fd);
          in_fd = -1;
        }
      }
    }
    if (in_fd >= 0) close(in_fd);
    close(out_pipe[0]);
    close(err_pipe[0]);

    int status = 0;
    if (timed_out) {
      kill(-pid, SIGKILL);
      waitpid(pid, &status, 0);
      result.status = GuestResult::Status::Timeout;
    } else {
      // Pipes closed; give the process the remaining time to exit.
      for (;;) {
        pid_t w = waitpid(pid, &status, WNOHANG);
        if (w == pid) break;
        if (std::chrono::steady_clock::now() >= deadline) {
          kill(-pid, SIGKILL);
          waitpid(pid, &status, 0);
          result.status = GuestResult::Status::Timeout;
          timed_out = true;
          break;
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(2));
      }
    }
    result.stderr_excerpt = err.substr(0, 2000);
    if (timed_out) return result;
    if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
      result.status = GuestResult::Status::Crash;
      if (WIFSIGNALED(status)) result.stderr_excerpt += "\n[killed by signal " + std::to_string(WTERMSIG(status)) + "]";
      else result.stderr_excerpt += "\n[exit status " + std::to_string(WEXITSTATUS(status)) + "]";
      return result;
    }
    result.value = parse_guest_output(out);
    result.status = result.value ? GuestResult::Status::Ok : GuestResult::Status::NonNumeric;
    if (!result.value) result.stderr_excerpt += "\n[stdout] " + out.substr(0, 500);
    return result;
  }

  std::vector<std::string> command_;
};

}  // namespace gsmr
