#include "ck/proc.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <thread>

#include "ck/errors.hpp"

extern char** environ;

namespace ck::proc {

namespace {

void append_capped(std::string& buf, const char* data, size_t n, size_t cap) {
  if (buf.size() >= cap) return;
  size_t room = cap - buf.size();
  buf.append(data, std::min(n, room));
}

int open_sink(const std::filesystem::path& file) {
  int fd = ::open(file.c_str(), O_CREAT | O_WRONLY | O_TRUNC, 0644);
  if (fd < 0) throw Error(Errc::io_failure, "cannot open " + file.string());
  return fd;
}

}  // namespace

SpawnResult run_process(const SpawnSpec& spec) {
  if (spec.argv.empty()) throw Error(Errc::usage, "empty argv");

  int out_pipe[2] = {-1, -1};
  int err_pipe[2] = {-1, -1};
  int out_fd = -1;
  int err_fd = -1;
  bool pipe_out = !spec.stdout_file.has_value();
  bool pipe_err = !spec.stderr_file.has_value() && !spec.combine_output;

  if (pipe_out && ::pipe(out_pipe) != 0) throw Error(Errc::io_failure, "pipe failed");
  if (pipe_err && ::pipe(err_pipe) != 0) {
    if (pipe_out) { ::close(out_pipe[0]); ::close(out_pipe[1]); }
    throw Error(Errc::io_failure, "pipe failed");
  }
  if (spec.stdout_file) out_fd = open_sink(*spec.stdout_file);
  if (spec.stderr_file) err_fd = open_sink(*spec.stderr_file);

  std::vector<std::string> env_strings;
  if (spec.exact_env) {
    for (const auto& [k, v] : spec.env) env_strings.push_back(k + "=" + v);
  } else {
    for (char** e = environ; *e; ++e) {
      std::string entry(*e);
      auto eq = entry.find('=');
      std::string key = eq == std::string::npos ? entry : entry.substr(0, eq);
      if (!spec.env.contains(key)) env_strings.push_back(std::move(entry));
    }
    for (const auto& [k, v] : spec.env) env_strings.push_back(k + "=" + v);
  }

  auto start = std::chrono::steady_clock::now();
  pid_t pid = ::fork();
  if (pid < 0) throw Error(Errc::io_failure, "fork failed");

  if (pid == 0) {
    // Own process group, so a timeout kill reaches grandchildren holding
    // the pipe write ends.
    ::setpgid(0, 0);
    if (spec.workdir && ::chdir(spec.workdir->c_str()) != 0) ::_exit(127);
    int dev_null = ::open("/dev/null", O_RDONLY);
    if (dev_null >= 0) ::dup2(dev_null, 0);
    int child_out = pipe_out ? out_pipe[1] : out_fd;
    ::dup2(child_out, 1);
    int child_err;
    if (spec.combine_output) child_err = child_out;
    else child_err = pipe_err ? err_pipe[1] : err_fd;
    ::dup2(child_err, 2);
    if (pipe_out) { ::close(out_pipe[0]); ::close(out_pipe[1]); }
    if (pipe_err) { ::close(err_pipe[0]); ::close(err_pipe[1]); }

    std::vector<char*> argv_c;
    for (const auto& a : spec.argv) argv_c.push_back(const_cast<char*>(a.c_str()));
    argv_c.push_back(nullptr);
    std::vector<char*> envp_c;
    for (const auto& e : env_strings) envp_c.push_back(const_cast<char*>(e.c_str()));
    envp_c.push_back(nullptr);

    // PATH lookup uses the inherited environment; the exec'd process then
    // sees exactly envp_c.
    ::execvpe(spec.argv[0].c_str(), argv_c.data(), envp_c.data());
    ::_exit(127);
  }

  ::setpgid(pid, pid);  // best effort; the child does the same

  if (pipe_out) ::close(out_pipe[1]);
  if (pipe_err) ::close(err_pipe[1]);
  if (out_fd >= 0) ::close(out_fd);
  if (err_fd >= 0) ::close(err_fd);

  SpawnResult result;
  auto deadline = spec.timeout_s > 0
                      ? start + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                    std::chrono::duration<double>(spec.timeout_s))
                      : std::chrono::steady_clock::time_point::max();

  int live_pipes = (pipe_out ? 1 : 0) + (pipe_err ? 1 : 0);
  bool killed = false;
  while (live_pipes > 0) {
    struct pollfd fds[2];
    int n = 0;
    int out_idx = -1, err_idx = -1;
    if (pipe_out && out_pipe[0] >= 0) { fds[n] = {out_pipe[0], POLLIN, 0}; out_idx = n++; }
    if (pipe_err && err_pipe[0] >= 0) { fds[n] = {err_pipe[0], POLLIN, 0}; err_idx = n++; }

    int timeout_ms = -1;
    if (deadline != std::chrono::steady_clock::time_point::max()) {
      auto remain = std::chrono::duration_cast<std::chrono::milliseconds>(
          deadline - std::chrono::steady_clock::now());
      timeout_ms = std::max<long long>(0, remain.count());
    }
    int rv = ::poll(fds, n, timeout_ms);
    if (rv == 0) {
      if (!killed) {
        if (::kill(-pid, SIGKILL) != 0) ::kill(pid, SIGKILL);
        killed = true;
        result.timed_out = true;
      }
      // keep draining until pipes close after the kill
      continue;
    }
    if (rv < 0) {
      if (errno == EINTR) continue;
      break;
    }
    char buf[4096];
    auto drain = [&](int idx, int& fd, std::string& sink) {
      if (idx < 0 || fd < 0) return;
      if (fds[idx].revents & (POLLIN | POLLHUP | POLLERR)) {
        ssize_t got = ::read(fd, buf, sizeof buf);
        if (got > 0) {
          append_capped(sink, buf, static_cast<size_t>(got), spec.capture_limit);
        } else {
          ::close(fd);
          fd = -1;
          --live_pipes;
        }
      }
    };
    drain(out_idx, out_pipe[0], result.stdout_text);
    drain(err_idx, err_pipe[0], result.stderr_text);
  }

  // With file redirection there may be no pipes to watch; enforce the
  // timeout by polling the child state.
  int status = 0;
  for (;;) {
    pid_t w = ::waitpid(pid, &status, live_pipes == 0 && !pipe_out && !pipe_err ? WNOHANG : 0);
    if (w == pid) break;
    if (w < 0 && errno != EINTR) break;
    if (w == 0) {
      if (std::chrono::steady_clock::now() >= deadline && !killed) {
        if (::kill(-pid, SIGKILL) != 0) ::kill(pid, SIGKILL);
        killed = true;
        result.timed_out = true;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(2));
    }
  }

  result.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (WIFEXITED(status)) result.exit_code = WEXITSTATUS(status);
  else if (WIFSIGNALED(status)) result.exit_code = 128 + WTERMSIG(status);
  result.spawn_failed = !result.timed_out && result.exit_code == 127;
  return result;
}

}  // namespace ck::proc
