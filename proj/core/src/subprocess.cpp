#include "irbed/subprocess.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <cstring>

#include "irbed/error.hpp"

namespace irbed {

namespace {

void drain(int fd, std::string& sink) {
  char buf[4096];
  for (;;) {
    ssize_t n = ::read(fd, buf, sizeof(buf));
    if (n <= 0) break;
    sink.append(buf, static_cast<std::size_t>(n));
  }
}

}  // namespace

SubprocessResult run_subprocess(const std::vector<std::string>& argv,
                                const std::map<std::string, std::string>& extra_env,
                                std::optional<std::chrono::milliseconds> timeout,
                                const std::string& stdin_data) {
  if (argv.empty()) throw Error(ErrorKind::execution, "empty argv");

  int out_pipe[2], err_pipe[2], in_pipe[2];
  if (::pipe(out_pipe) != 0 || ::pipe(err_pipe) != 0 || ::pipe(in_pipe) != 0) {
    throw Error(ErrorKind::io, "pipe() failed");
  }

  auto start = std::chrono::steady_clock::now();
  pid_t pid = ::fork();
  if (pid < 0) throw Error(ErrorKind::execution, "fork() failed");

  if (pid == 0) {
    ::dup2(in_pipe[0], STDIN_FILENO);
    ::dup2(out_pipe[1], STDOUT_FILENO);
    ::dup2(err_pipe[1], STDERR_FILENO);
    for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1], err_pipe[0], err_pipe[1]}) {
      ::close(fd);
    }
    for (const auto& [key, value] : extra_env) {
      ::setenv(key.c_str(), value.c_str(), 1);
    }
    std::vector<char*> cargv;
    cargv.reserve(argv.size() + 1);
    for (const auto& arg : argv) cargv.push_back(const_cast<char*>(arg.c_str()));
    cargv.push_back(nullptr);
    ::execvp(cargv[0], cargv.data());
    ::fprintf(stderr, "execvp %s: %s\n", cargv[0], ::strerror(errno));
    ::_exit(127);
  }

  ::close(in_pipe[0]);
  ::close(out_pipe[1]);
  ::close(err_pipe[1]);

  if (!stdin_data.empty()) {
    ssize_t ignored = ::write(in_pipe[1], stdin_data.data(), stdin_data.size());
    (void)ignored;
  }
  ::close(in_pipe[1]);

  SubprocessResult result;
  struct pollfd fds[2] = {{out_pipe[0], POLLIN, 0}, {err_pipe[0], POLLIN, 0}};
  bool open_fds[2] = {true, true};
  std::string* sinks[2] = {&result.out, &result.err};

  auto deadline = timeout ? std::optional(start + *timeout) : std::nullopt;
  bool killed = false;
  while (open_fds[0] || open_fds[1]) {
    int wait_ms = 200;
    if (deadline) {
      auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(
          *deadline - std::chrono::steady_clock::now());
      if (remaining.count() <= 0 && !killed) {
        ::kill(pid, SIGKILL);
        killed = true;
        result.timed_out = true;
      } else if (remaining.count() > 0) {
        wait_ms = static_cast<int>(std::min<long long>(wait_ms, remaining.count()));
      }
    }
    struct pollfd active[2];
    int n_active = 0;
    for (int i = 0; i < 2; ++i) {
      if (open_fds[i]) active[n_active++] = fds[i];
    }
    int rc = ::poll(active, static_cast<nfds_t>(n_active), wait_ms);
    if (rc < 0 && errno != EINTR) break;
    for (int i = 0; i < n_active; ++i) {
      if ((active[i].revents & (POLLIN | POLLHUP)) == 0) continue;
      char buf[4096];
      ssize_t n = ::read(active[i].fd, buf, sizeof(buf));
      int slot = (active[i].fd == out_pipe[0]) ? 0 : 1;
      if (n > 0) {
        sinks[slot]->append(buf, static_cast<std::size_t>(n));
      } else {
        open_fds[slot] = false;
      }
    }
  }
  drain(out_pipe[0], result.out);
  drain(err_pipe[0], result.err);
  ::close(out_pipe[0]);
  ::close(err_pipe[0]);

  int status = 0;
  ::waitpid(pid, &status, 0);
  result.wall = std::chrono::duration_cast<std::chrono::milliseconds>(
      std::chrono::steady_clock::now() - start);
  if (WIFEXITED(status)) {
    result.exit_code = WEXITSTATUS(status);
  } else if (WIFSIGNALED(status)) {
    result.signaled = true;
    result.exit_code = 128 + WTERMSIG(status);
  }
  return result;
}

bool executable_on_path(const std::string& name) {
  const char* path = ::getenv("PATH");
  if (path == nullptr) return false;
  std::string paths(path);
  std::size_t pos = 0;
  while (pos <= paths.size()) {
    std::size_t next = paths.find(':', pos);
    std::string dir = paths.substr(pos, next == std::string::npos ? std::string::npos : next - pos);
    if (!dir.empty() && ::access((dir + "/" + name).c_str(), X_OK) == 0) return true;
    if (next == std::string::npos) break;
    pos = next + 1;
  }
  return false;
}

}  // namespace irbed
