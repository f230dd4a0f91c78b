#pragma once

#include <chrono>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace irbed {

struct SubprocessResult {
  int exit_code = -1;
  bool timed_out = false;
  bool signaled = false;
  std::string out;
  std::string err;
  std::chrono::milliseconds wall{0};
};

/// Runs argv[0] with the given arguments, capturing stdout and stderr.
/// On timeout the child is killed (SIGKILL) and timed_out is set.
SubprocessResult run_subprocess(
    const std::vector<std::string>& argv,
    const std::map<std::string, std::string>& extra_env = {},
    std::optional<std::chrono::milliseconds> timeout = std::nullopt,
    const std::string& stdin_data = {});

/// True if an executable with this name exists on PATH.
bool executable_on_path(const std::string& name);

}  // namespace irbed
