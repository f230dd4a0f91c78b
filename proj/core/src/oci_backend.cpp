#include "irbed/oci_backend.hpp"

#include <random>
#include <sstream>

#include "irbed/subprocess.hpp"

namespace irbed::sandbox {

std::string OciBackend::detect_runtime() {
  for (const char* candidate : {"docker", "podman"}) {
    if (executable_on_path(candidate)) return candidate;
  }
  return "";
}

OciBackend::OciBackend(std::string runtime) : runtime_(std::move(runtime)) {
  if (runtime_.empty()) runtime_ = detect_runtime();
  if (runtime_.empty()) {
    throw Error(ErrorKind::unsupported,
                "no OCI runtime found on PATH (looked for docker, podman); "
                "use the mock backend or install a runtime");
  }
}

std::vector<std::string> OciBackend::build_argv(const std::string& runtime,
                                                const SandboxSpec& spec,
                                                const std::string& container_name) {
  std::vector<std::string> argv{runtime, "run", "--rm", "--name", container_name};
  if (spec.network_disabled) {
    argv.push_back("--network");
    argv.push_back("none");
  }
  std::ostringstream cpus;
  cpus << spec.limits.cpu_cores;
  argv.push_back("--cpus");
  argv.push_back(cpus.str());
  argv.push_back("--memory");
  argv.push_back(std::to_string(spec.limits.memory_bytes));
  for (const auto& mount : spec.mounts) {
    argv.push_back("-v");
    argv.push_back(mount.host.string() + ":" + mount.container +
                   (mount.writable ? ":rw" : ":ro"));
  }
  for (const auto& [key, value] : spec.env) {
    argv.push_back("-e");
    argv.push_back(key + "=" + value);
  }
  argv.push_back(spec.image_ref);
  argv.push_back("/bin/sh");
  argv.push_back("-c");
  argv.push_back(spec.command);
  return argv;
}

std::string OciBackend::image_digest(const std::string& image_ref) {
  auto result = run_subprocess({runtime_, "image", "inspect", "--format", "{{.Id}}", image_ref},
                               {}, std::chrono::milliseconds(30000));
  if (result.exit_code != 0) {
    // not pulled yet; try to pull once, then inspect again
    auto pull = run_subprocess({runtime_, "pull", image_ref}, {},
                               std::chrono::milliseconds(10 * 60 * 1000));
    if (pull.exit_code != 0) {
      throw Error(ErrorKind::not_found,
                  "image unavailable: '" + image_ref + "': " + pull.err);
    }
    result = run_subprocess({runtime_, "image", "inspect", "--format", "{{.Id}}", image_ref}, {},
                            std::chrono::milliseconds(30000));
    if (result.exit_code != 0) {
      throw Error(ErrorKind::not_found, "image unavailable: '" + image_ref + "'");
    }
  }
  std::string id = result.out;
  while (!id.empty() && (id.back() == '\n' || id.back() == '\r')) id.pop_back();
  return id;
}

RunOutcome OciBackend::run(const SandboxSpec& spec) {
  static std::mt19937_64 rng{std::random_device{}()};
  std::ostringstream name;
  name << "irbed-" << std::hex << rng();

  launches_.fetch_add(1);
  auto argv = build_argv(runtime_, spec, name.str());
  auto timeout = std::chrono::duration_cast<std::chrono::milliseconds>(spec.limits.timeout);
  auto result = run_subprocess(argv, {}, timeout);

  RunOutcome outcome;
  outcome.exit_code = result.exit_code;
  outcome.timed_out = result.timed_out;
  outcome.stdout_text = std::move(result.out);
  outcome.stderr_text = std::move(result.err);
  outcome.wall = result.wall;
  if (result.timed_out) {
    // the CLI client died with SIGKILL; reap the container itself too
    run_subprocess({runtime_, "kill", name.str()}, {}, std::chrono::milliseconds(30000));
    outcome.exit_code = 124;
  }
  return outcome;
}

}  // namespace irbed::sandbox
