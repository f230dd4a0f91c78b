#pragma once

// Container sandbox contract. A component runs with no network and exactly
// three mounts: input data read-only, predecessor outputs read-only, one
// writable output directory. Two backends implement the contract: an OCI
// runtime (docker/podman CLI) and an in-process mock whose fixtures go
// through a SandboxContext that enforces the same rules.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "irbed/error.hpp"

namespace irbed::sandbox {

struct ResourceLimits {
  double cpu_cores = 1.0;
  std::uint64_t memory_bytes = 10ull << 30;  // 10 GB
  std::chrono::seconds timeout{3600};
};

struct Mount {
  std::filesystem::path host;
  std::string container;  // absolute path as seen by the software
  bool writable = false;
};

struct SandboxSpec {
  std::string image_ref;
  std::string command;  // fully resolved, no $variables left
  std::map<std::string, std::string> env;
  std::vector<Mount> mounts;
  bool network_disabled = true;  // the sandbox never enables networking
  ResourceLimits limits;
};

struct RunOutcome {
  int exit_code = -1;
  bool timed_out = false;
  std::string stdout_text;
  std::string stderr_text;
  std::vector<std::string> violations;  // attempted sandbox escapes
  std::chrono::milliseconds wall{0};

  bool ok() const { return exit_code == 0 && !timed_out; }
};

class ContainerBackend {
 public:
  virtual ~ContainerBackend() = default;
  virtual std::string name() const = 0;
  /// Content digest of the image behind a reference; part of cache keys.
  virtual std::string image_digest(const std::string& image_ref) = 0;
  virtual RunOutcome run(const SandboxSpec& spec) = 0;

  /// Number of container launches performed by this backend instance.
  int launch_count() const { return launches_.load(); }

 protected:
  std::atomic<int> launches_{0};
};

// ---- in-process mock backend ----------------------------------------------

/// The only window a mock fixture has onto the world. Reads must stay
/// inside the mounts, writes inside writable mounts, and there is no
/// network. Violations are recorded and surface as errors to the fixture.
class SandboxContext {
 public:
  SandboxContext(const SandboxSpec& spec, std::atomic<bool>& cancelled);

  const SandboxSpec& spec() const { return spec_; }
  const std::map<std::string, std::string>& env() const { return spec_.env; }

  std::string read_file(const std::string& container_path);
  void write_file(const std::string& container_path, std::string_view bytes);
  bool exists(const std::string& container_path);
  std::vector<std::string> list_dir(const std::string& container_path);

  /// Always fails: the sandbox has no network. Records the attempt.
  void connect(const std::string& host, int port);

  bool cancelled() const { return cancelled_.load(); }

  const std::vector<std::string>& violations() const { return violations_; }

  std::ostringstream out;
  std::ostringstream err;

 private:
  std::filesystem::path resolve(const std::string& container_path, bool for_write);
  [[noreturn]] void violation(const std::string& what);

  const SandboxSpec& spec_;
  std::atomic<bool>& cancelled_;
  std::vector<std::string> violations_;
};

/// A fixture is a deterministic in-process stand-in for a container image.
using Fixture = std::function<int(SandboxContext&, const std::vector<std::string>& args)>;

class MockBackend : public ContainerBackend {
 public:
  MockBackend();

  std::string name() const override { return "mock"; }
  std::string image_digest(const std::string& image_ref) override;
  RunOutcome run(const SandboxSpec& spec) override;

  void register_fixture(const std::string& image_name, Fixture fixture);
  bool has_fixture(const std::string& image_name) const;

 private:
  std::map<std::string, Fixture> fixtures_;
};

/// Registers the bundled fixture images (rankers, probes) on a backend.
void register_builtin_fixtures(MockBackend& backend);

/// Splits a resolved command into argv-style tokens (whitespace separated).
std::vector<std::string> split_command(const std::string& command);

}  // namespace irbed::sandbox
