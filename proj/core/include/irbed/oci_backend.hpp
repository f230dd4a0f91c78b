#pragma once

#include "irbed/sandbox.hpp"

namespace irbed::sandbox {

/// Backend that shells out to an OCI runtime CLI (docker or podman):
/// `--network none`, read-only bind mounts for inputs, one writable mount
/// for the output directory. Auto-detects the runtime when none is named.
class OciBackend : public ContainerBackend {
 public:
  explicit OciBackend(std::string runtime = "");

  std::string name() const override { return "oci:" + runtime_; }
  std::string image_digest(const std::string& image_ref) override;
  RunOutcome run(const SandboxSpec& spec) override;

  const std::string& runtime() const { return runtime_; }

  /// The exact invocation for a spec; pure, for tests and dry runs.
  static std::vector<std::string> build_argv(const std::string& runtime, const SandboxSpec& spec,
                                             const std::string& container_name);

  /// Empty when neither docker nor podman is on PATH.
  static std::string detect_runtime();

 private:
  std::string runtime_;
};

}  // namespace irbed::sandbox
