#pragma once

// Pipeline executor: runs a resolved DAG over a dataset. Each node gets the
// three standard variables ($inputDataset, $outputDir, $inputRun), executes
// inside the container sandbox, and is cached content-addressed, so a node
// whose inputs have not changed never runs twice. Independent nodes may run
// in parallel; a node starts only after all predecessors sealed.

#include <chrono>
#include <optional>
#include <string>
#include <vector>

#include "irbed/cache.hpp"
#include "irbed/dataset_hub.hpp"
#include "irbed/registry.hpp"
#include "irbed/sandbox.hpp"

namespace irbed::exec {

using sandbox::ResourceLimits;

struct ResolvedCommand {
  std::string command;
  std::map<std::string, std::string> env;
};

/// Substitutes $inputDataset / $outputDir / $inputRun (also in ${...} form;
/// $$ escapes a literal dollar) and mirrors the values into the environment
/// map. Unknown variables and $inputRun without predecessors are errors.
ResolvedCommand resolve_command(std::string_view command_template, const std::string& input_dir,
                                const std::string& output_dir,
                                const std::optional<std::string>& run_dir);

enum class NodeState { cached, executed, failed, skipped };
std::string_view node_state_name(NodeState state);

struct NodeStatus {
  registry::NodeRef node;
  registry::NodeKind kind = registry::NodeKind::generic;
  cache::CacheKey key;
  NodeState state = NodeState::skipped;
  std::string message;
  std::string output_digest;
  std::chrono::milliseconds wall{0};
  std::vector<std::string> violations;
};

struct ExecutionReport {
  std::string dataset_id;
  std::string backend;
  std::vector<NodeStatus> nodes;  // in pipeline order
  std::optional<cache::CacheEntry> terminal;

  bool ok() const { return terminal.has_value(); }
  const NodeStatus* status_of(const registry::NodeRef& ref) const;
};

struct ExecutionRequest {
  registry::Pipeline pipeline;
  std::string dataset_id;
  ResourceLimits limits;
  std::int64_t rerank_depth = 100;
  // skip (with a warning) run documents missing from the dataset when
  // materializing re-rank inputs, instead of failing the node
  bool lenient_rerank = false;
};

class Executor {
 public:
  /// `staging_root` receives materialized node inputs (dataset views and
  /// derived re-rank files), kept outside the dataset store.
  Executor(hub::DatasetHub& hub, registry::Registry& registry, cache::CacheStore& cache,
           sandbox::ContainerBackend& backend, std::filesystem::path staging_root,
           int parallelism = 2);

  ExecutionReport execute(const ExecutionRequest& request);

  /// Cache key for a node given its input digest and sealed predecessor
  /// output digests; includes the image content digest and the command.
  cache::CacheKey node_key(const registry::Node& node, const std::string& input_digest,
                           const std::vector<std::string>& predecessor_output_digests);

  /// Locates the run file inside an output directory: `run.txt` if present,
  /// otherwise the first regular file (sorted) that parses as a run.
  static std::optional<std::filesystem::path> find_run_file(
      const std::filesystem::path& output_dir);

  /// Retrieval nodes (full-rank, re-rank) must leave a parseable run file;
  /// other kinds pass through. Extra files are preserved either way.
  std::optional<formats::RunFile> verify_output(registry::NodeKind kind,
                                                const std::filesystem::path& output_dir) const;

  sandbox::ContainerBackend& backend() { return backend_; }

 private:
  struct NodeInput {
    std::filesystem::path host_dir;  // directory mounted at /mnt/input
    std::string digest;
  };

  NodeInput stage_dataset_input(const std::string& dataset_id);
  NodeInput stage_rerank_input(const std::string& dataset_id, const formats::RunFile& run,
                               std::int64_t depth, bool lenient);
  NodeStatus process_node(const registry::Node& node, const ExecutionRequest& request,
                          const std::vector<cache::CacheEntry>& predecessors,
                          cache::CacheEntry& produced);

  hub::DatasetHub& hub_;
  registry::Registry& registry_;
  cache::CacheStore& cache_;
  sandbox::ContainerBackend& backend_;
  std::filesystem::path staging_root_;
  int parallelism_;
};

}  // namespace irbed::exec
