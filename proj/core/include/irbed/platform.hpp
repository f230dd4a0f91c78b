#pragma once

// Store-level facade binding all subsystems to one directory tree:
//
//   <store>/config.json          backend, parallelism, default role, task id
//   <store>/datasets/<id>/...    registered datasets (dataset_hub)
//   <store>/registry/...         components.log (registry)
//   <store>/uploads/<id>/vN/...  upload payloads
//   <store>/cache/<key>/...      sealed outputs with provenance (cache)
//   <store>/stage/...            materialized sandbox inputs
//   <store>/runs/<approach>/<dataset>/{run.txt, evaluation.json, provenance.json}

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "irbed/analytics.hpp"
#include "irbed/cache.hpp"
#include "irbed/dataset_hub.hpp"
#include "irbed/evaluator.hpp"
#include "irbed/executor.hpp"
#include "irbed/registry.hpp"
#include "irbed/sandbox.hpp"

namespace irbed {

// Unset fields (empty strings, parallelism 0) fall back to the store's
// config.json, then to the defaults: mock backend, parallelism 2,
// organizer role, task id "task".
struct PlatformConfig {
  std::filesystem::path store_root;
  std::string backend;      // "mock" or "oci"
  std::string oci_runtime;  // empty = auto-detect
  int parallelism = 0;
  std::optional<hub::Role> default_role;
  std::string task_id;
};

struct RunRecordRef {
  std::string approach;
  std::string dataset;
  std::filesystem::path dir;
  bool has_run = false;
  bool has_evaluation = false;
};

struct RunOptions {
  std::string approach;  // defaults to the terminal component id
  std::int64_t rerank_depth = 100;
  bool lenient_rerank = false;
  sandbox::ResourceLimits limits;
  bool auto_evaluate = true;  // evaluate + record when the dataset has qrels
  std::vector<std::string> measures{"ndcg@10"};
};

struct RunResult {
  exec::ExecutionReport report;
  std::optional<formats::RunFile> run;
  std::optional<eval::EvaluationOutcome> evaluation;
  RunRecordRef record;
};

class Platform {
 public:
  /// Opens (creating if needed) a store. Explicit fields in `config`
  /// override the store's config.json; the merged config is persisted.
  explicit Platform(PlatformConfig config);

  const PlatformConfig& config() const { return config_; }
  const std::filesystem::path& store_root() const { return config_.store_root; }

  hub::DatasetHub& datasets() { return *hub_; }
  registry::Registry& components() { return *registry_; }
  cache::CacheStore& cache() { return *cache_; }
  exec::Executor& executor() { return *executor_; }
  sandbox::ContainerBackend& backend() { return *backend_; }

  /// Resolves, executes, records under runs/<approach>/<dataset>, and (by
  /// default) evaluates when qrels exist. A failed pipeline returns a
  /// result whose report has no terminal entry; it does not throw.
  RunResult run_pipeline(const std::string& terminal, const std::string& dataset_id,
                         const RunOptions& options = {});

  /// Evaluates a parsed run against a dataset's qrels and topics.
  eval::EvaluationOutcome evaluate_run(const formats::RunFile& run, const std::string& dataset_id,
                                       std::span<const std::string> measures);

  std::vector<RunRecordRef> list_runs() const;
  RunRecordRef run_record(const std::string& approach, const std::string& dataset) const;
  formats::RunFile load_recorded_run(const std::string& approach,
                                     const std::string& dataset) const;

  /// Evaluation records for one measure across all recorded runs.
  std::vector<analytics::EvalRecord> collect_evaluations(const std::string& measure) const;
  analytics::EvaluationIndex evaluation_index(const std::string& measure) const;

  /// Deletes a node unless other nodes, cache entries, or recorded runs
  /// still reference it.
  void delete_component(const registry::NodeRef& ref);

  /// Digest over every file in the store; reads must leave it unchanged.
  std::string store_digest() const;
  std::string dataset_store_digest() const;

  std::filesystem::path runs_root() const { return config_.store_root / "runs"; }

  /// Re-opens stores after files changed underneath (archive import).
  void reload();

 private:
  void persist_config();
  void record_evaluation(const std::filesystem::path& dir,
                         const eval::EvaluationOutcome& outcome);

  PlatformConfig config_;
  std::unique_ptr<hub::DatasetHub> hub_;
  std::unique_ptr<registry::Registry> registry_;
  std::unique_ptr<cache::CacheStore> cache_;
  std::unique_ptr<sandbox::ContainerBackend> backend_;
  std::unique_ptr<exec::Executor> executor_;
};

}  // namespace irbed
