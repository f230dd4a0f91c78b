#include "irbed/platform.hpp"

#include <algorithm>
#include <set>

#include "irbed/digest.hpp"
#include "irbed/io.hpp"
#include "irbed/oci_backend.hpp"

namespace irbed {

namespace fs = std::filesystem;
using formats::Json;

Platform::Platform(PlatformConfig config) : config_(std::move(config)) {
  if (config_.store_root.empty()) {
    throw Error(ErrorKind::validation, "store root must be set");
  }
  if (config_.parallelism < 0) {
    throw Error(ErrorKind::validation, "parallelism must be >= 1");
  }
  fs::create_directories(config_.store_root);

  // config.json fills fields the caller left unset
  fs::path config_file = config_.store_root / "config.json";
  if (fs::exists(config_file)) {
    Json stored = Json::parse(read_file(config_file));
    if (config_.backend.empty() && stored.contains("backend")) {
      config_.backend = stored["backend"].get<std::string>();
    }
    if (config_.oci_runtime.empty() && stored.contains("oci_runtime")) {
      config_.oci_runtime = stored["oci_runtime"].get<std::string>();
    }
    if (config_.parallelism == 0 && stored.contains("parallelism")) {
      config_.parallelism = stored["parallelism"].get<int>();
    }
    if (!config_.default_role && stored.contains("default_role")) {
      config_.default_role = hub::role_from_name(stored["default_role"].get<std::string>());
    }
    if (config_.task_id.empty() && stored.contains("task_id")) {
      config_.task_id = stored["task_id"].get<std::string>();
    }
  }
  if (config_.backend.empty()) config_.backend = "mock";
  if (config_.parallelism == 0) config_.parallelism = 2;
  if (!config_.default_role) config_.default_role = hub::Role::organizer;
  if (config_.task_id.empty()) config_.task_id = "task";
  persist_config();

  hub_ = std::make_unique<hub::DatasetHub>(config_.store_root / "datasets");
  registry_ = std::make_unique<registry::Registry>(config_.store_root / "registry",
                                                   config_.store_root / "uploads");
  cache_ = std::make_unique<cache::CacheStore>(config_.store_root / "cache");
  if (config_.backend == "mock") {
    backend_ = std::make_unique<sandbox::MockBackend>();
  } else if (config_.backend == "oci") {
    backend_ = std::make_unique<sandbox::OciBackend>(config_.oci_runtime);
  } else {
    throw Error(ErrorKind::validation, "unknown backend '" + config_.backend +
                                           "' (expected mock or oci)");
  }
  executor_ = std::make_unique<exec::Executor>(*hub_, *registry_, *cache_, *backend_,
                                               config_.store_root / "stage",
                                               config_.parallelism);
}

void Platform::persist_config() {
  Json out;
  out["backend"] = config_.backend;
  out["oci_runtime"] = config_.oci_runtime;
  out["parallelism"] = config_.parallelism;
  out["default_role"] = std::string(hub::role_name(*config_.default_role));
  out["task_id"] = config_.task_id;
  write_file(config_.store_root / "config.json", out.dump(2) + "\n");
}

void Platform::reload() { registry_->reload(); }

RunResult Platform::run_pipeline(const std::string& terminal, const std::string& dataset_id,
                                 const RunOptions& options) {
  registry::NodeRef terminal_ref = registry::parse_node_ref(terminal);
  registry::Node terminal_node = registry_->get(terminal_ref);

  exec::ExecutionRequest request;
  request.pipeline = registry_->resolve_pipeline(terminal_node.ref);
  request.dataset_id = dataset_id;
  request.limits = options.limits;
  request.rerank_depth = options.rerank_depth;
  request.lenient_rerank = options.lenient_rerank;

  RunResult result;
  result.report = executor_->execute(request);
  if (!result.report.ok()) return result;

  std::string approach = options.approach.empty() ? terminal_node.ref.id : options.approach;
  fs::path dir = runs_root() / approach / dataset_id;
  fs::create_directories(dir);

  // record run file (if the terminal produced one) and provenance
  auto run_file = exec::Executor::find_run_file(result.report.terminal->output_path);
  if (run_file) {
    result.run = formats::parse_run(read_file(*run_file));
    write_file(dir / "run.txt", formats::serialize_run(*result.run));
  }

  Json provenance;
  provenance["approach"] = approach;
  provenance["dataset"] = dataset_id;
  provenance["terminal"] = {{"id", terminal_node.ref.id},
                            {"version", terminal_node.ref.version}};
  provenance["cache_key"] = result.report.terminal->key.digest;
  provenance["output_digest"] = result.report.terminal->output_digest;
  provenance["backend"] = result.report.backend;
  Json nodes = Json::array();
  for (const auto& status : result.report.nodes) {
    Json node;
    node["id"] = status.node.id;
    node["version"] = status.node.version;
    node["kind"] = std::string(registry::node_kind_name(status.kind));
    node["state"] = std::string(exec::node_state_name(status.state));
    node["cache_key"] = status.key.digest;
    node["output_digest"] = status.output_digest;
    nodes.push_back(std::move(node));
  }
  provenance["nodes"] = nodes;
  provenance["rerank_depth"] = options.rerank_depth;
  write_file(dir / "provenance.json", provenance.dump(2) + "\n");

  result.record = RunRecordRef{approach, dataset_id, dir, run_file.has_value(), false};

  if (options.auto_evaluate && result.run && hub_->meta(dataset_id).qrels_digest) {
    try {
      auto outcome = evaluate_run(*result.run, dataset_id, options.measures);
      record_evaluation(dir, outcome);
      result.evaluation = std::move(outcome);
      result.record.has_evaluation = true;
    } catch (const eval::EvaluationRefused&) {
      // a run that fails its sanity check is recorded but not scored
    }
  }
  return result;
}

eval::EvaluationOutcome Platform::evaluate_run(const formats::RunFile& run,
                                               const std::string& dataset_id,
                                               std::span<const std::string> measures) {
  auto meta = hub_->meta(dataset_id);
  if (!meta.qrels_digest) {
    throw Error(ErrorKind::not_found, "dataset '" + dataset_id + "' has no qrels");
  }
  auto qrels =
      formats::parse_qrels(read_file(hub_->resource_path(dataset_id, hub::Resource::qrels)));
  auto topics = formats::parse_topics(
      read_file(hub_->resource_path(dataset_id, hub::Resource::topics)), true);
  return eval::evaluate(run, qrels, measures, topics);
}

void Platform::record_evaluation(const fs::path& dir, const eval::EvaluationOutcome& outcome) {
  write_file(dir / "evaluation.json", eval::evaluation_json(outcome.reports).dump(2) + "\n");
  write_file(dir / "sanity.json", eval::sanity_json(outcome.sanity).dump(2) + "\n");
}

std::vector<RunRecordRef> Platform::list_runs() const {
  std::vector<RunRecordRef> records;
  fs::path root = runs_root();
  if (!fs::exists(root)) return records;
  for (const auto& approach_dir : fs::directory_iterator(root)) {
    if (!approach_dir.is_directory()) continue;
    for (const auto& dataset_dir : fs::directory_iterator(approach_dir.path())) {
      if (!dataset_dir.is_directory()) continue;
      RunRecordRef record;
      record.approach = approach_dir.path().filename().string();
      record.dataset = dataset_dir.path().filename().string();
      record.dir = dataset_dir.path();
      record.has_run = fs::exists(record.dir / "run.txt");
      record.has_evaluation = fs::exists(record.dir / "evaluation.json");
      records.push_back(std::move(record));
    }
  }
  std::sort(records.begin(), records.end(), [](const RunRecordRef& a, const RunRecordRef& b) {
    if (a.approach != b.approach) return a.approach < b.approach;
    return a.dataset < b.dataset;
  });
  return records;
}

RunRecordRef Platform::run_record(const std::string& approach, const std::string& dataset) const {
  fs::path dir = runs_root() / approach / dataset;
  if (!fs::exists(dir / "provenance.json")) {
    throw Error(ErrorKind::not_found,
                "no recorded run for approach '" + approach + "' on dataset '" + dataset + "'");
  }
  RunRecordRef record;
  record.approach = approach;
  record.dataset = dataset;
  record.dir = dir;
  record.has_run = fs::exists(dir / "run.txt");
  record.has_evaluation = fs::exists(dir / "evaluation.json");
  return record;
}

formats::RunFile Platform::load_recorded_run(const std::string& approach,
                                             const std::string& dataset) const {
  RunRecordRef record = run_record(approach, dataset);
  if (!record.has_run) {
    throw Error(ErrorKind::withheld, "run of '" + approach + "' on '" + dataset +
                                         "' is not available (withheld or never produced)");
  }
  return formats::parse_run(read_file(record.dir / "run.txt"));
}

std::vector<analytics::EvalRecord> Platform::collect_evaluations(
    const std::string& measure) const {
  std::vector<analytics::EvalRecord> records;
  for (const auto& run : list_runs()) {
    if (!run.has_evaluation) continue;
    Json stored = Json::parse(read_file(run.dir / "evaluation.json"));
    if (!stored.contains(measure)) continue;
    analytics::EvalRecord record;
    record.approach = run.approach;
    record.task = run.dataset;
    record.report.measure = measure;
    record.report.mean = stored[measure]["mean"].get<double>();
    record.report.evaluated_query_count = stored[measure]["evaluated_query_count"].get<int>();
    for (const auto& [qid, value] : stored[measure]["per_query"].items()) {
      record.report.per_query[qid] = value.get<double>();
    }
    records.push_back(std::move(record));
  }
  return records;
}

analytics::EvaluationIndex Platform::evaluation_index(const std::string& measure) const {
  analytics::EvaluationIndex index;
  for (const auto& record : collect_evaluations(measure)) {
    index[record.approach][record.task] = record.report;
  }
  return index;
}

void Platform::delete_component(const registry::NodeRef& ref) {
  registry::Node node = registry_->get(ref);
  std::vector<std::string> referents;
  for (const auto& entry : cache_->entries()) {
    const Json& provenance = entry.provenance;
    if (!provenance.contains("node")) continue;
    if (provenance["node"]["id"] == node.ref.id &&
        provenance["node"]["version"].get<int>() == node.ref.version) {
      referents.push_back("cache entry " + entry.key.digest.substr(0, 12));
      continue;
    }
    if (provenance.contains("predecessors")) {
      for (const auto& pred : provenance["predecessors"]) {
        if (pred["id"] == node.ref.id && pred["version"].get<int>() == node.ref.version) {
          referents.push_back("cache entry " + entry.key.digest.substr(0, 12));
        }
      }
    }
  }
  for (const auto& run : list_runs()) {
    Json provenance = Json::parse(read_file(run.dir / "provenance.json"));
    for (const auto& entry : provenance["nodes"]) {
      if (entry["id"] == node.ref.id && entry["version"].get<int>() == node.ref.version) {
        referents.push_back("run " + run.approach + "/" + run.dataset);
      }
    }
  }
  registry_->delete_node(node.ref, referents);
}

std::string Platform::store_digest() const { return tree_digest(config_.store_root); }

std::string Platform::dataset_store_digest() const {
  return tree_digest(config_.store_root / "datasets");
}

}  // namespace irbed
