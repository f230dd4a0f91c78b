#include "irbed/executor.hpp"

#include <algorithm>
#include <condition_variable>
#include <map>
#include <mutex>
#include <set>
#include <thread>

#include "irbed/digest.hpp"
#include "irbed/io.hpp"

namespace irbed::exec {

namespace fs = std::filesystem;
using formats::Json;

namespace {

constexpr const char* kInputMount = "/mnt/input";
constexpr const char* kRunMount = "/mnt/run";
constexpr const char* kOutputMount = "/mnt/output";

}  // namespace

std::string_view node_state_name(NodeState state) {
  switch (state) {
    case NodeState::cached: return "cache hit";
    case NodeState::executed: return "executed";
    case NodeState::failed: return "failed";
    case NodeState::skipped: return "skipped";
  }
  return "?";
}

const NodeStatus* ExecutionReport::status_of(const registry::NodeRef& ref) const {
  for (const auto& status : nodes) {
    if (status.node == ref) return &status;
  }
  return nullptr;
}

ResolvedCommand resolve_command(std::string_view command_template, const std::string& input_dir,
                                const std::string& output_dir,
                                const std::optional<std::string>& run_dir) {
  std::map<std::string, std::string> values{{"inputDataset", input_dir},
                                            {"outputDir", output_dir}};
  if (run_dir) values["inputRun"] = *run_dir;

  std::string out;
  std::size_t pos = 0;
  while (pos < command_template.size()) {
    char c = command_template[pos];
    if (c != '$') {
      out.push_back(c);
      ++pos;
      continue;
    }
    if (pos + 1 < command_template.size() && command_template[pos + 1] == '$') {
      out.push_back('$');
      pos += 2;
      continue;
    }
    std::size_t start = pos + 1;
    bool braced = start < command_template.size() && command_template[start] == '{';
    if (braced) ++start;
    std::size_t end = start;
    while (end < command_template.size() &&
           (std::isalnum(static_cast<unsigned char>(command_template[end])) ||
            command_template[end] == '_')) {
      ++end;
    }
    std::string name(command_template.substr(start, end - start));
    if (braced) {
      if (end >= command_template.size() || command_template[end] != '}') {
        throw Error(ErrorKind::validation, "unterminated ${...} in command");
      }
      ++end;
    }
    auto it = values.find(name);
    if (it == values.end()) {
      if (name == "inputRun") {
        throw Error(ErrorKind::validation,
                    "$inputRun is only available to components with predecessors");
      }
      throw Error(ErrorKind::validation, "unknown variable $" + name + " in command");
    }
    out += it->second;
    pos = end;
  }

  ResolvedCommand resolved;
  resolved.command = std::move(out);
  resolved.env = std::move(values);
  return resolved;
}

Executor::Executor(hub::DatasetHub& hub, registry::Registry& registry, cache::CacheStore& cache,
                   sandbox::ContainerBackend& backend, fs::path staging_root, int parallelism)
    : hub_(hub),
      registry_(registry),
      cache_(cache),
      backend_(backend),
      staging_root_(std::move(staging_root)),
      parallelism_(std::max(1, parallelism)) {
  fs::create_directories(staging_root_);
}

cache::CacheKey Executor::node_key(const registry::Node& node, const std::string& input_digest,
                                   const std::vector<std::string>& predecessor_output_digests) {
  Sha256 h;
  if (node.is_upload()) {
    h.field("upload");
    h.field(node.ref.id);
    h.field(std::to_string(node.ref.version));
    h.field(node.payload_digest);
    return cache::CacheKey{h.hex()};
  }
  h.field("component");
  h.field(node.ref.id);
  h.field(std::to_string(node.ref.version));
  h.field(backend_.image_digest(node.image_ref));
  h.field(node.command);
  h.field(input_digest);
  for (const auto& digest : predecessor_output_digests) h.field(digest);
  return cache::CacheKey{h.hex()};
}

std::optional<fs::path> Executor::find_run_file(const fs::path& output_dir) {
  fs::path preferred = output_dir / "run.txt";
  if (fs::exists(preferred)) return preferred;
  std::vector<fs::path> candidates;
  if (fs::exists(output_dir)) {
    for (const auto& entry : fs::directory_iterator(output_dir)) {
      if (entry.is_regular_file()) candidates.push_back(entry.path());
    }
  }
  std::sort(candidates.begin(), candidates.end());
  for (const auto& candidate : candidates) {
    try {
      formats::parse_run(read_file(candidate));
      return candidate;
    } catch (const Error&) {
      continue;
    }
  }
  return std::nullopt;
}

std::optional<formats::RunFile> Executor::verify_output(registry::NodeKind kind,
                                                        const fs::path& output_dir) const {
  if (kind != registry::NodeKind::full_rank && kind != registry::NodeKind::re_rank) {
    return std::nullopt;  // generic artifacts pass through
  }
  bool empty = !fs::exists(output_dir) || fs::is_empty(output_dir);
  if (empty) {
    throw Error(ErrorKind::execution,
                "retrieval component produced an empty output directory, expected a run file");
  }
  auto run_file = find_run_file(output_dir);
  if (!run_file) {
    throw Error(ErrorKind::execution, "no parseable run file found in output directory");
  }
  return formats::parse_run(read_file(*run_file));
}

Executor::NodeInput Executor::stage_dataset_input(const std::string& dataset_id) {
  // only the software-facing files are staged; qrels never enter the sandbox
  NodeInput input;
  input.digest = hub_.input_digest(dataset_id);
  fs::path dir = staging_root_ / "inputs" / dataset_id / input.digest.substr(0, 16);
  FileLock lock(staging_root_ / "inputs" / (".lock-" + dataset_id));
  if (!fs::exists(dir / "documents.jsonl.gz") || !fs::exists(dir / "topics.jsonl.gz")) {
    fs::create_directories(dir);
    fs::copy_file(hub_.resource_path(dataset_id, hub::Resource::documents),
                  dir / "documents.jsonl.gz", fs::copy_options::overwrite_existing);
    fs::copy_file(hub_.resource_path(dataset_id, hub::Resource::topics), dir / "topics.jsonl.gz",
                  fs::copy_options::overwrite_existing);
  }
  input.host_dir = dir;
  return input;
}

Executor::NodeInput Executor::stage_rerank_input(const std::string& dataset_id,
                                                 const formats::RunFile& run, std::int64_t depth,
                                                 bool lenient) {
  auto entries = hub_.build_rerank(dataset_id, run, depth, lenient);
  std::string bytes = formats::serialize_rerank(entries, /*gzip_output=*/true);
  NodeInput input;
  input.digest = sha256_hex(bytes);
  fs::path dir = staging_root_ / "rerank" / input.digest.substr(0, 32);
  FileLock lock(staging_root_ / "rerank" / (".lock-" + input.digest.substr(0, 32)));
  if (!fs::exists(dir / "re-rank.jsonl.gz")) {
    write_file(dir / "re-rank.jsonl.gz", bytes);
  }
  input.host_dir = dir;
  return input;
}

NodeStatus Executor::process_node(const registry::Node& node, const ExecutionRequest& request,
                                  const std::vector<cache::CacheEntry>& predecessors,
                                  cache::CacheEntry& produced) {
  NodeStatus status;
  status.node = node.ref;
  status.kind = node.kind;
  std::string started_at = utc_timestamp_iso8601();

  // ---- input materialization ----
  NodeInput input;
  if (!node.is_upload()) {
    if (node.kind == registry::NodeKind::re_rank) {
      std::optional<formats::RunFile> source;
      for (const auto& pred : predecessors) {
        auto run_file = find_run_file(pred.output_path);
        if (run_file) {
          source = formats::parse_run(read_file(*run_file));
          break;
        }
      }
      if (!source) {
        throw Error(ErrorKind::execution,
                    "re-rank component has no predecessor output containing a run file");
      }
      input = stage_rerank_input(request.dataset_id, *source, request.rerank_depth,
                                 request.lenient_rerank);
    } else {
      input = stage_dataset_input(request.dataset_id);
    }
  }

  std::vector<std::string> predecessor_digests;
  for (const auto& pred : predecessors) predecessor_digests.push_back(pred.output_digest);

  status.key = node_key(node, input.digest, predecessor_digests);

  if (auto hit = cache_.lookup(status.key)) {
    status.state = NodeState::cached;
    status.output_digest = hit->output_digest;
    produced = std::move(*hit);
    return status;
  }

  auto slot = cache_.acquire(status.key);
  if (slot.existing()) {
    status.state = NodeState::cached;
    status.output_digest = slot.existing()->output_digest;
    produced = *slot.existing();
    return status;
  }

  // ---- uploads materialize their payload as output, no container ----
  if (node.is_upload()) {
    copy_tree(node.payload_dir, slot.output_dir());
    Json provenance;
    provenance["node"] = {{"id", node.ref.id}, {"version", node.ref.version}, {"kind", "upload"}};
    provenance["payload_digest"] = node.payload_digest;
    provenance["cache_key"] = status.key.digest;
    provenance["backend"] = "none";
    provenance["started_at"] = started_at;
    provenance["finished_at"] = utc_timestamp_iso8601();
    produced = slot.seal(std::move(provenance));
    status.state = NodeState::executed;
    status.output_digest = produced.output_digest;
    return status;
  }

  // ---- sandboxed container execution ----
  sandbox::SandboxSpec spec;
  spec.image_ref = node.image_ref;
  spec.limits = request.limits;
  spec.mounts.push_back({input.host_dir, kInputMount, /*writable=*/false});
  std::optional<std::string> run_dir;
  if (predecessors.size() == 1) {
    // single predecessor: $inputRun points directly at its output
    run_dir = kRunMount;
    spec.mounts.push_back({predecessors[0].output_path, kRunMount, false});
  } else if (predecessors.size() > 1) {
    run_dir = kRunMount;
    for (std::size_t i = 0; i < predecessors.size(); ++i) {
      // ordinal subdirectories in definition order
      spec.mounts.push_back(
          {predecessors[i].output_path, std::string(kRunMount) + "/" + std::to_string(i + 1),
           false});
    }
  }
  spec.mounts.push_back({slot.output_dir(), kOutputMount, /*writable=*/true});

  ResolvedCommand resolved = resolve_command(node.command, kInputMount, kOutputMount, run_dir);
  spec.command = resolved.command;
  spec.env = resolved.env;

  sandbox::RunOutcome outcome = backend_.run(spec);
  cache_.write_logs(status.key, outcome.stdout_text, outcome.stderr_text);
  status.wall = outcome.wall;
  status.violations = outcome.violations;

  if (!outcome.ok()) {
    slot.abandon();
    status.state = NodeState::failed;
    if (outcome.timed_out) {
      status.message = "timed out after " + std::to_string(request.limits.timeout.count()) + "s";
    } else {
      status.message = "exit code " + std::to_string(outcome.exit_code);
    }
    if (!outcome.violations.empty()) {
      status.message += "; sandbox violations: ";
      for (std::size_t i = 0; i < outcome.violations.size(); ++i) {
        if (i > 0) status.message += "; ";
        status.message += outcome.violations[i];
      }
    }
    std::string stderr_tail = outcome.stderr_text.substr(
        outcome.stderr_text.size() > 400 ? outcome.stderr_text.size() - 400 : 0);
    if (!stderr_tail.empty()) status.message += "; stderr: " + stderr_tail;
    status.message +=
        " (logs: " + (cache_.entry_dir(status.key) / "logs").string() + ")";
    return status;
  }

  try {
    verify_output(node.kind, slot.output_dir());
  } catch (const Error& e) {
    slot.abandon();
    status.state = NodeState::failed;
    status.message = e.what();
    return status;
  }

  Json provenance;
  provenance["node"] = {{"id", node.ref.id},
                        {"version", node.ref.version},
                        {"kind", std::string(registry::node_kind_name(node.kind))}};
  provenance["image_ref"] = node.image_ref;
  provenance["image_digest"] = backend_.image_digest(node.image_ref);
  provenance["command_template"] = node.command;
  provenance["resolved_command"] = resolved.command;
  provenance["dataset"] = {{"id", request.dataset_id}, {"input_digest", input.digest}};
  Json preds = Json::array();
  for (std::size_t i = 0; i < predecessors.size(); ++i) {
    Json pred;
    pred["id"] = node.predecessors[i].id;
    pred["version"] = node.predecessors[i].version;
    pred["cache_key"] = predecessors[i].key.digest;
    pred["output_digest"] = predecessors[i].output_digest;
    preds.push_back(std::move(pred));
  }
  provenance["predecessors"] = preds;
  provenance["cache_key"] = status.key.digest;
  provenance["backend"] = backend_.name();
  provenance["resource_limits"] = {{"cpu_cores", request.limits.cpu_cores},
                                   {"memory_bytes", request.limits.memory_bytes},
                                   {"timeout_seconds", request.limits.timeout.count()}};
  provenance["started_at"] = started_at;
  provenance["finished_at"] = utc_timestamp_iso8601();
  provenance["wall_ms"] = outcome.wall.count();
  provenance["exit_code"] = outcome.exit_code;

  produced = slot.seal(std::move(provenance));
  status.state = NodeState::executed;
  status.output_digest = produced.output_digest;
  return status;
}

ExecutionReport Executor::execute(const ExecutionRequest& request) {
  const auto& pipeline = request.pipeline;
  if (!hub_.exists(request.dataset_id)) {
    throw Error(ErrorKind::not_found, "dataset '" + request.dataset_id + "' is not registered");
  }
  if (request.limits.cpu_cores <= 0 || request.limits.memory_bytes == 0 ||
      request.limits.timeout.count() <= 0) {
    throw Error(ErrorKind::validation, "resource limits must be positive");
  }

  ExecutionReport report;
  report.dataset_id = request.dataset_id;
  report.backend = backend_.name();

  // load definitions up front so missing nodes fail before any execution
  std::map<registry::NodeRef, registry::Node> defs;
  for (const auto& ref : pipeline.order) defs.emplace(ref, registry_.get(ref));

  std::mutex mutex;
  std::condition_variable cv;
  std::map<registry::NodeRef, std::size_t> pending;  // unfinished predecessors
  std::map<registry::NodeRef, std::vector<registry::NodeRef>> dependents;
  std::map<registry::NodeRef, cache::CacheEntry> sealed;
  std::map<registry::NodeRef, NodeStatus> statuses;
  std::vector<registry::NodeRef> ready;
  std::size_t remaining = pipeline.order.size();

  for (const auto& ref : pipeline.order) {
    const auto& node = defs.at(ref);
    pending[ref] = node.predecessors.size();
    for (const auto& pred : node.predecessors) dependents[pred].push_back(ref);
    if (node.predecessors.empty()) ready.push_back(ref);
  }

  auto mark_skipped = [&](auto&& self, const registry::NodeRef& ref,
                          const std::string& cause) -> void {
    for (const auto& dependent : dependents[ref]) {
      if (statuses.count(dependent)) continue;
      NodeStatus status;
      status.node = dependent;
      status.kind = defs.at(dependent).kind;
      status.state = NodeState::skipped;
      status.message = "predecessor " + cause + " failed";
      statuses[dependent] = status;
      --remaining;
      self(self, dependent, cause);
    }
  };

  auto worker = [&] {
    std::unique_lock<std::mutex> lock(mutex);
    for (;;) {
      cv.wait(lock, [&] { return !ready.empty() || remaining == 0; });
      if (ready.empty()) {
        if (remaining == 0) return;
        continue;
      }
      registry::NodeRef ref = ready.back();
      ready.pop_back();

      const registry::Node& node = defs.at(ref);
      std::vector<cache::CacheEntry> preds;
      preds.reserve(node.predecessors.size());
      for (const auto& pred : node.predecessors) preds.push_back(sealed.at(pred));

      lock.unlock();
      NodeStatus status;
      cache::CacheEntry produced;
      try {
        status = process_node(node, request, preds, produced);
      } catch (const std::exception& e) {
        status.node = ref;
        status.kind = node.kind;
        status.state = NodeState::failed;
        status.message = e.what();
      }
      lock.lock();

      statuses[ref] = status;
      --remaining;
      if (status.state == NodeState::cached || status.state == NodeState::executed) {
        sealed[ref] = std::move(produced);
        for (const auto& dependent : dependents[ref]) {
          if (--pending[dependent] == 0 && statuses.count(dependent) == 0) {
            ready.push_back(dependent);
          }
        }
      } else {
        mark_skipped(mark_skipped, ref, ref.to_string());
      }
      cv.notify_all();
    }
  };

  std::size_t n_workers =
      std::min<std::size_t>(static_cast<std::size_t>(parallelism_), pipeline.order.size());
  n_workers = std::max<std::size_t>(n_workers, 1);
  std::vector<std::thread> workers;
  for (std::size_t i = 0; i < n_workers; ++i) workers.emplace_back(worker);
  for (auto& thread : workers) thread.join();

  for (const auto& ref : pipeline.order) {
    auto it = statuses.find(ref);
    if (it != statuses.end()) {
      report.nodes.push_back(it->second);
    } else {
      NodeStatus status;
      status.node = ref;
      status.kind = defs.at(ref).kind;
      status.state = NodeState::skipped;
      status.message = "not reached";
      report.nodes.push_back(status);
    }
  }
  auto terminal_it = sealed.find(pipeline.terminal);
  if (terminal_it != sealed.end()) report.terminal = terminal_it->second;
  return report;
}

}  // namespace irbed::exec
