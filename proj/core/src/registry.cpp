#include "irbed/registry.hpp"

#include <algorithm>
#include <set>

#include "irbed/digest.hpp"
#include "irbed/io.hpp"

namespace irbed::registry {

namespace fs = std::filesystem;
using formats::Json;

std::string_view node_kind_name(NodeKind kind) {
  switch (kind) {
    case NodeKind::full_rank: return "full-rank";
    case NodeKind::re_rank: return "re-rank";
    case NodeKind::generic: return "generic";
    case NodeKind::upload: return "upload";
  }
  return "?";
}

NodeKind node_kind_from_name(std::string_view name) {
  if (name == "full-rank" || name == "full_rank") return NodeKind::full_rank;
  if (name == "re-rank" || name == "re_rank") return NodeKind::re_rank;
  if (name == "generic") return NodeKind::generic;
  if (name == "upload") return NodeKind::upload;
  throw Error(ErrorKind::validation, "unknown node kind: " + std::string(name));
}

NodeRef parse_node_ref(std::string_view text) {
  NodeRef ref;
  auto at = text.rfind('@');
  if (at == std::string_view::npos) {
    ref.id = std::string(text);
    ref.version = 0;
    return ref;
  }
  ref.id = std::string(text.substr(0, at));
  std::string version(text.substr(at + 1));
  try {
    ref.version = std::stoi(version);
  } catch (...) {
    throw Error(ErrorKind::validation, "bad node reference: '" + std::string(text) + "'");
  }
  if (ref.id.empty() || ref.version < 0) {
    throw Error(ErrorKind::validation, "bad node reference: '" + std::string(text) + "'");
  }
  return ref;
}

namespace {

Json ref_to_json(const NodeRef& ref) { return Json(ref.to_string()); }

NodeRef ref_from_json(const Json& value) { return parse_node_ref(value.get<std::string>()); }

}  // namespace

namespace {

constexpr std::size_t kSnapshotInterval = 128;

Json node_to_json(const Node& node) {
  Json out;
  out["id"] = node.ref.id;
  out["version"] = node.ref.version;
  out["kind"] = std::string(node_kind_name(node.kind));
  if (node.is_upload()) {
    out["description"] = node.description;
    out["payload_digest"] = node.payload_digest;
  } else {
    out["image"] = node.image_ref;
    out["command"] = node.command;
    Json preds = Json::array();
    for (const auto& pred : node.predecessors) preds.push_back(ref_to_json(pred));
    out["predecessors"] = preds;
  }
  return out;
}

}  // namespace

Registry::Registry(fs::path dir, fs::path uploads_dir)
    : dir_(std::move(dir)),
      log_file_(dir_ / "components.log"),
      snapshot_file_(dir_ / "snapshot.json"),
      uploads_dir_(std::move(uploads_dir)) {
  fs::create_directories(dir_);
  fs::create_directories(uploads_dir_);
  load();
}

void Registry::load() {
  nodes_.clear();
  applied_events_ = 0;
  snapshot_events_ = 0;

  // the snapshot materializes a log prefix; the tail is replayed on top.
  // a snapshot claiming more events than the log has is stale (the log
  // was replaced, e.g. by an archive import) and is ignored.
  std::size_t log_lines = 0;
  std::string text;
  if (fs::exists(log_file_)) {
    text = read_file(log_file_);
    for (char c : text) log_lines += (c == '\n') ? 1 : 0;
    if (!text.empty() && text.back() != '\n') ++log_lines;
  }
  if (fs::exists(snapshot_file_)) {
    Json snapshot = Json::parse(read_file(snapshot_file_));
    auto covered = snapshot.at("applied_events").get<std::size_t>();
    if (covered <= log_lines) {
      for (const auto& entry : snapshot.at("nodes")) {
        Node node;
        node.ref.id = entry.at("id").get<std::string>();
        node.ref.version = entry.at("version").get<int>();
        node.kind = node_kind_from_name(entry.at("kind").get<std::string>());
        if (node.kind == NodeKind::upload) {
          node.description = entry.at("description").get<std::string>();
          node.payload_digest = entry.at("payload_digest").get<std::string>();
          node.payload_dir = uploads_dir_ / node.ref.id / ("v" + std::to_string(node.ref.version));
        } else {
          node.image_ref = entry.at("image").get<std::string>();
          node.command = entry.at("command").get<std::string>();
          for (const auto& pred : entry.at("predecessors")) {
            node.predecessors.push_back(ref_from_json(pred));
          }
        }
        nodes_[node.ref.id][node.ref.version] = std::move(node);
      }
      applied_events_ = covered;
      snapshot_events_ = covered;
    }
  }

  std::size_t pos = 0, line_no = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string::npos) eol = text.size();
    std::string_view line(text.data() + pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (line_no <= applied_events_) continue;  // covered by the snapshot
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    Json event = Json::parse(line, nullptr, false);
    if (event.is_discarded()) {
      throw Error(ErrorKind::parse,
                  "components.log line " + std::to_string(line_no) + ": invalid JSON");
    }
    apply_event(event);
  }
  applied_events_ = log_lines;
}

void Registry::maybe_snapshot() {
  if (applied_events_ < snapshot_events_ + kSnapshotInterval) return;
  // with concurrent writer processes our view may trail the log; only
  // a view covering every logged line may be materialized as a prefix
  FileLock lock(dir_ / ".lock-snapshot");
  std::size_t log_lines = 0;
  if (fs::exists(log_file_)) {
    std::string text = read_file(log_file_);
    for (char c : text) log_lines += (c == '\n') ? 1 : 0;
    if (!text.empty() && text.back() != '\n') ++log_lines;
  }
  if (log_lines != applied_events_) {
    snapshot_events_ = applied_events_;  // retry after the next interval
    return;
  }
  Json nodes = Json::array();
  for (const auto& [id, versions] : nodes_) {
    for (const auto& [version, node] : versions) nodes.push_back(node_to_json(node));
  }
  Json snapshot;
  snapshot["applied_events"] = applied_events_;
  snapshot["nodes"] = nodes;
  write_file(snapshot_file_, snapshot.dump() + "\n");
  snapshot_events_ = applied_events_;
}

void Registry::reload() {
  std::lock_guard<std::mutex> lock(mutex_);
  load();
}

void Registry::apply_event(const Json& event) {
  std::string type = event.at("event").get<std::string>();
  if (type == "add_component") {
    Node node;
    node.ref.id = event.at("id").get<std::string>();
    node.ref.version = event.at("version").get<int>();
    node.kind = node_kind_from_name(event.at("kind").get<std::string>());
    node.image_ref = event.at("image").get<std::string>();
    node.command = event.at("command").get<std::string>();
    for (const auto& pred : event.at("predecessors")) {
      node.predecessors.push_back(ref_from_json(pred));
    }
    nodes_[node.ref.id][node.ref.version] = std::move(node);
  } else if (type == "add_upload") {
    Node node;
    node.ref.id = event.at("id").get<std::string>();
    node.ref.version = event.at("version").get<int>();
    node.kind = NodeKind::upload;
    node.description = event.at("description").get<std::string>();
    node.payload_digest = event.at("payload_digest").get<std::string>();
    node.payload_dir = uploads_dir_ / node.ref.id / ("v" + std::to_string(node.ref.version));
    nodes_[node.ref.id][node.ref.version] = std::move(node);
  } else if (type == "delete_node") {
    NodeRef ref;
    ref.id = event.at("id").get<std::string>();
    ref.version = event.at("version").get<int>();
    auto it = nodes_.find(ref.id);
    if (it != nodes_.end()) {
      it->second.erase(ref.version);
      if (it->second.empty()) nodes_.erase(it);
    }
  } else {
    throw Error(ErrorKind::parse, "components.log: unknown event type '" + type + "'");
  }
}

void Registry::append_event(const Json& event) {
  append_line_locked(log_file_, event.dump());
  ++applied_events_;
}

void Registry::validate_command_template(const std::string& command,
                                         std::size_t predecessor_count) const {
  std::size_t pos = 0;
  while ((pos = command.find('$', pos)) != std::string::npos) {
    if (pos + 1 < command.size() && command[pos + 1] == '$') {
      pos += 2;
      continue;
    }
    std::size_t start = pos + 1;
    bool braced = start < command.size() && command[start] == '{';
    if (braced) ++start;
    std::size_t end = start;
    while (end < command.size() && (std::isalnum(command[end]) || command[end] == '_')) ++end;
    std::string name = command.substr(start, end - start);
    if (braced) {
      if (end >= command.size() || command[end] != '}') {
        throw Error(ErrorKind::validation, "unterminated ${...} in command template");
      }
    }
    if (name != "inputDataset" && name != "outputDir" && name != "inputRun") {
      throw Error(ErrorKind::validation, "unknown variable $" + name + " in command template");
    }
    if (name == "inputRun" && predecessor_count == 0) {
      throw Error(ErrorKind::validation,
                  "$inputRun may only be used by components with predecessors");
    }
    pos = end;
  }
}

int Registry::latest_version(const std::string& id) const {
  std::lock_guard<std::mutex> lock(mutex_);
  auto it = nodes_.find(id);
  if (it == nodes_.end() || it->second.empty()) return 0;
  return it->second.rbegin()->first;
}

bool Registry::exists(const NodeRef& ref) const {
  std::lock_guard<std::mutex> lock(mutex_);
  auto it = nodes_.find(ref.id);
  if (it == nodes_.end() || it->second.empty()) return false;
  if (ref.version == 0) return true;
  return it->second.count(ref.version) > 0;
}

Node Registry::get_locked(const NodeRef& ref) const {
  auto it = nodes_.find(ref.id);
  if (it == nodes_.end() || it->second.empty()) {
    throw Error(ErrorKind::not_found, "no such node: '" + ref.id + "'");
  }
  if (ref.version == 0) return it->second.rbegin()->second;
  auto version_it = it->second.find(ref.version);
  if (version_it == it->second.end()) {
    throw Error(ErrorKind::not_found, "no such node: '" + ref.to_string() + "'");
  }
  return version_it->second;
}

Node Registry::get(const NodeRef& ref) const {
  std::lock_guard<std::mutex> lock(mutex_);
  return get_locked(ref);
}

std::vector<Node> Registry::list() const {
  std::lock_guard<std::mutex> lock(mutex_);
  std::vector<Node> out;
  for (const auto& [id, versions] : nodes_) {
    for (const auto& [version, node] : versions) out.push_back(node);
  }
  return out;
}

Node Registry::add_component(const std::string& id, const std::string& image_ref,
                             const std::string& command,
                             const std::vector<NodeRef>& predecessors, NodeKind kind) {
  if (id.empty()) throw Error(ErrorKind::validation, "component id must be non-empty");
  if (kind == NodeKind::upload) {
    throw Error(ErrorKind::validation, "uploads are added via add_upload");
  }
  if (image_ref.empty()) throw Error(ErrorKind::validation, "image reference must be non-empty");
  validate_command_template(command, predecessors.size());

  std::lock_guard<std::mutex> lock(mutex_);
  // pin every predecessor to a concrete version now; "latest" floats only
  // until this point
  std::vector<NodeRef> pinned;
  for (const auto& pred : predecessors) {
    Node node = [&] {
      try {
        return get_locked(pred);
      } catch (const Error&) {
        throw Error(ErrorKind::not_found,
                    "predecessor '" + pred.id + "' must exist when defining a new component");
      }
    }();
    pinned.push_back(node.ref);
  }

  Node node;
  node.ref.id = id;
  auto it = nodes_.find(id);
  node.ref.version = (it == nodes_.end() || it->second.empty()) ? 1 : it->second.rbegin()->first + 1;
  node.kind = kind;
  node.image_ref = image_ref;
  node.command = command;
  node.predecessors = pinned;

  Json event;
  event["event"] = "add_component";
  event["id"] = node.ref.id;
  event["version"] = node.ref.version;
  event["kind"] = std::string(node_kind_name(kind));
  event["image"] = image_ref;
  event["command"] = command;
  Json preds = Json::array();
  for (const auto& pred : pinned) preds.push_back(ref_to_json(pred));
  event["predecessors"] = preds;
  append_event(event);

  nodes_[id][node.ref.version] = node;
  maybe_snapshot();
  return node;
}

Node Registry::revise_component(const std::string& id, const std::optional<std::string>& image_ref,
                                const std::optional<std::string>& command) {
  std::lock_guard<std::mutex> lock(mutex_);
  Node prior = get_locked(NodeRef{id, 0});
  if (prior.is_upload()) {
    throw Error(ErrorKind::validation, "uploads cannot be revised; add a new upload version");
  }
  Node node = prior;
  node.ref.version = prior.ref.version + 1;
  if (image_ref) node.image_ref = *image_ref;
  if (command) node.command = *command;
  validate_command_template(node.command, node.predecessors.size());

  Json event;
  event["event"] = "add_component";
  event["id"] = node.ref.id;
  event["version"] = node.ref.version;
  event["kind"] = std::string(node_kind_name(node.kind));
  event["image"] = node.image_ref;
  event["command"] = node.command;
  Json preds = Json::array();
  for (const auto& pred : node.predecessors) preds.push_back(ref_to_json(pred));
  event["predecessors"] = preds;
  append_event(event);

  nodes_[id][node.ref.version] = node;
  maybe_snapshot();
  return node;
}

Node Registry::add_upload(const std::string& id, const std::vector<fs::path>& files,
                          const std::string& description) {
  if (id.empty()) throw Error(ErrorKind::validation, "upload id must be non-empty");
  if (files.empty()) throw Error(ErrorKind::validation, "an upload needs at least one file");

  std::lock_guard<std::mutex> lock(mutex_);
  Node node;
  node.ref.id = id;
  auto it = nodes_.find(id);
  node.ref.version = (it == nodes_.end() || it->second.empty()) ? 1 : it->second.rbegin()->first + 1;
  node.kind = NodeKind::upload;
  node.description = description;
  node.payload_dir = uploads_dir_ / id / ("v" + std::to_string(node.ref.version));

  fs::create_directories(node.payload_dir);
  for (const auto& file : files) {
    if (!fs::is_regular_file(file)) {
      throw Error(ErrorKind::not_found, "upload file not found: " + file.string());
    }
    fs::copy_file(file, node.payload_dir / file.filename(),
                  fs::copy_options::overwrite_existing);
  }
  node.payload_digest = tree_digest(node.payload_dir);

  Json event;
  event["event"] = "add_upload";
  event["id"] = node.ref.id;
  event["version"] = node.ref.version;
  event["description"] = description;
  event["payload_digest"] = node.payload_digest;
  Json names = Json::array();
  for (const auto& file : files) names.push_back(file.filename().string());
  event["files"] = names;
  append_event(event);

  nodes_[id][node.ref.version] = node;
  maybe_snapshot();
  return node;
}

void Registry::delete_node(const NodeRef& ref, const std::vector<std::string>& external_referents) {
  std::lock_guard<std::mutex> lock(mutex_);
  Node node = get_locked(ref);  // throws not_found; also resolves version 0
  std::vector<std::string> referents = external_referents;
  for (const auto& [id, versions] : nodes_) {
    for (const auto& [version, candidate] : versions) {
      if (candidate.ref == node.ref) continue;
      for (const auto& pred : candidate.predecessors) {
        if (pred == node.ref) referents.push_back(candidate.ref.to_string());
      }
    }
  }
  if (!referents.empty()) {
    std::sort(referents.begin(), referents.end());
    referents.erase(std::unique(referents.begin(), referents.end()), referents.end());
    std::string listing;
    for (const auto& name : referents) {
      if (!listing.empty()) listing += ", ";
      listing += name;
    }
    throw Error(ErrorKind::conflict, "cannot delete " + node.ref.to_string() +
                                         ": still referenced by " + listing);
  }

  Json event;
  event["event"] = "delete_node";
  event["id"] = node.ref.id;
  event["version"] = node.ref.version;
  append_event(event);

  auto it = nodes_.find(node.ref.id);
  it->second.erase(node.ref.version);
  if (it->second.empty()) nodes_.erase(it);
  maybe_snapshot();
}

Pipeline Registry::resolve_pipeline(const NodeRef& terminal) const {
  std::lock_guard<std::mutex> lock(mutex_);
  Node terminal_node = get_locked(terminal);

  Pipeline pipeline;
  pipeline.terminal = terminal_node.ref;

  // depth-first post-order with predecessors visited in definition order
  // gives a deterministic topological order with ancestors first
  std::set<NodeRef> visited;
  std::set<NodeRef> in_progress;
  std::vector<NodeRef> order;

  auto visit = [&](auto&& self, const NodeRef& ref) -> void {
    if (visited.count(ref)) return;
    if (in_progress.count(ref)) {
      throw Error(ErrorKind::integrity, "cycle detected through " + ref.to_string());
    }
    in_progress.insert(ref);
    Node node = get_locked(ref);
    for (const auto& pred : node.predecessors) self(self, pred);
    in_progress.erase(ref);
    visited.insert(ref);
    order.push_back(node.ref);
  };
  visit(visit, terminal_node.ref);

  pipeline.order = std::move(order);
  return pipeline;
}

}  // namespace irbed::registry
