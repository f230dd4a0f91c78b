#pragma once

// Software registry: immutable versioned components (container image +
// command + pinned predecessors), file uploads usable as pipeline sources,
// and DAG resolution. Persisted as an append-only JSON-lines log that is
// replayed on open, so every run stays traceable to the exact definitions
// that produced it.

#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "irbed/formats.hpp"

namespace irbed::registry {

enum class NodeKind { full_rank, re_rank, generic, upload };

std::string_view node_kind_name(NodeKind kind);
NodeKind node_kind_from_name(std::string_view name);

struct NodeRef {
  std::string id;
  int version = 0;

  bool operator==(const NodeRef&) const = default;
  auto operator<=>(const NodeRef&) const = default;
  std::string to_string() const { return id + "@" + std::to_string(version); }
};

/// Parses "id" (version 0 = latest) or "id@version".
NodeRef parse_node_ref(std::string_view text);

struct Node {
  NodeRef ref;
  NodeKind kind = NodeKind::generic;
  // components
  std::string image_ref;
  std::string command;
  std::vector<NodeRef> predecessors;  // pinned versions, definition order
  // uploads
  std::string description;
  std::string payload_digest;
  std::filesystem::path payload_dir;

  bool is_upload() const { return kind == NodeKind::upload; }
};

struct Pipeline {
  NodeRef terminal;
  std::vector<NodeRef> order;  // topological, ancestors first, deterministic
};

class Registry {
 public:
  /// `dir` holds components.log; `uploads_dir` receives upload payloads.
  Registry(std::filesystem::path dir, std::filesystem::path uploads_dir);

  Node add_component(const std::string& id, const std::string& image_ref,
                     const std::string& command, const std::vector<NodeRef>& predecessors,
                     NodeKind kind);
  /// New version with the previous version's untouched fields carried over.
  Node revise_component(const std::string& id, const std::optional<std::string>& image_ref,
                        const std::optional<std::string>& command);
  Node add_upload(const std::string& id, const std::vector<std::filesystem::path>& files,
                  const std::string& description);

  /// Refuses while any other node lists (id, version) as a predecessor or
  /// while any entry in `external_referents` names it (cache entries, runs).
  void delete_node(const NodeRef& ref, const std::vector<std::string>& external_referents = {});

  bool exists(const NodeRef& ref) const;
  Node get(const NodeRef& ref) const;          // resolves version 0 to latest
  int latest_version(const std::string& id) const;  // 0 when absent
  std::vector<Node> list() const;

  Pipeline resolve_pipeline(const NodeRef& terminal) const;

  const std::filesystem::path& log_file() const { return log_file_; }

  /// Re-reads the log (after an archive import replaced it).
  void reload();

 private:
  Node get_locked(const NodeRef& ref) const;
  void validate_command_template(const std::string& command, std::size_t predecessor_count) const;
  void append_event(const formats::Json& event);
  void apply_event(const formats::Json& event);
  void load();
  void maybe_snapshot();

  std::filesystem::path dir_;
  std::filesystem::path log_file_;
  std::filesystem::path snapshot_file_;
  std::filesystem::path uploads_dir_;

  mutable std::mutex mutex_;
  std::map<std::string, std::map<int, Node>> nodes_;  // id -> version -> node
  std::size_t applied_events_ = 0;  // log lines materialized into nodes_
  std::size_t snapshot_events_ = 0;
};

}  // namespace irbed::registry
