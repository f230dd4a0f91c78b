#pragma once

// Dataset registry: imports corpus/topics/qrels files into an immutable
// hub-owned store, synthesizes default_text fields, materializes re-rank
// files from runs, and enforces the participant/organizer/unregistered
// access matrix including blind (confidential) datasets.

#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "irbed/formats.hpp"

namespace irbed::hub {

enum class Resource { documents, topics, rerank, qrels };
enum class Role { participant, organizer, unregistered };

std::string_view resource_name(Resource resource);
std::string_view role_name(Role role);
Resource resource_from_name(std::string_view name);
Role role_from_name(std::string_view name);

/// Synthesizes a single text field from named source fields of an opaque
/// record, in rule order, joined by `joiner`. Missing fields are skipped.
struct DefaultTextRule {
  std::vector<std::string> source_fields;
  std::string joiner = " ";
};

struct DatasetMeta {
  std::string dataset_id;
  bool confidential = false;
  std::optional<DefaultTextRule> document_rule;
  std::optional<DefaultTextRule> topic_rule;
  std::string documents_digest;
  std::string topics_digest;
  std::optional<std::string> qrels_digest;
  // false when the archive that delivered this dataset withheld the content
  bool content_present = true;
};

struct Denial {
  Role role;
  Resource resource;
  bool liftable_by_grant;  // an organizer grant would allow this access
  std::string reason;
};

using FetchResult = std::variant<std::filesystem::path, Denial>;

struct AccessDecision {
  bool granted = false;
  std::optional<Denial> denial;
};

class DatasetHub {
 public:
  /// `root` is the hub directory, conventionally `<store>/datasets`.
  explicit DatasetHub(std::filesystem::path root);

  DatasetMeta register_dataset(const std::string& id, const std::filesystem::path& documents,
                               const std::filesystem::path& topics,
                               const std::optional<std::filesystem::path>& qrels,
                               bool confidential,
                               const std::optional<DefaultTextRule>& document_rule,
                               const std::optional<DefaultTextRule>& topic_rule,
                               Diagnostics* diag = nullptr);

  bool exists(const std::string& id) const;
  DatasetMeta meta(const std::string& id) const;
  std::vector<std::string> list() const;

  /// Only an organizer may flip a grant cell.
  void set_grant(const std::string& id, Resource resource, Role role, bool granted, Role actor);
  bool has_grant(const std::string& id, Resource resource, Role role) const;

  /// Pure access decision over the default matrix, grants, and the
  /// confidential flag; never touches content.
  AccessDecision check_access(const std::string& id, Resource resource, Role role) const;

  /// Returns the stored file for documents/topics/qrels when access is
  /// granted. For the rerank resource a source run must be supplied; the
  /// file is materialized on the fly.
  FetchResult fetch(const std::string& id, Resource resource, Role role,
                    const formats::RunFile* rerank_source = nullptr,
                    std::int64_t rerank_depth = 100, bool lenient = false,
                    Diagnostics* diag = nullptr);

  /// Trusted path lookup for platform internals (the executor mounts
  /// content into the sandbox regardless of user-facing access rules).
  std::filesystem::path resource_path(const std::string& id, Resource resource) const;

  /// Joins a run against the dataset's topics and documents, keeping lines
  /// with rank <= depth and carrying the previous stage's score and rank.
  /// Entries come out grouped by qid in ascending rank order.
  std::vector<formats::RerankEntry> build_rerank(const std::string& id,
                                                 const formats::RunFile& run, std::int64_t depth,
                                                 bool lenient = false,
                                                 Diagnostics* diag = nullptr) const;

  /// Digest over the content visible to sandboxed software (documents and
  /// topics; qrels excluded so judging later does not invalidate caches).
  std::string input_digest(const std::string& id) const;
  /// Digest over all stored dataset files.
  std::string dataset_digest(const std::string& id) const;

  static std::string resolve_default_text(const formats::Json& raw, const DefaultTextRule& rule,
                                          Diagnostics* diag = nullptr);

  const std::filesystem::path& root() const { return root_; }

  /// Registers a dataset directory produced elsewhere (archive import).
  void adopt(const std::string& id);

 private:
  std::filesystem::path dataset_dir(const std::string& id) const;
  std::filesystem::path grants_file() const;
  formats::Json load_grants() const;
  DatasetMeta read_meta(const std::string& id) const;

  std::filesystem::path root_;
  mutable std::mutex mutex_;
  mutable std::map<std::string, DatasetMeta> cache_;
};

}  // namespace irbed::hub
