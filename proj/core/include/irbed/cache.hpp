#pragma once

// Content-addressed output cache. A key digests everything that determines
// a node's input (component version, image digest, command, input data
// digest, predecessor output digests); the entry binds the key to a sealed,
// immutable output directory plus provenance. Per-key locks give
// at-most-once execution: a second requester for an in-flight key blocks
// until the first seals or abandons.

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "irbed/formats.hpp"

namespace irbed::cache {

struct CacheKey {
  std::string digest;  // hex SHA-256

  bool operator==(const CacheKey&) const = default;
  auto operator<=>(const CacheKey&) const = default;
};

struct CacheEntry {
  CacheKey key;
  std::string output_digest;
  std::filesystem::path output_path;
  formats::Json provenance;
};

class CacheStore {
 public:
  explicit CacheStore(std::filesystem::path root);

  std::optional<CacheEntry> lookup(const CacheKey& key) const;

  /// All sealed entries, for referential-integrity checks and export.
  std::vector<CacheEntry> entries() const;

  /// Write handle for one key. Fill `output_dir()`, then `seal`. If the
  /// entry appeared while waiting for the lock, `existing()` is set and
  /// the slot must not be filled.
  class Slot {
   public:
    ~Slot();
    Slot(Slot&&) noexcept;
    Slot& operator=(Slot&&) = delete;

    const std::optional<CacheEntry>& existing() const { return existing_; }
    const std::filesystem::path& output_dir() const { return staging_; }
    std::filesystem::path logs_dir() const;

    /// Digests and freezes the output tree, writes provenance, publishes.
    CacheEntry seal(formats::Json provenance);
    /// Drops staged output; logs are kept for debugging.
    void abandon();

   private:
    friend class CacheStore;
    Slot(CacheStore& store, CacheKey key);

    CacheStore* store_;
    CacheKey key_;
    std::filesystem::path staging_;
    std::optional<CacheEntry> existing_;
    std::unique_ptr<class KeyLock> lock_;
    bool done_ = false;
  };

  Slot acquire(const CacheKey& key);

  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path entry_dir(const CacheKey& key) const;

  void write_logs(const CacheKey& key, std::string_view stdout_text,
                  std::string_view stderr_text) const;

 private:
  friend class Slot;

  std::filesystem::path root_;
};

}  // namespace irbed::cache
