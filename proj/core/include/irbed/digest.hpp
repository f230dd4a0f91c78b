#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace irbed {

/// Hex-encoded SHA-256 of a byte buffer.
std::string sha256_hex(std::string_view bytes);

/// SHA-256 of a file's content, streamed.
std::string sha256_file(const std::filesystem::path& file);

/// Digest of a directory tree: regular files in sorted relative-path order,
/// each contributing its path and content hash. Empty directories are ignored.
/// The result changes iff any file path or any file's bytes change.
std::string tree_digest(const std::filesystem::path& dir);

/// Incremental SHA-256, for hashing composite keys without concatenating.
class Sha256 {
 public:
  Sha256();
  ~Sha256();
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  void update(std::string_view bytes);
  /// Appends a length-prefixed field so adjacent fields cannot collide.
  void field(std::string_view bytes);
  std::string hex();  // finalizes; the object must not be reused

 private:
  void* ctx_;
};

}  // namespace irbed
