#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace irbed {

std::string read_file(const std::filesystem::path& file);

/// Writes via a temp file in the same directory and renames into place.
void write_file(const std::filesystem::path& file, std::string_view bytes);

/// Appends one line to a log file under an exclusive advisory lock, so
/// concurrent processes interleave whole records only.
void append_line_locked(const std::filesystem::path& file, std::string_view line);

bool is_gzip(std::string_view bytes);

/// Deterministic gzip: fixed level, zero mtime, so equal input gives equal bytes.
std::string gzip_compress(std::string_view bytes);
std::string gzip_decompress(std::string_view bytes);

/// Recursive copy of a directory tree (regular files and directories only).
void copy_tree(const std::filesystem::path& from, const std::filesystem::path& to);

/// Strips write permission from every file and directory under `dir`.
void make_tree_read_only(const std::filesystem::path& dir);
void make_tree_writable(const std::filesystem::path& dir);

std::string utc_timestamp_iso8601();

/// Process-wide advisory file lock (flock). Blocks until acquired.
class FileLock {
 public:
  explicit FileLock(const std::filesystem::path& lock_file);
  ~FileLock();
  FileLock(const FileLock&) = delete;
  FileLock& operator=(const FileLock&) = delete;

 private:
  int fd_;
};

}  // namespace irbed
