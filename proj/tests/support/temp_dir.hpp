#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "irbed/io.hpp"

namespace irbed::test {

// Scratch directory removed on scope exit. Sealed cache outputs are made
// read-only, so permissions are restored before deletion.
class TempDir {
 public:
  explicit TempDir(const std::string& prefix = "irbed-test") {
    static std::mt19937_64 rng{std::random_device{}()};
    path_ = std::filesystem::temp_directory_path() /
            (prefix + "-" + std::to_string(rng()));
    std::filesystem::create_directories(path_);
  }

  ~TempDir() {
    std::error_code ec;
    make_tree_writable(path_);
    std::filesystem::remove_all(path_, ec);
  }

  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace irbed::test
