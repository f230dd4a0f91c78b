#include "irbed/cache.hpp"

#include <unistd.h>

#include <algorithm>

#include "irbed/digest.hpp"
#include "irbed/io.hpp"

namespace irbed::cache {

namespace fs = std::filesystem;
using formats::Json;

// Combines an in-process mutex (threads of this process) with a flock on
// the entry directory (other processes sharing the store).
class KeyLock {
 public:
  KeyLock(const fs::path& entry_dir, const std::string& digest) {
    {
      static std::mutex registry_mutex;
      static std::map<std::string, std::shared_ptr<std::mutex>> registry;
      std::lock_guard<std::mutex> guard(registry_mutex);
      auto& slot = registry[digest];
      if (!slot) slot = std::make_shared<std::mutex>();
      mutex_ = slot;
    }
    mutex_->lock();
    file_lock_ = std::make_unique<FileLock>(entry_dir / ".lock");
  }

  ~KeyLock() {
    file_lock_.reset();
    mutex_->unlock();
  }

 private:
  std::shared_ptr<std::mutex> mutex_;
  std::unique_ptr<FileLock> file_lock_;
};

CacheStore::CacheStore(fs::path root) : root_(std::move(root)) {
  fs::create_directories(root_);
}

fs::path CacheStore::entry_dir(const CacheKey& key) const { return root_ / key.digest; }

std::optional<CacheEntry> CacheStore::lookup(const CacheKey& key) const {
  fs::path dir = entry_dir(key);
  if (!fs::exists(dir / "provenance.json") || !fs::exists(dir / "output")) return std::nullopt;
  CacheEntry entry;
  entry.key = key;
  entry.provenance = Json::parse(read_file(dir / "provenance.json"));
  entry.output_digest = entry.provenance.at("output_digest").get<std::string>();
  entry.output_path = dir / "output";
  return entry;
}

std::vector<CacheEntry> CacheStore::entries() const {
  std::vector<CacheEntry> out;
  if (!fs::exists(root_)) return out;
  for (const auto& dir : fs::directory_iterator(root_)) {
    if (!dir.is_directory()) continue;
    auto entry = lookup(CacheKey{dir.path().filename().string()});
    if (entry) out.push_back(std::move(*entry));
  }
  std::sort(out.begin(), out.end(),
            [](const CacheEntry& a, const CacheEntry& b) { return a.key < b.key; });
  return out;
}

void CacheStore::write_logs(const CacheKey& key, std::string_view stdout_text,
                            std::string_view stderr_text) const {
  fs::path logs = entry_dir(key) / "logs";
  write_file(logs / "stdout", stdout_text);
  write_file(logs / "stderr", stderr_text);
}

CacheStore::Slot::Slot(CacheStore& store, CacheKey key) : store_(&store), key_(std::move(key)) {
  fs::path dir = store_->entry_dir(key_);
  fs::create_directories(dir);
  lock_ = std::make_unique<KeyLock>(dir, key_.digest);
  // the race with a concurrent producer resolves here, under the lock
  existing_ = store_->lookup(key_);
  if (existing_) {
    done_ = true;
    return;
  }
  staging_ = dir / (".staging-" + std::to_string(::getpid()));
  fs::remove_all(staging_);
  fs::create_directories(staging_);
}

CacheStore::Slot::Slot(Slot&& other) noexcept
    : store_(other.store_),
      key_(std::move(other.key_)),
      staging_(std::move(other.staging_)),
      existing_(std::move(other.existing_)),
      lock_(std::move(other.lock_)),
      done_(other.done_) {
  other.done_ = true;
}

fs::path CacheStore::Slot::logs_dir() const { return store_->entry_dir(key_) / "logs"; }

CacheEntry CacheStore::Slot::seal(Json provenance) {
  if (done_) throw Error(ErrorKind::execution, "cache slot already resolved");
  fs::path dir = store_->entry_dir(key_);
  std::string output_digest = tree_digest(staging_);
  provenance["output_digest"] = output_digest;

  fs::rename(staging_, dir / "output");
  write_file(dir / "provenance.json", provenance.dump(2) + "\n");
  make_tree_read_only(dir / "output");
  done_ = true;

  CacheEntry entry;
  entry.key = key_;
  entry.output_digest = output_digest;
  entry.output_path = dir / "output";
  entry.provenance = std::move(provenance);
  return entry;
}

void CacheStore::Slot::abandon() {
  if (done_) return;
  std::error_code ec;
  fs::remove_all(staging_, ec);
  done_ = true;
}

CacheStore::Slot::~Slot() {
  if (!done_) abandon();
}

CacheStore::Slot CacheStore::acquire(const CacheKey& key) { return Slot(*this, key); }

}  // namespace irbed::cache
