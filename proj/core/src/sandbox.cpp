#include "irbed/sandbox.hpp"

#include <algorithm>
#include <future>
#include <thread>
#include <utility>

#include "irbed/digest.hpp"
#include "irbed/io.hpp"

namespace irbed::sandbox {

namespace fs = std::filesystem;

SandboxContext::SandboxContext(const SandboxSpec& spec, std::atomic<bool>& cancelled)
    : spec_(spec), cancelled_(cancelled) {}

void SandboxContext::violation(const std::string& what) {
  violations_.push_back(what);
  throw Error(ErrorKind::sandbox, what);
}

fs::path SandboxContext::resolve(const std::string& container_path, bool for_write) {
  fs::path normalized = fs::path(container_path).lexically_normal();
  std::string as_string = normalized.generic_string();
  const Mount* best = nullptr;
  std::size_t best_len = 0;
  for (const auto& mount : spec_.mounts) {
    std::string prefix = fs::path(mount.container).lexically_normal().generic_string();
    bool matches = as_string == prefix ||
                   (as_string.size() > prefix.size() && as_string.compare(0, prefix.size(), prefix) == 0 &&
                    as_string[prefix.size()] == '/');
    if (matches && prefix.size() >= best_len) {
      best = &mount;
      best_len = prefix.size();
    }
  }
  if (best == nullptr) {
    violation((for_write ? "write" : "read") + std::string(" outside mounts: ") + as_string);
  }
  if (for_write && !best->writable) {
    violation("write to read-only mount: " + as_string);
  }
  std::string prefix = fs::path(best->container).lexically_normal().generic_string();
  std::string rel = as_string.substr(std::min(as_string.size(), prefix.size()));
  while (!rel.empty() && rel.front() == '/') rel.erase(rel.begin());
  return rel.empty() ? best->host : best->host / fs::path(rel);
}

std::string SandboxContext::read_file(const std::string& container_path) {
  return irbed::read_file(resolve(container_path, /*for_write=*/false));
}

void SandboxContext::write_file(const std::string& container_path, std::string_view bytes) {
  irbed::write_file(resolve(container_path, /*for_write=*/true), bytes);
}

bool SandboxContext::exists(const std::string& container_path) {
  return fs::exists(resolve(container_path, /*for_write=*/false));
}

std::vector<std::string> SandboxContext::list_dir(const std::string& container_path) {
  std::vector<std::string> names;
  // a directory that only exists as the parent of mount points (the way
  // /mnt/run holds the ordinal predecessor mounts) lists its mounts
  std::string prefix = fs::path(container_path).lexically_normal().generic_string();
  bool implicit_parent = false;
  for (const auto& mount : spec_.mounts) {
    std::string mounted = fs::path(mount.container).lexically_normal().generic_string();
    if (mounted.size() > prefix.size() && mounted.compare(0, prefix.size(), prefix) == 0 &&
        mounted[prefix.size()] == '/') {
      std::string child = mounted.substr(prefix.size() + 1);
      names.push_back(child.substr(0, child.find('/')));
      implicit_parent = true;
    }
  }
  if (!implicit_parent) {
    fs::path host = resolve(container_path, /*for_write=*/false);
    if (fs::is_directory(host)) {
      for (const auto& entry : fs::directory_iterator(host)) {
        names.push_back(entry.path().filename().string());
      }
    }
  }
  std::sort(names.begin(), names.end());
  names.erase(std::unique(names.begin(), names.end()), names.end());
  return names;
}

void SandboxContext::connect(const std::string& host, int port) {
  violation("outbound connection attempt to " + host + ":" + std::to_string(port) +
            " (network is disabled in the sandbox)");
}

std::vector<std::string> split_command(const std::string& command) {
  std::vector<std::string> tokens;
  std::string current;
  for (char c : command) {
    if (c == ' ' || c == '\t') {
      if (!current.empty()) tokens.push_back(std::exchange(current, {}));
    } else {
      current.push_back(c);
    }
  }
  if (!current.empty()) tokens.push_back(current);
  return tokens;
}

MockBackend::MockBackend() { register_builtin_fixtures(*this); }

void MockBackend::register_fixture(const std::string& image_name, Fixture fixture) {
  fixtures_[image_name] = std::move(fixture);
}

bool MockBackend::has_fixture(const std::string& image_name) const {
  return fixtures_.count(image_name) > 0;
}

std::string MockBackend::image_digest(const std::string& image_ref) {
  // strip a tag if present; the fixture name is the repository part
  std::string name = image_ref.substr(0, image_ref.find(':'));
  if (!has_fixture(name)) {
    throw Error(ErrorKind::not_found, "image unavailable in mock backend: '" + image_ref + "'");
  }
  return sha256_hex("mock-image:" + image_ref);
}

RunOutcome MockBackend::run(const SandboxSpec& spec) {
  std::string name = spec.image_ref.substr(0, spec.image_ref.find(':'));
  auto it = fixtures_.find(name);
  if (it == fixtures_.end()) {
    throw Error(ErrorKind::not_found, "image unavailable in mock backend: '" + spec.image_ref + "'");
  }
  launches_.fetch_add(1);

  std::atomic<bool> cancelled{false};
  SandboxContext context(spec, cancelled);
  auto args = split_command(spec.command);

  RunOutcome outcome;
  auto start = std::chrono::steady_clock::now();

  // fixtures are cooperative: on timeout the cancel flag flips and the
  // fixture winds down, so the worker thread can always be joined
  std::packaged_task<int()> task([&] {
    try {
      return it->second(context, args);
    } catch (const Error& e) {
      context.err << e.what() << "\n";
      return e.kind() == ErrorKind::sandbox ? 13 : 1;
    } catch (const std::exception& e) {
      context.err << e.what() << "\n";
      return 1;
    }
  });
  auto future = task.get_future();
  std::thread worker(std::move(task));
  if (future.wait_for(spec.limits.timeout) == std::future_status::timeout) {
    cancelled.store(true);
    outcome.timed_out = true;
  }
  worker.join();
  outcome.exit_code = outcome.timed_out ? 124 : future.get();
  outcome.wall = std::chrono::duration_cast<std::chrono::milliseconds>(
      std::chrono::steady_clock::now() - start);
  outcome.stdout_text = context.out.str();
  outcome.stderr_text = context.err.str();
  outcome.violations = context.violations();
  return outcome;
}

}  // namespace irbed::sandbox
