#include <benchmark/benchmark.h>

#include <filesystem>
#include <random>

#include "irbed/digest.hpp"
#include "irbed/io.hpp"

using namespace irbed;

static void BM_Sha256(benchmark::State& state) {
  std::string bytes(static_cast<std::size_t>(state.range(0)), 'x');
  for (auto _ : state) {
    benchmark::DoNotOptimize(sha256_hex(bytes));
  }
  state.SetBytesProcessed(static_cast<int64_t>(state.iterations() * bytes.size()));
}
BENCHMARK(BM_Sha256)->Arg(1 << 10)->Arg(1 << 20);

static void BM_TreeDigest(benchmark::State& state) {
  namespace fs = std::filesystem;
  fs::path root = fs::temp_directory_path() / "irbed-bench-tree";
  fs::remove_all(root);
  std::mt19937_64 rng(3);
  for (int f = 0; f < static_cast<int>(state.range(0)); ++f) {
    std::string content(1024, static_cast<char>('a' + rng() % 26));
    write_file(root / ("sub" + std::to_string(f % 8)) / ("file" + std::to_string(f)), content);
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(tree_digest(root));
  }
  fs::remove_all(root);
}
BENCHMARK(BM_TreeDigest)->Arg(64)->Arg(512);
