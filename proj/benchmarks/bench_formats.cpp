#include <benchmark/benchmark.h>

#include <random>

#include "irbed/formats.hpp"
#include "irbed/io.hpp"

using namespace irbed;

namespace {

formats::RunFile synthetic_run(int topics, int depth) {
  formats::RunFile run;
  run.tag = "bench";
  for (int t = 0; t < topics; ++t) {
    std::string qid = "q" + std::to_string(t);
    for (int r = 1; r <= depth; ++r) {
      run.lines.push_back(formats::make_run_line(qid, "doc" + std::to_string(r), r,
                                                 1000.0 - r, "bench"));
    }
  }
  return run;
}

std::string synthetic_documents_jsonl(int count) {
  std::mt19937_64 rng(1);
  std::vector<formats::DocumentRecord> docs;
  for (int i = 0; i < count; ++i) {
    formats::DocumentRecord doc;
    doc.docno = "d" + std::to_string(i);
    doc.text = "token";
    for (int w = 0; w < 40; ++w) doc.text += " word" + std::to_string(rng() % 5000);
    doc.original_document = {{"source", "bench"}, {"seq", i}};
    docs.push_back(std::move(doc));
  }
  return formats::serialize_documents(docs, false);
}

}  // namespace

static void BM_ParseRun(benchmark::State& state) {
  std::string text = formats::serialize_run(synthetic_run(50, static_cast<int>(state.range(0))));
  for (auto _ : state) {
    benchmark::DoNotOptimize(formats::parse_run(text));
  }
  state.SetBytesProcessed(static_cast<int64_t>(state.iterations() * text.size()));
}
BENCHMARK(BM_ParseRun)->Arg(100)->Arg(1000);

static void BM_SerializeRun(benchmark::State& state) {
  auto run = synthetic_run(50, static_cast<int>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(formats::serialize_run(run));
  }
}
BENCHMARK(BM_SerializeRun)->Arg(100)->Arg(1000);

static void BM_ParseDocuments(benchmark::State& state) {
  std::string text = synthetic_documents_jsonl(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(formats::parse_documents(text, false));
  }
  state.SetBytesProcessed(static_cast<int64_t>(state.iterations() * text.size()));
}
BENCHMARK(BM_ParseDocuments)->Arg(1000)->Arg(10000);

static void BM_GzipRoundTrip(benchmark::State& state) {
  std::string text = synthetic_documents_jsonl(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(gzip_decompress(gzip_compress(text)));
  }
  state.SetBytesProcessed(static_cast<int64_t>(state.iterations() * text.size()));
}
BENCHMARK(BM_GzipRoundTrip)->Arg(1000);
