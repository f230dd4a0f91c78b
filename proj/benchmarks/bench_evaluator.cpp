#include <benchmark/benchmark.h>

#include <random>

#include "irbed/evaluator.hpp"

using namespace irbed;

static void BM_NdcgAtK(benchmark::State& state) {
  std::mt19937_64 rng(7);
  int pool = static_cast<int>(state.range(0));
  std::vector<formats::Qrel> qrels;
  std::vector<std::string> ranking;
  for (int d = 0; d < pool; ++d) {
    std::string docno = "d" + std::to_string(d);
    qrels.push_back({"q", "Q0", docno, static_cast<int>(rng() % 4)});
    ranking.push_back(docno);
  }
  std::shuffle(ranking.begin(), ranking.end(), rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(eval::ndcg_at_k(ranking, qrels, 10));
  }
}
BENCHMARK(BM_NdcgAtK)->Arg(100)->Arg(1000);

static void BM_Evaluate50Topics(benchmark::State& state) {
  std::mt19937_64 rng(11);
  formats::RunFile run;
  run.tag = "bench";
  std::vector<formats::Qrel> qrels;
  for (int t = 0; t < 50; ++t) {
    std::string qid = "q" + std::to_string(t);
    for (int d = 0; d < 100; ++d) {
      std::string docno = "d" + std::to_string(d);
      run.lines.push_back(
          formats::make_run_line(qid, docno, d + 1, 1000.0 - d, "bench"));
      if (d % 7 == 0) qrels.push_back({qid, "Q0", docno, static_cast<int>(rng() % 3)});
    }
  }
  std::vector<std::string> measures{"ndcg@10"};
  for (auto _ : state) {
    benchmark::DoNotOptimize(eval::evaluate(run, qrels, measures));
  }
}
BENCHMARK(BM_Evaluate50Topics);

static void BM_SanityCheck(benchmark::State& state) {
  formats::RunFile run;
  run.tag = "bench";
  std::vector<formats::TopicRecord> topics;
  for (int t = 0; t < 50; ++t) {
    std::string qid = "q" + std::to_string(t);
    formats::TopicRecord topic;
    topic.qid = qid;
    topic.query = "query";
    topics.push_back(topic);
    for (int d = 0; d < 100; ++d) {
      run.lines.push_back(
          formats::make_run_line(qid, "d" + std::to_string(d), d + 1, 1000.0 - d, "bench"));
    }
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(eval::sanity_check(run, topics));
  }
}
BENCHMARK(BM_SanityCheck);
