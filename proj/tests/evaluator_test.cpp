#include <doctest.h>

#include <cmath>
#include <random>

#include "irbed/evaluator.hpp"
#include "support/oracles.hpp"

using namespace irbed;
using namespace irbed::eval;
using formats::Qrel;
using formats::RunFile;
using formats::TopicRecord;
using formats::make_run_line;

namespace {

std::vector<Qrel> make_qrels(const std::string& topic,
                             const std::vector<std::pair<std::string, int>>& judgments) {
  std::vector<Qrel> out;
  for (const auto& [docno, relevance] : judgments) {
    out.push_back({topic, "Q0", docno, relevance});
  }
  return out;
}

std::vector<TopicRecord> make_topics(const std::vector<std::string>& qids) {
  std::vector<TopicRecord> out;
  for (const auto& qid : qids) {
    TopicRecord topic;
    topic.qid = qid;
    topic.query = "query " + qid;
    out.push_back(std::move(topic));
  }
  return out;
}

RunFile make_run(const std::vector<std::tuple<std::string, std::string, double>>& rows,
                 const std::string& tag = "sys") {
  RunFile run;
  run.tag = tag;
  std::map<std::string, std::int64_t> next_rank;
  for (const auto& [qid, docno, score] : rows) {
    run.lines.push_back(make_run_line(qid, docno, ++next_rank[qid], score, tag));
  }
  return run;
}

}  // namespace

TEST_CASE("ndcg: ideal ordering scores exactly 1") {
  auto qrels = make_qrels("q", {{"d1", 2}, {"d2", 1}, {"d3", 0}});
  std::vector<std::string> ideal{"d1", "d2", "d3"};
  CHECK(ndcg_at_k(ideal, qrels, 10) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("ndcg: all retrieved non-relevant scores 0") {
  auto qrels = make_qrels("q", {{"d1", 2}});
  std::vector<std::string> ranking{"x1", "x2", "x3"};
  CHECK(ndcg_at_k(ranking, qrels, 10) == 0.0);
}

TEST_CASE("ndcg: hand-computed worked example") {
  // qrels {d1:2, d2:1, d3:0}, ranking [d3, d1, d2]:
  //   DCG  = 0 + 3/log2(3) + 1/log2(4)
  //   IDCG = 3/log2(2) + 1/log2(3)
  auto qrels = make_qrels("q", {{"d1", 2}, {"d2", 1}, {"d3", 0}});
  std::vector<std::string> ranking{"d3", "d1", "d2"};
  double expected = (3.0 / std::log2(3.0) + 1.0 / std::log2(4.0)) /
                    (3.0 / std::log2(2.0) + 1.0 / std::log2(3.0));
  double actual = ndcg_at_k(ranking, qrels, 10);
  CHECK(actual == doctest::Approx(expected).epsilon(1e-12));
  CHECK(actual == doctest::Approx(0.659).epsilon(1e-3));
  // and the independent permutation oracle agrees
  std::map<std::string, int> judgments{{"d1", 2}, {"d2", 1}, {"d3", 0}};
  CHECK(actual ==
        doctest::Approx(test::oracle_ndcg_permutation(ranking, judgments, 10)).epsilon(1e-12));
}

TEST_CASE("ndcg: no positive judgment means 0, not NaN") {
  auto qrels = make_qrels("q", {{"d1", 0}, {"d2", 0}});
  std::vector<std::string> ranking{"d1", "d2"};
  CHECK(ndcg_at_k(ranking, qrels, 10) == 0.0);
}

TEST_CASE("ndcg: negative grades count as non-relevant so values stay in [0,1]") {
  auto qrels = make_qrels("q", {{"d1", -2}, {"d2", 2}});
  std::vector<std::string> ranking{"d1", "d2"};
  double value = ndcg_at_k(ranking, qrels, 10);
  CHECK(value >= 0.0);
  CHECK(value <= 1.0);
}

TEST_CASE("ndcg: truncation depends only on the top k") {
  auto qrels = make_qrels("q", {{"d1", 2}, {"d2", 1}});
  std::vector<std::string> a{"d1", "x1", "x2"};
  std::vector<std::string> b{"d1", "y1", "y2", "y3", "y4"};
  CHECK(ndcg_at_k(a, qrels, 1) == ndcg_at_k(b, qrels, 1));
}

TEST_CASE("ndcg: randomized agreement with the exhaustive oracle") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 500; ++trial) {
    int n_docs = 1 + static_cast<int>(rng() % 6);
    std::map<std::string, int> judgments;
    std::vector<Qrel> qrels;
    std::vector<std::string> pool;
    for (int d = 0; d < n_docs; ++d) {
      std::string docno = "d" + std::to_string(d);
      int rel = static_cast<int>(rng() % 3);
      judgments[docno] = rel;
      qrels.push_back({"q", "Q0", docno, rel});
      pool.push_back(docno);
    }
    std::shuffle(pool.begin(), pool.end(), rng);
    // rank a random subset, sometimes with unjudged extras
    std::vector<std::string> ranking(pool.begin(),
                                     pool.begin() + 1 + static_cast<long>(rng() % pool.size()));
    if (rng() % 3 == 0) ranking.insert(ranking.begin() + static_cast<long>(rng() % ranking.size()),
                                       "unjudged");
    int k = 1 + static_cast<int>(rng() % 8);
    double actual = ndcg_at_k(ranking, qrels, k);
    double expected = test::oracle_ndcg_permutation(ranking, judgments, k);
    REQUIRE(actual == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("ndcg: swapping a relevant document upward never hurts") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    int n = 4 + static_cast<int>(rng() % 3);
    std::vector<Qrel> qrels;
    std::vector<std::string> ranking;
    for (int d = 0; d < n; ++d) {
      std::string docno = "d" + std::to_string(d);
      qrels.push_back({"q", "Q0", docno, static_cast<int>(rng() % 3)});
      ranking.push_back(docno);
    }
    std::shuffle(ranking.begin(), ranking.end(), rng);
    double before = ndcg_at_k(ranking, qrels, n);
    // find an adjacent pair where the lower-ranked doc is more relevant
    auto rel_of = [&](const std::string& docno) {
      for (const auto& qrel : qrels) {
        if (qrel.docno == docno) return qrel.relevance;
      }
      return 0;
    };
    for (std::size_t i = 0; i + 1 < ranking.size(); ++i) {
      if (rel_of(ranking[i + 1]) > rel_of(ranking[i])) {
        std::swap(ranking[i], ranking[i + 1]);
        double after = ndcg_at_k(ranking, qrels, n);
        REQUIRE(after >= before - 1e-12);
        break;
      }
    }
  }
}

TEST_CASE("sanity: each finding code fires on its fixture and only then") {
  auto topics = make_topics({"q1", "q2"});

  SUBCASE("clean run is silent") {
    auto run = make_run({{"q1", "d1", 5.0}, {"q1", "d2", 4.0}, {"q2", "d1", 3.0}});
    auto report = sanity_check(run, topics);
    CHECK(report.findings.empty());
  }
  SUBCASE("score ties") {
    auto run = make_run({{"q1", "d1", 5.0}, {"q1", "d2", 5.0}, {"q2", "d1", 3.0}});
    auto report = sanity_check(run, topics);
    CHECK(report.has(FindingCode::score_ties));
    CHECK_FALSE(report.has_errors());  // ties warn, they do not block
  }
  SUBCASE("NaN scores are error severity") {
    auto run = make_run({{"q1", "d1", std::nan("")}, {"q2", "d1", 3.0}});
    auto report = sanity_check(run, topics);
    CHECK(report.has(FindingCode::nan_score));
    CHECK(report.has_errors());
  }
  SUBCASE("empty result set") {
    auto run = make_run({{"q1", "d1", 5.0}});
    auto report = sanity_check(run, topics);
    CHECK(report.has(FindingCode::empty_result_set));  // q2 has no lines
  }
  SUBCASE("unknown query") {
    auto run = make_run({{"q1", "d1", 5.0}, {"q2", "d1", 4.0}, {"q99", "d1", 2.0}});
    auto report = sanity_check(run, topics);
    CHECK(report.has(FindingCode::unknown_query));
    for (const auto& finding : report.findings) {
      if (finding.code == FindingCode::unknown_query) CHECK(finding.qid == "q99");
    }
  }
  SUBCASE("rank/score contradiction") {
    RunFile run;
    run.tag = "sys";
    run.lines.push_back(make_run_line("q1", "d1", 1, 2.0, "sys"));
    run.lines.push_back(make_run_line("q1", "d2", 2, 9.0, "sys"));  // score rises with rank
    run.lines.push_back(make_run_line("q2", "d1", 1, 1.0, "sys"));
    auto report = sanity_check(run, topics);
    CHECK(report.has(FindingCode::rank_score_contradiction));
  }
  SUBCASE("parse failures become findings on the text path") {
    auto report = sanity_check_text("not a run file", topics);
    CHECK(report.has(FindingCode::parse_fail));
    CHECK(report.has_errors());
  }
}

TEST_CASE("evaluate: single ideal topic, means, and missing topics") {
  auto topics = make_topics({"q1", "q2"});
  std::vector<Qrel> qrels;
  for (const auto& qrel : make_qrels("q1", {{"d1", 2}, {"d2", 1}})) qrels.push_back(qrel);
  for (const auto& qrel : make_qrels("q2", {{"d3", 1}})) qrels.push_back(qrel);

  SUBCASE("ideal single topic gives per_query 1.0") {
    auto run = make_run({{"q1", "d1", 9.0}, {"q1", "d2", 8.0}, {"q2", "d3", 5.0}});
    auto outcome = evaluate(run, qrels, std::vector<std::string>{"ndcg@10"}, topics);
    REQUIRE(outcome.reports.size() == 1);
    const auto& report = outcome.reports[0];
    CHECK(report.per_query.at("q1") == doctest::Approx(1.0));
    CHECK(report.per_query.at("q2") == doctest::Approx(1.0));
    CHECK(report.mean == doctest::Approx(1.0));
    CHECK(report.evaluated_query_count == 2);
  }
  SUBCASE("two topics with values 1 and 0 average to 0.5") {
    auto run = make_run({{"q1", "d1", 9.0}, {"q1", "d2", 8.0}, {"q2", "x", 5.0}});
    auto outcome = evaluate(run, qrels, std::vector<std::string>{"ndcg@10"}, topics);
    CHECK(outcome.reports[0].mean == doctest::Approx(0.5));
  }
  SUBCASE("a judged topic missing from the run scores 0 and is flagged") {
    auto run = make_run({{"q1", "d1", 9.0}, {"q1", "d2", 8.0}});
    auto outcome = evaluate(run, qrels, std::vector<std::string>{"ndcg@10"}, topics);
    CHECK(outcome.reports[0].per_query.at("q2") == 0.0);
    CHECK(outcome.reports[0].mean == doctest::Approx(0.5));
    CHECK(outcome.sanity.has(FindingCode::empty_result_set));
  }
  SUBCASE("error findings refuse evaluation, embedding the report") {
    auto run = make_run({{"q1", "d1", std::nan("")}});
    try {
      evaluate(run, qrels, std::vector<std::string>{"ndcg@10"}, topics);
      FAIL("expected refusal");
    } catch (const EvaluationRefused& refused) {
      CHECK(refused.report().has(FindingCode::nan_score));
    }
  }
  SUBCASE("run qids without judgments are noted, not failed") {
    auto run = make_run({{"q1", "d1", 9.0}, {"q1", "d2", 8.0}, {"q2", "d3", 5.0},
                         {"q3", "d1", 1.0}});
    auto outcome = evaluate(run, qrels, std::vector<std::string>{"ndcg@10"},
                            make_topics({"q1", "q2", "q3"}));
    REQUIRE(outcome.notes.size() == 1);
    CHECK(outcome.notes[0].find("q3") != std::string::npos);
    // q3 does not contribute to the mean
    CHECK(outcome.reports[0].evaluated_query_count == 2);
  }
}

TEST_CASE("evaluate: ranking order is score desc with docno tie-break, not the rank column") {
  std::vector<Qrel> qrels = make_qrels("q1", {{"good", 2}, {"bad", 0}});
  RunFile run;
  run.tag = "sys";
  // rank column claims `bad` first, but scores say `good` first
  run.lines.push_back(make_run_line("q1", "bad", 1, 1.0, "sys"));
  run.lines.push_back(make_run_line("q1", "good", 2, 9.0, "sys"));
  auto outcome = evaluate(run, qrels, std::vector<std::string>{"ndcg@10"});
  CHECK(outcome.reports[0].per_query.at("q1") == doctest::Approx(1.0));
  CHECK(outcome.sanity.has(FindingCode::rank_score_contradiction));
}

TEST_CASE("measure identifiers parse strictly") {
  CHECK(parse_measure("ndcg@10").k == 10);
  CHECK(parse_measure("nDCG@5").id == "ndcg@5");
  CHECK_THROWS_AS(parse_measure("map"), Error);
  CHECK_THROWS_AS(parse_measure("ndcg"), Error);
  CHECK_THROWS_AS(parse_measure("ndcg@0"), Error);
  CHECK_THROWS_AS(parse_measure("ndcg@x"), Error);
}

TEST_CASE("evaluation and sanity reports serialize with deterministic key order") {
  auto topics = make_topics({"q1"});
  auto qrels = make_qrels("q1", {{"d1", 1}});
  auto run = make_run({{"q1", "d1", 2.0}});
  auto outcome = evaluate(run, qrels, std::vector<std::string>{"ndcg@10"}, topics);
  std::string once = evaluation_json(outcome.reports).dump();
  std::string twice = evaluation_json(outcome.reports).dump();
  CHECK(once == twice);
  CHECK(once.find("ndcg@10") != std::string::npos);
  CHECK(sanity_json(outcome.sanity)["findings"].is_array());
}
