#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace irbed::test {

namespace {

double oracle_gain(int relevance) {
  return relevance > 0 ? std::pow(2.0, relevance) - 1.0 : 0.0;
}

double dcg_of(const std::vector<std::string>& ordering,
              const std::map<std::string, int>& judgments, int k) {
  double dcg = 0.0;
  for (std::size_t i = 0; i < ordering.size() && i < static_cast<std::size_t>(k); ++i) {
    auto it = judgments.find(ordering[i]);
    int rel = it == judgments.end() ? 0 : it->second;
    dcg += oracle_gain(rel) / std::log2(static_cast<double>(i) + 2.0);
  }
  return dcg;
}

}  // namespace

double oracle_ndcg_permutation(const std::vector<std::string>& ranking,
                               const std::map<std::string, int>& judgments, int k) {
  double dcg = dcg_of(ranking, judgments, k);
  std::vector<std::string> judged;
  for (const auto& [docno, rel] : judgments) judged.push_back(docno);
  std::sort(judged.begin(), judged.end());
  double best = 0.0;
  do {
    best = std::max(best, dcg_of(judged, judgments, k));
  } while (std::next_permutation(judged.begin(), judged.end()));
  if (best <= 0.0) return 0.0;
  return dcg / best;
}

double oracle_ndcg_sorted(const std::vector<std::string>& ranking,
                          const std::map<std::string, int>& judgments, int k) {
  double dcg = dcg_of(ranking, judgments, k);
  std::vector<int> grades;
  for (const auto& [docno, rel] : judgments) grades.push_back(rel);
  std::sort(grades.begin(), grades.end(), std::greater<>());
  double idcg = 0.0;
  for (std::size_t i = 0; i < grades.size() && i < static_cast<std::size_t>(k); ++i) {
    idcg += oracle_gain(grades[i]) / std::log2(static_cast<double>(i) + 2.0);
  }
  if (idcg <= 0.0) return 0.0;
  return dcg / idcg;
}

double oracle_quantile(std::vector<double> values, double p) {
  std::sort(values.begin(), values.end());
  double position = p * static_cast<double>(values.size() - 1);
  std::size_t below = static_cast<std::size_t>(position);
  std::size_t above = below + 1 >= values.size() ? values.size() - 1 : below + 1;
  double weight = position - static_cast<double>(below);
  return (1.0 - weight) * values[below] + weight * values[above];
}

std::vector<OracleRunLine> oracle_read_run(const std::string& text) {
  std::vector<OracleRunLine> lines;
  std::istringstream in(text);
  std::string qid, iteration, docno, rank, score, tag;
  while (in >> qid >> iteration >> docno >> rank >> score >> tag) {
    lines.push_back({qid, docno, std::stod(score)});
  }
  return lines;
}

std::map<std::string, double> oracle_evaluate_run(const std::string& run_text,
                                                  const std::string& qrels_text, int k) {
  std::map<std::string, std::map<std::string, int>> judgments;
  {
    std::istringstream in(qrels_text);
    std::string topic, iteration, docno;
    int relevance;
    while (in >> topic >> iteration >> docno >> relevance) {
      judgments[topic][docno] = relevance;
    }
  }
  std::map<std::string, std::vector<OracleRunLine>> by_qid;
  for (const auto& line : oracle_read_run(run_text)) by_qid[line.qid].push_back(line);

  std::map<std::string, double> out;
  for (const auto& [topic, topic_judgments] : judgments) {
    std::vector<std::string> ranking;
    auto it = by_qid.find(topic);
    if (it != by_qid.end()) {
      auto lines = it->second;
      std::stable_sort(lines.begin(), lines.end(),
                       [](const OracleRunLine& a, const OracleRunLine& b) {
                         if (a.score != b.score) return a.score > b.score;
                         return a.docno < b.docno;
                       });
      for (const auto& line : lines) ranking.push_back(line.docno);
    }
    out[topic] = oracle_ndcg_sorted(ranking, topic_judgments, k);
  }
  return out;
}

}  // namespace irbed::test
