#include "irbed/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_map>
#include <unordered_set>

namespace irbed::eval {

using formats::Json;

std::string_view finding_code_name(FindingCode code) {
  switch (code) {
    case FindingCode::parse_fail: return "PARSE_FAIL";
    case FindingCode::score_ties: return "SCORE_TIES";
    case FindingCode::nan_score: return "NAN_SCORE";
    case FindingCode::empty_result_set: return "EMPTY_RESULT_SET";
    case FindingCode::unknown_query: return "UNKNOWN_QUERY";
    case FindingCode::rank_score_contradiction: return "RANK_SCORE_CONTRADICTION";
  }
  return "?";
}

bool SanityReport::has_errors() const {
  return std::any_of(findings.begin(), findings.end(),
                     [](const Finding& f) { return f.severity == Severity::error; });
}

bool SanityReport::has(FindingCode code) const {
  return std::any_of(findings.begin(), findings.end(),
                     [code](const Finding& f) { return f.code == code; });
}

SanityReport sanity_check(const formats::RunFile& run,
                          std::span<const formats::TopicRecord> topics) {
  SanityReport report;

  std::set<std::string> topic_qids;
  for (const auto& topic : topics) topic_qids.insert(topic.qid);

  // group lines per qid in first-appearance order
  std::vector<std::string> qid_order;
  std::map<std::string, std::vector<const formats::RunLine*>> grouped;
  for (const auto& line : run.lines) {
    if (grouped.find(line.qid) == grouped.end()) qid_order.push_back(line.qid);
    grouped[line.qid].push_back(&line);
  }

  for (const auto& qid : qid_order) {
    const auto& lines = grouped[qid];

    if (!topic_qids.empty() && topic_qids.count(qid) == 0) {
      report.findings.push_back({FindingCode::unknown_query, Severity::warn, qid,
                                 "run contains qid '" + qid + "' which is not among the topics"});
    }

    bool nan_seen = false;
    for (const auto* line : lines) {
      if (std::isnan(line->score)) nan_seen = true;
    }
    if (nan_seen) {
      report.findings.push_back({FindingCode::nan_score, Severity::error, qid,
                                 "NaN score under qid '" + qid + "'"});
    }

    // ties: any two documents sharing an identical score
    std::map<double, int> seen_scores;
    std::set<double> tied_scores;
    for (const auto* line : lines) {
      if (std::isnan(line->score)) continue;
      if (++seen_scores[line->score] == 2) tied_scores.insert(line->score);
    }
    if (!tied_scores.empty()) {
      std::string values;
      for (double value : tied_scores) {
        if (!values.empty()) values += ", ";
        values += formats::format_score(value);
      }
      report.findings.push_back({FindingCode::score_ties, Severity::warn, qid,
                                 "tied scores under qid '" + qid + "': " + values});
    }

    // contradiction: score increases while rank increases
    std::vector<const formats::RunLine*> by_rank(lines.begin(), lines.end());
    std::sort(by_rank.begin(), by_rank.end(),
              [](const formats::RunLine* a, const formats::RunLine* b) {
                return a->rank < b->rank;
              });
    for (std::size_t i = 1; i < by_rank.size(); ++i) {
      if (std::isnan(by_rank[i]->score) || std::isnan(by_rank[i - 1]->score)) continue;
      if (by_rank[i]->score > by_rank[i - 1]->score) {
        report.findings.push_back(
            {FindingCode::rank_score_contradiction, Severity::warn, qid,
             "score rises from rank " + std::to_string(by_rank[i - 1]->rank) + " to rank " +
                 std::to_string(by_rank[i]->rank) + " under qid '" + qid + "'"});
        break;
      }
    }
  }

  for (const auto& topic : topics) {
    if (grouped.find(topic.qid) == grouped.end()) {
      report.findings.push_back({FindingCode::empty_result_set, Severity::warn, topic.qid,
                                 "no results for topic '" + topic.qid + "'"});
    }
  }

  return report;
}

SanityReport sanity_check_text(std::string_view run_text,
                               std::span<const formats::TopicRecord> topics) {
  formats::RunFile run;
  try {
    run = formats::parse_run(run_text);
  } catch (const Error& e) {
    SanityReport report;
    report.findings.push_back(
        {FindingCode::parse_fail, Severity::error, std::nullopt, e.what()});
    return report;
  }
  return sanity_check(run, topics);
}

Measure parse_measure(std::string_view id) {
  auto at = id.find('@');
  std::string_view name = id.substr(0, at);
  if (name != "ndcg" && name != "nDCG") {
    throw Error(ErrorKind::validation, "unknown measure: '" + std::string(id) + "'");
  }
  Measure measure;
  if (at == std::string_view::npos) {
    throw Error(ErrorKind::validation,
                "measure '" + std::string(id) + "' needs a cutoff, e.g. ndcg@10");
  }
  try {
    measure.k = std::stoi(std::string(id.substr(at + 1)));
  } catch (...) {
    throw Error(ErrorKind::validation, "bad measure cutoff in '" + std::string(id) + "'");
  }
  if (measure.k < 1) {
    throw Error(ErrorKind::validation, "measure cutoff must be >= 1");
  }
  measure.id = "ndcg@" + std::to_string(measure.k);
  return measure;
}

namespace {

// burst gain; negative grades are treated as non-relevant
double gain(int relevance) {
  if (relevance <= 0) return 0.0;
  return std::pow(2.0, relevance) - 1.0;
}

double discount(std::size_t rank_one_based) {
  return std::log2(static_cast<double>(rank_one_based) + 1.0);
}

}  // namespace

double ndcg_at_k(std::span<const std::string> ranking, std::span<const formats::Qrel> qrels,
                 int k) {
  if (k < 1) throw Error(ErrorKind::validation, "k must be >= 1");

  std::unordered_map<std::string, int> judgment;
  for (const auto& qrel : qrels) judgment[qrel.docno] = qrel.relevance;

  double dcg = 0.0;
  std::size_t depth = std::min<std::size_t>(ranking.size(), static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < depth; ++i) {
    auto it = judgment.find(ranking[i]);
    if (it == judgment.end()) continue;  // unjudged documents are non-relevant
    dcg += gain(it->second) / discount(i + 1);
  }

  std::vector<int> grades;
  grades.reserve(judgment.size());
  for (const auto& [docno, relevance] : judgment) grades.push_back(relevance);
  std::sort(grades.begin(), grades.end(), std::greater<>());
  double idcg = 0.0;
  for (std::size_t i = 0; i < grades.size() && i < static_cast<std::size_t>(k); ++i) {
    idcg += gain(grades[i]) / discount(i + 1);
  }
  if (idcg <= 0.0) return 0.0;
  return dcg / idcg;
}

EvaluationRefused::EvaluationRefused(SanityReport report)
    : Error(ErrorKind::validation, "run refused by sanity check"), report_(std::move(report)) {}

EvaluationOutcome evaluate(const formats::RunFile& run, std::span<const formats::Qrel> qrels,
                           std::span<const std::string> measures,
                           std::span<const formats::TopicRecord> topics) {
  EvaluationOutcome outcome;
  outcome.sanity = sanity_check(run, topics);
  if (outcome.sanity.has_errors()) throw EvaluationRefused(outcome.sanity);

  // score-sorted evaluation order: score descending, docno ascending
  std::map<std::string, std::vector<const formats::RunLine*>> by_qid;
  for (const auto& line : run.lines) by_qid[line.qid].push_back(&line);
  std::map<std::string, std::vector<std::string>> rankings;
  for (auto& [qid, lines] : by_qid) {
    std::sort(lines.begin(), lines.end(),
              [](const formats::RunLine* a, const formats::RunLine* b) {
                if (a->score != b->score) return a->score > b->score;
                return a->docno < b->docno;
              });
    auto& ranking = rankings[qid];
    ranking.reserve(lines.size());
    for (const auto* line : lines) ranking.push_back(line->docno);
  }

  std::map<std::string, std::vector<formats::Qrel>> qrels_by_topic;
  for (const auto& qrel : qrels) qrels_by_topic[qrel.topic].push_back(qrel);
  if (qrels_by_topic.empty()) {
    throw Error(ErrorKind::validation, "no relevance judgments supplied");
  }

  std::set<std::string> missing_flagged;
  for (const auto& finding : outcome.sanity.findings) {
    if (finding.code == FindingCode::empty_result_set && finding.qid) {
      missing_flagged.insert(*finding.qid);
    }
  }

  for (const auto& measure_id : measures) {
    Measure measure = parse_measure(measure_id);
    EvaluationReport report;
    report.measure = measure.id;
    double sum = 0.0;
    for (const auto& [topic, topic_qrels] : qrels_by_topic) {
      double value = 0.0;
      auto ranking_it = rankings.find(topic);
      if (ranking_it != rankings.end()) {
        value = ndcg_at_k(ranking_it->second, topic_qrels, measure.k);
      } else if (missing_flagged.count(topic) == 0) {
        // judged topic the run skipped; flag once across measures
        outcome.sanity.findings.push_back(
            {FindingCode::empty_result_set, Severity::warn, topic,
             "judged topic '" + topic + "' has no results; scored 0"});
        missing_flagged.insert(topic);
      }
      report.per_query[topic] = value;
      sum += value;
    }
    report.evaluated_query_count = static_cast<int>(report.per_query.size());
    report.mean = report.evaluated_query_count > 0
                      ? sum / static_cast<double>(report.evaluated_query_count)
                      : 0.0;
    outcome.reports.push_back(std::move(report));
  }

  for (const auto& [qid, lines] : by_qid) {
    if (qrels_by_topic.find(qid) == qrels_by_topic.end()) {
      outcome.notes.push_back("run qid '" + qid + "' has no relevance judgments; ignored");
    }
  }

  return outcome;
}

Json evaluation_json(std::span<const EvaluationReport> reports) {
  Json out = Json::object();
  for (const auto& report : reports) {
    Json entry;
    entry["mean"] = report.mean;
    entry["evaluated_query_count"] = report.evaluated_query_count;
    Json per_query = Json::object();
    for (const auto& [qid, value] : report.per_query) per_query[qid] = value;
    entry["per_query"] = per_query;
    out[report.measure] = entry;
  }
  return out;
}

Json sanity_json(const SanityReport& report) {
  Json findings = Json::array();
  for (const auto& finding : report.findings) {
    Json entry;
    entry["code"] = std::string(finding_code_name(finding.code));
    entry["severity"] = finding.severity == Severity::error ? "error" : "warn";
    entry["qid"] = finding.qid ? Json(*finding.qid) : Json();
    entry["detail"] = finding.detail;
    findings.push_back(std::move(entry));
  }
  Json out;
  out["findings"] = findings;
  return out;
}

}  // namespace irbed::eval
