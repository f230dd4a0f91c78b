#pragma once

// Run evaluation: sanity checks (score ties, NaN scores, empty result sets,
// unknown queries, rank/score contradictions) and rank effectiveness
// measures per query and averaged. Only runs free of error-severity
// findings are evaluated.

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "irbed/formats.hpp"

namespace irbed::eval {

enum class FindingCode {
  parse_fail,
  score_ties,
  nan_score,
  empty_result_set,
  unknown_query,
  rank_score_contradiction,
};
std::string_view finding_code_name(FindingCode code);

enum class Severity { warn, error };

struct Finding {
  FindingCode code;
  Severity severity = Severity::warn;
  std::optional<std::string> qid;
  std::string detail;
};

struct SanityReport {
  std::vector<Finding> findings;

  bool has_errors() const;
  bool has(FindingCode code) const;
};

/// Enumerates all findings without short-circuiting. PARSE_FAIL and
/// NAN_SCORE are error severity (a NaN makes score ordering meaningless);
/// the rest are warnings.
SanityReport sanity_check(const formats::RunFile& run,
                          std::span<const formats::TopicRecord> topics);

/// Sanity report for raw run text; a parse failure becomes a PARSE_FAIL
/// finding instead of an exception.
SanityReport sanity_check_text(std::string_view run_text,
                               std::span<const formats::TopicRecord> topics);

/// A parsed measure identifier such as "ndcg@10". nDCG uses the burst gain
/// 2^rel - 1 with log2(rank + 1) discount; negative grades count as gain 0
/// so values stay in [0, 1]. A future linear-gain variant would get its own
/// identifier rather than overloading this one.
struct Measure {
  std::string id;
  int k = 10;
};
Measure parse_measure(std::string_view id);

/// nDCG@k of one ranking against that query's judgments: DCG@k / IDCG@k,
/// with the ideal ordering taken over all judged documents. Returns 0 when
/// no judgment has positive gain. Documents without a judgment gain 0.
double ndcg_at_k(std::span<const std::string> ranking, std::span<const formats::Qrel> qrels,
                 int k);

struct EvaluationReport {
  std::string measure;
  std::map<std::string, double> per_query;  // every qrels topic appears
  double mean = 0.0;
  int evaluated_query_count = 0;
};

struct EvaluationOutcome {
  std::vector<EvaluationReport> reports;
  SanityReport sanity;
  std::vector<std::string> notes;  // informational, e.g. run qids absent from qrels
};

/// Thrown when error-severity findings block evaluation.
class EvaluationRefused : public Error {
 public:
  explicit EvaluationRefused(SanityReport report);
  const SanityReport& report() const { return report_; }

 private:
  SanityReport report_;
};

/// Evaluates the run on every topic present in the qrels. Topics the run
/// does not cover score 0 and are flagged EMPTY_RESULT_SET. The ranking
/// order is score descending with docno ascending as tie-break.
EvaluationOutcome evaluate(const formats::RunFile& run, std::span<const formats::Qrel> qrels,
                           std::span<const std::string> measures,
                           std::span<const formats::TopicRecord> topics = {});

formats::Json evaluation_json(std::span<const EvaluationReport> reports);
formats::Json sanity_json(const SanityReport& report);

}  // namespace irbed::eval
