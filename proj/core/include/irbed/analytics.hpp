#pragma once

// Result aggregation: leaderboards with per-corpus macro-averaging, and
// preference-reproducibility statistics over pairs of systems (effect
// ratio, delta relative improvement, success rates, quantiles).

#include <array>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "irbed/evaluator.hpp"

namespace irbed::analytics {

struct EvalRecord {
  std::string approach;
  std::string task;
  eval::EvaluationReport report;
};

struct LeaderboardEntry {
  std::string approach;
  std::string corpus;
  std::map<std::string, double> per_task;  // task -> mean measure value
  double macro_avg = 0.0;                  // unweighted mean over per_task
  bool complete = true;  // false when the approach misses a task of the corpus
};

/// Groups tasks into corpora via `corpus_map` (tasks absent from the map
/// form their own corpus) and macro-averages each approach per corpus.
/// Entries are ordered corpus-ascending, then macro_avg descending with
/// the approach id as tie-break. Input order never affects the result.
std::vector<LeaderboardEntry> build_leaderboard(
    std::span<const EvalRecord> evaluations,
    const std::map<std::string, std::string>& corpus_map);

struct PreferencePair {
  std::string baseline;  // lower mean on the origin task
  std::string advanced;
  std::string origin_task;
};

/// All ordered system pairs on one task with mean(advanced) > mean(baseline).
std::vector<PreferencePair> make_preference_pairs(std::span<const EvalRecord> origin_evaluations);

using PerTopicScores = std::map<std::string, double>;

/// ER = mean per-topic improvement on the target task divided by the mean
/// per-topic improvement on the origin task. 1 is a perfect reproduction,
/// 0 a failed one; values above 1 or below 0 are possible.
double effect_ratio(const PerTopicScores& baseline_origin, const PerTopicScores& advanced_origin,
                    const PerTopicScores& baseline_target, const PerTopicScores& advanced_target);

/// delta RI = relative improvement on the origin minus relative improvement
/// on the target, both over aggregate means. 0 is a perfect reproduction.
/// Undefined (nullopt) when either baseline mean is zero.
std::optional<double> delta_relative_improvement(double baseline_origin_mean,
                                                 double advanced_origin_mean,
                                                 double baseline_target_mean,
                                                 double advanced_target_mean);

/// Quantile by linear interpolation between closest ranks.
double quantile_linear(std::vector<double> values, double p);

struct ReproResult {
  PreferencePair pair;
  double effect_ratio = 0.0;
  std::optional<double> delta_ri;
};

struct ReproReport {
  std::string origin_task;
  std::string target_task;
  int pair_count = 0;
  double success_rate = 0.0;            // percent of pairs with ER > 0
  std::array<double, 3> er_quantiles{};  // 25%, 50%, 75%
  std::optional<std::array<double, 3>> dri_quantiles;  // absent if no defined value
  std::vector<ReproResult> results;
  std::vector<std::string> excluded;  // pairs dropped with the reason
};

/// Per-approach reports keyed approach -> task.
using EvaluationIndex = std::map<std::string, std::map<std::string, eval::EvaluationReport>>;

ReproReport repro_report(std::span<const PreferencePair> pairs, const std::string& origin_task,
                         const std::string& target_task, const EvaluationIndex& evaluations);

formats::Json leaderboard_json(std::span<const LeaderboardEntry> entries);
formats::Json repro_json(const ReproReport& report);
std::string render_leaderboard_table(std::span<const LeaderboardEntry> entries);
std::string render_repro_table(std::span<const ReproReport> reports);

}  // namespace irbed::analytics
