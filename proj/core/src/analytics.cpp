#include "irbed/analytics.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace irbed::analytics {

using formats::Json;

namespace {

/// Mean per-topic difference over the topics both systems cover.
double mean_improvement(const PerTopicScores& baseline, const PerTopicScores& advanced) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& [topic, advanced_value] : advanced) {
    auto it = baseline.find(topic);
    if (it == baseline.end()) continue;
    sum += advanced_value - it->second;
    ++n;
  }
  if (n == 0) throw Error(ErrorKind::validation, "empty topic set");
  return sum / static_cast<double>(n);
}

}  // namespace

std::vector<LeaderboardEntry> build_leaderboard(
    std::span<const EvalRecord> evaluations, const std::map<std::string, std::string>& corpus_map) {
  auto corpus_of = [&](const std::string& task) {
    auto it = corpus_map.find(task);
    return it == corpus_map.end() ? task : it->second;
  };

  std::set<std::pair<std::string, std::string>> seen;
  std::map<std::string, std::set<std::string>> corpus_tasks;
  std::map<std::string, std::map<std::string, std::map<std::string, double>>> scores;
  for (const auto& record : evaluations) {
    if (!seen.emplace(record.approach, record.task).second) {
      throw Error(ErrorKind::conflict, "duplicate evaluation for approach '" + record.approach +
                                           "' on task '" + record.task + "'");
    }
    std::string corpus = corpus_of(record.task);
    corpus_tasks[corpus].insert(record.task);
    scores[corpus][record.approach][record.task] = record.report.mean;
  }

  std::vector<LeaderboardEntry> entries;
  for (const auto& [corpus, approaches] : scores) {
    for (const auto& [approach, per_task] : approaches) {
      LeaderboardEntry entry;
      entry.approach = approach;
      entry.corpus = corpus;
      entry.per_task = per_task;
      entry.complete = per_task.size() == corpus_tasks[corpus].size();
      double sum = 0.0;
      for (const auto& [task, value] : per_task) sum += value;
      entry.macro_avg = per_task.empty() ? 0.0 : sum / static_cast<double>(per_task.size());
      entries.push_back(std::move(entry));
    }
  }
  std::sort(entries.begin(), entries.end(), [](const LeaderboardEntry& a,
                                               const LeaderboardEntry& b) {
    if (a.corpus != b.corpus) return a.corpus < b.corpus;
    if (a.macro_avg != b.macro_avg) return a.macro_avg > b.macro_avg;
    return a.approach < b.approach;
  });
  return entries;
}

std::vector<PreferencePair> make_preference_pairs(
    std::span<const EvalRecord> origin_evaluations) {
  std::vector<PreferencePair> pairs;
  for (std::size_t i = 0; i < origin_evaluations.size(); ++i) {
    for (std::size_t j = 0; j < origin_evaluations.size(); ++j) {
      if (i == j) continue;
      const auto& a = origin_evaluations[i];
      const auto& b = origin_evaluations[j];
      if (a.task != b.task) {
        throw Error(ErrorKind::validation, "preference pairs need evaluations on one task");
      }
      if (a.report.mean < b.report.mean) {
        pairs.push_back({a.approach, b.approach, a.task});
      }
    }
  }
  std::sort(pairs.begin(), pairs.end(), [](const PreferencePair& a, const PreferencePair& b) {
    if (a.baseline != b.baseline) return a.baseline < b.baseline;
    return a.advanced < b.advanced;
  });
  return pairs;
}

double effect_ratio(const PerTopicScores& baseline_origin, const PerTopicScores& advanced_origin,
                    const PerTopicScores& baseline_target, const PerTopicScores& advanced_target) {
  double origin = mean_improvement(baseline_origin, advanced_origin);
  double target = mean_improvement(baseline_target, advanced_target);
  if (origin == 0.0) {
    throw Error(ErrorKind::validation,
                "effect ratio undefined: zero mean improvement on the origin task");
  }
  return target / origin;
}

std::optional<double> delta_relative_improvement(double baseline_origin_mean,
                                                 double advanced_origin_mean,
                                                 double baseline_target_mean,
                                                 double advanced_target_mean) {
  if (baseline_origin_mean == 0.0 || baseline_target_mean == 0.0) return std::nullopt;
  double origin_ri = (advanced_origin_mean - baseline_origin_mean) / baseline_origin_mean;
  double target_ri = (advanced_target_mean - baseline_target_mean) / baseline_target_mean;
  return origin_ri - target_ri;
}

double quantile_linear(std::vector<double> values, double p) {
  if (values.empty()) throw Error(ErrorKind::validation, "quantile of an empty sample");
  if (p < 0.0 || p > 1.0) throw Error(ErrorKind::validation, "quantile p must be in [0, 1]");
  std::sort(values.begin(), values.end());
  if (values.size() == 1) return values[0];
  double h = p * static_cast<double>(values.size() - 1);
  auto lo = static_cast<std::size_t>(std::floor(h));
  std::size_t hi = std::min(lo + 1, values.size() - 1);
  double frac = h - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

ReproReport repro_report(std::span<const PreferencePair> pairs, const std::string& origin_task,
                         const std::string& target_task, const EvaluationIndex& evaluations) {
  ReproReport report;
  report.origin_task = origin_task;
  report.target_task = target_task;

  auto per_topic = [&](const std::string& approach,
                       const std::string& task) -> const PerTopicScores* {
    auto approach_it = evaluations.find(approach);
    if (approach_it == evaluations.end()) return nullptr;
    auto task_it = approach_it->second.find(task);
    if (task_it == approach_it->second.end()) return nullptr;
    return &task_it->second.per_query;
  };
  auto mean = [&](const std::string& approach, const std::string& task) {
    return evaluations.at(approach).at(task).mean;
  };

  std::vector<double> ers;
  std::vector<double> dris;
  int successes = 0;
  for (const auto& pair : pairs) {
    const auto* base_origin = per_topic(pair.baseline, origin_task);
    const auto* adv_origin = per_topic(pair.advanced, origin_task);
    const auto* base_target = per_topic(pair.baseline, target_task);
    const auto* adv_target = per_topic(pair.advanced, target_task);
    if (base_origin == nullptr || adv_origin == nullptr) {
      report.excluded.push_back(pair.baseline + " vs " + pair.advanced +
                                ": missing evaluation on origin task '" + origin_task + "'");
      continue;
    }
    if (base_target == nullptr || adv_target == nullptr) {
      report.excluded.push_back(pair.baseline + " vs " + pair.advanced +
                                ": missing evaluation on target task '" + target_task + "'");
      continue;
    }
    ReproResult result;
    result.pair = pair;
    result.effect_ratio = effect_ratio(*base_origin, *adv_origin, *base_target, *adv_target);
    result.delta_ri =
        delta_relative_improvement(mean(pair.baseline, origin_task), mean(pair.advanced, origin_task),
                                   mean(pair.baseline, target_task), mean(pair.advanced, target_task));
    ers.push_back(result.effect_ratio);
    if (result.effect_ratio > 0.0) ++successes;
    if (result.delta_ri) dris.push_back(*result.delta_ri);
    report.results.push_back(std::move(result));
  }

  report.pair_count = static_cast<int>(report.results.size());
  if (report.pair_count > 0) {
    report.success_rate =
        100.0 * static_cast<double>(successes) / static_cast<double>(report.pair_count);
    report.er_quantiles = {quantile_linear(ers, 0.25), quantile_linear(ers, 0.50),
                           quantile_linear(ers, 0.75)};
  }
  if (!dris.empty()) {
    report.dri_quantiles = {{quantile_linear(dris, 0.25), quantile_linear(dris, 0.50),
                             quantile_linear(dris, 0.75)}};
  }
  return report;
}

Json leaderboard_json(std::span<const LeaderboardEntry> entries) {
  Json out = Json::object();
  for (const auto& entry : entries) {
    Json row;
    row["approach"] = entry.approach;
    row["macro_avg"] = entry.macro_avg;
    row["complete"] = entry.complete;
    Json per_task = Json::object();
    for (const auto& [task, value] : entry.per_task) per_task[task] = value;
    row["per_task"] = per_task;
    if (!out.contains(entry.corpus)) out[entry.corpus] = Json::array();
    out[entry.corpus].push_back(std::move(row));
  }
  return out;
}

Json repro_json(const ReproReport& report) {
  Json out;
  out["origin_task"] = report.origin_task;
  out["target_task"] = report.target_task;
  out["pair_count"] = report.pair_count;
  out["success_rate"] = report.success_rate;
  Json er;
  er["q25"] = report.er_quantiles[0];
  er["q50"] = report.er_quantiles[1];
  er["q75"] = report.er_quantiles[2];
  out["effect_ratio"] = er;
  if (report.dri_quantiles) {
    Json dri;
    dri["q25"] = (*report.dri_quantiles)[0];
    dri["q50"] = (*report.dri_quantiles)[1];
    dri["q75"] = (*report.dri_quantiles)[2];
    out["delta_relative_improvement"] = dri;
  } else {
    out["delta_relative_improvement"] = Json();
  }
  out["excluded"] = report.excluded;
  return out;
}

std::string render_leaderboard_table(std::span<const LeaderboardEntry> entries) {
  std::ostringstream out;
  std::string current_corpus;
  for (const auto& entry : entries) {
    if (entry.corpus != current_corpus) {
      current_corpus = entry.corpus;
      out << current_corpus << "\n";
    }
    out << "  " << entry.approach;
    for (std::size_t i = entry.approach.size(); i < 28; ++i) out << ' ';
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", entry.macro_avg);
    out << buf;
    if (!entry.complete) out << "  (incomplete)";
    if (entry.per_task.size() > 1) {
      out << "  [";
      bool first = true;
      for (const auto& [task, value] : entry.per_task) {
        if (!first) out << ", ";
        std::snprintf(buf, sizeof(buf), "%s: %.4f", task.c_str(), value);
        out << buf;
        first = false;
      }
      out << "]";
    }
    out << "\n";
  }
  return out.str();
}

std::string render_repro_table(std::span<const ReproReport> reports) {
  std::ostringstream out;
  out << "Task                      Pairs  Succ.   ER 25%   ER 50%   ER 75%  dRI 25%  dRI 50%  dRI 75%\n";
  for (const auto& report : reports) {
    char buf[256];
    if (report.dri_quantiles) {
      std::snprintf(buf, sizeof(buf),
                    "%-25s %5d  %5.1f  %7.2f  %7.2f  %7.2f  %7.2f  %7.2f  %7.2f\n",
                    report.target_task.c_str(), report.pair_count, report.success_rate,
                    report.er_quantiles[0], report.er_quantiles[1], report.er_quantiles[2],
                    (*report.dri_quantiles)[0], (*report.dri_quantiles)[1],
                    (*report.dri_quantiles)[2]);
    } else {
      std::snprintf(buf, sizeof(buf), "%-25s %5d  %5.1f  %7.2f  %7.2f  %7.2f        -        -        -\n",
                    report.target_task.c_str(), report.pair_count, report.success_rate,
                    report.er_quantiles[0], report.er_quantiles[1], report.er_quantiles[2]);
    }
    out << buf;
  }
  return out.str();
}

}  // namespace irbed::analytics
