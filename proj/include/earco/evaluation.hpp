#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "earco/assembly.hpp"
#include "earco/gateway.hpp"
#include "earco/incident.hpp"

namespace earco {

struct JudgeScore {
  int score = 1;
  std::string justification;
  /// The model replied with an integer outside [1, 5].
  bool clamped = false;

  bool operator==(const JudgeScore&) const = default;
};

/// Reads "Score: <int>" and "Justification: ..." from a judge reply.
/// Fractional or missing scores yield nullopt. Out-of-range integers are
/// clamped into [1, 5].
std::optional<JudgeScore> parse_judge_reply(std::string_view reply);

/// Scores `generated` against `reference` with the judge model. An
/// unreadable reply is re-asked once before kJudgeParse.
JudgeScore judge(Gateway& gateway, std::string_view generated, std::string_view reference,
                 std::string_view incident_summary);

struct EvaluationRecord {
  std::string incident_id;
  std::string mode;  // report row label
  JudgeScore judge;
  bool in_filtered_set = false;

  bool operator==(const EvaluationRecord&) const = default;
};

struct SplitStats {
  double mean = 0.0;
  double std = 0.0;  // sample (n-1) estimator, 0 for n = 1
  std::size_t n = 0;

  bool operator==(const SplitStats&) const = default;
};

struct ReportRow {
  std::string label;
  SplitStats complete;
  /// Absent when no record of this row has a summary.
  std::optional<SplitStats> filtered;

  bool operator==(const ReportRow&) const = default;
};

struct EvaluationReport {
  std::vector<ReportRow> rows;

  const ReportRow* find(std::string_view label) const;
  bool operator==(const EvaluationReport&) const = default;
};

/// One row per distinct mode, in order of first appearance. Throws
/// kAggregation on an empty record set.
EvaluationReport aggregate(const std::vector<EvaluationRecord>& records);

/// Welford mean and sample standard deviation.
SplitStats summarize_scores(const std::vector<double>& scores);

/// "2.33 ± 0.98"
std::string format_mean_std(const SplitStats& stats);

/// Aligned text table, one line per row:
/// "<first_header> | Complete Test Dataset | Filtered Test Dataset".
std::string render_report_table(const EvaluationReport& report,
                                std::string_view first_header = "Experiment");

nlohmann::ordered_json report_to_json(const EvaluationReport& report);
EvaluationReport report_from_json(const nlohmann::json& j);
void save_report(const std::string& path, const EvaluationReport& report);
EvaluationReport load_report(const std::string& path);

struct ModeComparison {
  double complete_percent = 0.0;
  std::optional<double> filtered_percent;
};

/// Relative change of the candidate mean over the baseline mean, in percent,
/// per split. Throws kLookup when either mode is missing.
ModeComparison compare_modes(const EvaluationReport& report, std::string_view baseline,
                             std::string_view candidate);
double relative_improvement(double baseline_mean, double candidate_mean);
/// One decimal with an explicit sign: "+21.3%", "-25.0%", "0.0%".
std::string format_percent(double percent);

std::string record_to_json_line(const EvaluationRecord& record);
void save_records(const std::string& path, const std::vector<EvaluationRecord>& records);

struct EvaluationBatch {
  std::vector<EvaluationRecord> records;
  /// Recommendations whose incident has no ground-truth root cause.
  std::vector<std::string> skipped;
};

/// Judges every recommendation against its incident in `corpus`, in input
/// order. `label` overrides the row label (defaults to the mode name).
EvaluationBatch evaluate_recommendations(Gateway& gateway,
                                         const std::vector<RCARecommendation>& recs,
                                         const Corpus& corpus, std::size_t concurrency,
                                         std::optional<std::string> label = std::nullopt);

}  // namespace earco
