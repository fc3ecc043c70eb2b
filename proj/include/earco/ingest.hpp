#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "earco/gateway.hpp"
#include "earco/incident.hpp"

namespace earco {

inline constexpr std::string_view kNoisyRootCauseSentinel = "NOISY_ROOT_CAUSE";
inline constexpr std::string_view kNoisySummarySentinel = "NOISY_SUMMARY";

enum class FieldKind { kSummary, kRootCause };

enum class SummarizationStatus { kSummarized, kRejectedNoisy, kSkippedEmpty, kNotRequested, kFailed };

std::string_view to_string(SummarizationStatus status);

struct SummarizeOutcome {
  SummarizationStatus status = SummarizationStatus::kSkippedEmpty;
  std::string text;  // set only when summarized
};

/// Asks the summarizer model to condense a cleaned field. Empty input is
/// skipped without a call; a reply carrying the field's rejection sentinel is
/// RejectedNoisy. Gateway errors propagate.
SummarizeOutcome summarize_field(Gateway& gateway, std::string_view field_text, FieldKind kind);

struct CleaningReport {
  std::string incident_id;
  std::size_t removed_html_tag_count = 0;
  std::size_t removed_stacktrace_block_count = 0;
  std::size_t removed_image_ref_count = 0;
  SummarizationStatus summary_status = SummarizationStatus::kNotRequested;
  SummarizationStatus root_cause_status = SummarizationStatus::kNotRequested;
  /// Set when the root cause was rejected as noisy and the incident left the corpus.
  bool dropped = false;
};

struct IngestOptions {
  bool summarize = false;
  std::size_t concurrency = 4;
};

struct IngestResult {
  Corpus corpus;
  std::vector<CleaningReport> reports;  // one per input incident, input order
};

/// Cleans summary and root cause of every incident and optionally summarizes
/// them. Incidents whose summary ends up empty stay in the corpus. Incidents
/// whose root cause is rejected as noisy are dropped. A summarization failure
/// keeps the cleaned text and is recorded as kFailed.
IngestResult ingest_corpus(const Corpus& raw, Gateway* gateway, const IngestOptions& options);

}  // namespace earco
