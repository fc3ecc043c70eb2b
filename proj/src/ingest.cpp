#include "earco/ingest.hpp"

#include <spdlog/spdlog.h>

#include "earco/error.hpp"
#include "earco/parallel.hpp"
#include "earco/templates.hpp"
#include "earco/text_cleaning.hpp"
#include "earco/text_util.hpp"

namespace earco {

std::string_view to_string(SummarizationStatus status) {
  switch (status) {
    case SummarizationStatus::kSummarized:
      return "summarized";
    case SummarizationStatus::kRejectedNoisy:
      return "rejected_noisy";
    case SummarizationStatus::kSkippedEmpty:
      return "skipped_empty";
    case SummarizationStatus::kNotRequested:
      return "not_requested";
    case SummarizationStatus::kFailed:
      return "failed";
  }
  return "unknown";
}

SummarizeOutcome summarize_field(Gateway& gateway, std::string_view field_text, FieldKind kind) {
  const auto text = trim(field_text);
  if (text.empty()) return {SummarizationStatus::kSkippedEmpty, {}};

  const bool root_cause = kind == FieldKind::kRootCause;
  const auto prompt = render_template(
      prompt_template(root_cause ? "summarize_root_cause" : "summarize_summary"), {{"text", text}});
  auto request = ChatRequest::for_role(ModelRole::kSummarizer, {{MessageRole::kUser, prompt}});
  const auto reply = trim(gateway.complete(request).content);

  const auto sentinel = root_cause ? kNoisyRootCauseSentinel : kNoisySummarySentinel;
  if (reply.find(sentinel) != std::string::npos) return {SummarizationStatus::kRejectedNoisy, {}};
  if (reply.empty()) throw Error(ErrorCode::kEmptyOutput, "summarizer returned an empty reply");
  return {SummarizationStatus::kSummarized, reply};
}

IngestResult ingest_corpus(const Corpus& raw, Gateway* gateway, const IngestOptions& options) {
  if (options.summarize && gateway == nullptr) {
    throw Error(ErrorCode::kConfig, "summarization requested without a gateway");
  }
  const auto n = raw.incidents.size();
  std::vector<Incident> cleaned(n);
  std::vector<CleaningReport> reports(n);

  parallel_for(n, options.summarize ? options.concurrency : 1, [&](std::size_t i) {
    Incident inc = raw.incidents[i];
    CleaningReport& report = reports[i];
    report.incident_id = inc.id;

    const auto summary = clean_text(inc.raw_summary);
    inc.cleaned_summary = trim(summary.text);
    CleaningCounts counts = summary.counts;
    if (inc.root_cause) {
      const auto rc = clean_text(*inc.root_cause);
      counts += rc.counts;
      auto text = trim(rc.text);
      inc.root_cause = text.empty() ? std::nullopt : std::optional<std::string>(std::move(text));
    }
    report.removed_html_tag_count = counts.html_tags;
    report.removed_stacktrace_block_count = counts.stacktrace_blocks;
    report.removed_image_ref_count = counts.image_refs;

    if (options.summarize) {
      const auto run = [&](std::string_view text, FieldKind kind) {
        try {
          return summarize_field(*gateway, text, kind);
        } catch (const Error& e) {
          spdlog::warn("summarization of {} for incident {} failed: {}",
                       kind == FieldKind::kSummary ? "summary" : "root cause", inc.id, e.what());
          return SummarizeOutcome{SummarizationStatus::kFailed, {}};
        }
      };
      const auto s = run(inc.cleaned_summary, FieldKind::kSummary);
      report.summary_status = s.status;
      // Model output goes through the same grammar so the no-markup invariant holds.
      if (s.status == SummarizationStatus::kSummarized) {
        inc.cleaned_summary = trim(clean_text(s.text).text);
      } else if (s.status == SummarizationStatus::kRejectedNoisy) {
        inc.cleaned_summary.clear();
      }
      const auto r = run(inc.root_cause.value_or(""), FieldKind::kRootCause);
      report.root_cause_status = r.status;
      if (r.status == SummarizationStatus::kSummarized) {
        inc.root_cause = trim(clean_text(r.text).text);
      } else if (r.status == SummarizationStatus::kRejectedNoisy) {
        report.dropped = true;
      }
    }
    cleaned[i] = std::move(inc);
  });

  IngestResult result;
  result.corpus.split = raw.split;
  for (std::size_t i = 0; i < n; ++i) {
    if (!reports[i].dropped) result.corpus.incidents.push_back(std::move(cleaned[i]));
  }
  result.reports = std::move(reports);
  return result;
}

}  // namespace earco
