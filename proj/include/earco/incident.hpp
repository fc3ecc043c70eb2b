#pragma once

#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace earco {

struct Incident {
  std::string id;
  std::string title;
  std::string raw_summary;
  std::string cleaned_summary;
  std::string owning_service;
  std::optional<std::string> root_cause;
  /// Seconds since the Unix epoch (UTC). Absent when the record carried no timestamp.
  std::optional<std::int64_t> created_at;
  int severity = 0;

  bool operator==(const Incident&) const = default;
};

enum class Split { kTrain, kValidation, kTest };

std::string_view to_string(Split split);

struct Corpus {
  std::vector<Incident> incidents;
  std::optional<Split> split;

  std::size_t size() const { return incidents.size(); }
  bool empty() const { return incidents.empty(); }
  const Incident* find(std::string_view id) const;

  bool operator==(const Corpus&) const = default;
};

/// Parses "YYYY-MM-DD", "YYYY-MM-DDTHH:MM[:SS[.frac]]" with an optional
/// "Z" or "+HH:MM" offset. Fractional seconds are dropped.
std::optional<std::int64_t> parse_iso8601(std::string_view text);
std::string format_iso8601(std::int64_t epoch_seconds);

/// One JSON object per line. Blank lines are skipped. Throws kParse with the
/// 1-based line number, or kDuplicate naming the repeated id.
Corpus parse_corpus(std::istream& in);
Corpus load_corpus(const std::string& path);

void write_corpus(std::ostream& out, const Corpus& corpus);
void save_corpus(const std::string& path, const Corpus& corpus);

struct SplitCorpora {
  Corpus train;
  Corpus validation;
  Corpus test;
};

/// Orders incidents oldest first and cuts floor(n*train_frac) and
/// floor(n*val_frac) off the front; the newest remainder is the test set.
/// When any incident lacks a timestamp the whole corpus keeps ingestion order.
SplitCorpora temporal_split(const Corpus& corpus, double train_frac, double val_frac);

/// "Title: ...\nSummary: ...\nOwning service: ..." block used in prompts.
std::string render_incident_details(const Incident& incident);

}  // namespace earco
