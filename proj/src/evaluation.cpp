#include "earco/evaluation.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "earco/error.hpp"
#include "earco/parallel.hpp"
#include "earco/templates.hpp"
#include "earco/text_util.hpp"

namespace earco {

namespace {

// Position right after `label` when a line starts with it (case-insensitive,
// leading markdown emphasis allowed).
std::optional<std::size_t> after_label(std::string_view line, std::string_view label) {
  std::size_t i = 0;
  while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '*' || line[i] == '#')) ++i;
  if (!starts_with_icase(line.substr(i), label)) return std::nullopt;
  i += label.size();
  while (i < line.size() && line[i] == '*') ++i;
  return i;
}

enum class ScoreParse { kOk, kMissing, kFractional };

ScoreParse read_score(std::string_view text, long long& value) {
  std::size_t i = 0;
  while (i < text.size() && (text[i] == ' ' || text[i] == '\t')) ++i;
  std::size_t j = i;
  if (j < text.size() && (text[j] == '-' || text[j] == '+')) ++j;
  const std::size_t digits = j;
  while (j < text.size() && std::isdigit(static_cast<unsigned char>(text[j]))) ++j;
  if (j == digits) return ScoreParse::kMissing;
  if (j + 1 < text.size() && (text[j] == '.' || text[j] == ',') &&
      std::isdigit(static_cast<unsigned char>(text[j + 1]))) {
    return ScoreParse::kFractional;
  }
  const auto first = text.data() + (text[i] == '+' ? i + 1 : i);
  if (std::from_chars(first, text.data() + j, value).ec != std::errc()) {
    // Absurdly long digit strings: treat as far out of range.
    value = text[i] == '-' ? -1000 : 1000;
  }
  return ScoreParse::kOk;
}

}  // namespace

std::optional<JudgeScore> parse_judge_reply(std::string_view reply) {
  const auto lines = split_lines(reply);
  std::optional<long long> score;
  std::size_t score_line = lines.size();
  for (std::size_t i = 0; i < lines.size() && !score; ++i) {
    const auto pos = after_label(lines[i], "score:");
    if (!pos) continue;
    long long v = 0;
    const auto status = read_score(std::string_view(lines[i]).substr(*pos), v);
    if (status != ScoreParse::kOk) return std::nullopt;
    score = v;
    score_line = i;
  }
  if (!score) return std::nullopt;

  JudgeScore out;
  out.score = static_cast<int>(std::clamp<long long>(*score, 1, 5));
  out.clamped = out.score != *score;

  std::string justification;
  bool found = false;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (i == score_line) continue;
    if (!found) {
      if (const auto pos = after_label(lines[i], "justification:")) {
        found = true;
        justification = std::string(std::string_view(lines[i]).substr(*pos));
      }
    } else {
      justification += "\n" + lines[i];
    }
  }
  if (!found) {
    for (std::size_t i = 0; i < lines.size(); ++i) {
      if (i != score_line) justification += lines[i] + "\n";
    }
  }
  out.justification = trim(justification);
  if (out.justification.empty()) out.justification = "No justification given.";
  return out;
}

JudgeScore judge(Gateway& gateway, std::string_view generated, std::string_view reference,
                 std::string_view incident_summary) {
  if (trim(reference).empty()) throw Error(ErrorCode::kPrecondition, "judge needs a reference root cause");
  const std::string summary = trim(incident_summary).empty() ? "(no summary available)"
                                                             : std::string(incident_summary);
  const std::string prompt = render_template(prompt_template("judge"),
                                             {{"summary", summary},
                                              {"reference", std::string(reference)},
                                              {"generated", std::string(generated)}});
  auto req = ChatRequest::for_role(ModelRole::kJudge, {{MessageRole::kUser, prompt}});
  auto reply = gateway.complete(req).content;
  auto parsed = parse_judge_reply(reply);
  if (!parsed) {
    req.messages.push_back({MessageRole::kAssistant, reply});
    req.messages.push_back({MessageRole::kUser, std::string(prompt_template("judge_reask"))});
    reply = gateway.complete(req).content;
    parsed = parse_judge_reply(reply);
  }
  if (!parsed) throw Error(ErrorCode::kJudgeParse, "unreadable judge reply: " + trim(reply));
  if (parsed->clamped) spdlog::warn("judge score out of range, clamped to {}", parsed->score);
  return *parsed;
}

// ---------------------------------------------------------------------------

const ReportRow* EvaluationReport::find(std::string_view label) const {
  for (const auto& r : rows) {
    if (r.label == label) return &r;
  }
  return nullptr;
}

SplitStats summarize_scores(const std::vector<double>& scores) {
  SplitStats s;
  double m2 = 0.0;
  for (const double x : scores) {
    ++s.n;
    const double delta = x - s.mean;
    s.mean += delta / static_cast<double>(s.n);
    m2 += delta * (x - s.mean);
  }
  s.std = s.n > 1 ? std::sqrt(m2 / static_cast<double>(s.n - 1)) : 0.0;
  return s;
}

EvaluationReport aggregate(const std::vector<EvaluationRecord>& records) {
  if (records.empty()) throw Error(ErrorCode::kAggregation, "no evaluation records");
  std::vector<std::string> order;
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> groups;
  for (const auto& r : records) {
    auto [it, inserted] = groups.try_emplace(r.mode);
    if (inserted) order.push_back(r.mode);
    it->second.first.push_back(r.judge.score);
    if (r.in_filtered_set) it->second.second.push_back(r.judge.score);
  }
  EvaluationReport report;
  for (const auto& label : order) {
    const auto& [complete, filtered] = groups.at(label);
    ReportRow row{label, summarize_scores(complete), std::nullopt};
    if (!filtered.empty()) row.filtered = summarize_scores(filtered);
    report.rows.push_back(std::move(row));
  }
  return report;
}

std::string format_mean_std(const SplitStats& stats) {
  return fmt::format("{:.2f} ± {:.2f}", stats.mean, stats.std);
}

namespace {
std::size_t display_width(std::string_view s) {
  return static_cast<std::size_t>(
      std::count_if(s.begin(), s.end(), [](char c) { return (static_cast<unsigned char>(c) & 0xC0) != 0x80; }));
}

std::string pad(std::string_view s, std::size_t width) {
  std::string out(s);
  out.append(width - std::min(width, display_width(s)), ' ');
  return out;
}
}  // namespace

std::string render_report_table(const EvaluationReport& report, std::string_view first_header) {
  std::vector<std::array<std::string, 3>> cells;
  cells.push_back({std::string(first_header), "Complete Test Dataset", "Filtered Test Dataset"});
  for (const auto& row : report.rows) {
    cells.push_back({row.label, format_mean_std(row.complete),
                     row.filtered ? format_mean_std(*row.filtered) : std::string("n/a")});
  }
  std::array<std::size_t, 3> width{};
  for (const auto& c : cells) {
    for (std::size_t i = 0; i < 3; ++i) width[i] = std::max(width[i], display_width(c[i]));
  }
  const auto line = [&](const std::array<std::string, 3>& c) {
    return trim(pad(c[0], width[0]) + " | " + pad(c[1], width[1]) + " | " + c[2]) + "\n";
  };
  std::string out = line(cells[0]);
  out += std::string(width[0] + 1, '-') + "+" + std::string(width[1] + 2, '-') + "+" +
         std::string(width[2] + 1, '-') + "\n";
  for (std::size_t i = 1; i < cells.size(); ++i) out += line(cells[i]);
  return out;
}

namespace {
nlohmann::ordered_json stats_json(const SplitStats& s) {
  return {{"mean", s.mean}, {"std", s.std}, {"n", s.n}};
}
SplitStats stats_from(const nlohmann::json& j) {
  return {j.at("mean").get<double>(), j.at("std").get<double>(), j.at("n").get<std::size_t>()};
}
}  // namespace

nlohmann::ordered_json report_to_json(const EvaluationReport& report) {
  nlohmann::ordered_json j;
  j["format"] = "earco-evaluation-report";
  j["version"] = 1;
  j["rows"] = nlohmann::ordered_json::array();
  for (const auto& row : report.rows) {
    nlohmann::ordered_json r;
    r["label"] = row.label;
    r["complete"] = stats_json(row.complete);
    r["filtered"] = row.filtered ? stats_json(*row.filtered) : nlohmann::ordered_json(nullptr);
    j["rows"].push_back(std::move(r));
  }
  return j;
}

EvaluationReport report_from_json(const nlohmann::json& j) {
  try {
    if (j.value("format", "") != "earco-evaluation-report") {
      throw Error(ErrorCode::kParse, "not an evaluation report");
    }
    if (j.value("version", 0) != 1) throw Error(ErrorCode::kVersionMismatch, "unsupported report version");
    EvaluationReport report;
    for (const auto& r : j.at("rows")) {
      ReportRow row{r.at("label").get<std::string>(), stats_from(r.at("complete")), std::nullopt};
      if (r.contains("filtered") && !r.at("filtered").is_null()) row.filtered = stats_from(r.at("filtered"));
      report.rows.push_back(std::move(row));
    }
    return report;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("evaluation report: ") + e.what());
  }
}

void save_report(const std::string& path, const EvaluationReport& report) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write report '" + path + "'");
  out << report_to_json(report).dump(2) << '\n';
}

EvaluationReport load_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open report '" + path + "'");
  try {
    return report_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, "report '" + path + "': " + e.what());
  }
}

double relative_improvement(double baseline_mean, double candidate_mean) {
  if (baseline_mean == 0.0) throw Error(ErrorCode::kPrecondition, "baseline mean is zero");
  return (candidate_mean - baseline_mean) / baseline_mean * 100.0;
}

ModeComparison compare_modes(const EvaluationReport& report, std::string_view baseline,
                             std::string_view candidate) {
  const auto* b = report.find(baseline);
  if (b == nullptr) throw Error(ErrorCode::kLookup, "mode '" + std::string(baseline) + "' not in report");
  const auto* c = report.find(candidate);
  if (c == nullptr) throw Error(ErrorCode::kLookup, "mode '" + std::string(candidate) + "' not in report");
  ModeComparison out;
  out.complete_percent = relative_improvement(b->complete.mean, c->complete.mean);
  if (b->filtered && c->filtered) {
    out.filtered_percent = relative_improvement(b->filtered->mean, c->filtered->mean);
  }
  return out;
}

std::string format_percent(double percent) {
  auto s = fmt::format("{:+.1f}%", percent);
  if (s == "+0.0%" || s == "-0.0%") s = "0.0%";
  return s;
}

std::string record_to_json_line(const EvaluationRecord& record) {
  nlohmann::ordered_json j;
  j["incident_id"] = record.incident_id;
  j["mode"] = record.mode;
  j["score"] = record.judge.score;
  j["justification"] = record.judge.justification;
  j["clamped"] = record.judge.clamped;
  j["in_filtered_set"] = record.in_filtered_set;
  return j.dump();
}

void save_records(const std::string& path, const std::vector<EvaluationRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write records '" + path + "'");
  for (const auto& r : records) out << record_to_json_line(r) << '\n';
}

EvaluationBatch evaluate_recommendations(Gateway& gateway,
                                         const std::vector<RCARecommendation>& recs,
                                         const Corpus& corpus, std::size_t concurrency,
                                         std::optional<std::string> label) {
  std::vector<const Incident*> incidents(recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    incidents[i] = corpus.find(recs[i].incident_id);
    if (incidents[i] == nullptr) {
      throw Error(ErrorCode::kLookup, "incident '" + recs[i].incident_id + "' not in the corpus");
    }
  }
  std::vector<std::optional<EvaluationRecord>> slots(recs.size());
  parallel_for(recs.size(), concurrency, [&](std::size_t i) {
    const auto& inc = *incidents[i];
    if (!inc.root_cause || trim(*inc.root_cause).empty()) return;
    EvaluationRecord rec;
    rec.incident_id = inc.id;
    rec.mode = label ? *label : std::string(to_string(recs[i].mode));
    rec.judge = judge(gateway, recs[i].extracted_root_cause, *inc.root_cause, inc.cleaned_summary);
    rec.in_filtered_set = !inc.cleaned_summary.empty();
    slots[i] = std::move(rec);
  });
  EvaluationBatch out;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    if (slots[i]) {
      out.records.push_back(std::move(*slots[i]));
    } else {
      out.skipped.push_back(recs[i].incident_id);
    }
  }
  return out;
}

}  // namespace earco
