#include "earco/incident.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <unordered_set>

#include "earco/error.hpp"

namespace earco {

using json = nlohmann::ordered_json;

std::string_view to_string(Split split) {
  switch (split) {
    case Split::kTrain:
      return "train";
    case Split::kValidation:
      return "validation";
    case Split::kTest:
      return "test";
  }
  return "unknown";
}

const Incident* Corpus::find(std::string_view id) const {
  const auto it = std::find_if(incidents.begin(), incidents.end(),
                               [&](const Incident& i) { return i.id == id; });
  return it == incidents.end() ? nullptr : &*it;
}

namespace {

bool read_int(std::string_view s, std::size_t& pos, std::size_t digits, int& out) {
  if (pos + digits > s.size()) return false;
  int v = 0;
  for (std::size_t i = 0; i < digits; ++i) {
    const char c = s[pos + i];
    if (c < '0' || c > '9') return false;
    v = v * 10 + (c - '0');
  }
  pos += digits;
  out = v;
  return true;
}

bool expect(std::string_view s, std::size_t& pos, char c) {
  if (pos < s.size() && s[pos] == c) {
    ++pos;
    return true;
  }
  return false;
}

}  // namespace

std::optional<std::int64_t> parse_iso8601(std::string_view s) {
  using namespace std::chrono;
  std::size_t pos = 0;
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, sec = 0;
  if (!read_int(s, pos, 4, y) || !expect(s, pos, '-') || !read_int(s, pos, 2, mo) ||
      !expect(s, pos, '-') || !read_int(s, pos, 2, d)) {
    return std::nullopt;
  }
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)},
                           day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) return std::nullopt;
  std::int64_t offset = 0;
  if (pos < s.size()) {
    if (s[pos] != 'T' && s[pos] != ' ') return std::nullopt;
    ++pos;
    if (!read_int(s, pos, 2, h) || !expect(s, pos, ':') || !read_int(s, pos, 2, mi)) {
      return std::nullopt;
    }
    if (expect(s, pos, ':')) {
      if (!read_int(s, pos, 2, sec)) return std::nullopt;
      if (expect(s, pos, '.')) {
        const auto start = pos;
        while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') ++pos;
        if (pos == start) return std::nullopt;
      }
    }
    if (h > 23 || mi > 59 || sec > 60) return std::nullopt;
    if (pos < s.size()) {
      if (s[pos] == 'Z' || s[pos] == 'z') {
        ++pos;
      } else if (s[pos] == '+' || s[pos] == '-') {
        const int sign = s[pos] == '-' ? -1 : 1;
        ++pos;
        int oh = 0, om = 0;
        if (!read_int(s, pos, 2, oh)) return std::nullopt;
        expect(s, pos, ':');
        if (!read_int(s, pos, 2, om)) return std::nullopt;
        offset = sign * (oh * 3600 + om * 60);
      } else {
        return std::nullopt;
      }
    }
  }
  if (pos != s.size()) return std::nullopt;
  const auto days = sys_days{ymd}.time_since_epoch().count();
  return static_cast<std::int64_t>(days) * 86400 + h * 3600 + mi * 60 + sec - offset;
}

std::string format_iso8601(std::int64_t epoch_seconds) {
  using namespace std::chrono;
  const auto tp = sys_seconds{seconds{epoch_seconds}};
  const auto dp = floor<days>(tp);
  const year_month_day ymd{dp};
  const hh_mm_ss hms{tp - dp};
  return fmt::format("{:04d}-{:02d}-{:02d}T{:02d}:{:02d}:{:02d}Z", static_cast<int>(ymd.year()),
                     static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                     hms.hours().count(), hms.minutes().count(), hms.seconds().count());
}

namespace {

std::string string_field(const json& obj, const char* key, std::size_t line, bool required) {
  const auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) {
    if (required) throw Error::parse_at(line, std::string("missing field '") + key + "'");
    return {};
  }
  if (!it->is_string()) throw Error::parse_at(line, std::string("field '") + key + "' must be a string");
  return it->get<std::string>();
}

Incident incident_from_json(const json& obj, std::size_t line) {
  if (!obj.is_object()) throw Error::parse_at(line, "record is not a JSON object");
  Incident inc;
  inc.id = string_field(obj, "id", line, true);
  if (inc.id.empty()) throw Error::parse_at(line, "empty id");
  inc.title = string_field(obj, "title", line, true);
  inc.raw_summary = string_field(obj, "summary", line, false);
  inc.cleaned_summary = string_field(obj, "cleaned_summary", line, false);
  inc.owning_service = string_field(obj, "owning_service", line, false);
  if (const auto it = obj.find("root_cause"); it != obj.end() && !it->is_null()) {
    if (!it->is_string()) throw Error::parse_at(line, "field 'root_cause' must be a string");
    inc.root_cause = it->get<std::string>();
  }
  if (const auto ts = string_field(obj, "created_at", line, false); !ts.empty()) {
    inc.created_at = parse_iso8601(ts);
    if (!inc.created_at) throw Error::parse_at(line, "bad created_at '" + ts + "'");
  }
  if (const auto it = obj.find("severity"); it != obj.end() && !it->is_null()) {
    if (!it->is_number_integer()) throw Error::parse_at(line, "field 'severity' must be an integer");
    inc.severity = it->get<int>();
  }
  return inc;
}

json incident_to_json(const Incident& inc) {
  json j;
  j["id"] = inc.id;
  j["title"] = inc.title;
  j["summary"] = inc.raw_summary;
  j["cleaned_summary"] = inc.cleaned_summary;
  j["owning_service"] = inc.owning_service;
  j["root_cause"] = inc.root_cause ? json(*inc.root_cause) : json(nullptr);
  j["created_at"] = inc.created_at ? json(format_iso8601(*inc.created_at)) : json(nullptr);
  j["severity"] = inc.severity;
  return j;
}

}  // namespace

Corpus parse_corpus(std::istream& in) {
  Corpus corpus;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw Error::parse_at(line_no, e.what());
    }
    auto inc = incident_from_json(obj, line_no);
    if (!seen.insert(inc.id).second) {
      throw Error(ErrorCode::kDuplicate, "duplicate incident id '" + inc.id + "' at line " +
                                             std::to_string(line_no));
    }
    corpus.incidents.push_back(std::move(inc));
  }
  return corpus;
}

Corpus load_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open corpus '" + path + "'");
  return parse_corpus(in);
}

void write_corpus(std::ostream& out, const Corpus& corpus) {
  for (const auto& inc : corpus.incidents) out << incident_to_json(inc).dump() << '\n';
}

void save_corpus(const std::string& path, const Corpus& corpus) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write corpus '" + path + "'");
  write_corpus(out, corpus);
}

SplitCorpora temporal_split(const Corpus& corpus, double train_frac, double val_frac) {
  if (!(train_frac > 0.0) || !(val_frac > 0.0) || !(train_frac + val_frac < 1.0)) {
    throw Error(ErrorCode::kPrecondition,
                "split fractions must be positive and sum to less than 1");
  }
  if (corpus.empty()) throw Error(ErrorCode::kEmptyCorpus, "cannot split an empty corpus");

  std::vector<Incident> ordered = corpus.incidents;
  const bool all_timed = std::all_of(ordered.begin(), ordered.end(),
                                     [](const Incident& i) { return i.created_at.has_value(); });
  if (all_timed) {
    std::stable_sort(ordered.begin(), ordered.end(), [](const Incident& a, const Incident& b) {
      return *a.created_at < *b.created_at;
    });
  }

  const auto n = static_cast<double>(ordered.size());
  // Guard against 0.1 * 10 landing a hair under 1.
  const auto n_train = static_cast<std::size_t>(std::floor(n * train_frac + 1e-9));
  const auto n_val = static_cast<std::size_t>(std::floor(n * val_frac + 1e-9));

  SplitCorpora out;
  out.train.split = Split::kTrain;
  out.validation.split = Split::kValidation;
  out.test.split = Split::kTest;
  auto it = std::make_move_iterator(ordered.begin());
  out.train.incidents.assign(it, it + static_cast<std::ptrdiff_t>(n_train));
  it += static_cast<std::ptrdiff_t>(n_train);
  out.validation.incidents.assign(it, it + static_cast<std::ptrdiff_t>(n_val));
  it += static_cast<std::ptrdiff_t>(n_val);
  out.test.incidents.assign(it, std::make_move_iterator(ordered.end()));
  return out;
}

std::string render_incident_details(const Incident& incident) {
  std::string out = "Title: " + incident.title + "\n";
  out += "Summary: " + incident.cleaned_summary + "\n";
  out += "Owning service: " + incident.owning_service;
  return out;
}

}  // namespace earco
