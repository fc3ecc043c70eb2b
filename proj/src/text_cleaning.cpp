#include "earco/text_cleaning.hpp"

#include <cctype>
#include <optional>
#include <vector>

#include "earco/text_util.hpp"

namespace earco {

namespace {

bool is_alpha(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; }
bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }
// Whitespace allowed between a tag name and its attributes. Newlines are
// excluded: tags never span lines, which keeps line removal from creating tags.
bool is_inline_space(char c) {
  return c == ' ' || c == '\t' || c == '\r' || c == '\f' || c == '\v';
}

// Length of the `[^<>\n]*>` tail starting at `i`, including the '>'.
std::optional<std::size_t> attribute_tail(std::string_view s, std::size_t i) {
  for (std::size_t j = i; j < s.size(); ++j) {
    if (s[j] == '>') return j - i + 1;
    if (s[j] == '<' || s[j] == '\n') return std::nullopt;
  }
  return std::nullopt;
}

// Matches `</?NAME(\s[^<>\n]*)?/?>` at `pos`; returns the match length and
// reports the tag name so the caller can recognise <img>.
std::optional<std::size_t> match_tag(std::string_view s, std::size_t pos, std::string* name) {
  std::size_t j = pos + 1;
  bool closing = false;
  if (j < s.size() && s[j] == '/') {
    closing = true;
    ++j;
  }
  if (j >= s.size() || !is_alpha(s[j])) return std::nullopt;
  const std::size_t name_begin = j;
  while (j < s.size() && (is_alnum(s[j]) || s[j] == '-')) ++j;
  if (name != nullptr) *name = closing ? std::string() : to_lower(s.substr(name_begin, j - name_begin));
  if (j >= s.size()) return std::nullopt;
  if (s[j] == '>') return j - pos + 1;
  if (s[j] == '/' && j + 1 < s.size() && s[j + 1] == '>') return j - pos + 2;
  if (is_inline_space(s[j])) {
    if (auto tail = attribute_tail(s, j + 1)) return j + 1 - pos + *tail;
  }
  return std::nullopt;
}

// `!\[[^\]\n]*\]\([^)\n]*\)`
std::optional<std::size_t> match_markdown_image(std::string_view s, std::size_t pos) {
  if (s.compare(pos, 2, "![") != 0) return std::nullopt;
  std::size_t j = pos + 2;
  while (j < s.size() && s[j] != ']' && s[j] != '\n') ++j;
  if (j + 1 >= s.size() || s[j] != ']' || s[j + 1] != '(') return std::nullopt;
  j += 2;
  while (j < s.size() && s[j] != ')' && s[j] != '\n') ++j;
  if (j >= s.size() || s[j] != ')') return std::nullopt;
  return j - pos + 1;
}

// HTML images first, then markdown images, each in a separate left-to-right pass.
std::string strip_images(std::string_view s, std::size_t& count) {
  std::string html_free;
  html_free.reserve(s.size());
  for (std::size_t i = 0; i < s.size();) {
    if (s[i] == '<') {
      std::string name;
      if (auto len = match_tag(s, i, &name); len && name == "img") {
        ++count;
        i += *len;
        continue;
      }
    }
    html_free.push_back(s[i++]);
  }
  std::string out;
  out.reserve(html_free.size());
  for (std::size_t i = 0; i < html_free.size();) {
    if (html_free[i] == '!') {
      if (auto len = match_markdown_image(html_free, i)) {
        ++count;
        i += *len;
        continue;
      }
    }
    out.push_back(html_free[i++]);
  }
  return out;
}

std::string strip_tags(std::string_view s, std::size_t& count) {
  std::string out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    if (s[i] == '<') {
      if (auto len = match_tag(s, i, nullptr)) {
        ++count;
        i += *len;
        continue;
      }
    }
    out.push_back(s[i]);
    ++i;
  }
  return out;
}

bool is_ident_start(char c) { return is_alpha(c) || c == '_' || c == '$'; }
bool is_ident_char(char c) {
  return is_alnum(c) || c == '_' || c == '$' || c == '.' || c == '<' || c == '>' || c == '`' ||
         c == '+' || c == '/';
}

}  // namespace

bool is_stack_frame_line(std::string_view line) {
  // [ \t]*at[ \t]+IDENT[ \t]*(\([^()\n]*\))?([ \t]+in[ \t][^\n]*)?[ \t\r]*
  std::size_t i = 0;
  const auto skip_blank = [&] {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
  };
  skip_blank();
  if (line.compare(i, 2, "at") != 0) return false;
  i += 2;
  if (i >= line.size() || (line[i] != ' ' && line[i] != '\t')) return false;
  skip_blank();
  if (i >= line.size() || !is_ident_start(line[i])) return false;
  while (i < line.size() && is_ident_char(line[i])) ++i;
  const std::size_t after_ident = i;
  skip_blank();
  if (i < line.size() && line[i] == '(') {
    ++i;
    while (i < line.size() && line[i] != ')' && line[i] != '(') ++i;
    if (i >= line.size() || line[i] != ')') return false;
    ++i;
  } else {
    i = after_ident;
  }
  // .NET frames: "at Ns.Type.Method() in C:\src\File.cs:line 42"
  const std::size_t before_suffix = i;
  skip_blank();
  if (i > before_suffix && line.compare(i, 2, "in") == 0 && i + 2 < line.size() &&
      (line[i + 2] == ' ' || line[i + 2] == '\t')) {
    return true;
  }
  i = before_suffix;
  while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
  return i == line.size();
}

CleanedText clean_text(std::string_view raw) {
  CleanedText result;
  std::string text(raw);

  // Removing one construct can splice together another ("<<b>p>"), so run to a fixpoint.
  while (true) {
    const auto before = result.counts.image_refs + result.counts.html_tags;
    text = strip_images(text, result.counts.image_refs);
    text = strip_tags(text, result.counts.html_tags);
    if (result.counts.image_refs + result.counts.html_tags == before) break;
  }

  const auto lines = split_lines(text);
  std::vector<std::string> kept;
  kept.reserve(lines.size());
  std::size_t i = 0;
  while (i < lines.size()) {
    std::size_t run = 0;
    while (i + run < lines.size() && is_stack_frame_line(lines[i + run])) ++run;
    if (run >= 2) {
      ++result.counts.stacktrace_blocks;
      i += run;
    } else {
      kept.push_back(lines[i++]);
    }
  }
  result.text = join_lines(kept);
  return result;
}

}  // namespace earco
