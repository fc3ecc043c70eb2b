#include "earco/templates.hpp"

#include <utility>

#include "earco/error.hpp"
#include "earco/text_util.hpp"

namespace earco::detail {
extern const std::pair<std::string_view, std::string_view> kBuiltinTemplates[];
extern const std::size_t kBuiltinTemplateCount;
}  // namespace earco::detail

namespace earco {

std::string_view prompt_template(std::string_view name) {
  for (std::size_t i = 0; i < detail::kBuiltinTemplateCount; ++i) {
    const auto& [n, text] = detail::kBuiltinTemplates[i];
    if (n == name || (n.size() == name.size() + 4 && n.starts_with(name) && n.ends_with(".txt"))) {
      auto t = text;
      while (!t.empty() && (t.back() == '\n' || t.back() == '\r')) t.remove_suffix(1);
      return t;
    }
  }
  throw Error(ErrorCode::kLookup, "no built-in template named '" + std::string(name) + "'");
}

std::vector<std::string> builtin_template_names() {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < detail::kBuiltinTemplateCount; ++i) {
    names.emplace_back(detail::kBuiltinTemplates[i].first);
  }
  return names;
}

std::vector<ThinkingStyle> builtin_thinking_styles() {
  std::vector<ThinkingStyle> styles;
  for (const auto& line : split_lines(prompt_template("thinking_styles"))) {
    const auto bar = line.find('|');
    if (bar == std::string::npos) continue;
    styles.push_back({trim(line.substr(0, bar)), trim(line.substr(bar + 1))});
  }
  return styles;
}

}  // namespace earco
