#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace earco {

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);
bool starts_with_icase(std::string_view s, std::string_view prefix);

/// Splits on '\n'. A trailing newline yields a final empty element, so
/// join_lines(split_lines(s)) == s.
std::vector<std::string> split_lines(std::string_view s);
std::string join_lines(const std::vector<std::string>& lines);

/// Replaces every `{{name}}` occurrence. Substituted text is not rescanned.
std::string render_template(std::string_view tpl,
                            const std::vector<std::pair<std::string, std::string>>& vars);

}  // namespace earco
