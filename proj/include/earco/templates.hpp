#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace earco {

/// Text of a file shipped under templates/, without its trailing newline.
/// Throws kLookup for an unknown name.
std::string_view prompt_template(std::string_view name);

std::vector<std::string> builtin_template_names();

struct ThinkingStyle {
  std::string name;
  std::string description;

  bool operator==(const ThinkingStyle&) const = default;
};

/// The built-in catalog from templates/thinking_styles.txt ("name|description" per line).
std::vector<ThinkingStyle> builtin_thinking_styles();

}  // namespace earco
