#pragma once

#include <cstddef>
#include <string>
#include <string_view>

namespace earco {

struct CleaningCounts {
  std::size_t html_tags = 0;
  std::size_t stacktrace_blocks = 0;
  std::size_t image_refs = 0;

  CleaningCounts& operator+=(const CleaningCounts& o) {
    html_tags += o.html_tags;
    stacktrace_blocks += o.stacktrace_blocks;
    image_refs += o.image_refs;
    return *this;
  }
};

struct CleanedText {
  std::string text;
  CleaningCounts counts;
};

/// Removes image references, HTML tags and stack-trace blocks. Everything
/// else is kept verbatim and in order, so the result is a subsequence of the
/// input. Total and idempotent. The grammar is documented in
/// docs/cleaning_grammar.md.
CleanedText clean_text(std::string_view raw);

/// True when `line` is a single stack frame ("at pkg.Class.method(File.java:10)").
bool is_stack_frame_line(std::string_view line);

}  // namespace earco
