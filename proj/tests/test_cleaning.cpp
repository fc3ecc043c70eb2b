#include <random>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "cleaning_oracle.hpp"
#include "earco/text_cleaning.hpp"
#include "test_support.hpp"

using namespace earco;
using testing_support::fixture;
using testing_support::read_file;

namespace {

bool is_subsequence(const std::string& small, const std::string& big) {
  std::size_t j = 0;
  for (const char c : big) {
    if (j < small.size() && small[j] == c) ++j;
  }
  return j == small.size();
}

std::string fuzz_string(std::mt19937_64& rng) {
  static const std::vector<std::string> pieces = {
      "<", ">", "/", "p", "img", "IMG", " ", "\n", "\t", "\r", "at ", "A.b", "(", ")", "![", "](",
      "]", "x", "é", "<b>", "</b>", "<img src=x>", "<p class=\"a\">", "   at Foo.bar(F.java:1)\n",
      "at A.c(y)\n", "![alt](u.png)", "-", "1", "in ", "$", "`", "&lt;"};
  std::uniform_int_distribution<int> len(0, 40);
  std::uniform_int_distribution<std::size_t> pick(0, pieces.size() - 1);
  std::string s;
  const int n = len(rng);
  for (int i = 0; i < n; ++i) s += pieces[pick(rng)];
  return s;
}

}  // namespace

TEST(CleanText, EmptyStaysEmpty) {
  const auto r = clean_text("");
  EXPECT_EQ(r.text, "");
  EXPECT_EQ(r.counts.html_tags, 0u);
}

TEST(CleanText, StripsParagraphTags) {
  const auto r = clean_text("<p>DB timeout</p>");
  EXPECT_EQ(r.text, "DB timeout");
  EXPECT_EQ(r.counts.html_tags, 2u);
}

TEST(CleanText, FiveLineInputKeepsOuterLines) {
  const std::string in =
      "Checkout failed\n"
      "  at Foo.bar(File.java:10)\n"
      "  at Foo.baz(File.java:22)\n"
      "  at Main.run(Main.java:3)\n"
      "Rolled back the release";
  const auto r = clean_text(in);
  EXPECT_EQ(r.text, "Checkout failed\nRolled back the release");
  EXPECT_EQ(r.counts.stacktrace_blocks, 1u);
  const auto ref = oracle::clean(in);
  EXPECT_EQ(ref.text, r.text);
  EXPECT_EQ(ref.stacktrace_blocks, 1u);
}

TEST(CleanText, FrameLineRecognition) {
  EXPECT_TRUE(is_stack_frame_line("at Foo.bar(File.java:10)"));
  EXPECT_TRUE(is_stack_frame_line("   at Contoso.Pool.Open() in D:\\src\\Pool.cs:line 88"));
  EXPECT_TRUE(is_stack_frame_line("\tat kubelet.syncLoop"));
  EXPECT_FALSE(is_stack_frame_line("look at this"));
  EXPECT_FALSE(is_stack_frame_line("at A.b(x) extra"));
  EXPECT_FALSE(is_stack_frame_line("at A.b(f(1))"));
}

TEST(CleanText, FixtureCasesMatchFrozenExpectations) {
  const auto cases = nlohmann::json::parse(read_file(fixture("cleaning_cases.json")));
  ASSERT_EQ(cases.size(), 50u);
  for (const auto& c : cases) {
    SCOPED_TRACE(c.at("name").get<std::string>());
    const auto input = c.at("input").get<std::string>();
    const auto expected = c.at("expected").get<std::string>();
    const auto got = clean_text(input);
    EXPECT_EQ(got.text, expected);
    EXPECT_EQ(got.counts.image_refs, c.at("image_refs").get<std::size_t>());
    EXPECT_EQ(got.counts.html_tags, c.at("html_tags").get<std::size_t>());
    EXPECT_EQ(got.counts.stacktrace_blocks, c.at("stacktrace_blocks").get<std::size_t>());

    const auto ref = oracle::clean(input);
    EXPECT_EQ(ref.text, expected);
    EXPECT_EQ(ref.image_refs, c.at("image_refs").get<std::size_t>());
    EXPECT_EQ(ref.html_tags, c.at("html_tags").get<std::size_t>());
    EXPECT_EQ(ref.stacktrace_blocks, c.at("stacktrace_blocks").get<std::size_t>());
  }
}

TEST(CleanTextProperty, FuzzAgreesWithOracleAndIsIdempotentSubsequence) {
  std::mt19937_64 rng(20240611);
  for (int i = 0; i < 2000; ++i) {
    const auto s = fuzz_string(rng);
    const auto got = clean_text(s);
    const auto ref = oracle::clean(s);
    ASSERT_EQ(got.text, ref.text) << "input: " << s;
    ASSERT_EQ(got.counts.image_refs, ref.image_refs) << "input: " << s;
    ASSERT_EQ(got.counts.html_tags, ref.html_tags) << "input: " << s;
    ASSERT_EQ(got.counts.stacktrace_blocks, ref.stacktrace_blocks) << "input: " << s;
    ASSERT_EQ(clean_text(got.text).text, got.text) << "input: " << s;
    ASSERT_TRUE(is_subsequence(got.text, s)) << "input: " << s;
  }
}

TEST(CleanTextProperty, ArbitraryBytesAreHandled) {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> len(0, 64);
  std::uniform_int_distribution<int> byte(0, 255);
  for (int i = 0; i < 2000; ++i) {
    std::string s(static_cast<std::size_t>(len(rng)), '\0');
    for (auto& c : s) c = static_cast<char>(byte(rng));
    const auto got = clean_text(s);
    ASSERT_EQ(clean_text(got.text).text, got.text);
    ASSERT_TRUE(is_subsequence(got.text, s));
  }
}
