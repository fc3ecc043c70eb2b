#include <random>

#include <gtest/gtest.h>

#include "earco/assembly.hpp"
#include "earco/error.hpp"
#include "earco/templates.hpp"
#include "earco/text_util.hpp"
#include "test_support.hpp"

using namespace earco;
using testing_support::make_incident;

namespace {

template <class Fn>
ErrorCode code_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no earco::Error thrown";
  return ErrorCode::kParse;
}

OptimizedPrompt fixture_prompt(int examples = 10) {
  OptimizationConfig cfg;
  cfg.few_shot_count = examples;
  PromptParts parts;
  parts.problem_description = "Find the root cause.";
  parts.instruction = "Name the failing component.";
  parts.task_intent = "Diagnose incidents.";
  parts.expert_persona = "You are an On-Call Engineer (OCE).";
  for (int i = 0; i < examples; ++i) {
    ICLExample ex;
    ex.problem = "Title: static " + std::to_string(i);
    ex.answer = "cause " + std::to_string(i);
    ex.reasoning = i % 2 == 0 ? "because" : "";
    ex.source_id = "S" + std::to_string(i);
    parts.examples.push_back(ex);
  }
  return build_optimized_prompt(parts, cfg);
}

struct History {
  Corpus corpus;
  VectorIndex index{32};
  HashEmbeddingBackend embedder{32};

  explicit History(int n) {
    for (int i = 0; i < n; ++i) {
      auto inc = make_incident("H" + std::to_string(100 + i), "service " + std::to_string(i % 7) + " outage",
                               "errors on node " + std::to_string(i), "cause " + std::to_string(i));
      index.add(inc.id, embedder.embed(incident_query_text(inc)));
      corpus.incidents.push_back(inc);
    }
  }
};

}  // namespace

TEST(PromptMode, NamesRoundTrip) {
  for (const auto m : kAllPromptModes) EXPECT_EQ(parse_prompt_mode(to_string(m)), m);
  EXPECT_EQ(parse_prompt_mode("pw-ss"), PromptMode::kPWSS);
  EXPECT_EQ(parse_prompt_mode("Manual SS"), PromptMode::kManualSS);
  EXPECT_EQ(parse_prompt_mode("FT_SLM_PW_noEx"), PromptMode::kFtSLMPWnoEx);
  EXPECT_FALSE(parse_prompt_mode("PWXX"));
  EXPECT_EQ(std::size(kAllPromptModes), 9u);
}

TEST(Assembly, ModeMatrixOverAllNineModes) {
  const auto prompt = fixture_prompt();
  History h(30);
  const auto incident = make_incident("Q1", "service 3 outage", "errors on node 999", "x");
  const auto retrieved = retrieve_icl_examples(h.index, h.corpus, h.embedder, incident, 10);
  ASSERT_EQ(retrieved.size(), 10u);
  AssemblyInputs in{&prompt, std::string("Manual OCE instruction."), &retrieved};

  struct Row {
    PromptMode mode;
    std::size_t examples;
    InstructionSource instruction;
    bool answer_format;
  };
  const std::vector<Row> table = {
      {PromptMode::kManualSS, 10, InstructionSource::kManual, false},
      {PromptMode::kPWDefault, 10, InstructionSource::kOptimized, true},
      {PromptMode::kPWSS, 10, InstructionSource::kOptimized, true},
      {PromptMode::kFtSLM, 0, InstructionSource::kNone, false},
      {PromptMode::kFtSLMPW, 10, InstructionSource::kOptimized, true},
      {PromptMode::kFtSLMPWnoEx, 0, InstructionSource::kOptimized, true},
      {PromptMode::kBaseSLMPW, 10, InstructionSource::kOptimized, true},
      {PromptMode::kBaseSLMPWnoEx, 0, InstructionSource::kOptimized, true},
      {PromptMode::kManualSSBase, 10, InstructionSource::kManual, false},
  };
  ASSERT_EQ(table.size(), 9u);
  for (const auto& row : table) {
    SCOPED_TRACE(std::string(to_string(row.mode)));
    const auto a = assemble(row.mode, incident, in);
    EXPECT_EQ(a.example_part.size(), row.examples);
    EXPECT_EQ(a.incident_part, render_incident_details(incident));
    switch (row.instruction) {
      case InstructionSource::kManual: EXPECT_EQ(a.system_part, "Manual OCE instruction."); break;
      case InstructionSource::kOptimized: EXPECT_EQ(a.system_part, optimized_system_text(prompt)); break;
      case InstructionSource::kNone: EXPECT_EQ(a.system_part, ""); break;
    }
    EXPECT_EQ(a.answer_format_part.empty(), !row.answer_format);
    const auto traits = mode_traits(row.mode);
    if (traits.examples == ExampleSource::kStatic) {
      EXPECT_EQ(a.example_part[0].source_id, "S0");
    } else if (traits.examples == ExampleSource::kRetrieved) {
      EXPECT_EQ(a.example_part[0].source_id, retrieved[0].incident.id);
    }

    const auto req = a.to_request(GenerationParams{});
    EXPECT_EQ(req.model_role, ModelRole::kGenerator);
    EXPECT_EQ(req.temperature, 0.0);
    EXPECT_EQ(req.max_new_tokens, 200);
    EXPECT_EQ(req.messages.back().content, a.user_text());
    EXPECT_EQ(req.messages.size(), a.system_part.empty() ? 1u : 2u);
  }
}

TEST(Assembly, FtSlmSeesOnlyTheMetadata) {
  const auto inc = make_incident("Q", "disk full", "node 7 at 100%", "x", std::nullopt, "Storage");
  const auto a = assemble(PromptMode::kFtSLM, inc, {});
  EXPECT_EQ(a.user_text(), "Title: disk full\nSummary: node 7 at 100%\nOwning service: Storage");
}

TEST(Assembly, UserTextLayout) {
  const auto prompt = fixture_prompt(2);
  const auto inc = make_incident("Q", "t", "s");
  const auto a = assemble(PromptMode::kPWDefault, inc, {&prompt, std::nullopt, nullptr});
  EXPECT_EQ(a.user_text(),
            "## Examples\n\n" + render_static_example(1, prompt.examples[0]) + "\n\n" +
                render_static_example(2, prompt.examples[1]) + "\n\n## Current incident\n" +
                render_incident_details(inc) + "\n\n" + prompt.answer_format);
  EXPECT_EQ(render_static_example(1, prompt.examples[0]),
            "### Example 1\nTitle: static 0\nReasoning: because\nAnswer: <ANS_START>cause 0<ANS_END>");
  EXPECT_EQ(render_static_example(2, prompt.examples[1]), "### Example 2\nTitle: static 1\nAnswer: <ANS_START>cause 1<ANS_END>");
}

TEST(Assembly, MissingPartsAreAssemblyErrors) {
  const auto inc = make_incident("Q", "t");
  const auto prompt = fixture_prompt(1);
  EXPECT_EQ(code_of([&] { assemble(PromptMode::kPWSS, inc, {}); }), ErrorCode::kAssembly);
  EXPECT_EQ(code_of([&] { assemble(PromptMode::kPWSS, inc, {&prompt, std::nullopt, nullptr}); }), ErrorCode::kAssembly);
  EXPECT_EQ(code_of([&] { assemble(PromptMode::kManualSS, inc, {&prompt, std::string("  "), nullptr}); }),
            ErrorCode::kAssembly);
}

TEST(Retrieval, SelfExcludedAndSmallIndex) {
  History h(3);
  const auto& self = h.corpus.incidents[1];
  const auto r = retrieve_icl_examples(h.index, h.corpus, h.embedder, self, 10);
  ASSERT_EQ(r.size(), 2u);
  for (const auto& ex : r) EXPECT_NE(ex.incident.id, self.id);
  EXPECT_TRUE(retrieve_icl_examples(h.index, h.corpus, h.embedder, self, 0).empty());

  const auto outsider = make_incident("NEW", "service 1 outage", "x");
  EXPECT_EQ(retrieve_icl_examples(h.index, h.corpus, h.embedder, outsider, 10).size(), 3u);

  VectorIndex empty(32);
  EXPECT_EQ(code_of([&] { retrieve_icl_examples(empty, h.corpus, h.embedder, outsider, 3); }), ErrorCode::kRetrieval);
}

TEST(RetrievalProperty, ExampleIdsFollowSearchOrder) {
  History h(40);
  const auto prompt = fixture_prompt();
  for (int q = 0; q < 40; ++q) {
    const bool in_index = q % 2 == 0;
    const auto inc = in_index ? h.corpus.incidents[static_cast<std::size_t>(q)]
                              : make_incident("Q" + std::to_string(q), "service " + std::to_string(q % 5) + " outage",
                                              "node " + std::to_string(q * 3));
    const std::size_t k = 1 + static_cast<std::size_t>(q % 10);
    const auto retrieved = retrieve_icl_examples(h.index, h.corpus, h.embedder, inc, k);
    std::vector<std::string> want;
    for (const auto& r : h.index.search_top_k(h.embedder.embed(incident_query_text(inc)), k + 1)) {
      if (r.incident_id != inc.id && want.size() < k) want.push_back(r.incident_id);
    }
    for (const auto mode : {PromptMode::kPWSS, PromptMode::kManualSS}) {
      const auto a = assemble(mode, inc, {&prompt, std::string("m"), &retrieved});
      std::vector<std::string> got;
      for (const auto& b : a.example_part) got.push_back(b.source_id);
      ASSERT_EQ(got, want);
      ASSERT_EQ(a, assemble(mode, inc, {&prompt, std::string("m"), &retrieved}));
    }
  }
}

TEST(Extract, Examples) {
  EXPECT_EQ(extract_answer("<ANS_START>x<ANS_END>").text, "x");
  const auto none = extract_answer("no markers here");
  EXPECT_EQ(none.text, "no markers here");
  EXPECT_TRUE(none.marker_missing);
  EXPECT_EQ(extract_answer("<ANS_START>a<ANS_END>junk<ANS_START>b<ANS_END>").text, "a");
  const auto open = extract_answer("reasoning <ANS_START> disk full ");
  EXPECT_EQ(open.text, "disk full");
  EXPECT_TRUE(open.malformed);
  EXPECT_FALSE(open.marker_missing);
}

TEST(ExtractProperty, WrappedStringsRoundTrip) {
  std::mt19937_64 rng(606);
  const std::string alphabet = "ab <>/_ANSTRDE\n\t\r\x01é";
  std::uniform_int_distribution<std::size_t> len(0, 48);
  std::uniform_int_distribution<std::size_t> pick(0, alphabet.size() - 1);
  for (int i = 0; i < 10000; ++i) {
    std::string s;
    for (std::size_t n = len(rng); n > 0; --n) s += alphabet[pick(rng)];
    if (s.find("<ANS_START>") != std::string::npos || s.find("<ANS_END>") != std::string::npos) continue;
    const auto got = extract_answer("<ANS_START>" + s + "<ANS_END>");
    ASSERT_EQ(got.text, trim(s));
    ASSERT_FALSE(got.malformed);
  }
}

TEST(GenerateRca, ExtractionRules) {
  auto g = testing_support::quiet_gateway();
  g->set_all_backends(testing_support::mock(R"([
    {"match": "Owning service: storage", "response": "Disk full on node 7"},
    {"match": "Owning service: empty", "response": "   "},
    {"match": "Owning service: blank", "response": "<ANS_START> <ANS_END>"},
    {"response": "thinking...\n<ANS_START>Cert expired<ANS_END>"}
  ])"));
  const auto prompt = fixture_prompt(1);
  const auto pw_inc = make_incident("A", "t", "s", "x", std::nullopt, "web");
  const auto rec = generate_rca(*g, pw_inc, assemble(PromptMode::kPWDefault, pw_inc, {&prompt, std::nullopt, nullptr}));
  EXPECT_EQ(rec.extracted_root_cause, "Cert expired");
  EXPECT_EQ(rec.mode, PromptMode::kPWDefault);
  EXPECT_FALSE(rec.marker_missing);

  const auto ft = make_incident("B", "t", "s", "x", std::nullopt, "storage");
  EXPECT_EQ(generate_rca(*g, ft, assemble(PromptMode::kFtSLM, ft, {})).extracted_root_cause, "Disk full on node 7");

  const auto empty = make_incident("C", "t", "s", "x", std::nullopt, "empty");
  EXPECT_EQ(code_of([&] { generate_rca(*g, empty, assemble(PromptMode::kFtSLM, empty, {})); }), ErrorCode::kEmptyOutput);
  const auto blank = make_incident("D", "t", "s", "x", std::nullopt, "blank");
  EXPECT_EQ(code_of([&] {
              generate_rca(*g, blank, assemble(PromptMode::kPWDefault, blank, {&prompt, std::nullopt, nullptr}));
            }),
            ErrorCode::kEmptyOutput);
}

TEST(Recommendations, JsonLinesRoundTrip) {
  testing_support::TempDir dir("recs");
  RCARecommendation a{"A", PromptMode::kPWSS, "raw\n<ANS_START>x<ANS_END>", "x", false, false, {0.0, 200}};
  RCARecommendation b{"B", PromptMode::kFtSLM, "y", "y", true, false, {0.3, 50}};
  save_recommendations((dir / "r.jsonl").string(), {a, b});
  const auto back = load_recommendations((dir / "r.jsonl").string());
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].raw_output, a.raw_output);
  EXPECT_EQ(back[1].mode, PromptMode::kFtSLM);
  EXPECT_TRUE(back[1].marker_missing);
  EXPECT_EQ(back[1].params.max_new_tokens, 50);
  EXPECT_EQ(recommendation_to_json_line(recommendation_from_json_line(recommendation_to_json_line(b))),
            recommendation_to_json_line(b));

  testing_support::write_file(dir / "bad.jsonl", recommendation_to_json_line(a) + "\n{oops\n");
  try {
    load_recommendations((dir / "bad.jsonl").string());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}
