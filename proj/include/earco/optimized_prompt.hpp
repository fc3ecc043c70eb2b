#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "earco/templates.hpp"

namespace earco {

inline constexpr std::string_view kAnswerStartMarker = "<ANS_START>";
inline constexpr std::string_view kAnswerEndMarker = "<ANS_END>";

/// Knobs of the instruction/example optimization loop. Defaults follow the
/// configuration used for the RCA task.
struct OptimizationConfig {
  int mutate_refine_iterations = 3;
  int mutation_rounds = 3;
  int refine_task_eg_iterations = 3;
  int questions_batch_size = 5;
  int min_correct_count = 3;
  int few_shot_count = 10;
  int seed_example_count = 25;
  int styles_per_call = 3;
  /// Judge score (1-5) at or above which a training answer counts as correct.
  double score_threshold = 3.0;
  /// Train-score fraction at which instruction tuning stops early.
  double performance_threshold = 1.0;
  int optimizer_call_budget = 100;
  std::uint64_t seed = 42;
  std::size_t scoring_concurrency = 1;
  /// Empty means the built-in catalog.
  std::vector<ThinkingStyle> thinking_styles;

  /// Throws kConfig naming the offending field.
  void validate() const;
  std::vector<ThinkingStyle> effective_thinking_styles() const;
};

/// Missing keys keep their defaults. Throws kConfig on ill-typed values.
OptimizationConfig optimization_config_from_json(const nlohmann::json& j);

enum class Polarity { kPositive, kNegative, kSynthetic };

std::string_view to_string(Polarity polarity);
std::optional<Polarity> parse_polarity(std::string_view text);

struct ICLExample {
  std::string problem;
  std::string answer;
  std::string reasoning;
  Polarity polarity = Polarity::kPositive;
  /// Incident the example came from; empty for synthesized examples.
  std::string source_id;
  /// Set when reasoning generation failed; never persisted.
  bool needs_removal = false;

  bool operator==(const ICLExample&) const = default;
};

struct OptimizedPrompt {
  std::string stage = "final";
  std::string problem_description;
  std::string instruction;
  std::vector<ICLExample> examples;
  std::string task_intent;
  std::string expert_persona;
  std::string answer_format;
  std::vector<std::string> lineage;
  std::vector<std::pair<int, double>> history;
  OptimizationConfig config;

  bool operator==(const OptimizedPrompt& o) const;
};

/// The default answer-format section: asks for the final root cause between
/// the two markers, each appearing exactly once.
std::string default_answer_format();

struct PromptParts {
  std::string problem_description;
  std::string instruction;
  std::vector<ICLExample> examples;
  std::string task_intent;
  std::string expert_persona;
  std::string answer_format = default_answer_format();
};

/// Throws kAssembly when a text part is empty, the example count differs
/// from config.few_shot_count, or the answer format does not hold each
/// marker exactly once.
OptimizedPrompt build_optimized_prompt(PromptParts parts, const OptimizationConfig& config,
                                       std::string stage = "final");

std::string serialize_prompt(const OptimizedPrompt& prompt);
OptimizedPrompt deserialize_prompt(std::string_view text);
void save_prompt(const OptimizedPrompt& prompt, const std::filesystem::path& path);
OptimizedPrompt load_prompt(const std::filesystem::path& path);

}  // namespace earco
