#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "earco/gateway.hpp"
#include "earco/incident.hpp"
#include "earco/optimized_prompt.hpp"
#include "earco/vector_index.hpp"

namespace earco {

struct PromptCandidate {
  std::string instruction;
  /// Origin tags, oldest first: "mutate:<style>", "synthesize".
  std::vector<std::string> lineage;
  std::optional<double> train_score;

  bool operator==(const PromptCandidate&) const = default;
};

struct Critique {
  std::string strengths;
  std::string weaknesses;
  std::string suggested_edits;
  /// False when the reply had no recognizable sections and went wholly
  /// into `weaknesses`.
  bool sectioned = false;
};

/// Items of a "1. ..." / "2) ..." list; unnumbered lines continue the
/// previous item. Throws kMutationParse when there is no numbered item.
std::vector<std::string> parse_enumerated_list(std::string_view text);

/// Reads "STRENGTHS:", "WEAKNESSES:" and "SUGGESTED EDITS:" sections.
Critique parse_critique(std::string_view reply);

struct MutationResult {
  std::vector<PromptCandidate> candidates;
  int skipped_rounds = 0;
};

struct ScoredExample {
  const ICLExample* example = nullptr;
  std::string generated;
  int judge_score = 1;
};

struct CandidateScore {
  double score = 0.0;
  std::size_t evaluated = 0;
  std::size_t correct = 0;
  std::size_t batches_passed = 0;
  bool short_circuited = false;
  /// Evaluated examples judged below the threshold, in evaluation order.
  std::vector<ScoredExample> failures;
};

/// Scores an instruction on training examples. Examples are taken in
/// batches of questions_batch_size; an example is correct when its judge
/// score reaches score_threshold and a batch passes when all of its examples
/// are correct. Evaluation stops with score 0 as soon as min_correct_count
/// passing batches are out of reach; otherwise the score is the fraction of
/// correct examples.
CandidateScore score_candidate(Gateway& gateway, std::string_view instruction,
                               const std::vector<ICLExample>& train_examples,
                               const OptimizationConfig& config,
                               std::string_view answer_format = default_answer_format());

/// Judge score of every example, no short-circuit.
std::vector<int> judge_all(Gateway& gateway, std::string_view instruction,
                           const std::vector<ICLExample>& examples,
                           const OptimizationConfig& config,
                           std::string_view answer_format = default_answer_format());

/// Order of `n` points picked by farthest-point sampling from `start`:
/// each step takes the point whose nearest picked point is farthest away,
/// lowest position on ties.
std::vector<std::size_t> farthest_point_order(const std::vector<EmbeddingVector>& points,
                                              std::size_t n, std::size_t start);

/// `n` diverse training incidents with a root cause, as positive examples.
/// Eligible incidents are those with a root cause that are in `index`, in
/// corpus order; the start point is mt19937_64(seed)() modulo their count.
/// Throws kInsufficientData when fewer than n are eligible.
std::vector<ICLExample> select_seed_examples(const VectorIndex& index, const Corpus& train,
                                             std::size_t n, std::uint64_t seed);

/// Deterministic Fisher-Yates shuffle driven by mt19937_64(seed).
template <class T>
void seeded_shuffle(std::vector<T>& items, std::uint64_t seed);

struct InstructionResult {
  PromptCandidate best;
  std::vector<std::pair<int, double>> history;
  int skipped_iterations = 0;
};

struct ExampleResult {
  std::string instruction;
  std::vector<ICLExample> examples;
  bool instruction_changed = false;
};

/// Instruction and example tuning stages. Every optimizer-role call goes
/// through this object so the call budget is enforced (kOptimization once
/// exhausted).
class Optimizer {
 public:
  Optimizer(Gateway& gateway, OptimizationConfig config, std::string task_description);

  const OptimizationConfig& config() const { return config_; }
  std::size_t optimizer_calls() const;

  /// `rounds` calls, each asking for styles_per_call variants of `base`.
  /// Round r of a call with `style_offset` uses styles
  /// (style_offset + r * styles_per_call + j) mod catalog size.
  MutationResult mutate(const PromptCandidate& base, const std::vector<ThinkingStyle>& styles,
                        int rounds, std::size_t style_offset = 0);

  Critique critique(const PromptCandidate& best, const std::vector<ScoredExample>& failures);
  /// Throws kSynthesize when the critique or the reply is empty.
  PromptCandidate synthesize(const PromptCandidate& candidate, const Critique& critique);

  /// Throws kOptimization when every iteration was skipped.
  InstructionResult optimize_instruction(const std::string& seed_instruction,
                                         const std::vector<ICLExample>& train_examples);

  ExampleResult optimize_examples(const std::string& instruction,
                                  const std::vector<ICLExample>& seed_examples,
                                  const std::vector<ICLExample>& train_examples);

  std::vector<ICLExample> add_reasoning(std::vector<ICLExample> examples);
  /// Throws kValidation when nothing survives.
  std::vector<ICLExample> validate_examples(const std::vector<ICLExample>& examples);

  std::pair<std::string, std::string> generate_intent_persona();

 private:
  std::string ask(const std::string& prompt, double temperature = 0.0);

  Gateway& gateway_;
  OptimizationConfig config_;
  std::string task_description_;
  std::size_t calls_at_start_;
};

/// Parses the example-synthesis reply: an optional "INSTRUCTION:" block
/// followed by "EXAMPLE:" blocks with "PROBLEM:" and "ANSWER:" fields.
struct ExampleSetReply {
  std::string instruction;
  std::vector<std::pair<std::string, std::string>> examples;
};
ExampleSetReply parse_example_set(std::string_view reply);

struct OptimizationRun {
  OptimizedPrompt after_instruction;
  OptimizedPrompt after_examples;
  OptimizedPrompt final_prompt;
  std::size_t optimizer_calls = 0;
};

/// Seed selection, instruction tuning, example tuning, reasoning,
/// validation and intent/persona, producing the three persisted stages.
OptimizationRun run_optimization(Gateway& gateway, const VectorIndex& index, const Corpus& train,
                                 const OptimizationConfig& config,
                                 const std::string& task_description,
                                 const std::string& seed_instruction);

/// Prompt for the "base" ablation stage: `seed_instruction` with the
/// default intent and persona and the examples of `reference`.
OptimizedPrompt base_stage_prompt(const OptimizedPrompt& reference,
                                  const std::string& seed_instruction);

// ---------------------------------------------------------------------------

template <class T>
void seeded_shuffle(std::vector<T>& items, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (std::size_t i = items.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng() % i);
    std::swap(items[i - 1], items[j]);
  }
}

}  // namespace earco
