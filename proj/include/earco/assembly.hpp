#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "earco/embedding.hpp"
#include "earco/gateway.hpp"
#include "earco/incident.hpp"
#include "earco/optimized_prompt.hpp"
#include "earco/vector_index.hpp"

namespace earco {

enum class PromptMode {
  kManualSS,
  kPWDefault,
  kPWSS,
  kFtSLM,
  kFtSLMPW,
  kFtSLMPWnoEx,
  kBaseSLMPW,
  kBaseSLMPWnoEx,
  kManualSSBase,
};

inline constexpr PromptMode kAllPromptModes[] = {
    PromptMode::kManualSS,    PromptMode::kPWDefault,   PromptMode::kPWSS,
    PromptMode::kFtSLM,       PromptMode::kFtSLMPW,     PromptMode::kFtSLMPWnoEx,
    PromptMode::kBaseSLMPW,   PromptMode::kBaseSLMPWnoEx, PromptMode::kManualSSBase,
};

std::string_view to_string(PromptMode mode);
/// Case-insensitive; '-', '_' and spaces are ignored ("PW-SS" == "pwss").
std::optional<PromptMode> parse_prompt_mode(std::string_view text);

enum class InstructionSource { kNone, kManual, kOptimized };
enum class ExampleSource { kNone, kRetrieved, kStatic };

struct ModeTraits {
  InstructionSource instruction;
  ExampleSource examples;
  /// The answer-format section accompanies every optimized instruction.
  bool answer_format;
};

ModeTraits mode_traits(PromptMode mode);

struct RetrievedExample {
  Incident incident;
  double distance = 0.0;
};

/// The k nearest historical incidents to `incident`, most similar first. The
/// incident itself is skipped when it is in the index, as are ids missing
/// from `corpus`. Throws kRetrieval on an empty index.
std::vector<RetrievedExample> retrieve_icl_examples(const VectorIndex& index, const Corpus& corpus,
                                                    EmbeddingBackend& embedder,
                                                    const Incident& incident, std::size_t k);

struct ExampleBlock {
  std::string source_id;
  std::string text;

  bool operator==(const ExampleBlock&) const = default;
};

struct GenerationParams {
  double temperature = 0.0;
  int max_new_tokens = 200;
};

struct AssembledPrompt {
  PromptMode mode = PromptMode::kPWSS;
  std::string system_part;
  std::vector<ExampleBlock> example_part;
  std::string incident_part;
  std::string answer_format_part;

  /// Body of the user message: examples, the current incident, then the
  /// answer format.
  std::string user_text() const;
  ChatRequest to_request(const GenerationParams& params) const;

  bool operator==(const AssembledPrompt&) const = default;
};

struct AssemblyInputs {
  const OptimizedPrompt* optimized = nullptr;
  std::optional<std::string> manual_instruction;
  const std::vector<RetrievedExample>* retrieved = nullptr;
};

/// Throws kAssembly when the mode needs a part that `inputs` lacks.
AssembledPrompt assemble(PromptMode mode, const Incident& incident, const AssemblyInputs& inputs);

/// The system text an optimized prompt contributes: persona, task intent,
/// problem description and instruction.
std::string optimized_system_text(const OptimizedPrompt& prompt);

std::string render_retrieved_example(std::size_t position, const Incident& incident);
std::string render_static_example(std::size_t position, const ICLExample& example);

struct ExtractedAnswer {
  std::string text;
  bool marker_missing = false;
  bool malformed = false;
};

/// Text between the first start marker and the next end marker, trimmed.
ExtractedAnswer extract_answer(std::string_view raw);

struct RCARecommendation {
  std::string incident_id;
  PromptMode mode = PromptMode::kPWSS;
  std::string raw_output;
  std::string extracted_root_cause;
  bool marker_missing = false;
  bool malformed = false;
  GenerationParams params;
};

/// Calls the generator and extracts the answer; throws kEmptyOutput when
/// nothing usable comes back.
RCARecommendation generate_rca(Gateway& gateway, const Incident& incident,
                               const AssembledPrompt& assembled,
                               const GenerationParams& params = {});

std::string recommendation_to_json_line(const RCARecommendation& rec);
RCARecommendation recommendation_from_json_line(std::string_view line);
void save_recommendations(const std::string& path, const std::vector<RCARecommendation>& recs);
std::vector<RCARecommendation> load_recommendations(const std::string& path);

}  // namespace earco
