#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "earco/assembly.hpp"
#include "earco/embedding.hpp"
#include "earco/evaluation.hpp"
#include "earco/gateway.hpp"
#include "earco/incident.hpp"
#include "earco/ingest.hpp"
#include "earco/optimizer.hpp"
#include "earco/vector_index.hpp"

namespace earco {

struct RemoteSpec {
  std::string url;
  std::string api_key;
  std::string model;
  int timeout_seconds = 120;
};

struct EmbeddingSpec {
  /// "test" (hashed trigrams) or "http".
  std::string backend = "test";
  std::size_t dim = 64;
  RemoteSpec remote;
};

struct RunConfig {
  std::uint64_t seed = 42;
  std::size_t concurrency = 4;
  std::size_t retrieval_k = 10;
  double train_fraction = 0.8;
  double validation_fraction = 0.1;

  /// Mock chat backend and hash embeddings for every role.
  bool test_backend = false;
  /// Script for the mock backend; the built-in one when unset.
  std::optional<std::filesystem::path> mock_script;
  std::optional<std::filesystem::path> cache_dir;
  RetryPolicy retry;

  std::array<RemoteSpec, 4> chat;  // indexed by ModelRole
  EmbeddingSpec embedding;

  std::string task_description;
  /// Starting point of instruction tuning and the "base" ablation stage.
  std::string seed_instruction;
  /// Instruction of the ManualSS modes.
  std::string manual_instruction;
  GenerationParams generation;
  OptimizationConfig optimization;

  /// Built-in defaults.
  RunConfig();

  /// Relative paths inside the file resolve against `base_dir`.
  static RunConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
  static RunConfig load(const std::filesystem::path& path);

  /// EARCO_<ROLE>_URL, _KEY and _MODEL for OPTIMIZER, GENERATOR, SUMMARIZER,
  /// JUDGE and EMBEDDING.
  void apply_environment(const std::function<std::optional<std::string>(const std::string&)>& lookup);

  /// Throws kConfig naming the offending field.
  void validate() const;
};

/// Backends built from a RunConfig.
class Runtime {
 public:
  explicit Runtime(RunConfig config);

  const RunConfig& config() const { return config_; }
  Gateway& gateway() { return *gateway_; }
  EmbeddingBackend& embedder() { return *embedder_; }

 private:
  RunConfig config_;
  std::unique_ptr<Gateway> gateway_;
  std::unique_ptr<EmbeddingBackend> embedder_;
};

/// Split files written next to an ingested corpus: "x.jsonl" gives
/// "x.train.jsonl", "x.validation.jsonl", "x.test.jsonl" and the cleaning
/// report "x.cleaning.jsonl".
struct IngestPaths {
  std::filesystem::path corpus;
  std::filesystem::path train;
  std::filesystem::path validation;
  std::filesystem::path test;
  std::filesystem::path report;
};
IngestPaths ingest_paths(const std::filesystem::path& out);

struct IngestSummary {
  IngestResult result;
  SplitCorpora splits;
};

/// Cleans (and optionally summarizes) the raw corpus, splits it, and writes
/// every file of ingest_paths(out).
IngestSummary run_ingest(Runtime& rt, const std::filesystem::path& in, const std::filesystem::path& out,
                         bool summarize);

std::string cleaning_report_line(const CleaningReport& report);

VectorIndex build_index(Runtime& rt, const Corpus& corpus);

/// "p.json" with stage "after-instruction" gives "p.after-instruction.json".
std::filesystem::path stage_prompt_path(const std::filesystem::path& final_prompt, std::string_view stage);

/// Runs the optimizer on `train`. Embeddings come from `index` when given,
/// otherwise they are computed. Writes the final prompt to `out` and the
/// intermediate stages beside it.
OptimizationRun run_optimize(Runtime& rt, const Corpus& train, const VectorIndex* index,
                             const std::filesystem::path& out);

struct InferInputs {
  const OptimizedPrompt* prompt = nullptr;
  const VectorIndex* index = nullptr;
  const Corpus* history = nullptr;
  std::optional<std::size_t> k;  // defaults to retrieval_k
};

/// Throws kConfig naming the first path the mode needs but `inputs` lacks.
void check_infer_inputs(PromptMode mode, const InferInputs& inputs);

/// Assembled prompt for one incident, including retrieval when the mode
/// uses similar examples.
AssembledPrompt assemble_for(Runtime& rt, PromptMode mode, const Incident& incident,
                             const InferInputs& inputs);

/// Recommendations for every query, in query order.
std::vector<RCARecommendation> run_infer(Runtime& rt, PromptMode mode, const std::vector<Incident>& queries,
                                         const InferInputs& inputs);

/// Queries named by --incident: every incident of a corpus file, or the
/// incident with that id in `corpus`.
std::vector<Incident> resolve_queries(const std::string& incident_arg, const Corpus* corpus);

struct EvaluationOutputs {
  EvaluationBatch batch;
  EvaluationReport report;
};

/// Judges, aggregates and writes the report JSON, "<stem>.txt" table and
/// "<stem>.records.jsonl" next to `out`.
EvaluationOutputs run_evaluate(Runtime& rt, const std::vector<RCARecommendation>& recs,
                               const Corpus& ground_truth, const std::filesystem::path& out,
                               std::string_view first_header = "Experiment");

void write_report_files(const EvaluationReport& report, const std::filesystem::path& out,
                        std::string_view first_header);

inline const std::vector<std::size_t> kDefaultAblationCounts{0, 3, 5, 7, 10};

/// PWSS inference and evaluation per example count; one row per count.
EvaluationReport run_ablate_examples(Runtime& rt, const OptimizedPrompt& prompt, const VectorIndex& index,
                                     const Corpus& history, const std::vector<Incident>& queries,
                                     const Corpus& ground_truth, const std::vector<std::size_t>& counts);

inline const std::vector<std::string> kAblationStages{"base", "after-instruction", "after-examples", "final"};

/// Loads the persisted stages next to `final_prompt` and derives "base" from
/// the seed instruction. Throws kStageAblation when a stage file is missing.
std::vector<std::pair<std::string, OptimizedPrompt>> load_stage_prompts(
    const std::filesystem::path& final_prompt, const std::string& seed_instruction);

/// PWSS inference and evaluation per stage prompt; one row per stage.
EvaluationReport run_ablate_stages(Runtime& rt,
                                   const std::vector<std::pair<std::string, OptimizedPrompt>>& stages,
                                   const VectorIndex& index, const Corpus& history,
                                   const std::vector<Incident>& queries, const Corpus& ground_truth);

}  // namespace earco
