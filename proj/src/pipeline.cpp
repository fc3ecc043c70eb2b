#include "earco/pipeline.hpp"

#include <algorithm>
#include <fstream>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "earco/error.hpp"
#include "earco/parallel.hpp"
#include "earco/templates.hpp"
#include "earco/text_util.hpp"

namespace earco {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

fs::path resolve(const fs::path& base_dir, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
}

void reject_unknown(const json& j, std::initializer_list<std::string_view> known, std::string_view where) {
  for (const auto& [key, _] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw Error(ErrorCode::kConfig, "unknown field '" + std::string(where) + key + "'");
    }
  }
}

RemoteSpec remote_from_json(const json& j) {
  RemoteSpec r;
  r.url = j.value("url", "");
  r.api_key = j.value("api_key", "");
  r.model = j.value("model", "");
  r.timeout_seconds = j.value("timeout_seconds", r.timeout_seconds);
  return r;
}

std::string env_name(std::string_view role) {
  std::string out = "EARCO_";
  for (const char c : role) out.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  return out;
}

void apply_remote_env(RemoteSpec& spec, const std::string& prefix,
                      const std::function<std::optional<std::string>(const std::string&)>& lookup) {
  if (auto v = lookup(prefix + "_URL")) spec.url = *v;
  if (auto v = lookup(prefix + "_KEY")) spec.api_key = *v;
  if (auto v = lookup(prefix + "_MODEL")) spec.model = *v;
}

std::string with_suffix(const fs::path& path, std::string_view suffix) {
  const auto ext = path.extension().string();
  auto stem = path;
  stem.replace_extension();
  return stem.string() + std::string(suffix) + (ext.empty() ? ".jsonl" : ext);
}

}  // namespace

RunConfig::RunConfig()
    : task_description(prompt_template("task_description")),
      seed_instruction(prompt_template("manual_instruction")),
      manual_instruction(prompt_template("manual_instruction")) {}

RunConfig RunConfig::from_json(const json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw Error(ErrorCode::kConfig, "config must be a JSON object");
  reject_unknown(j,
                 {"seed", "concurrency", "retrieval_k", "split", "backend", "mock_script", "cache_dir",
                  "retry", "backends", "embedding", "task_description", "seed_instruction",
                  "manual_instruction", "generation", "optimization"},
                 "");
  RunConfig c;
  try {
    c.seed = j.value("seed", c.seed);
    c.concurrency = j.value("concurrency", c.concurrency);
    c.retrieval_k = j.value("retrieval_k", c.retrieval_k);
    if (auto it = j.find("split"); it != j.end()) {
      reject_unknown(*it, {"train", "validation"}, "split.");
      c.train_fraction = it->value("train", c.train_fraction);
      c.validation_fraction = it->value("validation", c.validation_fraction);
    }
    if (auto it = j.find("backend"); it != j.end()) {
      const auto v = it->get<std::string>();
      if (v != "test" && v != "remote") throw Error(ErrorCode::kConfig, "backend must be \"test\" or \"remote\"");
      c.test_backend = v == "test";
    }
    if (auto it = j.find("mock_script"); it != j.end()) c.mock_script = resolve(base_dir, it->get<std::string>());
    if (auto it = j.find("cache_dir"); it != j.end()) c.cache_dir = resolve(base_dir, it->get<std::string>());
    if (auto it = j.find("retry"); it != j.end()) {
      reject_unknown(*it, {"max_attempts", "initial_backoff_ms", "multiplier"}, "retry.");
      c.retry.max_attempts = it->value("max_attempts", c.retry.max_attempts);
      c.retry.initial_backoff =
          std::chrono::milliseconds(it->value("initial_backoff_ms", c.retry.initial_backoff.count()));
      c.retry.multiplier = it->value("multiplier", c.retry.multiplier);
    }
    if (auto it = j.find("backends"); it != j.end()) {
      for (const auto& [name, spec] : it->items()) {
        const auto role = parse_model_role(name);
        if (!role) throw Error(ErrorCode::kConfig, "unknown field 'backends." + name + "'");
        c.chat[static_cast<std::size_t>(*role)] = remote_from_json(spec);
      }
    }
    if (auto it = j.find("embedding"); it != j.end()) {
      reject_unknown(*it, {"backend", "dim", "url", "api_key", "model", "timeout_seconds"}, "embedding.");
      c.embedding.backend = it->value("backend", c.embedding.backend);
      c.embedding.dim = it->value("dim", c.embedding.dim);
      c.embedding.remote = remote_from_json(*it);
    }
    c.task_description = j.value("task_description", c.task_description);
    c.seed_instruction = j.value("seed_instruction", c.seed_instruction);
    c.manual_instruction = j.value("manual_instruction", c.manual_instruction);
    if (auto it = j.find("generation"); it != j.end()) {
      reject_unknown(*it, {"temperature", "max_new_tokens"}, "generation.");
      c.generation.temperature = it->value("temperature", c.generation.temperature);
      c.generation.max_new_tokens = it->value("max_new_tokens", c.generation.max_new_tokens);
    }
    if (auto it = j.find("optimization"); it != j.end()) {
      reject_unknown(*it,
                     {"mutate_refine_iterations", "mutation_rounds", "refine_task_eg_iterations",
                      "questions_batch_size", "min_correct_count", "few_shot_count", "seed_example_count",
                      "styles_per_call", "score_threshold", "performance_threshold",
                      "optimizer_call_budget", "seed", "thinking_styles", "scoring_concurrency"},
                     "optimization.");
      c.optimization = optimization_config_from_json(*it);
      c.optimization.scoring_concurrency = it->value("scoring_concurrency", c.optimization.scoring_concurrency);
      if (!it->contains("seed")) c.optimization.seed = c.seed;
    } else {
      c.optimization.seed = c.seed;
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfig, e.what());
  }
  return c;
}

RunConfig RunConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kConfig, "cannot open config '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfig, "config '" + path.string() + "': " + e.what());
  }
  return from_json(j, path.parent_path());
}

void RunConfig::apply_environment(const std::function<std::optional<std::string>(const std::string&)>& lookup) {
  for (const auto role : kAllRoles) {
    apply_remote_env(chat[static_cast<std::size_t>(role)], env_name(to_string(role)), lookup);
  }
  apply_remote_env(embedding.remote, "EARCO_EMBEDDING", lookup);
}

void RunConfig::validate() const {
  if (concurrency < 1) throw Error(ErrorCode::kConfig, "concurrency must be >= 1");
  if (retrieval_k < 1) throw Error(ErrorCode::kConfig, "retrieval_k must be >= 1");
  if (!(train_fraction > 0.0 && validation_fraction > 0.0 && train_fraction + validation_fraction < 1.0)) {
    throw Error(ErrorCode::kConfig, "split.train and split.validation must be positive and sum below 1");
  }
  if (retry.max_attempts < 1) throw Error(ErrorCode::kConfig, "retry.max_attempts must be >= 1");
  if (embedding.dim < 1) throw Error(ErrorCode::kConfig, "embedding.dim must be >= 1");
  if (embedding.backend != "test" && embedding.backend != "http") {
    throw Error(ErrorCode::kConfig, "embedding.backend must be \"test\" or \"http\"");
  }
  if (!test_backend && embedding.backend == "http" && embedding.remote.url.empty()) {
    throw Error(ErrorCode::kConfig, "embedding.url is required for the http embedding backend");
  }
  if (!(generation.temperature >= 0.0)) throw Error(ErrorCode::kConfig, "generation.temperature must be >= 0");
  if (generation.max_new_tokens < 1) throw Error(ErrorCode::kConfig, "generation.max_new_tokens must be >= 1");
  if (trim(task_description).empty()) throw Error(ErrorCode::kConfig, "task_description is empty");
  if (trim(seed_instruction).empty()) throw Error(ErrorCode::kConfig, "seed_instruction is empty");
  if (trim(manual_instruction).empty()) throw Error(ErrorCode::kConfig, "manual_instruction is empty");
  optimization.validate();
}

Runtime::Runtime(RunConfig config) : config_(std::move(config)) {
  config_.validate();
  GatewayOptions options;
  options.retry = config_.retry;
  options.cache_enabled = config_.cache_dir.has_value();
  options.cache_dir = config_.cache_dir;
  options.max_in_flight = static_cast<std::ptrdiff_t>(config_.concurrency);
  gateway_ = std::make_unique<Gateway>(options);

  if (config_.test_backend) {
    auto script = config_.mock_script ? MockScript::load(config_.mock_script->string())
                                      : MockScript::from_json_text(prompt_template("default_mock_script.json"));
    gateway_->set_all_backends(std::make_shared<MockBackend>(std::move(script)));
    embedder_ = std::make_unique<HashEmbeddingBackend>(config_.embedding.dim);
    return;
  }
  for (const auto role : kAllRoles) {
    const auto& spec = config_.chat[static_cast<std::size_t>(role)];
    if (spec.url.empty()) continue;
    gateway_->set_backend(role, std::make_shared<HttpChatBackend>(spec.url, spec.api_key, spec.model,
                                                                  spec.timeout_seconds));
  }
  if (config_.embedding.backend == "http") {
    const auto& r = config_.embedding.remote;
    embedder_ = std::make_unique<HttpEmbeddingBackend>(r.url, r.api_key, r.model, config_.embedding.dim,
                                                       r.timeout_seconds);
  } else {
    embedder_ = std::make_unique<HashEmbeddingBackend>(config_.embedding.dim);
  }
}

// ---------------------------------------------------------------------------

IngestPaths ingest_paths(const fs::path& out) {
  return {out, with_suffix(out, ".train"), with_suffix(out, ".validation"), with_suffix(out, ".test"),
          with_suffix(out, ".cleaning")};
}

std::string cleaning_report_line(const CleaningReport& r) {
  nlohmann::ordered_json j;
  j["incident_id"] = r.incident_id;
  j["removed_html_tag_count"] = r.removed_html_tag_count;
  j["removed_stacktrace_block_count"] = r.removed_stacktrace_block_count;
  j["removed_image_ref_count"] = r.removed_image_ref_count;
  j["summary_status"] = to_string(r.summary_status);
  j["root_cause_status"] = to_string(r.root_cause_status);
  j["dropped"] = r.dropped;
  return j.dump();
}

IngestSummary run_ingest(Runtime& rt, const fs::path& in, const fs::path& out, bool summarize) {
  const auto raw = load_corpus(in.string());
  IngestOptions options;
  options.summarize = summarize;
  options.concurrency = rt.config().concurrency;
  IngestSummary s{ingest_corpus(raw, summarize ? &rt.gateway() : nullptr, options), {}};
  s.splits = temporal_split(s.result.corpus, rt.config().train_fraction, rt.config().validation_fraction);

  const auto paths = ingest_paths(out);
  if (paths.corpus.has_parent_path()) fs::create_directories(paths.corpus.parent_path());
  save_corpus(paths.corpus.string(), s.result.corpus);
  save_corpus(paths.train.string(), s.splits.train);
  save_corpus(paths.validation.string(), s.splits.validation);
  save_corpus(paths.test.string(), s.splits.test);
  std::ofstream report(paths.report, std::ios::binary);
  if (!report) throw Error(ErrorCode::kIo, "cannot write '" + paths.report.string() + "'");
  for (const auto& r : s.result.reports) report << cleaning_report_line(r) << '\n';
  return s;
}

VectorIndex build_index(Runtime& rt, const Corpus& corpus) {
  auto& embedder = rt.embedder();
  std::vector<EmbeddingVector> vectors(corpus.size());
  parallel_for(corpus.size(), rt.config().concurrency, [&](std::size_t i) {
    vectors[i] = embedder.embed(incident_query_text(corpus.incidents[i]));
  });
  VectorIndex index(embedder.dim());
  for (std::size_t i = 0; i < corpus.size(); ++i) index.add(corpus.incidents[i].id, vectors[i]);
  return index;
}

fs::path stage_prompt_path(const fs::path& final_prompt, std::string_view stage) {
  const auto ext = final_prompt.extension().string();
  auto stem = final_prompt;
  stem.replace_extension();
  return stem.string() + "." + std::string(stage) + (ext.empty() ? ".json" : ext);
}

OptimizationRun run_optimize(Runtime& rt, const Corpus& train, const VectorIndex* index, const fs::path& out) {
  std::optional<VectorIndex> built;
  if (index == nullptr) {
    built = build_index(rt, train);
    index = &*built;
  }
  const auto& cfg = rt.config();
  auto run = run_optimization(rt.gateway(), *index, train, cfg.optimization, cfg.task_description,
                              cfg.seed_instruction);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  save_prompt(run.final_prompt, out);
  save_prompt(run.after_instruction, stage_prompt_path(out, "after-instruction"));
  save_prompt(run.after_examples, stage_prompt_path(out, "after-examples"));
  return run;
}

void check_infer_inputs(PromptMode mode, const InferInputs& inputs) {
  const auto traits = mode_traits(mode);
  const auto missing = [&](const char* what) {
    return Error(ErrorCode::kConfig, "mode " + std::string(to_string(mode)) + " needs " + what);
  };
  if (traits.examples == ExampleSource::kRetrieved) {
    if (inputs.index == nullptr) throw missing("the index path (--index)");
    if (inputs.history == nullptr) throw missing("the historical corpus path (--corpus)");
  }
  if (traits.instruction == InstructionSource::kOptimized && inputs.prompt == nullptr) {
    throw missing("the optimized prompt path (--prompt)");
  }
}

AssembledPrompt assemble_for(Runtime& rt, PromptMode mode, const Incident& incident, const InferInputs& inputs) {
  check_infer_inputs(mode, inputs);
  std::vector<RetrievedExample> retrieved;
  AssemblyInputs parts;
  parts.optimized = inputs.prompt;
  parts.manual_instruction = rt.config().manual_instruction;
  if (mode_traits(mode).examples == ExampleSource::kRetrieved) {
    retrieved = retrieve_icl_examples(*inputs.index, *inputs.history, rt.embedder(), incident,
                                      inputs.k.value_or(rt.config().retrieval_k));
    parts.retrieved = &retrieved;
  }
  return assemble(mode, incident, parts);
}

std::vector<RCARecommendation> run_infer(Runtime& rt, PromptMode mode, const std::vector<Incident>& queries,
                                         const InferInputs& inputs) {
  check_infer_inputs(mode, inputs);
  std::vector<RCARecommendation> out(queries.size());
  parallel_for(queries.size(), rt.config().concurrency, [&](std::size_t i) {
    const auto assembled = assemble_for(rt, mode, queries[i], inputs);
    out[i] = generate_rca(rt.gateway(), queries[i], assembled, rt.config().generation);
  });
  return out;
}

std::vector<Incident> resolve_queries(const std::string& incident_arg, const Corpus* corpus) {
  if (fs::is_regular_file(incident_arg)) return load_corpus(incident_arg).incidents;
  if (corpus == nullptr) {
    throw Error(ErrorCode::kConfig, "'" + incident_arg + "' is not a file; looking up an id needs --corpus");
  }
  const auto* inc = corpus->find(incident_arg);
  if (inc == nullptr) throw Error(ErrorCode::kLookup, "incident '" + incident_arg + "' not in the corpus");
  return {*inc};
}

void write_report_files(const EvaluationReport& report, const fs::path& out, std::string_view first_header) {
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  save_report(out.string(), report);
  auto table_path = out;
  table_path.replace_extension(".txt");
  std::ofstream table(table_path, std::ios::binary);
  if (!table) throw Error(ErrorCode::kIo, "cannot write '" + table_path.string() + "'");
  table << render_report_table(report, first_header);
}

EvaluationOutputs run_evaluate(Runtime& rt, const std::vector<RCARecommendation>& recs,
                               const Corpus& ground_truth, const fs::path& out, std::string_view first_header) {
  EvaluationOutputs o;
  o.batch = evaluate_recommendations(rt.gateway(), recs, ground_truth, rt.config().concurrency);
  for (const auto& id : o.batch.skipped) spdlog::warn("incident {} has no ground truth, not judged", id);
  o.report = aggregate(o.batch.records);
  write_report_files(o.report, out, first_header);
  auto records_path = out;
  records_path.replace_extension(".records.jsonl");
  save_records(records_path.string(), o.batch.records);
  return o;
}

EvaluationReport run_ablate_examples(Runtime& rt, const OptimizedPrompt& prompt, const VectorIndex& index,
                                     const Corpus& history, const std::vector<Incident>& queries,
                                     const Corpus& ground_truth, const std::vector<std::size_t>& counts) {
  std::vector<EvaluationRecord> records;
  for (const auto count : counts) {
    InferInputs inputs{&prompt, &index, &history, count};
    const auto recs = run_infer(rt, PromptMode::kPWSS, queries, inputs);
    auto batch = evaluate_recommendations(rt.gateway(), recs, ground_truth, rt.config().concurrency,
                                          std::to_string(count));
    spdlog::info("{} examples: {} records judged", count, batch.records.size());
    records.insert(records.end(), batch.records.begin(), batch.records.end());
  }
  return aggregate(records);
}

std::vector<std::pair<std::string, OptimizedPrompt>> load_stage_prompts(const fs::path& final_prompt,
                                                                        const std::string& seed_instruction) {
  const auto load = [](const fs::path& p, std::string_view stage) {
    if (!fs::is_regular_file(p)) {
      throw Error(ErrorCode::kStageAblation,
                  "missing " + std::string(stage) + " prompt '" + p.string() + "'; rerun optimize");
    }
    return load_prompt(p);
  };
  auto final = load(final_prompt, "final");
  std::vector<std::pair<std::string, OptimizedPrompt>> out;
  out.emplace_back("base", base_stage_prompt(final, seed_instruction));
  out.emplace_back("after-instruction", load(stage_prompt_path(final_prompt, "after-instruction"), "after-instruction"));
  out.emplace_back("after-examples", load(stage_prompt_path(final_prompt, "after-examples"), "after-examples"));
  out.emplace_back("final", std::move(final));
  return out;
}

EvaluationReport run_ablate_stages(Runtime& rt, const std::vector<std::pair<std::string, OptimizedPrompt>>& stages,
                                   const VectorIndex& index, const Corpus& history,
                                   const std::vector<Incident>& queries, const Corpus& ground_truth) {
  std::vector<EvaluationRecord> records;
  for (const auto& [label, prompt] : stages) {
    InferInputs inputs{&prompt, &index, &history, std::nullopt};
    const auto recs = run_infer(rt, PromptMode::kPWSS, queries, inputs);
    auto batch = evaluate_recommendations(rt.gateway(), recs, ground_truth, rt.config().concurrency, label);
    records.insert(records.end(), batch.records.begin(), batch.records.end());
  }
  return aggregate(records);
}

}  // namespace earco
