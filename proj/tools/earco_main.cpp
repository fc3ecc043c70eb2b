// earco: incident root-cause recommendation pipeline.
#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "earco/error.hpp"
#include "earco/pipeline.hpp"

namespace fs = std::filesystem;
using namespace earco;

namespace {

struct CommonOptions {
  std::string config;
  std::string backend;
  std::string mock_script;
  std::string cache_dir;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> concurrency;
  std::string log_level = "info";
};

Runtime make_runtime(const CommonOptions& o, bool embedding_command) {
  RunConfig cfg = o.config.empty() ? RunConfig{} : RunConfig::load(o.config);
  cfg.apply_environment([](const std::string& name) -> std::optional<std::string> {
    const char* v = std::getenv(name.c_str());
    return v == nullptr ? std::nullopt : std::optional<std::string>(v);
  });
  if (o.backend == "test") {
    cfg.test_backend = true;
  } else if (!o.backend.empty()) {
    // A URL names the embedding endpoint for build-index and the chat
    // endpoint of every role elsewhere.
    if (embedding_command) {
      cfg.embedding.backend = "http";
      cfg.embedding.remote.url = o.backend;
    } else {
      for (auto& spec : cfg.chat) spec.url = o.backend;
    }
    cfg.test_backend = false;
  }
  if (!o.mock_script.empty()) {
    cfg.mock_script = o.mock_script;
    cfg.test_backend = true;
  }
  if (!o.cache_dir.empty()) cfg.cache_dir = o.cache_dir;
  if (o.seed) {
    cfg.seed = *o.seed;
    cfg.optimization.seed = *o.seed;
  }
  if (o.concurrency) cfg.concurrency = *o.concurrency;
  return Runtime(std::move(cfg));
}

void log_gateway(Runtime& rt) {
  auto& g = rt.gateway();
  for (const auto role : kAllRoles) {
    spdlog::debug("{} requests: {} ({} backend calls)", to_string(role), g.requests(role), g.backend_calls(role));
  }
  spdlog::debug("cache hits: {}, network calls: {}", g.cache_hits(), g.network_calls());
}

PromptMode mode_or_throw(const std::string& name) {
  const auto mode = parse_prompt_mode(name);
  if (!mode) throw Error(ErrorCode::kConfig, "unknown mode '" + name + "'");
  return *mode;
}

std::optional<Corpus> maybe_corpus(const std::string& path) {
  if (path.empty()) return std::nullopt;
  return load_corpus(path);
}

std::optional<VectorIndex> maybe_index(const std::string& path) {
  if (path.empty()) return std::nullopt;
  return load_index(path);
}

std::optional<OptimizedPrompt> maybe_prompt(const std::string& path) {
  if (path.empty()) return std::nullopt;
  return load_prompt(path);
}

template <class T>
const T* ptr(const std::optional<T>& v) {
  return v ? &*v : nullptr;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Incident root-cause recommendation with optimized prompts and retrieved examples", "earco"};
  app.require_subcommand(1);
  app.fallthrough();

  CommonOptions common;
  app.add_option("--config", common.config, "Run configuration (JSON)");
  app.add_option("--backend", common.backend, "\"test\" for the offline mock/hash backends, or an endpoint URL");
  app.add_option("--mock-script", common.mock_script, "Mock backend script; implies --backend test");
  app.add_option("--cache-dir", common.cache_dir, "Persist chat responses in this directory");
  app.add_option("--seed", common.seed, "Random seed (default 42)");
  app.add_option("--concurrency", common.concurrency, "Bound on parallel gateway calls (default 4)");
  app.add_option("--log-level", common.log_level, "trace, debug, info, warn, error or off");

  // ingest
  std::string ingest_in;
  std::string ingest_out;
  bool summarize = false;
  auto* ingest = app.add_subcommand("ingest", "Clean, optionally summarize, and split a raw corpus");
  ingest->add_option("--in", ingest_in, "Raw corpus (JSONL)")->required();
  ingest->add_option("--out", ingest_out, "Cleaned corpus; splits and report are written beside it")->required();
  ingest->add_flag("--summarize", summarize, "Condense summaries and root causes with the summarizer model");

  // build-index
  std::string index_corpus;
  std::string index_out;
  auto* build = app.add_subcommand("build-index", "Embed a corpus into an exact L2 index");
  build->add_option("--corpus", index_corpus, "Corpus to index")->required();
  build->add_option("--out", index_out, "Index file")->required();

  // optimize
  std::string opt_corpus;
  std::string opt_index;
  std::string opt_out;
  auto* optimize = app.add_subcommand("optimize", "Optimize the instruction and examples on a training corpus");
  optimize->add_option("--corpus", opt_corpus, "Training corpus")->required();
  optimize->add_option("--index", opt_index, "Index holding the training incidents (computed when absent)");
  optimize->add_option("--out", opt_out, "Optimized prompt artifact")->required();

  // infer
  std::string infer_mode;
  std::string infer_incident;
  std::string infer_prompt;
  std::string infer_index;
  std::string infer_corpus;
  std::string infer_out;
  std::optional<std::size_t> infer_k;
  auto* infer = app.add_subcommand("infer", "Recommend root causes for incidents");
  infer->add_option("--mode", infer_mode, "Prompt strategy, e.g. PWSS, ManualSS, FtSLM")->required();
  infer->add_option("--incident", infer_incident, "Incident id in --corpus, or a corpus file of queries")->required();
  infer->add_option("--prompt", infer_prompt, "Optimized prompt artifact");
  infer->add_option("--index", infer_index, "Index of historical incidents");
  infer->add_option("--corpus", infer_corpus, "Historical corpus behind the index");
  infer->add_option("--out", infer_out, "Results file (JSONL)")->required();
  infer->add_option("--k", infer_k, "Number of similar incidents (default retrieval_k)");

  // evaluate
  std::string eval_results;
  std::string eval_corpus;
  std::string eval_out;
  auto* evaluate = app.add_subcommand("evaluate", "Judge results against ground truth and aggregate");
  evaluate->add_option("--results", eval_results, "Results file from infer")->required();
  evaluate->add_option("--corpus", eval_corpus, "Corpus with ground-truth root causes")->required();
  evaluate->add_option("--out", eval_out, "Report (JSON); the table goes to the .txt sibling")->required();

  // report
  std::string report_path;
  std::vector<std::string> compare;
  auto* report = app.add_subcommand("report", "Print a report and compare two modes");
  report->add_option("--report", report_path, "Report file from evaluate")->required();
  report->add_option("--compare", compare, "Baseline and candidate mode")->expected(2);

  // ablate-examples
  std::string abl_prompt;
  std::string abl_index;
  std::string abl_corpus;
  std::string abl_incident;
  std::string abl_out;
  std::vector<std::size_t> counts = kDefaultAblationCounts;
  auto* ablate_examples = app.add_subcommand("ablate-examples", "PWSS with 0, 3, 5, 7 and 10 similar examples");
  auto* ablate_stages = app.add_subcommand("ablate-stages", "PWSS with each persisted optimization stage");
  for (auto* sub : {ablate_examples, ablate_stages}) {
    sub->add_option("--prompt", abl_prompt, "Final optimized prompt artifact")->required();
    sub->add_option("--index", abl_index, "Index of historical incidents")->required();
    sub->add_option("--corpus", abl_corpus, "Historical corpus behind the index")->required();
    sub->add_option("--incident", abl_incident, "Corpus file of queries with ground truth")->required();
    sub->add_option("--out", abl_out, "Report (JSON)")->required();
  }
  ablate_examples->add_option("--counts", counts, "Example counts")->delimiter(',');

  CLI11_PARSE(app, argc, argv);

  auto logger = spdlog::stderr_color_mt("earco");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::from_str(common.log_level));

  try {
    auto rt = make_runtime(common, build->parsed());

    if (ingest->parsed()) {
      const auto s = run_ingest(rt, ingest_in, ingest_out, summarize);
      std::size_t dropped = 0;
      for (const auto& r : s.result.reports) dropped += r.dropped ? 1 : 0;
      fmt::print("ingested {} incidents ({} dropped as noisy): train {}, validation {}, test {}\n",
                 s.result.corpus.size(), dropped, s.splits.train.size(), s.splits.validation.size(),
                 s.splits.test.size());
    } else if (build->parsed()) {
      const auto index = build_index(rt, load_corpus(index_corpus));
      save_index(index, index_out);
      fmt::print("indexed {} incidents (dim {})\n", index.size(), index.dim());
    } else if (optimize->parsed()) {
      const auto index = maybe_index(opt_index);
      const auto run = run_optimize(rt, load_corpus(opt_corpus), ptr(index), opt_out);
      fmt::print("optimized prompt written to {} ({} optimizer calls, best train score {:.3f})\n", opt_out,
                 run.optimizer_calls, run.final_prompt.history.empty() ? 0.0 : run.final_prompt.history.back().second);
    } else if (infer->parsed()) {
      const auto mode = mode_or_throw(infer_mode);
      const auto prompt = maybe_prompt(infer_prompt);
      const auto index = maybe_index(infer_index);
      const auto corpus = maybe_corpus(infer_corpus);
      InferInputs inputs{ptr(prompt), ptr(index), ptr(corpus), infer_k};
      check_infer_inputs(mode, inputs);
      const auto queries = resolve_queries(infer_incident, ptr(corpus));
      const auto recs = run_infer(rt, mode, queries, inputs);
      save_recommendations(infer_out, recs);
      fmt::print("{} recommendations written to {}\n", recs.size(), infer_out);
    } else if (evaluate->parsed()) {
      const auto out = run_evaluate(rt, load_recommendations(eval_results), load_corpus(eval_corpus), eval_out);
      fmt::print("{}", render_report_table(out.report));
    } else if (report->parsed()) {
      const auto rep = load_report(report_path);
      fmt::print("{}", render_report_table(rep));
      if (compare.size() == 2) {
        const auto cmp = compare_modes(rep, compare[0], compare[1]);
        fmt::print("\n{} vs {}: complete {}, filtered {}\n", compare[1], compare[0],
                   format_percent(cmp.complete_percent),
                   cmp.filtered_percent ? format_percent(*cmp.filtered_percent) : std::string("n/a"));
      }
    } else if (ablate_examples->parsed() || ablate_stages->parsed()) {
      const auto index = load_index(abl_index);
      const auto history = load_corpus(abl_corpus);
      const auto queries = load_corpus(abl_incident);
      EvaluationReport rep;
      std::string header;
      if (ablate_examples->parsed()) {
        rep = run_ablate_examples(rt, load_prompt(abl_prompt), index, history, queries.incidents, queries, counts);
        header = "ICL examples";
      } else {
        const auto stages = load_stage_prompts(abl_prompt, rt.config().seed_instruction);
        rep = run_ablate_stages(rt, stages, index, history, queries.incidents, queries);
        header = "Stage";
      }
      write_report_files(rep, abl_out, header);
      fmt::print("{}", render_report_table(rep, header));
    }
    log_gateway(rt);
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return 1;
  } catch (const std::exception& e) {
    spdlog::error("unexpected failure: {}", e.what());
    return 1;
  }
  return 0;
}
