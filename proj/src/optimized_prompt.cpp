#include "earco/optimized_prompt.hpp"

#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "earco/error.hpp"
#include "earco/text_util.hpp"

namespace earco {

using json = nlohmann::ordered_json;

namespace {
constexpr int kFormatVersion = 1;
constexpr std::string_view kFormatName = "earco-optimized-prompt";

std::size_t count_occurrences(std::string_view haystack, std::string_view needle) {
  std::size_t n = 0;
  for (auto pos = haystack.find(needle); pos != std::string_view::npos;
       pos = haystack.find(needle, pos + needle.size())) {
    ++n;
  }
  return n;
}
}  // namespace

void OptimizationConfig::validate() const {
  const auto positive = [](int v, const char* name) {
    if (v < 1) throw Error(ErrorCode::kConfig, std::string(name) + " must be >= 1");
  };
  positive(mutate_refine_iterations, "mutate_refine_iterations");
  positive(mutation_rounds, "mutation_rounds");
  positive(refine_task_eg_iterations, "refine_task_eg_iterations");
  positive(questions_batch_size, "questions_batch_size");
  positive(min_correct_count, "min_correct_count");
  positive(few_shot_count, "few_shot_count");
  positive(seed_example_count, "seed_example_count");
  positive(styles_per_call, "styles_per_call");
  positive(optimizer_call_budget, "optimizer_call_budget");
  if (few_shot_count > seed_example_count) {
    throw Error(ErrorCode::kConfig, "few_shot_count must not exceed seed_example_count");
  }
  const int batches = (seed_example_count + questions_batch_size - 1) / questions_batch_size;
  if (min_correct_count > batches) {
    throw Error(ErrorCode::kConfig,
                "min_correct_count exceeds the number of scored batches (" +
                    std::to_string(batches) + ")");
  }
  if (!(score_threshold >= 1.0 && score_threshold <= 5.0)) {
    throw Error(ErrorCode::kConfig, "score_threshold must lie in [1, 5]");
  }
  if (!(performance_threshold >= 0.0 && performance_threshold <= 1.0)) {
    throw Error(ErrorCode::kConfig, "performance_threshold must lie in [0, 1]");
  }
}

std::vector<ThinkingStyle> OptimizationConfig::effective_thinking_styles() const {
  return thinking_styles.empty() ? builtin_thinking_styles() : thinking_styles;
}

std::string_view to_string(Polarity polarity) {
  switch (polarity) {
    case Polarity::kPositive:
      return "positive";
    case Polarity::kNegative:
      return "negative";
    case Polarity::kSynthetic:
      return "synthetic";
  }
  return "unknown";
}

std::optional<Polarity> parse_polarity(std::string_view text) {
  for (const auto p : {Polarity::kPositive, Polarity::kNegative, Polarity::kSynthetic}) {
    if (to_string(p) == text) return p;
  }
  return std::nullopt;
}

bool OptimizedPrompt::operator==(const OptimizedPrompt& o) const {
  return serialize_prompt(*this) == serialize_prompt(o);
}

std::string default_answer_format() { return std::string(prompt_template("answer_format")); }

OptimizedPrompt build_optimized_prompt(PromptParts parts, const OptimizationConfig& config,
                                       std::string stage) {
  const auto require = [](const std::string& v, const char* name) {
    if (trim(v).empty()) throw Error(ErrorCode::kAssembly, std::string("missing prompt part: ") + name);
  };
  require(parts.problem_description, "problem_description");
  require(parts.instruction, "instruction");
  require(parts.task_intent, "task_intent");
  require(parts.expert_persona, "expert_persona");
  require(parts.answer_format, "answer_format");
  if (parts.examples.size() != static_cast<std::size_t>(config.few_shot_count)) {
    throw Error(ErrorCode::kAssembly, "prompt has " + std::to_string(parts.examples.size()) +
                                          " examples, few_shot_count is " +
                                          std::to_string(config.few_shot_count));
  }
  for (const auto& ex : parts.examples) {
    if (trim(ex.problem).empty() || trim(ex.answer).empty()) {
      throw Error(ErrorCode::kAssembly, "example with empty problem or answer");
    }
  }
  if (count_occurrences(parts.answer_format, kAnswerStartMarker) != 1 ||
      count_occurrences(parts.answer_format, kAnswerEndMarker) != 1) {
    throw Error(ErrorCode::kAssembly, "answer format must contain each answer marker exactly once");
  }

  OptimizedPrompt prompt;
  prompt.stage = std::move(stage);
  prompt.problem_description = std::move(parts.problem_description);
  prompt.instruction = std::move(parts.instruction);
  prompt.examples = std::move(parts.examples);
  for (auto& ex : prompt.examples) ex.needs_removal = false;
  prompt.task_intent = std::move(parts.task_intent);
  prompt.expert_persona = std::move(parts.expert_persona);
  prompt.answer_format = std::move(parts.answer_format);
  prompt.config = config;
  return prompt;
}

namespace {

json config_to_json(const OptimizationConfig& c) {
  json j;
  j["mutate_refine_iterations"] = c.mutate_refine_iterations;
  j["mutation_rounds"] = c.mutation_rounds;
  j["refine_task_eg_iterations"] = c.refine_task_eg_iterations;
  j["questions_batch_size"] = c.questions_batch_size;
  j["min_correct_count"] = c.min_correct_count;
  j["few_shot_count"] = c.few_shot_count;
  j["seed_example_count"] = c.seed_example_count;
  j["styles_per_call"] = c.styles_per_call;
  j["score_threshold"] = c.score_threshold;
  j["performance_threshold"] = c.performance_threshold;
  j["optimizer_call_budget"] = c.optimizer_call_budget;
  j["seed"] = c.seed;
  j["thinking_styles"] = json::array();
  for (const auto& s : c.effective_thinking_styles()) {
    j["thinking_styles"].push_back({{"name", s.name}, {"description", s.description}});
  }
  return j;
}

template <class Json>
OptimizationConfig config_from_json(const Json& j) {
  OptimizationConfig c;
  c.mutate_refine_iterations = j.value("mutate_refine_iterations", c.mutate_refine_iterations);
  c.mutation_rounds = j.value("mutation_rounds", c.mutation_rounds);
  c.refine_task_eg_iterations = j.value("refine_task_eg_iterations", c.refine_task_eg_iterations);
  c.questions_batch_size = j.value("questions_batch_size", c.questions_batch_size);
  c.min_correct_count = j.value("min_correct_count", c.min_correct_count);
  c.few_shot_count = j.value("few_shot_count", c.few_shot_count);
  c.seed_example_count = j.value("seed_example_count", c.seed_example_count);
  c.styles_per_call = j.value("styles_per_call", c.styles_per_call);
  c.score_threshold = j.value("score_threshold", c.score_threshold);
  c.performance_threshold = j.value("performance_threshold", c.performance_threshold);
  c.optimizer_call_budget = j.value("optimizer_call_budget", c.optimizer_call_budget);
  c.seed = j.value("seed", c.seed);
  if (auto it = j.find("thinking_styles"); it != j.end()) {
    for (const auto& s : *it) {
      c.thinking_styles.push_back({s.at("name").template get<std::string>(),
                                   s.at("description").template get<std::string>()});
    }
  }
  return c;
}

}  // namespace

OptimizationConfig optimization_config_from_json(const nlohmann::json& j) {
  try {
    return config_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kConfig, std::string("optimization settings: ") + e.what());
  }
}

std::string serialize_prompt(const OptimizedPrompt& p) {
  json j;
  j["format"] = kFormatName;
  j["version"] = kFormatVersion;
  j["stage"] = p.stage;
  j["problem_description"] = p.problem_description;
  j["instruction"] = p.instruction;
  j["examples"] = json::array();
  for (const auto& ex : p.examples) {
    j["examples"].push_back({{"problem", ex.problem},
                             {"answer", ex.answer},
                             {"reasoning", ex.reasoning},
                             {"polarity", to_string(ex.polarity)},
                             {"source_id", ex.source_id}});
  }
  j["task_intent"] = p.task_intent;
  j["expert_persona"] = p.expert_persona;
  j["answer_format"] = p.answer_format;
  j["lineage"] = p.lineage;
  j["history"] = json::array();
  for (const auto& [iteration, score] : p.history) {
    j["history"].push_back({{"iteration", iteration}, {"best_score", score}});
  }
  j["config"] = config_to_json(p.config);
  return j.dump(2) + "\n";
}

OptimizedPrompt deserialize_prompt(std::string_view text) {
  OptimizedPrompt p;
  try {
    const auto j = json::parse(text);
    if (j.value("format", std::string()) != kFormatName) {
      throw Error(ErrorCode::kParse, "not an optimized prompt artifact");
    }
    if (j.at("version").get<int>() != kFormatVersion) {
      throw Error(ErrorCode::kVersionMismatch, "unsupported prompt artifact version");
    }
    p.stage = j.at("stage").get<std::string>();
    p.problem_description = j.at("problem_description").get<std::string>();
    p.instruction = j.at("instruction").get<std::string>();
    for (const auto& e : j.at("examples")) {
      ICLExample ex;
      ex.problem = e.at("problem").get<std::string>();
      ex.answer = e.at("answer").get<std::string>();
      ex.reasoning = e.value("reasoning", std::string());
      ex.source_id = e.value("source_id", std::string());
      const auto pol = parse_polarity(e.value("polarity", std::string("positive")));
      if (!pol) throw Error(ErrorCode::kParse, "unknown example polarity");
      ex.polarity = *pol;
      p.examples.push_back(std::move(ex));
    }
    p.task_intent = j.at("task_intent").get<std::string>();
    p.expert_persona = j.at("expert_persona").get<std::string>();
    p.answer_format = j.at("answer_format").get<std::string>();
    p.lineage = j.value("lineage", std::vector<std::string>{});
    for (const auto& h : j.value("history", json::array())) {
      p.history.emplace_back(h.at("iteration").get<int>(), h.at("best_score").get<double>());
    }
    p.config = config_from_json(j.at("config"));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("prompt artifact: ") + e.what());
  }
  return p;
}

void save_prompt(const OptimizedPrompt& prompt, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write prompt artifact '" + path.string() + "'");
  out << serialize_prompt(prompt);
}

OptimizedPrompt load_prompt(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open prompt artifact '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return deserialize_prompt(buf.str());
}

}  // namespace earco
