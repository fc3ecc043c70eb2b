#include "earco/optimizer.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>

#include <spdlog/spdlog.h>

#include "earco/assembly.hpp"
#include "earco/error.hpp"
#include "earco/evaluation.hpp"
#include "earco/parallel.hpp"
#include "earco/templates.hpp"
#include "earco/text_util.hpp"

namespace earco {

namespace {

// Strips list bullets and markdown emphasis that models like to put in
// front of section labels.
std::string_view strip_decoration(std::string_view line) {
  std::size_t i = 0;
  while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '*' || line[i] == '#' ||
                             line[i] == '-')) {
    ++i;
  }
  return line.substr(i);
}

// Rest of the line after `label` when the line opens with it.
std::optional<std::string> labeled(std::string_view line, std::string_view label, bool icase) {
  const auto s = strip_decoration(line);
  const bool hit = icase ? starts_with_icase(s, label) : s.starts_with(label);
  if (!hit) return std::nullopt;
  auto rest = s.substr(label.size());
  while (!rest.empty() && rest.front() == '*') rest.remove_prefix(1);
  return std::string(rest);
}

using Key = std::pair<std::string, std::string>;
Key key_of(const ICLExample& ex) { return {ex.problem, ex.answer}; }

std::string render_example_set(const std::vector<ICLExample>& examples) {
  std::string out;
  for (const auto& ex : examples) {
    out += "EXAMPLE:\nPOLARITY: ";
    out += to_string(ex.polarity);
    out += "\nPROBLEM: " + ex.problem + "\nANSWER: " + ex.answer + "\n";
  }
  return trim(out);
}

std::string render_failures(const std::vector<ScoredExample>& failures) {
  if (failures.empty()) return "(none: every scored example was answered correctly)";
  constexpr std::size_t kShown = 5;
  std::string out;
  for (std::size_t i = 0; i < failures.size() && i < kShown; ++i) {
    const auto& f = failures[i];
    out += "Example " + std::to_string(i + 1) + ":\n" + f.example->problem;
    out += "\nExpected root cause: " + f.example->answer;
    out += "\nProduced answer: " + (f.generated.empty() ? std::string("(empty)") : f.generated);
    out += "\nJudge score: " + std::to_string(f.judge_score) + "\n\n";
  }
  return trim(out);
}

// Generator answer plus judge score for one training example.
ScoredExample answer_and_judge(Gateway& gateway, std::string_view instruction,
                               std::string_view answer_format, const ICLExample& ex) {
  std::string system(instruction);
  if (!answer_format.empty()) system += "\n\n" + std::string(answer_format);
  const auto req = ChatRequest::for_role(
      ModelRole::kGenerator,
      {{MessageRole::kSystem, system}, {MessageRole::kUser, "## Current incident\n" + ex.problem}});
  ScoredExample out;
  out.example = &ex;
  out.generated = extract_answer(gateway.complete(req).content).text;
  // Nothing to judge: an empty answer is simply wrong.
  out.judge_score = out.generated.empty() ? 1 : judge(gateway, out.generated, ex.answer, ex.problem).score;
  return out;
}

void check_scoring_shape(std::size_t n, const OptimizationConfig& config) {
  const auto batch = static_cast<std::size_t>(config.questions_batch_size);
  if (n < batch) {
    throw Error(ErrorCode::kPrecondition, "scoring needs at least questions_batch_size (" +
                                              std::to_string(batch) + ") training examples, got " +
                                              std::to_string(n));
  }
  const auto batches = (n + batch - 1) / batch;
  if (static_cast<std::size_t>(config.min_correct_count) > batches) {
    throw Error(ErrorCode::kPrecondition,
                "min_correct_count exceeds the " + std::to_string(batches) + " scored batches");
  }
}

}  // namespace

std::vector<std::string> parse_enumerated_list(std::string_view text) {
  std::vector<std::string> items;
  bool in_item = false;
  for (const auto& raw : split_lines(text)) {
    std::string_view line = raw;
    std::size_t i = 0;
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '*')) ++i;
    std::size_t j = i;
    while (j < line.size() && std::isdigit(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i && j < line.size() && (line[j] == '.' || line[j] == ')') &&
        (j + 1 == line.size() || line[j + 1] == ' ' || line[j + 1] == '\t' || line[j + 1] == '*')) {
      auto body = line.substr(j + 1);
      while (!body.empty() && body.front() == '*') body.remove_prefix(1);
      items.push_back(trim(body));
      in_item = true;
    } else if (in_item && !trim(line).empty()) {
      items.back() += items.back().empty() ? trim(line) : "\n" + trim(line);
    }
  }
  std::erase_if(items, [](const std::string& s) { return s.empty(); });
  if (items.empty()) throw Error(ErrorCode::kMutationParse, "reply holds no numbered list");
  return items;
}

Critique parse_critique(std::string_view reply) {
  Critique c;
  const std::pair<std::string_view, std::string*> sections[] = {
      {"STRENGTHS:", &c.strengths},
      {"WEAKNESSES:", &c.weaknesses},
      {"SUGGESTED EDITS:", &c.suggested_edits},
  };
  std::string* current = nullptr;
  for (const auto& line : split_lines(reply)) {
    bool header = false;
    for (const auto& [label, target] : sections) {
      if (auto rest = labeled(line, label, true)) {
        current = target;
        *current = *rest;
        header = true;
        break;
      }
    }
    if (!header && current != nullptr) *current += "\n" + line;
  }
  c.strengths = trim(c.strengths);
  c.weaknesses = trim(c.weaknesses);
  c.suggested_edits = trim(c.suggested_edits);
  c.sectioned = !c.weaknesses.empty();
  if (!c.sectioned) c = Critique{{}, trim(reply), {}, false};
  return c;
}

ExampleSetReply parse_example_set(std::string_view reply) {
  ExampleSetReply out;
  enum class Field { kNone, kInstruction, kProblem, kAnswer, kIgnored } field = Field::kNone;
  std::string problem;
  std::string answer;
  bool in_example = false;
  const auto flush = [&] {
    if (in_example) {
      auto p = trim(problem);
      auto a = trim(answer);
      if (!p.empty() && !a.empty()) out.examples.emplace_back(std::move(p), std::move(a));
    }
    problem.clear();
    answer.clear();
  };
  const auto append = [](std::string& target, std::string_view text) {
    target += target.empty() ? std::string(text) : "\n" + std::string(text);
  };
  for (const auto& line : split_lines(reply)) {
    if (auto rest = labeled(line, "INSTRUCTION:", false)) {
      flush();
      in_example = false;
      field = Field::kInstruction;
      out.instruction = *rest;
    } else if (labeled(line, "EXAMPLE:", false)) {
      flush();
      in_example = true;
      field = Field::kIgnored;
    } else if (auto p = labeled(line, "PROBLEM:", false); p && in_example) {
      field = Field::kProblem;
      problem = trim(*p);
    } else if (auto a = labeled(line, "ANSWER:", false); a && in_example) {
      field = Field::kAnswer;
      answer = trim(*a);
    } else if (labeled(line, "POLARITY:", false) || labeled(line, "REASONING:", false)) {
      field = Field::kIgnored;
    } else {
      switch (field) {
        case Field::kInstruction:
          out.instruction += "\n" + line;
          break;
        case Field::kProblem:
          append(problem, line);
          break;
        case Field::kAnswer:
          append(answer, line);
          break;
        default:
          break;
      }
    }
  }
  flush();
  out.instruction = trim(out.instruction);
  return out;
}

// ---------------------------------------------------------------------------

CandidateScore score_candidate(Gateway& gateway, std::string_view instruction,
                               const std::vector<ICLExample>& train_examples,
                               const OptimizationConfig& config, std::string_view answer_format) {
  check_scoring_shape(train_examples.size(), config);
  const auto batch = static_cast<std::size_t>(config.questions_batch_size);
  const auto n = train_examples.size();
  const auto batches = (n + batch - 1) / batch;
  const auto needed = static_cast<std::size_t>(config.min_correct_count);

  CandidateScore out;
  for (std::size_t b = 0; b < batches; ++b) {
    const auto begin = b * batch;
    const auto count = std::min(n, begin + batch) - begin;
    std::vector<ScoredExample> scored(count);
    parallel_for(count, config.scoring_concurrency, [&](std::size_t i) {
      scored[i] = answer_and_judge(gateway, instruction, answer_format, train_examples[begin + i]);
    });
    bool all_correct = true;
    for (auto& s : scored) {
      ++out.evaluated;
      if (s.judge_score >= config.score_threshold) {
        ++out.correct;
      } else {
        all_correct = false;
        out.failures.push_back(std::move(s));
      }
    }
    if (all_correct) ++out.batches_passed;
    const auto remaining = batches - b - 1;
    if (out.batches_passed + remaining < needed) {
      out.short_circuited = true;
      out.score = 0.0;
      return out;
    }
  }
  out.score = static_cast<double>(out.correct) / static_cast<double>(out.evaluated);
  return out;
}

std::vector<int> judge_all(Gateway& gateway, std::string_view instruction,
                           const std::vector<ICLExample>& examples,
                           const OptimizationConfig& config, std::string_view answer_format) {
  std::vector<int> scores(examples.size());
  parallel_for(examples.size(), config.scoring_concurrency, [&](std::size_t i) {
    scores[i] = answer_and_judge(gateway, instruction, answer_format, examples[i]).judge_score;
  });
  return scores;
}

std::vector<std::size_t> farthest_point_order(const std::vector<EmbeddingVector>& points,
                                              std::size_t n, std::size_t start) {
  if (n > points.size()) throw Error(ErrorCode::kInsufficientData, "more points requested than available");
  if (n == 0) return {};
  if (start >= points.size()) throw Error(ErrorCode::kPrecondition, "start point out of range");
  const auto dist = [&](std::size_t a, std::size_t b) {
    double sum = 0.0;
    for (std::size_t d = 0; d < points[a].dim(); ++d) {
      const double diff = static_cast<double>(points[a][d]) - static_cast<double>(points[b][d]);
      sum += diff * diff;
    }
    return std::sqrt(sum);
  };
  std::vector<std::size_t> order{start};
  std::vector<bool> picked(points.size(), false);
  picked[start] = true;
  std::vector<double> nearest(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) nearest[i] = dist(i, start);
  while (order.size() < n) {
    std::size_t best = points.size();
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (picked[i]) continue;
      if (best == points.size() || nearest[i] > nearest[best]) best = i;
    }
    picked[best] = true;
    order.push_back(best);
    for (std::size_t i = 0; i < points.size(); ++i) nearest[i] = std::min(nearest[i], dist(i, best));
  }
  return order;
}

std::vector<ICLExample> select_seed_examples(const VectorIndex& index, const Corpus& train,
                                             std::size_t n, std::uint64_t seed) {
  std::vector<const Incident*> eligible;
  std::vector<EmbeddingVector> points;
  for (const auto& inc : train.incidents) {
    if (!inc.root_cause || trim(*inc.root_cause).empty() || !index.contains(inc.id)) continue;
    eligible.push_back(&inc);
    points.push_back(index.vector(inc.id));
  }
  if (n == 0) return {};
  if (eligible.size() < n) {
    throw Error(ErrorCode::kInsufficientData,
                "need " + std::to_string(n) + " indexed training incidents with a root cause, found " +
                    std::to_string(eligible.size()));
  }
  std::mt19937_64 rng(seed);
  const auto start = static_cast<std::size_t>(rng() % eligible.size());
  std::vector<ICLExample> out;
  for (const auto i : farthest_point_order(points, n, start)) {
    ICLExample ex;
    ex.problem = render_incident_details(*eligible[i]);
    ex.answer = trim(*eligible[i]->root_cause);
    ex.polarity = Polarity::kPositive;
    ex.source_id = eligible[i]->id;
    out.push_back(std::move(ex));
  }
  return out;
}

// ---------------------------------------------------------------------------

Optimizer::Optimizer(Gateway& gateway, OptimizationConfig config, std::string task_description)
    : gateway_(gateway),
      config_(std::move(config)),
      task_description_(std::move(task_description)),
      calls_at_start_(gateway.requests(ModelRole::kOptimizer)) {
  if (trim(task_description_).empty()) throw Error(ErrorCode::kPrecondition, "task description is empty");
}

std::size_t Optimizer::optimizer_calls() const {
  return gateway_.requests(ModelRole::kOptimizer) - calls_at_start_;
}

std::string Optimizer::ask(const std::string& prompt, double temperature) {
  if (optimizer_calls() >= static_cast<std::size_t>(config_.optimizer_call_budget)) {
    throw Error(ErrorCode::kOptimization, "optimizer call budget of " +
                                              std::to_string(config_.optimizer_call_budget) +
                                              " exhausted");
  }
  auto req = ChatRequest::for_role(ModelRole::kOptimizer, {{MessageRole::kUser, prompt}});
  req.temperature = temperature;
  return gateway_.complete(req).content;
}

MutationResult Optimizer::mutate(const PromptCandidate& base, const std::vector<ThinkingStyle>& styles,
                                 int rounds, std::size_t style_offset) {
  if (styles.empty()) throw Error(ErrorCode::kPrecondition, "no thinking styles");
  if (rounds < 1) throw Error(ErrorCode::kPrecondition, "mutation_rounds must be >= 1");
  const auto per_call = static_cast<std::size_t>(config_.styles_per_call);
  // Mutation needs diversity; everything else runs greedy.
  constexpr double kMutationTemperature = 0.7;

  MutationResult out;
  for (int r = 0; r < rounds; ++r) {
    std::vector<const ThinkingStyle*> chosen;
    std::string style_text;
    for (std::size_t j = 0; j < per_call; ++j) {
      const auto& style = styles[(style_offset + static_cast<std::size_t>(r) * per_call + j) % styles.size()];
      chosen.push_back(&style);
      style_text += std::to_string(j + 1) + ". " + style.name + ": " + style.description + "\n";
    }
    auto prompt = render_template(prompt_template("mutate"),
                                  {{"task_description", task_description_},
                                   {"instruction", base.instruction},
                                   {"count", std::to_string(per_call)},
                                   {"thinking_styles", trim(style_text)}});
    std::vector<std::string> items;
    for (int attempt = 0; attempt < 2 && items.empty(); ++attempt) {
      if (attempt == 1) prompt += "\n\nYour previous reply was not a numbered list. Reply with a numbered list only.";
      try {
        items = parse_enumerated_list(ask(prompt, kMutationTemperature));
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kMutationParse) throw;
        spdlog::warn("mutation round {} attempt {}: {}", r + 1, attempt + 1, e.what());
      }
    }
    if (items.empty()) {
      spdlog::warn("mutation round {} skipped", r + 1);
      ++out.skipped_rounds;
      continue;
    }
    for (std::size_t j = 0; j < items.size() && j < per_call; ++j) {
      PromptCandidate c;
      c.instruction = std::move(items[j]);
      c.lineage = base.lineage;
      c.lineage.push_back("mutate:" + chosen[j]->name);
      out.candidates.push_back(std::move(c));
    }
  }
  return out;
}

Critique Optimizer::critique(const PromptCandidate& best, const std::vector<ScoredExample>& failures) {
  const auto prompt = render_template(prompt_template("critique"),
                                      {{"task_description", task_description_},
                                       {"instruction", best.instruction},
                                       {"failing_examples", render_failures(failures)}});
  return parse_critique(ask(prompt));
}

PromptCandidate Optimizer::synthesize(const PromptCandidate& candidate, const Critique& critique) {
  if (critique.weaknesses.empty() && critique.strengths.empty() && critique.suggested_edits.empty()) {
    throw Error(ErrorCode::kSynthesize, "critique is empty");
  }
  const auto prompt = render_template(prompt_template("synthesize"),
                                      {{"task_description", task_description_},
                                       {"instruction", candidate.instruction},
                                       {"strengths", critique.strengths},
                                       {"weaknesses", critique.weaknesses},
                                       {"suggested_edits", critique.suggested_edits}});
  auto reply = trim(ask(prompt));
  // labeled() on the whole reply keeps every line after the label.
  if (auto rest = labeled(reply, "INSTRUCTION:", true)) reply = trim(*rest);
  if (reply.empty()) throw Error(ErrorCode::kSynthesize, "synthesis returned an empty instruction");
  PromptCandidate out;
  out.instruction = std::move(reply);
  out.lineage = candidate.lineage;
  out.lineage.push_back("synthesize");
  return out;
}

InstructionResult Optimizer::optimize_instruction(const std::string& seed_instruction,
                                                  const std::vector<ICLExample>& train_examples) {
  if (trim(seed_instruction).empty()) throw Error(ErrorCode::kPrecondition, "seed instruction is empty");
  check_scoring_shape(train_examples.size(), config_);
  const auto styles = config_.effective_thinking_styles();
  const auto answer_format = default_answer_format();
  const auto per_iteration = static_cast<std::size_t>(config_.mutation_rounds * config_.styles_per_call);

  InstructionResult result;
  result.best.instruction = seed_instruction;
  for (int it = 1; it <= config_.mutate_refine_iterations; ++it) {
    auto mutated = mutate(result.best, styles, config_.mutation_rounds,
                          static_cast<std::size_t>(it - 1) * per_iteration);

    std::optional<std::size_t> best_index;
    CandidateScore best_score;
    for (std::size_t i = 0; i < mutated.candidates.size(); ++i) {
      auto& cand = mutated.candidates[i];
      try {
        auto s = score_candidate(gateway_, cand.instruction, train_examples, config_, answer_format);
        cand.train_score = s.score;
        if (!best_index || s.score > best_score.score) {
          best_index = i;
          best_score = std::move(s);
        }
      } catch (const Error& e) {
        spdlog::warn("iteration {}: candidate {} could not be scored: {}", it, i + 1, e.what());
      }
    }
    if (!best_index) {
      spdlog::warn("iteration {} skipped: no candidate could be scored", it);
      ++result.skipped_iterations;
      continue;
    }

    PromptCandidate round_best = mutated.candidates[*best_index];
    const auto feedback = critique(round_best, best_score.failures);
    try {
      auto refined = synthesize(round_best, feedback);
      refined.train_score = score_candidate(gateway_, refined.instruction, train_examples, config_, answer_format).score;
      if (*refined.train_score >= *round_best.train_score) round_best = std::move(refined);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kSynthesize && e.code() != ErrorCode::kTransport &&
          e.code() != ErrorCode::kRemote && e.code() != ErrorCode::kJudgeParse) {
        throw;
      }
      spdlog::warn("iteration {}: keeping the unrefined candidate: {}", it, e.what());
    }

    if (!result.best.train_score || *round_best.train_score >= *result.best.train_score) {
      result.best = std::move(round_best);
    }
    result.history.emplace_back(it, *result.best.train_score);
    if (*result.best.train_score >= config_.performance_threshold) break;
  }
  if (!result.best.train_score) {
    throw Error(ErrorCode::kOptimization, "every instruction-tuning iteration was skipped");
  }
  return result;
}

ExampleResult Optimizer::optimize_examples(const std::string& instruction,
                                           const std::vector<ICLExample>& seed_examples,
                                           const std::vector<ICLExample>& train_examples) {
  const auto k = static_cast<std::size_t>(config_.few_shot_count);
  if (seed_examples.size() < k) {
    throw Error(ErrorCode::kInsufficientData, "fewer seed examples than few_shot_count");
  }

  // Seeds the instruction gets wrong become negative examples.
  std::set<Key> failed;
  const auto scores = judge_all(gateway_, instruction, train_examples, config_);
  for (std::size_t i = 0; i < train_examples.size(); ++i) {
    if (scores[i] < config_.score_threshold) failed.insert(key_of(train_examples[i]));
  }
  std::vector<ICLExample> pool = seed_examples;
  for (auto& ex : pool) {
    if (ex.polarity == Polarity::kPositive && failed.contains(key_of(ex))) ex.polarity = Polarity::kNegative;
  }

  ExampleResult out;
  out.instruction = instruction;
  out.examples.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(k));

  for (int it = 1; it <= config_.refine_task_eg_iterations; ++it) {
    const auto examples_text = render_example_set(out.examples);
    const auto feedback = trim(ask(render_template(prompt_template("example_critique"),
                                                   {{"task_description", task_description_},
                                                    {"instruction", out.instruction},
                                                    {"examples", examples_text}})));
    if (feedback.empty()) {
      spdlog::warn("example iteration {}: empty critique, set kept", it);
      continue;
    }
    const auto reply = ask(render_template(prompt_template("example_synthesize"),
                                           {{"task_description", task_description_},
                                            {"instruction", out.instruction},
                                            {"examples", examples_text},
                                            {"critique", feedback},
                                            {"count", std::to_string(k)}}));
    const auto parsed = parse_example_set(reply);
    if (!parsed.instruction.empty() && parsed.instruction != out.instruction) {
      out.instruction = parsed.instruction;
      out.instruction_changed = true;
    }
    if (parsed.examples.empty()) {
      spdlog::warn("example iteration {}: no usable examples in the reply, set kept", it);
      continue;
    }
    std::vector<ICLExample> next;
    std::set<Key> seen;
    for (const auto& [problem, answer] : parsed.examples) {
      if (next.size() == k) break;
      if (!seen.insert({problem, answer}).second) continue;
      const auto match = std::find_if(pool.begin(), pool.end(), [&](const ICLExample& ex) {
        return ex.problem == problem && ex.answer == answer;
      });
      if (match != pool.end()) {
        next.push_back(*match);
      } else {
        next.push_back({problem, answer, "", Polarity::kSynthetic, "", false});
      }
    }
    for (const auto& ex : pool) {
      if (next.size() == k) break;
      if (seen.insert(key_of(ex)).second) next.push_back(ex);
    }
    out.examples = std::move(next);
  }
  return out;
}

std::vector<ICLExample> Optimizer::add_reasoning(std::vector<ICLExample> examples) {
  if (examples.empty()) throw Error(ErrorCode::kPrecondition, "no examples to reason about");
  // The budget check reads the shared counter, so keep this sequential unless
  // concurrency was asked for.
  parallel_for(examples.size(), config_.scoring_concurrency, [&](std::size_t i) {
    auto& ex = examples[i];
    if (!ex.reasoning.empty() || ex.needs_removal) return;
    ex.reasoning = trim(ask(render_template(prompt_template("reasoning"),
                                            {{"problem", ex.problem}, {"answer", ex.answer}})));
    if (ex.reasoning.empty()) {
      spdlog::warn("empty reasoning for example from '{}', flagged for removal", ex.source_id);
      ex.needs_removal = true;
    }
  });
  return examples;
}

std::vector<ICLExample> Optimizer::validate_examples(const std::vector<ICLExample>& examples) {
  std::vector<char> keep(examples.size(), 0);
  parallel_for(examples.size(), config_.scoring_concurrency, [&](std::size_t i) {
    const auto& ex = examples[i];
    if (ex.needs_removal || ex.reasoning.empty()) return;
    const auto reply = ask(render_template(
        prompt_template("validation"),
        {{"problem", ex.problem}, {"answer", ex.answer}, {"reasoning", ex.reasoning}}));
    std::string verdict;
    for (const auto& line : split_lines(reply)) {
      verdict = trim(strip_decoration(line));
      if (!verdict.empty()) break;
    }
    if (starts_with_icase(verdict, "VALID")) {
      keep[i] = 1;
    } else if (!starts_with_icase(verdict, "INVALID")) {
      spdlog::warn("unreadable validation verdict '{}', treated as INVALID", verdict);
    }
  });
  std::vector<ICLExample> out;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    if (keep[i]) out.push_back(examples[i]);
  }
  if (out.empty()) throw Error(ErrorCode::kValidation, "no example passed validation");
  return out;
}

std::pair<std::string, std::string> Optimizer::generate_intent_persona() {
  const auto reply = ask(render_template(prompt_template("intent_persona"),
                                         {{"task_description", task_description_}}));
  std::string intent;
  std::string persona;
  std::string* current = nullptr;
  for (const auto& line : split_lines(reply)) {
    if (auto rest = labeled(line, "TASK INTENT:", true)) {
      current = &intent;
      intent = *rest;
    } else if (auto rest2 = labeled(line, "EXPERT PERSONA:", true)) {
      current = &persona;
      persona = *rest2;
    } else if (current != nullptr) {
      *current += "\n" + line;
    }
  }
  intent = trim(intent);
  persona = trim(persona);
  if (intent.empty()) intent = prompt_template("default_intent");
  if (persona.empty()) persona = prompt_template("default_persona");
  return {intent, persona};
}

// ---------------------------------------------------------------------------

OptimizationRun run_optimization(Gateway& gateway, const VectorIndex& index, const Corpus& train,
                                 const OptimizationConfig& config,
                                 const std::string& task_description,
                                 const std::string& seed_instruction) {
  config.validate();
  const auto k = static_cast<std::size_t>(config.few_shot_count);
  const auto seeds =
      select_seed_examples(index, train, static_cast<std::size_t>(config.seed_example_count), config.seed);
  auto pool = seeds;
  seeded_shuffle(pool, config.seed);

  Optimizer opt(gateway, config, task_description);
  const auto tuned = opt.optimize_instruction(seed_instruction, pool);
  spdlog::info("instruction tuning done, best train score {:.3f}", *tuned.best.train_score);

  const std::string default_intent(prompt_template("default_intent"));
  const std::string default_persona(prompt_template("default_persona"));
  const auto stage_prompt = [&](std::string instruction, std::vector<ICLExample> examples,
                                std::string intent, std::string persona, std::string stage,
                                std::vector<std::string> lineage) {
    PromptParts parts;
    parts.problem_description = task_description;
    parts.instruction = std::move(instruction);
    parts.examples = std::move(examples);
    parts.task_intent = std::move(intent);
    parts.expert_persona = std::move(persona);
    auto prompt = build_optimized_prompt(std::move(parts), config, std::move(stage));
    prompt.lineage = std::move(lineage);
    prompt.history = tuned.history;
    return prompt;
  };

  OptimizationRun run;
  run.after_instruction =
      stage_prompt(tuned.best.instruction, {seeds.begin(), seeds.begin() + static_cast<std::ptrdiff_t>(k)},
                   default_intent, default_persona, "after-instruction", tuned.best.lineage);

  const auto refined = opt.optimize_examples(tuned.best.instruction, seeds, pool);
  auto lineage = tuned.best.lineage;
  if (refined.instruction_changed) lineage.push_back("example-synthesize");
  run.after_examples = stage_prompt(refined.instruction, refined.examples, default_intent,
                                    default_persona, "after-examples", lineage);

  const auto validated = [&](std::vector<ICLExample> batch) {
    try {
      return opt.validate_examples(opt.add_reasoning(std::move(batch)));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kValidation) throw;
      return std::vector<ICLExample>{};
    }
  };
  auto final_examples = validated(refined.examples);
  std::set<Key> used;
  for (const auto& ex : refined.examples) used.insert(key_of(ex));
  auto next_seed = seeds.begin();
  while (final_examples.size() < k) {
    std::vector<ICLExample> batch;
    for (; next_seed != seeds.end() && final_examples.size() + batch.size() < k; ++next_seed) {
      if (used.insert(key_of(*next_seed)).second) batch.push_back(*next_seed);
    }
    if (batch.empty()) {
      throw Error(ErrorCode::kValidation, "only " + std::to_string(final_examples.size()) + " of " +
                                              std::to_string(k) + " examples survived validation");
    }
    spdlog::info("topping up {} examples from the seed pool", batch.size());
    for (auto& ex : validated(std::move(batch))) final_examples.push_back(std::move(ex));
  }

  auto [intent, persona] = opt.generate_intent_persona();
  run.final_prompt = stage_prompt(refined.instruction, std::move(final_examples), std::move(intent),
                                  std::move(persona), "final", lineage);
  run.optimizer_calls = opt.optimizer_calls();
  spdlog::info("optimization used {} optimizer calls", run.optimizer_calls);
  return run;
}

OptimizedPrompt base_stage_prompt(const OptimizedPrompt& reference, const std::string& seed_instruction) {
  OptimizedPrompt out = reference;
  out.stage = "base";
  out.instruction = seed_instruction;
  out.task_intent = prompt_template("default_intent");
  out.expert_persona = prompt_template("default_persona");
  out.lineage.clear();
  out.history.clear();
  return out;
}

}  // namespace earco
