#include "earco/assembly.hpp"

#include <cctype>
#include <fstream>
#include <nlohmann/json.hpp>

#include "earco/error.hpp"
#include "earco/text_util.hpp"

namespace earco {

std::string_view to_string(PromptMode mode) {
  switch (mode) {
    case PromptMode::kManualSS:
      return "ManualSS";
    case PromptMode::kPWDefault:
      return "PWDefault";
    case PromptMode::kPWSS:
      return "PWSS";
    case PromptMode::kFtSLM:
      return "FtSLM";
    case PromptMode::kFtSLMPW:
      return "FtSLMPW";
    case PromptMode::kFtSLMPWnoEx:
      return "FtSLMPWnoEx";
    case PromptMode::kBaseSLMPW:
      return "BaseSLMPW";
    case PromptMode::kBaseSLMPWnoEx:
      return "BaseSLMPWnoEx";
    case PromptMode::kManualSSBase:
      return "ManualSSBase";
  }
  return "unknown";
}

namespace {
std::string normalize_mode_name(std::string_view s) {
  std::string out;
  for (const char c : s) {
    if (c == '-' || c == '_' || c == ' ' || c == '.') continue;
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}
}  // namespace

std::optional<PromptMode> parse_prompt_mode(std::string_view text) {
  const auto key = normalize_mode_name(text);
  for (const auto mode : kAllPromptModes) {
    if (normalize_mode_name(to_string(mode)) == key) return mode;
  }
  return std::nullopt;
}

ModeTraits mode_traits(PromptMode mode) {
  using I = InstructionSource;
  using E = ExampleSource;
  switch (mode) {
    case PromptMode::kManualSS:
    case PromptMode::kManualSSBase:
      return {I::kManual, E::kRetrieved, false};
    case PromptMode::kPWDefault:
    case PromptMode::kFtSLMPW:
    case PromptMode::kBaseSLMPW:
      return {I::kOptimized, E::kStatic, true};
    case PromptMode::kPWSS:
      return {I::kOptimized, E::kRetrieved, true};
    case PromptMode::kFtSLM:
      return {I::kNone, E::kNone, false};
    case PromptMode::kFtSLMPWnoEx:
    case PromptMode::kBaseSLMPWnoEx:
      return {I::kOptimized, E::kNone, true};
  }
  return {I::kNone, E::kNone, false};
}

std::vector<RetrievedExample> retrieve_icl_examples(const VectorIndex& index, const Corpus& corpus,
                                                    EmbeddingBackend& embedder,
                                                    const Incident& incident, std::size_t k) {
  if (index.size() == 0) throw Error(ErrorCode::kRetrieval, "retrieval index is empty");
  if (k == 0) return {};
  const auto query = embedder.embed(incident_query_text(incident));
  // One extra slot in case the incident itself is indexed.
  const auto hits = index.search_top_k(query, k + 1);
  std::vector<RetrievedExample> out;
  for (const auto& hit : hits) {
    if (out.size() == k) break;
    if (hit.incident_id == incident.id) continue;
    const auto* historical = corpus.find(hit.incident_id);
    if (historical == nullptr) continue;
    out.push_back({*historical, hit.distance});
  }
  return out;
}

std::string render_retrieved_example(std::size_t position, const Incident& incident) {
  std::string out = "### Example " + std::to_string(position) + "\n";
  out += render_incident_details(incident);
  out += "\nRoot cause: " + incident.root_cause.value_or("");
  return out;
}

std::string render_static_example(std::size_t position, const ICLExample& example) {
  std::string out = "### Example " + std::to_string(position) + "\n";
  out += example.problem;
  if (!example.reasoning.empty()) out += "\nReasoning: " + example.reasoning;
  out += "\nAnswer: ";
  out += kAnswerStartMarker;
  out += example.answer;
  out += kAnswerEndMarker;
  return out;
}

std::string optimized_system_text(const OptimizedPrompt& prompt) {
  std::string out = prompt.expert_persona;
  out += "\n\nTask intent: " + prompt.task_intent;
  out += "\n\n" + prompt.problem_description;
  out += "\n\n" + prompt.instruction;
  return out;
}

AssembledPrompt assemble(PromptMode mode, const Incident& incident, const AssemblyInputs& inputs) {
  const auto traits = mode_traits(mode);
  AssembledPrompt out;
  out.mode = mode;
  out.incident_part = render_incident_details(incident);

  switch (traits.instruction) {
    case InstructionSource::kManual:
      if (!inputs.manual_instruction || trim(*inputs.manual_instruction).empty()) {
        throw Error(ErrorCode::kAssembly,
                    std::string(to_string(mode)) + " needs a manual instruction");
      }
      out.system_part = *inputs.manual_instruction;
      break;
    case InstructionSource::kOptimized:
      if (inputs.optimized == nullptr) {
        throw Error(ErrorCode::kAssembly,
                    std::string(to_string(mode)) + " needs an optimized prompt");
      }
      out.system_part = optimized_system_text(*inputs.optimized);
      break;
    case InstructionSource::kNone:
      break;
  }
  if (traits.answer_format) out.answer_format_part = inputs.optimized->answer_format;

  switch (traits.examples) {
    case ExampleSource::kRetrieved:
      if (inputs.retrieved == nullptr) {
        throw Error(ErrorCode::kAssembly,
                    std::string(to_string(mode)) + " needs retrieved examples");
      }
      for (std::size_t i = 0; i < inputs.retrieved->size(); ++i) {
        const auto& ex = (*inputs.retrieved)[i];
        out.example_part.push_back({ex.incident.id, render_retrieved_example(i + 1, ex.incident)});
      }
      break;
    case ExampleSource::kStatic:
      for (std::size_t i = 0; i < inputs.optimized->examples.size(); ++i) {
        const auto& ex = inputs.optimized->examples[i];
        out.example_part.push_back({ex.source_id, render_static_example(i + 1, ex)});
      }
      break;
    case ExampleSource::kNone:
      break;
  }
  return out;
}

std::string AssembledPrompt::user_text() const {
  // Fine-tuned models see exactly the metadata layout they were trained on.
  if (mode == PromptMode::kFtSLM) return incident_part;

  std::string out;
  if (!example_part.empty()) {
    out += mode_traits(mode).examples == ExampleSource::kStatic
               ? "## Examples\n\n"
               : "## Similar historical incidents\n\n";
    for (const auto& block : example_part) out += block.text + "\n\n";
  }
  out += "## Current incident\n" + incident_part;
  if (!answer_format_part.empty()) out += "\n\n" + answer_format_part;
  return out;
}

ChatRequest AssembledPrompt::to_request(const GenerationParams& params) const {
  std::vector<ChatMessage> messages;
  if (!system_part.empty()) messages.push_back({MessageRole::kSystem, system_part});
  messages.push_back({MessageRole::kUser, user_text()});
  auto req = ChatRequest::for_role(ModelRole::kGenerator, std::move(messages));
  req.temperature = params.temperature;
  req.max_new_tokens = params.max_new_tokens;
  return req;
}

ExtractedAnswer extract_answer(std::string_view raw) {
  const auto start = raw.find(kAnswerStartMarker);
  if (start == std::string_view::npos) return {trim(raw), true, false};
  const auto body = start + kAnswerStartMarker.size();
  const auto end = raw.find(kAnswerEndMarker, body);
  if (end == std::string_view::npos) return {trim(raw.substr(body)), false, true};
  return {trim(raw.substr(body, end - body)), false, false};
}

RCARecommendation generate_rca(Gateway& gateway, const Incident& incident,
                               const AssembledPrompt& assembled, const GenerationParams& params) {
  const auto response = gateway.complete(assembled.to_request(params));
  RCARecommendation rec;
  rec.incident_id = incident.id;
  rec.mode = assembled.mode;
  rec.raw_output = response.content;
  rec.params = params;
  if (trim(response.content).empty()) {
    throw Error(ErrorCode::kEmptyOutput, "generator returned nothing for incident " + incident.id);
  }
  if (assembled.answer_format_part.empty()) {
    rec.extracted_root_cause = trim(response.content);
  } else {
    auto extracted = extract_answer(response.content);
    rec.extracted_root_cause = std::move(extracted.text);
    rec.marker_missing = extracted.marker_missing;
    rec.malformed = extracted.malformed;
  }
  if (rec.extracted_root_cause.empty()) {
    throw Error(ErrorCode::kEmptyOutput, "no root cause in the answer for incident " + incident.id);
  }
  return rec;
}

// ---------------------------------------------------------------------------

std::string recommendation_to_json_line(const RCARecommendation& rec) {
  nlohmann::ordered_json j;
  j["incident_id"] = rec.incident_id;
  j["mode"] = to_string(rec.mode);
  j["raw_output"] = rec.raw_output;
  j["extracted_root_cause"] = rec.extracted_root_cause;
  j["marker_missing"] = rec.marker_missing;
  j["malformed"] = rec.malformed;
  j["temperature"] = rec.params.temperature;
  j["max_new_tokens"] = rec.params.max_new_tokens;
  return j.dump();
}

RCARecommendation recommendation_from_json_line(std::string_view line) {
  try {
    const auto j = nlohmann::json::parse(line);
    RCARecommendation rec;
    rec.incident_id = j.at("incident_id").get<std::string>();
    const auto mode = parse_prompt_mode(j.at("mode").get<std::string>());
    if (!mode) throw Error(ErrorCode::kParse, "unknown mode in results record");
    rec.mode = *mode;
    rec.raw_output = j.at("raw_output").get<std::string>();
    rec.extracted_root_cause = j.at("extracted_root_cause").get<std::string>();
    rec.marker_missing = j.value("marker_missing", false);
    rec.malformed = j.value("malformed", false);
    rec.params.temperature = j.value("temperature", 0.0);
    rec.params.max_new_tokens = j.value("max_new_tokens", 200);
    return rec;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("results record: ") + e.what());
  }
}

void save_recommendations(const std::string& path, const std::vector<RCARecommendation>& recs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write results '" + path + "'");
  for (const auto& r : recs) out << recommendation_to_json_line(r) << '\n';
}

std::vector<RCARecommendation> load_recommendations(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open results '" + path + "'");
  std::vector<RCARecommendation> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (trim(line).empty()) continue;
    try {
      out.push_back(recommendation_from_json_line(line));
    } catch (const Error& e) {
      throw Error::parse_at(n, e.what());
    }
  }
  return out;
}

}  // namespace earco
