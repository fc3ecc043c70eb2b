#include "earco/chat.hpp"

#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "earco/error.hpp"
#include "earco/http.hpp"

namespace earco {

using json = nlohmann::json;

std::string_view to_string(ModelRole role) {
  switch (role) {
    case ModelRole::kOptimizer:
      return "optimizer";
    case ModelRole::kGenerator:
      return "generator";
    case ModelRole::kSummarizer:
      return "summarizer";
    case ModelRole::kJudge:
      return "judge";
  }
  return "unknown";
}

std::optional<ModelRole> parse_model_role(std::string_view name) {
  for (const auto role : kAllRoles) {
    if (to_string(role) == name) return role;
  }
  return std::nullopt;
}

std::string_view to_string(MessageRole role) {
  switch (role) {
    case MessageRole::kSystem:
      return "system";
    case MessageRole::kUser:
      return "user";
    case MessageRole::kAssistant:
      return "assistant";
  }
  return "unknown";
}

ChatRequest ChatRequest::for_role(ModelRole role, std::vector<ChatMessage> messages) {
  ChatRequest req;
  req.messages = std::move(messages);
  req.model_role = role;
  req.temperature = 0.0;
  switch (role) {
    case ModelRole::kGenerator:
      req.max_new_tokens = 200;
      break;
    case ModelRole::kSummarizer:
    case ModelRole::kJudge:
      req.max_new_tokens = 256;
      break;
    case ModelRole::kOptimizer:
      req.max_new_tokens = 1024;
      break;
  }
  return req;
}

void ChatRequest::validate() const {
  if (messages.empty()) throw Error(ErrorCode::kPrecondition, "chat request has no messages");
  if (messages.back().role != MessageRole::kUser) {
    throw Error(ErrorCode::kPrecondition, "last chat message must come from the user");
  }
  if (!std::isfinite(temperature) || temperature < 0.0) {
    throw Error(ErrorCode::kPrecondition, "temperature must be finite and >= 0");
  }
  if (max_new_tokens <= 0) throw Error(ErrorCode::kPrecondition, "max_new_tokens must be positive");
}

std::string ChatRequest::flatten() const {
  std::string out(to_string(model_role));
  out.push_back('\n');
  for (const auto& m : messages) {
    out += to_string(m.role);
    out += ": ";
    out += m.content;
    out.push_back('\n');
  }
  return out;
}

std::size_t count_tokens(std::string_view text) {
  std::size_t n = 0;
  bool in_word = false;
  for (const char c : text) {
    const bool space = c == ' ' || c == '\n' || c == '\t' || c == '\r';
    if (!space && !in_word) ++n;
    in_word = !space;
  }
  return n;
}

// ---------------------------------------------------------------------------

MockScript MockScript::from_json_text(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kParse, std::string("mock script: ") + e.what());
  }
  MockScript script;
  const json* rules = &doc;
  if (doc.is_object()) {
    if (auto it = doc.find("default_response"); it != doc.end() && it->is_string()) {
      script.default_response = it->get<std::string>();
    }
    const auto it = doc.find("rules");
    if (it == doc.end()) throw Error(ErrorCode::kParse, "mock script object lacks 'rules'");
    rules = &*it;
  }
  if (!rules->is_array()) throw Error(ErrorCode::kParse, "mock script rules must be an array");

  std::size_t index = 0;
  for (const auto& r : *rules) {
    ++index;
    const auto where = "mock rule " + std::to_string(index);
    if (!r.is_object()) throw Error(ErrorCode::kParse, where + " is not an object");
    MockRule rule;
    if (auto it = r.find("match"); it != r.end()) {
      if (it->is_string()) {
        rule.contains.push_back(it->get<std::string>());
      } else if (it->is_array()) {
        for (const auto& s : *it) rule.contains.push_back(s.get<std::string>());
      } else {
        throw Error(ErrorCode::kParse, where + ": 'match' must be a string or array");
      }
    }
    if (auto it = r.find("regex"); it != r.end()) rule.pattern = it->get<std::string>();
    if (auto it = r.find("role"); it != r.end()) {
      rule.role = parse_model_role(it->get<std::string>());
      if (!rule.role) throw Error(ErrorCode::kParse, where + ": unknown role");
    }
    if (auto it = r.find("response"); it != r.end()) {
      rule.responses.push_back(it->get<std::string>());
    } else if (auto it2 = r.find("responses"); it2 != r.end() && it2->is_array()) {
      for (const auto& s : *it2) rule.responses.push_back(s.get<std::string>());
    }
    if (rule.responses.empty()) throw Error(ErrorCode::kParse, where + " has no response");
    script.rules.push_back(std::move(rule));
  }
  return script;
}

MockScript MockScript::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open mock script '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return from_json_text(buf.str());
}

MockBackend::MockBackend(MockScript script, std::string id)
    : id_(std::move(id)), default_response_(std::move(script.default_response)) {
  for (auto& rule : script.rules) {
    CompiledRule compiled;
    if (rule.pattern) {
      try {
        compiled.regex.emplace(*rule.pattern, std::regex::ECMAScript);
      } catch (const std::regex_error& e) {
        throw Error(ErrorCode::kParse, "bad mock regex '" + *rule.pattern + "': " + e.what());
      }
    }
    compiled.rule = std::move(rule);
    rules_.push_back(std::move(compiled));
  }
}

ChatResponse MockBackend::complete(const ChatRequest& request) {
  const auto flat = request.flatten();
  std::lock_guard lock(mutex_);
  ++calls_;
  for (auto& r : rules_) {
    if (r.rule.role && *r.rule.role != request.model_role) continue;
    bool ok = true;
    for (const auto& needle : r.rule.contains) {
      if (flat.find(needle) == std::string::npos) {
        ok = false;
        break;
      }
    }
    std::smatch m;
    if (ok && r.regex) ok = std::regex_search(flat, m, *r.regex);
    if (!ok) continue;
    const auto& responses = r.rule.responses;
    std::string text = responses[std::min(r.hits, responses.size() - 1)];
    ++r.hits;
    // Regex rules may quote capture groups: $1, $&, and $$ for a literal '$'.
    if (r.regex && text.find('$') != std::string::npos) text = m.format(text);
    return ChatResponse{text, {count_tokens(flat), count_tokens(text)}, id_};
  }
  if (default_response_) {
    return ChatResponse{*default_response_, {count_tokens(flat), count_tokens(*default_response_)},
                        id_};
  }
  throw Error(ErrorCode::kUnmatchedRequest,
              "no mock rule matches " + std::string(to_string(request.model_role)) + " request");
}

std::size_t MockBackend::calls() const {
  std::lock_guard lock(mutex_);
  return calls_;
}

ChatResponse CallbackBackend::complete(const ChatRequest& request) {
  std::lock_guard lock(mutex_);
  auto text = handler_(request);
  const auto usage = TokenUsage{count_tokens(request.flatten()), count_tokens(text)};
  return ChatResponse{std::move(text), usage, id_};
}

// ---------------------------------------------------------------------------

HttpChatBackend::HttpChatBackend(std::string url, std::string api_key, std::string model,
                                 int timeout_seconds)
    : url_(std::move(url)),
      api_key_(std::move(api_key)),
      model_(std::move(model)),
      timeout_seconds_(timeout_seconds) {
  parse_url(url_);
}

std::string HttpChatBackend::id() const { return model_.empty() ? url_ : url_ + "#" + model_; }

std::string HttpChatBackend::request_body(const ChatRequest& request) const {
  json body;
  if (!model_.empty()) body["model"] = model_;
  body["messages"] = json::array();
  for (const auto& m : request.messages) {
    body["messages"].push_back({{"role", to_string(m.role)}, {"content", m.content}});
  }
  body["temperature"] = request.temperature;
  body["max_tokens"] = request.max_new_tokens;
  body["stream"] = false;
  return body.dump();
}

ChatResponse HttpChatBackend::parse_response_body(std::string_view body) const {
  json doc;
  try {
    doc = json::parse(body);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kProtocol, std::string("chat response is not JSON: ") + e.what());
  }
  ChatResponse resp;
  resp.backend_id = id();
  try {
    const auto& message = doc.at("choices").at(0).at("message");
    const auto& content = message.at("content");
    resp.content = content.is_null() ? std::string() : content.get<std::string>();
    if (auto it = doc.find("usage"); it != doc.end() && it->is_object()) {
      resp.usage.prompt_tokens = it->value("prompt_tokens", std::size_t{0});
      resp.usage.completion_tokens = it->value("completion_tokens", std::size_t{0});
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kProtocol, std::string("unexpected chat response shape: ") + e.what());
  }
  return resp;
}

ChatResponse HttpChatBackend::complete(const ChatRequest& request) {
  std::vector<std::pair<std::string, std::string>> headers;
  if (!api_key_.empty()) headers.emplace_back("Authorization", "Bearer " + api_key_);
  const auto response = http_post_json(url_, request_body(request), headers, timeout_seconds_);
  if (response.status < 200 || response.status >= 300) {
    throw Error::remote(response.status, response.body.substr(0, 300));
  }
  return parse_response_body(response.body);
}

}  // namespace earco
