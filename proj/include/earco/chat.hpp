#pragma once

#include <cstddef>
#include <functional>
#include <mutex>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <vector>

namespace earco {

enum class ModelRole { kOptimizer, kGenerator, kSummarizer, kJudge };

inline constexpr ModelRole kAllRoles[] = {ModelRole::kOptimizer, ModelRole::kGenerator,
                                          ModelRole::kSummarizer, ModelRole::kJudge};

std::string_view to_string(ModelRole role);
std::optional<ModelRole> parse_model_role(std::string_view name);

enum class MessageRole { kSystem, kUser, kAssistant };

std::string_view to_string(MessageRole role);

struct ChatMessage {
  MessageRole role = MessageRole::kUser;
  std::string content;

  bool operator==(const ChatMessage&) const = default;
};

struct ChatRequest {
  std::vector<ChatMessage> messages;
  double temperature = 0.0;
  int max_new_tokens = 200;
  ModelRole model_role = ModelRole::kGenerator;

  /// Builds a request with the role's default sampling parameters:
  /// generator 0.0/200, summarizer 0.0/256, judge 0.0/256, optimizer 0.0/1024.
  static ChatRequest for_role(ModelRole role, std::vector<ChatMessage> messages);

  /// Throws kPrecondition unless there is at least one message, the last one
  /// is from the user, temperature is finite and >= 0, and max_new_tokens > 0.
  void validate() const;

  /// "<role>\n" followed by "<message-role>: <content>\n" per message. Mock
  /// rules match against this text.
  std::string flatten() const;

  bool operator==(const ChatRequest&) const = default;
};

struct TokenUsage {
  std::size_t prompt_tokens = 0;
  std::size_t completion_tokens = 0;
};

struct ChatResponse {
  std::string content;
  TokenUsage usage;
  std::string backend_id;
};

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual ChatResponse complete(const ChatRequest& request) = 0;
  virtual std::string id() const = 0;
  /// Remote backends are subject to retries and the in-flight bound and
  /// count toward the gateway's network call counter.
  virtual bool is_remote() const { return false; }
};

struct MockRule {
  /// Every listed substring must occur in the flattened request.
  std::vector<std::string> contains;
  std::optional<std::string> pattern;
  std::optional<ModelRole> role;
  /// Returned in order on successive matches; the last one repeats.
  std::vector<std::string> responses;
};

struct MockScript {
  std::vector<MockRule> rules;
  std::optional<std::string> default_response;

  /// Accepts either a JSON array of rules or {"rules": [...], "default_response": ...}.
  /// A rule is {"match": str | [str...], "regex": str, "role": str,
  /// "response": str | "responses": [str...]}. Responses of a regex rule
  /// may quote capture groups ($1, $&; $$ is a literal '$').
  static MockScript from_json_text(std::string_view text);
  static MockScript load(const std::string& path);
};

/// Deterministic scripted backend: the first matching rule wins.
class MockBackend final : public ChatBackend {
 public:
  explicit MockBackend(MockScript script, std::string id = "mock");

  ChatResponse complete(const ChatRequest& request) override;
  std::string id() const override { return id_; }

  std::size_t calls() const;

 private:
  struct CompiledRule {
    MockRule rule;
    std::optional<std::regex> regex;
    std::size_t hits = 0;
  };

  std::string id_;
  std::vector<CompiledRule> rules_;
  std::optional<std::string> default_response_;
  mutable std::mutex mutex_;
  std::size_t calls_ = 0;
};

/// Backend driven by a callable; handy for tests that need computed replies.
class CallbackBackend final : public ChatBackend {
 public:
  using Handler = std::function<std::string(const ChatRequest&)>;

  explicit CallbackBackend(Handler handler, std::string id = "callback")
      : handler_(std::move(handler)), id_(std::move(id)) {}

  ChatResponse complete(const ChatRequest& request) override;
  std::string id() const override { return id_; }

 private:
  Handler handler_;
  std::string id_;
  std::mutex mutex_;
};

/// OpenAI-style /chat/completions endpoint.
class HttpChatBackend final : public ChatBackend {
 public:
  HttpChatBackend(std::string url, std::string api_key, std::string model = {},
                  int timeout_seconds = 120);

  ChatResponse complete(const ChatRequest& request) override;
  std::string id() const override;
  bool is_remote() const override { return true; }

  /// Wire body sent for `request`.
  std::string request_body(const ChatRequest& request) const;
  /// Parses a chat-completions response body; throws kProtocol when malformed.
  ChatResponse parse_response_body(std::string_view body) const;

 private:
  std::string url_;
  std::string api_key_;
  std::string model_;
  int timeout_seconds_;
};

std::size_t count_tokens(std::string_view text);

}  // namespace earco
