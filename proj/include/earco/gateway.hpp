#pragma once

#include <array>
#include <atomic>
#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>

#include "earco/chat.hpp"

namespace earco {

/// Hex SHA-256 over a canonical encoding of every request field (role,
/// temperature, token cap, and each message's role and content).
std::string cache_key(const ChatRequest& request);

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{1000};
  double multiplier = 2.0;
};

/// Content-addressed response store. Always memoizes in memory; when a
/// directory is set, responses also persist as `<dir>/<key>.json`.
class ResponseCache {
 public:
  explicit ResponseCache(std::optional<std::filesystem::path> dir = std::nullopt);

  std::optional<ChatResponse> get(const std::string& backend_id, const std::string& key);
  void put(const std::string& backend_id, const std::string& key, const ChatResponse& response);

 private:
  std::optional<std::filesystem::path> dir_;
  std::mutex mutex_;
  std::map<std::string, ChatResponse> memory_;
};

struct GatewayOptions {
  RetryPolicy retry;
  bool cache_enabled = false;
  std::optional<std::filesystem::path> cache_dir;
  std::ptrdiff_t max_in_flight = 4;
};

/// Routes each request to the backend registered for its model role.
/// Safe for concurrent callers.
class Gateway {
 public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  explicit Gateway(GatewayOptions options = {});

  void set_backend(ModelRole role, std::shared_ptr<ChatBackend> backend);
  /// Registers the same backend for every role.
  void set_all_backends(const std::shared_ptr<ChatBackend>& backend);
  bool has_backend(ModelRole role) const;

  /// Tests replace the real sleep to keep backoff instantaneous.
  void set_sleeper(Sleeper sleeper) { sleeper_ = std::move(sleeper); }

  ChatResponse complete(const ChatRequest& request);

  /// complete() invocations for `role`, including cache hits.
  std::size_t requests(ModelRole role) const;
  /// Times a backend was actually invoked for `role` (each retry attempt counts).
  std::size_t backend_calls(ModelRole role) const;
  std::size_t cache_hits() const { return cache_hits_.load(); }
  /// Attempts against remote backends. Zero for a fully offline run.
  std::size_t network_calls() const { return network_calls_.load(); }

 private:
  static std::size_t slot(ModelRole role) { return static_cast<std::size_t>(role); }
  ChatResponse call_with_retry(ChatBackend& backend, const ChatRequest& request);

  GatewayOptions options_;
  std::array<std::shared_ptr<ChatBackend>, 4> backends_;
  std::unique_ptr<ResponseCache> cache_;
  std::counting_semaphore<1024> in_flight_;
  Sleeper sleeper_;
  std::array<std::atomic<std::size_t>, 4> requests_{};
  std::array<std::atomic<std::size_t>, 4> backend_calls_{};
  std::atomic<std::size_t> cache_hits_{0};
  std::atomic<std::size_t> network_calls_{0};
};

}  // namespace earco
