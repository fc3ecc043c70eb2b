#include "earco/gateway.hpp"

#include <openssl/evp.h>

#include <cstdio>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <thread>

#include "earco/error.hpp"

namespace earco {

using json = nlohmann::json;

std::string cache_key(const ChatRequest& request) {
  std::string canonical = "earco-chat-v1\n";
  canonical += to_string(request.model_role);
  canonical.push_back('\n');
  char temp[64];
  std::snprintf(temp, sizeof temp, "%.17g\n", request.temperature);
  canonical += temp;
  canonical += std::to_string(request.max_new_tokens);
  canonical.push_back('\n');
  for (const auto& m : request.messages) {
    canonical += to_string(m.role);
    canonical.push_back('\n');
    canonical += std::to_string(m.content.size());
    canonical.push_back('\n');
    canonical += m.content;
    canonical.push_back('\n');
  }

  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(canonical.data(), canonical.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorCode::kProtocol, "SHA-256 digest failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  hex.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    hex.push_back(kHex[digest[i] >> 4]);
    hex.push_back(kHex[digest[i] & 0xf]);
  }
  return hex;
}

// ---------------------------------------------------------------------------

ResponseCache::ResponseCache(std::optional<std::filesystem::path> dir) : dir_(std::move(dir)) {
  if (dir_) std::filesystem::create_directories(*dir_);
}

std::optional<ChatResponse> ResponseCache::get(const std::string& backend_id,
                                               const std::string& key) {
  std::lock_guard lock(mutex_);
  if (auto it = memory_.find(backend_id + '\n' + key); it != memory_.end()) return it->second;
  if (!dir_) return std::nullopt;

  std::ifstream in(*dir_ / (key + ".json"));
  if (!in) return std::nullopt;
  try {
    const auto doc = json::parse(in);
    if (doc.at("backend_id").get<std::string>() != backend_id) return std::nullopt;
    ChatResponse resp;
    resp.content = doc.at("content").get<std::string>();
    resp.backend_id = backend_id;
    resp.usage.prompt_tokens = doc.value("prompt_tokens", std::size_t{0});
    resp.usage.completion_tokens = doc.value("completion_tokens", std::size_t{0});
    memory_.emplace(backend_id + '\n' + key, resp);
    return resp;
  } catch (const json::exception&) {
    // A damaged entry is treated as a miss and overwritten on the next put.
    return std::nullopt;
  }
}

void ResponseCache::put(const std::string& backend_id, const std::string& key,
                        const ChatResponse& response) {
  std::lock_guard lock(mutex_);
  memory_.insert_or_assign(backend_id + '\n' + key, response);
  if (!dir_) return;
  const json doc = {{"backend_id", backend_id},
                    {"content", response.content},
                    {"prompt_tokens", response.usage.prompt_tokens},
                    {"completion_tokens", response.usage.completion_tokens}};
  const auto final_path = *dir_ / (key + ".json");
  auto tmp_path = final_path;
  tmp_path += ".tmp";
  {
    std::ofstream out(tmp_path, std::ios::binary);
    if (!out) throw Error(ErrorCode::kIo, "cannot write cache entry " + tmp_path.string());
    out << doc.dump();
  }
  std::filesystem::rename(tmp_path, final_path);
}

// ---------------------------------------------------------------------------

Gateway::Gateway(GatewayOptions options)
    : options_(std::move(options)),
      in_flight_(std::max<std::ptrdiff_t>(1, options_.max_in_flight)),
      sleeper_([](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }) {
  if (options_.cache_enabled || options_.cache_dir) {
    cache_ = std::make_unique<ResponseCache>(options_.cache_dir);
  }
}

void Gateway::set_backend(ModelRole role, std::shared_ptr<ChatBackend> backend) {
  backends_[slot(role)] = std::move(backend);
}

void Gateway::set_all_backends(const std::shared_ptr<ChatBackend>& backend) {
  for (const auto role : kAllRoles) set_backend(role, backend);
}

bool Gateway::has_backend(ModelRole role) const { return backends_[slot(role)] != nullptr; }

std::size_t Gateway::requests(ModelRole role) const { return requests_[slot(role)].load(); }

std::size_t Gateway::backend_calls(ModelRole role) const {
  return backend_calls_[slot(role)].load();
}

ChatResponse Gateway::complete(const ChatRequest& request) {
  request.validate();
  ++requests_[slot(request.model_role)];
  auto& backend = backends_[slot(request.model_role)];
  if (!backend) {
    throw Error(ErrorCode::kConfig,
                "no backend configured for role " + std::string(to_string(request.model_role)));
  }

  std::string key;
  if (cache_) {
    key = cache_key(request);
    if (auto hit = cache_->get(backend->id(), key)) {
      ++cache_hits_;
      return *hit;
    }
  }
  auto response = call_with_retry(*backend, request);
  if (cache_) cache_->put(backend->id(), key, response);
  return response;
}

namespace {
bool retryable(const Error& e) {
  if (e.code() == ErrorCode::kTransport) return true;
  if (e.code() == ErrorCode::kRemote && e.status()) {
    return *e.status() >= 500 || *e.status() == 429;
  }
  return false;
}
}  // namespace

ChatResponse Gateway::call_with_retry(ChatBackend& backend, const ChatRequest& request) {
  const bool remote = backend.is_remote();
  const int attempts = std::max(1, options_.retry.max_attempts);
  auto backoff = options_.retry.initial_backoff;
  std::string last_error;
  for (int attempt = 1; attempt <= attempts; ++attempt) {
    ++backend_calls_[slot(request.model_role)];
    try {
      if (!remote) return backend.complete(request);
      ++network_calls_;
      in_flight_.acquire();
      struct Release {
        std::counting_semaphore<1024>& s;
        ~Release() { s.release(); }
      } release{in_flight_};
      return backend.complete(request);
    } catch (const Error& e) {
      if (!retryable(e)) throw;
      last_error = e.what();
    }
    if (attempt < attempts) {
      sleeper_(backoff);
      backoff = std::chrono::milliseconds(
          static_cast<long long>(static_cast<double>(backoff.count()) * options_.retry.multiplier));
    }
  }
  throw Error(ErrorCode::kTransport, backend.id() + " failed after " + std::to_string(attempts) +
                                         " attempts: " + last_error);
}

}  // namespace earco
