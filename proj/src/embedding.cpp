#include "earco/embedding.hpp"

#include <cmath>
#include <cstdint>
#include <nlohmann/json.hpp>

#include "earco/error.hpp"
#include "earco/http.hpp"

namespace earco {

EmbeddingVector::EmbeddingVector(std::vector<float> values) : values_(std::move(values)) {
  if (values_.empty()) throw Error(ErrorCode::kPrecondition, "embedding must have dim >= 1");
  for (const float v : values_) {
    if (!std::isfinite(v)) throw Error(ErrorCode::kPrecondition, "embedding has a non-finite value");
  }
}

namespace {
std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}
}  // namespace

HashEmbeddingBackend::HashEmbeddingBackend(std::size_t dim) : dim_(dim) {
  if (dim_ == 0) throw Error(ErrorCode::kPrecondition, "embedding dim must be positive");
}

std::string HashEmbeddingBackend::id() const { return "hash-trigram-" + std::to_string(dim_); }

EmbeddingVector HashEmbeddingBackend::embed(std::string_view text) {
  std::vector<double> acc(dim_, 0.0);
  const auto add = [&](std::string_view gram) {
    const auto h = fnv1a(gram);
    acc[h % dim_] += (h >> 63) != 0 ? -1.0 : 1.0;
  };
  if (!text.empty()) {
    if (text.size() < 3) {
      add(text);
    } else {
      for (std::size_t i = 0; i + 3 <= text.size(); ++i) add(text.substr(i, 3));
    }
  }
  double norm = 0.0;
  for (const double v : acc) norm += v * v;
  norm = std::sqrt(norm);
  std::vector<float> out(dim_, 0.0f);
  if (norm > 0.0) {
    for (std::size_t i = 0; i < dim_; ++i) out[i] = static_cast<float>(acc[i] / norm);
  }
  return EmbeddingVector(std::move(out));
}

HttpEmbeddingBackend::HttpEmbeddingBackend(std::string url, std::string api_key, std::string model,
                                           std::size_t dim, int timeout_seconds)
    : url_(std::move(url)),
      api_key_(std::move(api_key)),
      model_(std::move(model)),
      dim_(dim),
      timeout_seconds_(timeout_seconds) {
  if (dim_ == 0) throw Error(ErrorCode::kPrecondition, "embedding dim must be positive");
  parse_url(url_);
}

EmbeddingVector HttpEmbeddingBackend::parse_response_body(std::string_view body) const {
  using json = nlohmann::json;
  std::vector<float> values;
  try {
    const auto doc = json::parse(body);
    for (const auto& v : doc.at("data").at(0).at("embedding")) values.push_back(v.get<float>());
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kProtocol, std::string("unexpected embedding response: ") + e.what());
  }
  if (values.size() != dim_) {
    throw Error(ErrorCode::kProtocol, "embedding endpoint returned dim " +
                                          std::to_string(values.size()) + ", expected " +
                                          std::to_string(dim_));
  }
  try {
    return EmbeddingVector(std::move(values));
  } catch (const Error& e) {
    throw Error(ErrorCode::kProtocol, e.what());
  }
}

EmbeddingVector HttpEmbeddingBackend::embed(std::string_view text) {
  nlohmann::json body = {{"input", std::string(text)}};
  if (!model_.empty()) body["model"] = model_;
  std::vector<std::pair<std::string, std::string>> headers;
  if (!api_key_.empty()) headers.emplace_back("Authorization", "Bearer " + api_key_);
  const auto resp = http_post_json(url_, body.dump(), headers, timeout_seconds_);
  if (resp.status < 200 || resp.status >= 300) {
    throw Error::remote(resp.status, resp.body.substr(0, 300));
  }
  return parse_response_body(resp.body);
}

std::string incident_query_text(const Incident& incident) {
  if (incident.cleaned_summary.empty()) return incident.title;
  return incident.title + " " + incident.cleaned_summary;
}

}  // namespace earco
