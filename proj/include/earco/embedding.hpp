#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "earco/incident.hpp"

namespace earco {

/// Fixed-length vector of finite floats.
class EmbeddingVector {
 public:
  EmbeddingVector() = default;
  /// Throws kPrecondition when `values` is empty or holds a non-finite entry.
  explicit EmbeddingVector(std::vector<float> values);

  std::size_t dim() const { return values_.size(); }
  std::span<const float> values() const { return values_; }
  float operator[](std::size_t i) const { return values_[i]; }

  bool operator==(const EmbeddingVector&) const = default;

 private:
  std::vector<float> values_;
};

class EmbeddingBackend {
 public:
  virtual ~EmbeddingBackend() = default;
  virtual std::size_t dim() const = 0;
  virtual EmbeddingVector embed(std::string_view text) = 0;
  virtual std::string id() const = 0;
};

/// Offline backend: hashes byte trigrams (FNV-1a) into signed buckets and
/// L2-normalizes. Texts shorter than three bytes hash as a single gram. The
/// empty string maps to the all-zeros vector. Whitespace is significant.
class HashEmbeddingBackend final : public EmbeddingBackend {
 public:
  explicit HashEmbeddingBackend(std::size_t dim);

  std::size_t dim() const override { return dim_; }
  EmbeddingVector embed(std::string_view text) override;
  std::string id() const override;

 private:
  std::size_t dim_;
};

/// OpenAI-style /embeddings endpoint. The declared dim is checked against
/// every reply.
class HttpEmbeddingBackend final : public EmbeddingBackend {
 public:
  HttpEmbeddingBackend(std::string url, std::string api_key, std::string model, std::size_t dim,
                       int timeout_seconds = 60);

  std::size_t dim() const override { return dim_; }
  EmbeddingVector embed(std::string_view text) override;
  std::string id() const override { return url_; }

  /// Parses an embeddings response body; throws kProtocol on shape or dim errors.
  EmbeddingVector parse_response_body(std::string_view body) const;

 private:
  std::string url_;
  std::string api_key_;
  std::string model_;
  std::size_t dim_;
  int timeout_seconds_;
};

/// Title and cleaned summary joined by one space; the title alone when the
/// summary is empty.
std::string incident_query_text(const Incident& incident);

}  // namespace earco
