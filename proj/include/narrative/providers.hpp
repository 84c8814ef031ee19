#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <unordered_map>
#include <vector>

#include "narrative/io.hpp"
#include "narrative/linalg.hpp"

namespace narrative {

// Half-open range of whitespace token positions within a text.
struct TokenSpan {
  std::size_t begin = 0;
  std::size_t end = 0;

  bool operator==(const TokenSpan&) const = default;
};

struct EmbeddingRequest {
  std::vector<std::string> texts;
  // Either empty, or one (possibly empty) span list per text.
  std::vector<std::vector<TokenSpan>> spans;
};

struct EmbeddingResponse {
  std::vector<Vector> vectors;
  std::vector<std::vector<Vector>> span_vectors;
};

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual EmbeddingResponse embed(const EmbeddingRequest& request) = 0;
  virtual std::string model_id() const = 0;
};

struct GenerationRequest {
  std::string system;
  std::string user;
  int max_tokens = 4096;
  double temperature = 0.1;
};

struct GenerationResponse {
  std::string text;
};

class GenerationProvider {
 public:
  virtual ~GenerationProvider() = default;
  virtual GenerationResponse generate(const GenerationRequest& request) = 0;
  virtual std::string model_id() const = 0;
};

// Checks response shape against the request; raises ProtocolError.
void validate_embedding_response(const EmbeddingRequest& request, const EmbeddingResponse& response);

// Mean of the token vectors in [span.begin, span.end).
Vector pool_span(const std::vector<Vector>& token_vectors, TokenSpan span);

// ---- cache ----------------------------------------------------------------

// One file per key (hex content hash) under `dir`. Writes go through a temp
// file + rename, so concurrent writers never expose partial entries.
class DiskCache {
 public:
  explicit DiskCache(fs::path dir);

  std::optional<json> get(const std::string& key) const;
  void put(const std::string& key, const json& value) const;
  const fs::path& dir() const { return dir_; }

 private:
  fs::path entry_path(const std::string& key) const;
  fs::path dir_;
};

// ---- HTTP -------------------------------------------------------------------

struct RetryPolicy {
  int max_attempts = 4;
  std::chrono::milliseconds initial_backoff{200};
  double backoff_multiplier = 2.0;
  std::chrono::seconds timeout{120};
};

struct HttpEndpoint {
  std::string base;  // scheme://host:port
  std::string path;  // /embed

  static HttpEndpoint parse(const std::string& url);
};

struct HttpStats {
  std::atomic<std::size_t> requests{0};
  std::atomic<std::size_t> cache_hits{0};
  std::atomic<std::size_t> retries{0};
};

// POSTs JSON with retries and exponential backoff. 5xx, 429 and transport
// errors are retried; other non-2xx fail immediately. Exhaustion raises
// ProviderUnavailable.
json post_json_with_retry(const HttpEndpoint& endpoint, const json& body, const RetryPolicy& policy,
                          HttpStats& stats);

// Wire: {"texts": [...], "spans": [[[b, e], ...], ...]} ->
//       {"vectors": [[...]], "span_vectors": [[[...]]]}.
// When the service omits span_vectors but returns "token_vectors", spans are
// pooled client-side.
class HttpEmbeddingProvider : public EmbeddingProvider {
 public:
  HttpEmbeddingProvider(std::string url, std::string model, RetryPolicy policy = {},
                        std::optional<fs::path> cache_dir = std::nullopt, int max_in_flight = 4);

  EmbeddingResponse embed(const EmbeddingRequest& request) override;
  std::string model_id() const override { return model_; }
  const HttpStats& stats() const { return stats_; }

  static json request_body(const EmbeddingRequest& request, const std::string& model);
  static EmbeddingResponse parse_response(const EmbeddingRequest& request, const json& body);

 private:
  HttpEndpoint endpoint_;
  std::string model_;
  RetryPolicy policy_;
  std::optional<DiskCache> cache_;
  std::counting_semaphore<64> in_flight_;
  HttpStats stats_;
};

// Wire: {"system", "user", "max_tokens", "temperature"} -> {"text"}.
class HttpGenerationProvider : public GenerationProvider {
 public:
  HttpGenerationProvider(std::string url, std::string model, RetryPolicy policy = {},
                         std::optional<fs::path> cache_dir = std::nullopt, int max_in_flight = 4);

  GenerationResponse generate(const GenerationRequest& request) override;
  std::string model_id() const override { return model_; }
  const HttpStats& stats() const { return stats_; }

  static json request_body(const GenerationRequest& request, const std::string& model);

 private:
  HttpEndpoint endpoint_;
  std::string model_;
  RetryPolicy policy_;
  std::optional<DiskCache> cache_;
  std::counting_semaphore<64> in_flight_;
  HttpStats stats_;
};

// ---- static word vectors ------------------------------------------------------

// Text file: a word followed by its D reals on each line.
class StaticVectorTable {
 public:
  static StaticVectorTable load(const fs::path& path);

  std::size_t dimension() const { return dimension_; }
  std::size_t size() const { return table_.size(); }

  // Zero vector for out-of-vocabulary words (counted).
  Vector lookup(const std::string& word) const;
  Vector phrase_embedding(const std::string& phrase) const;
  std::size_t oov_count() const { return oov_; }
  void add(const std::string& word, Vector vector);

 private:
  std::size_t dimension_ = 0;
  std::unordered_map<std::string, Vector> table_;
  mutable std::size_t oov_ = 0;
};

// ---- deterministic stubs --------------------------------------------------------

// Unit vector derived from a seeded hash of `text`; identical on every platform.
Vector hashed_unit_vector(const std::string& text, std::uint64_t seed, std::size_t dimension);

// Sentence vectors hash the whole text; span vectors average per-token hashes.
class StubEmbeddingProvider : public EmbeddingProvider {
 public:
  explicit StubEmbeddingProvider(std::uint64_t seed = 42, std::size_t dimension = 64)
      : seed_(seed), dimension_(dimension) {}

  EmbeddingResponse embed(const EmbeddingRequest& request) override;
  std::string model_id() const override;
  std::size_t calls() const { return calls_; }

 private:
  std::uint64_t seed_;
  std::size_t dimension_;
  std::atomic<std::size_t> calls_{0};
};

// Echoes the chain tuple found after "Event Chain: " in the user prompt.
class StubGenerationProvider : public GenerationProvider {
 public:
  GenerationResponse generate(const GenerationRequest& request) override;
  std::string model_id() const override { return "stub-generator"; }
  std::size_t calls() const { return calls_; }

 private:
  std::atomic<std::size_t> calls_{0};
};

}  // namespace narrative
