#include "narrative/providers.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include <httplib.h>

#include "narrative/error.hpp"
#include "narrative/random.hpp"

namespace narrative {

void validate_embedding_response(const EmbeddingRequest& request, const EmbeddingResponse& response) {
  require(response.vectors.size() == request.texts.size(), ErrorKind::ProtocolError,
          "embedding response has " + std::to_string(response.vectors.size()) + " vectors for " +
              std::to_string(request.texts.size()) + " texts");
  const Eigen::Index dim = response.vectors.empty() ? 0 : response.vectors.front().size();
  for (const auto& v : response.vectors) {
    require(v.size() == dim && dim > 0, ErrorKind::ProtocolError, "inconsistent embedding dimension");
    require(v.allFinite(), ErrorKind::ProtocolError, "non-finite embedding entry");
  }
  if (request.spans.empty()) return;
  require(response.span_vectors.size() == request.spans.size(), ErrorKind::ProtocolError,
          "span_vectors length does not match request");
  for (std::size_t i = 0; i < request.spans.size(); ++i) {
    require(response.span_vectors[i].size() == request.spans[i].size(), ErrorKind::ProtocolError,
            "span vector count mismatch for text " + std::to_string(i));
    for (const auto& v : response.span_vectors[i])
      require(v.size() == dim && v.allFinite(), ErrorKind::ProtocolError, "bad span vector");
  }
}

Vector pool_span(const std::vector<Vector>& token_vectors, TokenSpan span) {
  require(span.begin < span.end && span.end <= token_vectors.size(), ErrorKind::SpanNotAligned,
          "span [" + std::to_string(span.begin) + ", " + std::to_string(span.end) +
              ") outside " + std::to_string(token_vectors.size()) + " tokens");
  Vector sum = Vector::Zero(token_vectors[span.begin].size());
  for (std::size_t i = span.begin; i < span.end; ++i) sum += token_vectors[i];
  return sum / static_cast<double>(span.end - span.begin);
}

// ---- DiskCache ------------------------------------------------------------------

DiskCache::DiskCache(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

fs::path DiskCache::entry_path(const std::string& key) const {
  require(key.size() >= 2, ErrorKind::InvalidArgument, "cache key too short");
  return dir_ / key.substr(0, 2) / (key + ".json");
}

std::optional<json> DiskCache::get(const std::string& key) const {
  const auto path = entry_path(key);
  std::error_code ec;
  if (!fs::exists(path, ec)) return std::nullopt;
  try {
    return json::parse(read_text(path));
  } catch (const std::exception&) {
    return std::nullopt;  // a torn or foreign file is a miss
  }
}

void DiskCache::put(const std::string& key, const json& value) const {
  write_text_atomic(entry_path(key), value.dump());
}

// ---- HTTP -------------------------------------------------------------------------

HttpEndpoint HttpEndpoint::parse(const std::string& url) {
  const auto scheme_end = url.find("://");
  require(scheme_end != std::string::npos, ErrorKind::InvalidArgument,
          "endpoint '" + url + "' must include a scheme");
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

json post_json_with_retry(const HttpEndpoint& endpoint, const json& body, const RetryPolicy& policy,
                          HttpStats& stats) {
  httplib::Client client(endpoint.base);
  client.set_connection_timeout(policy.timeout);
  client.set_read_timeout(policy.timeout);
  client.set_write_timeout(policy.timeout);
  const std::string payload = body.dump();
  auto backoff = policy.initial_backoff;
  std::string last_error = "no attempt made";
  for (int attempt = 1; attempt <= policy.max_attempts; ++attempt) {
    if (attempt > 1) {
      ++stats.retries;
      std::this_thread::sleep_for(backoff);
      backoff = std::chrono::milliseconds(
          static_cast<long>(static_cast<double>(backoff.count()) * policy.backoff_multiplier));
    }
    ++stats.requests;
    auto result = client.Post(endpoint.path, payload, "application/json");
    if (!result) {
      last_error = "transport error: " + httplib::to_string(result.error());
      continue;
    }
    const int status = result->status;
    if (status >= 200 && status < 300) {
      try {
        return json::parse(result->body);
      } catch (const json::parse_error& e) {
        fail(ErrorKind::ProtocolError, "response body is not JSON: " + std::string(e.what()));
      }
    }
    last_error = "HTTP " + std::to_string(status);
    if (status != 429 && status < 500) break;
  }
  fail(ErrorKind::ProviderUnavailable,
       endpoint.base + endpoint.path + " failed after retries (" + last_error + ")");
}

namespace {

Vector vector_from_json(const json& array) {
  if (!array.is_array()) fail(ErrorKind::ProtocolError, "vector is not an array");
  Vector v(static_cast<Eigen::Index>(array.size()));
  for (std::size_t i = 0; i < array.size(); ++i) {
    if (!array[i].is_number()) fail(ErrorKind::ProtocolError, "vector entry is not a number");
    v(static_cast<Eigen::Index>(i)) = array[i].get<double>();
  }
  return v;
}

json vector_to_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

json response_to_json(const EmbeddingResponse& r) {
  json out;
  out["vectors"] = json::array();
  for (const auto& v : r.vectors) out["vectors"].push_back(vector_to_json(v));
  out["span_vectors"] = json::array();
  for (const auto& per_text : r.span_vectors) {
    json spans = json::array();
    for (const auto& v : per_text) spans.push_back(vector_to_json(v));
    out["span_vectors"].push_back(spans);
  }
  return out;
}

}  // namespace

HttpEmbeddingProvider::HttpEmbeddingProvider(std::string url, std::string model, RetryPolicy policy,
                                             std::optional<fs::path> cache_dir, int max_in_flight)
    : endpoint_(HttpEndpoint::parse(url)),
      model_(std::move(model)),
      policy_(policy),
      in_flight_(std::clamp(max_in_flight, 1, 64)) {
  if (cache_dir) cache_.emplace(*cache_dir);
}

json HttpEmbeddingProvider::request_body(const EmbeddingRequest& request, const std::string& model) {
  json body;
  body["texts"] = request.texts;
  json spans = json::array();
  for (const auto& per_text : request.spans) {
    json list = json::array();
    for (const auto& s : per_text) list.push_back({s.begin, s.end});
    spans.push_back(list);
  }
  body["spans"] = spans;
  if (!model.empty()) body["model"] = model;
  return body;
}

EmbeddingResponse HttpEmbeddingProvider::parse_response(const EmbeddingRequest& request, const json& body) {
  if (!body.is_object() || !body.contains("vectors"))
    fail(ErrorKind::ProtocolError, "embedding response lacks 'vectors'");
  EmbeddingResponse response;
  for (const auto& v : body["vectors"]) response.vectors.push_back(vector_from_json(v));
  if (!request.spans.empty()) {
    if (body.contains("span_vectors")) {
      for (const auto& per_text : body["span_vectors"]) {
        std::vector<Vector> list;
        for (const auto& v : per_text) list.push_back(vector_from_json(v));
        response.span_vectors.push_back(std::move(list));
      }
    } else if (body.contains("token_vectors")) {
      const auto& tokens = body["token_vectors"];
      if (tokens.size() != request.spans.size())
        fail(ErrorKind::ProtocolError, "token_vectors length does not match request");
      for (std::size_t i = 0; i < request.spans.size(); ++i) {
        std::vector<Vector> token_vectors;
        for (const auto& v : tokens[i]) token_vectors.push_back(vector_from_json(v));
        std::vector<Vector> list;
        for (const auto& span : request.spans[i]) list.push_back(pool_span(token_vectors, span));
        response.span_vectors.push_back(std::move(list));
      }
    } else {
      fail(ErrorKind::ProtocolError, "spans requested but response has neither span_vectors nor token_vectors");
    }
  }
  validate_embedding_response(request, response);
  return response;
}

EmbeddingResponse HttpEmbeddingProvider::embed(const EmbeddingRequest& request) {
  if (request.texts.empty()) return {};
  const json body = request_body(request, model_);
  const std::string key = sha256_hex("embed\x1f" + model_ + "\x1f" + body.dump());
  if (cache_) {
    if (auto hit = cache_->get(key)) {
      ++stats_.cache_hits;
      return parse_response(request, *hit);
    }
  }
  in_flight_.acquire();
  json reply;
  try {
    reply = post_json_with_retry(endpoint_, body, policy_, stats_);
  } catch (...) {
    in_flight_.release();
    throw;
  }
  in_flight_.release();
  auto response = parse_response(request, reply);
  if (cache_) cache_->put(key, response_to_json(response));
  return response;
}

HttpGenerationProvider::HttpGenerationProvider(std::string url, std::string model, RetryPolicy policy,
                                               std::optional<fs::path> cache_dir, int max_in_flight)
    : endpoint_(HttpEndpoint::parse(url)),
      model_(std::move(model)),
      policy_(policy),
      in_flight_(std::clamp(max_in_flight, 1, 64)) {
  if (cache_dir) cache_.emplace(*cache_dir);
}

json HttpGenerationProvider::request_body(const GenerationRequest& request, const std::string& model) {
  require(request.temperature >= 0.0, ErrorKind::InvalidArgument, "temperature must be >= 0");
  json body{{"system", request.system},
            {"user", request.user},
            {"max_tokens", request.max_tokens},
            {"temperature", request.temperature}};
  if (!model.empty()) body["model"] = model;
  return body;
}

GenerationResponse HttpGenerationProvider::generate(const GenerationRequest& request) {
  const json body = request_body(request, model_);
  const std::string key = sha256_hex("generate\x1f" + model_ + "\x1f" + body.dump());
  if (cache_) {
    if (auto hit = cache_->get(key); hit && hit->contains("text")) {
      ++stats_.cache_hits;
      return {(*hit)["text"].get<std::string>()};
    }
  }
  in_flight_.acquire();
  json reply;
  try {
    reply = post_json_with_retry(endpoint_, body, policy_, stats_);
  } catch (...) {
    in_flight_.release();
    throw;
  }
  in_flight_.release();
  if (!reply.is_object() || !reply.contains("text") || !reply["text"].is_string())
    fail(ErrorKind::ProtocolError, "generation response lacks string 'text'");
  auto text = reply["text"].get<std::string>();
  if (trim(text).empty()) fail(ErrorKind::EmptyGeneration, "provider returned empty text");
  if (cache_) cache_->put(key, {{"text", text}});
  return {text};
}

// ---- static vectors ------------------------------------------------------------

StaticVectorTable StaticVectorTable::load(const fs::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot open " + path.string());
  StaticVectorTable table;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    auto fields = split_whitespace(line);
    if (fields.empty()) continue;
    // word2vec "count dim" header.
    const auto numeric = [](const std::string& f) {
      return std::all_of(f.begin(), f.end(), [](unsigned char c) { return std::isdigit(c) != 0; });
    };
    if (line_number == 1 && fields.size() == 2 && numeric(fields[0]) && numeric(fields[1])) continue;
    const auto where = path.string() + ":" + std::to_string(line_number);
    require(fields.size() >= 2, ErrorKind::MalformedRecord, where + ": word without vector");
    Vector v(static_cast<Eigen::Index>(fields.size() - 1));
    for (std::size_t i = 1; i < fields.size(); ++i) {
      try {
        std::size_t used = 0;
        v(static_cast<Eigen::Index>(i - 1)) = std::stod(fields[i], &used);
        if (used != fields[i].size()) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        fail(ErrorKind::MalformedRecord, where + ": bad number '" + fields[i] + "'");
      }
    }
    if (table.dimension_ == 0) table.dimension_ = static_cast<std::size_t>(v.size());
    require(static_cast<std::size_t>(v.size()) == table.dimension_, ErrorKind::MalformedRecord,
            where + ": expected " + std::to_string(table.dimension_) + " values");
    table.table_.insert_or_assign(fields[0], std::move(v));
  }
  return table;
}

void StaticVectorTable::add(const std::string& word, Vector vector) {
  if (dimension_ == 0) dimension_ = static_cast<std::size_t>(vector.size());
  require(static_cast<std::size_t>(vector.size()) == dimension_, ErrorKind::DimensionMismatch,
          "vector for '" + word + "' has wrong dimension");
  table_.insert_or_assign(word, std::move(vector));
}

Vector StaticVectorTable::lookup(const std::string& word) const {
  auto it = table_.find(word);
  if (it == table_.end()) it = table_.find(to_lower(word));
  if (it == table_.end()) {
    ++oov_;
    return Vector::Zero(static_cast<Eigen::Index>(dimension_));
  }
  return it->second;
}

Vector StaticVectorTable::phrase_embedding(const std::string& phrase) const {
  const auto words = split_whitespace(phrase);
  Vector sum = Vector::Zero(static_cast<Eigen::Index>(dimension_));
  if (words.empty()) return sum;
  for (const auto& w : words) sum += lookup(w);
  return sum / static_cast<double>(words.size());
}

// ---- stubs --------------------------------------------------------------------------

Vector hashed_unit_vector(const std::string& text, std::uint64_t seed, std::size_t dimension) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a 64
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::uint64_t state = mix_seed(seed, h);
  Vector v(static_cast<Eigen::Index>(dimension));
  for (std::size_t i = 0; i < dimension; ++i) {
    state = mix_seed(state, i);
    v(static_cast<Eigen::Index>(i)) = static_cast<double>(state >> 11) * 0x1.0p-52 - 1.0;
  }
  const double norm = v.norm();
  if (norm == 0.0) {
    v.setZero();
    v(0) = 1.0;
    return v;
  }
  return v / norm;
}

std::string StubEmbeddingProvider::model_id() const {
  return "stub-embedding-" + std::to_string(seed_) + "-" + std::to_string(dimension_);
}

EmbeddingResponse StubEmbeddingProvider::embed(const EmbeddingRequest& request) {
  ++calls_;
  EmbeddingResponse response;
  for (const auto& text : request.texts) response.vectors.push_back(hashed_unit_vector(text, seed_, dimension_));
  for (std::size_t i = 0; i < request.spans.size(); ++i) {
    std::vector<Vector> tokens;
    for (const auto& tok : split_whitespace(request.texts.at(i)))
      tokens.push_back(hashed_unit_vector(to_lower(tok), seed_ ^ 0x5bd1e995ULL, dimension_));
    std::vector<Vector> pooled;
    for (const auto& span : request.spans[i]) pooled.push_back(pool_span(tokens, span));
    response.span_vectors.push_back(std::move(pooled));
  }
  return response;
}

GenerationResponse StubGenerationProvider::generate(const GenerationRequest& request) {
  ++calls_;
  static const std::string kMarker = "Event Chain: ";
  const auto start = request.user.find(kMarker);
  require(start != std::string::npos, ErrorKind::ProtocolError, "stub generator: no event chain in prompt");
  const auto chain_start = start + kMarker.size();
  const auto end = request.user.find(". Generate", chain_start);
  std::string chain = request.user.substr(chain_start, end == std::string::npos ? std::string::npos : end - chain_start);
  std::string words;
  for (char c : chain) {
    if (c == '(' || c == ')' || c == ',') {
      if (!words.empty() && words.back() != ' ') words += ' ';
      continue;
    }
    if (c == ' ' && (words.empty() || words.back() == ' ')) continue;
    words += c;
  }
  return {"Narrative: " + trim(words) + "."};
}

}  // namespace narrative
