#include <fcntl.h>
#include <signal.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstdlib>
#include <cstring>

#include "narrative/pipeline.hpp"

namespace narrative::pipeline {

json PipelineConfig::defaults() {
  return json::parse(R"({
  "seed": 42,
  "artifacts": "artifacts",
  "corpus": {"path": null, "parses": null, "labels": [], "test_fraction": 0.2, "salience_keep_fraction": 1.0},
  "kg": {"path": null, "phrase_parses": null, "min_unique_pairs": 5, "none_keep_fraction": 1.0},
  "embedding": {"provider": "http", "endpoint": null, "model": "sentence-transformers/all-MiniLM-L6-v2",
                "dimension": 64, "stub_seed": 42, "max_in_flight": 4, "batch_size": 64},
  "generation": {"provider": "http", "endpoint": null, "model": "meta-llama/Llama-3.1-8B-Instruct",
                 "parallelism": 4},
  "static_vectors": null,
  "relation": {"hidden_dim": 100, "learning_rate": 2e-5, "max_epochs": 100, "batch_size": 8, "max_tokens": 256,
               "patience": 3, "class_weights": [], "warmup_fraction": 0.1, "weight_decay": 0.01,
               "val_fraction": 0.1, "folds": 5},
  "chains": {"max_pairs": null, "min_confidence": 0.0},
  "expansion": {"method": "llm"},
  "clustering": {"ks": [25, 50, 75, 100, 125, 150, 175, 200], "max_iters": 300, "tol": 1e-4},
  "framing": {
    "l2": 0.01,
    "lda": {"min_collection_freq": 3, "min_doc_freq": 0, "remove_top_words": 5, "iterations": 1000,
            "alpha": 0.1, "beta": 0.01, "pmi_weighting": false, "infer_iterations": 100},
    "neural": {"k": null, "dropout": 0.3, "hidden_dim": 64, "batch_size": 32, "max_epochs": 25,
               "learning_rate": 2e-5, "val_fraction": 0.1, "patience": 3, "seeds": [7, 14, 21, 28, 35]}
  },
  "intrusion": {"k": null, "items": 40, "top_fraction": 0.25},
  "mi": {"k": null, "top": 5}
})");
}

const std::vector<std::pair<std::string, std::string>>& environment_keys() {
  static const std::vector<std::pair<std::string, std::string>> keys{
      {"NARRATIVE_EMBEDDING_ENDPOINT", "embedding.endpoint"},
      {"NARRATIVE_EMBEDDING_MODEL", "embedding.model"},
      {"NARRATIVE_GENERATION_ENDPOINT", "generation.endpoint"},
      {"NARRATIVE_GENERATION_MODEL", "generation.model"},
  };
  return keys;
}

namespace {

json::json_pointer pointer_of(const std::string& dotted) {
  require(!dotted.empty(), ErrorKind::InvalidArgument, "empty configuration key");
  std::string ptr;
  for (const auto& part : split(dotted, '.')) {
    require(!part.empty(), ErrorKind::InvalidArgument, "malformed configuration key '" + dotted + "'");
    ptr += "/" + part;
  }
  return json::json_pointer(ptr);
}

void deep_merge(json& base, const json& patch) {
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    if (it.value().is_object() && base.contains(it.key()) && base[it.key()].is_object())
      deep_merge(base[it.key()], it.value());
    else
      base[it.key()] = it.value();
  }
}

const std::vector<std::string>& path_keys() {
  static const std::vector<std::string> keys{"artifacts",     "corpus.path",       "corpus.parses",
                                             "kg.path",       "kg.phrase_parses",  "static_vectors"};
  return keys;
}

}  // namespace

json PipelineConfig::get(const std::string& dotted) const {
  const auto ptr = pointer_of(dotted);
  return raw_.contains(ptr) ? raw_.at(ptr) : json();
}

void PipelineConfig::set(const std::string& dotted, json value) { raw_[pointer_of(dotted)] = std::move(value); }

std::pair<std::string, json> parse_override(const std::string& text) {
  const auto eq = text.find('=');
  require(eq != std::string::npos && eq > 0, ErrorKind::InvalidArgument,
          "override '" + text + "' must look like key.path=value");
  const std::string key = trim(text.substr(0, eq));
  const std::string value = text.substr(eq + 1);
  try {
    return {key, json::parse(value)};
  } catch (const json::exception&) {
    return {key, json(value)};
  }
}

PipelineConfig PipelineConfig::load(const std::optional<fs::path>& config_file,
                                    const std::vector<std::string>& overrides,
                                    const std::optional<std::uint64_t>& seed,
                                    const std::optional<fs::path>& artifacts) {
  PipelineConfig config;
  config.raw_ = defaults();
  if (config_file) {
    json file;
    try {
      file = read_json(*config_file);
    } catch (const Error& e) {
      fail(ErrorKind::InvalidArgument, "cannot read config " + config_file->string() + ": " + e.what());
    }
    require(file.is_object(), ErrorKind::InvalidArgument, config_file->string() + ": config must be a JSON object");
    const fs::path base = fs::absolute(*config_file).parent_path();
    PipelineConfig from_file;
    from_file.raw_ = file;
    for (const auto& key : path_keys()) {
      const auto v = from_file.get(key);
      if (v.is_string() && fs::path(v.get<std::string>()).is_relative())
        from_file.set(key, (base / v.get<std::string>()).lexically_normal().string());
    }
    deep_merge(config.raw_, from_file.raw_);
  }
  for (const auto& [env, key] : environment_keys())
    if (const char* value = std::getenv(env.c_str()); value && *value) config.set(key, std::string(value));
  for (const auto& text : overrides) {
    auto [key, value] = parse_override(text);
    config.set(key, std::move(value));
  }
  if (seed) config.set("seed", *seed);
  if (artifacts) config.set("artifacts", artifacts->string());
  require(config.raw_.at("seed").is_number_unsigned() || config.raw_.at("seed").is_number_integer(),
          ErrorKind::InvalidArgument, "seed must be a non-negative integer");
  require(config.raw_.at("artifacts").is_string(), ErrorKind::InvalidArgument, "artifacts must be a path");
  return config;
}

std::unique_ptr<EmbeddingProvider> make_embedding_provider(const PipelineConfig& config) {
  const auto kind = config.get("embedding.provider").get<std::string>();
  if (kind == "stub")
    return std::make_unique<StubEmbeddingProvider>(config.get("embedding.stub_seed").get<std::uint64_t>(),
                                                   config.get("embedding.dimension").get<std::size_t>());
  require(kind == "http", ErrorKind::InvalidArgument, "embedding.provider must be http or stub");
  const auto endpoint = config.get("embedding.endpoint");
  require(endpoint.is_string() && !endpoint.get<std::string>().empty(), ErrorKind::InvalidArgument,
          "embedding.endpoint is not configured (set it, NARRATIVE_EMBEDDING_ENDPOINT, or embedding.provider=stub)");
  return std::make_unique<HttpEmbeddingProvider>(endpoint.get<std::string>(),
                                                 config.get("embedding.model").get<std::string>(), RetryPolicy{},
                                                 config.artifacts() / "cache" / "embedding",
                                                 config.get("embedding.max_in_flight").get<int>());
}

std::unique_ptr<GenerationProvider> make_generation_provider(const PipelineConfig& config) {
  const auto kind = config.get("generation.provider").get<std::string>();
  if (kind == "stub") return std::make_unique<StubGenerationProvider>();
  require(kind == "http", ErrorKind::InvalidArgument, "generation.provider must be http or stub");
  const auto endpoint = config.get("generation.endpoint");
  require(endpoint.is_string() && !endpoint.get<std::string>().empty(), ErrorKind::InvalidArgument,
          "generation.endpoint is not configured (set it, NARRATIVE_GENERATION_ENDPOINT, or generation.provider=stub)");
  return std::make_unique<HttpGenerationProvider>(endpoint.get<std::string>(),
                                                  config.get("generation.model").get<std::string>(), RetryPolicy{},
                                                  config.artifacts() / "cache" / "generation",
                                                  config.get("generation.parallelism").get<int>());
}

// ---- lock ------------------------------------------------------------------------------

ArtifactLock::ArtifactLock(const fs::path& artifacts) : path_(artifacts / ".lock") {
  fs::create_directories(artifacts);
  for (int attempt = 0; attempt < 2; ++attempt) {
    const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd >= 0) {
      const auto pid = std::to_string(::getpid()) + "\n";
      [[maybe_unused]] auto written = ::write(fd, pid.data(), pid.size());
      ::close(fd);
      return;
    }
    require(errno == EEXIST, ErrorKind::Io, "cannot create lock " + path_.string() + ": " + std::strerror(errno));
    long holder = 0;
    try {
      holder = std::stol(trim(read_text(path_)));
    } catch (const std::exception&) {
      holder = 0;
    }
    if (holder > 0 && (::kill(static_cast<pid_t>(holder), 0) == 0 || errno == EPERM))
      fail(ErrorKind::Locked, "artifact directory is locked by process " + std::to_string(holder) + " (" +
                                  path_.string() + ")");
    std::error_code ec;
    fs::remove(path_, ec);
  }
  fail(ErrorKind::Locked, "could not acquire " + path_.string());
}

ArtifactLock::~ArtifactLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

// ---- manifests -------------------------------------------------------------------------

json Manifest::to_json() const {
  return {{"stage", stage},
          {"inputs", inputs},
          {"config_hash", config_hash},
          {"tool_version", tool_version},
          {"started", started},
          {"finished", finished},
          {"outputs", outputs},
          {"outputs_digest", outputs_digest}};
}

Manifest Manifest::from_json(const json& v) {
  Manifest m;
  m.stage = v.at("stage").get<std::string>();
  m.inputs = v.value("inputs", json::object());
  m.config_hash = v.at("config_hash").get<std::string>();
  m.tool_version = v.value("tool_version", "");
  m.started = v.value("started", "");
  m.finished = v.value("finished", "");
  m.outputs = v.value("outputs", json::object());
  m.outputs_digest = v.value("outputs_digest", "");
  return m;
}

std::optional<Manifest> read_manifest(const fs::path& artifacts, const std::string& stage) {
  const auto path = artifacts / stage / "manifest.json";
  if (!fs::exists(path)) return std::nullopt;
  try {
    return Manifest::from_json(read_json(path));
  } catch (const std::exception& e) {
    fail(ErrorKind::MalformedRecord, path.string() + ": " + e.what());
  }
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument:
      return 1;
    case ErrorKind::ProviderUnavailable:
    case ErrorKind::ProtocolError:
    case ErrorKind::EmptyGeneration:
      return 3;
    default:
      return 2;
  }
}

}  // namespace narrative::pipeline
