#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "narrative/error.hpp"
#include "narrative/io.hpp"
#include "narrative/providers.hpp"

namespace narrative::pipeline {

inline constexpr const char* kToolVersion = "0.1.0";

// Effective configuration, merged in increasing precedence: built-in
// defaults, config file, environment, --set overrides, dedicated flags.
class PipelineConfig {
 public:
  static json defaults();

  // `config_file` may be empty. Relative paths inside the file resolve
  // against the file's directory.
  static PipelineConfig load(const std::optional<fs::path>& config_file,
                             const std::vector<std::string>& overrides = {},
                             const std::optional<std::uint64_t>& seed = std::nullopt,
                             const std::optional<fs::path>& artifacts = std::nullopt);

  const json& raw() const { return raw_; }
  json& raw() { return raw_; }
  std::uint64_t seed() const { return raw_.at("seed").get<std::uint64_t>(); }
  fs::path artifacts() const { return raw_.at("artifacts").get<std::string>(); }

  // Value at a dotted path ("embedding.endpoint"); null when absent.
  json get(const std::string& dotted) const;
  void set(const std::string& dotted, json value);

 private:
  json raw_;
};

// Environment variables read into the configuration.
const std::vector<std::pair<std::string, std::string>>& environment_keys();

// "key.path=value"; value parsed as JSON when possible, else kept as a string.
std::pair<std::string, json> parse_override(const std::string& text);

std::unique_ptr<EmbeddingProvider> make_embedding_provider(const PipelineConfig& config);
std::unique_ptr<GenerationProvider> make_generation_provider(const PipelineConfig& config);

// ---- artifact store ------------------------------------------------------------------

// Exclusive lock on an artifact directory, released on destruction. A lock
// left by a dead process is taken over.
class ArtifactLock {
 public:
  explicit ArtifactLock(const fs::path& artifacts);
  ~ArtifactLock();
  ArtifactLock(const ArtifactLock&) = delete;
  ArtifactLock& operator=(const ArtifactLock&) = delete;

 private:
  fs::path path_;
};

struct Manifest {
  std::string stage;
  json inputs = json::object();
  std::string config_hash;
  std::string tool_version;
  std::string started;
  std::string finished;
  json outputs = json::object();  // relative path -> sha256
  std::string outputs_digest;

  json to_json() const;
  static Manifest from_json(const json& value);
};

std::optional<Manifest> read_manifest(const fs::path& artifacts, const std::string& stage);

// ---- stages ----------------------------------------------------------------------------

const std::vector<std::string>& stage_names();
bool is_stage(const std::string& name);

// Stage configuration digest; a stage's artifacts are stale once this changes.
std::string stage_config_hash(const PipelineConfig& config, const std::string& stage);

struct RunOptions {
  std::ostream* out = nullptr;
  std::istream* in = nullptr;
  std::string annotator;                 // annotate
  std::vector<std::string> annotators;   // intrusion-score: the two primary annotators
  std::optional<std::string> resolver;   // intrusion-score
  bool force = false;
};

enum class StageStatus { ran, up_to_date };

StageStatus run_stage(const std::string& stage, const PipelineConfig& config, const RunOptions& options);

// 0 success, 1 usage, 2 data, 3 provider.
int exit_code_for(ErrorKind kind);

}  // namespace narrative::pipeline
