#include <algorithm>
#include <chrono>
#include <ctime>
#include <functional>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

#include "narrative/chains.hpp"
#include "narrative/clustering.hpp"
#include "narrative/corpus.hpp"
#include "narrative/evaluation.hpp"
#include "narrative/events.hpp"
#include "narrative/expansion.hpp"
#include "narrative/framing.hpp"
#include "narrative/kg_distill.hpp"
#include "narrative/pipeline.hpp"
#include "narrative/relation_model.hpp"
#include "pipeline_internal.hpp"

namespace narrative::pipeline {

namespace {

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

json hash_outputs(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().filename() != "manifest.json") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  json out = json::object();
  for (const auto& f : files) out[fs::relative(f, dir).generic_string()] = sha256_file(f);
  return out;
}

bool outputs_intact(const fs::path& dir, const json& outputs) {
  for (auto it = outputs.begin(); it != outputs.end(); ++it) {
    const auto path = dir / it.key();
    if (!fs::exists(path) || sha256_file(path) != it.value().get<std::string>()) return false;
  }
  return true;
}

const StageSpec& spec_of(const std::string& name) {
  for (const auto& s : stage_specs())
    if (s.name == name) return s;
  fail(ErrorKind::InvalidArgument, "unknown stage '" + name + "'");
}

// Ancestors must exist, carry the current config hash, and have been built
// from the outputs their own upstream stages hold now.
void check_fresh(const PipelineConfig& config, const std::string& stage, std::set<std::string>& checked) {
  if (!checked.insert(stage).second) return;
  const auto manifest = read_manifest(config.artifacts(), stage);
  const auto& spec = spec_of(stage);
  require(manifest.has_value(), ErrorKind::MissingArtifact,
          "outputs of '" + stage + "' not found in " + config.artifacts().string() + "; run `narrative " + stage + "` first");
  require(manifest->config_hash == stage_config_hash(config, stage), ErrorKind::StaleArtifact,
          "'" + stage + "' was built with a different configuration; rerun `narrative " + stage + "`");
  for (const auto& dep : spec.deps) {
    const auto upstream = read_manifest(config.artifacts(), dep);
    if (!upstream && spec.optional_deps) continue;
    require(upstream.has_value(), ErrorKind::MissingArtifact,
            "outputs of '" + dep + "' not found; run `narrative " + dep + "` first");
    require(manifest->inputs.value(dep, "") == upstream->outputs_digest, ErrorKind::StaleArtifact,
            "'" + stage + "' is older than '" + dep + "'; rerun `narrative " + stage + "`");
    check_fresh(config, dep, checked);
  }
}

json collect_inputs(const PipelineConfig& config, const StageSpec& spec) {
  json inputs = json::object();
  std::set<std::string> checked;
  for (const auto& dep : spec.deps) {
    const auto manifest = read_manifest(config.artifacts(), dep);
    if (spec.optional_deps) {
      if (!manifest) continue;
      try {
        check_fresh(config, dep, checked);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::StaleArtifact && e.kind() != ErrorKind::MissingArtifact) throw;
        continue;
      }
    } else {
      check_fresh(config, dep, checked);
    }
    inputs[dep] = manifest->outputs_digest;
  }
  for (const auto& key : spec.external_files) {
    const auto value = config.get(key);
    if (value.is_null()) continue;
    const fs::path path = value.get<std::string>();
    require(fs::exists(path), ErrorKind::Io, key + ": " + path.string() + " does not exist");
    inputs["file:" + key] = sha256_file(path);
  }
  return inputs;
}

}  // namespace

const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& s : stage_specs()) out.push_back(s.name);
    return out;
  }();
  return names;
}

bool is_stage(const std::string& name) {
  const auto& names = stage_names();
  return std::find(names.begin(), names.end(), name) != names.end();
}

std::string stage_config_hash(const PipelineConfig& config, const std::string& stage) {
  const auto& spec = spec_of(stage);
  json payload = {{"stage", stage}, {"seed", config.seed()}};
  for (const auto& key : spec.config_keys) payload["config"][key] = config.get(key);
  return sha256_hex(payload.dump());
}

StageStatus run_stage(const std::string& stage, const PipelineConfig& config, const RunOptions& options) {
  const auto& spec = spec_of(stage);
  std::ostream& out = options.out ? *options.out : std::cout;
  const fs::path artifacts = config.artifacts();
  ArtifactLock lock(artifacts);

  Manifest manifest;
  manifest.stage = stage;
  manifest.inputs = collect_inputs(config, spec);
  manifest.config_hash = stage_config_hash(config, stage);
  manifest.tool_version = kToolVersion;

  const fs::path final_dir = artifacts / stage;
  if (!spec.always_run && !options.force) {
    if (const auto previous = read_manifest(artifacts, stage);
        previous && previous->config_hash == manifest.config_hash && previous->inputs == manifest.inputs &&
        outputs_intact(final_dir, previous->outputs)) {
      out << stage << ": up to date (" << final_dir.string() << ")\n";
      return StageStatus::up_to_date;
    }
  }

  const fs::path work_dir = spec.in_place ? final_dir : artifacts / ("." + stage + ".tmp");
  if (!spec.in_place) fs::remove_all(work_dir);
  fs::create_directories(work_dir);

  StageContext ctx{config, options, out, artifacts, work_dir, {}};
  for (const auto& dep : spec.deps)
    if (manifest.inputs.contains(dep)) ctx.available.insert(dep);
  manifest.started = utc_now();
  try {
    spec.run(ctx);
  } catch (...) {
    if (!spec.in_place) {
      std::error_code ec;
      fs::remove_all(work_dir, ec);
    }
    throw;
  }
  manifest.finished = utc_now();
  manifest.outputs = hash_outputs(work_dir);
  manifest.outputs_digest = sha256_hex(manifest.outputs.dump());
  write_json(work_dir / "manifest.json", manifest.to_json());
  if (!spec.in_place) {
    fs::remove_all(final_dir);
    fs::rename(work_dir, final_dir);
  }
  out << stage << ": wrote " << manifest.outputs.size() << " file(s) to " << final_dir.string() << "\n";
  return StageStatus::ran;
}

}  // namespace narrative::pipeline
