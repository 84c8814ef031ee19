#pragma once

#include <functional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "narrative/pipeline.hpp"

namespace narrative::pipeline {

struct StageContext {
  const PipelineConfig& config;
  const RunOptions& options;
  std::ostream& out;
  fs::path artifacts;
  fs::path dir;  // where this run writes
  std::set<std::string> available;  // upstream stages with current outputs

  fs::path input(const std::string& stage, const std::string& relative) const { return artifacts / stage / relative; }
};

struct StageSpec {
  std::string name;
  std::vector<std::string> deps;
  std::vector<std::string> config_keys;     // dotted keys hashed into the manifest
  std::vector<std::string> external_files;  // dotted keys naming files outside the store
  std::function<void(StageContext&)> run;
  bool optional_deps = false;  // report: absent upstream stages are tolerated
  bool always_run = false;
  bool in_place = false;  // writes the stage directory directly (annotate)
};

const std::vector<StageSpec>& stage_specs();

void run_report(StageContext& ctx);

}  // namespace narrative::pipeline
