#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "narrative/pipeline.hpp"

namespace np = narrative::pipeline;

namespace {

struct CommonOptions {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> config;
  std::optional<std::string> artifacts;
  std::vector<std::string> overrides;
  bool force = false;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--seed", o.seed, "Global seed (default 42)");
  cmd->add_option("--config", o.config, "Pipeline config file (JSON)")->check(CLI::ExistingFile);
  cmd->add_option("--artifacts", o.artifacts, "Artifact directory");
  cmd->add_option("--set", o.overrides, "Override a config key, e.g. --set clustering.ks=[25,50]")->take_all();
}

np::PipelineConfig load_config(const CommonOptions& o) {
  std::optional<narrative::fs::path> config, artifacts;
  if (o.config) config = *o.config;
  if (o.artifacts) artifacts = *o.artifacts;
  return np::PipelineConfig::load(config, o.overrides, o.seed, artifacts);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Narrative chain extraction, clustering and frame prediction"};
  app.require_subcommand(1);
  app.set_version_flag("--version", np::kToolVersion);

  CommonOptions common;
  np::RunOptions run;
  std::string stage;

  for (const auto& name : np::stage_names()) {
    auto* cmd = app.add_subcommand(name, "Run the " + name + " stage");
    add_common(cmd, common);
    if (name != "annotate" && name != "intrusion-score")
      cmd->add_flag("--force", common.force, "Rerun even when the outputs are up to date");
    if (name == "annotate") cmd->add_option("--annotator", run.annotator, "Annotator id")->required();
    if (name == "intrusion-score") {
      cmd->add_option("--annotators", run.annotators, "The two primary annotator ids")->expected(2);
      cmd->add_option("--resolver", run.resolver, "Annotator id resolving disagreements");
    }
    cmd->callback([&stage, name] { stage = name; });
  }
  auto* show = app.add_subcommand("show-config", "Print the effective configuration");
  add_common(show, common);
  show->callback([&stage] { stage = "show-config"; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    const auto config = load_config(common);
    if (stage == "show-config") {
      std::cout << config.raw().dump(2) << "\n";
      return 0;
    }
    run.out = &std::cout;
    run.in = &std::cin;
    run.force = common.force;
    np::run_stage(stage, config, run);
    return 0;
  } catch (const narrative::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return np::exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
