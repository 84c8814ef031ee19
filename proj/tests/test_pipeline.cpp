#include <doctest.h>

#include <cstdlib>
#include <sstream>

#include "narrative/error.hpp"
#include "narrative/pipeline.hpp"
#include "test_util.hpp"

using namespace narrative;
namespace np = narrative::pipeline;

namespace {

const std::string kFixtures = NARRATIVE_FIXTURES;

np::PipelineConfig smoke_config(const testutil::TempDir& dir, std::vector<std::string> overrides = {}) {
  return np::PipelineConfig::load(fs::path(kFixtures) / "smoke_config.json", overrides, std::nullopt,
                                  dir / "artifacts");
}

np::StageStatus run(const std::string& stage, const np::PipelineConfig& config, std::ostream& out) {
  np::RunOptions options;
  options.out = &out;
  return np::run_stage(stage, config, options);
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::InvalidArgument;
}

// Scoped environment variable.
struct EnvVar {
  EnvVar(const char* name, const char* value) : name_(name) { ::setenv(name, value, 1); }
  ~EnvVar() { ::unsetenv(name_); }
  const char* name_;
};

}  // namespace

TEST_CASE("defaults cover every configuration key the stages read") {
  const auto d = np::PipelineConfig::defaults();
  CHECK(d["seed"] == 42);
  CHECK(d["clustering"]["ks"] == json({25, 50, 75, 100, 125, 150, 175, 200}));
  CHECK(d["embedding"]["endpoint"].is_null());
  CHECK(d["generation"]["model"].is_string());
  CHECK(d["relation"]["learning_rate"] == 2e-5);
}

TEST_CASE("configuration precedence: defaults, file, environment, --set, flags") {
  testutil::TempDir dir("config");
  write_text_atomic(dir / "c.json",
                    R"({"seed": 5, "embedding": {"model": "from-file", "endpoint": "http://file"}, "corpus": {"path": "docs.jsonl"}})");
  {
    const auto c = np::PipelineConfig::load(dir / "c.json");
    CHECK(c.seed() == 5);
    CHECK(c.get("embedding.model") == "from-file");
    CHECK(c.get("corpus.path") == (dir / "docs.jsonl").string());
    CHECK(c.get("clustering.max_iters") == 300);
  }
  EnvVar env("NARRATIVE_EMBEDDING_MODEL", "from-env");
  {
    const auto c = np::PipelineConfig::load(dir / "c.json");
    CHECK(c.get("embedding.model") == "from-env");
    CHECK(c.get("embedding.endpoint") == "http://file");
  }
  const auto c = np::PipelineConfig::load(dir / "c.json", {"embedding.model=from-set", "seed=9"}, 11, dir / "art");
  CHECK(c.get("embedding.model") == "from-set");
  CHECK(c.seed() == 11);
  CHECK(c.artifacts() == dir / "art");
  CHECK(c.get("no.such.key").is_null());
}

TEST_CASE("override values parse as JSON when they can") {
  CHECK(np::parse_override("a.b=3").second == 3);
  CHECK(np::parse_override("a=[1,2]").second == json({1, 2}));
  CHECK(np::parse_override("a=hello").second == "hello");
  CHECK(np::parse_override("a=").second == "");
  CHECK_THROWS_AS(np::parse_override("novalue"), Error);
}

TEST_CASE("http providers without an endpoint are a usage error") {
  const auto c = np::PipelineConfig::load(std::nullopt);
  CHECK(kind_of([&] { np::make_embedding_provider(c); }) == ErrorKind::InvalidArgument);
  CHECK(kind_of([&] { np::make_generation_provider(c); }) == ErrorKind::InvalidArgument);
  const auto stub = np::PipelineConfig::load(std::nullopt, {"embedding.provider=stub", "generation.provider=stub"});
  CHECK(np::make_embedding_provider(stub)->model_id().rfind("stub", 0) == 0);
  CHECK(np::make_generation_provider(stub)->model_id() == "stub-generator");
}

TEST_CASE("exit codes by error kind") {
  CHECK(np::exit_code_for(ErrorKind::InvalidArgument) == 1);
  CHECK(np::exit_code_for(ErrorKind::MalformedRecord) == 2);
  CHECK(np::exit_code_for(ErrorKind::MissingArtifact) == 2);
  CHECK(np::exit_code_for(ErrorKind::ProviderUnavailable) == 3);
  CHECK(np::exit_code_for(ErrorKind::ProtocolError) == 3);
}

TEST_CASE("artifact lock excludes a second holder and is released") {
  testutil::TempDir dir("lock");
  {
    np::ArtifactLock lock(dir.path());
    CHECK(kind_of([&] { np::ArtifactLock again(dir.path()); }) == ErrorKind::Locked);
  }
  np::ArtifactLock after(dir.path());
  CHECK(fs::exists(dir / ".lock"));
}

TEST_CASE("a lock left by a dead process is taken over") {
  testutil::TempDir dir("stale-lock");
  write_text_atomic(dir / ".lock", "999999999\n");
  np::ArtifactLock lock(dir.path());
  CHECK(read_text(dir / ".lock").find("999999999") == std::string::npos);
}

TEST_CASE("stages run once, skip when fresh and go stale when their config changes") {
  testutil::TempDir dir("stages");
  const auto config = smoke_config(dir);
  std::ostringstream out;

  try {
    run("extract-events", config, out);
    FAIL("expected MissingArtifact");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::MissingArtifact);
    CHECK(std::string(e.what()).find("narrative ingest") != std::string::npos);
  }

  CHECK(run("ingest", config, out) == np::StageStatus::ran);
  CHECK(run("extract-events", config, out) == np::StageStatus::ran);
  const auto manifest = np::read_manifest(config.artifacts(), "extract-events");
  REQUIRE(manifest.has_value());
  CHECK(manifest->inputs.contains("ingest"));
  const auto events = read_text(config.artifacts() / "extract-events" / "events.jsonl");

  CHECK(run("extract-events", config, out) == np::StageStatus::up_to_date);
  CHECK(read_text(config.artifacts() / "extract-events" / "events.jsonl") == events);

  const auto changed = smoke_config(dir, {"corpus.test_fraction=0.5"});
  CHECK(kind_of([&] { run("extract-events", changed, out); }) == ErrorKind::StaleArtifact);
  CHECK(run("ingest", changed, out) == np::StageStatus::ran);
  CHECK(run("extract-events", changed, out) == np::StageStatus::ran);

  np::RunOptions forced;
  forced.out = &out;
  forced.force = true;
  CHECK(np::run_stage("ingest", changed, forced) == np::StageStatus::ran);
}

TEST_CASE("rerunning a stage from scratch reproduces byte-identical artifacts") {
  testutil::TempDir a("det-a"), b("det-b");
  const auto ca = smoke_config(a), cb = smoke_config(b);
  std::ostringstream out;
  for (const auto* stage : {"ingest", "extract-events", "build-relation-dataset"}) {
    run(stage, ca, out);
    run(stage, cb, out);
  }
  for (const auto* file : {"ingest/corpus.jsonl", "extract-events/events.jsonl", "build-relation-dataset/dataset.jsonl"})
    CHECK(read_text(ca.artifacts() / file) == read_text(cb.artifacts() / file));
}

TEST_CASE("report lists every configured k and marks missing stages") {
  testutil::TempDir dir("report");
  const auto config = np::PipelineConfig::load(fs::path(kFixtures) / "smoke_config.json",
                                               {"clustering.ks=[25,50,75,100,125,150,175,200]"}, std::nullopt,
                                               dir / "artifacts");
  std::ostringstream out;
  run("ingest", config, out);
  run("report", config, out);
  const auto md = read_text(config.artifacts() / "report" / "report.md");
  CHECK(md.find("not run") != std::string::npos);
  for (int k : {25, 50, 75, 100, 125, 150, 175, 200}) CHECK(md.find("| " + std::to_string(k) + " |") != std::string::npos);
  CHECK(md.find("82.61") != std::string::npos);
  CHECK(md.find("67.5") != std::string::npos);
  const auto report = read_json(config.artifacts() / "report" / "report.json");
  CHECK(report["frames"]["rows"].size() == 8);
}

TEST_CASE("unknown stage names are rejected") {
  CHECK_FALSE(np::is_stage("frobnicate"));
  CHECK(np::is_stage("cluster"));
  CHECK(np::stage_names().size() == 18);
  testutil::TempDir dir("unknown");
  std::ostringstream out;
  CHECK(kind_of([&] { run("frobnicate", smoke_config(dir), out); }) == ErrorKind::InvalidArgument);
}
