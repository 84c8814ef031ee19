#include <doctest.h>

#include <mutex>

#include "narrative/error.hpp"
#include "narrative/expansion.hpp"
#include "test_util.hpp"

using namespace narrative;

namespace {

NarrativeChain seek_pass(const std::string& doc_id = "d", RelationLabel relation = RelationLabel::Causal) {
  NarrativeChain c;
  c.doc_id = doc_id;
  c.event1 = {doc_id, 0, 3, 5, "seek", "permit", Voice::active};
  c.event2 = {doc_id, 1, 3, 5, "pass", "legislation", Voice::active};
  c.relation = relation;
  c.confidence = 0.9;
  c.none_probability = 0.05;
  return c;
}

// Records requests and answers with a fixed text, or throws for one doc.
class ScriptedGenerator : public GenerationProvider {
 public:
  explicit ScriptedGenerator(std::string reply) : reply_(std::move(reply)) {}
  GenerationResponse generate(const GenerationRequest& request) override {
    std::lock_guard lock(mutex_);
    requests.push_back(request);
    if (request.user.find("poison") != std::string::npos) fail(ErrorKind::ProviderUnavailable, "down");
    return {reply_};
  }
  std::string model_id() const override { return "scripted"; }
  std::vector<GenerationRequest> requests;

 private:
  std::string reply_;
  std::mutex mutex_;
};

Corpus small_corpus() {
  Corpus corpus(FrameLabelSet({"x"}));
  corpus.add({"d", "The council passed the legislation", "other", std::nullopt, Split::train, false, {}});
  corpus.add({"p", "poison article", "other", std::nullopt, Split::train, false, {}});
  return corpus;
}

}  // namespace

TEST_CASE("template expansion is byte-exact") {
  CHECK(expand_template(seek_pass()).sentence ==
        "There is a causal relationship between (seek, permit) and (pass, legislation).");
  CHECK(expand_template(seek_pass("d", RelationLabel::Temporal)).sentence ==
        "There is a temporal relationship between (seek, permit) and (pass, legislation).");
  CHECK_THROWS_AS(expand_template(seek_pass("d", RelationLabel::None)), Error);
}

TEST_CASE("user prompt renders the chain tuple in upper-case relation form") {
  CHECK(render_chain(seek_pass()) == "((seek, permit), CAUSAL, (pass, legislation))");
  const auto prompt = expansion_user_prompt("Article body", seek_pass());
  CHECK(prompt.rfind("News Article: Article body. Event Chain: ((seek, permit), CAUSAL, (pass, legislation)). ", 0) ==
        0);
  CHECK(expansion_system_prompt().find("(EVENT_1, RELATION_TYPE, EVENT_2)") != std::string::npos);
}

TEST_CASE("generation cleanup keeps the first non-empty line without quotes") {
  CHECK(clean_generation("\n  \"The council acted.\"  \nextra") == "The council acted.");
  CHECK(clean_generation("'x'") == "x");
  try {
    clean_generation(" \n \"\" ");
    FAIL("expected EmptyExpansion");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::EmptyExpansion);
  }
}

TEST_CASE("llm expansion sends both prompts with the fixed decoding settings and caches the result") {
  ScriptedGenerator gen("\"A permit was sought, so the law passed.\"");
  testutil::TempDir dir("expansion");
  DiskCache cache(dir.path());
  const auto first = expand_llm(seek_pass(), "Body", gen, &cache);
  CHECK(first.sentence == "A permit was sought, so the law passed.");
  REQUIRE(gen.requests.size() == 1);
  CHECK(gen.requests[0].system == expansion_system_prompt());
  CHECK(gen.requests[0].max_tokens == 4096);
  CHECK(gen.requests[0].temperature == doctest::Approx(0.1));
  const auto second = expand_llm(seek_pass(), "Body", gen, &cache);
  CHECK(second.sentence == first.sentence);
  CHECK(gen.requests.size() == 1);
  CHECK(expansion_cache_key("Body", seek_pass(), ExpansionMethod::llm) !=
        expansion_cache_key("Other", seek_pass(), ExpansionMethod::llm));
}

TEST_CASE("batch expansion records per-item failures and keeps input order") {
  const auto corpus = small_corpus();
  std::vector<NarrativeChain> chains{seek_pass("d"), seek_pass("p"), seek_pass("missing"), seek_pass("d")};
  chains[3].event2.object_lemma = "budget";
  ScriptedGenerator gen("Something happened.");
  const auto batch = expand_batch(chains, corpus, &gen, ExpansionMethod::llm, 3);
  REQUIRE(batch.expansions.size() == 4);
  CHECK(batch.expansions[0].has_value());
  CHECK_FALSE(batch.expansions[1].has_value());
  CHECK_FALSE(batch.expansions[2].has_value());
  CHECK(batch.expansions[3]->chain.event2.object_lemma == "budget");
  REQUIRE(batch.failures.size() == 2);
  CHECK(batch.failures[0].index == 1);
  CHECK(batch.failures[1].index == 2);
  CHECK(batch.generated == 2);

  const auto templated = expand_batch(chains, corpus, nullptr, ExpansionMethod::template_);
  CHECK(templated.failures.empty());
  CHECK_THROWS_AS(expand_batch(chains, corpus, nullptr, ExpansionMethod::llm), Error);
}

TEST_CASE("stub generator drives llm expansion end to end") {
  StubGenerationProvider stub;
  const auto e = expand_llm(seek_pass(), "Body", stub);
  CHECK(e.sentence == "Narrative: seek permit CAUSAL pass legislation.");
  const auto back = expansion_from_json(expansion_to_json(e));
  CHECK(back.sentence == e.sentence);
  CHECK(back.chain == e.chain);
  CHECK(back.method == ExpansionMethod::llm);
}
