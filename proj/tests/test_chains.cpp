#include <doctest.h>

#include <functional>

#include "narrative/chains.hpp"
#include "narrative/error.hpp"
#include "test_util.hpp"

using namespace narrative;

namespace {

// Scores each pair with a caller-supplied rule; counts calls.
class RuleClassifier : public PairClassifier {
 public:
  explicit RuleClassifier(std::function<RelationPrediction(const RelationExample&)> rule) : rule_(std::move(rule)) {}
  std::vector<RelationPrediction> classify(const std::vector<RelationExample>& pairs) override {
    ++calls;
    std::vector<RelationPrediction> out;
    for (const auto& p : pairs) out.push_back(rule_(p));
    return out;
  }
  int calls = 0;

 private:
  std::function<RelationPrediction(const RelationExample&)> rule_;
};

RelationPrediction prediction(RelationLabel label, double temporal, double causal, double none) {
  return {label, {temporal, causal, none}};
}

Document three_sentence_doc() {
  Document doc{"d", "", "other", std::nullopt, Split::train, true, {}};
  doc.sentences = {testutil::simple_sentence(0, "senator", "sought", "seek", "permit"),
                   testutil::simple_sentence(1, "council", "passed", "pass", "legislation"),
                   testutil::simple_sentence(2, "court", "sought", "seek", "permit")};
  return doc;
}

std::vector<EventMention> events_of(const Document& doc) {
  std::vector<EventMention> events;
  for (const auto& s : doc.sentences)
    for (auto e : extract_events(s, doc.id)) {
      e.sentence_index = s.index;
      events.push_back(e);
    }
  return events;
}

}  // namespace

TEST_CASE("candidate pairs enumerate ordered pairs and subsample deterministically") {
  const auto all = candidate_pairs(4);
  CHECK(all.size() == 12);
  CHECK(all.front() == std::pair<std::size_t, std::size_t>{0, 1});
  const auto sub = candidate_pairs(10, 20, 42);
  CHECK(sub.size() == 20);
  CHECK(std::is_sorted(sub.begin(), sub.end()));
  CHECK(candidate_pairs(10, 20, 42) == sub);
  CHECK(candidate_pairs(1).empty());
}

TEST_CASE("pair examples use each event's sentence as context") {
  const auto doc = three_sentence_doc();
  const auto events = events_of(doc);
  const auto ex = pair_example(doc, events[0], events[1]);
  CHECK(ex.head_context == "The senator sought the permit .");
  CHECK(ex.tail.verb == "pass");
  CHECK(ex.head.verb_tokens == std::vector<int>{2});
  CHECK(ex.tail.object_token == 4);
}

TEST_CASE("chains keep related pairs above None and drop duplicate triples") {
  const auto doc = three_sentence_doc();
  const auto events = events_of(doc);
  // seek -> pass is causal, pass -> seek temporal, anything else None.
  RuleClassifier rule([](const RelationExample& ex) {
    if (ex.head.verb == "seek" && ex.tail.verb == "pass") return prediction(RelationLabel::Causal, 0.1, 0.7, 0.2);
    if (ex.head.verb == "pass" && ex.tail.verb == "seek") return prediction(RelationLabel::Temporal, 0.5, 0.1, 0.4);
    return prediction(RelationLabel::None, 0.1, 0.1, 0.8);
  });
  const auto result = build_chains(doc, events, rule);
  CHECK(result.candidates == 6);
  // (seek permit -> pass legislation) appears twice, as does the temporal reverse.
  REQUIRE(result.chains.size() == 2);
  CHECK(result.duplicates_removed == 2);
  CHECK(result.chains[0].relation == RelationLabel::Causal);
  CHECK(result.chains[0].event1.sentence_index == 0);
  CHECK(result.chains[0].confidence == doctest::Approx(0.7));
  CHECK(result.chains[1].relation == RelationLabel::Temporal);

  ChainConfig strict;
  strict.min_confidence = 0.6;
  CHECK(build_chains(doc, events, rule, strict).chains.size() == 1);
}

TEST_CASE("a related label that does not beat None is dropped") {
  const auto doc = three_sentence_doc();
  RuleClassifier tied([](const RelationExample&) { return prediction(RelationLabel::Causal, 0.0, 0.5, 0.5); });
  CHECK(build_chains(doc, events_of(doc), tied).chains.empty());
}

TEST_CASE("misaligned pairs are skipped with a warning, other errors propagate") {
  const auto doc = three_sentence_doc();
  RuleClassifier flaky([](const RelationExample& ex) -> RelationPrediction {
    if (ex.head_context.find("court") != std::string::npos) fail(ErrorKind::SpanNotAligned, "bad span");
    return prediction(RelationLabel::Causal, 0.0, 0.9, 0.1);
  });
  const auto result = build_chains(doc, events_of(doc), flaky);
  CHECK(result.skipped_pairs == 2);
  CHECK_FALSE(result.warnings.empty());

  RuleClassifier broken([](const RelationExample&) -> RelationPrediction { fail(ErrorKind::Io, "disk"); });
  CHECK_THROWS_AS(build_chains(doc, events_of(doc), broken), Error);
}

TEST_CASE("chains round trip through jsonl") {
  const auto doc = three_sentence_doc();
  RuleClassifier all([](const RelationExample&) { return prediction(RelationLabel::Temporal, 0.8, 0.1, 0.1); });
  const auto chains = build_chains(doc, events_of(doc), all).chains;
  testutil::TempDir dir("chains");
  save_chains(dir / "c.jsonl", chains);
  CHECK(load_chains(dir / "c.jsonl") == chains);
}
