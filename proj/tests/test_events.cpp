#include <doctest.h>

#include "narrative/error.hpp"
#include "narrative/events.hpp"
#include "test_util.hpp"

using namespace narrative;
using testutil::tok;

TEST_CASE("active clause yields one verb-object event") {
  const auto s = testutil::simple_sentence(0, "senator", "sought", "seek", "permit");
  const auto events = extract_events(s, "d");
  REQUIRE(events.size() == 1);
  CHECK(events[0].verb_lemma == "seek");
  CHECK(events[0].object_lemma == "permit");
  CHECK(events[0].verb_index == 3);
  CHECK(events[0].object_index == 5);
  CHECK(events[0].voice == Voice::active);
}

TEST_CASE("passive clause takes the passive subject as object") {
  Sentence s;
  s.tokens = {tok(1, "The", "the", "DET", 2, "det"), tok(2, "bill", "bill", "NOUN", 4, "nsubj:pass"),
              tok(3, "was", "be", "AUX", 4, "aux:pass"), tok(4, "passed", "pass", "VERB", 0, "root")};
  const auto events = extract_events(s, "d");
  REQUIRE(events.size() == 1);
  CHECK(events[0].verb_lemma == "pass");
  CHECK(events[0].object_lemma == "bill");
  CHECK(events[0].voice == Voice::passive);
}

TEST_CASE("conjoined objects give one event each, auxiliaries never count") {
  Sentence s;
  s.tokens = {tok(1, "They", "they", "PRON", 3, "nsubj"), tok(2, "have", "have", "VERB", 3, "aux"),
              tok(3, "cut", "cut", "VERB", 0, "root"),       tok(4, "taxes", "tax", "NOUN", 3, "obj"),
              tok(5, "and", "and", "CCONJ", 6, "cc"),        tok(6, "fees", "fee", "NOUN", 4, "conj")};
  const auto events = extract_events(s, "d");
  REQUIRE(events.size() == 2);
  CHECK(events[0].object_lemma == "tax");
  CHECK(events[1].object_lemma == "fee");
  for (const auto& e : events) CHECK(e.verb_lemma == "cut");
}

TEST_CASE("intransitive verbs produce nothing") {
  Sentence s;
  s.tokens = {tok(1, "Prices", "price", "NOUN", 2, "nsubj"), tok(2, "rose", "rise", "VERB", 0, "root")};
  CHECK(extract_events(s, "d").empty());
}

TEST_CASE("corpus extraction requires parses and honours the salience filter") {
  Corpus corpus(FrameLabelSet({"x"}));
  Document a{"a", "", "other", std::nullopt, Split::unassigned, true, {}};
  a.sentences = {testutil::simple_sentence(0, "senator", "sought", "seek", "permit"),
                 testutil::simple_sentence(1, "court", "sought", "seek", "permit"),
                 testutil::simple_sentence(2, "mayor", "hired", "hire", "worker")};
  corpus.add(a);
  const auto all = extract_corpus_events(corpus);
  CHECK(all.total_mentions == 3);
  CHECK(all.unique_events == 2);
  const auto salient = extract_corpus_events(corpus, 0.5);
  CHECK(salient.total_mentions == 2);
  CHECK(salient.documents[0].second[0].verb_lemma == "seek");

  Document b{"b", "", "other", std::nullopt, Split::unassigned, false, {}};
  corpus.add(b);
  try {
    extract_corpus_events(corpus);
    FAIL("expected UnparsedDocument");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::UnparsedDocument);
  }
}

TEST_CASE("event table round trip keeps documents without events") {
  EventTable table;
  table.documents.push_back({"a", extract_events(testutil::simple_sentence(0, "x", "cut", "cut", "tax"), "a")});
  table.documents.push_back({"b", {}});
  testutil::TempDir dir("events");
  save_event_table(dir / "e.jsonl", table);
  const auto back = load_event_table(dir / "e.jsonl");
  REQUIRE(back.documents.size() == 2);
  CHECK(back.documents[0] == table.documents[0]);
  CHECK(back.documents[1].first == "b");
  CHECK(back.documents[1].second.empty());
  CHECK(back.total_mentions == 1);
}
