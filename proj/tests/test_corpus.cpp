#include <doctest.h>

#include <sstream>

#include "narrative/corpus.hpp"
#include "narrative/error.hpp"
#include "test_util.hpp"

using namespace narrative;

namespace {

const char* kTwoDocs = R"(# doc_id = d1
# text = The senator sought the permit .
1	The	the	DET	_	_	2	det	_	_
2	senator	senator	NOUN	_	_	3	nsubj	_	_
3	sought	seek	VERB	_	_	0	root	_	_
4	the	the	DET	_	_	5	det	_	_
5	permit	permit	NOUN	_	_	3	obj	_	_
6	.	.	PUNCT	_	_	3	punct	_	_

# doc_id = d2
1-2	don't	_	_	_	_	_	_	_	_
1	do	do	AUX	_	_	3	aux	_	_
2	n't	not	PART	_	_	3	advmod	_	_
3	pass	pass	VERB	_	_	0	root	_	_
3.1	x	x	X	_	_	_	_	_	_
4	laws	law	NOUN	_	_	3	obj	_	_

)";

Corpus two_doc_corpus() {
  Corpus c(FrameLabelSet({"economic", "legality"}));
  c.add({"d1", "The senator sought the permit .", "immigration", "legality", Split::unassigned, false, {}});
  c.add({"d2", "don't pass laws", "gun_control", std::nullopt, Split::unassigned, false, {}});
  return c;
}

}  // namespace

TEST_CASE("conllu reader groups sentences by doc_id and skips ranges and empty nodes") {
  std::istringstream in(kTwoDocs);
  const auto blocks = parse_conllu(in);
  REQUIRE(blocks.size() == 2);
  CHECK(blocks[0].doc_id == "d1");
  REQUIRE(blocks[0].sentences.size() == 1);
  const auto& s = blocks[0].sentences[0];
  CHECK(s.tokens.size() == 6);
  CHECK(s.token(3).lemma == "seek");
  CHECK(s.comments.at("text") == "The senator sought the permit .");
  CHECK(s.children(3) == std::vector<int>{2, 5, 6});
  CHECK_FALSE(s.root_flagged);
  REQUIRE(blocks[1].sentences.size() == 1);
  CHECK(blocks[1].sentences[0].tokens.size() == 4);
  CHECK(blocks[1].sentences[0].text() == "do n't pass laws");
}

TEST_CASE("conllu reader rejects malformed rows") {
  SUBCASE("wrong column count") {
    std::istringstream in("1\tThe\tthe\tDET\n\n");
    CHECK_THROWS_AS(parse_conllu(in), Error);
  }
  SUBCASE("head out of range") {
    std::istringstream in("1\tgo\tgo\tVERB\t_\t_\t5\troot\t_\t_\n\n");
    try {
      parse_conllu(in);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::HeadOutOfRange);
    }
  }
  SUBCASE("non-contiguous ids") {
    std::istringstream in("1\tgo\tgo\tVERB\t_\t_\t0\troot\t_\t_\n3\tit\tit\tPRON\t_\t_\t1\tobj\t_\t_\n\n");
    CHECK_THROWS_AS(parse_conllu(in), Error);
  }
}

TEST_CASE("sentences with zero or several roots are kept and flagged") {
  std::istringstream in("1\tgo\tgo\tVERB\t_\t_\t0\troot\t_\t_\n2\tstop\tstop\tVERB\t_\t_\t0\troot\t_\t_\n\n");
  const auto blocks = parse_conllu(in);
  REQUIRE(blocks.size() == 1);
  CHECK(blocks[0].sentences[0].root_flagged);
}

TEST_CASE("write_conllu output reads back to the same tokens") {
  std::istringstream in(kTwoDocs);
  const auto blocks = parse_conllu(in);
  std::ostringstream out;
  write_conllu(out, "d1", blocks[0].sentences);
  std::istringstream again(out.str());
  const auto back = parse_conllu(again);
  REQUIRE(back.size() == 1);
  CHECK(back[0].doc_id == "d1");
  CHECK(back[0].sentences[0].tokens == blocks[0].sentences[0].tokens);
}

TEST_CASE("parse loading attaches sentences and is idempotent") {
  auto corpus = two_doc_corpus();
  std::istringstream first(kTwoDocs);
  auto report = load_parses(corpus, first);
  CHECK(report.matched_blocks == 2);
  CHECK(report.sentences == 2);
  CHECK(corpus.find("d1")->parsed);
  std::istringstream second(kTwoDocs);
  load_parses(corpus, second);
  CHECK(corpus.find("d1")->sentences.size() == 1);

  std::istringstream stray("# doc_id = zz\n1\tgo\tgo\tVERB\t_\t_\t0\troot\t_\t_\n\n");
  report = load_parses(corpus, stray);
  CHECK(report.unmatched_doc_ids == std::vector<std::string>{"zz"});
}

TEST_CASE("corpus rejects duplicate ids and unknown labels") {
  auto corpus = two_doc_corpus();
  try {
    corpus.add({"d1", "x", "other", std::nullopt, Split::unassigned, false, {}});
    FAIL("expected DuplicateDocumentId");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::DuplicateDocumentId);
  }
  try {
    corpus.add({"d3", "x", "other", std::string("morality"), Split::unassigned, false, {}});
    FAIL("expected UnknownFrameLabel");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::UnknownFrameLabel);
  }
}

TEST_CASE("load_corpus reads records and validates fields") {
  testutil::TempDir dir("corpus");
  write_text_atomic(dir / "ok.jsonl",
                    "{\"id\":\"a\",\"text\":\"t\",\"domain\":\"immigration\",\"frame_label\":\"economic\"}\n"
                    "{\"id\":\"b\",\"text\":\"u\",\"domain\":\"other\",\"frame_label\":null,\"split\":\"test\"}\n");
  const auto corpus = load_corpus(dir / "ok.jsonl", FrameLabelSet({"economic"}));
  REQUIRE(corpus.size() == 2);
  CHECK(corpus.find("a")->frame_label == "economic");
  CHECK_FALSE(corpus.find("b")->frame_label.has_value());
  CHECK(corpus.find("b")->split == Split::test);

  write_text_atomic(dir / "bad.jsonl", "{\"id\":\"a\",\"text\":\"t\",\"domain\":\"sports\"}\n");
  CHECK_THROWS_AS(load_corpus(dir / "bad.jsonl", FrameLabelSet({"economic"})), Error);
}

TEST_CASE("split_corpus is seeded and sends round(n * fraction) documents to test") {
  Corpus c(FrameLabelSet({"x"}));
  for (int i = 0; i < 10; ++i) c.add({"d" + std::to_string(i), "t", "other", std::nullopt, Split::unassigned, false, {}});
  const auto a = split_corpus(c, 0.25, 42);
  const auto b = split_corpus(c, 0.25, 42);
  std::size_t test = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a.documents()[i].split == b.documents()[i].split);
    test += a.documents()[i].split == Split::test;
  }
  CHECK(test == 3);  // llround(2.5)
  CHECK_THROWS_AS(split_corpus(a, 0.25, 42), Error);
  CHECK_THROWS_AS(split_corpus(c, 1.0, 42), Error);
}

TEST_CASE("artifact store round trip keeps documents, labels and parses") {
  auto corpus = two_doc_corpus();
  std::istringstream in(kTwoDocs);
  load_parses(corpus, in);
  testutil::TempDir dir("store");
  save_corpus_store(dir / "corpus.jsonl", corpus);
  const auto back = load_corpus_store(dir / "corpus.jsonl");
  CHECK(back.labels() == corpus.labels());
  REQUIRE(back.size() == corpus.size());
  for (std::size_t i = 0; i < back.size(); ++i) CHECK(back.documents()[i] == corpus.documents()[i]);
}
