#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "narrative/io.hpp"

namespace narrative {

struct Token {
  int index = 0;  // 1-based
  std::string form;
  std::string lemma;
  std::string upos;
  int head = 0;  // 0 = root
  std::string deprel;

  bool operator==(const Token&) const = default;
};

struct Sentence {
  int index = 0;  // 0-based within the document
  std::vector<Token> tokens;
  // Set when the parse has zero or several roots. Such sentences are kept.
  bool root_flagged = false;
  std::map<std::string, std::string> comments;

  const Token& token(int index) const { return tokens.at(static_cast<std::size_t>(index - 1)); }
  // Forms joined by single spaces; whitespace token i is tokens[i].
  std::string text() const;
  std::vector<int> children(int head_index) const;

  bool operator==(const Sentence&) const = default;
};

enum class Split { unassigned, train, test };

std::string to_string(Split split);
Split parse_split(const std::string& text);

struct Document {
  std::string id;
  std::string text;
  std::string domain;
  std::optional<std::string> frame_label;
  Split split = Split::unassigned;
  bool parsed = false;
  std::vector<Sentence> sentences;

  bool operator==(const Document&) const = default;
};

class FrameLabelSet {
 public:
  FrameLabelSet() = default;
  explicit FrameLabelSet(std::vector<std::string> labels);

  const std::vector<std::string>& labels() const { return labels_; }
  std::size_t size() const { return labels_.size(); }
  std::optional<std::size_t> index_of(const std::string& label) const;
  const std::string& at(std::size_t id) const { return labels_.at(id); }

  bool operator==(const FrameLabelSet&) const = default;

 private:
  std::vector<std::string> labels_;
};

struct CorpusStats {
  std::map<std::string, std::size_t> per_split;
  std::map<std::string, std::size_t> per_label;
  std::size_t unlabeled = 0;
};

class Corpus {
 public:
  Corpus() = default;
  explicit Corpus(FrameLabelSet labels) : labels_(std::move(labels)) {}

  const FrameLabelSet& labels() const { return labels_; }
  const std::vector<Document>& documents() const { return documents_; }
  std::vector<Document>& documents() { return documents_; }
  std::size_t size() const { return documents_.size(); }

  // Throws DuplicateDocumentId / UnknownFrameLabel.
  void add(Document document);
  const Document* find(const std::string& id) const;
  Document* find(const std::string& id);

  CorpusStats stats() const;

 private:
  FrameLabelSet labels_;
  std::vector<Document> documents_;
  std::map<std::string, std::size_t> by_id_;
};

// Corpus records: one JSON object per line with keys
// id, text, domain, frame_label (optional/null), split (optional).
Corpus load_corpus(const fs::path& path, const FrameLabelSet& labels);

// ---- CoNLL-U ---------------------------------------------------------------

struct ConlluBlock {
  std::string doc_id;  // empty when no `# doc_id` preceded the sentences
  std::vector<Sentence> sentences;
};

// Multiword-token ranges (3-4) and empty nodes (3.1) are skipped. Documents
// begin at `# doc_id = X` (or `# newdoc id = X`).
std::vector<ConlluBlock> parse_conllu(std::istream& in, const std::string& source_name = "<conllu>");
std::vector<ConlluBlock> parse_conllu_file(const fs::path& path);

struct ParseLoadReport {
  std::size_t matched_blocks = 0;
  std::vector<std::string> unmatched_doc_ids;
  std::size_t sentences = 0;
  std::size_t flagged_sentences = 0;
};

// Replaces the sentences of each matched document (reloading is idempotent).
ParseLoadReport load_parses(Corpus& corpus, const fs::path& path);
ParseLoadReport load_parses(Corpus& corpus, std::istream& in);

void write_conllu(std::ostream& out, const std::string& doc_id, const std::vector<Sentence>& sentences);

// Deterministic shuffle under `seed`; round(n * test_fraction) documents go to test.
Corpus split_corpus(Corpus corpus, double test_fraction, std::uint64_t seed);

// Artifact-store form: one JSON line per document including its sentences.
json document_to_json(const Document& document);
Document document_from_json(const json& record);
void save_corpus_store(const fs::path& path, const Corpus& corpus);
Corpus load_corpus_store(const fs::path& path);

}  // namespace narrative
