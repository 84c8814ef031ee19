#include "narrative/corpus.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "narrative/error.hpp"
#include "narrative/random.hpp"

namespace narrative {

std::string Sentence::text() const {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i].form;
  }
  return out;
}

std::vector<int> Sentence::children(int head_index) const {
  std::vector<int> out;
  for (const auto& t : tokens)
    if (t.head == head_index) out.push_back(t.index);
  return out;
}

std::string to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::test: return "test";
    case Split::unassigned: return "unassigned";
  }
  return "unassigned";
}

Split parse_split(const std::string& text) {
  if (text == "train") return Split::train;
  if (text == "test") return Split::test;
  if (text.empty() || text == "unassigned") return Split::unassigned;
  fail(ErrorKind::MalformedRecord, "unknown split '" + text + "'");
}

FrameLabelSet::FrameLabelSet(std::vector<std::string> labels) : labels_(std::move(labels)) {
  require(!labels_.empty(), ErrorKind::InvalidArgument, "frame label set is empty");
  std::set<std::string> seen;
  for (const auto& l : labels_)
    require(seen.insert(l).second, ErrorKind::InvalidArgument, "duplicate frame label '" + l + "'");
}

std::optional<std::size_t> FrameLabelSet::index_of(const std::string& label) const {
  for (std::size_t i = 0; i < labels_.size(); ++i)
    if (labels_[i] == label) return i;
  return std::nullopt;
}

void Corpus::add(Document document) {
  if (by_id_.count(document.id))
    fail(ErrorKind::DuplicateDocumentId, "document id '" + document.id + "' appears twice");
  if (document.frame_label && !labels_.index_of(*document.frame_label))
    fail(ErrorKind::UnknownFrameLabel,
         "document '" + document.id + "' has frame_label '" + *document.frame_label +
             "' not in the configured label set");
  by_id_.emplace(document.id, documents_.size());
  documents_.push_back(std::move(document));
}

const Document* Corpus::find(const std::string& id) const {
  auto it = by_id_.find(id);
  return it == by_id_.end() ? nullptr : &documents_[it->second];
}

Document* Corpus::find(const std::string& id) {
  auto it = by_id_.find(id);
  return it == by_id_.end() ? nullptr : &documents_[it->second];
}

CorpusStats Corpus::stats() const {
  CorpusStats s;
  for (const auto& d : documents_) {
    ++s.per_split[to_string(d.split)];
    if (d.frame_label)
      ++s.per_label[*d.frame_label];
    else
      ++s.unlabeled;
  }
  return s;
}

namespace {

const std::set<std::string> kDomains = {"immigration", "gun_control", "other"};

std::string record_string(const json& record, const char* key, const std::string& where,
                          bool required) {
  if (!record.contains(key) || record[key].is_null()) {
    if (required) fail(ErrorKind::MalformedRecord, where + ": missing key '" + key + "'");
    return {};
  }
  if (!record[key].is_string())
    fail(ErrorKind::MalformedRecord, where + ": key '" + key + "' must be a string");
  return record[key].get<std::string>();
}

}  // namespace

Corpus load_corpus(const fs::path& path, const FrameLabelSet& labels) {
  Corpus corpus(labels);
  read_jsonl(path, [&](const json& record, std::size_t line) {
    const std::string where = path.string() + ":" + std::to_string(line);
    require(record.is_object(), ErrorKind::MalformedRecord, where + ": record is not an object");
    Document doc;
    doc.id = record_string(record, "id", where, true);
    doc.text = record_string(record, "text", where, true);
    doc.domain = record_string(record, "domain", where, true);
    require(kDomains.count(doc.domain) > 0, ErrorKind::MalformedRecord,
            where + ": unknown domain '" + doc.domain + "'");
    auto label = record_string(record, "frame_label", where, false);
    if (!label.empty()) doc.frame_label = label;
    doc.split = parse_split(record_string(record, "split", where, false));
    try {
      corpus.add(std::move(doc));
    } catch (const Error& e) {
      throw Error(e.kind(), std::string(e.what()) + " (" + where + ")");
    }
  });
  return corpus;
}

// ---- CoNLL-U ----------------------------------------------------------------

namespace {

int parse_int(const std::string& field, const std::string& where, const char* column) {
  int value = 0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size())
    fail(ErrorKind::MalformedConllu, where + ": bad " + column + " '" + field + "'");
  return value;
}

void finish_sentence(Sentence& sentence, const std::string& where) {
  const int n = static_cast<int>(sentence.tokens.size());
  int roots = 0;
  for (int i = 0; i < n; ++i) {
    const Token& t = sentence.tokens[static_cast<std::size_t>(i)];
    if (t.index != i + 1)
      fail(ErrorKind::MalformedConllu,
           where + ": token ids must be contiguous from 1 (found " + std::to_string(t.index) + ")");
    if (t.head > n)
      fail(ErrorKind::HeadOutOfRange, where + ": token " + std::to_string(t.index) + " has head " +
                                          std::to_string(t.head) + " in a " + std::to_string(n) +
                                          "-token sentence");
    if (t.head == 0) ++roots;
  }
  sentence.root_flagged = roots != 1;
}

}  // namespace

std::vector<ConlluBlock> parse_conllu(std::istream& in, const std::string& source_name) {
  std::vector<ConlluBlock> blocks;
  Sentence current;
  std::map<std::string, std::string> pending_comments;
  std::size_t sentence_start_line = 0;
  std::string line;
  std::size_t line_number = 0;

  auto block_for_sentence = [&]() -> ConlluBlock& {
    if (blocks.empty()) blocks.push_back({});
    return blocks.back();
  };
  auto flush = [&]() {
    if (current.tokens.empty()) {
      current = Sentence{};
      return;
    }
    finish_sentence(current, source_name + ":" + std::to_string(sentence_start_line));
    ConlluBlock& block = block_for_sentence();
    current.index = static_cast<int>(block.sentences.size());
    block.sentences.push_back(std::move(current));
    current = Sentence{};
  };

  while (std::getline(in, line)) {
    ++line_number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string where = source_name + ":" + std::to_string(line_number);
    if (trim(line).empty()) {
      flush();
      continue;
    }
    if (line[0] == '#') {
      auto body = trim(std::string_view(line).substr(1));
      auto eq = body.find('=');
      std::string key = trim(body.substr(0, eq == std::string::npos ? body.size() : eq));
      std::string value = eq == std::string::npos ? "" : trim(body.substr(eq + 1));
      if (key == "doc_id" || key == "newdoc id" || key == "newdoc") {
        flush();
        blocks.push_back({value, {}});
        continue;
      }
      current.comments[key] = value;
      continue;
    }
    auto fields = split(line, '\t');
    if (fields.size() != 10)
      fail(ErrorKind::MalformedConllu,
           where + ": expected 10 tab-separated columns, found " + std::to_string(fields.size()));
    const std::string& id = fields[0];
    if (id.find('-') != std::string::npos || id.find('.') != std::string::npos) continue;
    if (current.tokens.empty()) sentence_start_line = line_number;
    Token token;
    token.index = parse_int(id, where, "ID");
    token.form = fields[1];
    token.lemma = fields[2];
    token.upos = fields[3];
    token.head = parse_int(fields[6], where, "HEAD");
    token.deprel = fields[7];
    if (token.index < 1) fail(ErrorKind::MalformedConllu, where + ": ID must be >= 1");
    if (token.head < 0) fail(ErrorKind::MalformedConllu, where + ": HEAD must be >= 0");
    if (token.head == token.index)
      fail(ErrorKind::MalformedConllu, where + ": token is its own head");
    if (token.deprel.empty() || token.deprel == "_")
      fail(ErrorKind::MalformedConllu, where + ": empty DEPREL");
    current.tokens.push_back(std::move(token));
  }
  flush();
  return blocks;
}

std::vector<ConlluBlock> parse_conllu_file(const fs::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot open " + path.string());
  return parse_conllu(in, path.string());
}

namespace {

ParseLoadReport attach_blocks(Corpus& corpus, std::vector<ConlluBlock> blocks) {
  ParseLoadReport report;
  std::set<std::string> reset;
  for (auto& block : blocks) {
    Document* doc = corpus.find(block.doc_id);
    if (!doc) {
      report.unmatched_doc_ids.push_back(block.doc_id);
      continue;
    }
    ++report.matched_blocks;
    // A document may be split over several blocks; the first one resets.
    if (reset.insert(doc->id).second) doc->sentences.clear();
    for (auto& s : block.sentences) {
      s.index = static_cast<int>(doc->sentences.size());
      report.sentences++;
      if (s.root_flagged) report.flagged_sentences++;
      doc->sentences.push_back(std::move(s));
    }
    doc->parsed = true;
  }
  return report;
}

}  // namespace

ParseLoadReport load_parses(Corpus& corpus, const fs::path& path) {
  return attach_blocks(corpus, parse_conllu_file(path));
}

ParseLoadReport load_parses(Corpus& corpus, std::istream& in) {
  return attach_blocks(corpus, parse_conllu(in));
}

void write_conllu(std::ostream& out, const std::string& doc_id, const std::vector<Sentence>& sentences) {
  out << "# doc_id = " << doc_id << "\n";
  for (const auto& s : sentences) {
    out << "# sent_id = " << s.index << "\n";
    for (const auto& t : s.tokens) {
      out << t.index << '\t' << t.form << '\t' << t.lemma << '\t' << t.upos << "\t_\t_\t" << t.head
          << '\t' << t.deprel << "\t_\t_\n";
    }
    out << "\n";
  }
}

Corpus split_corpus(Corpus corpus, double test_fraction, std::uint64_t seed) {
  require(test_fraction > 0.0 && test_fraction < 1.0, ErrorKind::InvalidArgument,
          "test_fraction must lie in (0, 1)");
  auto& docs = corpus.documents();
  for (const auto& d : docs)
    require(d.split == Split::unassigned, ErrorKind::PreconditionFailed,
            "document '" + d.id + "' already has a split");
  const std::size_t n = docs.size();
  const auto test_count = static_cast<std::size_t>(std::llround(static_cast<double>(n) * test_fraction));
  Rng rng(seed);
  auto order = rng.permutation(n);
  for (std::size_t rank = 0; rank < n; ++rank)
    docs[order[rank]].split = rank < test_count ? Split::test : Split::train;
  return corpus;
}

json document_to_json(const Document& d) {
  json record;
  record["id"] = d.id;
  record["text"] = d.text;
  record["domain"] = d.domain;
  record["frame_label"] = d.frame_label ? json(*d.frame_label) : json(nullptr);
  record["split"] = to_string(d.split);
  record["parsed"] = d.parsed;
  json sentences = json::array();
  for (const auto& s : d.sentences) {
    json tokens = json::array();
    for (const auto& t : s.tokens)
      tokens.push_back({t.index, t.form, t.lemma, t.upos, t.head, t.deprel});
    sentences.push_back({{"index", s.index},
                         {"root_flagged", s.root_flagged},
                         {"comments", s.comments},
                         {"tokens", tokens}});
  }
  record["sentences"] = sentences;
  return record;
}

Document document_from_json(const json& record) {
  Document d;
  d.id = record.at("id").get<std::string>();
  d.text = record.at("text").get<std::string>();
  d.domain = record.at("domain").get<std::string>();
  if (record.contains("frame_label") && !record["frame_label"].is_null())
    d.frame_label = record["frame_label"].get<std::string>();
  d.split = parse_split(record.value("split", "unassigned"));
  d.parsed = record.value("parsed", false);
  for (const auto& s : record.value("sentences", json::array())) {
    Sentence sentence;
    sentence.index = s.at("index").get<int>();
    sentence.root_flagged = s.value("root_flagged", false);
    sentence.comments = s.value("comments", std::map<std::string, std::string>{});
    for (const auto& t : s.at("tokens")) {
      sentence.tokens.push_back({t.at(0).get<int>(), t.at(1).get<std::string>(),
                                 t.at(2).get<std::string>(), t.at(3).get<std::string>(),
                                 t.at(4).get<int>(), t.at(5).get<std::string>()});
    }
    d.sentences.push_back(std::move(sentence));
  }
  return d;
}

void save_corpus_store(const fs::path& path, const Corpus& corpus) {
  std::vector<json> records;
  records.push_back({{"labels", corpus.labels().labels()}});
  for (const auto& d : corpus.documents()) records.push_back(document_to_json(d));
  write_jsonl(path, records);
}

Corpus load_corpus_store(const fs::path& path) {
  auto records = read_jsonl(path);
  require(!records.empty() && records[0].contains("labels"), ErrorKind::MalformedRecord,
          path.string() + ": missing label header");
  Corpus corpus(FrameLabelSet(records[0]["labels"].get<std::vector<std::string>>()));
  for (std::size_t i = 1; i < records.size(); ++i) corpus.add(document_from_json(records[i]));
  return corpus;
}

}  // namespace narrative
