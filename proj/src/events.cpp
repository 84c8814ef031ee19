#include "narrative/events.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "narrative/error.hpp"

namespace narrative {

namespace {

bool is_aux_relation(const std::string& deprel) {
  return deprel == "aux" || deprel == "auxpass" || deprel == "aux:pass";
}

bool is_object_relation(const std::string& deprel) { return deprel == "obj" || deprel == "dobj"; }

bool is_passive_subject(const std::string& deprel) {
  return deprel == "nsubjpass" || deprel == "nsubj:pass";
}

std::string lemma_of(const Token& t) {
  std::string lemma = (t.lemma.empty() || t.lemma == "_") ? t.form : t.lemma;
  return to_lower(lemma);
}

// The head itself plus every token attached to it through a chain of conj edges.
void collect_conjuncts(const Sentence& s, int head, std::vector<int>& out) {
  out.push_back(head);
  for (const auto& t : s.tokens)
    if (t.head == head && t.deprel == "conj") collect_conjuncts(s, t.index, out);
}

}  // namespace

bool is_candidate_verb(const Token& token) {
  return token.upos == "VERB" && !is_aux_relation(token.deprel);
}

std::vector<EventMention> extract_events(const Sentence& sentence, const std::string& doc_id) {
  std::vector<EventMention> out;
  for (const auto& verb : sentence.tokens) {
    if (!is_candidate_verb(verb)) continue;
    bool passive = false;
    for (const auto& t : sentence.tokens)
      if (t.head == verb.index && (is_passive_subject(t.deprel) || t.deprel == "auxpass" ||
                                   t.deprel == "aux:pass"))
        passive = true;

    std::vector<int> objects;
    for (const auto& t : sentence.tokens) {
      if (t.head != verb.index) continue;
      const bool wanted = passive ? is_passive_subject(t.deprel) : is_object_relation(t.deprel);
      if (wanted) collect_conjuncts(sentence, t.index, objects);
    }
    const std::string verb_lemma = lemma_of(verb);
    for (int object_index : objects) {
      if (object_index == verb.index) continue;
      const Token& object = sentence.token(object_index);
      std::string object_lemma = lemma_of(object);
      if (verb_lemma.empty() || object_lemma.empty()) continue;
      out.push_back({doc_id, sentence.index, verb.index, object_index, verb_lemma, object_lemma,
                     passive ? Voice::passive : Voice::active});
    }
  }
  std::sort(out.begin(), out.end(), [](const EventMention& a, const EventMention& b) {
    return std::tie(a.verb_index, a.object_index) < std::tie(b.verb_index, b.object_index);
  });
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

const std::vector<EventMention>* EventTable::find(const std::string& doc_id) const {
  for (const auto& [id, mentions] : documents)
    if (id == doc_id) return &mentions;
  return nullptr;
}

namespace {

std::set<std::string> top_fraction(const std::map<std::string, std::size_t>& counts, double fraction) {
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  auto keep = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(ranked.size()) - 1e-9));
  keep = std::clamp<std::size_t>(keep, ranked.empty() ? 0 : 1, ranked.size());
  std::set<std::string> out;
  for (std::size_t i = 0; i < keep; ++i) out.insert(ranked[i].first);
  return out;
}

}  // namespace

EventTable extract_corpus_events(const Corpus& corpus, double salience_keep_fraction) {
  require(salience_keep_fraction > 0.0 && salience_keep_fraction <= 1.0,
          ErrorKind::InvalidArgument, "salience_keep_fraction must lie in (0, 1]");
  const auto& docs = corpus.documents();
  for (const auto& d : docs)
    require(d.parsed, ErrorKind::UnparsedDocument, "document '" + d.id + "' has no parse");

  EventTable table;
  table.documents.resize(docs.size());
  const auto n = static_cast<long>(docs.size());
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < n; ++i) {
    const auto& doc = docs[static_cast<std::size_t>(i)];
    std::vector<EventMention> mentions;
    for (const auto& s : doc.sentences) {
      auto found = extract_events(s, doc.id);
      mentions.insert(mentions.end(), found.begin(), found.end());
    }
    table.documents[static_cast<std::size_t>(i)] = {doc.id, std::move(mentions)};
  }

  if (salience_keep_fraction < 1.0) {
    std::map<std::string, std::size_t> verb_counts, object_counts;
    for (const auto& [id, mentions] : table.documents)
      for (const auto& m : mentions) {
        ++verb_counts[m.verb_lemma];
        ++object_counts[m.object_lemma];
      }
    const auto verbs = top_fraction(verb_counts, salience_keep_fraction);
    const auto objects = top_fraction(object_counts, salience_keep_fraction);
    for (auto& [id, mentions] : table.documents)
      std::erase_if(mentions, [&](const EventMention& m) {
        return !verbs.count(m.verb_lemma) || !objects.count(m.object_lemma);
      });
  }

  std::set<std::pair<std::string, std::string>> unique;
  for (const auto& [id, mentions] : table.documents) {
    table.total_mentions += mentions.size();
    for (const auto& m : mentions) unique.emplace(m.verb_lemma, m.object_lemma);
  }
  table.unique_events = unique.size();
  return table;
}

json event_to_json(const EventMention& m) {
  return {{"doc_id", m.doc_id},
          {"sentence_index", m.sentence_index},
          {"verb_index", m.verb_index},
          {"object_index", m.object_index},
          {"verb_lemma", m.verb_lemma},
          {"object_lemma", m.object_lemma},
          {"voice", m.voice == Voice::active ? "active" : "passive"}};
}

EventMention event_from_json(const json& r) {
  EventMention m;
  m.doc_id = r.at("doc_id").get<std::string>();
  m.sentence_index = r.at("sentence_index").get<int>();
  m.verb_index = r.at("verb_index").get<int>();
  m.object_index = r.at("object_index").get<int>();
  m.verb_lemma = r.at("verb_lemma").get<std::string>();
  m.object_lemma = r.at("object_lemma").get<std::string>();
  m.voice = r.at("voice").get<std::string>() == "passive" ? Voice::passive : Voice::active;
  return m;
}

void save_event_table(const fs::path& path, const EventTable& table) {
  std::vector<json> records;
  for (const auto& [id, mentions] : table.documents) {
    if (mentions.empty()) records.push_back({{"doc_id", id}, {"empty", true}});
    for (const auto& m : mentions) records.push_back(event_to_json(m));
  }
  write_jsonl(path, records);
}

EventTable load_event_table(const fs::path& path) {
  EventTable table;
  std::map<std::string, std::size_t> index;
  std::set<std::pair<std::string, std::string>> unique;
  read_jsonl(path, [&](const json& r, std::size_t) {
    const auto id = r.at("doc_id").get<std::string>();
    auto it = index.find(id);
    if (it == index.end()) {
      it = index.emplace(id, table.documents.size()).first;
      table.documents.push_back({id, {}});
    }
    if (r.value("empty", false)) return;
    auto m = event_from_json(r);
    unique.emplace(m.verb_lemma, m.object_lemma);
    table.documents[it->second].second.push_back(std::move(m));
    ++table.total_mentions;
  });
  table.unique_events = unique.size();
  return table;
}

}  // namespace narrative
