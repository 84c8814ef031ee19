#include "narrative/kg_distill.hpp"

#include <algorithm>
#include <cstring>
#include <sstream>

#include "narrative/error.hpp"
#include "narrative/events.hpp"

namespace narrative {

std::string to_string(RelationLabel label) {
  switch (label) {
    case RelationLabel::Temporal: return "Temporal";
    case RelationLabel::Causal: return "Causal";
    case RelationLabel::None: return "None";
  }
  return "None";
}

RelationLabel parse_relation_label(const std::string& text) {
  if (text == "Temporal") return RelationLabel::Temporal;
  if (text == "Causal") return RelationLabel::Causal;
  if (text == "None") return RelationLabel::None;
  fail(ErrorKind::MalformedRecord, "unknown relation label '" + text + "'");
}

void RelationDataset::recount() {
  class_counts = {{RelationLabel::Temporal, 0}, {RelationLabel::Causal, 0}, {RelationLabel::None, 0}};
  for (const auto& e : examples) ++class_counts[e.label];
}

double relation_strength(const KGEdge& edge, const std::string& relation) {
  auto it = edge.relation_counts.find(relation);
  require(it != edge.relation_counts.end(), ErrorKind::RelationAbsent,
          "relation '" + relation + "' not on edge (" + edge.head_phrase + ", " + edge.tail_phrase + ")");
  std::int64_t total = 0;
  for (const auto& [r, count] : edge.relation_counts) total += count;
  return static_cast<double>(it->second) / static_cast<double>(total);
}

bool RelationPriority::before(const std::string& a, const std::string& b) const {
  auto rank = [&](const std::string& r) {
    auto it = std::find(order.begin(), order.end(), r);
    return static_cast<std::size_t>(it - order.begin());
  };
  const auto ra = rank(a), rb = rank(b);
  if (ra != rb) return ra < rb;
  return a < b;
}

SelectedRelation select_edge_relation(const KGEdge& edge, const RelationPriority& priority) {
  require(!edge.relation_counts.empty(), ErrorKind::InvalidArgument, "edge has no relations");
  const std::string* best = nullptr;
  std::int64_t best_count = 0;
  for (const auto& [relation, count] : edge.relation_counts) {
    if (!best || count > best_count || (count == best_count && priority.before(relation, *best))) {
      best = &relation;
      best_count = count;
    }
  }
  return {*best, relation_strength(edge, *best)};
}

std::set<std::string> filter_relations(const std::vector<KGEdge>& edges, std::size_t min_unique_pairs,
                                       const RelationPriority& priority) {
  std::map<std::string, std::set<std::pair<std::string, std::string>>> pairs;
  for (const auto& edge : edges)
    pairs[select_edge_relation(edge, priority).relation].emplace(edge.head_phrase, edge.tail_phrase);
  std::set<std::string> retained;
  for (const auto& [relation, set] : pairs)
    if (set.size() >= min_unique_pairs) retained.insert(relation);
  return retained;
}

namespace {

std::string lemma_lower(const Token& t) {
  return to_lower((t.lemma.empty() || t.lemma == "_") ? t.form : t.lemma);
}

bool is_object_token(const Token& t) {
  return t.deprel == "obj" || t.deprel == "dobj" || t.deprel == "nsubjpass" || t.deprel == "nsubj:pass";
}

}  // namespace

std::vector<VOPair> reduce_to_vo(const std::string& phrase, const Sentence& parse) {
  (void)phrase;
  struct VerbEntry {
    std::string text;
    std::vector<int> positions;
  };
  std::vector<VerbEntry> verbs;
  std::vector<const Token*> objects;
  for (const auto& t : parse.tokens) {
    if (is_candidate_verb(t)) {
      VerbEntry entry{lemma_lower(t), {}};
      int negation = 0;
      for (const auto& child : parse.tokens) {
        if (child.head != t.index) continue;
        if (child.deprel == "neg" || negation_markers().count(to_lower(child.form)) ||
            negation_markers().count(lemma_lower(child))) {
          negation = child.index;
          break;
        }
      }
      if (negation) {
        entry.text = "not " + entry.text;
        entry.positions.push_back(negation - 1);
      }
      entry.positions.push_back(t.index - 1);
      if (!entry.text.empty()) verbs.push_back(std::move(entry));
    }
    if (is_object_token(t)) objects.push_back(&t);
  }
  std::vector<VOPair> out;
  for (const auto& verb : verbs)
    for (const Token* object : objects) {
      auto object_text = lemma_lower(*object);
      if (object_text.empty()) continue;
      out.push_back({verb.text, object_text, verb.positions, object->index - 1});
    }
  return out;
}

RelationLabel map_label(const std::string& relation_type) {
  if (relation_type == "Precedence" || relation_type == "Succession" || relation_type == "Synchronous")
    return RelationLabel::Temporal;
  if (relation_type == "Reason" || relation_type == "Result") return RelationLabel::Causal;
  return RelationLabel::None;
}

PhraseParses PhraseParses::load(const fs::path& path) {
  PhraseParses out;
  for (auto& block : parse_conllu_file(path))
    for (auto& s : block.sentences) {
      auto it = s.comments.find("text");
      std::string phrase = it != s.comments.end() ? it->second : s.text();
      out.add(phrase, std::move(s));
    }
  return out;
}

void PhraseParses::add(const std::string& phrase, Sentence parse) {
  parses_.insert_or_assign(phrase, std::move(parse));
}

const Sentence* PhraseParses::find(const std::string& phrase) const {
  auto it = parses_.find(phrase);
  return it == parses_.end() ? nullptr : &it->second;
}

namespace {

// Stable across stream order: depends only on the example content.
bool keep_none_example(const RelationExample& e, double fraction) {
  if (fraction >= 1.0) return true;
  const auto digest = sha256_hex(e.head_context + '\x1f' + e.tail_context + '\x1f' + e.head.verb +
                                 '\x1f' + e.head.object + '\x1f' + e.tail.verb + '\x1f' + e.tail.object);
  const auto prefix = std::stoull(digest.substr(0, 13), nullptr, 16);
  return static_cast<double>(prefix) / static_cast<double>(1ULL << 52) < fraction;
}

}  // namespace

DistillResult build_dataset(const std::vector<KGEdge>& edges, const PhraseParses& parses,
                            const DistillConfig& config) {
  DistillResult result;
  result.retained_relations = filter_relations(edges, config.min_unique_pairs, config.priority);
  auto& examples = result.dataset.examples;
  for (const auto& edge : edges) {
    const auto selected = select_edge_relation(edge, config.priority);
    if (!result.retained_relations.count(selected.relation)) {
      ++result.dropped_filtered;
      continue;
    }
    const Sentence* head_parse = parses.find(edge.head_phrase);
    const Sentence* tail_parse = parses.find(edge.tail_phrase);
    if (!head_parse || !tail_parse) {
      ++result.skipped_missing_parse;
      continue;
    }
    const auto label = map_label(selected.relation);
    const auto heads = reduce_to_vo(edge.head_phrase, *head_parse);
    const auto tails = reduce_to_vo(edge.tail_phrase, *tail_parse);
    for (const auto& h : heads)
      for (const auto& t : tails) {
        RelationExample ex{h, t, head_parse->text(), tail_parse->text(), label, selected.relation,
                           selected.strength};
        if (label == RelationLabel::None && !keep_none_example(ex, config.none_keep_fraction)) continue;
        examples.push_back(std::move(ex));
      }
  }
  result.dataset.recount();
  return result;
}

std::vector<KGEdge> load_kg(const fs::path& path) {
  std::vector<KGEdge> edges;
  read_jsonl(path, [&](const json& r, std::size_t line) {
    const auto where = path.string() + ":" + std::to_string(line);
    require(r.contains("head") && r.contains("tail") && r.contains("relations"),
            ErrorKind::MalformedRecord, where + ": KG record needs head, tail, relations");
    KGEdge edge;
    edge.head_phrase = r["head"].get<std::string>();
    edge.tail_phrase = r["tail"].get<std::string>();
    for (const auto& [relation, count] : r["relations"].items()) {
      const auto c = count.get<std::int64_t>();
      require(c >= 1, ErrorKind::MalformedRecord, where + ": relation count must be >= 1");
      edge.relation_counts[relation] = c;
    }
    require(!edge.relation_counts.empty(), ErrorKind::MalformedRecord, where + ": no relations");
    edges.push_back(std::move(edge));
  });
  return edges;
}

namespace {

json vo_to_json(const VOPair& p) {
  return {{"verb", p.verb}, {"object", p.object}, {"verb_tokens", p.verb_tokens}, {"object_token", p.object_token}};
}

VOPair vo_from_json(const json& r) {
  VOPair p;
  p.verb = r.at("verb").get<std::string>();
  p.object = r.at("object").get<std::string>();
  p.verb_tokens = r.value("verb_tokens", std::vector<int>{});
  p.object_token = r.value("object_token", -1);
  return p;
}

}  // namespace

json example_to_json(const RelationExample& e) {
  return {{"head", vo_to_json(e.head)},
          {"tail", vo_to_json(e.tail)},
          {"head_context", e.head_context},
          {"tail_context", e.tail_context},
          {"label", to_string(e.label)},
          {"source_relation", e.source_relation},
          {"strength", e.strength}};
}

RelationExample example_from_json(const json& r) {
  RelationExample e;
  e.head = vo_from_json(r.at("head"));
  e.tail = vo_from_json(r.at("tail"));
  e.head_context = r.at("head_context").get<std::string>();
  e.tail_context = r.at("tail_context").get<std::string>();
  e.label = parse_relation_label(r.at("label").get<std::string>());
  e.source_relation = r.value("source_relation", "");
  e.strength = r.value("strength", 1.0);
  return e;
}

void save_dataset(const fs::path& path, const RelationDataset& dataset) {
  std::vector<json> records;
  records.reserve(dataset.examples.size());
  for (const auto& e : dataset.examples) records.push_back(example_to_json(e));
  write_jsonl(path, records);
}

RelationDataset load_dataset(const fs::path& path) {
  RelationDataset dataset;
  read_jsonl(path, [&](const json& r, std::size_t) { dataset.examples.push_back(example_from_json(r)); });
  dataset.recount();
  return dataset;
}

json class_counts_json(const RelationDataset& dataset) {
  json out = json::object();
  for (const auto& [label, count] : dataset.class_counts) out[to_string(label)] = count;
  return out;
}

}  // namespace narrative
