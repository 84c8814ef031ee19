#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "narrative/corpus.hpp"

namespace narrative {

enum class RelationLabel { Temporal = 0, Causal = 1, None = 2 };
inline constexpr std::size_t kRelationClasses = 3;

std::string to_string(RelationLabel label);
RelationLabel parse_relation_label(const std::string& text);

// An eventuality-graph edge; relation_counts[r] is how often (head, r, tail) occurs.
struct KGEdge {
  std::string head_phrase;
  std::string tail_phrase;
  std::map<std::string, std::int64_t> relation_counts;
};

// Verb (possibly "not "-prefixed) and object from one event phrase. The token
// positions are 0-based whitespace positions in the phrase's parse (negation
// marker first when present) and drive span pooling.
struct VOPair {
  std::string verb;
  std::string object;
  std::vector<int> verb_tokens;
  int object_token = -1;

  bool operator==(const VOPair&) const = default;
  auto operator<=>(const VOPair&) const = default;
};

struct RelationExample {
  VOPair head;
  VOPair tail;
  std::string head_context;
  std::string tail_context;
  RelationLabel label = RelationLabel::None;
  std::string source_relation;
  double strength = 1.0;

  bool operator==(const RelationExample&) const = default;
  auto operator<=>(const RelationExample&) const = default;
};

struct RelationDataset {
  std::vector<RelationExample> examples;
  std::map<RelationLabel, std::size_t> class_counts;

  void recount();
};

// P(r | head, tail) = count(r) / sum of counts on the edge.
double relation_strength(const KGEdge& edge, const std::string& relation);

// Tie order: position in `priority`, then alphabetical for unlisted types.
struct RelationPriority {
  std::vector<std::string> order{"Precedence", "Succession", "Synchronous", "Reason", "Result"};
  bool before(const std::string& a, const std::string& b) const;
};

struct SelectedRelation {
  std::string relation;
  double strength = 0.0;
};

SelectedRelation select_edge_relation(const KGEdge& edge, const RelationPriority& priority = {});

// A relation type survives when it is the selected relation of at least
// `min_unique_pairs` distinct (head_phrase, tail_phrase) pairs.
std::set<std::string> filter_relations(const std::vector<KGEdge>& edges, std::size_t min_unique_pairs = 5,
                                       const RelationPriority& priority = {});

inline const std::set<std::string>& negation_markers() {
  static const std::set<std::string> markers{"no", "not", "n't", "never", "none"};
  return markers;
}

// All verb x object combinations in the phrase; negated verbs become "not <verb>".
std::vector<VOPair> reduce_to_vo(const std::string& phrase, const Sentence& phrase_parse);

RelationLabel map_label(const std::string& relation_type);

// Phrase -> parse, read from CoNLL-U whose sentences carry `# text = <phrase>`.
class PhraseParses {
 public:
  PhraseParses() = default;
  static PhraseParses load(const fs::path& path);
  void add(const std::string& phrase, Sentence parse);
  const Sentence* find(const std::string& phrase) const;
  std::size_t size() const { return parses_.size(); }

 private:
  std::map<std::string, Sentence> parses_;
};

struct DistillConfig {
  std::size_t min_unique_pairs = 5;
  RelationPriority priority;
  // Fraction of None examples kept; selection hashes the example so it does
  // not depend on stream order.
  double none_keep_fraction = 1.0;
};

struct DistillResult {
  RelationDataset dataset;
  std::set<std::string> retained_relations;
  std::size_t skipped_missing_parse = 0;
  std::size_t dropped_filtered = 0;
};

DistillResult build_dataset(const std::vector<KGEdge>& edges, const PhraseParses& parses,
                            const DistillConfig& config = {});

// KG records: {"head": ..., "tail": ..., "relations": {"Result": 3, ...}}.
std::vector<KGEdge> load_kg(const fs::path& path);

json example_to_json(const RelationExample& example);
RelationExample example_from_json(const json& record);
void save_dataset(const fs::path& path, const RelationDataset& dataset);
RelationDataset load_dataset(const fs::path& path);
json class_counts_json(const RelationDataset& dataset);

}  // namespace narrative
