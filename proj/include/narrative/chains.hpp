#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "narrative/corpus.hpp"
#include "narrative/events.hpp"
#include "narrative/relation_model.hpp"

namespace narrative {

struct NarrativeChain {
  std::string doc_id;
  EventMention event1;
  EventMention event2;
  RelationLabel relation = RelationLabel::Causal;
  double confidence = 0.0;
  double none_probability = 0.0;

  bool operator==(const NarrativeChain&) const = default;
};

// All ordered pairs (i, j), i != j, in document order. With `max_pairs` set and
// exceeded, a seeded uniform subsample kept in document order.
std::vector<std::pair<std::size_t, std::size_t>> candidate_pairs(std::size_t events,
                                                                 std::optional<std::size_t> max_pairs = std::nullopt,
                                                                 std::uint64_t seed = 42);

// Builds the relation example for an ordered event pair, each event's
// sentence serving as its context.
RelationExample pair_example(const Document& doc, const EventMention& first, const EventMention& second);

class PairClassifier {
 public:
  virtual ~PairClassifier() = default;
  virtual std::vector<RelationPrediction> classify(const std::vector<RelationExample>& pairs) = 0;
};

class ModelPairClassifier : public PairClassifier {
 public:
  ModelPairClassifier(const RelationClassifier& model, EmbeddingProvider& provider, int max_tokens = 256)
      : model_(model), provider_(provider), max_tokens_(max_tokens) {}

  std::vector<RelationPrediction> classify(const std::vector<RelationExample>& pairs) override;

 private:
  const RelationClassifier& model_;
  EmbeddingProvider& provider_;
  int max_tokens_;
};

struct ChainConfig {
  std::optional<std::size_t> max_pairs;
  std::uint64_t seed = 42;
  double min_confidence = 0.0;
  std::size_t batch_size = 64;
};

struct ChainBuildResult {
  std::vector<NarrativeChain> chains;
  std::size_t candidates = 0;
  std::size_t duplicates_removed = 0;
  std::size_t skipped_pairs = 0;
  std::vector<std::string> warnings;
};

// Keeps Temporal/Causal predictions whose probability exceeds the None
// probability and `min_confidence`; repeated (verb, object, relation, verb,
// object) triples keep their first occurrence.
ChainBuildResult build_chains(const Document& doc, const std::vector<EventMention>& events,
                              PairClassifier& classifier, const ChainConfig& config = {});

json chain_to_json(const NarrativeChain& chain);
NarrativeChain chain_from_json(const json& record);
void save_chains(const fs::path& path, const std::vector<NarrativeChain>& chains);
std::vector<NarrativeChain> load_chains(const fs::path& path);

}  // namespace narrative
