#include "narrative/chains.hpp"

#include <algorithm>
#include <set>
#include <tuple>

#include "narrative/error.hpp"
#include "narrative/random.hpp"

namespace narrative {

std::vector<std::pair<std::size_t, std::size_t>> candidate_pairs(std::size_t events,
                                                                 std::optional<std::size_t> max_pairs,
                                                                 std::uint64_t seed) {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < events; ++i)
    for (std::size_t j = 0; j < events; ++j)
      if (i != j) pairs.emplace_back(i, j);
  if (!max_pairs || pairs.size() <= *max_pairs) return pairs;
  Rng rng(seed);
  auto picked = rng.sample_without_replacement(pairs.size(), *max_pairs);
  std::sort(picked.begin(), picked.end());
  std::vector<std::pair<std::size_t, std::size_t>> out;
  out.reserve(picked.size());
  for (auto p : picked) out.push_back(pairs[p]);
  return out;
}

RelationExample pair_example(const Document& doc, const EventMention& first, const EventMention& second) {
  auto side = [&](const EventMention& m, VOPair& vo, std::string& context) {
    require(m.doc_id == doc.id, ErrorKind::InvalidArgument, "event belongs to " + m.doc_id + ", not " + doc.id);
    require(m.sentence_index >= 0 && static_cast<std::size_t>(m.sentence_index) < doc.sentences.size(),
            ErrorKind::InvalidArgument, "event sentence index out of range in " + doc.id);
    context = doc.sentences[static_cast<std::size_t>(m.sentence_index)].text();
    vo.verb = m.verb_lemma;
    vo.object = m.object_lemma;
    vo.verb_tokens = {m.verb_index - 1};
    vo.object_token = m.object_index - 1;
  };
  RelationExample ex;
  side(first, ex.head, ex.head_context);
  side(second, ex.tail, ex.tail_context);
  return ex;
}

std::vector<RelationPrediction> ModelPairClassifier::classify(const std::vector<RelationExample>& pairs) {
  if (pairs.empty()) return {};
  return model_.predict(featurize_all(pairs, provider_, max_tokens_, pairs.size()));
}

namespace {

using ChainKey = std::tuple<std::string, std::string, int, std::string, std::string>;

ChainKey key_of(const NarrativeChain& c) {
  return {c.event1.verb_lemma, c.event1.object_lemma, static_cast<int>(c.relation), c.event2.verb_lemma,
          c.event2.object_lemma};
}

}  // namespace

ChainBuildResult build_chains(const Document& doc, const std::vector<EventMention>& events,
                              PairClassifier& classifier, const ChainConfig& config) {
  ChainBuildResult result;
  const auto pairs = candidate_pairs(events.size(), config.max_pairs, config.seed);
  result.candidates = pairs.size();
  std::vector<std::optional<RelationPrediction>> predictions(pairs.size());

  auto classify_range = [&](std::size_t begin, std::size_t end) {
    std::vector<RelationExample> batch;
    for (std::size_t p = begin; p < end; ++p)
      batch.push_back(pair_example(doc, events[pairs[p].first], events[pairs[p].second]));
    const auto out = classifier.classify(batch);
    require(out.size() == batch.size(), ErrorKind::ProtocolError, "classifier returned wrong prediction count");
    for (std::size_t p = begin; p < end; ++p) predictions[p] = out[p - begin];
  };

  const std::size_t batch = std::max<std::size_t>(config.batch_size, 1);
  for (std::size_t start = 0; start < pairs.size(); start += batch) {
    const std::size_t end = std::min(pairs.size(), start + batch);
    try {
      classify_range(start, end);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::SpanNotAligned) {
        // Isolate the offending pairs.
        for (std::size_t p = start; p < end; ++p) {
          try {
            classify_range(p, p + 1);
          } catch (const Error& inner) {
            if (inner.kind() != ErrorKind::SpanNotAligned && !inner.retryable()) throw;
            ++result.skipped_pairs;
            result.warnings.push_back(doc.id + ": pair skipped: " + inner.what());
          }
        }
      } else if (e.retryable()) {
        result.skipped_pairs += end - start;
        result.warnings.push_back(doc.id + ": " + std::to_string(end - start) + " pairs skipped: " + e.what());
      } else {
        throw;
      }
    }
  }

  std::set<ChainKey> seen;
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    if (!predictions[p]) continue;
    const auto& pred = *predictions[p];
    if (pred.label == RelationLabel::None) continue;
    const double confidence = pred.probabilities[static_cast<std::size_t>(pred.label)];
    const double none_p = pred.probabilities[static_cast<std::size_t>(RelationLabel::None)];
    if (!(confidence > none_p) || confidence < config.min_confidence) continue;
    NarrativeChain chain{doc.id, events[pairs[p].first], events[pairs[p].second], pred.label, confidence, none_p};
    if (!seen.insert(key_of(chain)).second) {
      ++result.duplicates_removed;
      continue;
    }
    result.chains.push_back(std::move(chain));
  }
  return result;
}

json chain_to_json(const NarrativeChain& c) {
  return {{"doc_id", c.doc_id},
          {"event1", event_to_json(c.event1)},
          {"event2", event_to_json(c.event2)},
          {"relation", to_string(c.relation)},
          {"confidence", c.confidence},
          {"none_probability", c.none_probability}};
}

NarrativeChain chain_from_json(const json& r) {
  NarrativeChain c;
  c.doc_id = r.at("doc_id").get<std::string>();
  c.event1 = event_from_json(r.at("event1"));
  c.event2 = event_from_json(r.at("event2"));
  c.relation = parse_relation_label(r.at("relation").get<std::string>());
  require(c.relation != RelationLabel::None, ErrorKind::MalformedRecord, "chain with relation None");
  c.confidence = r.at("confidence").get<double>();
  c.none_probability = r.value("none_probability", 0.0);
  return c;
}

void save_chains(const fs::path& path, const std::vector<NarrativeChain>& chains) {
  std::vector<json> records;
  records.reserve(chains.size());
  for (const auto& c : chains) records.push_back(chain_to_json(c));
  write_jsonl(path, records);
}

std::vector<NarrativeChain> load_chains(const fs::path& path) {
  std::vector<NarrativeChain> out;
  read_jsonl(path, [&](const json& r, std::size_t) { out.push_back(chain_from_json(r)); });
  return out;
}

}  // namespace narrative
