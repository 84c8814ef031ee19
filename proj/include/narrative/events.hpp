#pragma once

#include <string>
#include <utility>
#include <vector>

#include "narrative/corpus.hpp"

namespace narrative {

enum class Voice { active, passive };

struct EventMention {
  std::string doc_id;
  int sentence_index = 0;
  int verb_index = 0;    // token index in the sentence (1-based)
  int object_index = 0;  // token index in the sentence (1-based)
  std::string verb_lemma;
  std::string object_lemma;
  Voice voice = Voice::active;

  bool operator==(const EventMention&) const = default;
};

// Candidate verbs: UPOS VERB whose deprel is not an auxiliary relation.
bool is_candidate_verb(const Token& token);

// One mention per (candidate verb, object head). Active voice takes the
// obj/dobj dependents, passive voice the nsubjpass / nsubj:pass dependents;
// objects conjoined to those heads produce their own mentions. Sorted by
// (verb_index, object_index).
std::vector<EventMention> extract_events(const Sentence& sentence, const std::string& doc_id);

struct EventTable {
  std::vector<std::pair<std::string, std::vector<EventMention>>> documents;  // corpus order
  std::size_t total_mentions = 0;
  std::size_t unique_events = 0;  // distinct (verb_lemma, object_lemma)

  const std::vector<EventMention>* find(const std::string& doc_id) const;
};

// With salience_keep_fraction < 1 only mentions whose verb lemma and object
// lemma are both within the top fraction by corpus frequency are kept.
EventTable extract_corpus_events(const Corpus& corpus, double salience_keep_fraction = 1.0);

json event_to_json(const EventMention& mention);
EventMention event_from_json(const json& record);
void save_event_table(const fs::path& path, const EventTable& table);
EventTable load_event_table(const fs::path& path);

}  // namespace narrative
