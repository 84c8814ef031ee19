#include "narrative/expansion.hpp"

#include <algorithm>
#include <atomic>
#include <mutex>
#include <thread>

#include "narrative/error.hpp"

namespace narrative {

std::string to_string(ExpansionMethod method) { return method == ExpansionMethod::llm ? "llm" : "template"; }

ExpansionMethod parse_expansion_method(const std::string& text) {
  if (text == "llm") return ExpansionMethod::llm;
  if (text == "template") return ExpansionMethod::template_;
  fail(ErrorKind::InvalidArgument, "unknown expansion method '" + text + "' (expected llm or template)");
}

const std::string& expansion_system_prompt() {
  static const std::string prompt =
      "I want you to generate plausible sentences that expand on an event chain from a news article. "
      "Events correspond to what we perceive around us and is denoted as a (VERB, OBJECT) pair. "
      "The object is the direct object of the verb in a linguistic sense. "
      "An example of an event is (arrest, people). "
      "The verb and object will correspond to a word in the article and may or may not be in their lemmatized form. "
      "An event chain comprises of two events connected by either a causal or temporal relation. "
      "It'll be denoted as a tuple as follows: (EVENT_1, RELATION_TYPE, EVENT_2). "
      "RELATION_TYPE can be either CAUSAL or TEMPORAL. "
      "CAUSAL indicates that EVENT_2 occurred as a result of EVENT_1 or EVENT_2 is the reason why EVENT_1 occurred. "
      "TEMPORAL indicates EVENT_2 occurred before, after or synchronously with EVENT_1. "
      "An example of an event chain is ((arrest, people), CAUSAL, (protest, legislation)). "
      "I will provide you with an event chain and the corresponding news article to which it belongs. "
      "I want you to expand the event chain into a plausible sentence.";
  return prompt;
}

namespace {

std::string relation_word(RelationLabel relation) {
  switch (relation) {
    case RelationLabel::Causal:
      return "causal";
    case RelationLabel::Temporal:
      return "temporal";
    case RelationLabel::None:
      break;
  }
  fail(ErrorKind::InvalidArgument, "a narrative chain cannot carry relation None");
}

std::string render_event(const EventMention& e) { return "(" + e.verb_lemma + ", " + e.object_lemma + ")"; }

std::string upper(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  return s;
}

}  // namespace

std::string render_chain(const NarrativeChain& chain) {
  return "(" + render_event(chain.event1) + ", " + upper(relation_word(chain.relation)) + ", " +
         render_event(chain.event2) + ")";
}

std::string expansion_user_prompt(const std::string& article_text, const NarrativeChain& chain) {
  return "News Article: " + article_text + ". Event Chain: " + render_chain(chain) +
         ". Generate a very short sentence that expands the events in the event chain and the relationship between "
         "them in the context of the news article. Do not generate anything else.";
}

std::string expansion_cache_key(const std::string& article_text, const NarrativeChain& chain,
                                ExpansionMethod method) {
  json material = {{"article", article_text},
                   {"chain", render_chain(chain)},
                   {"prompt_version", kPromptVersion},
                   {"method", to_string(method)}};
  return sha256_hex(material.dump());
}

std::string clean_generation(const std::string& text) {
  for (const auto& raw_line : split(text, '\n')) {
    std::string line = trim(raw_line);
    while (line.size() >= 2 && ((line.front() == '"' && line.back() == '"') ||
                                (line.front() == '\'' && line.back() == '\''))) {
      line = trim(line.substr(1, line.size() - 2));
    }
    if (!line.empty()) return line;
  }
  fail(ErrorKind::EmptyExpansion, "generation is empty after cleanup");
}

ExpandedChain expand_template(const NarrativeChain& chain) {
  ExpandedChain out;
  out.chain = chain;
  out.method = ExpansionMethod::template_;
  out.sentence = "There is a " + relation_word(chain.relation) + " relationship between " +
                 render_event(chain.event1) + " and " + render_event(chain.event2) + ".";
  out.cache_key = expansion_cache_key("", chain, out.method);
  return out;
}

ExpandedChain expand_llm(const NarrativeChain& chain, const std::string& article_text, GenerationProvider& gen,
                         const DiskCache* cache) {
  require(!trim(article_text).empty(), ErrorKind::PreconditionFailed, "article text is empty for " + chain.doc_id);
  ExpandedChain out;
  out.chain = chain;
  out.method = ExpansionMethod::llm;
  out.cache_key = expansion_cache_key(article_text, chain, out.method);
  if (cache) {
    if (auto hit = cache->get(out.cache_key); hit && hit->contains("sentence")) {
      out.sentence = hit->at("sentence").get<std::string>();
      return out;
    }
  }
  GenerationRequest request;
  request.system = expansion_system_prompt();
  request.user = expansion_user_prompt(article_text, chain);
  out.sentence = clean_generation(gen.generate(request).text);
  if (cache) cache->put(out.cache_key, {{"sentence", out.sentence}, {"model", gen.model_id()}});
  return out;
}

ExpansionBatch expand_batch(const std::vector<NarrativeChain>& chains, const Corpus& corpus, GenerationProvider* gen,
                            ExpansionMethod method, int parallelism, const DiskCache* cache) {
  ExpansionBatch batch;
  batch.expansions.resize(chains.size());
  if (method == ExpansionMethod::template_) {
    for (std::size_t i = 0; i < chains.size(); ++i) batch.expansions[i] = expand_template(chains[i]);
    return batch;
  }
  require(gen != nullptr, ErrorKind::InvalidArgument, "llm expansion needs a generation provider");

  std::mutex mutex;
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < chains.size(); i = next++) {
      try {
        const Document* doc = corpus.find(chains[i].doc_id);
        require(doc != nullptr, ErrorKind::MissingArtifact, "chain refers to unknown document " + chains[i].doc_id);
        const bool cached = cache && cache->get(expansion_cache_key(doc->text, chains[i], method)).has_value();
        auto expanded = expand_llm(chains[i], doc->text, *gen, cache);
        std::lock_guard lock(mutex);
        batch.expansions[i] = std::move(expanded);
        ++(cached ? batch.cache_hits : batch.generated);
      } catch (const std::exception& e) {
        std::lock_guard lock(mutex);
        batch.failures.push_back({i, e.what()});
      }
    }
  };
  const int threads = std::clamp(parallelism, 1, 64);
  {
    std::vector<std::jthread> pool;
    for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
  }
  std::sort(batch.failures.begin(), batch.failures.end(),
            [](const ExpansionFailure& a, const ExpansionFailure& b) { return a.index < b.index; });
  return batch;
}

json expansion_to_json(const ExpandedChain& e) {
  return {{"chain", chain_to_json(e.chain)},
          {"sentence", e.sentence},
          {"method", to_string(e.method)},
          {"cache_key", e.cache_key}};
}

ExpandedChain expansion_from_json(const json& r) {
  ExpandedChain e;
  e.chain = chain_from_json(r.at("chain"));
  e.sentence = r.at("sentence").get<std::string>();
  require(!e.sentence.empty(), ErrorKind::MalformedRecord, "expansion with an empty sentence");
  e.method = parse_expansion_method(r.at("method").get<std::string>());
  e.cache_key = r.value("cache_key", "");
  return e;
}

}  // namespace narrative
