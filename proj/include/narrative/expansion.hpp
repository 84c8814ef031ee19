#pragma once

#include <optional>
#include <string>
#include <vector>

#include "narrative/chains.hpp"
#include "narrative/corpus.hpp"
#include "narrative/providers.hpp"

namespace narrative {

enum class ExpansionMethod { llm, template_ };

std::string to_string(ExpansionMethod method);
ExpansionMethod parse_expansion_method(const std::string& text);

struct ExpandedChain {
  NarrativeChain chain;
  std::string sentence;
  ExpansionMethod method = ExpansionMethod::llm;
  std::string cache_key;
};

// Bumped whenever either prompt changes; part of every cache key.
inline constexpr const char* kPromptVersion = "v1";

const std::string& expansion_system_prompt();

// ((v1, o1), CAUSAL, (v2, o2))
std::string render_chain(const NarrativeChain& chain);
std::string expansion_user_prompt(const std::string& article_text, const NarrativeChain& chain);

std::string expansion_cache_key(const std::string& article_text, const NarrativeChain& chain, ExpansionMethod method);

// First non-empty line, whitespace and surrounding quotes stripped. Throws
// EmptyExpansion when nothing is left.
std::string clean_generation(const std::string& text);

ExpandedChain expand_template(const NarrativeChain& chain);

ExpandedChain expand_llm(const NarrativeChain& chain, const std::string& article_text, GenerationProvider& gen,
                         const DiskCache* cache = nullptr);

struct ExpansionFailure {
  std::size_t index = 0;
  std::string message;
};

struct ExpansionBatch {
  std::vector<std::optional<ExpandedChain>> expansions;  // input order; empty where failed
  std::vector<ExpansionFailure> failures;
  std::size_t cache_hits = 0;
  std::size_t generated = 0;
};

// Per-item failures are recorded, never thrown. `parallelism` bounds the
// number of concurrent provider calls.
ExpansionBatch expand_batch(const std::vector<NarrativeChain>& chains, const Corpus& corpus, GenerationProvider* gen,
                            ExpansionMethod method, int parallelism = 4, const DiskCache* cache = nullptr);

json expansion_to_json(const ExpandedChain& expansion);
ExpandedChain expansion_from_json(const json& record);

}  // namespace narrative
