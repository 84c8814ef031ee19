#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "narrative/corpus.hpp"
#include "narrative/kg_distill.hpp"
#include "narrative/random.hpp"

namespace testutil {

namespace fs = std::filesystem;

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = fs::temp_directory_path() / ("narrative-" + tag + "-" + std::to_string(rd()));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline narrative::Token tok(int index, std::string form, std::string lemma, std::string upos, int head,
                            std::string deprel) {
  return {index, std::move(form), std::move(lemma), std::move(upos), head, std::move(deprel)};
}

// "The <subject> <verb> the <object> ." with the usual dependency tree.
inline narrative::Sentence simple_sentence(int index, const std::string& subject, const std::string& verb_form,
                                           const std::string& verb_lemma, const std::string& object) {
  narrative::Sentence s;
  s.index = index;
  s.tokens = {tok(1, "The", "the", "DET", 2, "det"),     tok(2, subject, subject, "NOUN", 3, "nsubj"),
              tok(3, verb_form, verb_lemma, "VERB", 0, "root"), tok(4, "the", "the", "DET", 5, "det"),
              tok(5, object, object, "NOUN", 3, "obj"),   tok(6, ".", ".", "PUNCT", 3, "punct")};
  return s;
}

// Three relation classes told apart by the head verb; every other word is
// shared noise. Used wherever a learnable relation fixture is needed.
inline narrative::RelationDataset separable_relations(std::size_t per_class, std::uint64_t seed) {
  using namespace narrative;
  const std::vector<std::vector<std::string>> verbs{{"precede", "follow", "await"},
                                                    {"cause", "trigger", "force"},
                                                    {"mention", "ignore", "note"}};
  const std::vector<std::string> objects{"vote", "law", "tax", "wall", "permit", "wage"};
  const std::vector<std::string> subjects{"court", "mayor", "union", "agency"};
  const std::vector<std::string> tail_verbs{"pass", "cut", "build", "seek"};
  Rng rng(seed);
  RelationDataset ds;
  for (std::size_t i = 0; i < per_class; ++i)
    for (int c = 0; c < 3; ++c) {
      const auto& hv = verbs[c][rng.uniform_index(3)];
      const auto& ho = objects[rng.uniform_index(objects.size())];
      const auto& tv = tail_verbs[rng.uniform_index(tail_verbs.size())];
      const auto& to = objects[rng.uniform_index(objects.size())];
      const auto head = subjects[rng.uniform_index(subjects.size())] + " " + hv + " " + ho;
      const auto tail = subjects[rng.uniform_index(subjects.size())] + " " + tv + " " + to;
      ds.examples.push_back({{hv, ho, {1}, 2}, {tv, to, {1}, 2}, head, tail, static_cast<RelationLabel>(c),
                             c == 0 ? "Precedence" : c == 1 ? "Result" : "Contrast", 1.0});
    }
  ds.recount();
  return ds;
}

}  // namespace testutil
