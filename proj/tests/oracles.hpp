#pragma once

// Brute-force reference computations shared by the unit and acceptance tests.
// Each one is written independently of the library code it checks.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

namespace oracle {

// Phrases are "<subject> <verb> <object>" or "<subject> not <verb> <object>".
struct SimpleEdge {
  std::string head;
  std::string tail;
  std::map<std::string, long> counts;
};

// (head verb, head object, tail verb, tail object, label, source relation, strength)
using DistilledRow = std::tuple<std::string, std::string, std::string, std::string, std::string, std::string, double>;

inline std::pair<std::string, std::string> phrase_vo(const std::string& phrase) {
  std::vector<std::string> words;
  std::size_t start = 0;
  while (start < phrase.size()) {
    auto end = phrase.find(' ', start);
    if (end == std::string::npos) end = phrase.size();
    words.push_back(phrase.substr(start, end - start));
    start = end + 1;
  }
  if (words.size() == 4) return {"not " + words[2], words[3]};
  return {words[1], words[2]};
}

inline std::vector<DistilledRow> distill(const std::vector<SimpleEdge>& edges, std::size_t min_pairs,
                                         const std::set<std::string>& phrases_with_parse) {
  const std::vector<std::string> priority{"Precedence", "Succession", "Synchronous", "Reason", "Result"};
  auto rank = [&](const std::string& r) {
    for (std::size_t i = 0; i < priority.size(); ++i)
      if (priority[i] == r) return i;
    return priority.size();
  };
  std::vector<std::string> chosen;
  for (const auto& e : edges) {
    long best = -1;
    std::string pick;
    for (const auto& [r, c] : e.counts) {
      bool better = c > best;
      if (c == best) better = rank(r) < rank(pick) || (rank(r) == rank(pick) && r < pick);
      if (better) {
        best = c;
        pick = r;
      }
    }
    chosen.push_back(pick);
  }
  std::map<std::string, std::set<std::pair<std::string, std::string>>> unique;
  for (std::size_t i = 0; i < edges.size(); ++i) unique[chosen[i]].insert({edges[i].head, edges[i].tail});
  const std::map<std::string, std::string> label_of{{"Precedence", "Temporal"}, {"Succession", "Temporal"},
                                                    {"Synchronous", "Temporal"}, {"Reason", "Causal"},
                                                    {"Result", "Causal"}};
  std::vector<DistilledRow> rows;
  for (std::size_t i = 0; i < edges.size(); ++i) {
    if (unique[chosen[i]].size() < min_pairs) continue;
    if (!phrases_with_parse.count(edges[i].head) || !phrases_with_parse.count(edges[i].tail)) continue;
    long total = 0;
    for (const auto& kv : edges[i].counts) total += kv.second;
    const auto h = phrase_vo(edges[i].head), t = phrase_vo(edges[i].tail);
    auto it = label_of.find(chosen[i]);
    rows.emplace_back(h.first, h.second, t.first, t.second, it == label_of.end() ? "None" : it->second, chosen[i],
                      static_cast<double>(edges[i].counts.at(chosen[i])) / static_cast<double>(total));
  }
  std::sort(rows.begin(), rows.end());
  return rows;
}

// Nominal alpha as 1 - D_o / D_e, both computed by enumerating ordered value
// pairs: D_o within units (weighted 1/(m-1)), D_e across all pairable values.
inline double alpha_pairs(const std::vector<std::vector<std::optional<int>>>& units) {
  std::vector<int> pooled;
  double within_disagree = 0.0;
  for (const auto& unit : units) {
    std::vector<int> v;
    for (const auto& x : unit)
      if (x) v.push_back(*x);
    if (v.size() < 2) continue;
    for (std::size_t i = 0; i < v.size(); ++i)
      for (std::size_t j = 0; j < v.size(); ++j)
        if (i != j && v[i] != v[j]) within_disagree += 1.0 / static_cast<double>(v.size() - 1);
    pooled.insert(pooled.end(), v.begin(), v.end());
  }
  const double n = static_cast<double>(pooled.size());
  double across = 0.0;
  for (std::size_t i = 0; i < pooled.size(); ++i)
    for (std::size_t j = 0; j < pooled.size(); ++j)
      if (i != j && pooled[i] != pooled[j]) across += 1.0;
  const double d_o = within_disagree / n;
  const double d_e = across / (n * (n - 1.0));
  return 100.0 * (1.0 - d_o / d_e);
}

// I(X; Y) = sum_xy p(x, y) log(p(x, y) / (p(x) p(y))) by enumerating documents.
inline double mi_binary(const std::vector<int>& x, const std::vector<int>& y) {
  const double n = static_cast<double>(x.size());
  double total = 0.0;
  for (int a = 0; a <= 1; ++a)
    for (int b = 0; b <= 1; ++b) {
      double joint = 0, px = 0, py = 0;
      for (std::size_t i = 0; i < x.size(); ++i) {
        joint += (x[i] == a && y[i] == b);
        px += x[i] == a;
        py += y[i] == b;
      }
      if (joint == 0) continue;
      total += joint / n * std::log((joint / n) / ((px / n) * (py / n)));
    }
  return total;
}

}  // namespace oracle
