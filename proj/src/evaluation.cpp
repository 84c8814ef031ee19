#include "narrative/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "narrative/error.hpp"
#include "narrative/kernels.hpp"
#include "narrative/random.hpp"

namespace narrative {

Metrics macro_metrics(std::span<const int> predictions, std::span<const int> golds, std::size_t num_classes) {
  require(predictions.size() == golds.size(), ErrorKind::DimensionMismatch,
          "predictions and golds differ in length");
  require(num_classes > 0, ErrorKind::InvalidArgument, "no classes");
  Metrics m;
  m.per_class.resize(num_classes);
  std::vector<std::size_t> true_pos(num_classes, 0);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < golds.size(); ++i) {
    const auto g = static_cast<std::size_t>(golds[i]);
    const auto p = static_cast<std::size_t>(predictions[i]);
    require(g < num_classes && p < num_classes, ErrorKind::InvalidArgument, "label out of range");
    ++m.per_class[g].support;
    ++m.per_class[p].predicted;
    if (g == p) {
      ++true_pos[g];
      ++correct;
    }
  }
  const double n = static_cast<double>(golds.size());
  m.accuracy = golds.empty() ? 0.0 : static_cast<double>(correct) / n;
  for (std::size_t c = 0; c < num_classes; ++c) {
    auto& cm = m.per_class[c];
    if (cm.support == 0) m.warnings.push_back("class " + std::to_string(c) + " absent from gold labels");
    cm.precision = cm.predicted ? static_cast<double>(true_pos[c]) / static_cast<double>(cm.predicted) : 0.0;
    cm.recall = cm.support ? static_cast<double>(true_pos[c]) / static_cast<double>(cm.support) : 0.0;
    cm.f1 = (cm.precision + cm.recall) > 0.0 ? 2.0 * cm.precision * cm.recall / (cm.precision + cm.recall) : 0.0;
    m.macro_precision += cm.precision;
    m.macro_recall += cm.recall;
    m.macro_f1 += cm.f1;
    if (!golds.empty()) {
      const double w = static_cast<double>(cm.support) / n;
      m.weighted_precision += w * cm.precision;
      m.weighted_recall += w * cm.recall;
      m.weighted_f1 += w * cm.f1;
    }
  }
  const double k = static_cast<double>(num_classes);
  m.macro_precision /= k;
  m.macro_recall /= k;
  m.macro_f1 /= k;
  return m;
}

json metrics_to_json(const Metrics& m, const std::vector<std::string>& names) {
  json per_class = json::object();
  for (std::size_t c = 0; c < m.per_class.size(); ++c) {
    const auto& cm = m.per_class[c];
    const std::string name = c < names.size() ? names[c] : std::to_string(c);
    per_class[name] = {{"precision", cm.precision}, {"recall", cm.recall}, {"f1", cm.f1},
                       {"support", cm.support}, {"predicted", cm.predicted}};
  }
  return {{"accuracy", m.accuracy},
          {"macro_precision", m.macro_precision},
          {"macro_recall", m.macro_recall},
          {"macro_f1", m.macro_f1},
          {"weighted_precision", m.weighted_precision},
          {"weighted_recall", m.weighted_recall},
          {"weighted_f1", m.weighted_f1},
          {"per_class", per_class},
          {"warnings", m.warnings}};
}

MeanStd mean_std(std::span<const double> values) {
  MeanStd out;
  if (values.empty()) return out;
  out.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  if (values.size() < 2) return out;
  double ss = 0.0;
  for (double v : values) ss += (v - out.mean) * (v - out.mean);
  out.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  return out;
}

std::vector<int> stratified_folds(std::span<const int> labels, int folds, std::uint64_t seed) {
  require(folds >= 2, ErrorKind::InvalidArgument, "need at least 2 folds");
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  std::vector<int> fold(labels.size(), 0);
  Rng rng(seed);
  int offset = 0;
  for (auto& [label, indices] : by_class) {
    require(indices.size() >= static_cast<std::size_t>(folds), ErrorKind::PreconditionFailed,
            "class " + std::to_string(label) + " has " + std::to_string(indices.size()) + " examples, fewer than " +
                std::to_string(folds) + " folds");
    rng.shuffle(indices);
    // Rotating the starting fold per class keeps total fold sizes balanced.
    for (std::size_t j = 0; j < indices.size(); ++j)
      fold[indices[j]] = static_cast<int>((j + static_cast<std::size_t>(offset)) % static_cast<std::size_t>(folds));
    offset = static_cast<int>((static_cast<std::size_t>(offset) + indices.size()) % static_cast<std::size_t>(folds));
  }
  return fold;
}

std::vector<std::size_t> stratified_holdout(std::span<const int> labels, double fraction, std::uint64_t seed) {
  require(fraction > 0.0 && fraction < 1.0, ErrorKind::InvalidArgument, "holdout fraction must lie in (0, 1)");
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  Rng rng(seed);
  std::vector<std::size_t> out;
  for (auto& [label, indices] : by_class) {
    rng.shuffle(indices);
    auto take = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(indices.size())));
    // Keep at least one training example per class.
    take = std::min(take, indices.size() > 0 ? indices.size() - 1 : 0);
    out.insert(out.end(), indices.begin(), indices.begin() + static_cast<std::ptrdiff_t>(take));
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::size_t> validation_split(std::span<const int> labels, double fraction, std::uint64_t seed) {
  auto rows = stratified_holdout(labels, fraction, seed);
  if (!rows.empty() || labels.size() < 2) return rows;
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  const std::vector<std::size_t>* largest = nullptr;
  for (const auto& [label, indices] : by_class)
    if (!largest || indices.size() > largest->size()) largest = &indices;
  if (largest->size() < 2) return rows;
  Rng rng(mix_seed(seed, 0x746f70));
  rows.push_back((*largest)[rng.uniform_index(largest->size())]);
  return rows;
}

double adjusted_rand_index(std::span<const int> a, std::span<const int> b) {
  require(a.size() == b.size(), ErrorKind::DimensionMismatch, "label vectors differ in length");
  auto choose2 = [](double x) { return x * (x - 1.0) / 2.0; };
  std::map<std::pair<int, int>, double> table;
  std::map<int, double> rows, cols;
  for (std::size_t i = 0; i < a.size(); ++i) {
    table[{a[i], b[i]}] += 1;
    rows[a[i]] += 1;
    cols[b[i]] += 1;
  }
  double index = 0, sum_rows = 0, sum_cols = 0;
  for (const auto& [key, count] : table) index += choose2(count);
  for (const auto& [key, count] : rows) sum_rows += choose2(count);
  for (const auto& [key, count] : cols) sum_cols += choose2(count);
  const double total = choose2(static_cast<double>(a.size()));
  if (total == 0.0) return 1.0;
  const double expected = sum_rows * sum_cols / total;
  const double max_index = 0.5 * (sum_rows + sum_cols);
  if (max_index == expected) return 1.0;
  return (index - expected) / (max_index - expected);
}

// ---- intrusion --------------------------------------------------------------------

std::vector<IntrusionItem> intrusion_generate(const ClusterModel& model, const Matrix& vectors,
                                              const std::vector<std::string>& expansions, std::size_t n_items,
                                              std::uint64_t seed, double top_fraction) {
  require(expansions.size() == model.assignments.size() &&
              static_cast<std::size_t>(vectors.rows()) == expansions.size(),
          ErrorKind::DimensionMismatch, "expansions, vectors and assignments must align");
  std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(model.k));
  for (std::size_t i = 0; i < model.assignments.size(); ++i)
    members[static_cast<std::size_t>(model.assignments[i])].push_back(i);
  std::vector<int> non_empty;
  for (int c = 0; c < model.k; ++c)
    if (!members[static_cast<std::size_t>(c)].empty()) non_empty.push_back(c);

  std::vector<int> eligible;
  std::map<int, std::vector<std::size_t>> top_sets;
  if (non_empty.size() >= 2) {
    for (int c : non_empty) {
      auto ranked = rank_by_centroid_distance(model, vectors, c, top_fraction);
      if (ranked.top_count >= 2) {
        eligible.push_back(c);
        top_sets.emplace(c, ranked.top());
      }
    }
  }
  require(!eligible.empty(), ErrorKind::PreconditionFailed,
          "no cluster has two members in its top set alongside another non-empty cluster");

  Rng rng(seed);
  std::vector<IntrusionItem> items;
  for (std::size_t id = 0; id < n_items; ++id) {
    IntrusionItem item;
    item.item_id = id;
    item.source_cluster = eligible[rng.uniform_index(eligible.size())];
    const auto& top = top_sets.at(item.source_cluster);
    const auto pick = rng.sample_without_replacement(top.size(), 2);
    std::vector<int> others;
    for (int c : non_empty)
      if (c != item.source_cluster) others.push_back(c);
    item.intruder_cluster = others[rng.uniform_index(others.size())];
    const auto& pool = members[static_cast<std::size_t>(item.intruder_cluster)];
    const std::size_t intruder = pool[rng.uniform_index(pool.size())];

    std::vector<std::size_t> slots{top[pick[0]], top[pick[1]], intruder};
    const auto order = rng.permutation(3);
    for (std::size_t pos = 0; pos < 3; ++pos) {
      item.candidates[pos] = slots[order[pos]];
      item.texts[pos] = expansions[item.candidates[pos]];
      if (order[pos] == 2) item.hidden_intruder_position = static_cast<int>(pos);
    }
    items.push_back(std::move(item));
  }
  return items;
}

double krippendorff_alpha(const AnnotationMatrix& matrix) {
  std::map<int, std::size_t> value_index;
  for (const auto& row : matrix.choices)
    for (const auto& v : row)
      if (v) value_index.emplace(*v, 0);
  std::size_t idx = 0;
  for (auto& [value, i] : value_index) i = idx++;
  const std::size_t V = value_index.size();
  std::vector<std::vector<double>> coincidence(V, std::vector<double>(V, 0.0));
  std::size_t pairable_units = 0;
  for (const auto& row : matrix.choices) {
    std::vector<std::size_t> values;
    for (const auto& v : row)
      if (v) values.push_back(value_index.at(*v));
    const std::size_t m = values.size();
    if (m < 2) continue;
    ++pairable_units;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j)
        if (i != j) coincidence[values[i]][values[j]] += 1.0 / static_cast<double>(m - 1);
  }
  require(pairable_units > 0, ErrorKind::PreconditionFailed, "alpha needs at least one item with two ratings");
  std::vector<double> marginal(V, 0.0);
  double n = 0.0;
  for (std::size_t c = 0; c < V; ++c)
    for (std::size_t k = 0; k < V; ++k) {
      marginal[c] += coincidence[c][k];
      n += coincidence[c][k];
    }
  double observed = 0.0, expected = 0.0;
  for (std::size_t c = 0; c < V; ++c)
    for (std::size_t k = 0; k < V; ++k) {
      if (c == k) continue;
      observed += coincidence[c][k];
      expected += marginal[c] * marginal[k];
    }
  expected /= (n - 1.0);
  if (expected == 0.0) {
    require(observed == 0.0, ErrorKind::PreconditionFailed, "alpha undefined: disagreement without variation");
    return 100.0;
  }
  return 100.0 * (1.0 - observed / expected);
}

IntrusionScore intrusion_score(const std::vector<IntrusionItem>& items, const AnnotationMatrix& annotations,
                               const std::vector<std::optional<int>>& resolved) {
  require(annotations.annotators.size() >= 2, ErrorKind::PreconditionFailed, "need two primary annotators");
  require(annotations.choices.size() == items.size(), ErrorKind::DimensionMismatch,
          "annotation rows must match items");
  require(resolved.empty() || resolved.size() == items.size(), ErrorKind::DimensionMismatch,
          "resolver choices must match items");
  IntrusionScore score;
  score.items = items.size();
  std::size_t hits = 0;
  AnnotationMatrix primary;
  primary.annotators = {annotations.annotators[0], annotations.annotators[1]};
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto a = annotations.at(i, 0);
    const auto b = annotations.at(i, 1);
    for (const auto& v : {a, b})
      require(!v || (*v >= 0 && *v <= 2), ErrorKind::InvalidArgument, "annotation position out of range");
    primary.choices.push_back({a, b});
    std::optional<int> final_choice;
    if (a && b && *a == *b) {
      final_choice = a;
      ++score.agreed;
    } else if (!resolved.empty() && resolved[i]) {
      final_choice = resolved[i];
      ++score.resolved_by_third;
    } else {
      ++score.unresolved;
    }
    if (final_choice && *final_choice == items[i].hidden_intruder_position) ++hits;
  }
  score.accuracy = items.empty() ? 0.0 : 100.0 * static_cast<double>(hits) / static_cast<double>(items.size());
  score.alpha = krippendorff_alpha(primary);
  return score;
}

json intrusion_item_blinded_json(const IntrusionItem& item) {
  return {{"item_id", item.item_id}, {"candidates", item.texts}};
}

json intrusion_item_key_json(const IntrusionItem& item) {
  return {{"item_id", item.item_id},
          {"hidden_intruder_position", item.hidden_intruder_position},
          {"source_cluster", item.source_cluster},
          {"intruder_cluster", item.intruder_cluster},
          {"candidate_rows", item.candidates}};
}

std::vector<IntrusionItem> load_intrusion_items(const fs::path& blinded, const fs::path& key) {
  auto shown = read_jsonl(blinded);
  auto keys = read_jsonl(key);
  require(shown.size() == keys.size(), ErrorKind::MalformedRecord, "blinded and key files differ in length");
  std::vector<IntrusionItem> items;
  for (std::size_t i = 0; i < shown.size(); ++i) {
    IntrusionItem item;
    item.item_id = shown[i].at("item_id").get<std::size_t>();
    require(keys[i].at("item_id").get<std::size_t>() == item.item_id, ErrorKind::MalformedRecord,
            "key file order does not match blinded file");
    item.texts = shown[i].at("candidates").get<std::array<std::string, 3>>();
    item.hidden_intruder_position = keys[i].at("hidden_intruder_position").get<int>();
    item.source_cluster = keys[i].at("source_cluster").get<int>();
    item.intruder_cluster = keys[i].at("intruder_cluster").get<int>();
    item.candidates = keys[i].at("candidate_rows").get<std::array<std::size_t, 3>>();
    items.push_back(std::move(item));
  }
  return items;
}

AnnotationMatrix load_annotation_grid(const fs::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot open " + path.string());
  AnnotationMatrix matrix;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (trim(line).empty()) continue;
    auto fields = split(line, '\t');
    if (matrix.annotators.empty() && line_number == 1) {
      require(!fields.empty() && fields[0] == "item_id", ErrorKind::MalformedRecord,
              path.string() + ": grid header must start with item_id");
      matrix.annotators.assign(fields.begin() + 1, fields.end());
      continue;
    }
    const auto where = path.string() + ":" + std::to_string(line_number);
    fields.resize(matrix.annotators.size() + 1);
    matrix.item_ids.push_back(std::stoul(fields[0]));
    std::vector<std::optional<int>> row;
    for (std::size_t a = 1; a < fields.size(); ++a) {
      const auto cell = trim(fields[a]);
      if (cell.empty() || cell == "-") {
        row.push_back(std::nullopt);
        continue;
      }
      require(cell == "1" || cell == "2" || cell == "3", ErrorKind::MalformedRecord,
              where + ": choice must be 1, 2 or 3");
      row.push_back(std::stoi(cell) - 1);
    }
    matrix.choices.push_back(std::move(row));
  }
  return matrix;
}

void save_annotation_grid(const fs::path& path, const AnnotationMatrix& matrix) {
  std::ostringstream out;
  out << "item_id";
  for (const auto& a : matrix.annotators) out << '\t' << a;
  out << '\n';
  for (std::size_t i = 0; i < matrix.choices.size(); ++i) {
    out << matrix.item_ids.at(i);
    for (std::size_t a = 0; a < matrix.annotators.size(); ++a) {
      out << '\t';
      if (a < matrix.choices[i].size() && matrix.choices[i][a].has_value())
        out << (matrix.choices[i][a].value() + 1);
      else
        out << '-';
    }
    out << '\n';
  }
  write_text_atomic(path, out.str());
}

// ---- mutual information ------------------------------------------------------------

std::vector<MiEntry> mutual_information(const std::vector<std::vector<int>>& doc_cluster_assignments,
                                        std::span<const int> frame_labels, int k, int frames) {
  require(doc_cluster_assignments.size() == frame_labels.size(), ErrorKind::DimensionMismatch,
          "one label per document required");
  kernels::PresenceMatrix presence =
      kernels::PresenceMatrix::Zero(static_cast<Eigen::Index>(doc_cluster_assignments.size()), k);
  for (std::size_t d = 0; d < doc_cluster_assignments.size(); ++d)
    for (int c : doc_cluster_assignments[d]) {
      require(c >= 0 && c < k, ErrorKind::InvalidArgument, "cluster id out of range");
      presence(static_cast<Eigen::Index>(d), c) = 1;
    }
  const Matrix mi = kernels::omp::mutual_information(presence, frame_labels, frames);
  std::vector<MiEntry> table;
  for (int c = 0; c < k; ++c)
    for (int f = 0; f < frames; ++f) table.push_back({c, f, mi(c, f)});
  return table;
}

std::vector<std::vector<MiEntry>> top_clusters_per_frame(const std::vector<MiEntry>& table, int frames,
                                                         std::size_t n) {
  std::vector<std::vector<MiEntry>> out(static_cast<std::size_t>(frames));
  for (const auto& e : table) {
    require(e.frame >= 0 && e.frame < frames, ErrorKind::InvalidArgument, "frame out of range");
    out[static_cast<std::size_t>(e.frame)].push_back(e);
  }
  for (auto& list : out) {
    std::sort(list.begin(), list.end(), [](const MiEntry& a, const MiEntry& b) {
      if (a.mi != b.mi) return a.mi > b.mi;
      return a.cluster < b.cluster;
    });
    if (list.size() > n) list.resize(n);
  }
  return out;
}

}  // namespace narrative
