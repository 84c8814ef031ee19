#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "narrative/clustering.hpp"
#include "narrative/io.hpp"

namespace narrative {

// ---- classification metrics -------------------------------------------------

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;    // gold count
  std::size_t predicted = 0;  // predicted count
};

struct Metrics {
  double accuracy = 0.0;
  std::vector<ClassMetrics> per_class;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  double weighted_precision = 0.0;
  double weighted_recall = 0.0;
  double weighted_f1 = 0.0;
  std::vector<std::string> warnings;
};

// Undefined precision/recall (no predictions / no gold items) count as 0.
// Classes absent from the golds still take part in the macro averages and
// raise a warning.
Metrics macro_metrics(std::span<const int> predictions, std::span<const int> golds, std::size_t num_classes);

json metrics_to_json(const Metrics& metrics, const std::vector<std::string>& class_names);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation (n - 1); 0 for a single value
};

MeanStd mean_std(std::span<const double> values);

// Fold id per example; each class is shuffled under `seed` and dealt
// round-robin, so per-fold class counts differ by at most one.
std::vector<int> stratified_folds(std::span<const int> labels, int folds, std::uint64_t seed);

// Indices of a stratified holdout of round(fraction * count) per class.
std::vector<std::size_t> stratified_holdout(std::span<const int> labels, double fraction, std::uint64_t seed);

// stratified_holdout, topped up with one row of the largest class when the
// per-class rounding leaves it empty.
std::vector<std::size_t> validation_split(std::span<const int> labels, double fraction, std::uint64_t seed);

double adjusted_rand_index(std::span<const int> a, std::span<const int> b);

// ---- intrusion test ---------------------------------------------------------

struct IntrusionItem {
  std::size_t item_id = 0;
  std::array<std::size_t, 3> candidates{};  // expansion row indices, shown order
  std::array<std::string, 3> texts;
  int hidden_intruder_position = 0;
  int source_cluster = 0;
  int intruder_cluster = 0;
};

// Two distinct members from the source cluster's top ranked set plus one
// member drawn uniformly from a different cluster, shuffled.
std::vector<IntrusionItem> intrusion_generate(const ClusterModel& model, const Matrix& vectors,
                                              const std::vector<std::string>& expansions, std::size_t n_items,
                                              std::uint64_t seed, double top_fraction = 0.25);

// items x annotators; entries 0..2 or missing.
struct AnnotationMatrix {
  std::vector<std::string> annotators;
  std::vector<std::size_t> item_ids;
  std::vector<std::vector<std::optional<int>>> choices;  // [item][annotator]

  std::optional<int> at(std::size_t item, std::size_t annotator) const { return choices.at(item).at(annotator); }
};

struct IntrusionScore {
  double accuracy = 0.0;  // percent
  double alpha = 0.0;     // Krippendorff's alpha x 100 over the two primary annotators
  std::size_t items = 0;
  std::size_t agreed = 0;
  std::size_t resolved_by_third = 0;
  std::size_t unresolved = 0;
};

// Column 0 and 1 of `annotations` are the primary annotators. An item's final
// choice is their agreed choice, otherwise the resolver's; an unresolved item
// counts as a miss.
IntrusionScore intrusion_score(const std::vector<IntrusionItem>& items, const AnnotationMatrix& annotations,
                               const std::vector<std::optional<int>>& resolved = {});

// Nominal Krippendorff's alpha on the 0-100 scale. Units with fewer than two
// ratings are ignored.
double krippendorff_alpha(const AnnotationMatrix& matrix);

json intrusion_item_blinded_json(const IntrusionItem& item);
json intrusion_item_key_json(const IntrusionItem& item);
std::vector<IntrusionItem> load_intrusion_items(const fs::path& blinded, const fs::path& key);

// Grid file: tab-separated, header "item_id<TAB>annotator...", choices 1..3,
// empty or "-" for missing.
AnnotationMatrix load_annotation_grid(const fs::path& path);
void save_annotation_grid(const fs::path& path, const AnnotationMatrix& matrix);

// ---- mutual information --------------------------------------------------------

struct MiEntry {
  int cluster = 0;
  int frame = 0;
  double mi = 0.0;
};

// MI (nats) between "document has a chain in cluster c" and "document label == f".
std::vector<MiEntry> mutual_information(const std::vector<std::vector<int>>& doc_cluster_assignments,
                                        std::span<const int> frame_labels, int k, int frames);

// Per frame, clusters by MI descending (ties by cluster id), first n kept.
std::vector<std::vector<MiEntry>> top_clusters_per_frame(const std::vector<MiEntry>& table, int frames,
                                                         std::size_t n);

}  // namespace narrative
