#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <vector>

#include "narrative/evaluation.hpp"
#include "narrative/kg_distill.hpp"
#include "narrative/linalg.hpp"
#include "narrative/nn.hpp"
#include "narrative/providers.hpp"

namespace narrative {

// Span embeddings of the two events plus a sentence-level context vector.
struct RelationFeatures {
  Vector context;
  Vector head_verb;
  Vector head_obj;
  Vector tail_verb;
  Vector tail_obj;

  // [context, head_verb, head_obj, tail_verb, tail_obj]
  Vector concat() const;
};

struct ClassifierConfig {
  int hidden_dim = 100;
  double learning_rate = 2e-5;
  int max_epochs = 100;
  int batch_size = 8;
  int max_tokens = 256;
  int patience = 3;
  // Indexed by RelationLabel; empty means inverse class frequency scaled to mean 1.
  std::vector<double> class_weights;
  double warmup_fraction = 0.1;
  double weight_decay = 0.01;
  double val_fraction = 0.1;
  std::uint64_t seed = 42;

  void validate() const;
  json to_json() const;
  static ClassifierConfig from_json(const json& value);
};

// Truncates to the first `max_tokens` whitespace tokens.
std::string truncate_tokens(const std::string& text, int max_tokens);

// Embeds both contexts in one request. Token positions come from the example's
// VO pairs; when they are missing the words are located in the context.
RelationFeatures featurize(const RelationExample& example, EmbeddingProvider& provider, int max_tokens = 256);

// One concatenated feature row per example; `batch_size` examples per request.
Matrix featurize_all(const std::vector<RelationExample>& examples, EmbeddingProvider& provider, int max_tokens = 256,
                     std::size_t batch_size = 32);

struct RelationPrediction {
  RelationLabel label = RelationLabel::None;
  std::array<double, kRelationClasses> probabilities{};
};

// One hidden ReLU layer and a linear output over Temporal, Causal, None.
class RelationClassifier {
 public:
  RelationClassifier() = default;
  RelationClassifier(std::size_t input_dim, int hidden_dim, std::uint64_t seed);
  static RelationClassifier zeros(std::size_t input_dim, int hidden_dim);

  std::size_t input_dim() const { return input_dim_; }
  int hidden_dim() const { return hidden_dim_; }

  RelationPrediction predict(const Vector& features) const;
  std::vector<RelationPrediction> predict(const Matrix& features) const;
  Matrix probabilities(const Matrix& features) const;

  nn::Sequential& network() { return network_; }

  void save(const fs::path& path, const json& meta = json::object()) const;
  static RelationClassifier load(const fs::path& path);

 private:
  std::size_t input_dim_ = 0;
  int hidden_dim_ = 0;
  mutable nn::Sequential network_;
};

struct TrainReport {
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  int best_epoch = 0;  // 0-based
  int epochs_run = 0;
  bool stopped_early = false;
  Metrics validation;
  std::vector<double> class_weights;
};

json train_report_to_json(const TrainReport& report);

// Trains on precomputed feature rows; labels are RelationLabel values.
std::pair<RelationClassifier, TrainReport> train_head(const Matrix& features, std::span<const int> labels,
                                                      const ClassifierConfig& config);

std::pair<RelationClassifier, TrainReport> train(const RelationDataset& dataset, const ClassifierConfig& config,
                                                 EmbeddingProvider& provider);

std::vector<int> dataset_labels(const RelationDataset& dataset);

// ---- cross-validation ----------------------------------------------------------

struct FoldResult {
  int fold = 0;
  std::size_t train_size = 0;
  std::size_t test_size = 0;
  Metrics metrics;
};

struct CrossValReport {
  std::string method;
  std::vector<FoldResult> folds;
  MeanStd accuracy;
  MeanStd weighted_precision;
  MeanStd weighted_recall;
  MeanStd macro_f1;
};

json crossval_to_json(const CrossValReport& report);

// Returns predictions for `test` after fitting on `train`.
using FoldPredictor =
    std::function<std::vector<int>(const std::vector<std::size_t>& train, const std::vector<std::size_t>& test)>;

CrossValReport run_folds(const std::string& method, std::span<const int> labels, int folds, std::uint64_t seed,
                         const FoldPredictor& predictor);

CrossValReport crossvalidate_features(const Matrix& features, std::span<const int> labels, int folds,
                                      const ClassifierConfig& config);

CrossValReport crossvalidate(const RelationDataset& dataset, int folds, const ClassifierConfig& config,
                             EmbeddingProvider& provider);

// ---- baselines -----------------------------------------------------------------

CrossValReport baseline_majority(const RelationDataset& dataset, int folds = 5, std::uint64_t seed = 42);
CrossValReport baseline_random(const RelationDataset& dataset, int folds = 5, std::uint64_t seed = 42);

struct StaticFeatures {
  Matrix features;  // [mean(head context words), mean(tail context words)]
  std::size_t oov_words = 0;
  std::size_t total_words = 0;
};

StaticFeatures static_features(const RelationDataset& dataset, const StaticVectorTable& table);

CrossValReport baseline_static_lr(const RelationDataset& dataset, const StaticVectorTable& table, int folds = 5,
                                  std::uint64_t seed = 42, std::size_t* oov_words = nullptr);

}  // namespace narrative
