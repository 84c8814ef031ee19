#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "narrative/clustering.hpp"
#include "narrative/evaluation.hpp"
#include "narrative/events.hpp"
#include "narrative/logistic.hpp"
#include "narrative/providers.hpp"

namespace narrative {

// ---- cluster-frequency features ---------------------------------------------------

struct ClusterFeatureVector {
  std::string doc_id;
  std::vector<int> raw;  // chains per cluster
  Vector standardized;
};

std::vector<int> cluster_frequencies(std::span<const int> chain_clusters, int k);

// (f - mean) / population std over the entries; all zeros when the std is 0.
Vector standardize(const Vector& raw);
Vector standardize(std::span<const int> raw);

std::vector<ClusterFeatureVector> build_cluster_features(const std::vector<std::string>& doc_ids,
                                                         const std::vector<std::vector<int>>& chain_clusters, int k,
                                                         bool parallel = true);

Matrix standardized_matrix(const std::vector<ClusterFeatureVector>& features);

// ---- frame predictors ---------------------------------------------------------------

enum class PredictorKind { cluster_lr, lda_lr, event_type_lr, template_lr, random, neural };
std::string to_string(PredictorKind kind);
PredictorKind parse_predictor_kind(const std::string& text);

struct FramePredictor {
  PredictorKind kind = PredictorKind::cluster_lr;
  std::vector<std::string> labels;
  LogisticRegression model;

  Matrix predict_proba(const Matrix& features) const { return model.predict_proba(features); }
  std::vector<int> predict(const Matrix& features) const { return model.predict(features); }

  void save(const fs::path& path) const;
  static FramePredictor load(const fs::path& path);
};

FramePredictor train_frame_lr(const Matrix& features, std::span<const int> labels,
                              const std::vector<std::string>& label_names, PredictorKind kind = PredictorKind::cluster_lr,
                              const LogisticConfig& config = {});

// Uniform draws over `num_classes` labels.
std::vector<int> random_predictions(std::size_t count, std::size_t num_classes, std::uint64_t seed);
Metrics baseline_random(std::span<const int> golds, std::size_t num_classes, std::uint64_t seed);

// ---- LDA -----------------------------------------------------------------------------

struct LdaConfig {
  int topics = 10;
  int min_collection_freq = 3;
  int min_doc_freq = 0;
  int remove_top_words = 5;
  int iterations = 1000;
  double alpha = 0.1;
  double beta = 0.01;
  std::uint64_t seed = 42;
  // Down-weights tokens by max(0, log p(w|d) / p(w)) when on.
  bool pmi_weighting = false;
  int infer_iterations = 100;

  void validate() const;
  json to_json() const;
  static LdaConfig from_json(const json& value);
};

// Lowercased runs of ASCII letters and digits.
std::vector<std::string> lda_tokenize(const std::string& text);

struct LdaVocabulary {
  std::vector<std::string> words;
  std::map<std::string, int> index;
  std::vector<std::string> removed_top_words;
};

LdaVocabulary build_lda_vocabulary(const std::vector<std::vector<std::string>>& documents, const LdaConfig& config);

struct LdaModel {
  LdaConfig config;
  LdaVocabulary vocabulary;
  Matrix doc_topic;        // documents x topics, rows sum to 1
  Matrix topic_word;       // topics x vocabulary, weighted counts
  RowVector topic_totals;  // per-topic weighted counts
  int sweeps = 0;
  // Count tables matched the token weights after every sweep.
  bool counts_consistent = true;

  Matrix topic_word_distribution() const;
};

LdaModel gibbs_lda(const std::vector<std::string>& documents, const LdaConfig& config);

// Topic proportions for unseen documents with the topic-word counts held fixed.
Matrix lda_infer(const LdaModel& model, const std::vector<std::string>& documents);

json lda_model_to_json(const LdaModel& model);
LdaModel lda_model_from_json(const json& value);

// ---- event-type baseline ---------------------------------------------------------------

struct EventTypeFeatures {
  ClusterModel model;
  std::vector<std::string> types;  // distinct "verb object" strings used for fitting
  std::vector<ClusterFeatureVector> features;  // one per document of the event table
};

// Clusters the "verb object" strings of the events in `fit_docs` (all
// documents when empty), then assigns every mention to its nearest centroid
// and builds the same standardized frequency features as the chain clusters.
EventTypeFeatures event_type_features(const EventTable& events, EmbeddingProvider& provider, int k,
                                      std::uint64_t seed, const std::set<std::string>& fit_docs = {});

// ---- neural fusion head -------------------------------------------------------------------

struct NeuralHeadConfig {
  double dropout = 0.3;
  int hidden_dim = 64;
  int batch_size = 32;
  int max_epochs = 25;
  double learning_rate = 2e-5;
  double val_fraction = 0.1;
  int patience = 3;
  std::vector<std::uint64_t> seeds{7, 14, 21, 28, 35};

  void validate() const;
  json to_json() const;
  static NeuralHeadConfig from_json(const json& value);
};

struct NeuralRun {
  std::uint64_t seed = 0;
  Metrics test;
  int epochs_run = 0;
  int best_epoch = 0;
  std::vector<double> val_loss;
};

struct NeuralReport {
  bool uses_cluster_features = true;
  std::vector<NeuralRun> runs;
  MeanStd accuracy;
  MeanStd macro_f1;
  MeanStd weighted_f1;
};

json neural_report_to_json(const NeuralReport& report);

// Document embedding concatenated with the standardized cluster vector (or the
// embedding alone for the ablation) through
// Linear -> LayerNorm -> ReLU -> Dropout -> Linear, one run per seed.
NeuralReport train_neural_head(const Matrix& train_embeddings, const Matrix& train_clusters,
                               std::span<const int> train_labels, const Matrix& test_embeddings,
                               const Matrix& test_clusters, std::span<const int> test_labels, std::size_t num_classes,
                               const NeuralHeadConfig& config, bool use_cluster_features = true);

}  // namespace narrative
