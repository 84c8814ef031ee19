#include "narrative/framing.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "narrative/error.hpp"
#include "narrative/kernels.hpp"
#include "narrative/nn.hpp"
#include "narrative/random.hpp"

namespace narrative {

// ---- cluster-frequency features ---------------------------------------------------

std::vector<int> cluster_frequencies(std::span<const int> chain_clusters, int k) {
  require(k >= 1, ErrorKind::InvalidArgument, "k must be >= 1");
  std::vector<int> raw(static_cast<std::size_t>(k), 0);
  for (int c : chain_clusters) {
    require(c >= 0 && c < k, ErrorKind::InvalidArgument, "cluster id out of range");
    ++raw[static_cast<std::size_t>(c)];
  }
  return raw;
}

Vector standardize(const Vector& raw) {
  require(raw.size() >= 1, ErrorKind::InvalidArgument, "cannot standardize an empty vector");
  const double mean = raw.mean();
  const double variance = (raw.array() - mean).square().mean();
  if (variance <= 0.0) return Vector::Zero(raw.size());
  return (raw.array() - mean) / std::sqrt(variance);
}

Vector standardize(std::span<const int> raw) {
  Vector v(static_cast<Eigen::Index>(raw.size()));
  for (std::size_t i = 0; i < raw.size(); ++i) v(static_cast<Eigen::Index>(i)) = raw[i];
  return standardize(v);
}

std::vector<ClusterFeatureVector> build_cluster_features(const std::vector<std::string>& doc_ids,
                                                         const std::vector<std::vector<int>>& chain_clusters, int k,
                                                         bool parallel) {
  require(doc_ids.size() == chain_clusters.size(), ErrorKind::DimensionMismatch, "one cluster list per document");
  const Eigen::MatrixXi counts = parallel ? kernels::omp::cluster_counts(chain_clusters, k)
                                          : kernels::serial::cluster_counts(chain_clusters, k);
  std::vector<ClusterFeatureVector> out(doc_ids.size());
  for (std::size_t d = 0; d < doc_ids.size(); ++d) {
    out[d].doc_id = doc_ids[d];
    out[d].raw.resize(static_cast<std::size_t>(k));
    for (int c = 0; c < k; ++c) out[d].raw[static_cast<std::size_t>(c)] = counts(static_cast<Eigen::Index>(d), c);
    out[d].standardized = standardize(std::span<const int>(out[d].raw));
  }
  return out;
}

Matrix standardized_matrix(const std::vector<ClusterFeatureVector>& features) {
  if (features.empty()) return Matrix(0, 0);
  Matrix out(static_cast<Eigen::Index>(features.size()), features.front().standardized.size());
  for (std::size_t i = 0; i < features.size(); ++i) {
    require(features[i].standardized.size() == out.cols(), ErrorKind::DimensionMismatch, "feature widths differ");
    out.row(static_cast<Eigen::Index>(i)) = features[i].standardized.transpose();
  }
  return out;
}

// ---- frame predictors ---------------------------------------------------------------

std::string to_string(PredictorKind kind) {
  switch (kind) {
    case PredictorKind::cluster_lr: return "cluster_lr";
    case PredictorKind::lda_lr: return "lda_lr";
    case PredictorKind::event_type_lr: return "event_type_lr";
    case PredictorKind::template_lr: return "template_lr";
    case PredictorKind::random: return "random";
    case PredictorKind::neural: return "neural";
  }
  return "unknown";
}

PredictorKind parse_predictor_kind(const std::string& text) {
  for (auto kind : {PredictorKind::cluster_lr, PredictorKind::lda_lr, PredictorKind::event_type_lr,
                    PredictorKind::template_lr, PredictorKind::random, PredictorKind::neural})
    if (to_string(kind) == text) return kind;
  fail(ErrorKind::MalformedRecord, "unknown predictor kind '" + text + "'");
}

void FramePredictor::save(const fs::path& path) const {
  auto file = model.to_tensors();
  file.meta["predictor"] = to_string(kind);
  file.meta["labels"] = labels;
  save_tensors(path, file);
}

FramePredictor FramePredictor::load(const fs::path& path) {
  const auto file = load_tensors(path);
  FramePredictor p;
  p.kind = parse_predictor_kind(file.meta.at("predictor").get<std::string>());
  p.labels = file.meta.at("labels").get<std::vector<std::string>>();
  p.model = LogisticRegression::from_tensors(file);
  require(p.model.classes() == p.labels.size(), ErrorKind::MalformedRecord, "label count does not match model");
  return p;
}

FramePredictor train_frame_lr(const Matrix& features, std::span<const int> labels,
                              const std::vector<std::string>& label_names, PredictorKind kind,
                              const LogisticConfig& config) {
  FramePredictor p;
  p.kind = kind;
  p.labels = label_names;
  p.model = LogisticRegression(static_cast<std::size_t>(features.cols()), label_names.size());
  p.model.fit(features, labels, config);
  return p;
}

std::vector<int> random_predictions(std::size_t count, std::size_t num_classes, std::uint64_t seed) {
  require(num_classes >= 1, ErrorKind::InvalidArgument, "no classes");
  Rng rng(seed);
  std::vector<int> out(count);
  for (auto& v : out) v = static_cast<int>(rng.uniform_index(num_classes));
  return out;
}

Metrics baseline_random(std::span<const int> golds, std::size_t num_classes, std::uint64_t seed) {
  return macro_metrics(random_predictions(golds.size(), num_classes, seed), golds, num_classes);
}

// ---- LDA -----------------------------------------------------------------------------

void LdaConfig::validate() const {
  require(topics >= 1 && iterations >= 1 && infer_iterations >= 1, ErrorKind::InvalidArgument,
          "LDA topics and iterations must be positive");
  require(min_collection_freq >= 0 && min_doc_freq >= 0 && remove_top_words >= 0, ErrorKind::InvalidArgument,
          "LDA vocabulary filters must be non-negative");
  require(alpha > 0.0 && beta > 0.0, ErrorKind::InvalidArgument, "LDA priors must be positive");
}

json LdaConfig::to_json() const {
  return {{"topics", topics},       {"min_collection_freq", min_collection_freq},
          {"min_doc_freq", min_doc_freq}, {"remove_top_words", remove_top_words},
          {"iterations", iterations}, {"alpha", alpha},
          {"beta", beta},           {"seed", seed},
          {"pmi_weighting", pmi_weighting}, {"infer_iterations", infer_iterations}};
}

LdaConfig LdaConfig::from_json(const json& v) {
  LdaConfig c;
  c.topics = v.value("topics", c.topics);
  c.min_collection_freq = v.value("min_collection_freq", c.min_collection_freq);
  c.min_doc_freq = v.value("min_doc_freq", c.min_doc_freq);
  c.remove_top_words = v.value("remove_top_words", c.remove_top_words);
  c.iterations = v.value("iterations", c.iterations);
  c.alpha = v.value("alpha", c.alpha);
  c.beta = v.value("beta", c.beta);
  c.seed = v.value("seed", c.seed);
  c.pmi_weighting = v.value("pmi_weighting", c.pmi_weighting);
  c.infer_iterations = v.value("infer_iterations", c.infer_iterations);
  c.validate();
  return c;
}

std::vector<std::string> lda_tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string current;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      current += static_cast<char>(std::tolower(c));
    } else if (!current.empty()) {
      out.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) out.push_back(std::move(current));
  return out;
}

LdaVocabulary build_lda_vocabulary(const std::vector<std::vector<std::string>>& documents, const LdaConfig& config) {
  std::map<std::string, std::size_t> cf, df;
  for (const auto& doc : documents) {
    std::set<std::string> seen;
    for (const auto& w : doc) {
      ++cf[w];
      if (seen.insert(w).second) ++df[w];
    }
  }
  std::vector<std::pair<std::string, std::size_t>> by_freq(cf.begin(), cf.end());
  std::stable_sort(by_freq.begin(), by_freq.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  LdaVocabulary vocab;
  std::set<std::string> removed;
  for (std::size_t i = 0; i < by_freq.size() && i < static_cast<std::size_t>(config.remove_top_words); ++i) {
    vocab.removed_top_words.push_back(by_freq[i].first);
    removed.insert(by_freq[i].first);
  }
  for (const auto& [word, count] : cf) {
    if (removed.count(word)) continue;
    if (count < static_cast<std::size_t>(config.min_collection_freq)) continue;
    if (df[word] < static_cast<std::size_t>(config.min_doc_freq)) continue;
    vocab.index.emplace(word, static_cast<int>(vocab.words.size()));
    vocab.words.push_back(word);
  }
  require(!vocab.words.empty(), ErrorKind::PreconditionFailed, "LDA vocabulary is empty after filtering");
  return vocab;
}

Matrix LdaModel::topic_word_distribution() const {
  const double v = static_cast<double>(topic_word.cols());
  Matrix phi = topic_word.array() + config.beta;
  for (Eigen::Index k = 0; k < phi.rows(); ++k) phi.row(k) /= (topic_totals(k) + v * config.beta);
  return phi;
}

namespace {

struct LdaDoc {
  std::vector<int> words;
  std::vector<double> weights;
};

std::vector<LdaDoc> encode(const std::vector<std::string>& documents, const LdaVocabulary& vocab,
                           const LdaConfig& config, const std::vector<double>* word_prob) {
  std::vector<LdaDoc> out;
  for (const auto& text : documents) {
    LdaDoc doc;
    for (const auto& w : lda_tokenize(text)) {
      auto it = vocab.index.find(w);
      if (it != vocab.index.end()) doc.words.push_back(it->second);
    }
    doc.weights.assign(doc.words.size(), 1.0);
    if (config.pmi_weighting && word_prob && !doc.words.empty()) {
      std::map<int, double> local;
      for (int w : doc.words) local[w] += 1.0;
      for (std::size_t i = 0; i < doc.words.size(); ++i) {
        const double p_wd = local[doc.words[i]] / static_cast<double>(doc.words.size());
        doc.weights[i] = std::max(0.0, std::log(p_wd / (*word_prob)[static_cast<std::size_t>(doc.words[i])]));
      }
    }
    out.push_back(std::move(doc));
  }
  return out;
}

std::size_t sample_topic(Rng& rng, std::vector<double>& p) {
  double total = 0.0;
  for (double& x : p) {
    total += x;
    x = total;
  }
  const double u = rng.uniform01() * total;
  const auto it = std::upper_bound(p.begin(), p.end(), u);
  return std::min<std::size_t>(static_cast<std::size_t>(it - p.begin()), p.size() - 1);
}

Matrix normalize_theta(const Matrix& doc_counts, double alpha) {
  Matrix theta = doc_counts.array() + alpha;
  for (Eigen::Index d = 0; d < theta.rows(); ++d) theta.row(d) /= theta.row(d).sum();
  return theta;
}

}  // namespace

LdaModel gibbs_lda(const std::vector<std::string>& documents, const LdaConfig& config) {
  config.validate();
  std::vector<std::vector<std::string>> tokenized;
  for (const auto& d : documents) tokenized.push_back(lda_tokenize(d));
  LdaModel model;
  model.config = config;
  model.vocabulary = build_lda_vocabulary(tokenized, config);
  const auto V = static_cast<Eigen::Index>(model.vocabulary.words.size());
  const auto K = static_cast<Eigen::Index>(config.topics);

  std::vector<double> word_prob(static_cast<std::size_t>(V), 0.0);
  {
    double total = 0.0;
    for (const auto& doc : tokenized)
      for (const auto& w : doc)
        if (auto it = model.vocabulary.index.find(w); it != model.vocabulary.index.end()) {
          word_prob[static_cast<std::size_t>(it->second)] += 1.0;
          total += 1.0;
        }
    for (double& p : word_prob) p /= total;
  }
  const auto docs = encode(documents, model.vocabulary, config, &word_prob);

  Matrix doc_counts = Matrix::Zero(static_cast<Eigen::Index>(docs.size()), K);
  model.topic_word = Matrix::Zero(K, V);
  model.topic_totals = RowVector::Zero(K);
  std::vector<std::vector<int>> z(docs.size());
  Rng rng(config.seed);
  double total_weight = 0.0;
  for (std::size_t d = 0; d < docs.size(); ++d) {
    for (std::size_t i = 0; i < docs[d].words.size(); ++i) {
      const int k = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(K)));
      const double w = docs[d].weights[i];
      z[d].push_back(k);
      doc_counts(static_cast<Eigen::Index>(d), k) += w;
      model.topic_word(k, docs[d].words[i]) += w;
      model.topic_totals(k) += w;
      total_weight += w;
    }
  }

  const double vbeta = static_cast<double>(V) * config.beta;
  std::vector<double> p(static_cast<std::size_t>(K));
  for (int sweep = 0; sweep < config.iterations; ++sweep) {
    for (std::size_t d = 0; d < docs.size(); ++d) {
      const auto row = static_cast<Eigen::Index>(d);
      for (std::size_t i = 0; i < docs[d].words.size(); ++i) {
        const int word = docs[d].words[i];
        const double w = docs[d].weights[i];
        if (w == 0.0) continue;
        int k = z[d][i];
        doc_counts(row, k) -= w;
        model.topic_word(k, word) -= w;
        model.topic_totals(k) -= w;
        for (Eigen::Index t = 0; t < K; ++t)
          p[static_cast<std::size_t>(t)] = (doc_counts(row, t) + config.alpha) *
                                           (model.topic_word(t, word) + config.beta) /
                                           (model.topic_totals(t) + vbeta);
        k = static_cast<int>(sample_topic(rng, p));
        z[d][i] = k;
        doc_counts(row, k) += w;
        model.topic_word(k, word) += w;
        model.topic_totals(k) += w;
      }
    }
    const double tolerance = 1e-6 * std::max(1.0, total_weight);
    if (std::abs(model.topic_totals.sum() - total_weight) > tolerance ||
        std::abs(model.topic_word.sum() - total_weight) > tolerance ||
        std::abs(doc_counts.sum() - total_weight) > tolerance)
      model.counts_consistent = false;
    model.sweeps = sweep + 1;
  }
  require(model.counts_consistent, ErrorKind::PreconditionFailed, "LDA count tables drifted from the token weights");
  model.doc_topic = normalize_theta(doc_counts, config.alpha);
  return model;
}

Matrix lda_infer(const LdaModel& model, const std::vector<std::string>& documents) {
  const auto K = model.topic_word.rows();
  const Matrix phi = model.topic_word_distribution();
  const auto docs = encode(documents, model.vocabulary, model.config, nullptr);
  Matrix doc_counts = Matrix::Zero(static_cast<Eigen::Index>(docs.size()), K);
  Rng rng(mix_seed(model.config.seed, 0x696e6665));
  std::vector<double> p(static_cast<std::size_t>(K));
  for (std::size_t d = 0; d < docs.size(); ++d) {
    const auto row = static_cast<Eigen::Index>(d);
    std::vector<int> z;
    for (std::size_t i = 0; i < docs[d].words.size(); ++i) {
      z.push_back(static_cast<int>(rng.uniform_index(static_cast<std::size_t>(K))));
      doc_counts(row, z.back()) += 1.0;
    }
    for (int sweep = 0; sweep < model.config.infer_iterations; ++sweep) {
      for (std::size_t i = 0; i < z.size(); ++i) {
        doc_counts(row, z[i]) -= 1.0;
        for (Eigen::Index t = 0; t < K; ++t)
          p[static_cast<std::size_t>(t)] = (doc_counts(row, t) + model.config.alpha) * phi(t, docs[d].words[i]);
        z[i] = static_cast<int>(sample_topic(rng, p));
        doc_counts(row, z[i]) += 1.0;
      }
    }
  }
  return normalize_theta(doc_counts, model.config.alpha);
}

json lda_model_to_json(const LdaModel& m) {
  json tw = json::array();
  for (Eigen::Index k = 0; k < m.topic_word.rows(); ++k) {
    std::vector<double> row(m.topic_word.row(k).data(), m.topic_word.row(k).data() + m.topic_word.cols());
    tw.push_back(row);
  }
  return {{"config", m.config.to_json()},
          {"vocabulary", m.vocabulary.words},
          {"removed_top_words", m.vocabulary.removed_top_words},
          {"topic_word", tw},
          {"sweeps", m.sweeps}};
}

LdaModel lda_model_from_json(const json& v) {
  LdaModel m;
  m.config = LdaConfig::from_json(v.at("config"));
  m.vocabulary.words = v.at("vocabulary").get<std::vector<std::string>>();
  m.vocabulary.removed_top_words = v.value("removed_top_words", std::vector<std::string>{});
  for (std::size_t i = 0; i < m.vocabulary.words.size(); ++i)
    m.vocabulary.index.emplace(m.vocabulary.words[i], static_cast<int>(i));
  const auto rows = v.at("topic_word").get<std::vector<std::vector<double>>>();
  m.topic_word.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(m.vocabulary.words.size()));
  for (std::size_t k = 0; k < rows.size(); ++k) {
    require(rows[k].size() == m.vocabulary.words.size(), ErrorKind::MalformedRecord, "topic_word width mismatch");
    for (std::size_t w = 0; w < rows[k].size(); ++w)
      m.topic_word(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(w)) = rows[k][w];
  }
  m.topic_totals = m.topic_word.rowwise().sum().transpose();
  m.sweeps = v.value("sweeps", 0);
  return m;
}

// ---- event-type baseline ---------------------------------------------------------------

EventTypeFeatures event_type_features(const EventTable& events, EmbeddingProvider& provider, int k,
                                      std::uint64_t seed, const std::set<std::string>& fit_docs) {
  auto type_of = [](const EventMention& m) { return m.verb_lemma + " " + m.object_lemma; };
  std::set<std::string> fit_types, all_types;
  for (const auto& [doc_id, mentions] : events.documents)
    for (const auto& m : mentions) {
      all_types.insert(type_of(m));
      if (fit_docs.empty() || fit_docs.count(doc_id)) fit_types.insert(type_of(m));
    }
  require(!fit_types.empty(), ErrorKind::PreconditionFailed, "no events to cluster for the event-type baseline");
  EventTypeFeatures out;
  out.types.assign(fit_types.begin(), fit_types.end());
  const std::vector<std::string> all(all_types.begin(), all_types.end());
  const Matrix all_vectors = embed_expansions(all, provider);
  Matrix fit_vectors(static_cast<Eigen::Index>(out.types.size()), all_vectors.cols());
  {
    std::size_t row = 0;
    for (std::size_t i = 0; i < all.size(); ++i)
      if (fit_types.count(all[i])) fit_vectors.row(static_cast<Eigen::Index>(row++)) = all_vectors.row(static_cast<Eigen::Index>(i));
  }
  KMeansConfig kc;
  kc.k = std::min<int>(k, static_cast<int>(out.types.size()));
  kc.seed = seed;
  out.model = kmeans(fit_vectors, kc);
  const auto labels = assign_to_centroids(out.model, all_vectors);
  std::map<std::string, int> cluster_of;
  for (std::size_t i = 0; i < all.size(); ++i) cluster_of.emplace(all[i], labels[i]);

  std::vector<std::string> doc_ids;
  std::vector<std::vector<int>> per_doc;
  for (const auto& [doc_id, mentions] : events.documents) {
    doc_ids.push_back(doc_id);
    std::vector<int> clusters;
    for (const auto& m : mentions) clusters.push_back(cluster_of.at(type_of(m)));
    per_doc.push_back(std::move(clusters));
  }
  out.features = build_cluster_features(doc_ids, per_doc, out.model.k);
  return out;
}

// ---- neural fusion head -------------------------------------------------------------------

void NeuralHeadConfig::validate() const {
  require(dropout >= 0.0 && dropout < 1.0, ErrorKind::InvalidArgument, "dropout must lie in [0, 1)");
  require(hidden_dim > 0 && batch_size > 0 && max_epochs > 0 && learning_rate > 0.0 && patience > 0,
          ErrorKind::InvalidArgument, "neural head settings must be positive");
  require(val_fraction > 0.0 && val_fraction < 1.0, ErrorKind::InvalidArgument, "val_fraction must lie in (0, 1)");
  require(!seeds.empty(), ErrorKind::InvalidArgument, "neural head needs at least one seed");
}

json NeuralHeadConfig::to_json() const {
  return {{"dropout", dropout},         {"hidden_dim", hidden_dim}, {"batch_size", batch_size},
          {"max_epochs", max_epochs},   {"learning_rate", learning_rate}, {"val_fraction", val_fraction},
          {"patience", patience},       {"seeds", seeds}};
}

NeuralHeadConfig NeuralHeadConfig::from_json(const json& v) {
  NeuralHeadConfig c;
  c.dropout = v.value("dropout", c.dropout);
  c.hidden_dim = v.value("hidden_dim", c.hidden_dim);
  c.batch_size = v.value("batch_size", c.batch_size);
  c.max_epochs = v.value("max_epochs", c.max_epochs);
  c.learning_rate = v.value("learning_rate", c.learning_rate);
  c.val_fraction = v.value("val_fraction", c.val_fraction);
  c.patience = v.value("patience", c.patience);
  c.seeds = v.value("seeds", c.seeds);
  c.validate();
  return c;
}

json neural_report_to_json(const NeuralReport& r) {
  auto ms = [](const MeanStd& m) { return json{{"mean", m.mean}, {"std", m.std}}; };
  json runs = json::array();
  for (const auto& run : r.runs)
    runs.push_back({{"seed", run.seed},
                    {"accuracy", run.test.accuracy},
                    {"macro_f1", run.test.macro_f1},
                    {"weighted_f1", run.test.weighted_f1},
                    {"epochs_run", run.epochs_run},
                    {"best_epoch", run.best_epoch}});
  return {{"uses_cluster_features", r.uses_cluster_features},
          {"runs", runs},
          {"accuracy", ms(r.accuracy)},
          {"macro_f1", ms(r.macro_f1)},
          {"weighted_f1", ms(r.weighted_f1)}};
}

namespace {

Matrix fuse(const Matrix& embeddings, const Matrix& clusters, bool use_clusters) {
  if (!use_clusters) return embeddings;
  require(embeddings.rows() == clusters.rows(), ErrorKind::DimensionMismatch,
          "embedding and cluster feature rows differ");
  Matrix out(embeddings.rows(), embeddings.cols() + clusters.cols());
  out << embeddings, clusters;
  return out;
}

Matrix rows_of(const Matrix& x, const std::vector<std::size_t>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

}  // namespace

NeuralReport train_neural_head(const Matrix& train_embeddings, const Matrix& train_clusters,
                               std::span<const int> train_labels, const Matrix& test_embeddings,
                               const Matrix& test_clusters, std::span<const int> test_labels, std::size_t num_classes,
                               const NeuralHeadConfig& config, bool use_cluster_features) {
  config.validate();
  require(static_cast<std::size_t>(train_embeddings.rows()) == train_labels.size() &&
              static_cast<std::size_t>(test_embeddings.rows()) == test_labels.size(),
          ErrorKind::DimensionMismatch, "one embedding per labeled document required");
  require(train_embeddings.cols() == test_embeddings.cols(), ErrorKind::DimensionMismatch,
          "train/test embedding widths differ");
  if (use_cluster_features)
    require(train_clusters.cols() == test_clusters.cols(), ErrorKind::DimensionMismatch,
            "train/test cluster feature widths differ");
  const Matrix x_all = fuse(train_embeddings, train_clusters, use_cluster_features);
  const Matrix x_test = fuse(test_embeddings, test_clusters, use_cluster_features);

  NeuralReport report;
  report.uses_cluster_features = use_cluster_features;
  std::vector<double> acc, mf1, wf1;
  for (auto seed : config.seeds) {
    const auto val_rows = validation_split(train_labels, config.val_fraction, mix_seed(seed, 0x76616c));
    require(!val_rows.empty(), ErrorKind::PreconditionFailed, "neural head validation split is empty");
    std::vector<bool> is_val(train_labels.size(), false);
    for (auto r : val_rows) is_val[r] = true;
    std::vector<std::size_t> fit_rows;
    for (std::size_t i = 0; i < train_labels.size(); ++i)
      if (!is_val[i]) fit_rows.push_back(i);
    const Matrix x_val = rows_of(x_all, val_rows);
    std::vector<int> y_val;
    for (auto r : val_rows) y_val.push_back(train_labels[r]);

    Rng init(mix_seed(seed, 2));
    nn::Sequential net;
    net.add<nn::Linear>(static_cast<std::size_t>(x_all.cols()), static_cast<std::size_t>(config.hidden_dim), init,
                        "hidden");
    net.add<nn::LayerNorm>(static_cast<std::size_t>(config.hidden_dim), "norm");
    net.add<nn::ReLU>();
    net.add<nn::Dropout>(config.dropout, mix_seed(seed, 3));
    net.add<nn::Linear>(static_cast<std::size_t>(config.hidden_dim), num_classes, init, "output");
    nn::Adam optimizer({config.learning_rate, 0.9, 0.999, 1e-8, 0.0, false});
    Rng order_rng(mix_seed(seed, 1));

    NeuralRun run;
    run.seed = seed;
    double best = std::numeric_limits<double>::infinity();
    auto best_state = net.state();
    int since_best = 0;
    const auto batch = static_cast<std::size_t>(config.batch_size);
    for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
      auto order = fit_rows;
      order_rng.shuffle(order);
      for (std::size_t start = 0; start < order.size(); start += batch) {
        const std::vector<std::size_t> rows(order.begin() + static_cast<std::ptrdiff_t>(start),
                                            order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + batch)));
        std::vector<int> yb;
        for (auto r : rows) yb.push_back(train_labels[r]);
        net.zero_grad();
        const auto loss = nn::weighted_cross_entropy(net.forward(rows_of(x_all, rows), true), yb);
        require(std::isfinite(loss.loss), ErrorKind::NonFiniteLoss,
                "non-finite neural head loss at epoch " + std::to_string(epoch));
        net.backward(loss.grad);
        optimizer.step(net.parameters(), config.learning_rate);
      }
      const double val = nn::weighted_cross_entropy(net.forward(x_val, false), y_val).loss;
      run.val_loss.push_back(val);
      run.epochs_run = epoch + 1;
      if (val < best) {
        best = val;
        run.best_epoch = epoch;
        best_state = net.state();
        since_best = 0;
      } else if (++since_best >= config.patience) {
        break;
      }
    }
    net.load_state(best_state);
    const auto predicted = argmax_rows(net.forward(x_test, false));
    run.test = macro_metrics(predicted, test_labels, num_classes);
    acc.push_back(run.test.accuracy);
    mf1.push_back(run.test.macro_f1);
    wf1.push_back(run.test.weighted_f1);
    report.runs.push_back(std::move(run));
  }
  report.accuracy = mean_std(acc);
  report.macro_f1 = mean_std(mf1);
  report.weighted_f1 = mean_std(wf1);
  return report;
}

}  // namespace narrative
