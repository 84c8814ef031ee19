#include "narrative/relation_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "narrative/error.hpp"
#include "narrative/logistic.hpp"
#include "narrative/random.hpp"

namespace narrative {

Vector RelationFeatures::concat() const {
  const auto d = context.size();
  for (const Vector* v : {&head_verb, &head_obj, &tail_verb, &tail_obj})
    require(v->size() == d, ErrorKind::DimensionMismatch, "relation feature parts differ in dimension");
  Vector out(5 * d);
  out << context, head_verb, head_obj, tail_verb, tail_obj;
  require(out.allFinite(), ErrorKind::ProtocolError, "non-finite relation features");
  return out;
}

void ClassifierConfig::validate() const {
  require(hidden_dim > 0 && learning_rate > 0 && max_epochs > 0 && batch_size > 0 && max_tokens > 0 && patience > 0,
          ErrorKind::InvalidArgument, "classifier settings must be positive");
  require(patience <= max_epochs, ErrorKind::InvalidArgument, "patience exceeds max_epochs");
  require(warmup_fraction >= 0.0 && warmup_fraction < 1.0, ErrorKind::InvalidArgument,
          "warmup_fraction must lie in [0, 1)");
  require(val_fraction > 0.0 && val_fraction < 1.0, ErrorKind::InvalidArgument, "val_fraction must lie in (0, 1)");
  require(class_weights.empty() || class_weights.size() == kRelationClasses, ErrorKind::InvalidArgument,
          "class_weights needs one entry per class");
  for (double w : class_weights) require(w > 0.0, ErrorKind::InvalidArgument, "class weights must be positive");
}

json ClassifierConfig::to_json() const {
  return {{"hidden_dim", hidden_dim},     {"learning_rate", learning_rate},
          {"max_epochs", max_epochs},     {"batch_size", batch_size},
          {"max_tokens", max_tokens},     {"patience", patience},
          {"class_weights", class_weights}, {"warmup_fraction", warmup_fraction},
          {"weight_decay", weight_decay}, {"val_fraction", val_fraction},
          {"seed", seed}};
}

ClassifierConfig ClassifierConfig::from_json(const json& v) {
  ClassifierConfig c;
  c.hidden_dim = v.value("hidden_dim", c.hidden_dim);
  c.learning_rate = v.value("learning_rate", c.learning_rate);
  c.max_epochs = v.value("max_epochs", c.max_epochs);
  c.batch_size = v.value("batch_size", c.batch_size);
  c.max_tokens = v.value("max_tokens", c.max_tokens);
  c.patience = v.value("patience", c.patience);
  c.class_weights = v.value("class_weights", c.class_weights);
  c.warmup_fraction = v.value("warmup_fraction", c.warmup_fraction);
  c.weight_decay = v.value("weight_decay", c.weight_decay);
  c.val_fraction = v.value("val_fraction", c.val_fraction);
  c.seed = v.value("seed", c.seed);
  c.validate();
  return c;
}

std::string truncate_tokens(const std::string& text, int max_tokens) {
  auto tokens = split_whitespace(text);
  if (tokens.size() > static_cast<std::size_t>(max_tokens)) tokens.resize(static_cast<std::size_t>(max_tokens));
  return join(tokens, " ");
}

namespace {

struct SideSpans {
  std::vector<std::size_t> verb;
  std::size_t object = 0;
};

std::size_t locate(const std::vector<std::string>& tokens, const std::string& word, const std::string& context) {
  const auto needle = to_lower(word);
  for (std::size_t i = 0; i < tokens.size(); ++i)
    if (to_lower(tokens[i]) == needle) return i;
  fail(ErrorKind::SpanNotAligned, "'" + word + "' not found in context '" + context + "'");
}

SideSpans align(const VOPair& pair, const std::string& context) {
  const auto tokens = split_whitespace(context);
  SideSpans spans;
  auto check = [&](int position, const std::string& what) {
    require(position >= 0 && static_cast<std::size_t>(position) < tokens.size(), ErrorKind::SpanNotAligned,
            what + " token " + std::to_string(position) + " lies outside the (truncated) context '" + context + "'");
    return static_cast<std::size_t>(position);
  };
  if (!pair.verb_tokens.empty()) {
    for (int p : pair.verb_tokens) spans.verb.push_back(check(p, "verb"));
  } else {
    for (const auto& word : split_whitespace(pair.verb)) spans.verb.push_back(locate(tokens, word, context));
  }
  spans.object = pair.object_token >= 0 ? check(pair.object_token, "object") : locate(tokens, pair.object, context);
  require(!spans.verb.empty(), ErrorKind::SpanNotAligned, "empty verb span");
  return spans;
}

std::vector<TokenSpan> to_request(const SideSpans& s) {
  std::vector<TokenSpan> out;
  for (auto p : s.verb) out.push_back({p, p + 1});
  out.push_back({s.object, s.object + 1});
  return out;
}

Vector mean_of(const std::vector<Vector>& vectors, std::size_t begin, std::size_t end) {
  Vector sum = vectors.at(begin);
  for (std::size_t i = begin + 1; i < end; ++i) sum += vectors.at(i);
  return sum / static_cast<double>(end - begin);
}

}  // namespace

Matrix featurize_all(const std::vector<RelationExample>& examples, EmbeddingProvider& provider, int max_tokens,
                     std::size_t batch_size) {
  batch_size = std::max<std::size_t>(batch_size, 1);
  Matrix out;
  for (std::size_t start = 0; start < examples.size(); start += batch_size) {
    const std::size_t end = std::min(examples.size(), start + batch_size);
    EmbeddingRequest request;
    std::vector<std::pair<SideSpans, SideSpans>> aligned;
    for (std::size_t i = start; i < end; ++i) {
      const auto& ex = examples[i];
      require(!trim(ex.head_context).empty() && !trim(ex.tail_context).empty(), ErrorKind::PreconditionFailed,
              "relation example with an empty context");
      auto head_text = truncate_tokens(ex.head_context, max_tokens);
      auto tail_text = truncate_tokens(ex.tail_context, max_tokens);
      aligned.emplace_back(align(ex.head, head_text), align(ex.tail, tail_text));
      request.texts.push_back(std::move(head_text));
      request.texts.push_back(std::move(tail_text));
      request.spans.push_back(to_request(aligned.back().first));
      request.spans.push_back(to_request(aligned.back().second));
    }
    const auto response = provider.embed(request);
    validate_embedding_response(request, response);
    for (std::size_t j = 0; j < aligned.size(); ++j) {
      const auto& head_vecs = response.span_vectors[2 * j];
      const auto& tail_vecs = response.span_vectors[2 * j + 1];
      const std::size_t hv = aligned[j].first.verb.size();
      const std::size_t tv = aligned[j].second.verb.size();
      RelationFeatures f;
      f.context = (response.vectors[2 * j] + response.vectors[2 * j + 1]) / 2.0;
      f.head_verb = mean_of(head_vecs, 0, hv);
      f.head_obj = head_vecs.at(hv);
      f.tail_verb = mean_of(tail_vecs, 0, tv);
      f.tail_obj = tail_vecs.at(tv);
      const Vector row = f.concat();
      if (out.size() == 0) out.resize(static_cast<Eigen::Index>(examples.size()), row.size());
      require(row.size() == out.cols(), ErrorKind::ProtocolError, "embedding dimension changed between batches");
      out.row(static_cast<Eigen::Index>(start + j)) = row.transpose();
    }
  }
  return out;
}

RelationFeatures featurize(const RelationExample& example, EmbeddingProvider& provider, int max_tokens) {
  const Matrix row = featurize_all({example}, provider, max_tokens, 1);
  const auto d = row.cols() / 5;
  RelationFeatures f;
  f.context = row.row(0).segment(0, d).transpose();
  f.head_verb = row.row(0).segment(d, d).transpose();
  f.head_obj = row.row(0).segment(2 * d, d).transpose();
  f.tail_verb = row.row(0).segment(3 * d, d).transpose();
  f.tail_obj = row.row(0).segment(4 * d, d).transpose();
  return f;
}

// ---- classifier -------------------------------------------------------------------

RelationClassifier::RelationClassifier(std::size_t input_dim, int hidden_dim, std::uint64_t seed)
    : input_dim_(input_dim), hidden_dim_(hidden_dim) {
  Rng rng(seed);
  network_.add<nn::Linear>(input_dim, static_cast<std::size_t>(hidden_dim), rng, "hidden");
  network_.add<nn::ReLU>();
  network_.add<nn::Linear>(static_cast<std::size_t>(hidden_dim), kRelationClasses, rng, "output");
}

RelationClassifier RelationClassifier::zeros(std::size_t input_dim, int hidden_dim) {
  RelationClassifier model;
  model.input_dim_ = input_dim;
  model.hidden_dim_ = hidden_dim;
  model.network_.add<nn::Linear>(input_dim, static_cast<std::size_t>(hidden_dim), "hidden");
  model.network_.add<nn::ReLU>();
  model.network_.add<nn::Linear>(static_cast<std::size_t>(hidden_dim), kRelationClasses, "output");
  return model;
}

Matrix RelationClassifier::probabilities(const Matrix& features) const {
  require(static_cast<std::size_t>(features.cols()) == input_dim_, ErrorKind::DimensionMismatch,
          "classifier expects " + std::to_string(input_dim_) + " features, got " + std::to_string(features.cols()));
  return nn::softmax_rows(network_.forward(features, false));
}

std::vector<RelationPrediction> RelationClassifier::predict(const Matrix& features) const {
  const Matrix probs = probabilities(features);
  const auto labels = argmax_rows(probs);
  std::vector<RelationPrediction> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    out[i].label = static_cast<RelationLabel>(labels[i]);
    for (std::size_t c = 0; c < kRelationClasses; ++c)
      out[i].probabilities[c] = probs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c));
  }
  return out;
}

RelationPrediction RelationClassifier::predict(const Vector& features) const {
  return predict(Matrix(features.transpose())).front();
}

void RelationClassifier::save(const fs::path& path, const json& meta) const {
  TensorFile file;
  file.tensors = network_.state();
  file.meta = meta;
  file.meta["input_dim"] = input_dim_;
  file.meta["hidden_dim"] = hidden_dim_;
  file.meta["classes"] = {to_string(RelationLabel::Temporal), to_string(RelationLabel::Causal),
                          to_string(RelationLabel::None)};
  save_tensors(path, file);
}

RelationClassifier RelationClassifier::load(const fs::path& path) {
  const auto file = load_tensors(path);
  const auto classes = file.meta.at("classes").get<std::vector<std::string>>();
  require(classes.size() == kRelationClasses && classes[0] == "Temporal" && classes[1] == "Causal" &&
              classes[2] == "None",
          ErrorKind::MalformedRecord, path.string() + ": unexpected class order");
  auto model = zeros(file.meta.at("input_dim").get<std::size_t>(), file.meta.at("hidden_dim").get<int>());
  model.network_.load_state(file.tensors);
  return model;
}

// ---- training ---------------------------------------------------------------------

std::vector<int> dataset_labels(const RelationDataset& dataset) {
  std::vector<int> labels;
  labels.reserve(dataset.examples.size());
  for (const auto& ex : dataset.examples) labels.push_back(static_cast<int>(ex.label));
  return labels;
}

namespace {

Matrix gather_rows(const Matrix& x, const std::vector<std::size_t>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

std::vector<int> gather(std::span<const int> y, const std::vector<std::size_t>& rows) {
  std::vector<int> out;
  out.reserve(rows.size());
  for (auto r : rows) out.push_back(y[r]);
  return out;
}

}  // namespace

std::pair<RelationClassifier, TrainReport> train_head(const Matrix& features, std::span<const int> labels,
                                                      const ClassifierConfig& config) {
  config.validate();
  require(static_cast<std::size_t>(features.rows()) == labels.size(), ErrorKind::DimensionMismatch,
          "features/labels length mismatch");
  std::array<std::size_t, kRelationClasses> counts{};
  for (int y : labels) {
    require(y >= 0 && y < static_cast<int>(kRelationClasses), ErrorKind::InvalidArgument, "label out of range");
    ++counts[static_cast<std::size_t>(y)];
  }
  for (std::size_t c = 0; c < kRelationClasses; ++c)
    require(counts[c] > 0, ErrorKind::PreconditionFailed,
            "class " + to_string(static_cast<RelationLabel>(c)) + " has no training examples");

  const auto val_rows = validation_split(labels, config.val_fraction, mix_seed(config.seed, 0x76616c));
  require(!val_rows.empty(), ErrorKind::PreconditionFailed, "validation split is empty; dataset too small");
  std::vector<std::size_t> train_rows;
  {
    std::vector<bool> is_val(labels.size(), false);
    for (auto r : val_rows) is_val[r] = true;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (!is_val[i]) train_rows.push_back(i);
  }
  const Matrix x_val = gather_rows(features, val_rows);
  const auto y_val = gather(labels, val_rows);

  TrainReport report;
  report.class_weights = config.class_weights;
  if (report.class_weights.empty()) {
    std::array<double, kRelationClasses> train_counts{};
    for (auto r : train_rows) train_counts[static_cast<std::size_t>(labels[r])] += 1.0;
    for (std::size_t c = 0; c < kRelationClasses; ++c)
      report.class_weights.push_back(train_counts[c] > 0 ? 1.0 / train_counts[c] : 0.0);
    const double mean = std::accumulate(report.class_weights.begin(), report.class_weights.end(), 0.0) /
                        static_cast<double>(kRelationClasses);
    for (double& w : report.class_weights) w /= mean;
  }

  RelationClassifier model(static_cast<std::size_t>(features.cols()), config.hidden_dim, mix_seed(config.seed, 2));
  auto& net = model.network();
  nn::Adam optimizer({config.learning_rate, 0.9, 0.999, 1e-8, config.weight_decay, true});
  Rng order_rng(mix_seed(config.seed, 1));

  const auto batch = static_cast<std::size_t>(config.batch_size);
  const long steps_per_epoch = static_cast<long>((train_rows.size() + batch - 1) / batch);
  const long total_steps = steps_per_epoch * config.max_epochs;
  const long warmup_steps = std::lround(config.warmup_fraction * static_cast<double>(total_steps));
  long step = 0;

  double best_val = std::numeric_limits<double>::infinity();
  auto best_state = net.state();
  int since_best = 0;
  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    auto order = train_rows;
    order_rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::vector<std::size_t> rows(order.begin() + static_cast<std::ptrdiff_t>(start),
                                          order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + batch)));
      const Matrix xb = gather_rows(features, rows);
      const auto yb = gather(labels, rows);
      net.zero_grad();
      const auto loss = nn::weighted_cross_entropy(net.forward(xb, true), yb, report.class_weights);
      if (!std::isfinite(loss.loss))
        fail(ErrorKind::NonFiniteLoss, "non-finite training loss at epoch " + std::to_string(epoch) + ", step " +
                                           std::to_string(step) + " (learning rate " +
                                           std::to_string(config.learning_rate) + ")");
      net.backward(loss.grad);
      optimizer.step(net.parameters(), nn::linear_warmup_decay(config.learning_rate, step, warmup_steps, total_steps));
      ++step;
      epoch_loss += loss.loss * static_cast<double>(rows.size());
    }
    report.train_loss.push_back(epoch_loss / static_cast<double>(order.size()));
    const double val = nn::weighted_cross_entropy(net.forward(x_val, false), y_val, report.class_weights).loss;
    if (!std::isfinite(val))
      fail(ErrorKind::NonFiniteLoss, "non-finite validation loss at epoch " + std::to_string(epoch));
    report.val_loss.push_back(val);
    report.epochs_run = epoch + 1;
    if (val < best_val) {
      best_val = val;
      report.best_epoch = epoch;
      best_state = net.state();
      since_best = 0;
    } else if (++since_best >= config.patience) {
      report.stopped_early = true;
      break;
    }
  }
  net.load_state(best_state);
  std::vector<int> predicted;
  for (const auto& p : model.predict(x_val)) predicted.push_back(static_cast<int>(p.label));
  report.validation = macro_metrics(predicted, y_val, kRelationClasses);
  return {std::move(model), std::move(report)};
}

std::pair<RelationClassifier, TrainReport> train(const RelationDataset& dataset, const ClassifierConfig& config,
                                                 EmbeddingProvider& provider) {
  config.validate();
  const Matrix x = featurize_all(dataset.examples, provider, config.max_tokens);
  return train_head(x, dataset_labels(dataset), config);
}

namespace {

std::vector<std::string> relation_names() {
  return {to_string(RelationLabel::Temporal), to_string(RelationLabel::Causal), to_string(RelationLabel::None)};
}

}  // namespace

json train_report_to_json(const TrainReport& r) {
  return {{"train_loss", r.train_loss},       {"val_loss", r.val_loss},
          {"best_epoch", r.best_epoch},       {"epochs_run", r.epochs_run},
          {"stopped_early", r.stopped_early}, {"class_weights", r.class_weights},
          {"validation", metrics_to_json(r.validation, relation_names())}};
}

// ---- cross-validation ----------------------------------------------------------

CrossValReport run_folds(const std::string& method, std::span<const int> labels, int folds, std::uint64_t seed,
                         const FoldPredictor& predictor) {
  const auto fold_of = stratified_folds(labels, folds, seed);
  CrossValReport report;
  report.method = method;
  std::vector<double> acc, wp, wr, mf1;
  for (int f = 0; f < folds; ++f) {
    std::vector<std::size_t> train_rows, test_rows;
    for (std::size_t i = 0; i < labels.size(); ++i) (fold_of[i] == f ? test_rows : train_rows).push_back(i);
    const auto predicted = predictor(train_rows, test_rows);
    require(predicted.size() == test_rows.size(), ErrorKind::DimensionMismatch, "fold predictor returned wrong count");
    FoldResult result;
    result.fold = f;
    result.train_size = train_rows.size();
    result.test_size = test_rows.size();
    result.metrics = macro_metrics(predicted, gather(labels, test_rows), kRelationClasses);
    acc.push_back(result.metrics.accuracy);
    wp.push_back(result.metrics.weighted_precision);
    wr.push_back(result.metrics.weighted_recall);
    mf1.push_back(result.metrics.macro_f1);
    report.folds.push_back(std::move(result));
  }
  report.accuracy = mean_std(acc);
  report.weighted_precision = mean_std(wp);
  report.weighted_recall = mean_std(wr);
  report.macro_f1 = mean_std(mf1);
  return report;
}

json crossval_to_json(const CrossValReport& r) {
  auto ms = [](const MeanStd& m) { return json{{"mean", m.mean}, {"std", m.std}}; };
  json folds = json::array();
  for (const auto& f : r.folds)
    folds.push_back({{"fold", f.fold},
                     {"train_size", f.train_size},
                     {"test_size", f.test_size},
                     {"metrics", metrics_to_json(f.metrics, relation_names())}});
  return {{"method", r.method},
          {"folds", folds},
          {"accuracy", ms(r.accuracy)},
          {"weighted_precision", ms(r.weighted_precision)},
          {"weighted_recall", ms(r.weighted_recall)},
          {"macro_f1", ms(r.macro_f1)}};
}

CrossValReport crossvalidate_features(const Matrix& features, std::span<const int> labels, int folds,
                                      const ClassifierConfig& config) {
  return run_folds("relation_head", labels, folds, config.seed,
                   [&](const std::vector<std::size_t>& train_rows, const std::vector<std::size_t>& test_rows) {
                     const auto y = gather(labels, train_rows);
                     auto [model, report] = train_head(gather_rows(features, train_rows), y, config);
                     std::vector<int> out;
                     for (const auto& p : model.predict(gather_rows(features, test_rows)))
                       out.push_back(static_cast<int>(p.label));
                     return out;
                   });
}

CrossValReport crossvalidate(const RelationDataset& dataset, int folds, const ClassifierConfig& config,
                             EmbeddingProvider& provider) {
  require(folds >= 2, ErrorKind::InvalidArgument, "need at least 2 folds");
  config.validate();
  const Matrix x = featurize_all(dataset.examples, provider, config.max_tokens);
  const auto y = dataset_labels(dataset);
  return crossvalidate_features(x, y, folds, config);
}

CrossValReport baseline_majority(const RelationDataset& dataset, int folds, std::uint64_t seed) {
  const auto labels = dataset_labels(dataset);
  return run_folds("majority", labels, folds, seed,
                   [&](const std::vector<std::size_t>& train_rows, const std::vector<std::size_t>& test_rows) {
                     std::array<std::size_t, kRelationClasses> counts{};
                     for (auto r : train_rows) ++counts[static_cast<std::size_t>(labels[r])];
                     const auto majority =
                         static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
                     return std::vector<int>(test_rows.size(), majority);
                   });
}

CrossValReport baseline_random(const RelationDataset& dataset, int folds, std::uint64_t seed) {
  const auto labels = dataset_labels(dataset);
  Rng rng(mix_seed(seed, 0x72616e64));
  return run_folds("random", labels, folds, seed,
                   [&](const std::vector<std::size_t>&, const std::vector<std::size_t>& test_rows) {
                     std::vector<int> out;
                     for (std::size_t i = 0; i < test_rows.size(); ++i)
                       out.push_back(static_cast<int>(rng.uniform_index(kRelationClasses)));
                     return out;
                   });
}

StaticFeatures static_features(const RelationDataset& dataset, const StaticVectorTable& table) {
  StaticFeatures out;
  const auto d = static_cast<Eigen::Index>(table.dimension());
  out.features.resize(static_cast<Eigen::Index>(dataset.examples.size()), 2 * d);
  const std::size_t oov_before = table.oov_count();
  for (std::size_t i = 0; i < dataset.examples.size(); ++i) {
    const auto& ex = dataset.examples[i];
    out.total_words += split_whitespace(ex.head_context).size() + split_whitespace(ex.tail_context).size();
    out.features.row(static_cast<Eigen::Index>(i)) << table.phrase_embedding(ex.head_context).transpose(),
        table.phrase_embedding(ex.tail_context).transpose();
  }
  out.oov_words = table.oov_count() - oov_before;
  return out;
}

CrossValReport baseline_static_lr(const RelationDataset& dataset, const StaticVectorTable& table, int folds,
                                  std::uint64_t seed, std::size_t* oov_words) {
  const auto labels = dataset_labels(dataset);
  const auto sf = static_features(dataset, table);
  if (oov_words) *oov_words = sf.oov_words;
  return run_folds("static_lr", labels, folds, seed,
                   [&](const std::vector<std::size_t>& train_rows, const std::vector<std::size_t>& test_rows) {
                     LogisticRegression lr(static_cast<std::size_t>(sf.features.cols()), kRelationClasses);
                     lr.fit(gather_rows(sf.features, train_rows), gather(labels, train_rows));
                     return lr.predict(gather_rows(sf.features, test_rows));
                   });
}

}  // namespace narrative
