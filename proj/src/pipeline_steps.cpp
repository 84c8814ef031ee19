#include <algorithm>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "narrative/chains.hpp"
#include "narrative/clustering.hpp"
#include "narrative/corpus.hpp"
#include "narrative/evaluation.hpp"
#include "narrative/events.hpp"
#include "narrative/expansion.hpp"
#include "narrative/framing.hpp"
#include "narrative/kg_distill.hpp"
#include "narrative/relation_model.hpp"
#include "pipeline_internal.hpp"

namespace narrative::pipeline {

namespace {

// ---- shared helpers ------------------------------------------------------------------

std::string require_path(const PipelineConfig& config, const std::string& key) {
  const auto v = config.get(key);
  require(v.is_string() && !v.get<std::string>().empty(), ErrorKind::InvalidArgument, key + " is not configured");
  return v.get<std::string>();
}

std::string configured_method(const PipelineConfig& config) {
  return to_string(parse_expansion_method(config.get("expansion.method").get<std::string>()));
}

// The configured expansion method first, template always included for comparison.
std::vector<std::string> expansion_methods(const PipelineConfig& config) {
  std::vector<std::string> out{configured_method(config)};
  if (out.front() != "template") out.push_back("template");
  return out;
}

std::vector<int> sweep_ks(const PipelineConfig& config) {
  auto ks = config.get("clustering.ks").get<std::vector<int>>();
  require(!ks.empty(), ErrorKind::InvalidArgument, "clustering.ks is empty");
  for (int k : ks) require(k >= 1, ErrorKind::InvalidArgument, "clustering.ks entries must be >= 1");
  return ks;
}

Corpus load_ingested(const StageContext& ctx) { return load_corpus_store(ctx.input("ingest", "corpus.jsonl")); }

std::vector<ExpandedChain> load_expansions(const StageContext& ctx, const std::string& method) {
  std::vector<ExpandedChain> out;
  for (const auto& r : read_jsonl(ctx.input("expand-chains", method + ".jsonl"))) out.push_back(expansion_from_json(r));
  return out;
}

Matrix gather_rows(const Matrix& m, const std::vector<std::size_t>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

json vector_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

// Labeled documents of each split, as row indices in corpus order.
struct LabeledSplit {
  std::vector<std::size_t> train, test;
  std::vector<int> train_y, test_y;
};

LabeledSplit labeled_split(const Corpus& corpus) {
  LabeledSplit s;
  const auto& docs = corpus.documents();
  for (std::size_t i = 0; i < docs.size(); ++i) {
    if (!docs[i].frame_label) continue;
    const int y = static_cast<int>(*corpus.labels().index_of(*docs[i].frame_label));
    if (docs[i].split == Split::train) {
      s.train.push_back(i);
      s.train_y.push_back(y);
    } else if (docs[i].split == Split::test) {
      s.test.push_back(i);
      s.test_y.push_back(y);
    }
  }
  return s;
}

std::size_t distinct(const std::vector<int>& y) { return std::set<int>(y.begin(), y.end()).size(); }

// Fits the frame LR on the train rows and scores it on the test rows.
json fit_and_score(const Matrix& features, const LabeledSplit& split, const std::vector<std::string>& names,
                   PredictorKind kind, double l2, const fs::path& checkpoint = {}) {
  require(distinct(split.train_y) >= 2, ErrorKind::PreconditionFailed, "fewer than two frame labels in the train split");
  require(!split.test.empty(), ErrorKind::PreconditionFailed, "no labeled test documents");
  LogisticConfig lc;
  lc.l2 = l2;
  const auto predictor = train_frame_lr(gather_rows(features, split.train), split.train_y, names, kind, lc);
  if (!checkpoint.empty()) predictor.save(checkpoint);
  const auto predictions = predictor.predict(gather_rows(features, split.test));
  auto out = metrics_to_json(macro_metrics(predictions, split.test_y, names.size()), names);
  out["train_size"] = split.train.size();
  out["test_size"] = split.test.size();
  return out;
}

// Same as above, with the train and test features already separated.
json fit_and_score(const Matrix& train_x, const Matrix& test_x, const LabeledSplit& split,
                   const std::vector<std::string>& names, PredictorKind kind, double l2) {
  require(distinct(split.train_y) >= 2, ErrorKind::PreconditionFailed, "fewer than two frame labels in the train split");
  require(!split.test.empty(), ErrorKind::PreconditionFailed, "no labeled test documents");
  LogisticConfig lc;
  lc.l2 = l2;
  const auto predictor = train_frame_lr(train_x, split.train_y, names, kind, lc);
  auto out = metrics_to_json(macro_metrics(predictor.predict(test_x), split.test_y, names.size()), names);
  out["train_size"] = split.train.size();
  out["test_size"] = split.test.size();
  return out;
}

json error_json(const std::exception& e) { return {{"error", e.what()}}; }

// ks that clustered successfully for `method`, ascending.
std::vector<int> clustered_ks(const StageContext& ctx, const std::string& method) {
  const auto summary = read_json(ctx.input("cluster", "summary.json"));
  std::vector<int> out;
  if (!summary.contains(method)) return out;
  for (auto it = summary[method].begin(); it != summary[method].end(); ++it)
    if (!it.value().contains("error")) out.push_back(std::stoi(it.key()));
  std::sort(out.begin(), out.end());
  return out;
}

// `key` when set, else the best k of the cluster LR sweep, else the first clustered k.
int chosen_k(const StageContext& ctx, const std::string& key) {
  const auto method = configured_method(ctx.config);
  const auto available = clustered_ks(ctx, method);
  require(!available.empty(), ErrorKind::PreconditionFailed, "no k clustered successfully for " + method);
  int k = available.front();
  if (const auto v = ctx.config.get(key); !v.is_null()) {
    k = v.get<int>();
  } else if (const auto path = ctx.input("train-frame-lr", "results.json"); fs::exists(path)) {
    const auto results = read_json(path);
    const auto best = results["methods"][method].value("best_k", json());
    if (best.is_number_integer()) k = best.get<int>();
  }
  require(std::find(available.begin(), available.end(), k) != available.end(), ErrorKind::PreconditionFailed,
          "k=" + std::to_string(k) + " has no cluster model for " + method);
  return k;
}

struct FeatureTable {
  std::vector<std::string> doc_ids;
  std::vector<std::vector<int>> clusters;
  Matrix standardized;
};

FeatureTable load_features(const StageContext& ctx, const std::string& method, int k) {
  FeatureTable t;
  const auto rows = read_jsonl(ctx.input("featurize", method + "/k_" + std::to_string(k) + ".jsonl"));
  t.standardized.resize(static_cast<Eigen::Index>(rows.size()), k);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    t.doc_ids.push_back(rows[i].at("doc_id").get<std::string>());
    t.clusters.push_back(rows[i].at("clusters").get<std::vector<int>>());
    const auto z = rows[i].at("standardized").get<std::vector<double>>();
    require(z.size() == static_cast<std::size_t>(k), ErrorKind::DimensionMismatch, "feature width differs from k");
    for (int c = 0; c < k; ++c) t.standardized(static_cast<Eigen::Index>(i), c) = z[static_cast<std::size_t>(c)];
  }
  return t;
}

void check_doc_order(const Corpus& corpus, const std::vector<std::string>& doc_ids, const std::string& what) {
  require(doc_ids.size() == corpus.size(), ErrorKind::MalformedRecord, what + " does not cover the corpus");
  for (std::size_t i = 0; i < doc_ids.size(); ++i)
    require(doc_ids[i] == corpus.documents()[i].id, ErrorKind::MalformedRecord, what + " is out of corpus order");
}

ClassifierConfig relation_config(const PipelineConfig& config) {
  auto cc = ClassifierConfig::from_json(config.get("relation"));
  cc.seed = config.seed();
  return cc;
}

// ---- stages ------------------------------------------------------------------------------

void ingest(StageContext& ctx) {
  const auto path = require_path(ctx.config, "corpus.path");
  auto labels = ctx.config.get("corpus.labels").get<std::vector<std::string>>();
  if (labels.empty()) {
    std::set<std::string> seen;
    read_jsonl(path, [&](const json& r, std::size_t) {
      if (r.contains("frame_label") && r["frame_label"].is_string()) seen.insert(r["frame_label"].get<std::string>());
    });
    labels.assign(seen.begin(), seen.end());
  }
  Corpus corpus = load_corpus(path, FrameLabelSet(labels));
  require(corpus.size() > 0, ErrorKind::MalformedRecord, path + ": no documents");
  json summary = {{"documents", corpus.size()}, {"labels", labels}};
  if (const auto parses = ctx.config.get("corpus.parses"); parses.is_string()) {
    const auto report = load_parses(corpus, parses.get<std::string>());
    summary["parses"] = {{"matched_blocks", report.matched_blocks},
                         {"unmatched_doc_ids", report.unmatched_doc_ids},
                         {"sentences", report.sentences},
                         {"flagged_sentences", report.flagged_sentences}};
    if (!report.unmatched_doc_ids.empty())
      ctx.out << "warning: " << report.unmatched_doc_ids.size() << " parse block(s) match no document\n";
  }
  std::size_t unassigned = 0;
  for (const auto& d : corpus.documents()) unassigned += d.split == Split::unassigned;
  if (unassigned == corpus.size()) {
    corpus = split_corpus(std::move(corpus), ctx.config.get("corpus.test_fraction").get<double>(), ctx.config.seed());
  } else {
    require(unassigned == 0, ErrorKind::MalformedRecord,
            std::to_string(unassigned) + " document(s) have no split while the others do");
  }
  std::size_t unparsed = 0;
  for (const auto& d : corpus.documents()) unparsed += !d.parsed;
  const auto stats = corpus.stats();
  summary["per_split"] = stats.per_split;
  summary["per_label"] = stats.per_label;
  summary["unlabeled"] = stats.unlabeled;
  summary["unparsed"] = unparsed;
  save_corpus_store(ctx.dir / "corpus.jsonl", corpus);
  write_json(ctx.dir / "summary.json", summary);
  ctx.out << "ingested " << corpus.size() << " documents (" << labels.size() << " frame labels, " << unparsed
          << " without parses)\n";
}

void extract_events(StageContext& ctx) {
  const auto corpus = load_ingested(ctx);
  const auto table = extract_corpus_events(corpus, ctx.config.get("corpus.salience_keep_fraction").get<double>());
  save_event_table(ctx.dir / "events.jsonl", table);
  ctx.out << "extracted " << table.total_mentions << " event mentions (" << table.unique_events
          << " distinct verb-object pairs) from " << table.documents.size() << " documents\n";
}

void build_relation_dataset(StageContext& ctx) {
  const auto edges = load_kg(require_path(ctx.config, "kg.path"));
  const auto parses = PhraseParses::load(require_path(ctx.config, "kg.phrase_parses"));
  DistillConfig dc;
  dc.min_unique_pairs = ctx.config.get("kg.min_unique_pairs").get<std::size_t>();
  dc.none_keep_fraction = ctx.config.get("kg.none_keep_fraction").get<double>();
  const auto result = build_dataset(edges, parses, dc);
  save_dataset(ctx.dir / "dataset.jsonl", result.dataset);
  write_json(ctx.dir / "class_counts.json", class_counts_json(result.dataset));
  write_json(ctx.dir / "summary.json", {{"edges", edges.size()},
                                        {"examples", result.dataset.examples.size()},
                                        {"retained_relations", result.retained_relations},
                                        {"skipped_missing_parse", result.skipped_missing_parse},
                                        {"dropped_filtered", result.dropped_filtered}});
  ctx.out << "distilled " << result.dataset.examples.size() << " examples from " << edges.size() << " edges; counts "
          << class_counts_json(result.dataset).dump() << "\n";
}

void train_relation_model(StageContext& ctx) {
  const auto dataset = load_dataset(ctx.input("build-relation-dataset", "dataset.jsonl"));
  const auto cc = relation_config(ctx.config);
  auto provider = make_embedding_provider(ctx.config);
  auto [model, report] = train(dataset, cc, *provider);
  model.save(ctx.dir / "model.ntf", {{"config", cc.to_json()}, {"encoder", provider->model_id()}});
  write_json(ctx.dir / "train_report.json", train_report_to_json(report));
  ctx.out << "trained relation head: " << report.epochs_run << " epochs, best epoch " << report.best_epoch + 1
          << ", validation macro-F1 " << report.validation.macro_f1 << "\n";
}

void build_chains_stage(StageContext& ctx) {
  const auto corpus = load_ingested(ctx);
  const auto events = load_event_table(ctx.input("extract-events", "events.jsonl"));
  const auto model = RelationClassifier::load(ctx.input("train-relation-model", "model.ntf"));
  auto provider = make_embedding_provider(ctx.config);
  ModelPairClassifier classifier(model, *provider, ctx.config.get("relation.max_tokens").get<int>());
  ChainConfig cc;
  if (const auto mp = ctx.config.get("chains.max_pairs"); !mp.is_null()) cc.max_pairs = mp.get<std::size_t>();
  cc.seed = ctx.config.seed();
  cc.min_confidence = ctx.config.get("chains.min_confidence").get<double>();
  cc.batch_size = ctx.config.get("embedding.batch_size").get<std::size_t>();

  std::vector<NarrativeChain> all;
  std::size_t candidates = 0, duplicates = 0, skipped = 0, with_chains = 0;
  std::vector<std::string> warnings;
  for (const auto& doc : corpus.documents()) {
    const auto* mentions = events.find(doc.id);
    if (!mentions || mentions->size() < 2) continue;
    auto result = build_chains(doc, *mentions, classifier, cc);
    candidates += result.candidates;
    duplicates += result.duplicates_removed;
    skipped += result.skipped_pairs;
    with_chains += !result.chains.empty();
    for (auto& w : result.warnings) warnings.push_back(doc.id + ": " + w);
    all.insert(all.end(), result.chains.begin(), result.chains.end());
  }
  for (const auto& w : warnings) ctx.out << "warning: " << w << "\n";
  save_chains(ctx.dir / "chains.jsonl", all);
  const double per_article = corpus.size() ? static_cast<double>(all.size()) / static_cast<double>(corpus.size()) : 0.0;
  write_json(ctx.dir / "summary.json", {{"documents", corpus.size()},
                                        {"documents_with_chains", with_chains},
                                        {"chains", all.size()},
                                        {"chains_per_article", per_article},
                                        {"candidate_pairs", candidates},
                                        {"duplicates_removed", duplicates},
                                        {"skipped_pairs", skipped},
                                        {"warnings", warnings}});
  ctx.out << "built " << all.size() << " chains from " << candidates << " candidate pairs (" << per_article
          << " per article)\n";
}

void expand_chains(StageContext& ctx) {
  const auto corpus = load_ingested(ctx);
  const auto chains = load_chains(ctx.input("build-chains", "chains.jsonl"));
  json failures = json::object();
  for (const auto& name : expansion_methods(ctx.config)) {
    const auto method = parse_expansion_method(name);
    ExpansionBatch batch;
    if (method == ExpansionMethod::llm) {
      auto gen = make_generation_provider(ctx.config);
      const DiskCache cache(ctx.artifacts / "cache" / "expansion");
      batch = expand_batch(chains, corpus, gen.get(), method, ctx.config.get("generation.parallelism").get<int>(),
                           &cache);
    } else {
      batch = expand_batch(chains, corpus, nullptr, method);
    }
    std::vector<json> records;
    for (const auto& e : batch.expansions)
      if (e) records.push_back(expansion_to_json(*e));
    json failed = json::array();
    std::sort(batch.failures.begin(), batch.failures.end(),
              [](const ExpansionFailure& a, const ExpansionFailure& b) { return a.index < b.index; });
    for (const auto& f : batch.failures)
      failed.push_back({{"index", f.index}, {"doc_id", chains[f.index].doc_id}, {"message", f.message}});
    if (!chains.empty() && records.empty())
      fail(ErrorKind::ProviderUnavailable, "every " + name + " expansion failed; first error: " +
                                               batch.failures.front().message);
    failures[name] = failed;
    write_jsonl(ctx.dir / (name + ".jsonl"), records);
    ctx.out << name << ": " << records.size() << " expansions (" << batch.generated << " generated, "
            << batch.cache_hits << " cached, " << batch.failures.size() << " failed)\n";
  }
  write_json(ctx.dir / "failures.json", failures);
}

void embed(StageContext& ctx) {
  const auto corpus = load_ingested(ctx);
  auto provider = make_embedding_provider(ctx.config);
  const auto batch = ctx.config.get("embedding.batch_size").get<std::size_t>();
  for (const auto& name : expansion_methods(ctx.config)) {
    std::vector<std::string> sentences;
    for (const auto& e : load_expansions(ctx, name)) sentences.push_back(e.sentence);
    const Matrix m = embed_expansions(sentences, *provider, batch);
    save_matrix(ctx.dir / (name + ".ntf"), m, {{"rows", sentences.size()}, {"encoder", provider->model_id()}});
    ctx.out << name << ": embedded " << sentences.size() << " expansions\n";
  }
  std::vector<std::string> ids;
  std::vector<Vector> vectors;
  const auto& docs = corpus.documents();
  for (std::size_t start = 0; start < docs.size(); start += batch) {
    EmbeddingRequest request;
    for (std::size_t i = start; i < std::min(docs.size(), start + batch); ++i)
      request.texts.push_back(truncate_tokens(docs[i].text, 512));
    auto response = provider->embed(request);
    validate_embedding_response(request, response);
    for (auto& v : response.vectors) vectors.push_back(std::move(v));
  }
  for (const auto& d : docs) ids.push_back(d.id);
  Matrix doc_matrix(static_cast<Eigen::Index>(vectors.size()), vectors.empty() ? 0 : vectors.front().size());
  for (std::size_t i = 0; i < vectors.size(); ++i) doc_matrix.row(static_cast<Eigen::Index>(i)) = vectors[i].transpose();
  save_matrix(ctx.dir / "documents.ntf", doc_matrix, {{"doc_ids", ids}, {"encoder", provider->model_id()}});
  ctx.out << "embedded " << docs.size() << " documents\n";
}

void cluster(StageContext& ctx) {
  const auto corpus = load_ingested(ctx);
  const auto ks = sweep_ks(ctx.config);
  json summary = json::object();
  for (const auto& name : expansion_methods(ctx.config)) {
    const auto expansions = load_expansions(ctx, name);
    const Matrix points = load_matrix(ctx.input("embed", name + ".ntf"));
    require(static_cast<std::size_t>(points.rows()) == expansions.size(), ErrorKind::DimensionMismatch,
            name + ": embedding rows differ from expansions");
    std::vector<std::size_t> train_rows;
    for (std::size_t i = 0; i < expansions.size(); ++i) {
      const auto* doc = corpus.find(expansions[i].chain.doc_id);
      require(doc != nullptr, ErrorKind::MalformedRecord, "expansion of unknown document " + expansions[i].chain.doc_id);
      if (doc->split == Split::train) train_rows.push_back(i);
    }
    const Matrix fit = gather_rows(points, train_rows);
    SweepResult sweep;
    if (train_rows.empty()) {
      for (int k : ks) sweep.errors[k] = "no expansions from train documents";
    } else {
      sweep = sweep_k(fit, ks, ctx.config.seed(), ctx.config.get("clustering.max_iters").get<int>(),
                      ctx.config.get("clustering.tol").get<double>());
    }
    json entry = json::object();
    for (int k : ks) {
      const auto key = std::to_string(k);
      if (auto it = sweep.errors.find(k); it != sweep.errors.end()) {
        entry[key] = {{"error", it->second}};
        ctx.out << name << " k=" << k << ": " << it->second << "\n";
        continue;
      }
      const auto& model = sweep.models.at(k);
      const fs::path dir = ctx.dir / name / ("k_" + key);
      save_cluster_model(dir, model);
      write_json(dir / "all_assignments.json",
                 {{"assignments", points.rows() ? assign_to_centroids(model, points) : std::vector<int>{}},
                  {"train_rows", train_rows}});
      entry[key] = {{"inertia", model.inertia}, {"iterations", model.iterations}, {"train_rows", train_rows.size()}};
    }
    summary[name] = entry;
    ctx.out << name << ": clustered " << train_rows.size() << " train expansions at " << sweep.models.size() << " k\n";
  }
  write_json(ctx.dir / "summary.json", summary);
}

void featurize(StageContext& ctx) {
  const auto corpus = load_ingested(ctx);
  json summary = json::object();
  for (const auto& name : expansion_methods(ctx.config)) {
    const auto expansions = load_expansions(ctx, name);
    std::map<std::string, std::size_t> doc_index;
    std::vector<std::string> doc_ids;
    for (const auto& d : corpus.documents()) {
      doc_index[d.id] = doc_ids.size();
      doc_ids.push_back(d.id);
    }
    summary[name] = json::array();
    for (int k : clustered_ks(ctx, name)) {
      const auto stored = read_json(ctx.input("cluster", name + "/k_" + std::to_string(k) + "/all_assignments.json"));
      const auto assignments = stored.at("assignments").get<std::vector<int>>();
      require(assignments.size() == expansions.size(), ErrorKind::MalformedRecord, "assignment count differs");
      std::vector<std::vector<int>> per_doc(doc_ids.size());
      for (std::size_t i = 0; i < expansions.size(); ++i)
        per_doc[doc_index.at(expansions[i].chain.doc_id)].push_back(assignments[i]);
      const auto features = build_cluster_features(doc_ids, per_doc, k);
      std::vector<json> rows;
      for (std::size_t d = 0; d < features.size(); ++d) {
        const auto& doc = corpus.documents()[d];
        rows.push_back({{"doc_id", doc.id},
                        {"split", to_string(doc.split)},
                        {"frame_label", doc.frame_label ? json(*doc.frame_label) : json()},
                        {"clusters", per_doc[d]},
                        {"raw", features[d].raw},
                        {"standardized", vector_json(features[d].standardized)}});
      }
      write_jsonl(ctx.dir / name / ("k_" + std::to_string(k) + ".jsonl"), rows);
      summary[name].push_back(k);
    }
    ctx.out << name << ": features for " << summary[name].size() << " k values\n";
  }
  write_json(ctx.dir / "summary.json", summary);
}

void train_frame_lr_stage(StageContext& ctx) {
  const auto corpus = load_ingested(ctx);
  const auto split = labeled_split(corpus);
  const auto& names = corpus.labels().labels();
  const double l2 = ctx.config.get("framing.l2").get<double>();
  json results = {{"labels", names}, {"methods", json::object()}};
  for (const auto& name : expansion_methods(ctx.config)) {
    const auto kind = name == "template" ? PredictorKind::template_lr : PredictorKind::cluster_lr;
    json per_k = json::object();
    std::optional<int> best_k;
    double best_f1 = -1.0;
    for (int k : clustered_ks(ctx, name)) {
      const auto key = std::to_string(k);
      try {
        const auto table = load_features(ctx, name, k);
        check_doc_order(corpus, table.doc_ids, "feature table");
        fs::create_directories(ctx.dir / "checkpoints");
        per_k[key] = fit_and_score(table.standardized, split, names, kind, l2,
                                   ctx.dir / "checkpoints" / (name + "_k" + key + ".ntf"));
        const double f1 = per_k[key]["macro_f1"].get<double>();
        if (f1 > best_f1) {
          best_f1 = f1;
          best_k = k;
        }
        ctx.out << to_string(kind) << " k=" << k << ": accuracy " << per_k[key]["accuracy"].get<double>()
                << ", macro-F1 " << f1 << "\n";
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::PreconditionFailed) throw;
        per_k[key] = error_json(e);
        ctx.out << to_string(kind) << " k=" << k << ": " << e.what() << "\n";
      }
    }
    results["methods"][name] = {{"predictor", to_string(kind)},
                                {"k", per_k},
                                {"best_k", best_k ? json(*best_k) : json()},
                                {"best_macro_f1", best_k ? json(best_f1) : json()}};
  }
  write_json(ctx.dir / "results.json", results);
}

void train_frame_neural(StageContext& ctx) {
  const auto corpus = load_ingested(ctx);
  const auto split = labeled_split(corpus);
  const auto method = configured_method(ctx.config);
  const int k = chosen_k(ctx, "framing.neural.k");
  const auto table = load_features(ctx, method, k);
  check_doc_order(corpus, table.doc_ids, "feature table");
  const auto docs = load_tensors(ctx.input("embed", "documents.ntf"));
  check_doc_order(corpus, docs.meta.at("doc_ids").get<std::vector<std::string>>(), "document embeddings");
  const Matrix& embeddings = docs.tensors.at("data");
  require(distinct(split.train_y) >= 2 && !split.test.empty(), ErrorKind::PreconditionFailed,
          "the neural head needs two frame labels in train and a labeled test split");
  const auto nc = NeuralHeadConfig::from_json(ctx.config.get("framing.neural"));
  const std::size_t classes = corpus.labels().size();
  const auto run = [&](bool fuse) {
    return train_neural_head(gather_rows(embeddings, split.train), gather_rows(table.standardized, split.train),
                             split.train_y, gather_rows(embeddings, split.test),
                             gather_rows(table.standardized, split.test), split.test_y, classes, nc, fuse);
  };
  const auto fusion = run(true);
  const auto text_only = run(false);
  write_json(ctx.dir / "fusion.json", neural_report_to_json(fusion));
  write_json(ctx.dir / "embedding_only.json", neural_report_to_json(text_only));
  write_json(ctx.dir / "summary.json", {{"method", method}, {"k", k}, {"config", nc.to_json()}});
  ctx.out << "neural head k=" << k << ": fusion accuracy " << fusion.accuracy.mean << ", embedding-only "
          << text_only.accuracy.mean << "\n";
}

void baselines(StageContext& ctx) {
  const auto corpus = load_ingested(ctx);
  const auto split = labeled_split(corpus);
  const auto& names = corpus.labels().labels();
  const double l2 = ctx.config.get("framing.l2").get<double>();
  json results = {{"labels", names}};

  require(!split.test.empty(), ErrorKind::PreconditionFailed, "no labeled test documents");
  results["random"] = metrics_to_json(baseline_random(split.test_y, names.size(), ctx.config.seed()), names);
  ctx.out << "random: macro-F1 " << results["random"]["macro_f1"].get<double>() << "\n";

  std::vector<std::string> train_texts, test_texts;
  for (auto i : split.train) train_texts.push_back(corpus.documents()[i].text);
  for (auto i : split.test) test_texts.push_back(corpus.documents()[i].text);
  results["lda_lr"] = json::object();
  for (int k : sweep_ks(ctx.config)) {
    const auto key = std::to_string(k);
    try {
      auto lc = LdaConfig::from_json(ctx.config.get("framing.lda"));
      lc.topics = k;
      lc.seed = ctx.config.seed();
      const auto model = gibbs_lda(train_texts, lc);
      results["lda_lr"][key] =
          fit_and_score(model.doc_topic, lda_infer(model, test_texts), split, names, PredictorKind::lda_lr, l2);
      results["lda_lr"][key]["vocabulary"] = model.vocabulary.words.size();
      ctx.out << "lda_lr k=" << k << ": macro-F1 " << results["lda_lr"][key]["macro_f1"].get<double>() << "\n";
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::PreconditionFailed && e.kind() != ErrorKind::InvalidArgument) throw;
      results["lda_lr"][key] = error_json(e);
      ctx.out << "lda_lr k=" << k << ": " << e.what() << "\n";
    }
  }

  const auto events = load_event_table(ctx.input("extract-events", "events.jsonl"));
  auto provider = make_embedding_provider(ctx.config);
  std::set<std::string> fit_docs;
  for (const auto& d : corpus.documents())
    if (d.split == Split::train) fit_docs.insert(d.id);
  results["event_type_lr"] = json::object();
  for (int k : sweep_ks(ctx.config)) {
    const auto key = std::to_string(k);
    try {
      const auto et = event_type_features(events, *provider, k, ctx.config.seed(), fit_docs);
      std::map<std::string, const ClusterFeatureVector*> by_doc;
      for (const auto& f : et.features) by_doc[f.doc_id] = &f;
      Matrix x = Matrix::Zero(static_cast<Eigen::Index>(corpus.size()), et.model.k);
      for (std::size_t i = 0; i < corpus.size(); ++i)
        if (auto it = by_doc.find(corpus.documents()[i].id); it != by_doc.end())
          x.row(static_cast<Eigen::Index>(i)) = it->second->standardized.transpose();
      results["event_type_lr"][key] = fit_and_score(x, split, names, PredictorKind::event_type_lr, l2);
      results["event_type_lr"][key]["effective_k"] = et.model.k;
      ctx.out << "event_type_lr k=" << k << ": macro-F1 " << results["event_type_lr"][key]["macro_f1"].get<double>()
              << "\n";
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::PreconditionFailed && e.kind() != ErrorKind::InvalidArgument) throw;
      results["event_type_lr"][key] = error_json(e);
      ctx.out << "event_type_lr k=" << k << ": " << e.what() << "\n";
    }
  }
  write_json(ctx.dir / "results.json", results);
}

// Train-split expansion rows the cluster model was fitted on, with their vectors and texts.
struct FittedRows {
  ClusterModel model;
  std::vector<std::size_t> rows;
  Matrix vectors;
  std::vector<std::string> texts;
};

FittedRows fitted_rows(const StageContext& ctx, const std::string& method, int k) {
  FittedRows f;
  const auto dir = ctx.input("cluster", method + "/k_" + std::to_string(k));
  f.model = load_cluster_model(dir);
  f.rows = read_json(dir / "all_assignments.json").at("train_rows").get<std::vector<std::size_t>>();
  const auto expansions = load_expansions(ctx, method);
  f.vectors = gather_rows(load_matrix(ctx.input("embed", method + ".ntf")), f.rows);
  for (auto r : f.rows) f.texts.push_back(expansions.at(r).sentence);
  return f;
}

void intrusion_gen(StageContext& ctx) {
  const auto method = configured_method(ctx.config);
  const int k = chosen_k(ctx, "intrusion.k");
  const auto fitted = fitted_rows(ctx, method, k);
  auto items = intrusion_generate(fitted.model, fitted.vectors, fitted.texts,
                                  ctx.config.get("intrusion.items").get<std::size_t>(), ctx.config.seed(),
                                  ctx.config.get("intrusion.top_fraction").get<double>());
  std::vector<json> shown, key;
  for (auto& item : items) {
    for (auto& c : item.candidates) c = fitted.rows.at(c);
    shown.push_back(intrusion_item_blinded_json(item));
    key.push_back(intrusion_item_key_json(item));
  }
  write_jsonl(ctx.dir / "items.jsonl", shown);
  write_jsonl(ctx.dir / "key.jsonl", key);
  write_json(ctx.dir / "summary.json", {{"method", method}, {"k", k}, {"items", items.size()}});
  ctx.out << "generated " << items.size() << " intrusion items from " << method << " clusters at k=" << k << "\n";
}

void annotate(StageContext& ctx) {
  const auto& who = ctx.options.annotator;
  require(!who.empty() && who.find_first_of("\t\n") == std::string::npos, ErrorKind::InvalidArgument,
          "annotate needs --annotator <id>");
  std::istream& in = ctx.options.in ? *ctx.options.in : std::cin;
  // Only the blinded export is read here.
  const auto items = read_jsonl(ctx.input("intrusion-gen", "items.jsonl"));
  const fs::path grid_path = ctx.dir / "grid.tsv";

  AnnotationMatrix grid;
  if (fs::exists(grid_path)) grid = load_annotation_grid(grid_path);
  AnnotationMatrix next;
  next.annotators = grid.annotators;
  auto column = std::find(next.annotators.begin(), next.annotators.end(), who);
  if (column == next.annotators.end()) {
    next.annotators.push_back(who);
    column = std::prev(next.annotators.end());
  }
  const auto col = static_cast<std::size_t>(column - next.annotators.begin());
  std::map<std::size_t, std::size_t> old_row;
  for (std::size_t r = 0; r < grid.item_ids.size(); ++r) old_row[grid.item_ids[r]] = r;
  for (const auto& item : items) {
    const auto id = item.at("item_id").get<std::size_t>();
    next.item_ids.push_back(id);
    std::vector<std::optional<int>> row(next.annotators.size());
    if (auto it = old_row.find(id); it != old_row.end())
      for (std::size_t a = 0; a < grid.annotators.size(); ++a) row[a] = grid.at(it->second, a);
    next.choices.push_back(std::move(row));
  }
  save_annotation_grid(grid_path, next);

  std::size_t answered = 0, done = 0;
  bool stopped = false;
  for (std::size_t r = 0; r < items.size() && !stopped; ++r) {
    if (next.choices[r][col]) {
      ++done;
      continue;
    }
    const auto texts = items[r].at("candidates").get<std::vector<std::string>>();
    ctx.out << "\nItem " << next.item_ids[r] << " (" << r + 1 << "/" << items.size() << ")\n";
    for (std::size_t c = 0; c < texts.size(); ++c) ctx.out << "  " << c + 1 << ") " << texts[c] << "\n";
    while (true) {
      ctx.out << "Which sentence is the intruder? [1-3, q to stop]: " << std::flush;
      std::string line;
      if (!std::getline(in, line)) {
        stopped = true;
        break;
      }
      line = trim(line);
      if (line == "q") {
        stopped = true;
        break;
      }
      if (line == "1" || line == "2" || line == "3") {
        next.choices[r][col] = line[0] - '1';
        save_annotation_grid(grid_path, next);
        ++answered;
        ++done;
        break;
      }
      ctx.out << "Please enter 1, 2 or 3.\n";
    }
  }
  ctx.out << "\n" << who << ": " << answered << " new answer(s), " << done << " of " << items.size()
          << " items labeled\n";
}

void intrusion_score_stage(StageContext& ctx) {
  const auto items = load_intrusion_items(ctx.input("intrusion-gen", "items.jsonl"), ctx.input("intrusion-gen", "key.jsonl"));
  const auto grid = load_annotation_grid(ctx.input("annotate", "grid.tsv"));
  auto column_of = [&](const std::string& name) {
    const auto it = std::find(grid.annotators.begin(), grid.annotators.end(), name);
    require(it != grid.annotators.end(), ErrorKind::InvalidArgument, "annotator '" + name + "' is not in the grid");
    return static_cast<std::size_t>(it - grid.annotators.begin());
  };
  std::vector<std::string> primaries = ctx.options.annotators;
  if (primaries.empty()) {
    require(grid.annotators.size() >= 2, ErrorKind::PreconditionFailed,
            "scoring needs two annotators; the grid has " + std::to_string(grid.annotators.size()));
    primaries = {grid.annotators[0], grid.annotators[1]};
  }
  require(primaries.size() == 2 && primaries[0] != primaries[1], ErrorKind::InvalidArgument,
          "--annotators takes two distinct ids");
  std::optional<std::string> resolver = ctx.options.resolver;
  if (!resolver)
    for (const auto& a : grid.annotators)
      if (a != primaries[0] && a != primaries[1]) {
        resolver = a;
        break;
      }
  const auto c0 = column_of(primaries[0]), c1 = column_of(primaries[1]);
  const auto cr = resolver ? std::optional<std::size_t>(column_of(*resolver)) : std::nullopt;

  std::map<std::size_t, std::size_t> row_of;
  for (std::size_t r = 0; r < grid.item_ids.size(); ++r) row_of[grid.item_ids[r]] = r;
  AnnotationMatrix matrix;
  matrix.annotators = primaries;
  std::vector<std::optional<int>> resolved;
  for (const auto& item : items) {
    matrix.item_ids.push_back(item.item_id);
    const auto it = row_of.find(item.item_id);
    if (it == row_of.end()) {
      matrix.choices.push_back({std::nullopt, std::nullopt});
      resolved.push_back(std::nullopt);
      continue;
    }
    matrix.choices.push_back({grid.at(it->second, c0), grid.at(it->second, c1)});
    resolved.push_back(cr ? grid.at(it->second, *cr) : std::nullopt);
  }
  const auto score = intrusion_score(items, matrix, resolved);
  write_json(ctx.dir / "score.json", {{"accuracy", score.accuracy},
                                      {"alpha", score.alpha},
                                      {"items", score.items},
                                      {"agreed", score.agreed},
                                      {"resolved_by_third", score.resolved_by_third},
                                      {"unresolved", score.unresolved},
                                      {"annotators", primaries},
                                      {"resolver", resolver ? json(*resolver) : json()}});
  ctx.out << "intrusion accuracy " << score.accuracy << "%, Krippendorff alpha " << score.alpha << " over "
          << score.items << " items\n";
}

void mi_report(StageContext& ctx) {
  const auto corpus = load_ingested(ctx);
  const auto method = configured_method(ctx.config);
  const int k = chosen_k(ctx, "mi.k");
  const auto table = load_features(ctx, method, k);
  check_doc_order(corpus, table.doc_ids, "feature table");
  const auto& names = corpus.labels().labels();
  std::vector<std::vector<int>> clusters;
  std::vector<int> labels;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& doc = corpus.documents()[i];
    if (!doc.frame_label) continue;
    clusters.push_back(table.clusters[i]);
    labels.push_back(static_cast<int>(*corpus.labels().index_of(*doc.frame_label)));
  }
  const int frames = static_cast<int>(names.size());
  const auto entries = mutual_information(clusters, labels, k, frames);
  const auto top = top_clusters_per_frame(entries, frames, ctx.config.get("mi.top").get<std::size_t>());
  const auto fitted = fitted_rows(ctx, method, k);

  json out = {{"method", method}, {"k", k}, {"documents", labels.size()}, {"presence", "binary"}};
  out["entries"] = json::array();
  for (const auto& e : entries)
    out["entries"].push_back({{"cluster", e.cluster}, {"frame", names[static_cast<std::size_t>(e.frame)]}, {"mi", e.mi}});
  std::ostringstream md;
  md << "# Narrative clusters most informative of each frame\n\n"
     << "Method `" << method << "`, k = " << k << ", " << labels.size()
     << " labeled documents. MI in nats between cluster presence and the frame label.\n";
  out["top"] = json::object();
  for (int f = 0; f < frames; ++f) {
    const auto& frame = names[static_cast<std::size_t>(f)];
    md << "\n## " << frame << "\n\n| cluster | MI | closest expansions |\n|---|---|---|\n";
    json list = json::array();
    for (const auto& e : top[static_cast<std::size_t>(f)]) {
      std::vector<std::string> examples;
      if (!fitted.model.members(e.cluster).empty()) {
        const auto ranked = rank_by_centroid_distance(fitted.model, fitted.vectors, e.cluster);
        for (std::size_t i = 0; i < ranked.members.size() && i < 3; ++i) examples.push_back(fitted.texts[ranked.members[i]]);
      }
      list.push_back({{"cluster", e.cluster}, {"mi", e.mi}, {"examples", examples}});
      md << "| " << e.cluster << " | " << e.mi << " | " << join(examples, "<br>") << " |\n";
    }
    out["top"][frame] = list;
  }
  write_json(ctx.dir / "table.json", out);
  write_text_atomic(ctx.dir / "report.md", md.str());
  ctx.out << "mutual information over " << labels.size() << " documents, " << k << " clusters x " << frames
          << " frames\n";
}

void evaluate(StageContext& ctx) {
  const auto dataset = load_dataset(ctx.input("build-relation-dataset", "dataset.jsonl"));
  const auto cc = relation_config(ctx.config);
  const int folds = ctx.config.get("relation.folds").get<int>();
  auto provider = make_embedding_provider(ctx.config);
  json out;
  out["majority"] = crossval_to_json(baseline_majority(dataset, folds, ctx.config.seed()));
  out["random"] = crossval_to_json(baseline_random(dataset, folds, ctx.config.seed()));
  out["static_lr"] = nullptr;
  if (const auto path = ctx.config.get("static_vectors"); path.is_string()) {
    const auto table = StaticVectorTable::load(path.get<std::string>());
    std::size_t oov = 0;
    out["static_lr"] = crossval_to_json(baseline_static_lr(dataset, table, folds, ctx.config.seed(), &oov));
    out["static_lr"]["oov_words"] = oov;
  }
  out["model"] = crossval_to_json(crossvalidate(dataset, folds, cc, *provider));
  write_json(ctx.dir / "relation_cv.json", out);
  for (const char* m : {"majority", "random", "static_lr", "model"})
    if (!out[m].is_null())
      ctx.out << m << ": accuracy " << out[m]["accuracy"]["mean"].get<double>() << ", macro-F1 "
              << out[m]["macro_f1"]["mean"].get<double>() << "\n";
}

const std::vector<std::string> kEmbeddingKeys{"embedding.provider", "embedding.model", "embedding.dimension",
                                              "embedding.stub_seed"};

std::vector<std::string> with_embedding(std::vector<std::string> keys) {
  keys.insert(keys.end(), kEmbeddingKeys.begin(), kEmbeddingKeys.end());
  return keys;
}

}  // namespace

const std::vector<StageSpec>& stage_specs() {
  static const std::vector<StageSpec> specs = [] {
    std::vector<StageSpec> s;
    s.push_back({"ingest", {}, {"corpus.path", "corpus.parses", "corpus.labels", "corpus.test_fraction"},
                 {"corpus.path", "corpus.parses"}, ingest});
    s.push_back({"extract-events", {"ingest"}, {"corpus.salience_keep_fraction"}, {}, extract_events});
    s.push_back({"build-relation-dataset", {}, {"kg.path", "kg.phrase_parses", "kg.min_unique_pairs", "kg.none_keep_fraction"},
                 {"kg.path", "kg.phrase_parses"}, build_relation_dataset});
    s.push_back({"train-relation-model", {"build-relation-dataset"}, with_embedding({"relation"}), {},
                 train_relation_model});
    s.push_back({"build-chains", {"ingest", "extract-events", "train-relation-model"},
                 with_embedding({"chains", "relation.max_tokens", "embedding.batch_size"}), {}, build_chains_stage});
    s.push_back({"expand-chains", {"ingest", "build-chains"},
                 {"expansion.method", "generation.provider", "generation.model"}, {}, expand_chains});
    s.push_back({"embed", {"ingest", "expand-chains"}, with_embedding({"expansion.method"}), {}, embed});
    s.push_back({"cluster", {"ingest", "expand-chains", "embed"}, {"clustering", "expansion.method"}, {}, cluster});
    s.push_back({"featurize", {"ingest", "expand-chains", "cluster"}, {"expansion.method"}, {}, featurize});
    s.push_back({"train-frame-lr", {"ingest", "featurize", "cluster"}, {"framing.l2", "expansion.method"}, {},
                 train_frame_lr_stage});
    s.push_back({"train-frame-neural", {"ingest", "embed", "cluster", "featurize", "train-frame-lr"},
                 {"framing.neural", "expansion.method"}, {}, train_frame_neural});
    s.push_back({"baselines", {"ingest", "extract-events"},
                 with_embedding({"framing.l2", "framing.lda", "clustering.ks"}), {}, baselines});
    s.push_back({"intrusion-gen", {"expand-chains", "embed", "cluster", "train-frame-lr"},
                 {"intrusion", "expansion.method"}, {}, intrusion_gen});
    StageSpec annotate_spec{"annotate", {"intrusion-gen"}, {}, {}, annotate};
    annotate_spec.always_run = true;
    annotate_spec.in_place = true;
    s.push_back(annotate_spec);
    StageSpec score_spec{"intrusion-score", {"intrusion-gen", "annotate"}, {}, {}, intrusion_score_stage};
    score_spec.always_run = true;
    s.push_back(score_spec);
    s.push_back({"mi-report", {"ingest", "expand-chains", "embed", "cluster", "featurize", "train-frame-lr"},
                 {"mi", "expansion.method"}, {}, mi_report});
    s.push_back({"evaluate", {"build-relation-dataset"}, with_embedding({"relation", "static_vectors"}),
                 {"static_vectors"}, evaluate});
    std::vector<std::string> upstream;
    for (const auto& spec : s) upstream.push_back(spec.name);
    StageSpec report_spec{"report", upstream, {"clustering.ks", "expansion.method"}, {}, run_report};
    report_spec.optional_deps = true;
    s.push_back(report_spec);
    return s;
  }();
  return specs;
}

}  // namespace narrative::pipeline
