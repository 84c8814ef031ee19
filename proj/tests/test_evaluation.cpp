#include <doctest.h>

#include <cmath>
#include <set>

#include "narrative/error.hpp"
#include "narrative/evaluation.hpp"
#include "narrative/random.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace narrative;

namespace {

AnnotationMatrix matrix_of(const std::vector<std::vector<std::optional<int>>>& rows) {
  AnnotationMatrix m;
  for (std::size_t a = 0; a < rows.front().size(); ++a) m.annotators.push_back("a" + std::to_string(a));
  for (std::size_t i = 0; i < rows.size(); ++i) m.item_ids.push_back(i);
  m.choices = rows;
  return m;
}

std::vector<IntrusionItem> hidden_items(std::size_t n, Rng& rng) {
  std::vector<IntrusionItem> items(n);
  for (std::size_t i = 0; i < n; ++i) {
    items[i].item_id = i;
    items[i].hidden_intruder_position = static_cast<int>(rng.uniform_index(3));
  }
  return items;
}

}  // namespace

TEST_CASE("macro metrics on a hand-computed fixture") {
  const std::vector<int> gold{0, 0, 1, 1, 2, 2};
  const std::vector<int> pred{0, 1, 1, 1, 0, 2};
  const auto m = macro_metrics(pred, gold, 3);
  CHECK(m.accuracy == doctest::Approx(4.0 / 6));
  // class 0: P 1/2 R 1/2; class 1: P 2/3 R 1; class 2: P 1 R 1/2
  CHECK(m.per_class[0].f1 == doctest::Approx(0.5));
  CHECK(m.per_class[1].f1 == doctest::Approx(0.8));
  CHECK(m.per_class[2].f1 == doctest::Approx(2.0 / 3));
  CHECK(m.macro_f1 == doctest::Approx((0.5 + 0.8 + 2.0 / 3) / 3));
  CHECK(m.weighted_recall == doctest::Approx(m.accuracy));

  const std::vector<int> g2{0, 0}, p2{0, 0};
  const auto absent = macro_metrics(p2, g2, 2);
  CHECK(absent.per_class[1].f1 == 0.0);
  CHECK_FALSE(absent.warnings.empty());
}

TEST_CASE("always predicting the majority class matches the closed form") {
  const std::size_t counts[3] = {52556, 35827, 212555};
  std::vector<int> gold;
  for (int c = 0; c < 3; ++c) gold.insert(gold.end(), counts[c], c);
  const std::vector<int> pred(gold.size(), 2);
  const auto m = macro_metrics(pred, gold, 3);
  const double precision = 212555.0 / static_cast<double>(gold.size());
  const double f1 = 2 * precision / (precision + 1.0);
  CHECK(m.per_class[2].f1 == doctest::Approx(f1).epsilon(1e-12));
  CHECK(m.macro_f1 == doctest::Approx(f1 / 3).epsilon(1e-12));
  CHECK(std::abs(m.per_class[2].f1 - 0.828) <= 0.005);
  CHECK(std::abs(m.macro_f1 - 0.276) <= 0.005);
}

TEST_CASE("mean_std uses the sample standard deviation") {
  const std::vector<double> v{1, 2, 3, 4};
  const auto s = mean_std(v);
  CHECK(s.mean == doctest::Approx(2.5));
  CHECK(s.std == doctest::Approx(std::sqrt(5.0 / 3)));
  const std::vector<double> one{7};
  CHECK(mean_std(one).std == 0.0);
}

TEST_CASE("stratified folds balance classes and holdouts round per class") {
  std::vector<int> labels;
  for (int i = 0; i < 23; ++i) labels.push_back(i % 3 == 0 ? 0 : 1);
  const auto folds = stratified_folds(labels, 5, 42);
  for (int c = 0; c < 2; ++c) {
    std::vector<int> per_fold(5, 0);
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == c) ++per_fold[static_cast<std::size_t>(folds[i])];
    CHECK(*std::max_element(per_fold.begin(), per_fold.end()) - *std::min_element(per_fold.begin(), per_fold.end()) <=
          1);
  }
  CHECK(stratified_folds(labels, 5, 42) == folds);
  const auto holdout = stratified_holdout(labels, 0.1, 42);
  CHECK(holdout.size() == 3);  // 8 zeros and 15 ones: round(0.8) + round(1.5)
  const std::vector<int> tiny{0, 1, 1, 1};
  CHECK(validation_split(tiny, 0.1, 42).size() == 1);
}

TEST_CASE("adjusted rand index") {
  const std::vector<int> a{0, 0, 1, 1, 2, 2}, b{5, 5, 3, 3, 4, 4}, c{0, 1, 0, 1, 0, 1};
  CHECK(adjusted_rand_index(a, b) == doctest::Approx(1.0));
  CHECK(adjusted_rand_index(a, c) < 0.1);
}

TEST_CASE("alpha is 100 under perfect agreement") {
  CHECK(krippendorff_alpha(matrix_of({{0, 0}, {1, 1}, {2, 2}, {0, 0}})) == doctest::Approx(100.0));
}

TEST_CASE("alpha on the hand fixture matches the pairwise oracle") {
  const std::vector<std::vector<std::optional<int>>> rows{{0, 0}, {0, 0}, {1, 1}, {0, 1}};
  const double expected = oracle::alpha_pairs(rows);
  CHECK(expected == doctest::Approx(100.0 * 8.0 / 15.0));
  CHECK(std::abs(krippendorff_alpha(matrix_of(rows)) - expected) < 1e-3);
}

TEST_CASE("alpha handles missing ratings and matches the oracle on random data") {
  Rng rng(11);
  std::vector<std::vector<std::optional<int>>> rows;
  for (int i = 0; i < 60; ++i) {
    std::vector<std::optional<int>> row;
    for (int a = 0; a < 3; ++a) {
      if (rng.uniform01() < 0.2)
        row.push_back(std::nullopt);
      else
        row.push_back(static_cast<int>(rng.uniform_index(3)));
    }
    rows.push_back(row);
  }
  CHECK(std::abs(krippendorff_alpha(matrix_of(rows)) - oracle::alpha_pairs(rows)) < 1e-9);
}

TEST_CASE("independent annotators give alpha near zero") {
  Rng rng(42);
  std::vector<std::vector<std::optional<int>>> rows;
  for (int i = 0; i < 1000; ++i)
    rows.push_back({static_cast<int>(rng.uniform_index(3)), static_cast<int>(rng.uniform_index(3))});
  CHECK(std::abs(krippendorff_alpha(matrix_of(rows))) <= 3.0);
}

TEST_CASE("intrusion accuracy is chance for random annotators and 100 for an oracle") {
  Rng rng(42);
  const auto items = hidden_items(1000, rng);
  std::vector<std::vector<std::optional<int>>> random_rows, oracle_rows;
  std::vector<std::optional<int>> resolver;
  for (const auto& item : items) {
    random_rows.push_back({static_cast<int>(rng.uniform_index(3)), static_cast<int>(rng.uniform_index(3))});
    resolver.push_back(static_cast<int>(rng.uniform_index(3)));
    oracle_rows.push_back({item.hidden_intruder_position, item.hidden_intruder_position});
  }
  const auto random = intrusion_score(items, matrix_of(random_rows), resolver);
  CHECK(std::abs(random.accuracy - 100.0 / 3) <= 5.0);
  CHECK(random.agreed + random.resolved_by_third == 1000);
  const auto perfect = intrusion_score(items, matrix_of(oracle_rows));
  CHECK(perfect.accuracy == 100.0);
  CHECK(perfect.alpha == doctest::Approx(100.0));
}

TEST_CASE("unresolved disagreements count as misses") {
  Rng rng(1);
  auto items = hidden_items(2, rng);
  items[0].hidden_intruder_position = 0;
  items[1].hidden_intruder_position = 1;
  const auto score = intrusion_score(items, matrix_of({{0, 0}, {1, 2}}));
  CHECK(score.accuracy == 50.0);
  CHECK(score.unresolved == 1);
}

TEST_CASE("intrusion items take two top members and one outside intruder") {
  Rng rng(4);
  Matrix x(60, 2);
  ClusterModel model;
  model.k = 3;
  model.centroids = Matrix::Zero(3, 2);
  std::vector<std::string> texts;
  for (int i = 0; i < 60; ++i) {
    const int c = i % 3;
    x(i, 0) = 10.0 * c + rng.normal();
    x(i, 1) = rng.normal();
    model.assignments.push_back(c);
    model.centroids(c, 0) += x(i, 0) / 20.0;
    model.centroids(c, 1) += x(i, 1) / 20.0;
    texts.push_back("sentence " + std::to_string(i));
  }
  const auto items = intrusion_generate(model, x, texts, 30, 42);
  REQUIRE(items.size() == 30);
  for (const auto& item : items) {
    const auto top = rank_by_centroid_distance(model, x, item.source_cluster).top();
    const std::set<std::size_t> top_set(top.begin(), top.end());
    int from_top = 0;
    for (int p = 0; p < 3; ++p) {
      const auto row = item.candidates[static_cast<std::size_t>(p)];
      CHECK(item.texts[static_cast<std::size_t>(p)] == texts[row]);
      if (p == item.hidden_intruder_position)
        CHECK(model.assignments[row] == item.intruder_cluster);
      else
        from_top += top_set.count(row);
    }
    CHECK(from_top == 2);
    CHECK(item.intruder_cluster != item.source_cluster);
  }
  const auto again = intrusion_generate(model, x, texts, 30, 42);
  for (std::size_t i = 0; i < items.size(); ++i) CHECK(again[i].candidates == items[i].candidates);

  testutil::TempDir dir("intrusion");
  std::vector<json> blinded, key;
  for (const auto& item : items) {
    blinded.push_back(intrusion_item_blinded_json(item));
    key.push_back(intrusion_item_key_json(item));
  }
  CHECK_FALSE(blinded[0].contains("hidden_intruder_position"));
  write_jsonl(dir / "items.jsonl", blinded);
  write_jsonl(dir / "key.jsonl", key);
  const auto back = load_intrusion_items(dir / "items.jsonl", dir / "key.jsonl");
  CHECK(back[3].hidden_intruder_position == items[3].hidden_intruder_position);
  CHECK(back[3].texts == items[3].texts);
}

TEST_CASE("annotation grid round trip keeps missing cells") {
  auto m = matrix_of({{0, std::nullopt}, {2, 1}});
  testutil::TempDir dir("grid");
  save_annotation_grid(dir / "grid.tsv", m);
  const auto back = load_annotation_grid(dir / "grid.tsv");
  CHECK(back.annotators == m.annotators);
  CHECK(back.choices == m.choices);
}

TEST_CASE("mutual information against brute force on a 20-document fixture") {
  Rng rng(42);
  std::vector<std::vector<int>> docs(20);
  std::vector<int> labels;
  for (auto& d : docs) {
    labels.push_back(static_cast<int>(rng.uniform_index(3)));
    for (std::size_t i = rng.uniform_index(6); i > 0; --i) d.push_back(static_cast<int>(rng.uniform_index(5)));
  }
  const auto table = mutual_information(docs, labels, 5, 3);
  REQUIRE(table.size() == 15);
  for (const auto& e : table) {
    std::vector<int> x, y;
    for (std::size_t d = 0; d < docs.size(); ++d) {
      x.push_back(std::count(docs[d].begin(), docs[d].end(), e.cluster) > 0);
      y.push_back(labels[d] == e.frame);
    }
    CHECK(std::abs(e.mi - oracle::mi_binary(x, y)) < 1e-9);
  }
  const auto top = top_clusters_per_frame(table, 3, 2);
  for (const auto& list : top) {
    REQUIRE(list.size() == 2);
    CHECK(list[0].mi >= list[1].mi);
  }
}

TEST_CASE("mutual information is zero under independence and ln 2 when X equals a balanced Y") {
  std::vector<std::vector<int>> docs;
  std::vector<int> labels;
  for (int d = 0; d < 40; ++d) {
    // cluster 0 present in half the documents of each frame, cluster 1 exactly in frame 0
    std::vector<int> clusters;
    if ((d / 2) % 2 == 0) clusters.push_back(0);
    labels.push_back(d % 2);
    if (d % 2 == 0) clusters.push_back(1);
    docs.push_back(clusters);
  }
  const auto table = mutual_information(docs, labels, 2, 2);
  for (const auto& e : table) {
    if (e.cluster == 0) CHECK(std::abs(e.mi) < 1e-12);
    if (e.cluster == 1) CHECK(e.mi == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  }
}
