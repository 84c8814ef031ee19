#include "narrative/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "narrative/error.hpp"
#include "narrative/kernels.hpp"
#include "narrative/random.hpp"

namespace narrative {

std::vector<std::size_t> ClusterModel::members(int cluster_id) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < assignments.size(); ++i)
    if (assignments[i] == cluster_id) out.push_back(i);
  return out;
}

void l2_normalize_rows(Matrix& matrix) {
  for (Eigen::Index r = 0; r < matrix.rows(); ++r) {
    const double norm = matrix.row(r).norm();
    if (norm > 0.0) matrix.row(r) /= norm;
  }
}

Matrix embed_expansions(const std::vector<std::string>& sentences, EmbeddingProvider& provider,
                        std::size_t batch_size) {
  if (sentences.empty()) return Matrix(0, 0);
  batch_size = std::max<std::size_t>(batch_size, 1);
  Matrix out;
  for (std::size_t start = 0; start < sentences.size(); start += batch_size) {
    const std::size_t end = std::min(sentences.size(), start + batch_size);
    EmbeddingRequest request;
    request.texts.assign(sentences.begin() + static_cast<std::ptrdiff_t>(start),
                         sentences.begin() + static_cast<std::ptrdiff_t>(end));
    auto response = provider.embed(request);
    validate_embedding_response(request, response);
    if (out.size() == 0)
      out.resize(static_cast<Eigen::Index>(sentences.size()), response.vectors.front().size());
    for (std::size_t i = 0; i < response.vectors.size(); ++i) {
      require(response.vectors[i].size() == out.cols(), ErrorKind::ProtocolError,
              "embedding dimension changed between batches");
      out.row(static_cast<Eigen::Index>(start + i)) = response.vectors[i].transpose();
    }
  }
  l2_normalize_rows(out);
  return out;
}

std::vector<std::size_t> kmeans_plus_plus(const Matrix& points, int k, std::uint64_t seed) {
  const auto n = static_cast<std::size_t>(points.rows());
  require(k >= 1, ErrorKind::InvalidArgument, "k must be >= 1");
  require(static_cast<std::size_t>(k) <= n, ErrorKind::InvalidArgument,
          "k = " + std::to_string(k) + " exceeds the number of points (" + std::to_string(n) + ")");
  Rng rng(seed);
  std::vector<std::size_t> chosen{rng.uniform_index(n)};
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = (points.row(static_cast<Eigen::Index>(i)) -
                                               points.row(static_cast<Eigen::Index>(chosen[0]))).squaredNorm();
  while (chosen.size() < static_cast<std::size_t>(k)) {
    double total = std::accumulate(d2.begin(), d2.end(), 0.0);
    require(total > 0.0, ErrorKind::InvalidArgument,
            "k = " + std::to_string(k) + " exceeds the number of distinct points");
    const std::size_t next = rng.weighted_index(d2);
    chosen.push_back(next);
    const auto row = points.row(static_cast<Eigen::Index>(next));
    for (std::size_t i = 0; i < n; ++i)
      d2[i] = std::min(d2[i], (points.row(static_cast<Eigen::Index>(i)) - row).squaredNorm());
  }
  return chosen;
}

namespace {

void assign(const Matrix& points, const Matrix& centroids, std::vector<int>& labels, std::vector<double>& d2,
            bool parallel) {
  if (parallel)
    kernels::omp::assign_nearest(points, centroids, labels, d2);
  else
    kernels::serial::assign_nearest(points, centroids, labels, d2);
}

}  // namespace

ClusterModel kmeans(const Matrix& points, const KMeansConfig& config) {
  require(config.max_iters >= 1, ErrorKind::InvalidArgument, "max_iters must be >= 1");
  const auto n = static_cast<std::size_t>(points.rows());
  const auto seeds = kmeans_plus_plus(points, config.k, config.seed);

  ClusterModel model;
  model.k = config.k;
  model.seed = config.seed;
  model.centroids.resize(config.k, points.cols());
  for (int c = 0; c < config.k; ++c)
    model.centroids.row(c) = points.row(static_cast<Eigen::Index>(seeds[static_cast<std::size_t>(c)]));

  std::vector<int> labels(n);
  std::vector<double> d2(n);
  for (int iter = 0; iter < config.max_iters; ++iter) {
    assign(points, model.centroids, labels, d2, config.parallel);
    model.inertia_history.push_back(std::accumulate(d2.begin(), d2.end(), 0.0));
    model.iterations = iter + 1;

    Matrix sums = Matrix::Zero(config.k, points.cols());
    std::vector<std::size_t> counts(static_cast<std::size_t>(config.k), 0);
    for (std::size_t i = 0; i < n; ++i) {
      sums.row(labels[i]) += points.row(static_cast<Eigen::Index>(i));
      ++counts[static_cast<std::size_t>(labels[i])];
    }
    Matrix updated = model.centroids;
    std::set<std::size_t> used_for_repair;
    for (int c = 0; c < config.k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) {
        updated.row(c) = sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
        continue;
      }
      // Empty cluster: take the point farthest from its current centroid.
      std::size_t far = n;
      for (std::size_t i = 0; i < n; ++i) {
        if (used_for_repair.count(i)) continue;
        if (far == n || d2[i] > d2[far]) far = i;
      }
      if (far < n) {
        used_for_repair.insert(far);
        updated.row(c) = points.row(static_cast<Eigen::Index>(far));
      }
    }
    const double shift = (updated - model.centroids).rowwise().norm().maxCoeff();
    model.centroids = std::move(updated);
    if (shift < config.tol) break;
  }
  assign(points, model.centroids, labels, d2, config.parallel);
  model.inertia = std::accumulate(d2.begin(), d2.end(), 0.0);
  model.inertia_history.push_back(model.inertia);
  model.assignments = std::move(labels);
  return model;
}

SweepResult sweep_k(const Matrix& points, const std::vector<int>& ks, std::uint64_t seed, int max_iters,
                    double tol) {
  SweepResult result;
  for (int k : ks) {
    try {
      result.models.emplace(k, kmeans(points, {k, mix_seed(seed, static_cast<std::uint64_t>(k)), max_iters, tol}));
    } catch (const Error& e) {
      result.errors.emplace(k, e.what());
    }
  }
  return result;
}

std::vector<int> assign_to_centroids(const ClusterModel& model, const Matrix& points) {
  std::vector<int> labels(static_cast<std::size_t>(points.rows()));
  std::vector<double> d2(labels.size());
  if (!labels.empty()) kernels::omp::assign_nearest(points, model.centroids, labels, d2);
  return labels;
}

RankedCluster rank_by_centroid_distance(const ClusterModel& model, const Matrix& points, int cluster_id,
                                        double top_fraction) {
  require(cluster_id >= 0 && cluster_id < model.k, ErrorKind::InvalidArgument, "cluster id out of range");
  require(top_fraction > 0.0 && top_fraction <= 1.0, ErrorKind::InvalidArgument, "top_fraction must lie in (0, 1]");
  RankedCluster ranked;
  ranked.cluster_id = cluster_id;
  ranked.members = model.members(cluster_id);
  require(!ranked.members.empty(), ErrorKind::PreconditionFailed,
          "cluster " + std::to_string(cluster_id) + " is empty");
  std::vector<double> dist(ranked.members.size());
  for (std::size_t i = 0; i < ranked.members.size(); ++i)
    dist[i] = (points.row(static_cast<Eigen::Index>(ranked.members[i])) - model.centroids.row(cluster_id)).norm();
  std::vector<std::size_t> order(ranked.members.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return dist[a] < dist[b]; });
  std::vector<std::size_t> members;
  for (auto o : order) {
    members.push_back(ranked.members[o]);
    ranked.distances.push_back(dist[o]);
  }
  ranked.members = std::move(members);
  ranked.top_count = static_cast<std::size_t>(
      std::ceil(top_fraction * static_cast<double>(ranked.members.size()) - 1e-9));
  ranked.top_count = std::clamp<std::size_t>(ranked.top_count, 1, ranked.members.size());
  return ranked;
}

void save_cluster_model(const fs::path& dir, const ClusterModel& model) {
  fs::create_directories(dir);
  save_matrix(dir / "centroids.ntf", model.centroids,
              {{"k", model.k}, {"seed", model.seed}, {"inertia", model.inertia}, {"iterations", model.iterations}});
  std::vector<json> records;
  for (std::size_t i = 0; i < model.assignments.size(); ++i)
    records.push_back({{"row", i}, {"cluster", model.assignments[i]}});
  write_jsonl(dir / "assignments.jsonl", records);
  write_json(dir / "inertia_history.json", model.inertia_history);
}

ClusterModel load_cluster_model(const fs::path& dir) {
  auto file = load_tensors(dir / "centroids.ntf");
  ClusterModel model;
  model.centroids = file.tensors.at("data");
  model.k = file.meta.at("k").get<int>();
  model.seed = file.meta.at("seed").get<std::uint64_t>();
  model.inertia = file.meta.at("inertia").get<double>();
  model.iterations = file.meta.value("iterations", 0);
  for (const auto& r : read_jsonl(dir / "assignments.jsonl")) model.assignments.push_back(r.at("cluster").get<int>());
  if (fs::exists(dir / "inertia_history.json"))
    model.inertia_history = read_json(dir / "inertia_history.json").get<std::vector<double>>();
  return model;
}

}  // namespace narrative
