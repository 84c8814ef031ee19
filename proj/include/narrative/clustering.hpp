#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "narrative/io.hpp"
#include "narrative/linalg.hpp"
#include "narrative/providers.hpp"

namespace narrative {

struct ClusterModel {
  int k = 0;
  Matrix centroids;          // k x D
  std::vector<int> assignments;  // one cluster id per input row
  double inertia = 0.0;          // sum of squared distances to assigned centroids
  std::uint64_t seed = 0;
  int iterations = 0;
  // Inertia after each assignment step, in order.
  std::vector<double> inertia_history;

  std::vector<std::size_t> members(int cluster_id) const;
};

// One vector per text, order-preserving, each L2-normalized. No provider
// call for an empty input.
Matrix embed_expansions(const std::vector<std::string>& sentences, EmbeddingProvider& provider,
                        std::size_t batch_size = 64);

void l2_normalize_rows(Matrix& matrix);

struct KMeansConfig {
  int k = 8;
  std::uint64_t seed = 42;
  int max_iters = 300;
  double tol = 1e-4;  // on the largest centroid movement
  bool parallel = true;
};

// k-means++ seeding, then Lloyd iterations. An empty cluster's centroid is
// moved onto the point farthest from its current centroid.
ClusterModel kmeans(const Matrix& points, const KMeansConfig& config);

// k-means++ seeds only (row indices into `points`), exposed for testing.
std::vector<std::size_t> kmeans_plus_plus(const Matrix& points, int k, std::uint64_t seed);

inline const std::vector<int>& default_k_sweep() {
  static const std::vector<int> ks{25, 50, 75, 100, 125, 150, 175, 200};
  return ks;
}

struct SweepResult {
  std::map<int, ClusterModel> models;
  std::map<int, std::string> errors;
};

// Each k runs independently with seed mix_seed(seed, k); a failing k is
// recorded in `errors` without affecting the others.
SweepResult sweep_k(const Matrix& points, const std::vector<int>& ks, std::uint64_t seed,
                    int max_iters = 300, double tol = 1e-4);

// Nearest-centroid cluster for each row.
std::vector<int> assign_to_centroids(const ClusterModel& model, const Matrix& points);

struct RankedCluster {
  int cluster_id = 0;
  std::vector<std::size_t> members;  // ascending distance to centroid, ties by row index
  std::vector<double> distances;
  std::size_t top_count = 0;         // ceil(top_fraction * size)

  std::vector<std::size_t> top() const {
    return {members.begin(), members.begin() + static_cast<std::ptrdiff_t>(top_count)};
  }
};

RankedCluster rank_by_centroid_distance(const ClusterModel& model, const Matrix& points, int cluster_id,
                                        double top_fraction = 0.25);

void save_cluster_model(const fs::path& dir, const ClusterModel& model);
ClusterModel load_cluster_model(const fs::path& dir);

}  // namespace narrative
