#pragma once

#include <string>
#include <vector>

#include "narrative/framing.hpp"
#include "narrative/random.hpp"

namespace testutil {

// Documents whose frame is a function of cluster presence: frame 0 iff a chain
// falls in cluster 0, frame 1 iff one falls in cluster 1 (and none in 0),
// frame 2 otherwise. Clusters 2..k-1 carry noise. Document embeddings are
// pure noise, so they say nothing about the frame.
struct PresenceFixture {
  std::vector<std::vector<int>> train_clusters, test_clusters;
  std::vector<int> train_labels, test_labels;
  narrative::Matrix train_embeddings, test_embeddings;
  int k = 8;
};

inline PresenceFixture presence_fixture(std::size_t n_train, std::size_t n_test, std::uint64_t seed) {
  using namespace narrative;
  PresenceFixture f;
  Rng rng(seed);
  auto make = [&](std::size_t n, std::vector<std::vector<int>>& clusters, std::vector<int>& labels, Matrix& emb) {
    emb.resize(static_cast<Eigen::Index>(n), 16);
    for (std::size_t d = 0; d < n; ++d) {
      const int frame = static_cast<int>(d % 3);
      std::vector<int> chains;
      if (frame < 2)
        for (std::size_t i = 1 + rng.uniform_index(3); i > 0; --i) chains.push_back(frame);
      for (std::size_t i = rng.uniform_index(5); i > 0; --i)
        chains.push_back(2 + static_cast<int>(rng.uniform_index(static_cast<std::size_t>(f.k - 2))));
      clusters.push_back(chains);
      labels.push_back(frame);
      for (Eigen::Index c = 0; c < emb.cols(); ++c) emb(static_cast<Eigen::Index>(d), c) = rng.normal();
    }
  };
  make(n_train, f.train_clusters, f.train_labels, f.train_embeddings);
  make(n_test, f.test_clusters, f.test_labels, f.test_embeddings);
  return f;
}

inline narrative::Matrix presence_features(const std::vector<std::vector<int>>& clusters, int k) {
  std::vector<std::string> ids(clusters.size());
  return narrative::standardized_matrix(narrative::build_cluster_features(ids, clusters, k));
}

}  // namespace testutil
