#include <doctest.h>

#include "narrative/kernels.hpp"
#include "narrative/random.hpp"
#include "oracles.hpp"

using namespace narrative;

namespace {

Matrix random_points(Eigen::Index n, Eigen::Index d, Rng& rng) {
  Matrix x(n, d);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  return x;
}

}  // namespace

TEST_CASE("parallel nearest-centroid assignment equals the serial reference") {
  Rng rng(1);
  const Matrix points = random_points(2000, 16, rng);
  const Matrix centroids = random_points(40, 16, rng);
  std::vector<int> a(2000), b(2000);
  std::vector<double> da(2000), db(2000);
  kernels::serial::assign_nearest(points, centroids, a, da);
  kernels::omp::assign_nearest(points, centroids, b, db);
  CHECK(a == b);
  CHECK(da == db);
  Eigen::Index best;
  (centroids.rowwise() - points.row(17)).rowwise().squaredNorm().minCoeff(&best);
  CHECK(a[17] == best);
}

TEST_CASE("parallel cluster counts equal the serial reference") {
  Rng rng(2);
  std::vector<std::vector<int>> assignments(300);
  for (auto& doc : assignments)
    for (std::size_t i = rng.uniform_index(12); i > 0; --i) doc.push_back(static_cast<int>(rng.uniform_index(25)));
  const auto a = kernels::serial::cluster_counts(assignments, 25);
  const auto b = kernels::omp::cluster_counts(assignments, 25);
  CHECK(a == b);
  CHECK(a.sum() == b.sum());
}

TEST_CASE("mutual information kernels match brute-force enumeration") {
  Rng rng(3);
  const int docs = 20, k = 6, frames = 3;
  kernels::PresenceMatrix presence(docs, k);
  std::vector<int> labels;
  for (int d = 0; d < docs; ++d) {
    labels.push_back(static_cast<int>(rng.uniform_index(frames)));
    for (int c = 0; c < k; ++c) presence(d, c) = rng.uniform01() < 0.4 ? 1 : 0;
  }
  const Matrix serial = kernels::serial::mutual_information(presence, labels, frames);
  const Matrix parallel = kernels::omp::mutual_information(presence, labels, frames);
  CHECK(serial == parallel);
  for (int c = 0; c < k; ++c)
    for (int f = 0; f < frames; ++f) {
      std::vector<int> x, y;
      for (int d = 0; d < docs; ++d) {
        x.push_back(presence(d, c));
        y.push_back(labels[static_cast<std::size_t>(d)] == f);
      }
      CHECK(std::abs(serial(c, f) - oracle::mi_binary(x, y)) < 1e-9);
    }
}

TEST_CASE("binary mutual information edge cases") {
  CHECK(kernels::binary_mutual_information(25, 25, 25, 25) == doctest::Approx(0.0));
  CHECK(kernels::binary_mutual_information(50, 0, 0, 50) == doctest::Approx(std::log(2.0)));
  CHECK(kernels::binary_mutual_information(0, 0, 0, 10) == 0.0);
}
