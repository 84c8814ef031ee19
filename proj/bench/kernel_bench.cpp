// Serial reference kernels against their OpenMP versions.

#include <benchmark/benchmark.h>

#include "narrative/kernels.hpp"
#include "narrative/random.hpp"

using namespace narrative;

namespace {

Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

template <bool Parallel>
void BM_AssignNearest(benchmark::State& state) {
  const auto n = state.range(0);
  const Matrix points = random_matrix(n, 384, 1);
  const Matrix centroids = random_matrix(150, 384, 2);
  std::vector<int> labels(static_cast<std::size_t>(n));
  std::vector<double> dist(static_cast<std::size_t>(n));
  for (auto _ : state) {
    if constexpr (Parallel)
      kernels::omp::assign_nearest(points, centroids, labels, dist);
    else
      kernels::serial::assign_nearest(points, centroids, labels, dist);
    benchmark::DoNotOptimize(labels.data());
  }
  state.SetItemsProcessed(state.iterations() * n);
}

std::vector<std::vector<int>> random_assignments(std::size_t docs, int k) {
  Rng rng(3);
  std::vector<std::vector<int>> out(docs);
  for (auto& d : out)
    for (std::size_t i = rng.uniform_index(60); i > 0; --i) d.push_back(static_cast<int>(rng.uniform_index(k)));
  return out;
}

template <bool Parallel>
void BM_ClusterCounts(benchmark::State& state) {
  const auto assignments = random_assignments(static_cast<std::size_t>(state.range(0)), 200);
  for (auto _ : state) {
    auto counts = Parallel ? kernels::omp::cluster_counts(assignments, 200)
                           : kernels::serial::cluster_counts(assignments, 200);
    benchmark::DoNotOptimize(counts.data());
  }
}

template <bool Parallel>
void BM_MutualInformation(benchmark::State& state) {
  const auto docs = state.range(0);
  Rng rng(4);
  kernels::PresenceMatrix presence(docs, 200);
  std::vector<int> labels;
  for (Eigen::Index d = 0; d < docs; ++d) {
    labels.push_back(static_cast<int>(rng.uniform_index(15)));
    for (Eigen::Index c = 0; c < 200; ++c) presence(d, c) = rng.uniform01() < 0.1;
  }
  for (auto _ : state) {
    auto mi = Parallel ? kernels::omp::mutual_information(presence, labels, 15)
                       : kernels::serial::mutual_information(presence, labels, 15);
    benchmark::DoNotOptimize(mi.data());
  }
}

}  // namespace

BENCHMARK_TEMPLATE(BM_AssignNearest, false)->Arg(5000)->Arg(20000);
BENCHMARK_TEMPLATE(BM_AssignNearest, true)->Arg(5000)->Arg(20000);
BENCHMARK_TEMPLATE(BM_ClusterCounts, false)->Arg(5000);
BENCHMARK_TEMPLATE(BM_ClusterCounts, true)->Arg(5000);
BENCHMARK_TEMPLATE(BM_MutualInformation, false)->Arg(5000);
BENCHMARK_TEMPLATE(BM_MutualInformation, true)->Arg(5000);

BENCHMARK_MAIN();
