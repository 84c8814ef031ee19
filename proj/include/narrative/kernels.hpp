#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "narrative/linalg.hpp"

// Data-parallel inner loops. Each kernel has a plain serial version, kept as
// the reference the OpenMP version is tested and benchmarked against. Both
// produce bit-identical results: per-item work is independent and every
// reduction happens serially in item order.
namespace narrative::kernels {

// Presence matrix, documents x clusters, entries 0/1.
using PresenceMatrix = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

namespace serial {

// labels[i] = argmin_c ||points[i] - centroids[c]||^2 (lowest c on ties).
void assign_nearest(const Matrix& points, const Matrix& centroids, std::span<int> labels,
                    std::span<double> squared_distances);

// counts(d, c) = number of entries equal to c in assignments[d].
Eigen::MatrixXi cluster_counts(std::span<const std::vector<int>> assignments, int k);

// mi(c, f) = mutual information (nats) between [presence(d, c) == 1] and [labels[d] == f].
Matrix mutual_information(const PresenceMatrix& presence, std::span<const int> labels, int frames);

}  // namespace serial

namespace omp {

void assign_nearest(const Matrix& points, const Matrix& centroids, std::span<int> labels,
                    std::span<double> squared_distances);
Eigen::MatrixXi cluster_counts(std::span<const std::vector<int>> assignments, int k);
Matrix mutual_information(const PresenceMatrix& presence, std::span<const int> labels, int frames);

}  // namespace omp

// Mutual information of two binary variables from a 2x2 joint count table, natural log.
double binary_mutual_information(double n11, double n10, double n01, double n00);

}  // namespace narrative::kernels
