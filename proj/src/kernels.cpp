#include "narrative/kernels.hpp"

#include <cmath>
#include <limits>

#include "narrative/error.hpp"

namespace narrative::kernels {

namespace {

inline void nearest_for_point(const Matrix& points, const Matrix& centroids, Eigen::Index i, int& label,
                              double& distance) {
  double best = std::numeric_limits<double>::infinity();
  int best_c = 0;
  const auto dim = points.cols();
  const double* p = points.row(i).data();
  for (Eigen::Index c = 0; c < centroids.rows(); ++c) {
    const double* q = centroids.row(c).data();
    double d = 0.0;
    for (Eigen::Index j = 0; j < dim; ++j) {
      const double diff = p[j] - q[j];
      d += diff * diff;
    }
    if (d < best) {
      best = d;
      best_c = static_cast<int>(c);
    }
  }
  label = best_c;
  distance = best;
}

void check_assign_args(const Matrix& points, const Matrix& centroids, std::span<int> labels,
                       std::span<double> distances) {
  require(points.cols() == centroids.cols(), ErrorKind::DimensionMismatch, "point/centroid width mismatch");
  require(centroids.rows() > 0, ErrorKind::InvalidArgument, "no centroids");
  require(labels.size() == static_cast<std::size_t>(points.rows()) && distances.size() == labels.size(),
          ErrorKind::DimensionMismatch, "output spans must have one slot per point");
}

inline double xlogx_ratio(double joint, double n, double px_count, double py_count) {
  if (joint <= 0.0) return 0.0;
  return (joint / n) * std::log((joint * n) / (px_count * py_count));
}

double mi_cell(const PresenceMatrix& presence, std::span<const int> labels, Eigen::Index c, int f) {
  double n11 = 0, n10 = 0, n01 = 0, n00 = 0;
  for (Eigen::Index d = 0; d < presence.rows(); ++d) {
    const bool x = presence(d, c) != 0;
    const bool y = labels[static_cast<std::size_t>(d)] == f;
    if (x && y) ++n11;
    else if (x) ++n10;
    else if (y) ++n01;
    else ++n00;
  }
  return binary_mutual_information(n11, n10, n01, n00);
}

}  // namespace

double binary_mutual_information(double n11, double n10, double n01, double n00) {
  const double n = n11 + n10 + n01 + n00;
  if (n <= 0.0) return 0.0;
  const double x1 = n11 + n10, x0 = n01 + n00;
  const double y1 = n11 + n01, y0 = n10 + n00;
  double mi = xlogx_ratio(n11, n, x1, y1) + xlogx_ratio(n10, n, x1, y0) + xlogx_ratio(n01, n, x0, y1) +
              xlogx_ratio(n00, n, x0, y0);
  return mi < 0.0 ? 0.0 : mi;
}

namespace serial {

void assign_nearest(const Matrix& points, const Matrix& centroids, std::span<int> labels,
                    std::span<double> squared_distances) {
  check_assign_args(points, centroids, labels, squared_distances);
  for (Eigen::Index i = 0; i < points.rows(); ++i)
    nearest_for_point(points, centroids, i, labels[static_cast<std::size_t>(i)],
                      squared_distances[static_cast<std::size_t>(i)]);
}

Eigen::MatrixXi cluster_counts(std::span<const std::vector<int>> assignments, int k) {
  Eigen::MatrixXi counts = Eigen::MatrixXi::Zero(static_cast<Eigen::Index>(assignments.size()), k);
  for (std::size_t d = 0; d < assignments.size(); ++d)
    for (int c : assignments[d]) {
      require(c >= 0 && c < k, ErrorKind::InvalidArgument, "cluster id out of range");
      ++counts(static_cast<Eigen::Index>(d), c);
    }
  return counts;
}

Matrix mutual_information(const PresenceMatrix& presence, std::span<const int> labels, int frames) {
  require(static_cast<std::size_t>(presence.rows()) == labels.size(), ErrorKind::DimensionMismatch,
          "presence rows must match labels");
  Matrix mi(presence.cols(), frames);
  for (Eigen::Index c = 0; c < presence.cols(); ++c)
    for (int f = 0; f < frames; ++f) mi(c, f) = mi_cell(presence, labels, c, f);
  return mi;
}

}  // namespace serial

namespace omp {

void assign_nearest(const Matrix& points, const Matrix& centroids, std::span<int> labels,
                    std::span<double> squared_distances) {
  check_assign_args(points, centroids, labels, squared_distances);
  const auto n = static_cast<long>(points.rows());
#pragma omp parallel for schedule(static)
  for (long i = 0; i < n; ++i)
    nearest_for_point(points, centroids, i, labels[static_cast<std::size_t>(i)],
                      squared_distances[static_cast<std::size_t>(i)]);
}

Eigen::MatrixXi cluster_counts(std::span<const std::vector<int>> assignments, int k) {
  for (const auto& doc : assignments)
    for (int c : doc) require(c >= 0 && c < k, ErrorKind::InvalidArgument, "cluster id out of range");
  Eigen::MatrixXi counts = Eigen::MatrixXi::Zero(static_cast<Eigen::Index>(assignments.size()), k);
  const auto n = static_cast<long>(assignments.size());
#pragma omp parallel for schedule(static)
  for (long d = 0; d < n; ++d)
    for (int c : assignments[static_cast<std::size_t>(d)]) ++counts(d, c);
  return counts;
}

Matrix mutual_information(const PresenceMatrix& presence, std::span<const int> labels, int frames) {
  require(static_cast<std::size_t>(presence.rows()) == labels.size(), ErrorKind::DimensionMismatch,
          "presence rows must match labels");
  Matrix mi(presence.cols(), frames);
  const long cells = static_cast<long>(presence.cols()) * frames;
#pragma omp parallel for schedule(static)
  for (long cell = 0; cell < cells; ++cell) {
    const Eigen::Index c = cell / frames;
    const int f = static_cast<int>(cell % frames);
    mi(c, f) = mi_cell(presence, labels, c, f);
  }
  return mi;
}

}  // namespace omp

}  // namespace narrative::kernels
