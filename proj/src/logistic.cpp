#include "narrative/logistic.hpp"

#include <algorithm>
#include <cmath>

#include "narrative/error.hpp"
#include "narrative/nn.hpp"

namespace narrative {

LogisticRegression::LogisticRegression(std::size_t features, std::size_t classes)
    : weights_(Matrix::Zero(static_cast<Eigen::Index>(classes), static_cast<Eigen::Index>(features))),
      bias_(RowVector::Zero(static_cast<Eigen::Index>(classes))) {}

Matrix LogisticRegression::logits(const Matrix& x) const {
  require(x.cols() == weights_.cols(), ErrorKind::DimensionMismatch,
          "expected " + std::to_string(weights_.cols()) + " features, got " + std::to_string(x.cols()));
  Matrix z = x * weights_.transpose();
  z.rowwise() += bias_;
  return z;
}

Matrix LogisticRegression::predict_proba(const Matrix& x) const { return nn::softmax_rows(logits(x)); }

std::vector<int> LogisticRegression::predict(const Matrix& x) const { return argmax_rows(logits(x)); }

double LogisticRegression::objective(const Matrix& x, std::span<const int> y, double l2, Matrix* grad_w,
                                     RowVector* grad_b) const {
  const Matrix z = logits(x);
  const auto n = static_cast<double>(x.rows());
  double loss = 0.0;
  Matrix residual(z.rows(), z.cols());
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    const double max = z.row(r).maxCoeff();
    const RowVector e = (z.row(r).array() - max).exp();
    const double sum = e.sum();
    const int label = y[static_cast<std::size_t>(r)];
    loss += std::log(sum) + max - z(r, label);
    residual.row(r) = e / sum;
    residual(r, label) -= 1.0;
  }
  loss = loss / n + 0.5 * l2 * weights_.squaredNorm();
  if (grad_w) *grad_w = residual.transpose() * x / n + l2 * weights_;
  if (grad_b) *grad_b = residual.colwise().sum() / n;
  return loss;
}

void LogisticRegression::fit(const Matrix& x, std::span<const int> y, const LogisticConfig& config) {
  require(static_cast<std::size_t>(x.rows()) == y.size(), ErrorKind::DimensionMismatch, "features/labels mismatch");
  require(x.rows() > 0, ErrorKind::PreconditionFailed, "no training examples");
  const auto classes = static_cast<int>(this->classes());
  require(classes >= 2, ErrorKind::PreconditionFailed, "need at least two classes");
  std::vector<bool> seen(static_cast<std::size_t>(classes), false);
  for (int label : y) {
    require(label >= 0 && label < classes, ErrorKind::InvalidArgument, "label out of range");
    seen[static_cast<std::size_t>(label)] = true;
  }
  require(std::count(seen.begin(), seen.end(), true) >= 2, ErrorKind::PreconditionFailed,
          "training labels contain a single class");
  weights_.setZero(classes, x.cols());
  bias_.setZero(classes);

  Matrix gw;
  RowVector gb;
  double f = objective(x, y, config.l2, &gw, &gb);
  double step = 1.0;
  Matrix prev_w, prev_gw;
  RowVector prev_b, prev_gb;
  converged_ = false;
  iterations_ = 0;
  for (int iter = 0; iter < config.max_iterations; ++iter) {
    const double g2 = gw.squaredNorm() + gb.squaredNorm();
    gradient_norm_ = std::sqrt(g2);
    if (gradient_norm_ < config.gradient_tolerance) {
      converged_ = true;
      break;
    }
    // Barzilai-Borwein initial step, then backtrack until the Armijo condition holds.
    if (iter > 0) {
      const double sy = (weights_ - prev_w).cwiseProduct(gw - prev_gw).sum() +
                        (bias_ - prev_b).cwiseProduct(gb - prev_gb).sum();
      const double ss = (weights_ - prev_w).squaredNorm() + (bias_ - prev_b).squaredNorm();
      step = sy > 0.0 ? ss / sy : 1.0;
    }
    prev_w = weights_;
    prev_b = bias_;
    prev_gw = gw;
    prev_gb = gb;
    double trial_f = 0.0;
    for (int halvings = 0; halvings < 60; ++halvings) {
      weights_ = prev_w - step * prev_gw;
      bias_ = prev_b - step * prev_gb;
      trial_f = objective(x, y, config.l2, &gw, &gb);
      if (trial_f <= f - 1e-4 * step * g2) break;
      step *= 0.5;
    }
    if (!(trial_f < f)) {
      // No decrease is representable any more; the current point is optimal to precision.
      weights_ = prev_w;
      bias_ = prev_b;
      objective(x, y, config.l2, &gw, &gb);
      converged_ = true;
      break;
    }
    f = trial_f;
    iterations_ = iter + 1;
  }
  gradient_norm_ = std::sqrt(gw.squaredNorm() + gb.squaredNorm());
  require(std::isfinite(f), ErrorKind::NonFiniteLoss, "logistic regression objective diverged");
}

TensorFile LogisticRegression::to_tensors() const {
  TensorFile file;
  file.tensors["weights"] = weights_;
  file.tensors["bias"] = Matrix(bias_);
  file.meta = {{"kind", "logistic_regression"}, {"iterations", iterations_}, {"converged", converged_}};
  return file;
}

LogisticRegression LogisticRegression::from_tensors(const TensorFile& file) {
  LogisticRegression model;
  model.weights_ = file.tensors.at("weights");
  model.bias_ = file.tensors.at("bias").row(0);
  require(model.bias_.size() == model.weights_.rows(), ErrorKind::MalformedRecord, "bias/weights shape mismatch");
  model.iterations_ = file.meta.value("iterations", 0);
  model.converged_ = file.meta.value("converged", false);
  return model;
}

std::vector<int> argmax_rows(const Matrix& scores) {
  std::vector<int> out(static_cast<std::size_t>(scores.rows()));
  for (Eigen::Index r = 0; r < scores.rows(); ++r) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < scores.cols(); ++c)
      if (scores(r, c) > scores(r, best)) best = c;
    out[static_cast<std::size_t>(r)] = static_cast<int>(best);
  }
  return out;
}

}  // namespace narrative
