#pragma once

#include <span>
#include <vector>

#include "narrative/io.hpp"
#include "narrative/linalg.hpp"

namespace narrative {

struct LogisticConfig {
  double l2 = 1e-2;  // on weights only, the bias is unregularized
  double gradient_tolerance = 1e-6;
  int max_iterations = 20000;
};

// Multinomial logistic regression fitted by full-batch gradient descent with
// Armijo backtracking, starting from zero. Objective:
//   mean_i -log softmax(W x_i + b)[y_i] + l2 / 2 * ||W||^2
class LogisticRegression {
 public:
  LogisticRegression() = default;
  LogisticRegression(std::size_t features, std::size_t classes);

  void fit(const Matrix& x, std::span<const int> y, const LogisticConfig& config = {});

  Matrix predict_proba(const Matrix& x) const;
  std::vector<int> predict(const Matrix& x) const;
  Matrix logits(const Matrix& x) const;

  std::size_t features() const { return static_cast<std::size_t>(weights_.cols()); }
  std::size_t classes() const { return static_cast<std::size_t>(weights_.rows()); }
  const Matrix& weights() const { return weights_; }  // classes x features
  const RowVector& bias() const { return bias_; }
  int iterations() const { return iterations_; }
  bool converged() const { return converged_; }
  double gradient_norm() const { return gradient_norm_; }

  // Objective value and gradients at the current parameters.
  double objective(const Matrix& x, std::span<const int> y, double l2, Matrix* grad_w = nullptr,
                   RowVector* grad_b = nullptr) const;

  TensorFile to_tensors() const;
  static LogisticRegression from_tensors(const TensorFile& file);

 private:
  Matrix weights_;
  RowVector bias_;
  int iterations_ = 0;
  bool converged_ = false;
  double gradient_norm_ = 0.0;
};

// Row-wise argmax, lowest index on ties.
std::vector<int> argmax_rows(const Matrix& scores);

}  // namespace narrative
