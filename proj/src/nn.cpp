#include "narrative/nn.hpp"

#include <cmath>

#include "narrative/error.hpp"

namespace narrative::nn {

Linear::Linear(std::size_t in, std::size_t out, Rng& rng, const std::string& name) : Linear(in, out, name) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  for (Eigen::Index i = 0; i < weight_.value.size(); ++i)
    weight_.value.data()[i] = (2.0 * rng.uniform01() - 1.0) * bound;
  for (Eigen::Index i = 0; i < bias_.value.size(); ++i)
    bias_.value.data()[i] = (2.0 * rng.uniform01() - 1.0) * bound;
}

Linear::Linear(std::size_t in, std::size_t out, const std::string& name) {
  const auto rows = static_cast<Eigen::Index>(out);
  const auto cols = static_cast<Eigen::Index>(in);
  weight_ = {name + ".weight", Matrix::Zero(rows, cols), Matrix::Zero(rows, cols)};
  bias_ = {name + ".bias", Matrix::Zero(1, rows), Matrix::Zero(1, rows)};
}

Matrix Linear::forward(const Matrix& input, bool) {
  require(input.cols() == weight_.value.cols(), ErrorKind::DimensionMismatch,
          weight_.name + ": expected " + std::to_string(weight_.value.cols()) + " inputs, got " +
              std::to_string(input.cols()));
  input_ = input;
  Matrix out = input * weight_.value.transpose();
  out.rowwise() += bias_.value.row(0);
  return out;
}

Matrix Linear::backward(const Matrix& grad_output) {
  weight_.grad.noalias() += grad_output.transpose() * input_;
  bias_.grad.row(0) += grad_output.colwise().sum();
  return grad_output * weight_.value;
}

Matrix ReLU::forward(const Matrix& input, bool) {
  mask_ = (input.array() > 0.0).cast<double>().matrix();
  return input.cwiseMax(0.0);
}

Matrix ReLU::backward(const Matrix& grad_output) { return grad_output.cwiseProduct(mask_); }

LayerNorm::LayerNorm(std::size_t features, const std::string& name, double eps) : eps_(eps) {
  const auto n = static_cast<Eigen::Index>(features);
  gamma_ = {name + ".gamma", Matrix::Ones(1, n), Matrix::Zero(1, n)};
  beta_ = {name + ".beta", Matrix::Zero(1, n), Matrix::Zero(1, n)};
}

Matrix LayerNorm::forward(const Matrix& input, bool) {
  require(input.cols() == gamma_.value.cols(), ErrorKind::DimensionMismatch, gamma_.name + ": width mismatch");
  const auto n = static_cast<double>(input.cols());
  normalized_.resize(input.rows(), input.cols());
  inv_std_.resize(input.rows());
  for (Eigen::Index r = 0; r < input.rows(); ++r) {
    const double mean = input.row(r).sum() / n;
    const RowVector centered = input.row(r).array() - mean;
    const double var = centered.squaredNorm() / n;
    inv_std_(r) = 1.0 / std::sqrt(var + eps_);
    normalized_.row(r) = centered * inv_std_(r);
  }
  Matrix out = normalized_.array().rowwise() * gamma_.value.row(0).array();
  out.rowwise() += beta_.value.row(0);
  return out;
}

Matrix LayerNorm::backward(const Matrix& grad_output) {
  const auto n = static_cast<double>(grad_output.cols());
  gamma_.grad.row(0) += grad_output.cwiseProduct(normalized_).colwise().sum();
  beta_.grad.row(0) += grad_output.colwise().sum();
  Matrix grad_input(grad_output.rows(), grad_output.cols());
  for (Eigen::Index r = 0; r < grad_output.rows(); ++r) {
    const RowVector g = grad_output.row(r).cwiseProduct(gamma_.value.row(0));
    const double sum_g = g.sum();
    const double sum_gx = g.dot(normalized_.row(r));
    grad_input.row(r) =
        (inv_std_(r) / n) * (n * g.array() - sum_g - normalized_.row(r).array() * sum_gx).matrix();
  }
  return grad_input;
}

Matrix Dropout::forward(const Matrix& input, bool training) {
  if (!training || p_ <= 0.0) {
    mask_.resize(0, 0);
    return input;
  }
  mask_.resize(input.rows(), input.cols());
  const double scale = 1.0 / (1.0 - p_);
  for (Eigen::Index i = 0; i < mask_.size(); ++i) mask_.data()[i] = rng_.uniform01() < p_ ? 0.0 : scale;
  return input.cwiseProduct(mask_);
}

Matrix Dropout::backward(const Matrix& grad_output) {
  if (mask_.size() == 0) return grad_output;
  return grad_output.cwiseProduct(mask_);
}

Sequential::Sequential(const Sequential& other) {
  for (const auto& layer : other.layers_) layers_.push_back(layer->clone());
}

Sequential& Sequential::operator=(const Sequential& other) {
  if (this == &other) return *this;
  layers_.clear();
  for (const auto& layer : other.layers_) layers_.push_back(layer->clone());
  return *this;
}

Matrix Sequential::forward(const Matrix& input, bool training) {
  Matrix x = input;
  for (auto& layer : layers_) x = layer->forward(x, training);
  return x;
}

Matrix Sequential::backward(const Matrix& grad_output) {
  Matrix g = grad_output;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
  return g;
}

std::vector<Parameter*> Sequential::parameters() {
  std::vector<Parameter*> out;
  for (auto& layer : layers_)
    for (auto* p : layer->parameters()) out.push_back(p);
  return out;
}

void Sequential::zero_grad() {
  for (auto* p : parameters()) p->grad.setZero();
}

std::map<std::string, Matrix> Sequential::state() {
  std::map<std::string, Matrix> out;
  for (auto* p : parameters()) out.emplace(p->name, p->value);
  return out;
}

void Sequential::load_state(const std::map<std::string, Matrix>& state) {
  for (auto* p : parameters()) {
    auto it = state.find(p->name);
    require(it != state.end(), ErrorKind::MalformedRecord, "checkpoint lacks parameter " + p->name);
    require(it->second.rows() == p->value.rows() && it->second.cols() == p->value.cols(),
            ErrorKind::DimensionMismatch, "checkpoint shape mismatch for " + p->name);
    p->value = it->second;
  }
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double max = logits.row(r).maxCoeff();
    RowVector e = (logits.row(r).array() - max).exp();
    out.row(r) = e / e.sum();
  }
  return out;
}

LossResult weighted_cross_entropy(const Matrix& logits, std::span<const int> targets,
                                  std::span<const double> class_weights) {
  require(static_cast<std::size_t>(logits.rows()) == targets.size(), ErrorKind::DimensionMismatch,
          "logits/targets length mismatch");
  const Matrix probs = softmax_rows(logits);
  LossResult result;
  result.grad = probs;
  double total_weight = 0.0;
  double loss = 0.0;
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const int y = targets[static_cast<std::size_t>(r)];
    require(y >= 0 && y < logits.cols(), ErrorKind::InvalidArgument, "target out of range");
    const double w = class_weights.empty() ? 1.0 : class_weights[static_cast<std::size_t>(y)];
    // log-softmax computed stably
    const double max = logits.row(r).maxCoeff();
    const double log_sum = std::log((logits.row(r).array() - max).exp().sum()) + max;
    loss += w * (log_sum - logits(r, y));
    total_weight += w;
    result.grad.row(r) *= w;
    result.grad(r, y) -= w;
  }
  require(total_weight > 0.0, ErrorKind::InvalidArgument, "zero total class weight in batch");
  result.loss = loss / total_weight;
  result.grad /= total_weight;
  return result;
}

void Adam::step(const std::vector<Parameter*>& params, double learning_rate) {
  if (m_.empty()) {
    for (auto* p : params) {
      m_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
      v_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    }
  }
  require(m_.size() == params.size(), ErrorKind::InvalidArgument, "optimizer parameter set changed");
  ++t_;
  const double bias1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bias2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    Matrix grad = p.grad;
    if (config_.weight_decay > 0.0) {
      if (config_.decoupled)
        p.value *= (1.0 - learning_rate * config_.weight_decay);
      else
        grad += config_.weight_decay * p.value;
    }
    m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * grad;
    v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * grad.cwiseProduct(grad);
    const Matrix m_hat = m_[i] / bias1;
    const Matrix v_hat = v_[i] / bias2;
    p.value.array() -= learning_rate * m_hat.array() / (v_hat.array().sqrt() + config_.eps);
  }
}

double linear_warmup_decay(double base_rate, long step, long warmup_steps, long total_steps) {
  if (warmup_steps > 0 && step < warmup_steps)
    return base_rate * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
  const long decay_span = std::max(1L, total_steps - warmup_steps);
  const double remaining = static_cast<double>(total_steps - step) / static_cast<double>(decay_span);
  return base_rate * std::clamp(remaining, 0.0, 1.0);
}

}  // namespace narrative::nn
