#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "narrative/io.hpp"
#include "narrative/linalg.hpp"
#include "narrative/random.hpp"

// Small dense-network toolkit for the classification heads. Batches are
// matrices with one example per row.
namespace narrative::nn {

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
};

class Layer {
 public:
  virtual ~Layer() = default;
  virtual Matrix forward(const Matrix& input, bool training) = 0;
  // Consumes dL/d(output), accumulates parameter gradients, returns dL/d(input).
  virtual Matrix backward(const Matrix& grad_output) = 0;
  virtual std::vector<Parameter*> parameters() { return {}; }
  virtual std::unique_ptr<Layer> clone() const = 0;
  virtual std::string kind() const = 0;
};

class Linear : public Layer {
 public:
  // PyTorch-style init: weights and bias uniform in +-1/sqrt(in).
  Linear(std::size_t in, std::size_t out, Rng& rng, const std::string& name);
  Linear(std::size_t in, std::size_t out, const std::string& name);  // zero init

  Matrix forward(const Matrix& input, bool training) override;
  Matrix backward(const Matrix& grad_output) override;
  std::vector<Parameter*> parameters() override { return {&weight_, &bias_}; }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Linear>(*this); }
  std::string kind() const override { return "linear"; }

  std::size_t in_features() const { return static_cast<std::size_t>(weight_.value.cols()); }
  std::size_t out_features() const { return static_cast<std::size_t>(weight_.value.rows()); }

 private:
  Parameter weight_;  // out x in
  Parameter bias_;    // 1 x out
  Matrix input_;
};

class ReLU : public Layer {
 public:
  Matrix forward(const Matrix& input, bool training) override;
  Matrix backward(const Matrix& grad_output) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<ReLU>(*this); }
  std::string kind() const override { return "relu"; }

 private:
  Matrix mask_;
};

class LayerNorm : public Layer {
 public:
  LayerNorm(std::size_t features, const std::string& name, double eps = 1e-5);

  Matrix forward(const Matrix& input, bool training) override;
  Matrix backward(const Matrix& grad_output) override;
  std::vector<Parameter*> parameters() override { return {&gamma_, &beta_}; }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<LayerNorm>(*this); }
  std::string kind() const override { return "layernorm"; }

 private:
  Parameter gamma_;
  Parameter beta_;
  double eps_;
  Matrix normalized_;
  Vector inv_std_;
};

// Inverted dropout; identity when not training or p == 0.
class Dropout : public Layer {
 public:
  Dropout(double p, std::uint64_t seed) : p_(p), rng_(seed) {}

  Matrix forward(const Matrix& input, bool training) override;
  Matrix backward(const Matrix& grad_output) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Dropout>(*this); }
  std::string kind() const override { return "dropout"; }

 private:
  double p_;
  Rng rng_;
  Matrix mask_;
};

class Sequential {
 public:
  Sequential() = default;
  Sequential(const Sequential& other);
  Sequential& operator=(const Sequential& other);
  Sequential(Sequential&&) = default;
  Sequential& operator=(Sequential&&) = default;

  template <typename L, typename... Args>
  L& add(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *layer;
    layers_.push_back(std::move(layer));
    return ref;
  }

  Matrix forward(const Matrix& input, bool training);
  Matrix backward(const Matrix& grad_output);
  std::vector<Parameter*> parameters();
  void zero_grad();

  std::size_t size() const { return layers_.size(); }

  // Parameter values keyed by parameter name.
  std::map<std::string, Matrix> state();
  void load_state(const std::map<std::string, Matrix>& state);

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

Matrix softmax_rows(const Matrix& logits);

struct LossResult {
  double loss = 0.0;
  Matrix grad;  // dL/dlogits
};

// Weighted mean cross-entropy: sum_i w[y_i] * -log p_i[y_i] / sum_i w[y_i].
// Empty `class_weights` means all ones.
LossResult weighted_cross_entropy(const Matrix& logits, std::span<const int> targets,
                                  std::span<const double> class_weights = {});

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  bool decoupled = true;  // AdamW when true; L2-in-gradient otherwise
};

class Adam {
 public:
  explicit Adam(AdamConfig config) : config_(config) {}
  void step(const std::vector<Parameter*>& params, double learning_rate);

 private:
  AdamConfig config_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  long t_ = 0;
};

// Linear warmup to the base rate over `warmup_steps`, then linear decay to 0
// at `total_steps`.
double linear_warmup_decay(double base_rate, long step, long warmup_steps, long total_steps);

}  // namespace narrative::nn
