#include <doctest.h>

#include <cmath>

#include "narrative/error.hpp"
#include "narrative/nn.hpp"
#include "narrative/random.hpp"

using namespace narrative;

namespace {

Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

double relative_error(double a, double b) { return std::abs(a - b) / std::max(1e-7, std::abs(a) + std::abs(b)); }

// Checks every parameter and input entry of `net` against central differences.
double max_gradient_error(nn::Sequential& net, const Matrix& x, const std::vector<int>& y,
                          const std::vector<double>& weights) {
  auto loss_at = [&](const Matrix& input) {
    return nn::weighted_cross_entropy(net.forward(input, true), y, weights).loss;
  };
  net.zero_grad();
  const auto base = nn::weighted_cross_entropy(net.forward(x, true), y, weights);
  const Matrix grad_x = net.backward(base.grad);
  const double h = 1e-6;
  double worst = 0.0;
  for (auto* p : net.parameters()) {
    const Matrix analytic = p->grad;
    for (Eigen::Index i = 0; i < p->value.size(); ++i) {
      const double saved = p->value.data()[i];
      p->value.data()[i] = saved + h;
      const double up = loss_at(x);
      p->value.data()[i] = saved - h;
      const double down = loss_at(x);
      p->value.data()[i] = saved;
      worst = std::max(worst, relative_error(analytic.data()[i], (up - down) / (2 * h)));
    }
  }
  Matrix probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double saved = probe.data()[i];
    probe.data()[i] = saved + h;
    const double up = loss_at(probe);
    probe.data()[i] = saved - h;
    const double down = loss_at(probe);
    probe.data()[i] = saved;
    worst = std::max(worst, relative_error(grad_x.data()[i], (up - down) / (2 * h)));
  }
  return worst;
}

}  // namespace

TEST_CASE("backprop matches finite differences for linear, layernorm and relu stacks") {
  Rng rng(42);
  nn::Sequential net;
  net.add<nn::Linear>(5, 7, rng, "l1");
  net.add<nn::LayerNorm>(7, "ln");
  net.add<nn::ReLU>();
  net.add<nn::Linear>(7, 3, rng, "l2");
  const Matrix x = random_matrix(6, 5, rng);
  const std::vector<int> y{0, 1, 2, 2, 1, 0};
  CHECK(max_gradient_error(net, x, y, {}) < 1e-4);
  CHECK(max_gradient_error(net, x, y, {0.5, 2.0, 1.0}) < 1e-4);
}

TEST_CASE("softmax rows are stable for large logits") {
  Matrix logits(1, 3);
  logits << 1000.0, 1001.0, 999.0;
  const Matrix p = nn::softmax_rows(logits);
  CHECK(p.sum() == doctest::Approx(1.0));
  CHECK(p(0, 1) > p(0, 0));
  CHECK(p.allFinite());
}

TEST_CASE("weighted cross-entropy follows its definition") {
  Matrix logits(2, 2);
  logits << 0.0, 0.0, 2.0, 0.0;
  const std::vector<int> y{0, 1};
  const std::vector<double> w{1.0, 3.0};
  const double l0 = std::log(2.0);
  const double l1 = -std::log(1.0 / (1.0 + std::exp(2.0)));
  CHECK(nn::weighted_cross_entropy(logits, y, w).loss == doctest::Approx((l0 + 3 * l1) / 4));
  const std::vector<int> bad{0, 5};
  CHECK_THROWS_AS(nn::weighted_cross_entropy(logits, bad), Error);
}

TEST_CASE("dropout is the identity at evaluation time and rescales in training") {
  nn::Dropout drop(0.5, 1);
  Matrix x = Matrix::Ones(4, 50);
  CHECK(drop.forward(x, false) == x);
  const Matrix y = drop.forward(x, true);
  for (Eigen::Index i = 0; i < y.size(); ++i) CHECK((y.data()[i] == 0.0 || y.data()[i] == 2.0));
}

TEST_CASE("adam decreases a quadratic and the schedule warms up then decays") {
  nn::Parameter p{"w", Matrix::Constant(1, 1, 5.0), Matrix::Zero(1, 1)};
  nn::Adam adam({0.1});
  for (int i = 0; i < 200; ++i) {
    p.grad(0, 0) = 2.0 * p.value(0, 0);
    adam.step({&p}, 0.1);
  }
  CHECK(std::abs(p.value(0, 0)) < 0.5);
  CHECK(nn::linear_warmup_decay(1.0, 0, 10, 100) == doctest::Approx(0.1));
  CHECK(nn::linear_warmup_decay(1.0, 9, 10, 100) == doctest::Approx(1.0));
  CHECK(nn::linear_warmup_decay(1.0, 55, 10, 100) == doctest::Approx(0.5));
  CHECK(nn::linear_warmup_decay(1.0, 100, 10, 100) == doctest::Approx(0.0));
}

TEST_CASE("state round trip and deep copy") {
  Rng rng(3);
  nn::Sequential a;
  a.add<nn::Linear>(3, 2, rng, "l");
  nn::Sequential b = a;
  const Matrix x = Matrix::Ones(1, 3);
  CHECK(a.forward(x, false) == b.forward(x, false));
  auto state = a.state();
  state.at("l.weight").setZero();
  b.load_state(state);
  CHECK(a.forward(x, false) != b.forward(x, false));
}
