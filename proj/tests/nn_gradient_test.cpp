// Analytic gradients of every layer kind against central finite differences,
// computed in double precision on small random tensors.
#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <memory>

#include "scanpriv/nn/loss.hpp"
#include "scanpriv/nn/network.hpp"

namespace scanpriv::nn {
namespace {

using D = double;

Tensor<D> random_tensor(Shape s, Rng& rng, double scale = 1.0) {
  Tensor<D> t(std::move(s));
  for (D& v : t.values()) v = rng.uniform(-scale, scale);
  return t;
}

double relative_error(const std::vector<double>& a,
                      const std::vector<double>& b) {
  double diff = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::sqrt(diff) / std::max(std::sqrt(na) + std::sqrt(nb), 1e-12);
}

// Checks dL/dx and dL/dparams of `layer` for L = sum(projection * layer(x)).
void check_layer(Layer<D>& layer, Shape input_shape, std::uint64_t seed) {
  Rng rng(seed);
  layer.init(rng);
  // Non-zero biases so their gradients are exercised on a non-trivial path.
  for (Tensor<D>& p : layer.params()) {
    for (D& v : p.values()) v += rng.uniform(-0.1, 0.1);
  }
  Tensor<D> x = random_tensor(input_shape, rng);
  const Shape out_shape = layer.output_shape(x.shape());
  Tensor<D> proj = random_tensor(out_shape, rng);
  const std::uint64_t dropout_seed = rng.next();

  auto loss = [&](const Tensor<D>& in) {
    Rng r(dropout_seed);
    LayerCache<D> cache;
    Tensor<D> y = layer.forward(in, &cache, &r);
    double s = 0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * proj[i];
    return s;
  };

  Rng r(dropout_seed);
  LayerCache<D> cache;
  layer.forward(x, &cache, &r);
  std::vector<Tensor<D>> grads;
  for (const Tensor<D>& p : std::as_const(layer).params()) {
    grads.emplace_back(p.shape());
  }
  Tensor<D> dx = layer.backward(proj, cache, grads, true);

  const double h = 1e-6;
  std::vector<double> analytic(dx.values().begin(), dx.values().end());
  std::vector<double> numeric;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const D saved = x[i];
    x[i] = saved + h;
    const double up = loss(x);
    x[i] = saved - h;
    const double down = loss(x);
    x[i] = saved;
    numeric.push_back((up - down) / (2 * h));
  }
  EXPECT_LT(relative_error(analytic, numeric), 1e-3)
      << to_string(layer.kind()) << " input gradient, seed " << seed;

  auto params = layer.params();
  for (std::size_t p = 0; p < params.size(); ++p) {
    std::vector<double> a(grads[p].values().begin(), grads[p].values().end());
    std::vector<double> n;
    for (std::size_t i = 0; i < params[p].size(); ++i) {
      const D saved = params[p][i];
      params[p][i] = saved + h;
      const double up = loss(x);
      params[p][i] = saved - h;
      const double down = loss(x);
      params[p][i] = saved;
      n.push_back((up - down) / (2 * h));
    }
    EXPECT_LT(relative_error(a, n), 1e-3)
        << to_string(layer.kind()) << " parameter " << p << ", seed " << seed;
  }
}

class LayerGradient : public ::testing::TestWithParam<std::uint64_t> {};

TEST_P(LayerGradient, Conv) {
  Conv2d<D> conv(2, 3, 3);
  check_layer(conv, {2, 2, 6, 6}, GetParam());
}

TEST_P(LayerGradient, ConvOddKernelStrideTwo) {
  Conv2d<D> conv(2, 3, 5, 2);
  check_layer(conv, {2, 2, 8, 8}, GetParam());
}

TEST_P(LayerGradient, TransposedConv) {
  ConvTranspose2d<D> tconv(3, 2, 5, 2);
  check_layer(tconv, {2, 3, 3, 3}, GetParam());
}

TEST_P(LayerGradient, TransposedConvKernel7) {
  ConvTranspose2d<D> tconv(2, 2, 7, 2);
  check_layer(tconv, {1, 2, 4, 4}, GetParam());
}

TEST_P(LayerGradient, Linear) {
  Linear<D> fc(12, 5);
  check_layer(fc, {3, 3, 2, 2}, GetParam());
}

TEST_P(LayerGradient, Relu) {
  Relu<D> relu;
  check_layer(relu, {2, 3, 4, 4}, GetParam());
}

TEST_P(LayerGradient, MaxPool) {
  MaxPool2<D> pool;
  check_layer(pool, {2, 3, 4, 6}, GetParam());
}

TEST_P(LayerGradient, Dropout) {
  Dropout<D> drop(0.5);
  check_layer(drop, {4, 10}, GetParam());
}

TEST_P(LayerGradient, L2Loss) {
  Rng rng(GetParam());
  Tensor<D> pred = random_tensor({3, 4}, rng);
  Tensor<D> target = random_tensor({3, 4}, rng);
  auto r = l2_loss(pred, target);
  std::vector<double> a(r.grad.values().begin(), r.grad.values().end());
  std::vector<double> n;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const D s = pred[i];
    pred[i] = s + 1e-6;
    const double up = l2_loss(pred, target).value;
    pred[i] = s - 1e-6;
    const double down = l2_loss(pred, target).value;
    pred[i] = s;
    n.push_back((up - down) / 2e-6);
  }
  EXPECT_LT(relative_error(a, n), 1e-3);
}

TEST_P(LayerGradient, SoftmaxLogLoss) {
  Rng rng(GetParam());
  Tensor<D> logits = random_tensor({4, 5}, rng, 3.0);
  const std::vector<int> labels = {0, 4, 2, 2};
  auto r = softmax_log_loss<D>(logits, labels);
  std::vector<double> a(r.grad.values().begin(), r.grad.values().end());
  std::vector<double> n;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const D s = logits[i];
    logits[i] = s + 1e-6;
    const double up = softmax_log_loss<D>(logits, labels).value;
    logits[i] = s - 1e-6;
    const double down = softmax_log_loss<D>(logits, labels).value;
    logits[i] = s;
    n.push_back((up - down) / 2e-6);
  }
  EXPECT_LT(relative_error(a, n), 1e-3);
}

INSTANTIATE_TEST_SUITE_P(FiveSeeds, LayerGradient,
                         ::testing::Values(1u, 2u, 3u, 4u, 5u));

TEST(NetworkGradient, StackedNetworkMatchesFiniteDifferences) {
  Rng rng(11);
  Network<D> net({2, 8, 8});
  net.add("conv1", std::make_unique<Conv2d<D>>(2, 3, 3))
      .add("relu1", std::make_unique<Relu<D>>())
      .add("pool1", std::make_unique<MaxPool2<D>>())
      .add("conv2", std::make_unique<Conv2d<D>>(3, 4, 3, 2))
      .add("relu2", std::make_unique<Relu<D>>())
      .add("up", std::make_unique<ConvTranspose2d<D>>(4, 2, 3, 2))
      .add("fc", std::make_unique<Linear<D>>(2 * 4 * 4, 3));
  net.init(rng);
  Tensor<D> x = random_tensor({2, 2, 8, 8}, rng);
  const std::vector<int> labels = {1, 2};
  auto loss = [&](const Tensor<D>& in) {
    return softmax_log_loss<D>(net.infer(in), labels).value;
  };
  Tape<D> tape;
  auto out = net.forward(x, tape, nullptr);
  auto r = softmax_log_loss<D>(out, labels);
  auto grads = net.make_gradients();
  Tensor<D> dx = net.backward(r.grad, tape, grads, true);
  std::vector<double> a(dx.values().begin(), dx.values().end());
  std::vector<double> n;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const D s = x[i];
    x[i] = s + 1e-6;
    const double up = loss(x);
    x[i] = s - 1e-6;
    const double down = loss(x);
    x[i] = s;
    n.push_back((up - down) / 2e-6);
  }
  EXPECT_LT(relative_error(a, n), 1e-3);
}

}  // namespace
}  // namespace scanpriv::nn
