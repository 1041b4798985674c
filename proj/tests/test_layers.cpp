#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <memory>

#include "satjam/mlcore/layers.hpp"
#include "satjam/mlcore/network.hpp"

using namespace satjam;
using namespace satjam::ml;

namespace {

using T = double;

Tensor<T> random_tensor(const Shape& s, Rng& rng, double scale = 1.0) {
  Tensor<T> t(s);
  for (auto& v : t.values()) v = scale * rng.normal();
  return t;
}

// ||a - n|| / (||a|| + ||n||), the usual gradient-check ratio; falls back to
// the absolute difference when both gradients vanish (bias ahead of BN).
double rel_error(const std::vector<T>& a, const std::vector<T>& n) {
  double d = 0.0, sa = 0.0, sn = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    d += (a[i] - n[i]) * (a[i] - n[i]);
    sa += a[i] * a[i];
    sn += n[i] * n[i];
  }
  const double denom = std::sqrt(sa) + std::sqrt(sn);
  return denom < 1e-8 ? std::sqrt(d) : std::sqrt(d) / denom;
}

// Checks dL/dx and every parameter gradient of `layer` for L = sum(r * f(x)).
void gradcheck(Layer<T>& layer, Tensor<T> x, Mode mode = Mode::Train, double h = 1e-5) {
  Rng rng(99);
  const auto y0 = layer.forward(x, mode);
  const auto r = random_tensor(y0.shape(), rng);
  auto loss = [&](const Tensor<T>& in) {
    const auto y = layer.forward(in, mode);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += r[i] * y[i];
    return s;
  };
  for (auto* p : layer.params()) p->grad.fill(0.0);
  layer.forward(x, mode);
  const auto dx = layer.backward(r);

  std::vector<T> num(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const T keep = x[i];
    x[i] = keep + h;
    const double lp = loss(x);
    x[i] = keep - h;
    const double lm = loss(x);
    x[i] = keep;
    num[i] = (lp - lm) / (2 * h);
  }
  EXPECT_LE(rel_error(dx.values(), num), 1e-6) << layer.kind() << " input";

  for (auto* p : layer.params()) {
    std::vector<T> pn(p->value.size());
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const T keep = p->value[i];
      p->value[i] = keep + h;
      const double lp = loss(x);
      p->value[i] = keep - h;
      const double lm = loss(x);
      p->value[i] = keep;
      pn[i] = (lp - lm) / (2 * h);
    }
    EXPECT_LE(rel_error(p->grad.values(), pn), 1e-6) << layer.kind() << " " << p->name;
  }
}

}  // namespace

TEST(GradCheck, Conv2d) {
  Rng rng(1);
  Conv2d<T> conv(2, 3, 3);
  conv.init(rng);
  for (auto& b : conv.bias().value.values()) b = rng.normal();
  gradcheck(conv, random_tensor({2, 2, 5, 6}, rng));
}

TEST(GradCheck, BatchNormConvInput) {
  Rng rng(2);
  BatchNorm<T> bn(3);
  for (auto& g : bn.gamma().value.values()) g = 0.5 + rng.uniform();
  for (auto& b : bn.beta().value.values()) b = rng.normal();
  gradcheck(bn, random_tensor({3, 3, 4, 4}, rng));
}

TEST(GradCheck, BatchNormFlatInput) {
  Rng rng(3);
  BatchNorm<T> bn(5);
  gradcheck(bn, random_tensor({4, 5}, rng));
}

TEST(GradCheck, BatchNormInference) {
  Rng rng(4);
  BatchNorm<T> bn(2);
  bn.forward(random_tensor({6, 2, 3, 3}, rng, 2.0), Mode::Train);
  gradcheck(bn, random_tensor({2, 2, 3, 3}, rng), Mode::Infer);
}

TEST(GradCheck, Relu) {
  Rng rng(5);
  Relu<T> relu;
  auto x = random_tensor({2, 3, 4, 4}, rng);
  for (auto& v : x.values())
    if (std::fabs(v) < 1e-3) v = 0.1;
  gradcheck(relu, x);
}

TEST(GradCheck, MaxPool) {
  Rng rng(6);
  MaxPool2d<T> pool(2);
  gradcheck(pool, random_tensor({2, 2, 6, 6}, rng));
}

TEST(GradCheck, DropoutFrozenMask) {
  Rng rng(7);
  Dropout<T> drop(0.5, 11);
  drop.freeze_mask(true);
  gradcheck(drop, random_tensor({3, 12}, rng));
}

TEST(GradCheck, Flatten) {
  Rng rng(8);
  Flatten<T> f;
  gradcheck(f, random_tensor({2, 2, 3, 3}, rng));
}

TEST(GradCheck, Dense) {
  Rng rng(9);
  Dense<T> d(6, 4);
  d.init(rng);
  for (auto& b : d.bias().value.values()) b = rng.normal();
  gradcheck(d, random_tensor({3, 6}, rng));
}

TEST(GradCheck, SoftmaxCrossEntropy) {
  Rng rng(10);
  auto z = random_tensor({4, 3}, rng);
  const std::vector<std::uint8_t> labels{0, 2, 1, 1};
  const auto ce = softmax_ce<T>(z, labels);
  const double h = 1e-5;
  std::vector<T> num(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    const T keep = z[i];
    z[i] = keep + h;
    const double lp = softmax_ce<T>(z, labels).loss;
    z[i] = keep - h;
    const double lm = softmax_ce<T>(z, labels).loss;
    z[i] = keep;
    num[i] = (lp - lm) / (2 * h);
  }
  EXPECT_LE(rel_error(ce.grad_logits.values(), num), 1e-6);
}

TEST(GradCheck, SmallNetworkEndToEnd) {
  std::vector<LayerSpec> specs{LayerSpec::conv(2), LayerSpec::batchnorm(), LayerSpec::relu(), LayerSpec::maxpool(2),
                               LayerSpec::flatten(), LayerSpec::dense(3), LayerSpec::relu(), LayerSpec::dense(2)};
  Network<T> net({1, 4, 4}, specs, 5);
  net.layer(0).set_needs_input_grad(true);
  Rng rng(12);
  auto x = random_tensor({3, 1, 4, 4}, rng);
  const std::vector<std::uint8_t> labels{1, 0, 1};
  auto loss = [&](const Tensor<T>& in) { return softmax_ce<T>(net.forward(in, Mode::Train), labels).loss; };
  net.zero_grad();
  auto ce = softmax_ce<T>(net.forward(x, Mode::Train), labels);
  net.backward(ce.grad_logits);
  const double h = 1e-5;
  for (auto* p : net.params()) {
    std::vector<T> pn(p->value.size());
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const T keep = p->value[i];
      p->value[i] = keep + h;
      const double lp = loss(x);
      p->value[i] = keep - h;
      const double lm = loss(x);
      p->value[i] = keep;
      pn[i] = (lp - lm) / (2 * h);
    }
    EXPECT_LE(rel_error(p->grad.values(), pn), 1e-6) << p->name;
  }
}

TEST(BatchNorm, TrainStatisticsAndRunningUpdate) {
  BatchNorm<T> bn(1);
  Tensor<T> x({4, 1}, std::vector<T>{1, 2, 3, 4});
  const auto y = bn.forward(x, Mode::Train);
  // mean 2.5, biased var 1.25
  const double inv = 1.0 / std::sqrt(1.25 + 1e-5);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(y[i], (x[i] - 2.5) * inv, 1e-12);
  EXPECT_NEAR(bn.running_mean()[0], 0.1 * 2.5, 1e-12);
  // running variance uses the unbiased estimate 5/3
  EXPECT_NEAR(bn.running_var()[0], 0.9 * 1.0 + 0.1 * (5.0 / 3.0), 1e-12);
}

TEST(BatchNorm, SingleSampleBatchRejected) {
  BatchNorm<T> bn(2);
  EXPECT_THROW(bn.forward(Tensor<T>({1, 2}), Mode::Train), DomainError);
  EXPECT_NO_THROW(bn.forward(Tensor<T>({1, 2}), Mode::Infer));
}

TEST(Dropout, InferenceIsIdentityAndTrainKeepsExpectation) {
  Dropout<T> d(0.5, 3);
  Tensor<T> x({1, 20000}, 1.0);
  EXPECT_EQ(d.forward(x, Mode::Infer).values(), x.values());
  const auto y = d.forward(x, Mode::Train);
  double mean = 0.0;
  std::size_t zeros = 0;
  for (auto v : y.values()) {
    mean += v;
    zeros += v == 0.0;
    EXPECT_TRUE(v == 0.0 || v == 2.0);
  }
  EXPECT_NEAR(mean / 20000.0, 1.0, 0.03);
  EXPECT_NEAR(static_cast<double>(zeros) / 20000.0, 0.5, 0.015);
}

TEST(MaxPool, RoutesGradientToArgmax) {
  MaxPool2d<T> p(2);
  Tensor<T> x({1, 1, 2, 2}, std::vector<T>{1, 5, 3, 2});
  const auto y = p.forward(x, Mode::Train);
  ASSERT_EQ(y.size(), 1u);
  EXPECT_EQ(y[0], 5.0);
  const auto dx = p.backward(Tensor<T>({1, 1, 1, 1}, 2.0));
  EXPECT_EQ(dx.values(), (std::vector<T>{0, 2, 0, 0}));
}

TEST(Conv2d, SamePaddingHandExample) {
  // 3x3 all-ones kernel over a 3x3 ramp: centre sums all nine values.
  Conv2d<T> c(1, 1, 3);
  c.weight().value.fill(1.0);
  Tensor<T> x({1, 1, 3, 3}, std::vector<T>{1, 2, 3, 4, 5, 6, 7, 8, 9});
  const auto y = c.forward(x, Mode::Infer);
  EXPECT_EQ(y[4], 45.0);
  EXPECT_EQ(y[0], 1 + 2 + 4 + 5);
  EXPECT_EQ(y[8], 5 + 6 + 8 + 9);
}

TEST(Softmax, RowsSumToOneAndUniformLoss) {
  Rng rng(1);
  auto z = random_tensor({5, 2}, rng, 10.0);
  const auto p = softmax(z);
  for (std::size_t b = 0; b < 5; ++b) EXPECT_NEAR(p[2 * b] + p[2 * b + 1], 1.0, 1e-12);
  const std::vector<std::uint8_t> labels{0, 1, 0, 1, 1};
  EXPECT_GE(softmax_ce<T>(z, labels).loss, 0.0);
  EXPECT_NEAR(softmax_ce<T>(Tensor<T>({5, 2}), labels).loss, std::log(2.0), 1e-12);
  EXPECT_THROW(softmax_ce<T>(Tensor<T>({4, 2}), labels), ShapeError);
}

TEST(Glorot, BoundsAndSpread) {
  Rng rng(3);
  Tensor<float> w({100, 50});
  glorot_uniform(w, 50, 100, rng);
  const double a = std::sqrt(6.0 / 150.0);
  double mx = 0.0;
  for (float v : w.values()) mx = std::max(mx, std::fabs(double(v)));
  EXPECT_LE(mx, a);
  EXPECT_GT(mx, 0.95 * a);
}

TEST(Network, StateRoundTrip) {
  std::vector<LayerSpec> specs{LayerSpec::conv(2), LayerSpec::batchnorm(), LayerSpec::flatten(), LayerSpec::dense(2)};
  Network<float> a({1, 4, 4}, specs, 1), b({1, 4, 4}, specs, 2);
  b.load_state(a.state());
  Rng rng(1);
  Tensor<float> x({2, 1, 4, 4});
  for (auto& v : x.values()) v = static_cast<float>(rng.normal());
  EXPECT_EQ(a.forward(x, Mode::Infer).values(), b.forward(x, Mode::Infer).values());
  auto st = a.state();
  st.pop_back();
  EXPECT_THROW(b.load_state(st), ShapeError);
}
