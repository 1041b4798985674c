#include <gtest/gtest.h>

#include <cmath>

#include "satjam/mlcore/adam.hpp"

using namespace satjam::ml;

TEST(Adam, FirstStepClosedForm) {
  // Bias correction makes the first step -lr * g / (|g| + eps).
  std::vector<double> p{1.0, -2.0, 0.5, 3.0};
  const std::vector<double> g{0.3, -4.0, 1e-3, 0.0};
  AdamState s({1e-4, 0.9, 0.999, 1e-8});
  adam_step<double>(p, g, s);
  const std::vector<double> p0{1.0, -2.0, 0.5, 3.0};
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double want = p0[i] - 1e-4 * g[i] / (std::fabs(g[i]) + 1e-8);
    EXPECT_NEAR(p[i], want, 1e-12) << i;
  }
  EXPECT_EQ(p[3], 3.0);
}

TEST(Adam, TwoStepsByHand) {
  std::vector<double> p{0.0};
  AdamState s({0.01, 0.9, 0.999, 1e-8});
  adam_step<double>(p, std::vector<double>{1.0}, s);
  adam_step<double>(p, std::vector<double>{-2.0}, s);
  const double m1 = 0.1, v1 = 0.001;
  const double p1 = -0.01 * (m1 / 0.1) / (std::sqrt(v1 / 0.001) + 1e-8);
  const double m2 = 0.9 * m1 + 0.1 * -2.0, v2 = 0.999 * v1 + 0.001 * 4.0;
  const double mh = m2 / (1 - 0.81), vh = v2 / (1 - 0.999 * 0.999);
  EXPECT_NEAR(p[0], p1 - 0.01 * mh / (std::sqrt(vh) + 1e-8), 1e-12);
}

TEST(Adam, ZeroGradientLeavesParameters) {
  std::vector<float> p{1.5f, -0.25f};
  AdamState s;
  for (int i = 0; i < 5; ++i) adam_step<float>(p, std::vector<float>{0.0f, 0.0f}, s);
  EXPECT_EQ(p[0], 1.5f);
  EXPECT_EQ(p[1], -0.25f);
}

TEST(Adam, Errors) {
  AdamState s;
  const std::size_t n = 2;
  s.reset(std::span<const std::size_t>(&n, 1));
  std::vector<double> p(2), g(3);
  adam_begin_step(s);
  EXPECT_THROW(adam_update<double>(p, g, s, 0), satjam::ShapeError);
  EXPECT_THROW(adam_update<double>(p, std::vector<double>(2), s, 1), satjam::ShapeError);
  AdamState fresh;
  fresh.reset(std::span<const std::size_t>(&n, 1));
  EXPECT_THROW(adam_update<double>(p, std::vector<double>(2), fresh, 0), satjam::DomainError);
}

TEST(Adam, MinimizesQuadratic) {
  std::vector<double> p{5.0, -3.0};
  AdamState s({0.05, 0.9, 0.999, 1e-8});
  for (int i = 0; i < 2000; ++i) {
    std::vector<double> g{2 * (p[0] - 1.0), 2 * (p[1] + 2.0)};
    adam_step<double>(p, g, s);
  }
  EXPECT_NEAR(p[0], 1.0, 1e-3);
  EXPECT_NEAR(p[1], -2.0, 1e-3);
}
