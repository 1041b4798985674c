#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "satjam/mlcore/svm.hpp"
#include "satjam/random.hpp"

using namespace satjam;
using namespace satjam::ml;

namespace {

struct Toy {
  Matrix x;
  std::vector<int> y;
};

Toy clusters(std::size_t n, double sep, double noise, Seed seed) {
  Rng rng(seed);
  Toy t{Matrix(n, 2), std::vector<int>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    t.y[i] = i % 2 ? 1 : -1;
    t.x(i, 0) = t.y[i] * sep + noise * rng.normal();
    t.x(i, 1) = noise * rng.normal();
  }
  return t;
}

std::size_t errors(const SvmModel& m, const Toy& t) {
  std::size_t e = 0;
  for (std::size_t i = 0; i < t.x.rows; ++i) e += svm_predict(m, std::span<const double>(t.x.row(i), 2)) != t.y[i];
  return e;
}

}  // namespace

TEST(Svm, SeparableClusters) {
  const auto t = clusters(40, 2.0, 0.3, 1);
  const auto m = svm_train(t.x, t.y);
  EXPECT_EQ(errors(m, t), 0u);
  EXPECT_GT(m.w[0], 0.0);
}

TEST(Svm, ScoreOnHyperplaneIsZero) {
  const auto t = clusters(40, 2.0, 0.3, 2);
  const auto m = svm_train(t.x, t.y);
  // A point on wᵀx + b = 0 along the w direction.
  const double nn = m.w[0] * m.w[0] + m.w[1] * m.w[1];
  const std::vector<double> p{-m.b * m.w[0] / nn, -m.b * m.w[1] / nn};
  EXPECT_NEAR(svm_decide(m, p), 0.0, 1e-12);
  EXPECT_EQ(svm_predict(m, p), svm_decide(m, p) >= 0.0 ? 1 : -1);
}

TEST(Svm, NearGridSearchOracle) {
  // Overlapping 20-point set; oracle: best training error over a lattice of
  // directions and offsets.
  const auto t = clusters(20, 0.8, 0.9, 3);
  std::size_t best = t.x.rows;
  for (int a = 0; a < 360; ++a) {
    const double th = a * std::numbers::pi / 180.0;
    for (int bi = -60; bi <= 60; ++bi) {
      const double b = bi * 0.05;
      std::size_t e = 0;
      for (std::size_t i = 0; i < t.x.rows; ++i) {
        const double s = std::cos(th) * t.x(i, 0) + std::sin(th) * t.x(i, 1) + b;
        e += (s >= 0 ? 1 : -1) != t.y[i];
      }
      best = std::min(best, e);
    }
  }
  const auto m = svm_train(t.x, t.y);
  EXPECT_LE(errors(m, t), best + 1);
}

TEST(Svm, ConsistentRescalingKeepsLabels) {
  const auto t = clusters(60, 1.0, 0.7, 4);
  const auto base = svm_train(t.x, t.y, {1.0, 200, 9});
  for (double alpha : {0.5, 3.0}) {
    Toy s = t;
    for (auto& v : s.x.data) v *= alpha;
    // lambda scales with alpha^2, so C scales with 1/alpha^2.
    const auto m = svm_train(s.x, s.y, {1.0 / (alpha * alpha), 200, 9});
    for (std::size_t i = 0; i < t.x.rows; ++i)
      EXPECT_EQ(svm_predict(m, std::span<const double>(s.x.row(i), 2)),
                svm_predict(base, std::span<const double>(t.x.row(i), 2)))
          << alpha << " " << i;
  }
}

TEST(Svm, Deterministic) {
  const auto t = clusters(50, 1.0, 0.8, 5);
  const auto a = svm_train(t.x, t.y), b = svm_train(t.x, t.y);
  EXPECT_EQ(a.w, b.w);
  EXPECT_EQ(a.b, b.b);
}

TEST(Svm, Errors) {
  auto t = clusters(10, 1.0, 0.1, 6);
  std::vector<int> one(10, 1);
  EXPECT_THROW(svm_train(t.x, one), TrainingError);
  std::vector<int> bad = t.y;
  bad[0] = 0;
  EXPECT_THROW(svm_train(t.x, bad), DomainError);
  EXPECT_THROW(svm_train(t.x, std::vector<int>(3, 1)), ShapeError);
  const auto m = svm_train(t.x, t.y);
  EXPECT_THROW(svm_decide(m, std::vector<double>(3)), ShapeError);
}
