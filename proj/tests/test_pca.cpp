#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>

#include "satjam/mlcore/pca.hpp"
#include "satjam/random.hpp"

using namespace satjam;
using namespace satjam::ml;

namespace {

Matrix random_matrix(std::size_t n, std::size_t d, Seed seed, const std::vector<double>& col_scale = {}) {
  Rng rng(seed);
  Matrix x(n, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) x(i, j) = rng.normal() * (col_scale.empty() ? 1.0 : col_scale[j]);
  return x;
}

// Covariance eigendecomposition computed with Eigen, descending order.
struct Oracle {
  Eigen::VectorXd values;
  Eigen::MatrixXd vectors;  // columns
};

Oracle covariance_oracle(const Matrix& x) {
  Eigen::MatrixXd m(x.rows, x.cols);
  for (std::size_t i = 0; i < x.rows; ++i)
    for (std::size_t j = 0; j < x.cols; ++j) m(i, j) = x(i, j);
  const Eigen::MatrixXd c = m.rowwise() - m.colwise().mean();
  const Eigen::MatrixXd cov = (c.transpose() * c) / static_cast<double>(x.rows - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  return {es.eigenvalues().reverse(), es.eigenvectors().rowwise().reverse()};
}

double gram_error(const PcaModel& m) {
  double err = 0.0;
  for (std::size_t i = 0; i < m.k(); ++i)
    for (std::size_t j = 0; j < m.k(); ++j) {
      const double g = dot(m.components.row(i), m.components.row(j), m.dim());
      err = std::max(err, std::fabs(g - (i == j ? 1.0 : 0.0)));
    }
  return err;
}

double recon_error(const PcaModel& m, const Matrix& x) {
  double e = 0.0;
  for (std::size_t i = 0; i < x.rows; ++i) {
    std::span<const double> xi(x.row(i), x.cols);
    const auto r = pca_reconstruct(m, pca_project(m, xi));
    for (std::size_t j = 0; j < x.cols; ++j) e += (r[j] - xi[j]) * (r[j] - xi[j]);
  }
  return e;
}

void expect_matches_oracle(const PcaModel& m, const Oracle& o, double tol) {
  for (std::size_t i = 0; i < m.k(); ++i) {
    EXPECT_NEAR(m.variance[i], o.values(static_cast<Eigen::Index>(i)), tol * std::max(1.0, o.values(0))) << i;
    double align = 0.0;
    for (std::size_t j = 0; j < m.dim(); ++j)
      align += m.components(i, j) * o.vectors(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i));
    EXPECT_NEAR(std::fabs(align), 1.0, 1e-6) << i;
  }
}

}  // namespace

TEST(Jacobi, SmallSymmetric) {
  Matrix a(2, 2);
  a(0, 0) = 2;
  a(0, 1) = a(1, 0) = 1;
  a(1, 1) = 2;
  const auto e = jacobi_eigen(a);
  EXPECT_NEAR(e.values[0], 3.0, 1e-14);
  EXPECT_NEAR(e.values[1], 1.0, 1e-14);
  EXPECT_NEAR(std::fabs(e.vectors(0, 0)), std::sqrt(0.5), 1e-14);
}

TEST(Pca, PointsOnALine) {
  Matrix x(20, 3);
  const double dir[3] = {1.0 / 3, 2.0 / 3, 2.0 / 3};
  for (std::size_t i = 0; i < 20; ++i)
    for (std::size_t j = 0; j < 3; ++j) x(i, j) = 1.0 + (static_cast<double>(i) - 7.0) * dir[j];
  const auto m = pca_fit(x, 1);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(m.components(0, j), dir[j], 1e-10);
  EXPECT_NEAR(explained_variance_ratio(m), 1.0, 1e-12);
}

TEST(Pca, IsotropicFullRankReconstruction) {
  const auto x = random_matrix(200, 2, 5);
  const auto m = pca_fit(x, 2);
  EXPECT_LT(recon_error(m, x), 1e-20 + 1e-18 * 200);
}

TEST(Pca, MatchesCovarianceOracle50x10) {
  const auto x = random_matrix(50, 10, 11, {3, 2.5, 2, 1.7, 1.5, 1.2, 1, 0.8, 0.5, 0.3});
  const auto m = pca_fit(x, 10);
  const auto o = covariance_oracle(x);
  for (std::size_t i = 0; i < 10; ++i) EXPECT_NEAR(m.variance[i], o.values(static_cast<Eigen::Index>(i)), 1e-8);
  expect_matches_oracle(m, o, 1e-8);
  EXPECT_LE(gram_error(m), 1e-8);
}

TEST(Pca, GramRouteMatchesOracle) {
  // D above the direct limit, few samples.
  std::vector<double> scale(1100);
  for (std::size_t j = 0; j < scale.size(); ++j) scale[j] = 1.0 + 4.0 * std::exp(-static_cast<double>(j) / 50.0);
  const auto x = random_matrix(60, 1100, 12, scale);
  const auto m = pca_fit(x, 8);
  expect_matches_oracle(m, covariance_oracle(x), 1e-8);
  EXPECT_LE(gram_error(m), 1e-8);
}

TEST(Pca, SubspaceIterationMatchesOracle) {
  // Both n and D above the exact limit; a few dominant directions.
  const std::size_t n = 1100, d = 1030;
  auto x = random_matrix(n, d, 13);
  Rng rng(14);
  for (std::size_t c = 0; c < 4; ++c) {
    std::vector<double> v(d);
    for (auto& e : v) e = rng.normal();
    for (std::size_t i = 0; i < n; ++i) {
      const double a = (8.0 - 1.5 * static_cast<double>(c)) * rng.normal();
      axpy(a, v.data(), x.row(i), d);
    }
  }
  const auto m = pca_fit(x, 4);
  expect_matches_oracle(m, covariance_oracle(x), 1e-7);
  EXPECT_LE(gram_error(m), 1e-8);
}

TEST(Pca, ReconstructionNonIncreasingInK) {
  const auto x = random_matrix(40, 8, 21, {2, 1.8, 1.5, 1.2, 1, 0.7, 0.5, 0.2});
  double prev = std::numeric_limits<double>::infinity();
  for (std::size_t k = 1; k <= 8; ++k) {
    const double e = recon_error(pca_fit(x, k), x);
    EXPECT_LE(e, prev * (1 + 1e-12)) << k;
    prev = e;
  }
}

TEST(Pca, SignConvention) {
  const auto m = pca_fit(random_matrix(30, 6, 3), 3);
  for (std::size_t i = 0; i < 3; ++i) {
    std::size_t arg = 0;
    for (std::size_t j = 1; j < 6; ++j)
      if (std::fabs(m.components(i, j)) > std::fabs(m.components(i, arg))) arg = j;
    EXPECT_GT(m.components(i, arg), 0.0);
  }
}

TEST(Pca, Errors) {
  const auto x = random_matrix(5, 4, 1);
  EXPECT_THROW(pca_fit(x, 0), DomainError);
  EXPECT_THROW(pca_fit(x, 5), DomainError);
  EXPECT_THROW(pca_fit(random_matrix(3, 4, 1), 3), DomainError);
  const auto m = pca_fit(x, 2);
  EXPECT_THROW(pca_project(m, std::vector<double>(3)), ShapeError);
}
