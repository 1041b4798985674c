#pragma once

// Principal component analysis. Small problems are solved exactly with a
// cyclic Jacobi eigensolver on the covariance (or Gram) matrix; large ones with
// seeded subspace iteration and a Rayleigh-Ritz step.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "satjam/errors.hpp"
#include "satjam/mlcore/tensor.hpp"
#include "satjam/random.hpp"

namespace satjam::ml {

// Row-major dense matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  double* row(std::size_t r) { return data.data() + r * cols; }
  const double* row(std::size_t r) const { return data.data() + r * cols; }
};

struct EigenPairs {
  std::vector<double> values;  // descending
  Matrix vectors;              // column i pairs with values[i]
};

// Cyclic Jacobi rotations on a symmetric matrix.
inline EigenPairs jacobi_eigen(Matrix a, int max_sweeps = 100) {
  if (a.rows != a.cols) throw ShapeError("jacobi_eigen: matrix must be square");
  const std::size_t n = a.rows;
  Matrix v(n, n);
  for (std::size_t i = 0; i < n; ++i) v(i, i) = 1.0;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0, diag = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      diag += a(i, i) * a(i, i);
      for (std::size_t j = i + 1; j < n; ++j) off += a(i, j) * a(i, j);
    }
    if (off <= 1e-30 * std::max(diag, 1e-300)) break;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (std::abs(apq) < 1e-300) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto i, auto j) { return a(i, i) > a(j, j); });
  EigenPairs out{std::vector<double>(n), Matrix(n, n)};
  for (std::size_t i = 0; i < n; ++i) {
    out.values[i] = a(order[i], order[i]);
    for (std::size_t k = 0; k < n; ++k) out.vectors(k, i) = v(k, order[i]);
  }
  return out;
}

struct PcaModel {
  std::vector<double> mean;      // D
  Matrix components;             // k x D, orthonormal rows, descending variance
  std::vector<double> variance;  // k, variance along each component
  double total_variance = 0.0;

  std::size_t k() const { return components.rows; }
  std::size_t dim() const { return components.cols; }
};

namespace detail {

// Modified Gram-Schmidt over rows, applied twice for orthogonality to
// rounding level. Rows that collapse are replaced by the next canonical basis
// vector that survives orthogonalization.
inline void orthonormalize_rows(Matrix& m) {
  std::size_t canon = 0;
  for (std::size_t i = 0; i < m.rows; ++i) {
    for (int attempt = 0;; ++attempt) {
      double* ri = m.row(i);
      for (int pass = 0; pass < 2; ++pass)
        for (std::size_t j = 0; j < i; ++j) {
          const double d = dot(ri, m.row(j), m.cols);
          axpy(-d, m.row(j), ri, m.cols);
        }
      const double nrm = std::sqrt(dot(ri, ri, m.cols));
      if (nrm > 1e-10) {
        for (std::size_t c = 0; c < m.cols; ++c) ri[c] /= nrm;
        break;
      }
      if (canon >= m.cols) throw DomainError("pca: cannot complete an orthonormal basis");
      std::fill(ri, ri + m.cols, 0.0);
      ri[canon++] = 1.0;
      (void)attempt;
    }
  }
}

// Largest-magnitude entry of each row made positive.
inline void fix_signs(Matrix& m) {
  for (std::size_t i = 0; i < m.rows; ++i) {
    double* r = m.row(i);
    std::size_t best = 0;
    for (std::size_t c = 1; c < m.cols; ++c)
      if (std::abs(r[c]) > std::abs(r[best])) best = c;
    if (r[best] < 0)
      for (std::size_t c = 0; c < m.cols; ++c) r[c] = -r[c];
  }
}

// out (p x D) = Cov * basis rowwise, Cov = Xcᵀ Xc / (n-1), never formed.
inline Matrix apply_covariance(const Matrix& xc, const Matrix& basis) {
  const std::size_t n = xc.rows, d = xc.cols, p = basis.rows;
  Matrix proj(n, p);
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t j = 0; j < p; ++j) proj(s, j) = dot(xc.row(s), basis.row(j), d);
  Matrix out(p, d);
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t j = 0; j < p; ++j) axpy(proj(s, j) / static_cast<double>(n - 1), xc.row(s), out.row(j), d);
  return out;
}

}  // namespace detail

inline constexpr std::size_t kPcaExactLimit = 1024;

// x: n samples x D features.
inline PcaModel pca_fit(const Matrix& x, std::size_t k, Seed seed = 0x9ca) {
  const std::size_t n = x.rows, d = x.cols;
  if (k == 0 || k > d) throw DomainError("pca_fit: k=" + std::to_string(k) + " must be in [1, " + std::to_string(d) + "]");
  if (n <= k) throw DomainError("pca_fit: need more samples than components");

  PcaModel model;
  model.mean.assign(d, 0.0);
  for (std::size_t s = 0; s < n; ++s) axpy(1.0, x.row(s), model.mean.data(), d);
  for (auto& m : model.mean) m /= static_cast<double>(n);
  Matrix xc = x;
  for (std::size_t s = 0; s < n; ++s) axpy(-1.0, model.mean.data(), xc.row(s), d);
  for (double v : xc.data) model.total_variance += v * v;
  model.total_variance /= static_cast<double>(n - 1);

  Matrix comps(k, d);
  if (d <= kPcaExactLimit) {
    Matrix cov(d, d);
    for (std::size_t s = 0; s < n; ++s) {
      const double* r = xc.row(s);
      for (std::size_t i = 0; i < d; ++i) axpy(r[i], r, cov.row(i), d);
    }
    for (auto& v : cov.data) v /= static_cast<double>(n - 1);
    const auto eig = jacobi_eigen(std::move(cov));
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t c = 0; c < d; ++c) comps(i, c) = eig.vectors(c, i);
  } else if (n <= kPcaExactLimit) {
    // Gram route: eigenvectors u of Xc Xcᵀ map to components Xcᵀ u.
    Matrix gram(n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i; j < n; ++j) gram(i, j) = gram(j, i) = dot(xc.row(i), xc.row(j), d);
    const auto eig = jacobi_eigen(std::move(gram));
    for (std::size_t i = 0; i < k; ++i) {
      double* ci = comps.row(i);
      if (eig.values[i] > 1e-12 * std::max(eig.values[0], 1e-300))
        for (std::size_t s = 0; s < n; ++s) axpy(eig.vectors(s, i), xc.row(s), ci, d);
    }
  } else {
    const std::size_t p = std::min(d, k + 10);
    Matrix basis(p, d);
    Rng rng(seed);
    for (auto& v : basis.data) v = rng.normal();
    detail::orthonormalize_rows(basis);
    std::vector<double> prev(k, 0.0);
    for (int it = 0; it < 300; ++it) {
      basis = detail::apply_covariance(xc, basis);
      detail::orthonormalize_rows(basis);
      const Matrix cb = detail::apply_covariance(xc, basis);
      Matrix small(p, p);
      for (std::size_t i = 0; i < p; ++i)
        for (std::size_t j = 0; j < p; ++j) small(i, j) = dot(basis.row(i), cb.row(j), d);
      for (std::size_t i = 0; i < p; ++i)
        for (std::size_t j = i + 1; j < p; ++j) small(i, j) = small(j, i) = 0.5 * (small(i, j) + small(j, i));
      const auto eig = jacobi_eigen(std::move(small));
      Matrix rotated(p, d);
      for (std::size_t i = 0; i < p; ++i)
        for (std::size_t j = 0; j < p; ++j) axpy(eig.vectors(j, i), basis.row(j), rotated.row(i), d);
      basis = std::move(rotated);
      double change = 0.0;
      for (std::size_t i = 0; i < k; ++i) {
        change = std::max(change, std::abs(eig.values[i] - prev[i]) / std::max(std::abs(eig.values[i]), 1e-300));
        prev[i] = eig.values[i];
      }
      if (it > 2 && change < 1e-12) break;
    }
    for (std::size_t i = 0; i < k; ++i) std::copy(basis.row(i), basis.row(i) + d, comps.row(i));
  }
  detail::orthonormalize_rows(comps);
  detail::fix_signs(comps);

  // Variance along each component, then order by it.
  std::vector<double> var(k, 0.0);
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t i = 0; i < k; ++i) {
      const double z = dot(xc.row(s), comps.row(i), d);
      var[i] += z * z;
    }
  for (auto& v : var) v /= static_cast<double>(n - 1);
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return var[a] > var[b]; });
  model.components = Matrix(k, d);
  model.variance.resize(k);
  for (std::size_t i = 0; i < k; ++i) {
    std::copy(comps.row(order[i]), comps.row(order[i]) + d, model.components.row(i));
    model.variance[i] = var[order[i]];
  }
  return model;
}

inline std::vector<double> pca_project(const PcaModel& model, std::span<const double> x) {
  if (x.size() != model.dim()) throw ShapeError("pca_project: feature dimension mismatch");
  std::vector<double> centered(x.begin(), x.end());
  axpy(-1.0, model.mean.data(), centered.data(), centered.size());
  std::vector<double> z(model.k());
  for (std::size_t i = 0; i < model.k(); ++i) z[i] = dot(centered.data(), model.components.row(i), centered.size());
  return z;
}

inline std::vector<double> pca_reconstruct(const PcaModel& model, std::span<const double> z) {
  if (z.size() != model.k()) throw ShapeError("pca_reconstruct: code length mismatch");
  std::vector<double> x = model.mean;
  for (std::size_t i = 0; i < model.k(); ++i) axpy(z[i], model.components.row(i), x.data(), x.size());
  return x;
}

inline double explained_variance_ratio(const PcaModel& model) {
  if (model.total_variance <= 0.0) return 1.0;
  return std::accumulate(model.variance.begin(), model.variance.end(), 0.0) / model.total_variance;
}

}  // namespace satjam::ml
