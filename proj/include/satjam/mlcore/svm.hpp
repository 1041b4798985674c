#pragma once

// Linear soft-margin SVM trained in the primal,
//   min_w,b  (1/2)|w|^2 + C * sum_p max(0, 1 - y_p (wᵀx_p + b)),
// by epoch-based stochastic subgradient descent (Pegasos schedule, step
// 1/(λt) with λ = 1/(C·P)). The bias is carried as an extra weight on a
// constant unit feature. The returned parameters are the average of the
// iterates over the second half of training.

#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "satjam/errors.hpp"
#include "satjam/mlcore/pca.hpp"
#include "satjam/mlcore/tensor.hpp"
#include "satjam/random.hpp"

namespace satjam::ml {

enum class SvmKernel { Linear };

struct SvmConfig {
  double c = 1.0;
  std::size_t epochs = 200;
  Seed seed = 0x5e1;
};

struct SvmModel {
  std::vector<double> w;
  double b = 0.0;
  double c_param = 1.0;
  SvmKernel kernel = SvmKernel::Linear;
};

// Decision score wᵀx + b.
inline double svm_decide(const SvmModel& m, std::span<const double> x) {
  if (x.size() != m.w.size()) throw ShapeError("svm_decide: feature dimension mismatch");
  return dot(m.w.data(), x.data(), x.size()) + m.b;
}

// +1 / -1; points exactly on the hyperplane map to +1.
inline int svm_predict(const SvmModel& m, std::span<const double> x) { return svm_decide(m, x) >= 0.0 ? 1 : -1; }

// x: P samples x d features, y in {-1, +1}.
inline SvmModel svm_train(const Matrix& x, std::span<const int> y, const SvmConfig& cfg = {}) {
  const std::size_t n = x.rows, d = x.cols;
  if (y.size() != n) throw ShapeError("svm_train: label count differs from sample count");
  if (n == 0) throw TrainingError("svm_train: empty training set");
  if (!(cfg.c > 0.0) || cfg.epochs == 0) throw ConfigError("svm_train: C and epochs must be positive");
  bool pos = false, neg = false;
  for (int v : y) {
    if (v == 1) pos = true;
    else if (v == -1) neg = true;
    else throw DomainError("svm_train: labels must be -1 or +1");
  }
  if (!pos || !neg) throw TrainingError("svm_train: both classes must be present");

  const double lambda = 1.0 / (cfg.c * static_cast<double>(n));
  std::vector<double> w(d + 1, 0.0);  // last entry: bias weight
  std::vector<double> avg(d + 1, 0.0);
  std::size_t n_avg = 0;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(cfg.seed);
  // w is stored as scale * v so the shrink step is O(1).
  double scale = 1.0;
  std::uint64_t t = 0;
  const std::size_t avg_from = cfg.epochs / 2;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    for (std::size_t idx : order) {
      ++t;
      const double eta = 1.0 / (lambda * static_cast<double>(t));
      const double* xi = x.row(idx);
      const double yi = static_cast<double>(y[idx]);
      const double margin = yi * scale * (dot(w.data(), xi, d) + w[d]);
      const double shrink = 1.0 - eta * lambda;
      if (shrink <= 0.0) {
        std::fill(w.begin(), w.end(), 0.0);
        scale = 1.0;
      } else {
        scale *= shrink;
      }
      if (margin < 1.0) {
        const double step = eta * yi / scale;
        axpy(step, xi, w.data(), d);
        w[d] += step;
      }
      if (scale < 1e-9) {
        for (auto& v : w) v *= scale;
        scale = 1.0;
      }
      if (epoch >= avg_from) {
        axpy(scale, w.data(), avg.data(), d + 1);
        ++n_avg;
      }
    }
  }
  SvmModel m;
  m.c_param = cfg.c;
  m.w.assign(avg.begin(), avg.begin() + static_cast<std::ptrdiff_t>(d));
  for (auto& v : m.w) v /= static_cast<double>(n_avg);
  m.b = avg[d] / static_cast<double>(n_avg);
  return m;
}

}  // namespace satjam::ml
