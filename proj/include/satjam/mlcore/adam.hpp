#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "satjam/errors.hpp"

namespace satjam::ml {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam over a fixed list of parameter slots.
struct AdamState {
  AdamConfig cfg;
  std::uint64_t t = 0;
  std::vector<std::vector<double>> m, v;

  explicit AdamState(AdamConfig c = {}) : cfg(c) {}

  // Allocates moment buffers for slot sizes.
  void reset(std::span<const std::size_t> sizes) {
    t = 0;
    m.clear();
    v.clear();
    for (auto n : sizes) {
      m.emplace_back(n, 0.0);
      v.emplace_back(n, 0.0);
    }
  }
};

// Advances the step counter; call once per optimizer step, before adam_update.
inline void adam_begin_step(AdamState& s) { ++s.t; }

template <typename T>
void adam_update(std::span<T> params, std::span<const T> grads, AdamState& s, std::size_t slot) {
  if (slot >= s.m.size()) throw ShapeError("adam: unknown parameter slot");
  if (params.size() != grads.size() || params.size() != s.m[slot].size())
    throw ShapeError("adam: parameter/gradient/moment sizes differ");
  if (s.t == 0) throw DomainError("adam: adam_begin_step must precede the update");
  const double b1 = s.cfg.beta1, b2 = s.cfg.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(s.t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(s.t));
  auto& m = s.m[slot];
  auto& v = s.v[slot];
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = static_cast<double>(grads[i]);
    m[i] = b1 * m[i] + (1.0 - b1) * g;
    v[i] = b2 * v[i] + (1.0 - b2) * g * g;
    const double mhat = m[i] / c1;
    const double vhat = v[i] / c2;
    params[i] = static_cast<T>(static_cast<double>(params[i]) - s.cfg.lr * mhat / (std::sqrt(vhat) + s.cfg.eps));
  }
}

// Single-slot convenience: one full Adam step.
template <typename T>
void adam_step(std::span<T> params, std::span<const T> grads, AdamState& s) {
  if (s.m.empty()) {
    const std::size_t n = params.size();
    s.reset(std::span<const std::size_t>(&n, 1));
  }
  adam_begin_step(s);
  adam_update(params, grads, s, 0);
}

}  // namespace satjam::ml
