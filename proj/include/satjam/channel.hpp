#pragma once

// Block-fading Rician channel and AWGN, applied at resource-element level.

#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "satjam/errors.hpp"
#include "satjam/random.hpp"
#include "satjam/waveform.hpp"

namespace satjam {

// One flat gain per frame; E|gain|^2 = 1.
struct ChannelRealization {
  std::vector<cplx> gains;
  double k_factor = 5.0;

  static ChannelRealization constant(cplx gain, std::size_t n_frames) {
    return {std::vector<cplx>(n_frames, gain), std::numeric_limits<double>::infinity()};
  }
};

struct NoiseSpec {
  double snr_db = std::numeric_limits<double>::infinity();
  double sigma_n_sq = 0.0;

  static NoiseSpec from_snr(double snr_db, double signal_power = 1.0) {
    if (std::isinf(snr_db) && snr_db > 0) return {snr_db, 0.0};
    return {snr_db, signal_power / std::pow(10.0, snr_db / 10.0)};
  }
};

// gain = sqrt(K/(K+1)) e^{jθ} + sqrt(1/(K+1)) CN(0,1), θ ~ U[0, 2π).
// K = +inf yields the pure line-of-sight term.
inline ChannelRealization draw_rician(double k_factor, Seed seed, std::size_t n_frames = 1) {
  if (!(k_factor >= 0.0)) throw DomainError("draw_rician: K factor must be >= 0");
  Rng rng(seed);
  ChannelRealization ch;
  ch.k_factor = k_factor;
  ch.gains.reserve(n_frames);
  const bool los_only = std::isinf(k_factor);
  const double los_amp = los_only ? 1.0 : std::sqrt(k_factor / (k_factor + 1.0));
  const double nlos_var = los_only ? 0.0 : 1.0 / (k_factor + 1.0);
  for (std::size_t m = 0; m < n_frames; ++m) {
    const double theta = 2.0 * std::numbers::pi * rng.uniform();
    const cplx diffuse = rng.complex_normal(1.0);
    ch.gains.push_back(std::polar(los_amp, theta) + std::sqrt(nlos_var) * diffuse);
  }
  return ch;
}

inline FrameGrid apply_channel(FrameGrid grid, const ChannelRealization& ch) {
  if (ch.gains.size() != grid.n_frames())
    throw ShapeError("apply_channel: " + std::to_string(ch.gains.size()) + " gains for " +
                     std::to_string(grid.n_frames()) + " frames");
  const auto& cfg = grid.layout();
  for (std::size_t m = 0; m < grid.n_frames(); ++m)
    for (std::size_t q = 0; q < cfg.symbols_per_frame; ++q)
      for (std::size_t b = 0; b < cfg.n_subcarriers; ++b) grid.at(m, q, b) *= ch.gains[m];
  return grid;
}

// i.i.d. CN(0, σn²) on every occupied RE; null carriers stay untouched.
// σn² is referenced to the nominal unit power of an occupied RE.
inline FrameGrid add_awgn(FrameGrid grid, double snr_db, Seed seed, double signal_power = 1.0) {
  const auto noise = NoiseSpec::from_snr(snr_db, signal_power);
  if (noise.sigma_n_sq == 0.0) return grid;
  Rng rng(seed);
  const auto& cfg = grid.layout();
  for (std::size_t s = 0; s < grid.n_symbols(); ++s)
    for (std::size_t k = 0; k < cfg.n_occupied; ++k) grid.re(s, k) += rng.complex_normal(noise.sigma_n_sq);
  return grid;
}

}  // namespace satjam
