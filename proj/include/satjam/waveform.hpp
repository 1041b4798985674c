#pragma once

// Conceptual telemetry/telecommand waveform: M frames of Q BPSK-OFDM symbols
// with comb-type pilots, null carriers on both band edges and a cyclic prefix.

#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "satjam/errors.hpp"
#include "satjam/fft.hpp"
#include "satjam/random.hpp"

namespace satjam {

using cplx = std::complex<double>;

enum class Modulation { Bpsk };

struct WaveformConfig {
  std::size_t n_subcarriers = 1024;
  std::size_t n_occupied = 705;
  std::size_t pilot_interval = 8;
  std::size_t pilot_phase = 4;
  std::size_t n_pilots = 88;
  std::size_t guard_len = 64;
  std::size_t symbols_per_frame = 60;
  std::size_t frames_per_sample = 10;
  Modulation modulation = Modulation::Bpsk;

  std::size_t n_symbols() const { return symbols_per_frame * frames_per_sample; }
  std::size_t symbol_len() const { return n_subcarriers + guard_len; }
  std::size_t sample_len() const { return n_symbols() * symbol_len(); }

  // Null carriers split across the band edges; the left side takes the odd one.
  std::size_t left_nulls() const { return (n_subcarriers - n_occupied + 1) / 2; }
  std::size_t right_nulls() const { return n_subcarriers - n_occupied - left_nulls(); }

  // DFT bin of occupied subcarrier k.
  std::size_t bin_of(std::size_t k) const { return left_nulls() + k; }

  bool is_pilot(std::size_t k) const { return k % pilot_interval == pilot_phase; }

  std::size_t count_pilots() const {
    std::size_t n = 0;
    for (std::size_t k = 0; k < n_occupied; ++k) n += is_pilot(k) ? 1 : 0;
    return n;
  }

  void validate() const {
    if (n_subcarriers == 0 || symbols_per_frame == 0 || frames_per_sample == 0)
      throw ConfigError("waveform: subcarrier, symbol and frame counts must be positive");
    if (n_occupied == 0 || n_occupied > n_subcarriers)
      throw ConfigError("waveform: n_occupied must be in [1, n_subcarriers]");
    if (guard_len >= n_subcarriers) throw ConfigError("waveform: guard_len must be < n_subcarriers");
    if (pilot_interval == 0 || pilot_phase >= pilot_interval)
      throw ConfigError("waveform: pilot_phase must be < pilot_interval");
    if (count_pilots() != n_pilots)
      throw ConfigError("waveform: n_pilots=" + std::to_string(n_pilots) + " but the comb places " +
                        std::to_string(count_pilots()) + " pilots in the occupied band");
  }
};

// Frequency-domain resource grid, units indexed [frame][symbol][bin].
class FrameGrid {
 public:
  FrameGrid() = default;

  explicit FrameGrid(const WaveformConfig& cfg)
      : layout_(cfg),
        units_(cfg.frames_per_sample * cfg.symbols_per_frame * cfg.n_subcarriers),
        pilot_mask_(cfg.n_occupied) {
    for (std::size_t k = 0; k < cfg.n_occupied; ++k) pilot_mask_[k] = cfg.is_pilot(k) ? 1 : 0;
  }

  const WaveformConfig& layout() const { return layout_; }
  std::size_t n_frames() const { return layout_.frames_per_sample; }
  std::size_t n_symbols() const { return layout_.n_symbols(); }
  std::size_t n_bins() const { return layout_.n_subcarriers; }

  cplx& at(std::size_t frame, std::size_t symbol, std::size_t bin) {
    return units_[(frame * layout_.symbols_per_frame + symbol) * layout_.n_subcarriers + bin];
  }
  const cplx& at(std::size_t frame, std::size_t symbol, std::size_t bin) const {
    return units_[(frame * layout_.symbols_per_frame + symbol) * layout_.n_subcarriers + bin];
  }

  // Symbol s counted across the whole sample (frame-major).
  std::span<cplx> symbol(std::size_t s) {
    return {units_.data() + s * layout_.n_subcarriers, layout_.n_subcarriers};
  }
  std::span<const cplx> symbol(std::size_t s) const {
    return {units_.data() + s * layout_.n_subcarriers, layout_.n_subcarriers};
  }

  // Occupied-subcarrier view: RE (s, k) with k in [0, n_occupied).
  cplx& re(std::size_t s, std::size_t k) { return symbol(s)[layout_.bin_of(k)]; }
  const cplx& re(std::size_t s, std::size_t k) const { return symbol(s)[layout_.bin_of(k)]; }

  std::span<cplx> units() { return units_; }
  std::span<const cplx> units() const { return units_; }

  const std::vector<std::uint8_t>& pilot_mask() const { return pilot_mask_; }

  // Mean |unit|^2 over occupied resource elements.
  double occupied_power() const {
    double acc = 0.0;
    for (std::size_t s = 0; s < n_symbols(); ++s)
      for (std::size_t k = 0; k < layout_.n_occupied; ++k) acc += std::norm(re(s, k));
    return acc / static_cast<double>(n_symbols() * layout_.n_occupied);
  }

  bool same_shape(const FrameGrid& other) const {
    return layout_.n_subcarriers == other.layout_.n_subcarriers &&
           layout_.symbols_per_frame == other.layout_.symbols_per_frame &&
           layout_.frames_per_sample == other.layout_.frames_per_sample &&
           layout_.n_occupied == other.layout_.n_occupied;
  }

 private:
  WaveformConfig layout_;
  std::vector<cplx> units_;
  std::vector<std::uint8_t> pilot_mask_;
};

struct TimeSignal {
  std::vector<cplx> samples;

  std::size_t sample_len() const { return samples.size(); }
};

// Pilots (all +1) at k ≡ pilot_phase (mod pilot_interval), seeded BPSK data
// elsewhere in the occupied band, zeros on the null carriers.
inline FrameGrid build_grid(const WaveformConfig& cfg, Seed seed) {
  cfg.validate();
  FrameGrid grid(cfg);
  Rng rng(seed);
  for (std::size_t s = 0; s < cfg.n_symbols(); ++s) {
    for (std::size_t k = 0; k < cfg.n_occupied; ++k) {
      grid.re(s, k) = cfg.is_pilot(k) ? cplx(1.0, 0.0) : cplx(rng.bit() ? 1.0 : -1.0, 0.0);
    }
  }
  return grid;
}

// Unitary inverse DFT per symbol, then a cyclic prefix copied from the tail.
inline TimeSignal ofdm_modulate(const FrameGrid& grid) {
  const auto& cfg = grid.layout();
  const std::size_t n = cfg.n_subcarriers;
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  TimeSignal sig;
  sig.samples.resize(cfg.sample_len());
  std::vector<cplx> body(n);
  for (std::size_t s = 0; s < cfg.n_symbols(); ++s) {
    dft(grid.symbol(s), body, FftDirection::Inverse);
    cplx* dst = sig.samples.data() + s * cfg.symbol_len();
    for (std::size_t i = 0; i < cfg.guard_len; ++i) dst[i] = body[n - cfg.guard_len + i] * scale;
    for (std::size_t i = 0; i < n; ++i) dst[cfg.guard_len + i] = body[i] * scale;
  }
  return sig;
}

// Strips the cyclic prefixes and applies the unitary forward DFT per symbol.
inline FrameGrid demodulate_grid(const TimeSignal& sig, const WaveformConfig& cfg) {
  cfg.validate();
  if (sig.samples.size() != cfg.sample_len())
    throw ShapeError("demodulate_grid: signal has " + std::to_string(sig.samples.size()) +
                     " samples, layout expects " + std::to_string(cfg.sample_len()));
  const std::size_t n = cfg.n_subcarriers;
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  FrameGrid grid(cfg);
  for (std::size_t s = 0; s < cfg.n_symbols(); ++s) {
    std::span<const cplx> body(sig.samples.data() + s * cfg.symbol_len() + cfg.guard_len, n);
    auto out = grid.symbol(s);
    dft(body, out, FftDirection::Forward);
    for (auto& v : out) v *= scale;
  }
  return grid;
}

}  // namespace satjam
