#pragma once

// STFT front-end producing the normalized 96x96 log-magnitude images the
// detectors consume.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "satjam/errors.hpp"
#include "satjam/fft.hpp"
#include "satjam/jammer.hpp"
#include "satjam/waveform.hpp"

namespace satjam {

inline constexpr std::size_t kImageSide = 96;

enum class WindowKind { Rect, Hann };

struct StftPlan {
  std::size_t nfft = 1024;
  WindowKind window = WindowKind::Rect;
  std::size_t window_len = 1024;
  std::size_t hop = 1024;

  void validate() const {
    if (hop == 0 || hop > window_len || window_len > nfft)
      throw ConfigError("stft: require 0 < hop <= window_len <= nfft");
  }

  std::vector<double> window_coefficients() const {
    std::vector<double> w(window_len, 1.0);
    if (window == WindowKind::Hann && window_len > 1)
      for (std::size_t i = 0; i < window_len; ++i)
        w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(window_len));
    return w;
  }
};

// Column-major complex matrix: column t is the spectrum of frame t.
struct ComplexMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<cplx> data;

  ComplexMatrix() = default;
  ComplexMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c) {}

  cplx& operator()(std::size_t r, std::size_t c) { return data[c * rows + r]; }
  const cplx& operator()(std::size_t r, std::size_t c) const { return data[c * rows + r]; }
};

struct ScenarioTag {
  double snr_db = std::numeric_limits<double>::infinity();
  std::optional<double> sjr_db;
  AttackKind attack = AttackKind::None;
};

struct Spectrogram {
  std::size_t rows = kImageSide;
  std::size_t cols = kImageSide;
  std::vector<float> pixels;  // row-major, rows = frequency, cols = time
  ScenarioTag meta;

  float operator()(std::size_t r, std::size_t c) const { return pixels[r * cols + c]; }
};

// Unnormalized DFT of each windowed frame (zero-padded to nfft).
inline ComplexMatrix stft(const TimeSignal& sig, const StftPlan& plan) {
  plan.validate();
  if (sig.samples.size() < plan.window_len)
    throw ShapeError("stft: signal of " + std::to_string(sig.samples.size()) + " samples is shorter than one window");
  const std::size_t n_cols = (sig.samples.size() - plan.window_len) / plan.hop + 1;
  const auto win = plan.window_coefficients();
  ComplexMatrix out(plan.nfft, n_cols);
  std::vector<cplx> frame(plan.nfft);
  for (std::size_t t = 0; t < n_cols; ++t) {
    std::fill(frame.begin(), frame.end(), cplx{});
    const cplx* seg = sig.samples.data() + t * plan.hop;
    for (std::size_t i = 0; i < plan.window_len; ++i) frame[i] = seg[i] * win[i];
    dft(frame, std::span<cplx>(out.data.data() + t * plan.nfft, plan.nfft), FftDirection::Forward);
  }
  return out;
}

namespace detail {

// Adaptive average pooling bounds: output cell i covers
// [floor(i*L/n), ceil((i+1)*L/n)).
inline std::pair<std::size_t, std::size_t> pool_bounds(std::size_t i, std::size_t in_len, std::size_t out_len) {
  const std::size_t lo = (i * in_len) / out_len;
  const std::size_t hi = ((i + 1) * in_len + out_len - 1) / out_len;
  return {lo, hi};
}

}  // namespace detail

// log10(|S|^2 + 1e-12), block-averaged to out_rows x out_cols, then min-max
// normalized to [0,1]. A flat image (max == min) maps to all zeros.
inline Spectrogram to_image(const ComplexMatrix& s, std::size_t out_rows = kImageSide,
                            std::size_t out_cols = kImageSide) {
  if (s.rows == 0 || s.cols == 0) throw ShapeError("to_image: empty STFT matrix");
  constexpr double eps = 1e-12;
  std::vector<double> logp(s.rows * s.cols);
  for (std::size_t c = 0; c < s.cols; ++c)
    for (std::size_t r = 0; r < s.rows; ++r) logp[r * s.cols + c] = std::log10(std::norm(s(r, c)) + eps);

  std::vector<double> pooled(out_rows * out_cols);
  for (std::size_t i = 0; i < out_rows; ++i) {
    const auto [r0, r1] = detail::pool_bounds(i, s.rows, out_rows);
    for (std::size_t j = 0; j < out_cols; ++j) {
      const auto [c0, c1] = detail::pool_bounds(j, s.cols, out_cols);
      double acc = 0.0;
      for (std::size_t r = r0; r < r1; ++r)
        for (std::size_t c = c0; c < c1; ++c) acc += logp[r * s.cols + c];
      pooled[i * out_cols + j] = acc / static_cast<double>((r1 - r0) * (c1 - c0));
    }
  }

  const auto [mn_it, mx_it] = std::minmax_element(pooled.begin(), pooled.end());
  const double mn = *mn_it;
  const double range = *mx_it - mn;
  Spectrogram img;
  img.rows = out_rows;
  img.cols = out_cols;
  img.pixels.resize(pooled.size());
  for (std::size_t i = 0; i < pooled.size(); ++i)
    img.pixels[i] = range > 0.0 ? static_cast<float>((pooled[i] - mn) / range) : 0.0f;
  return img;
}

inline Spectrogram spectrogram(const TimeSignal& sig, const StftPlan& plan) { return to_image(stft(sig, plan)); }

// Binary 8-bit portable graymap.
inline void write_pgm(const Spectrogram& img, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  os << "P5\n" << img.cols << ' ' << img.rows << "\n255\n";
  for (float p : img.pixels) {
    const auto v = static_cast<int>(std::lround(std::clamp(p, 0.0f, 1.0f) * 255.0f));
    os.put(static_cast<char>(static_cast<unsigned char>(v)));
  }
  if (!os) throw IoError("failed writing '" + path + "'");
}

}  // namespace satjam
