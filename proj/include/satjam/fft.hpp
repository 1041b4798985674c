#pragma once

#include <fftw3.h>

#include <complex>
#include <cstddef>
#include <map>
#include <mutex>
#include <span>
#include <utility>
#include <vector>

#include "satjam/errors.hpp"

namespace satjam {

enum class FftDirection { Forward, Inverse };

namespace detail {

// FFTW planning is not thread-safe, execution with new-array interface is.
// Plans are created once per (size, direction) and cached for the process.
class FftPlanCache {
 public:
  static FftPlanCache& instance() {
    static FftPlanCache cache;
    return cache;
  }

  fftw_plan get(std::size_t n, FftDirection dir) {
    std::lock_guard<std::mutex> lock(mutex_);
    const auto key = std::make_pair(n, dir == FftDirection::Forward);
    auto it = plans_.find(key);
    if (it != plans_.end()) return it->second;
    auto* in = fftw_alloc_complex(n);
    auto* out = fftw_alloc_complex(n);
    fftw_plan plan = fftw_plan_dft_1d(static_cast<int>(n), in, out,
                                      dir == FftDirection::Forward ? FFTW_FORWARD : FFTW_BACKWARD,
                                      FFTW_ESTIMATE | FFTW_UNALIGNED);
    fftw_free(in);
    fftw_free(out);
    plans_.emplace(key, plan);
    return plan;
  }

  FftPlanCache(const FftPlanCache&) = delete;
  FftPlanCache& operator=(const FftPlanCache&) = delete;

  ~FftPlanCache() {
    for (auto& [key, plan] : plans_) fftw_destroy_plan(plan);
  }

 private:
  FftPlanCache() = default;
  std::mutex mutex_;
  std::map<std::pair<std::size_t, bool>, fftw_plan> plans_;
};

}  // namespace detail

// Unnormalized DFT: forward uses exp(-j2πkn/N), inverse exp(+j2πkn/N).
inline void dft(std::span<const std::complex<double>> in, std::span<std::complex<double>> out,
                FftDirection dir) {
  if (in.size() != out.size() || in.empty()) throw ShapeError("dft: input/output size mismatch");
  fftw_plan plan = detail::FftPlanCache::instance().get(in.size(), dir);
  // FFTW takes non-const input pointers but does not modify the input for
  // out-of-place complex transforms.
  auto* src = reinterpret_cast<fftw_complex*>(const_cast<std::complex<double>*>(in.data()));
  auto* dst = reinterpret_cast<fftw_complex*>(out.data());
  if (static_cast<const void*>(in.data()) == static_cast<const void*>(out.data())) {
    // The cached plans are out-of-place.
    std::vector<std::complex<double>> tmp(in.begin(), in.end());
    fftw_execute_dft(plan, reinterpret_cast<fftw_complex*>(tmp.data()), dst);
  } else {
    fftw_execute_dft(plan, src, dst);
  }
}

}  // namespace satjam
