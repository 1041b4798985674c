#pragma once

// Layer set of the lightweight CNN with hand-written backward passes.
// Activations are laid out [batch, channels, height, width] or [batch, features].

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "satjam/errors.hpp"
#include "satjam/mlcore/tensor.hpp"
#include "satjam/random.hpp"

namespace satjam::ml {

enum class Mode { Train, Infer };

template <typename T>
struct Param {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  Param() = default;
  Param(std::string n, Tensor<T> v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}
};

template <typename T>
class Layer {
 public:
  virtual ~Layer() = default;

  virtual Tensor<T> forward(const Tensor<T>& x, Mode mode) = 0;
  // Returns dL/dx and accumulates parameter gradients.
  virtual Tensor<T> backward(const Tensor<T>& dy) = 0;
  virtual std::string kind() const = 0;
  // Per-sample output shape for a per-sample input shape.
  virtual Shape output_shape(const Shape& in) const = 0;

  virtual std::vector<Param<T>*> params() { return {}; }
  // Non-trainable state that is persisted with the model (BN running stats).
  virtual std::vector<std::pair<std::string, Tensor<T>*>> buffers() { return {}; }

  void set_needs_input_grad(bool v) { needs_input_grad_ = v; }

 protected:
  bool needs_input_grad_ = true;
};

template <typename T>
void glorot_uniform(Tensor<T>& w, std::size_t fan_in, std::size_t fan_out, Rng& rng, double gain = 1.0) {
  const double a = gain * std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (auto& v : w.values()) v = static_cast<T>(rng.uniform(-a, a));
}

// ---------------------------------------------------------------------------

// Stride-1 "same" cross-correlation with an odd square kernel, via im2col.
template <typename T>
class Conv2d final : public Layer<T> {
 public:
  Conv2d(std::size_t in_ch, std::size_t out_ch, std::size_t kernel = 3)
      : in_ch_(in_ch), out_ch_(out_ch), k_(kernel),
        weight_("weight", Tensor<T>({out_ch, in_ch, kernel, kernel})),
        bias_("bias", Tensor<T>({out_ch})) {
    if (kernel % 2 == 0) throw ShapeError("conv2d: kernel size must be odd for same padding");
  }

  void init(Rng& rng) { glorot_uniform(weight_.value, in_ch_ * k_ * k_, out_ch_ * k_ * k_, rng); }

  Param<T>& weight() { return weight_; }
  Param<T>& bias() { return bias_; }

  std::string kind() const override { return "conv"; }
  Shape output_shape(const Shape& in) const override {
    if (in.size() != 3 || in[0] != in_ch_) throw ShapeError("conv2d: input " + shape_str(in));
    return {out_ch_, in[1], in[2]};
  }
  std::vector<Param<T>*> params() override { return {&weight_, &bias_}; }

  Tensor<T> forward(const Tensor<T>& x, Mode) override {
    if (x.rank() != 4 || x.dim(1) != in_ch_) throw ShapeError("conv2d: input " + shape_str(x.shape()));
    batch_ = x.dim(0);
    h_ = x.dim(2);
    w_ = x.dim(3);
    const std::size_t hw = h_ * w_;
    const std::size_t rows = in_ch_ * k_ * k_;
    cols_.assign(batch_ * rows * hw, T{});
    Tensor<T> y({batch_, out_ch_, h_, w_});
    for (std::size_t b = 0; b < batch_; ++b) {
      T* col = cols_.data() + b * rows * hw;
      im2col(x.data() + b * in_ch_ * hw, col);
      T* yb = y.data() + b * out_ch_ * hw;
      for (std::size_t o = 0; o < out_ch_; ++o) {
        T* yrow = yb + o * hw;
        std::fill(yrow, yrow + hw, bias_.value[o]);
        const T* wrow = weight_.value.data() + o * rows;
        for (std::size_t r = 0; r < rows; ++r) axpy(wrow[r], col + r * hw, yrow, hw);
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    require_shape(dy, {batch_, out_ch_, h_, w_}, "conv2d backward");
    const std::size_t hw = h_ * w_;
    const std::size_t rows = in_ch_ * k_ * k_;
    Tensor<T> dx;
    std::vector<T> dcol;
    if (this->needs_input_grad_) {
      dx = Tensor<T>({batch_, in_ch_, h_, w_});
      dcol.resize(rows * hw);
    }
    for (std::size_t b = 0; b < batch_; ++b) {
      const T* col = cols_.data() + b * rows * hw;
      const T* dyb = dy.data() + b * out_ch_ * hw;
      for (std::size_t o = 0; o < out_ch_; ++o) {
        const T* dyrow = dyb + o * hw;
        T* gw = weight_.grad.data() + o * rows;
        for (std::size_t r = 0; r < rows; ++r) gw[r] += dot(dyrow, col + r * hw, hw);
        T s{};
        for (std::size_t i = 0; i < hw; ++i) s += dyrow[i];
        bias_.grad[o] += s;
      }
      if (this->needs_input_grad_) {
        std::fill(dcol.begin(), dcol.end(), T{});
        for (std::size_t o = 0; o < out_ch_; ++o) {
          const T* wrow = weight_.value.data() + o * rows;
          const T* dyrow = dyb + o * hw;
          for (std::size_t r = 0; r < rows; ++r) axpy(wrow[r], dyrow, dcol.data() + r * hw, hw);
        }
        col2im(dcol.data(), dx.data() + b * in_ch_ * hw);
      }
    }
    return dx;
  }

 private:
  void im2col(const T* x, T* col) const {
    const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k_ / 2);
    const auto H = static_cast<std::ptrdiff_t>(h_), W = static_cast<std::ptrdiff_t>(w_);
    for (std::size_t c = 0; c < in_ch_; ++c)
      for (std::size_t ky = 0; ky < k_; ++ky)
        for (std::size_t kx = 0; kx < k_; ++kx) {
          T* dst = col + ((c * k_ + ky) * k_ + kx) * h_ * w_;
          const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - pad;
          const std::ptrdiff_t dxo = static_cast<std::ptrdiff_t>(kx) - pad;
          for (std::ptrdiff_t y = 0; y < H; ++y) {
            const std::ptrdiff_t sy = y + dy;
            T* drow = dst + y * W;
            if (sy < 0 || sy >= H) continue;
            const T* srow = x + (static_cast<std::ptrdiff_t>(c) * H + sy) * W;
            const std::ptrdiff_t x0 = std::max<std::ptrdiff_t>(0, -dxo);
            const std::ptrdiff_t x1 = std::min<std::ptrdiff_t>(W, W - dxo);
            for (std::ptrdiff_t xx = x0; xx < x1; ++xx) drow[xx] = srow[xx + dxo];
          }
        }
  }

  void col2im(const T* col, T* dx) const {
    const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k_ / 2);
    const auto H = static_cast<std::ptrdiff_t>(h_), W = static_cast<std::ptrdiff_t>(w_);
    for (std::size_t c = 0; c < in_ch_; ++c)
      for (std::size_t ky = 0; ky < k_; ++ky)
        for (std::size_t kx = 0; kx < k_; ++kx) {
          const T* src = col + ((c * k_ + ky) * k_ + kx) * h_ * w_;
          const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - pad;
          const std::ptrdiff_t dxo = static_cast<std::ptrdiff_t>(kx) - pad;
          for (std::ptrdiff_t y = 0; y < H; ++y) {
            const std::ptrdiff_t sy = y + dy;
            if (sy < 0 || sy >= H) continue;
            const T* srow = src + y * W;
            T* drow = dx + (static_cast<std::ptrdiff_t>(c) * H + sy) * W;
            const std::ptrdiff_t x0 = std::max<std::ptrdiff_t>(0, -dxo);
            const std::ptrdiff_t x1 = std::min<std::ptrdiff_t>(W, W - dxo);
            for (std::ptrdiff_t xx = x0; xx < x1; ++xx) drow[xx + dxo] += srow[xx];
          }
        }
  }

  std::size_t in_ch_, out_ch_, k_;
  Param<T> weight_, bias_;
  std::size_t batch_ = 0, h_ = 0, w_ = 0;
  std::vector<T> cols_;
};

// ---------------------------------------------------------------------------

// Per-channel batch normalization. Accepts [B,C,H,W] or [B,C].
template <typename T>
class BatchNorm final : public Layer<T> {
 public:
  explicit BatchNorm(std::size_t channels, double momentum = 0.1, double eps = 1e-5)
      : channels_(channels), momentum_(momentum), eps_(eps),
        gamma_("gamma", Tensor<T>({channels}, T{1})), beta_("beta", Tensor<T>({channels})),
        running_mean_({channels}), running_var_({channels}, T{1}) {}

  std::string kind() const override { return "batchnorm"; }
  Shape output_shape(const Shape& in) const override {
    if (in.empty() || in[0] != channels_) throw ShapeError("batchnorm: input " + shape_str(in));
    return in;
  }
  std::vector<Param<T>*> params() override { return {&gamma_, &beta_}; }
  std::vector<std::pair<std::string, Tensor<T>*>> buffers() override {
    return {{"running_mean", &running_mean_}, {"running_var", &running_var_}};
  }

  Param<T>& gamma() { return gamma_; }
  Param<T>& beta() { return beta_; }
  const Tensor<T>& running_mean() const { return running_mean_; }
  const Tensor<T>& running_var() const { return running_var_; }

  Tensor<T> forward(const Tensor<T>& x, Mode mode) override {
    if (x.rank() < 2 || x.dim(1) != channels_) throw ShapeError("batchnorm: input " + shape_str(x.shape()));
    shape_ = x.shape();
    batch_ = x.dim(0);
    spatial_ = x.size() / (batch_ * channels_);
    Tensor<T> y(x.shape());
    mode_ = mode;
    if (mode == Mode::Infer) {
      xhat_ = Tensor<T>(x.shape());
      inv_std_.assign(channels_, T{});
      for (std::size_t c = 0; c < channels_; ++c) {
        const T inv = static_cast<T>(1.0 / std::sqrt(static_cast<double>(running_var_[c]) + eps_));
        inv_std_[c] = inv;
        const T scale = gamma_.value[c] * inv;
        const T shift = beta_.value[c] - running_mean_[c] * scale;
        for_channel(c, [&](std::size_t i) {
          xhat_[i] = (x[i] - running_mean_[c]) * inv;
          y[i] = x[i] * scale + shift;
        });
      }
      return y;
    }
    if (batch_ < 2) throw DomainError("batchnorm: training mode needs a batch of at least 2");
    xhat_ = Tensor<T>(x.shape());
    inv_std_.assign(channels_, T{});
    const double n = static_cast<double>(batch_ * spatial_);
    for (std::size_t c = 0; c < channels_; ++c) {
      double mean = 0.0;
      for_channel(c, [&](std::size_t i) { mean += static_cast<double>(x[i]); });
      mean /= n;
      double var = 0.0;
      for_channel(c, [&](std::size_t i) {
        const double d = static_cast<double>(x[i]) - mean;
        var += d * d;
      });
      var /= n;
      const double inv = 1.0 / std::sqrt(var + eps_);
      inv_std_[c] = static_cast<T>(inv);
      for_channel(c, [&](std::size_t i) {
        xhat_[i] = static_cast<T>((static_cast<double>(x[i]) - mean) * inv);
        y[i] = gamma_.value[c] * xhat_[i] + beta_.value[c];
      });
      const double unbiased = n > 1 ? var * n / (n - 1.0) : var;
      running_mean_[c] = static_cast<T>((1.0 - momentum_) * running_mean_[c] + momentum_ * mean);
      running_var_[c] = static_cast<T>((1.0 - momentum_) * running_var_[c] + momentum_ * unbiased);
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    require_shape(dy, shape_, "batchnorm backward");
    Tensor<T> dx(shape_);
    const double n = static_cast<double>(batch_ * spatial_);
    for (std::size_t c = 0; c < channels_; ++c) {
      double sum_dy = 0.0, sum_dy_xhat = 0.0;
      for_channel(c, [&](std::size_t i) {
        sum_dy += static_cast<double>(dy[i]);
        sum_dy_xhat += static_cast<double>(dy[i]) * static_cast<double>(xhat_[i]);
      });
      gamma_.grad[c] += static_cast<T>(sum_dy_xhat);
      beta_.grad[c] += static_cast<T>(sum_dy);
      const double g = static_cast<double>(gamma_.value[c]);
      if (mode_ == Mode::Infer) {
        // Running statistics are constants here.
        const T k = static_cast<T>(g * static_cast<double>(inv_std_[c]));
        for_channel(c, [&](std::size_t i) { dx[i] = dy[i] * k; });
        continue;
      }
      const double k = g * static_cast<double>(inv_std_[c]) / n;
      for_channel(c, [&](std::size_t i) {
        dx[i] = static_cast<T>(k * (n * static_cast<double>(dy[i]) - sum_dy - static_cast<double>(xhat_[i]) * sum_dy_xhat));
      });
    }
    return dx;
  }

 private:
  template <typename F>
  void for_channel(std::size_t c, F&& f) const {
    for (std::size_t b = 0; b < batch_; ++b) {
      const std::size_t base = (b * channels_ + c) * spatial_;
      for (std::size_t s = 0; s < spatial_; ++s) f(base + s);
    }
  }

  std::size_t channels_;
  double momentum_, eps_;
  Param<T> gamma_, beta_;
  Tensor<T> running_mean_, running_var_;
  Shape shape_;
  Mode mode_ = Mode::Train;
  std::size_t batch_ = 0, spatial_ = 0;
  Tensor<T> xhat_;
  std::vector<T> inv_std_;
};

// ---------------------------------------------------------------------------

template <typename T>
class Relu final : public Layer<T> {
 public:
  std::string kind() const override { return "relu"; }
  Shape output_shape(const Shape& in) const override { return in; }

  Tensor<T> forward(const Tensor<T>& x, Mode) override {
    Tensor<T> y(x.shape());
    mask_.assign(x.size(), 0);
    for (std::size_t i = 0; i < x.size(); ++i)
      if (x[i] > T{0}) {
        y[i] = x[i];
        mask_[i] = 1;
      }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    if (dy.size() != mask_.size()) throw ShapeError("relu backward: size mismatch");
    Tensor<T> dx(dy.shape());
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = mask_[i] ? dy[i] : T{0};
    return dx;
  }

 private:
  std::vector<std::uint8_t> mask_;
};

// ---------------------------------------------------------------------------

// Non-overlapping max pooling (window == stride); trailing rows/cols dropped.
template <typename T>
class MaxPool2d final : public Layer<T> {
 public:
  explicit MaxPool2d(std::size_t size = 2) : size_(size) {}

  std::string kind() const override { return "maxpool"; }
  Shape output_shape(const Shape& in) const override {
    if (in.size() != 3 || in[1] < size_ || in[2] < size_) throw ShapeError("maxpool: input " + shape_str(in));
    return {in[0], in[1] / size_, in[2] / size_};
  }

  Tensor<T> forward(const Tensor<T>& x, Mode) override {
    if (x.rank() != 4) throw ShapeError("maxpool: input " + shape_str(x.shape()));
    in_shape_ = x.shape();
    const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::size_t oh = H / size_, ow = W / size_;
    Tensor<T> y({B, C, oh, ow});
    argmax_.assign(y.size(), 0);
    for (std::size_t bc = 0; bc < B * C; ++bc) {
      const T* xp = x.data() + bc * H * W;
      for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j) {
          std::size_t best = (i * size_) * W + j * size_;
          for (std::size_t di = 0; di < size_; ++di)
            for (std::size_t dj = 0; dj < size_; ++dj) {
              const std::size_t idx = (i * size_ + di) * W + j * size_ + dj;
              if (xp[idx] > xp[best]) best = idx;
            }
          const std::size_t o = bc * oh * ow + i * ow + j;
          y[o] = xp[best];
          argmax_[o] = bc * H * W + best;
        }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    if (dy.size() != argmax_.size()) throw ShapeError("maxpool backward: size mismatch");
    Tensor<T> dx(in_shape_);
    for (std::size_t o = 0; o < dy.size(); ++o) dx[argmax_[o]] += dy[o];
    return dx;
  }

 private:
  std::size_t size_;
  Shape in_shape_;
  std::vector<std::size_t> argmax_;
};

// ---------------------------------------------------------------------------

// Inverted dropout: kept units scaled by 1/(1-p) in training, identity at
// inference.
template <typename T>
class Dropout final : public Layer<T> {
 public:
  Dropout(double rate, Seed seed) : rate_(rate), rng_(seed) {
    if (!(rate >= 0.0 && rate < 1.0)) throw DomainError("dropout: rate must be in [0, 1)");
  }

  std::string kind() const override { return "dropout"; }
  Shape output_shape(const Shape& in) const override { return in; }

  // Reuses the last mask on subsequent forwards (gradient checking).
  void freeze_mask(bool v) { frozen_ = v; }

  Tensor<T> forward(const Tensor<T>& x, Mode mode) override {
    mode_ = mode;
    if (mode == Mode::Infer) return x;
    const T keep_scale = static_cast<T>(1.0 / (1.0 - rate_));
    if (!frozen_ || scale_.size() != x.size()) {
      scale_.assign(x.size(), T{0});
      for (auto& s : scale_) s = rng_.uniform() >= rate_ ? keep_scale : T{0};
    }
    Tensor<T> y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] * scale_[i];
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    if (mode_ == Mode::Infer) return dy;
    Tensor<T> dx(dy.shape());
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = dy[i] * scale_[i];
    return dx;
  }

 private:
  double rate_;
  Rng rng_;
  bool frozen_ = false;
  Mode mode_ = Mode::Infer;
  std::vector<T> scale_;
};

// ---------------------------------------------------------------------------

template <typename T>
class Flatten final : public Layer<T> {
 public:
  std::string kind() const override { return "flatten"; }
  Shape output_shape(const Shape& in) const override { return {numel(in)}; }

  Tensor<T> forward(const Tensor<T>& x, Mode) override {
    in_shape_ = x.shape();
    return x.reshaped({x.dim(0), x.size() / x.dim(0)});
  }
  Tensor<T> backward(const Tensor<T>& dy) override { return dy.reshaped(in_shape_); }

 private:
  Shape in_shape_;
};

// ---------------------------------------------------------------------------

// y = x Wᵀ + b with W stored [out, in].
template <typename T>
class Dense final : public Layer<T> {
 public:
  Dense(std::size_t in, std::size_t out)
      : in_(in), out_(out), weight_("weight", Tensor<T>({out, in})), bias_("bias", Tensor<T>({out})) {}

  void init(Rng& rng, double gain = 1.0) { glorot_uniform(weight_.value, in_, out_, rng, gain); }

  Param<T>& weight() { return weight_; }
  Param<T>& bias() { return bias_; }

  std::string kind() const override { return "dense"; }
  Shape output_shape(const Shape& in) const override {
    if (numel(in) != in_ || in.size() != 1) throw ShapeError("dense: input " + shape_str(in));
    return {out_};
  }
  std::vector<Param<T>*> params() override { return {&weight_, &bias_}; }

  Tensor<T> forward(const Tensor<T>& x, Mode) override {
    if (x.rank() != 2 || x.dim(1) != in_) throw ShapeError("dense: input " + shape_str(x.shape()));
    x_ = x;
    const std::size_t B = x.dim(0);
    Tensor<T> y({B, out_});
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t o = 0; o < out_; ++o)
        y[b * out_ + o] = dot(x.data() + b * in_, weight_.value.data() + o * in_, in_) + bias_.value[o];
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    const std::size_t B = x_.dim(0);
    require_shape(dy, {B, out_}, "dense backward");
    Tensor<T> dx({B, in_});
    for (std::size_t b = 0; b < B; ++b) {
      const T* xb = x_.data() + b * in_;
      for (std::size_t o = 0; o < out_; ++o) {
        const T g = dy[b * out_ + o];
        axpy(g, xb, weight_.grad.data() + o * in_, in_);
        bias_.grad[o] += g;
        if (this->needs_input_grad_) axpy(g, weight_.value.data() + o * in_, dx.data() + b * in_, in_);
      }
    }
    return dx;
  }

 private:
  std::size_t in_, out_;
  Param<T> weight_, bias_;
  Tensor<T> x_;
};

// ---------------------------------------------------------------------------

template <typename T>
struct SoftmaxCe {
  T loss{};               // mean cross-entropy over the batch
  Tensor<T> probs;        // [B, K]
  Tensor<T> grad_logits;  // d(mean loss)/d logits
};

template <typename T>
Tensor<T> softmax(const Tensor<T>& logits) {
  if (logits.rank() != 2) throw ShapeError("softmax: logits must be [batch, classes]");
  const std::size_t B = logits.dim(0), K = logits.dim(1);
  Tensor<T> p(logits.shape());
  for (std::size_t b = 0; b < B; ++b) {
    const T* z = logits.data() + b * K;
    const T mx = *std::max_element(z, z + K);
    double sum = 0.0;
    for (std::size_t k = 0; k < K; ++k) sum += std::exp(static_cast<double>(z[k] - mx));
    for (std::size_t k = 0; k < K; ++k) p[b * K + k] = static_cast<T>(std::exp(static_cast<double>(z[k] - mx)) / sum);
  }
  return p;
}

template <typename T>
SoftmaxCe<T> softmax_ce(const Tensor<T>& logits, std::span<const std::uint8_t> labels) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size())
    throw ShapeError("softmax_ce: logits " + shape_str(logits.shape()) + " vs " + std::to_string(labels.size()) + " labels");
  const std::size_t B = logits.dim(0), K = logits.dim(1);
  SoftmaxCe<T> out;
  out.grad_logits = Tensor<T>(logits.shape());
  double loss = 0.0;
  for (std::size_t b = 0; b < B; ++b) {
    const T* z = logits.data() + b * K;
    const double mx = static_cast<double>(*std::max_element(z, z + K));
    double sum = 0.0;
    for (std::size_t k = 0; k < K; ++k) sum += std::exp(static_cast<double>(z[k]) - mx);
    const double log_sum = std::log(sum) + mx;
    if (labels[b] >= K) throw DomainError("softmax_ce: label out of range");
    loss += log_sum - static_cast<double>(z[labels[b]]);
    for (std::size_t k = 0; k < K; ++k) {
      const double p = std::exp(static_cast<double>(z[k]) - log_sum);
      out.grad_logits[b * K + k] = static_cast<T>((p - (k == labels[b] ? 1.0 : 0.0)) / static_cast<double>(B));
    }
  }
  out.loss = static_cast<T>(loss / static_cast<double>(B));
  out.probs = softmax(logits);
  return out;
}

}  // namespace satjam::ml
