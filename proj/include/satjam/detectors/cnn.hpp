#pragma once

// Lightweight CNN jamming detector: declarative architecture, training with
// Adam on softmax cross-entropy, and best-epoch selection on a held-out fold.

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "satjam/dataset.hpp"
#include "satjam/errors.hpp"
#include "satjam/features.hpp"
#include "satjam/mlcore/network.hpp"
#include "satjam/model_io.hpp"
#include "satjam/random.hpp"

namespace satjam {

struct CnnArch {
  ml::Shape input{1, kImageSide, kImageSide};
  std::vector<ml::LayerSpec> layers;

  // Three conv blocks (8/16/32 filters, 3x3 stride 1, BN, ReLU, 2x2 max-pool),
  // dropout 0.5, dense hidden layer, two-way softmax head.
  static CnnArch reference(std::size_t hidden = 63) {
    using L = ml::LayerSpec;
    CnnArch a;
    for (std::size_t filters : {8u, 16u, 32u}) {
      a.layers.push_back(L::conv(filters, 3));
      a.layers.push_back(L::batchnorm());
      a.layers.push_back(L::relu());
      a.layers.push_back(L::maxpool(2));
    }
    a.layers.push_back(L::dropout(0.5));
    a.layers.push_back(L::flatten());
    a.layers.push_back(L::dense(hidden));
    a.layers.push_back(L::relu());
    a.layers.push_back(L::dense(2));
    return a;
  }

  void validate() const {
    for (const auto& l : layers)
      if (l.type == "conv" && l.kernel != 3) throw ConfigError("cnn: conv kernels must be 3x3");
    if (layers.empty() || layers.back().type != "dense" || layers.back().units != 2)
      throw ConfigError("cnn: the final layer must be a dense layer of width 2");
  }

  std::size_t parameter_count() const {
    ml::Network<float> net(input, layers, 0);
    return net.parameter_count();
  }

  nlohmann::json to_json() const {
    nlohmann::json ls = nlohmann::json::array();
    for (const auto& l : layers) ls.push_back(ml::to_json(l));
    return {{"input", input}, {"layers", ls}, {"head", "softmax"}};
  }

  static CnnArch from_json(const nlohmann::json& j) {
    CnnArch a;
    try {
      if (j.contains("input")) a.input = j.at("input").get<ml::Shape>();
      for (const auto& l : j.at("layers")) a.layers.push_back(ml::layer_from_json(l));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("cnn arch: ") + e.what());
    }
    a.validate();
    return a;
  }
};

struct TrainConfig {
  double lr = 1e-4;
  std::size_t batch = 40;
  std::size_t epochs = 50;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double val_fraction = 0.1;
  Seed seed = 7;

  void validate() const {
    if (batch < 2) throw ConfigError("train: batch must be >= 2 (batch normalization)");
    if (epochs == 0) throw ConfigError("train: epochs must be > 0");
    if (!(lr > 0.0)) throw ConfigError("train: learning rate must be > 0");
    if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw ConfigError("train: val_fraction must be in [0, 1)");
  }

  nlohmann::json to_json() const {
    return {{"lr", lr},       {"batch", batch}, {"epochs", epochs},           {"beta1", beta1},
            {"beta2", beta2}, {"eps", eps},     {"val_fraction", val_fraction}, {"seed", seed}};
  }

  static TrainConfig from_json(const nlohmann::json& j);
  static TrainConfig from_json(const nlohmann::json& j, TrainConfig c) {
    c.lr = j.value("lr", c.lr);
    c.batch = j.value("batch", c.batch);
    c.epochs = j.value("epochs", c.epochs);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.eps = j.value("eps", c.eps);
    c.val_fraction = j.value("val_fraction", c.val_fraction);
    c.seed = j.value("seed", c.seed);
    c.validate();
    return c;
  }
};

inline TrainConfig TrainConfig::from_json(const nlohmann::json& j) { return from_json(j, TrainConfig{}); }

struct EpochTrace {
  std::size_t epoch = 0;  // 1-based
  double loss = 0.0;      // mean training loss over the epoch
  double train_acc = 0.0; // training-mode batch accuracy
  double val_acc = 0.0;   // inference-mode accuracy on the held-out fold
};

struct CnnTrainResult {
  ModelParams params;
  std::vector<EpochTrace> trace;
  double initial_loss = 0.0;  // first batch, before any update
  std::size_t best_epoch = 0;
};

struct CnnPrediction {
  std::vector<std::uint8_t> labels;
  std::vector<std::array<float, 2>> probs;
};

namespace detail {

inline ml::Tensor<float> stack_images(std::span<const Spectrogram* const> imgs, const ml::Shape& input) {
  const std::size_t per = ml::numel(input);
  ml::Shape shape{imgs.size()};
  shape.insert(shape.end(), input.begin(), input.end());
  ml::Tensor<float> x(shape);
  for (std::size_t b = 0; b < imgs.size(); ++b) {
    if (imgs[b]->pixels.size() != per) throw ShapeError("cnn: image size does not match the architecture input");
    std::copy(imgs[b]->pixels.begin(), imgs[b]->pixels.end(), x.data() + b * per);
  }
  return x;
}

inline ml::Network<float> network_from(const ModelParams& p) {
  if (p.kind != "cnn") throw ShapeError("cnn_predict: model kind is '" + p.kind + "'");
  const auto arch = CnnArch::from_json(p.meta.at("arch"));
  ml::Network<float> net(arch.input, arch.layers, 0);
  net.load_state(p.tensors);
  return net;
}

inline CnnPrediction predict_with(ml::Network<float>& net, std::span<const Spectrogram* const> imgs) {
  CnnPrediction out;
  constexpr std::size_t chunk = 64;
  for (std::size_t start = 0; start < imgs.size(); start += chunk) {
    const std::size_t end = std::min(imgs.size(), start + chunk);
    auto logits = net.forward(stack_images(imgs.subspan(start, end - start), net.input_shape()), ml::Mode::Infer);
    auto p = ml::softmax(logits);
    for (std::size_t b = 0; b < end - start; ++b) {
      out.probs.push_back({p[b * 2], p[b * 2 + 1]});
      out.labels.push_back(p[b * 2 + 1] > p[b * 2] ? 1 : 0);
    }
  }
  return out;
}

}  // namespace detail

// Inference mode: BN running statistics, dropout off.
inline CnnPrediction cnn_predict(const ModelParams& params, std::span<const Spectrogram> imgs) {
  auto net = detail::network_from(params);
  std::vector<const Spectrogram*> ptrs;
  for (const auto& s : imgs) ptrs.push_back(&s);
  return detail::predict_with(net, ptrs);
}

inline CnnTrainResult cnn_train(const Dataset& ds, const CnnArch& arch, const TrainConfig& cfg) {
  arch.validate();
  cfg.validate();
  if (ds.size() < 2) throw TrainingError("cnn_train: need at least two samples");
  if (ds.count_label(0) == 0 || ds.count_label(1) == 0) throw TrainingError("cnn_train: both classes must be present");

  std::vector<std::size_t> idx(ds.size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng split_rng(derive_seed(cfg.seed, {0xf01d}));
  split_rng.shuffle(idx.begin(), idx.end());
  std::size_t n_val = static_cast<std::size_t>(std::lround(cfg.val_fraction * static_cast<double>(ds.size())));
  if (ds.size() - n_val < 2) n_val = 0;
  std::vector<std::size_t> val(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> train(idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());

  ml::Network<float> net(arch.input, arch.layers, derive_seed(cfg.seed, {0x1a7}));
  ml::AdamState adam({cfg.lr, cfg.beta1, cfg.beta2, cfg.eps});
  const auto sizes = net.slot_sizes();
  adam.reset(sizes);

  std::vector<const Spectrogram*> val_imgs;
  for (auto i : val) val_imgs.push_back(&ds.samples[i]);

  CnnTrainResult res;
  res.params.kind = "cnn";
  res.params.meta = {{"arch", arch.to_json()}, {"train", cfg.to_json()}};
  double best_val = -1.0;
  Rng epoch_rng(derive_seed(cfg.seed, {0xe90c}));
  bool first_batch = true;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    epoch_rng.shuffle(train.begin(), train.end());
    // Batches of cfg.batch; a trailing single sample joins the previous batch.
    std::vector<std::pair<std::size_t, std::size_t>> batches;
    for (std::size_t s = 0; s < train.size(); s += cfg.batch) batches.emplace_back(s, std::min(train.size(), s + cfg.batch));
    if (batches.size() > 1 && batches.back().second - batches.back().first < 2) {
      batches[batches.size() - 2].second = batches.back().second;
      batches.pop_back();
    }
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (const auto& [lo, hi] : batches) {
      std::vector<const Spectrogram*> imgs;
      std::vector<std::uint8_t> labels;
      for (std::size_t k = lo; k < hi; ++k) {
        imgs.push_back(&ds.samples[train[k]]);
        labels.push_back(ds.labels[train[k]]);
      }
      net.zero_grad();
      auto logits = net.forward(detail::stack_images(imgs, arch.input), ml::Mode::Train);
      auto ce = ml::softmax_ce<float>(logits, labels);
      if (!std::isfinite(ce.loss)) throw TrainingError("cnn_train: non-finite loss at epoch " + std::to_string(epoch));
      if (first_batch) {
        res.initial_loss = ce.loss;
        first_batch = false;
      }
      loss_sum += static_cast<double>(ce.loss) * static_cast<double>(hi - lo);
      for (std::size_t b = 0; b < hi - lo; ++b)
        correct += ((ce.probs[b * 2 + 1] > ce.probs[b * 2]) ? 1 : 0) == labels[b] ? 1 : 0;
      net.backward(std::move(ce.grad_logits));
      net.adam_step(adam);
    }
    EpochTrace tr;
    tr.epoch = epoch;
    tr.loss = loss_sum / static_cast<double>(train.size());
    tr.train_acc = static_cast<double>(correct) / static_cast<double>(train.size());
    if (!val.empty()) {
      const auto pred = detail::predict_with(net, val_imgs);
      std::size_t ok = 0;
      for (std::size_t k = 0; k < val.size(); ++k) ok += pred.labels[k] == ds.labels[val[k]] ? 1 : 0;
      tr.val_acc = static_cast<double>(ok) / static_cast<double>(val.size());
    } else {
      tr.val_acc = tr.train_acc;
    }
    res.trace.push_back(tr);
    // Without a held-out fold the final epoch is kept.
    if (val.empty() ? epoch == cfg.epochs : tr.val_acc > best_val) {
      best_val = tr.val_acc;
      res.best_epoch = epoch;
      res.params.tensors = net.state();
    }
  }
  res.params.meta["best_epoch"] = res.best_epoch;
  return res;
}

inline std::string trace_csv(const std::vector<EpochTrace>& trace) {
  std::string out = "epoch,loss,train_acc,val_acc\n";
  char line[128];
  for (const auto& t : trace) {
    std::snprintf(line, sizeof line, "%zu,%.6f,%.6f,%.6f\n", t.epoch, t.loss, t.train_acc, t.val_acc);
    out += line;
  }
  return out;
}

}  // namespace satjam
