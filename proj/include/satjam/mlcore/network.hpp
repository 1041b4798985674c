#pragma once

// Declarative layer stacks and the sequential network built from them.

#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "satjam/errors.hpp"
#include "satjam/mlcore/adam.hpp"
#include "satjam/mlcore/layers.hpp"
#include "satjam/mlcore/tensor.hpp"
#include "satjam/random.hpp"

namespace satjam::ml {

struct LayerSpec {
  std::string type;       // conv | batchnorm | relu | maxpool | dropout | flatten | dense
  std::size_t units = 0;  // conv filters / dense width
  std::size_t kernel = 3; // conv kernel side, maxpool window
  double rate = 0.0;      // dropout probability

  static LayerSpec conv(std::size_t filters, std::size_t kernel = 3) { return {"conv", filters, kernel, 0.0}; }
  static LayerSpec batchnorm() { return {"batchnorm", 0, 0, 0.0}; }
  static LayerSpec relu() { return {"relu", 0, 0, 0.0}; }
  static LayerSpec maxpool(std::size_t size = 2) { return {"maxpool", 0, size, 0.0}; }
  static LayerSpec dropout(double rate) { return {"dropout", 0, 0, rate}; }
  static LayerSpec flatten() { return {"flatten", 0, 0, 0.0}; }
  static LayerSpec dense(std::size_t units) { return {"dense", units, 0, 0.0}; }
};

inline nlohmann::json to_json(const LayerSpec& l) {
  nlohmann::json j{{"type", l.type}};
  if (l.type == "conv") j.update({{"filters", l.units}, {"kernel", l.kernel}});
  if (l.type == "maxpool") j["size"] = l.kernel;
  if (l.type == "dropout") j["rate"] = l.rate;
  if (l.type == "dense") j["units"] = l.units;
  return j;
}

inline LayerSpec layer_from_json(const nlohmann::json& j) {
  const auto type = j.at("type").get<std::string>();
  if (type == "conv") return LayerSpec::conv(j.at("filters").get<std::size_t>(), j.value("kernel", std::size_t{3}));
  if (type == "batchnorm") return LayerSpec::batchnorm();
  if (type == "relu") return LayerSpec::relu();
  if (type == "maxpool") return LayerSpec::maxpool(j.value("size", std::size_t{2}));
  if (type == "dropout") return LayerSpec::dropout(j.at("rate").get<double>());
  if (type == "flatten") return LayerSpec::flatten();
  if (type == "dense") return LayerSpec::dense(j.at("units").get<std::size_t>());
  throw ConfigError("unknown layer type '" + type + "'");
}

// Saved tensor: name, shape and f32 values.
struct NamedTensor {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

inline constexpr double kHeadInitGain = 0.1;

// Sequential stack; the final layer's output is the logits vector.
template <typename T>
class Network {
 public:
  Network(const Shape& input, const std::vector<LayerSpec>& specs, Seed seed) : input_(input) {
    Rng init_rng(derive_seed(seed, {0x1417}));
    Shape cur = input;
    std::size_t dropout_index = 0;
    for (std::size_t li = 0; li < specs.size(); ++li) {
      const auto& s = specs[li];
      std::unique_ptr<Layer<T>> layer;
      if (s.type == "conv") {
        if (cur.size() != 3) throw ShapeError("conv layer needs a [C,H,W] input, got " + shape_str(cur));
        auto conv = std::make_unique<Conv2d<T>>(cur[0], s.units, s.kernel);
        conv->init(init_rng);
        layer = std::move(conv);
      } else if (s.type == "batchnorm") {
        layer = std::make_unique<BatchNorm<T>>(cur.at(0));
      } else if (s.type == "relu") {
        layer = std::make_unique<Relu<T>>();
      } else if (s.type == "maxpool") {
        layer = std::make_unique<MaxPool2d<T>>(s.kernel);
      } else if (s.type == "dropout") {
        layer = std::make_unique<Dropout<T>>(s.rate, derive_seed(seed, {0xd60, dropout_index++}));
      } else if (s.type == "flatten") {
        layer = std::make_unique<Flatten<T>>();
      } else if (s.type == "dense") {
        if (cur.size() != 1) throw ShapeError("dense layer needs a flat input, got " + shape_str(cur));
        auto dense = std::make_unique<Dense<T>>(cur[0], s.units);
        // The logit layer starts 10x narrower so the initial softmax is
        // close to uniform.
        dense->init(init_rng, li + 1 == specs.size() ? kHeadInitGain : 1.0);
        layer = std::move(dense);
      } else {
        throw ConfigError("unknown layer type '" + s.type + "'");
      }
      cur = layer->output_shape(cur);
      layers_.push_back(std::move(layer));
    }
    output_ = cur;
    if (!layers_.empty()) layers_.front()->set_needs_input_grad(false);
  }

  const Shape& input_shape() const { return input_; }
  const Shape& output_shape() const { return output_; }
  std::size_t n_layers() const { return layers_.size(); }
  Layer<T>& layer(std::size_t i) { return *layers_.at(i); }

  Tensor<T> forward(Tensor<T> x, Mode mode) {
    for (auto& l : layers_) x = l->forward(x, mode);
    return x;
  }

  void backward(Tensor<T> dy) {
    for (std::size_t i = layers_.size(); i-- > 0;) dy = layers_[i]->backward(dy);
  }

  std::vector<Param<T>*> params() {
    std::vector<Param<T>*> out;
    for (auto& l : layers_)
      for (auto* p : l->params()) out.push_back(p);
    return out;
  }

  void zero_grad() {
    for (auto* p : params()) p->grad.fill(T{0});
  }

  std::size_t parameter_count() {
    std::size_t n = 0;
    for (auto* p : params()) n += p->value.size();
    return n;
  }

  std::vector<std::size_t> slot_sizes() {
    std::vector<std::size_t> sizes;
    for (auto* p : params()) sizes.push_back(p->value.size());
    return sizes;
  }

  void adam_step(AdamState& state) {
    adam_begin_step(state);
    auto ps = params();
    for (std::size_t i = 0; i < ps.size(); ++i)
      adam_update<T>(ps[i]->value.span(), std::span<const T>(ps[i]->grad.span()), state, i);
  }

  // Trainable parameters and persistent buffers, named "<layer>.<field>".
  std::vector<NamedTensor> state() {
    std::vector<NamedTensor> out;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const std::string prefix = std::to_string(i) + "." + layers_[i]->kind() + ".";
      for (auto* p : layers_[i]->params())
        out.push_back({prefix + p->name, p->value.shape(), {p->value.values().begin(), p->value.values().end()}});
      for (auto& [name, t] : layers_[i]->buffers())
        out.push_back({prefix + name, t->shape(), {t->values().begin(), t->values().end()}});
    }
    return out;
  }

  void load_state(const std::vector<NamedTensor>& tensors) {
    std::size_t next = 0;
    auto take = [&](const std::string& name, Tensor<T>& dst) {
      if (next >= tensors.size()) throw ShapeError("model state: missing tensor " + name);
      const auto& src = tensors[next++];
      if (src.name != name || src.shape != dst.shape())
        throw ShapeError("model state: expected " + name + shape_str(dst.shape()) + ", found " + src.name +
                         shape_str(src.shape));
      for (std::size_t k = 0; k < src.values.size(); ++k) dst[k] = static_cast<T>(src.values[k]);
    };
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const std::string prefix = std::to_string(i) + "." + layers_[i]->kind() + ".";
      for (auto* p : layers_[i]->params()) take(prefix + p->name, p->value);
      for (auto& [name, t] : layers_[i]->buffers()) take(prefix + name, *t);
    }
    if (next != tensors.size()) throw ShapeError("model state: unexpected extra tensors");
  }

 private:
  Shape input_, output_;
  std::vector<std::unique_ptr<Layer<T>>> layers_;
};

}  // namespace satjam::ml
