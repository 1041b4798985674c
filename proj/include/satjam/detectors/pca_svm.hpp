#pragma once

// PCA + linear SVM benchmark detector: flatten 96x96 -> 9216, project onto
// the leading principal components fitted on the training split, classify
// with a linear soft-margin SVM.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "satjam/dataset.hpp"
#include "satjam/errors.hpp"
#include "satjam/mlcore/pca.hpp"
#include "satjam/mlcore/svm.hpp"
#include "satjam/model_io.hpp"

namespace satjam {

struct PcaSvmConfig {
  std::size_t components = 45;
  ml::SvmConfig svm{};

  nlohmann::json to_json() const {
    return {{"components", components}, {"c", svm.c}, {"epochs", svm.epochs}, {"seed", svm.seed}};
  }
  static PcaSvmConfig from_json(const nlohmann::json& j);
  static PcaSvmConfig from_json(const nlohmann::json& j, PcaSvmConfig c) {
    c.components = j.value("components", c.components);
    c.svm.c = j.value("c", c.svm.c);
    c.svm.epochs = j.value("epochs", c.svm.epochs);
    c.svm.seed = j.value("seed", c.svm.seed);
    if (c.components == 0) throw ConfigError("pca_svm: components must be > 0");
    if (!(c.svm.c > 0.0) || c.svm.epochs == 0) throw ConfigError("pca_svm: C and epochs must be positive");
    return c;
  }
};

inline PcaSvmConfig PcaSvmConfig::from_json(const nlohmann::json& j) { return from_json(j, PcaSvmConfig{}); }

struct PcaSvmModel {
  ml::PcaModel pca;
  ml::SvmModel svm;
};

namespace detail {

inline ml::Matrix flatten_images(std::span<const Spectrogram> imgs) {
  if (imgs.empty()) return {};
  const std::size_t d = imgs.front().pixels.size();
  ml::Matrix x(imgs.size(), d);
  for (std::size_t i = 0; i < imgs.size(); ++i) {
    if (imgs[i].pixels.size() != d) throw ShapeError("pca_svm: images of differing size");
    std::copy(imgs[i].pixels.begin(), imgs[i].pixels.end(), x.row(i));
  }
  return x;
}

inline double round_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

}  // namespace detail

// Parameters are rounded to f32 so an in-memory model and its SJM1 file
// predict identically.
inline PcaSvmModel pca_svm_train(const Dataset& ds, const PcaSvmConfig& cfg = {}) {
  if (ds.count_label(0) == 0 || ds.count_label(1) == 0) throw TrainingError("pca_svm_train: both classes must be present");
  const auto x = detail::flatten_images(ds.samples);
  PcaSvmModel m;
  m.pca = ml::pca_fit(x, cfg.components);
  for (auto& v : m.pca.mean) v = detail::round_f32(v);
  for (auto& v : m.pca.components.data) v = detail::round_f32(v);
  for (auto& v : m.pca.variance) v = detail::round_f32(v);
  ml::Matrix z(ds.size(), cfg.components);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto zi = ml::pca_project(m.pca, std::span<const double>(x.row(i), x.cols));
    std::copy(zi.begin(), zi.end(), z.row(i));
  }
  std::vector<int> y(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) y[i] = ds.labels[i] ? 1 : -1;
  m.svm = ml::svm_train(z, y, cfg.svm);
  for (auto& v : m.svm.w) v = detail::round_f32(v);
  m.svm.b = detail::round_f32(m.svm.b);
  return m;
}

inline std::vector<double> pca_svm_scores(const PcaSvmModel& m, std::span<const Spectrogram> imgs) {
  std::vector<double> out;
  out.reserve(imgs.size());
  std::vector<double> x;
  for (const auto& img : imgs) {
    x.assign(img.pixels.begin(), img.pixels.end());
    out.push_back(ml::svm_decide(m.svm, ml::pca_project(m.pca, x)));
  }
  return out;
}

inline std::vector<std::uint8_t> pca_svm_predict(const PcaSvmModel& m, std::span<const Spectrogram> imgs) {
  std::vector<std::uint8_t> labels;
  for (double s : pca_svm_scores(m, imgs)) labels.push_back(s >= 0.0 ? 1 : 0);
  return labels;
}

inline ModelParams to_params(const PcaSvmModel& m, const PcaSvmConfig& cfg = {}) {
  auto f32 = [](const std::vector<double>& v) { return std::vector<float>(v.begin(), v.end()); };
  ModelParams p;
  p.kind = "pca_svm";
  p.meta = {{"config", cfg.to_json()}, {"kernel", "linear"}, {"total_variance", m.pca.total_variance}};
  p.tensors.push_back({"pca.mean", {m.pca.dim()}, f32(m.pca.mean)});
  p.tensors.push_back({"pca.components", {m.pca.k(), m.pca.dim()}, f32(m.pca.components.data)});
  p.tensors.push_back({"pca.variance", {m.pca.k()}, f32(m.pca.variance)});
  p.tensors.push_back({"svm.w", {m.svm.w.size()}, f32(m.svm.w)});
  p.tensors.push_back({"svm.b", {1}, {static_cast<float>(m.svm.b)}});
  return p;
}

inline PcaSvmModel pca_svm_from_params(const ModelParams& p) {
  if (p.kind != "pca_svm") throw ShapeError("pca_svm: model kind is '" + p.kind + "'");
  auto f64 = [](const std::vector<float>& v) { return std::vector<double>(v.begin(), v.end()); };
  PcaSvmModel m;
  const auto& comps = p.tensor("pca.components");
  if (comps.shape.size() != 2) throw ShapeError("pca_svm: components must be rank 2");
  m.pca.mean = f64(p.tensor("pca.mean").values);
  m.pca.components = ml::Matrix(comps.shape[0], comps.shape[1]);
  m.pca.components.data = f64(comps.values);
  m.pca.variance = f64(p.tensor("pca.variance").values);
  m.pca.total_variance = p.meta.value("total_variance", 0.0);
  m.svm.w = f64(p.tensor("svm.w").values);
  m.svm.b = p.tensor("svm.b").values.at(0);
  if (m.pca.mean.size() != m.pca.dim() || m.svm.w.size() != m.pca.k())
    throw ShapeError("pca_svm: inconsistent tensor shapes");
  if (p.meta.contains("config")) m.svm.c_param = p.meta.at("config").value("c", 1.0);
  return m;
}

}  // namespace satjam
