#pragma once

// SJM1 model files:
//   "SJM1" | u8 version | str kind | str meta-json | u32 n_tensors |
//   n x (str name | u32 rank | rank x u32 dim | f32 values) | u32 crc32
// Strings are u32 length-prefixed; all integers little-endian.

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "satjam/binary_io.hpp"
#include "satjam/errors.hpp"
#include "satjam/mlcore/network.hpp"

namespace satjam {

inline constexpr std::uint8_t kModelVersion = 1;

struct ModelParams {
  std::string kind;  // "cnn" or "pca_svm"
  nlohmann::json meta = nlohmann::json::object();
  std::vector<ml::NamedTensor> tensors;

  const ml::NamedTensor& tensor(const std::string& name) const {
    for (const auto& t : tensors)
      if (t.name == name) return t;
    throw ShapeError("model: no tensor named '" + name + "'");
  }
};

inline std::string encode_model(const ModelParams& m) {
  io::Writer w;
  w.raw("SJM1", 4);
  w.u8(kModelVersion);
  w.str(m.kind);
  w.str(m.meta.dump());
  w.u32(static_cast<std::uint32_t>(m.tensors.size()));
  for (const auto& t : m.tensors) {
    if (t.values.size() != ml::numel(t.shape)) throw ShapeError("model: tensor " + t.name + " size/shape mismatch");
    w.str(t.name);
    w.u32(static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) w.u32(static_cast<std::uint32_t>(d));
    for (float v : t.values) w.f32(v);
  }
  return w.finish();
}

inline ModelParams decode_model(const std::string& bytes) {
  io::Reader r(bytes, "model");
  r.check_envelope("SJM1");
  const std::size_t version_at = r.offset();
  if (r.u8() != kModelVersion) throw FormatError("model: unsupported version", version_at);
  ModelParams m;
  m.kind = r.str();
  const std::size_t meta_at = r.offset();
  try {
    m.meta = nlohmann::json::parse(r.str());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("model: bad metadata: ") + e.what(), meta_at);
  }
  const std::size_t n = r.u32();
  for (std::size_t i = 0; i < n; ++i) {
    ml::NamedTensor t;
    t.name = r.str();
    const std::size_t rank = r.u32();
    for (std::size_t d = 0; d < rank; ++d) t.shape.push_back(r.u32());
    const std::size_t count = ml::numel(t.shape);
    r.need(count * 4);
    t.values.resize(count);
    for (auto& v : t.values) v = r.f32();
    m.tensors.push_back(std::move(t));
  }
  r.expect_end();
  return m;
}

inline void save_model(const ModelParams& m, const std::string& path) { io::write_file(path, encode_model(m)); }

inline ModelParams load_model(const std::string& path) { return decode_model(io::read_file(path)); }

}  // namespace satjam
