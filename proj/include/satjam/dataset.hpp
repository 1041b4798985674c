#pragma once

// Labeled spectrogram datasets: scenario-driven generation, and the SJD1
// container (header, f32 pixels, u8 labels, JSON manifest, CRC-32 trailer).

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <exception>
#include <fstream>
#include <iterator>
#include <limits>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "satjam/binary_io.hpp"
#include "satjam/channel.hpp"
#include "satjam/errors.hpp"
#include "satjam/features.hpp"
#include "satjam/jammer.hpp"
#include "satjam/random.hpp"
#include "satjam/waveform.hpp"

namespace satjam {

enum class Split : std::uint8_t { Train = 0, Test = 1 };

inline std::string_view to_string(Split s) { return s == Split::Train ? "train" : "test"; }

struct ScenarioSpec {
  std::string name = "scenario";
  std::vector<double> snr_levels{15.0};
  std::vector<double> sjr_levels{-20.0, -15.0, -10.0, -5.0, 0.0};
  std::vector<AttackKind> attack_kinds{AttackKind::Barrage, AttackKind::PilotTone, AttackKind::Intermittent};
  std::size_t n_train = 400;
  std::size_t n_test = 400;
  Seed seed = 1;

  WaveformConfig waveform{};
  AttackSpec attack_pattern{};  // periods/phases; kind and SJR are set per sample
  double k_factor = 5.0;
  StftPlan stft{};

  std::size_t count(Split s) const { return s == Split::Train ? n_train : n_test; }

  void validate() const {
    waveform.validate();
    attack_pattern.validate();
    stft.validate();
    if (n_train == 0 || n_test == 0) throw ConfigError("scenario: n_train and n_test must be > 0");
    if (snr_levels.empty()) throw ConfigError("scenario: at least one SNR level is required");
    if (!(k_factor >= 0.0)) throw ConfigError("scenario: K factor must be >= 0");
    const bool needs_jammed = n_train >= 2 || n_test >= 2;
    if (needs_jammed && attack_kinds.empty()) throw ConfigError("scenario: jammed samples requested but no attack kinds");
    if (needs_jammed && sjr_levels.empty()) throw ConfigError("scenario: jammed samples requested but no SJR levels");
    for (auto k : attack_kinds)
      if (k == AttackKind::None) throw ConfigError("scenario: 'none' is not an attack kind");
  }
};

struct SampleInfo {
  std::size_t index = 0;
  Seed seed = 0;
  double snr_db = 0.0;
  std::optional<double> sjr_db;
  AttackKind attack = AttackKind::None;
  std::uint8_t label = 0;
};

struct Dataset {
  std::size_t rows = kImageSide;
  std::size_t cols = kImageSide;
  std::vector<Spectrogram> samples;
  std::vector<std::uint8_t> labels;
  std::vector<SampleInfo> info;
  Split split = Split::Train;
  nlohmann::json scenario = nlohmann::json::object();

  std::size_t size() const { return samples.size(); }
  std::size_t dim() const { return rows * cols; }

  std::size_t count_label(std::uint8_t l) const {
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), l));
  }
};

// Per-sample plan produced by the split rule: even indices are clean, odd
// indices jammed; jammed ordinals cycle over (attack, SJR) cells and then SNR,
// clean ordinals cycle over SNR.
inline SampleInfo plan_sample(const ScenarioSpec& spec, Split split, std::size_t index) {
  SampleInfo s;
  s.index = index;
  s.seed = derive_seed(spec.seed, {static_cast<std::uint64_t>(split) + 0x5a17ULL, index});
  const std::size_t n_snr = spec.snr_levels.size();
  const std::size_t ordinal = index / 2;
  if (index % 2 == 0) {
    s.label = 0;
    s.snr_db = spec.snr_levels[ordinal % n_snr];
    return s;
  }
  const std::size_t n_sjr = spec.sjr_levels.size();
  const std::size_t n_cells = spec.attack_kinds.size() * n_sjr;
  const std::size_t cell = ordinal % n_cells;
  s.label = 1;
  s.attack = spec.attack_kinds[cell / n_sjr];
  s.sjr_db = spec.sjr_levels[cell % n_sjr];
  s.snr_db = spec.snr_levels[(ordinal / n_cells) % n_snr];
  return s;
}

// Stage seeds of one sample.
enum class Stage : std::uint64_t { Bits = 1, Channel = 2, Noise = 3, Jam = 4, JamChannel = 5 };

inline Seed stage_seed(Seed sample_seed, Stage st) { return derive_seed(sample_seed, {static_cast<std::uint64_t>(st)}); }

// waveform -> channel -> noise -> jammer, all at RE level.
inline FrameGrid synthesize_grid(const ScenarioSpec& spec, const SampleInfo& s) {
  const auto& cfg = spec.waveform;
  FrameGrid grid = build_grid(cfg, stage_seed(s.seed, Stage::Bits));
  grid = apply_channel(std::move(grid), draw_rician(spec.k_factor, stage_seed(s.seed, Stage::Channel), cfg.frames_per_sample));
  grid = add_awgn(std::move(grid), s.snr_db, stage_seed(s.seed, Stage::Noise));
  if (s.attack != AttackKind::None) {
    AttackSpec atk = spec.attack_pattern;
    atk.kind = s.attack;
    atk.sjr_db = *s.sjr_db;
    JamMask mask = build_mask(atk, cfg);
    const double sigma_sq = calibrate_power(mask, 1.0, atk.sjr_db);
    auto pattern = draw_pattern(std::move(mask), sigma_sq, stage_seed(s.seed, Stage::Jam));
    grid = apply_attack(std::move(grid), pattern,
                        draw_rician(spec.k_factor, stage_seed(s.seed, Stage::JamChannel), cfg.frames_per_sample));
  }
  return grid;
}

inline Spectrogram synthesize_sample(const ScenarioSpec& spec, const SampleInfo& s) {
  Spectrogram img = spectrogram(ofdm_modulate(synthesize_grid(spec, s)), spec.stft);
  img.meta = {s.snr_db, s.sjr_db, s.attack};
  return img;
}

// Worker count: SATJAM_THREADS caps hardware concurrency.
inline std::size_t worker_count() {
  std::size_t n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("SATJAM_THREADS")) {
    const long cap = std::strtol(env, nullptr, 10);
    if (cap > 0) n = std::min(n, static_cast<std::size_t>(cap));
  }
  return n;
}

// Runs fn(i) for i in [0, n) across workers; callers write to slot i only.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  const std::size_t workers = std::min(worker_count(), std::max<std::size_t>(n, 1));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

inline nlohmann::json scenario_to_json(const ScenarioSpec& spec);

inline Dataset generate(const ScenarioSpec& spec, Split split) {
  spec.validate();
  const std::size_t n = spec.count(split);
  Dataset ds;
  ds.split = split;
  ds.scenario = scenario_to_json(spec);
  ds.info.resize(n);
  ds.samples.resize(n);
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    ds.info[i] = plan_sample(spec, split, i);
    ds.labels[i] = ds.info[i].label;
  }
  parallel_for(n, [&](std::size_t i) { ds.samples[i] = synthesize_sample(spec, ds.info[i]); });
  return ds;
}

// ---------------------------------------------------------------------------
// JSON helpers

inline nlohmann::json waveform_to_json(const WaveformConfig& w) {
  return {{"n_subcarriers", w.n_subcarriers}, {"n_occupied", w.n_occupied},   {"pilot_interval", w.pilot_interval},
          {"pilot_phase", w.pilot_phase},     {"n_pilots", w.n_pilots},       {"guard_len", w.guard_len},
          {"symbols_per_frame", w.symbols_per_frame}, {"frames_per_sample", w.frames_per_sample},
          {"modulation", "bpsk"}};
}

inline WaveformConfig waveform_from_json(const nlohmann::json& j, WaveformConfig w = {}) {
  w.n_subcarriers = j.value("n_subcarriers", w.n_subcarriers);
  w.n_occupied = j.value("n_occupied", w.n_occupied);
  w.pilot_interval = j.value("pilot_interval", w.pilot_interval);
  w.pilot_phase = j.value("pilot_phase", w.pilot_phase);
  w.n_pilots = j.value("n_pilots", w.n_pilots);
  w.guard_len = j.value("guard_len", w.guard_len);
  w.symbols_per_frame = j.value("symbols_per_frame", w.symbols_per_frame);
  w.frames_per_sample = j.value("frames_per_sample", w.frames_per_sample);
  if (j.value("modulation", std::string("bpsk")) != "bpsk") throw ConfigError("waveform: only BPSK is supported");
  return w;
}

inline nlohmann::json scenario_to_json(const ScenarioSpec& spec) {
  nlohmann::json kinds = nlohmann::json::array();
  for (auto k : spec.attack_kinds) kinds.push_back(std::string(to_string(k)));
  return {{"name", spec.name},
          {"snr_db", spec.snr_levels},
          {"sjr_db", spec.sjr_levels},
          {"attacks", kinds},
          {"n_train", spec.n_train},
          {"n_test", spec.n_test},
          {"seed", spec.seed},
          {"waveform", waveform_to_json(spec.waveform)},
          {"attack_pattern",
           {{"freq_period", spec.attack_pattern.freq_period},
            {"freq_phase", spec.attack_pattern.freq_phase},
            {"time_period", spec.attack_pattern.time_period},
            {"time_phase", spec.attack_pattern.time_phase}}},
          {"k_factor", spec.k_factor},
          {"stft",
           {{"nfft", spec.stft.nfft},
            {"window", spec.stft.window == WindowKind::Rect ? "rect" : "hann"},
            {"window_len", spec.stft.window_len},
            {"hop", spec.stft.hop}}}};
}

inline ScenarioSpec scenario_from_json(const nlohmann::json& j) {
  ScenarioSpec s;
  try {
    s.name = j.value("name", s.name);
    if (j.contains("snr_db")) s.snr_levels = j.at("snr_db").get<std::vector<double>>();
    if (j.contains("sjr_db")) s.sjr_levels = j.at("sjr_db").get<std::vector<double>>();
    if (j.contains("attacks")) {
      s.attack_kinds.clear();
      for (const auto& k : j.at("attacks")) s.attack_kinds.push_back(attack_from_string(k.get<std::string>()));
    }
    s.n_train = j.value("n_train", s.n_train);
    s.n_test = j.value("n_test", s.n_test);
    s.seed = j.value("seed", s.seed);
    if (j.contains("waveform")) s.waveform = waveform_from_json(j.at("waveform"));
    if (j.contains("attack_pattern")) {
      const auto& a = j.at("attack_pattern");
      s.attack_pattern.freq_period = a.value("freq_period", s.attack_pattern.freq_period);
      s.attack_pattern.freq_phase = a.value("freq_phase", s.attack_pattern.freq_phase);
      s.attack_pattern.time_period = a.value("time_period", s.attack_pattern.time_period);
      s.attack_pattern.time_phase = a.value("time_phase", s.attack_pattern.time_phase);
    }
    s.k_factor = j.value("k_factor", s.k_factor);
    if (j.contains("stft")) {
      const auto& p = j.at("stft");
      s.stft.nfft = p.value("nfft", s.stft.nfft);
      const auto win = p.value("window", std::string("rect"));
      if (win == "rect") s.stft.window = WindowKind::Rect;
      else if (win == "hann") s.stft.window = WindowKind::Hann;
      else throw ConfigError("stft: unknown window '" + win + "'");
      s.stft.window_len = p.value("window_len", s.stft.window_len);
      s.stft.hop = p.value("hop", s.stft.hop);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("scenario: ") + e.what());
  }
  s.validate();
  return s;
}

inline nlohmann::json manifest_of(const Dataset& ds) {
  nlohmann::json recs = nlohmann::json::array();
  for (const auto& r : ds.info) {
    nlohmann::json sjr = r.sjr_db ? nlohmann::json(*r.sjr_db) : nlohmann::json(nullptr);
    recs.push_back({{"index", r.index},
                    {"seed", r.seed},
                    {"snr_db", r.snr_db},
                    {"sjr_db", sjr},
                    {"attack", std::string(to_string(r.attack))},
                    {"label", r.label}});
  }
  return {{"format", "SJD1"}, {"split", std::string(to_string(ds.split))}, {"scenario", ds.scenario}, {"records", recs}};
}


inline constexpr std::uint8_t kDatasetVersion = 1;

inline std::string encode_dataset(const Dataset& ds) {
  io::Writer w;
  w.raw("SJD1", 4);
  w.u8(kDatasetVersion);
  w.u32(static_cast<std::uint32_t>(ds.size()));
  w.u32(static_cast<std::uint32_t>(ds.rows));
  w.u32(static_cast<std::uint32_t>(ds.cols));
  for (const auto& s : ds.samples) {
    if (s.pixels.size() != ds.dim()) throw ShapeError("save: sample dimensions differ from dataset dimensions");
    for (float p : s.pixels) w.f32(p);
  }
  for (auto l : ds.labels) w.u8(l);
  w.str(manifest_of(ds).dump());
  return w.finish();
}

inline Dataset decode_dataset(const std::string& bytes) {
  io::Reader r(bytes, "dataset");
  r.check_envelope("SJD1");
  const std::size_t version_at = r.offset();
  if (r.u8() != kDatasetVersion) throw FormatError("dataset: unsupported version", version_at);
  Dataset ds;
  const std::size_t n = r.u32();
  ds.rows = r.u32();
  ds.cols = r.u32();
  r.need(n * ds.dim() * 4 + n);
  ds.samples.resize(n);
  for (auto& s : ds.samples) {
    s.rows = ds.rows;
    s.cols = ds.cols;
    s.pixels.resize(ds.dim());
    for (auto& p : s.pixels) p = r.f32();
  }
  ds.labels.resize(n);
  for (auto& l : ds.labels) l = r.u8();
  const std::size_t manifest_at = r.offset();
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(r.str());
    ds.split = m.at("split").get<std::string>() == "test" ? Split::Test : Split::Train;
    ds.scenario = m.at("scenario");
    const auto& recs = m.at("records");
    if (recs.size() != n) throw FormatError("dataset: manifest length differs from sample count", manifest_at);
    ds.info.reserve(n);
    for (const auto& j : recs) {
      SampleInfo s;
      s.index = j.at("index").get<std::size_t>();
      s.seed = j.at("seed").get<Seed>();
      s.snr_db = j.at("snr_db").get<double>();
      if (!j.at("sjr_db").is_null()) s.sjr_db = j.at("sjr_db").get<double>();
      s.attack = attack_from_string(j.at("attack").get<std::string>());
      s.label = j.at("label").get<std::uint8_t>();
      ds.info.push_back(s);
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("dataset: bad manifest: ") + e.what(), manifest_at);
  } catch (const ConfigError& e) {
    throw FormatError(std::string("dataset: bad manifest: ") + e.what(), manifest_at);
  }
  r.expect_end();
  for (std::size_t i = 0; i < n; ++i) {
    if (ds.info[i].label != ds.labels[i]) throw FormatError("dataset: label disagrees with manifest", manifest_at);
    ds.samples[i].meta = {ds.info[i].snr_db, ds.info[i].sjr_db, ds.info[i].attack};
  }
  return ds;
}

inline void save(const Dataset& ds, const std::string& path) { io::write_file(path, encode_dataset(ds)); }

inline Dataset load(const std::string& path) { return decode_dataset(io::read_file(path)); }

}  // namespace satjam
