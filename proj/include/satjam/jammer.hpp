#pragma once

// Barrage, pilot-tone and intermittent jamming composed onto a received grid
// as Y = H1 X + W + H2 J.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "satjam/channel.hpp"
#include "satjam/errors.hpp"
#include "satjam/random.hpp"
#include "satjam/waveform.hpp"

namespace satjam {

enum class AttackKind : std::uint8_t { None = 0, Barrage = 1, PilotTone = 2, Intermittent = 3 };

inline std::string_view to_string(AttackKind k) {
  switch (k) {
    case AttackKind::None: return "none";
    case AttackKind::Barrage: return "barrage";
    case AttackKind::PilotTone: return "pilot_tone";
    case AttackKind::Intermittent: return "intermittent";
  }
  throw DomainError("unknown attack kind");
}

inline AttackKind attack_from_string(std::string_view s) {
  if (s == "none") return AttackKind::None;
  if (s == "barrage") return AttackKind::Barrage;
  if (s == "pilot_tone" || s == "pilot") return AttackKind::PilotTone;
  if (s == "intermittent") return AttackKind::Intermittent;
  throw ConfigError("unknown attack kind '" + std::string(s) + "'");
}

struct AttackSpec {
  AttackKind kind = AttackKind::None;
  double sjr_db = 0.0;
  // Intermittent pattern: k ≡ freq_phase (mod freq_period) on OFDM symbols
  // m ≡ time_phase (mod time_period), m counted across the whole sample.
  std::size_t freq_period = 8;
  std::size_t freq_phase = 4;
  std::size_t time_period = 10;
  std::size_t time_phase = 5;

  void validate() const {
    if (freq_period == 0 || freq_phase >= freq_period)
      throw ConfigError("attack: freq_phase must be < freq_period");
    if (time_period == 0 || time_phase >= time_period)
      throw ConfigError("attack: time_phase must be < time_period");
  }
};

// Active resource elements, indexed [symbol][occupied subcarrier].
struct JamMask {
  std::size_t n_symbols = 0;
  std::size_t n_occupied = 0;
  std::vector<std::uint8_t> active;

  bool operator()(std::size_t s, std::size_t k) const { return active[s * n_occupied + k] != 0; }

  std::size_t count() const {
    return static_cast<std::size_t>(std::count(active.begin(), active.end(), std::uint8_t{1}));
  }
  bool empty() const { return count() == 0; }
};

// Complex jamming values on the active REs, in row-major (symbol, subcarrier)
// order of the mask.
struct JammingPattern {
  JamMask mask;
  std::vector<cplx> values;
  double sigma_sq = 0.0;
};

inline JamMask build_mask(const AttackSpec& spec, const WaveformConfig& cfg) {
  spec.validate();
  JamMask mask{cfg.n_symbols(), cfg.n_occupied, std::vector<std::uint8_t>(cfg.n_symbols() * cfg.n_occupied, 0)};
  for (std::size_t s = 0; s < mask.n_symbols; ++s) {
    for (std::size_t k = 0; k < mask.n_occupied; ++k) {
      bool on = false;
      switch (spec.kind) {
        case AttackKind::None: break;
        case AttackKind::Barrage: on = true; break;
        case AttackKind::PilotTone: on = cfg.is_pilot(k); break;
        case AttackKind::Intermittent:
          on = k % spec.freq_period == spec.freq_phase && s % spec.time_period == spec.time_phase;
          break;
        default: throw DomainError("build_mask: unknown attack kind");
      }
      mask.active[s * mask.n_occupied + k] = on ? 1 : 0;
    }
  }
  return mask;
}

// Jamming variance per active RE for a target SJR relative to grid_power.
inline double calibrate_power(const JamMask& mask, double grid_power, double sjr_db) {
  if (std::isfinite(sjr_db) && mask.empty()) throw DomainError("calibrate_power: empty mask with finite SJR");
  if (std::isinf(sjr_db) && sjr_db > 0) return 0.0;
  return grid_power / std::pow(10.0, sjr_db / 10.0);
}

inline JammingPattern draw_pattern(JamMask mask, double sigma_sq, Seed seed) {
  Rng rng(seed);
  JammingPattern p;
  p.sigma_sq = sigma_sq;
  p.values.reserve(mask.count());
  for (auto a : mask.active)
    if (a) p.values.push_back(rng.complex_normal(sigma_sq));
  p.mask = std::move(mask);
  return p;
}

inline FrameGrid apply_attack(FrameGrid grid, const JammingPattern& pattern, const ChannelRealization& h2) {
  if (pattern.mask.active.empty()) return grid;
  const auto& cfg = grid.layout();
  if (pattern.mask.n_symbols != grid.n_symbols() || pattern.mask.n_occupied != cfg.n_occupied)
    throw ShapeError("apply_attack: mask shape does not match grid");
  if (h2.gains.size() != grid.n_frames()) throw ShapeError("apply_attack: jammer channel frame count mismatch");
  std::size_t v = 0;
  for (std::size_t s = 0; s < grid.n_symbols(); ++s) {
    const cplx g = h2.gains[s / cfg.symbols_per_frame];
    for (std::size_t k = 0; k < cfg.n_occupied; ++k) {
      if (!pattern.mask(s, k)) continue;
      if (v >= pattern.values.size()) throw ShapeError("apply_attack: fewer values than active elements");
      grid.re(s, k) += g * pattern.values[v++];
    }
  }
  return grid;
}

}  // namespace satjam
