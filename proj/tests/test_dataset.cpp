#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <map>
#include <set>

#include "satjam/dataset.hpp"

using namespace satjam;

namespace {

ScenarioSpec small_spec() {
  ScenarioSpec s;
  s.waveform.frames_per_sample = 1;
  s.n_train = 12;
  s.n_test = 8;
  s.seed = 17;
  return s;
}

bool same_pixels(const Spectrogram& a, const Spectrogram& b) { return a.pixels == b.pixels; }

std::string temp_path(const char* name) { return (std::filesystem::temp_directory_path() / name).string(); }

}  // namespace

TEST(SplitRule, IntermittentOnlyCounts) {
  ScenarioSpec s;
  s.attack_kinds = {AttackKind::Intermittent};
  s.n_train = 2000;
  std::map<double, int> per_sjr;
  int clean = 0;
  for (std::size_t i = 0; i < s.n_train; ++i) {
    const auto p = plan_sample(s, Split::Train, i);
    if (p.label == 0) ++clean;
    else ++per_sjr[*p.sjr_db];
  }
  EXPECT_EQ(clean, 1000);
  ASSERT_EQ(per_sjr.size(), 5u);
  for (const auto& [sjr, n] : per_sjr) EXPECT_EQ(n, 200) << sjr;
}

TEST(SplitRule, AllAttacksCellCounts) {
  ScenarioSpec s;
  s.n_train = 6000;
  std::map<std::pair<int, double>, int> cells;
  for (std::size_t i = 0; i < s.n_train; ++i) {
    const auto p = plan_sample(s, Split::Train, i);
    if (p.label) ++cells[{static_cast<int>(p.attack), *p.sjr_db}];
  }
  ASSERT_EQ(cells.size(), 15u);
  for (const auto& [cell, n] : cells) EXPECT_EQ(n, 200);
}

TEST(SplitRule, TwoSamples) {
  ScenarioSpec s;
  s.attack_kinds = {AttackKind::Barrage};
  s.sjr_levels = {-10.0};
  s.n_train = 2;
  const auto a = plan_sample(s, Split::Train, 0), b = plan_sample(s, Split::Train, 1);
  EXPECT_EQ(a.label, 0);
  EXPECT_EQ(a.attack, AttackKind::None);
  EXPECT_FALSE(a.sjr_db.has_value());
  EXPECT_EQ(b.label, 1);
  EXPECT_EQ(b.attack, AttackKind::Barrage);
  EXPECT_EQ(*b.sjr_db, -10.0);
}

TEST(SplitRule, SnrCyclesAfterCells) {
  ScenarioSpec s;
  s.snr_levels = {5.0, 10.0};
  s.attack_kinds = {AttackKind::Barrage};
  s.sjr_levels = {-20.0, 0.0};
  EXPECT_EQ(plan_sample(s, Split::Train, 1).snr_db, 5.0);
  EXPECT_EQ(plan_sample(s, Split::Train, 3).snr_db, 5.0);
  EXPECT_EQ(plan_sample(s, Split::Train, 5).snr_db, 10.0);
  EXPECT_EQ(plan_sample(s, Split::Train, 0).snr_db, 5.0);
  EXPECT_EQ(plan_sample(s, Split::Train, 2).snr_db, 10.0);
}

TEST(SplitRule, SeedsDifferAcrossSplits) {
  const auto s = small_spec();
  std::set<Seed> seeds;
  for (auto sp : {Split::Train, Split::Test})
    for (std::size_t i = 0; i < 100; ++i) seeds.insert(plan_sample(s, sp, i).seed);
  EXPECT_EQ(seeds.size(), 200u);
}

TEST(Scenario, Validation) {
  auto s = small_spec();
  s.n_train = 0;
  EXPECT_THROW(s.validate(), ConfigError);
  s = small_spec();
  s.attack_kinds.clear();
  EXPECT_THROW(s.validate(), ConfigError);
  s = small_spec();
  s.attack_kinds = {AttackKind::None};
  EXPECT_THROW(s.validate(), ConfigError);
  s = small_spec();
  s.snr_levels.clear();
  EXPECT_THROW(generate(s, Split::Train), ConfigError);
}

TEST(Scenario, JsonRoundTrip) {
  auto s = small_spec();
  s.snr_levels = {5, 10};
  s.attack_kinds = {AttackKind::PilotTone};
  const auto back = scenario_from_json(scenario_to_json(s));
  EXPECT_EQ(scenario_to_json(back), scenario_to_json(s));
  EXPECT_THROW(scenario_from_json({{"attacks", {"sweep"}}}), ConfigError);
}

TEST(Generate, LabelsAndMetadata) {
  const auto s = small_spec();
  const auto ds = generate(s, Split::Train);
  ASSERT_EQ(ds.size(), 12u);
  EXPECT_EQ(ds.count_label(0), 6u);
  EXPECT_EQ(ds.count_label(1), 6u);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    EXPECT_EQ(ds.labels[i], i % 2);
    EXPECT_EQ(ds.samples[i].pixels.size(), 96u * 96u);
    EXPECT_EQ(ds.samples[i].meta.attack, ds.info[i].attack);
  }
}

TEST(Generate, DeterministicAndThreadIndependent) {
  const auto s = small_spec();
  const auto a = generate(s, Split::Test);
  setenv("SATJAM_THREADS", "1", 1);
  const auto b = generate(s, Split::Test);
  unsetenv("SATJAM_THREADS");
  EXPECT_EQ(encode_dataset(a), encode_dataset(b));
}

TEST(Generate, NoSampleSharedAcrossSplits) {
  const auto s = small_spec();
  const auto tr = generate(s, Split::Train), te = generate(s, Split::Test);
  for (const auto& x : tr.samples)
    for (const auto& y : te.samples) EXPECT_FALSE(same_pixels(x, y));
}

TEST(Generate, SeedChangesData) {
  auto s = small_spec();
  const auto a = generate(s, Split::Train);
  s.seed = 18;
  const auto b = generate(s, Split::Train);
  EXPECT_FALSE(same_pixels(a.samples[0], b.samples[0]));
}

TEST(DatasetFile, RoundTrip) {
  const auto ds = generate(small_spec(), Split::Train);
  const auto path = temp_path("satjam_rt.sjd");
  save(ds, path);
  const auto back = load(path);
  EXPECT_EQ(encode_dataset(back), encode_dataset(ds));
  EXPECT_EQ(back.split, Split::Train);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    EXPECT_TRUE(same_pixels(back.samples[i], ds.samples[i]));
    EXPECT_EQ(back.info[i].seed, ds.info[i].seed);
    EXPECT_EQ(back.info[i].sjr_db, ds.info[i].sjr_db);
  }
  std::filesystem::remove(path);
}

TEST(DatasetFile, Crc32KnownVector) { EXPECT_EQ(io::crc32_of("123456789"), 0xCBF43926u); }

TEST(DatasetFile, CorruptionDetected) {
  auto s = small_spec();
  s.n_train = 2;
  const auto bytes = encode_dataset(generate(s, Split::Train));

  auto flipped = bytes;
  flipped[100] ^= 0x01;
  try {
    decode_dataset(flipped);
    FAIL() << "corrupt payload accepted";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), bytes.size() - 4);
  }

  auto magic = bytes;
  magic[0] = 'X';
  try {
    decode_dataset(magic);
    FAIL() << "bad magic accepted";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 0u);
  }

  EXPECT_THROW(decode_dataset(bytes.substr(0, bytes.size() / 2)), FormatError);
  EXPECT_THROW(decode_dataset(""), FormatError);
}

TEST(DatasetFile, WrongVersionReportsOffset) {
  auto s = small_spec();
  s.n_train = 2;
  auto ds = generate(s, Split::Train);
  auto bytes = encode_dataset(ds);
  bytes[4] = 9;
  // Re-seal the CRC so the version check is what fails.
  const auto body = bytes.substr(0, bytes.size() - 4);
  const auto crc = io::crc32_of(body);
  for (int i = 0; i < 4; ++i) bytes[body.size() + i] = static_cast<char>((crc >> (8 * i)) & 0xff);
  try {
    decode_dataset(bytes);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 4u);
  }
}

TEST(DatasetFile, MissingFile) { EXPECT_THROW(load("/nonexistent/satjam.sjd"), IoError); }

// Same channel and noise draws with and without the intermittent jammer at
// SJR -20 dB, 20 seeds.
TEST(Separability, IntermittentJammerOverAttackedRows) {
  const WaveformConfig w;
  const std::size_t r0 = (w.bin_of(0) * 96 + 1023) / 1024 + 1, r1 = w.bin_of(w.n_occupied - 1) * 96 / 1024 - 1;
  int raw_up = 0, img_shift = 0;
  for (Seed sd = 0; sd < 20; ++sd) {
    ScenarioSpec s;
    s.seed = sd;
    s.waveform.frames_per_sample = 2;
    s.attack_kinds = {AttackKind::Intermittent};
    s.sjr_levels = {-20.0};
    const auto j = plan_sample(s, Split::Train, 1);
    ASSERT_EQ(j.attack, AttackKind::Intermittent);
    auto c = j;
    c.attack = AttackKind::None;
    c.sjr_db.reset();
    c.label = 0;

    const auto sc = stft(ofdm_modulate(synthesize_grid(s, c)), s.stft);
    const auto sj = stft(ofdm_modulate(synthesize_grid(s, j)), s.stft);
    double pc = 0, pj = 0;
    for (std::size_t t = 0; t < sc.cols; ++t)
      for (std::size_t o = w.pilot_phase; o < w.n_occupied; o += w.pilot_interval) {
        pc += std::log10(std::norm(sc(w.bin_of(o), t)) + 1e-12);
        pj += std::log10(std::norm(sj(w.bin_of(o), t)) + 1e-12);
      }
    raw_up += pj > pc;

    const auto ic = to_image(sc), ij = to_image(sj);
    double mc = 0, mj = 0;
    for (std::size_t r = r0; r <= r1; ++r)
      for (std::size_t k = 0; k < kImageSide; ++k) {
        mc += ic.pixels[r * kImageSide + k];
        mj += ij.pixels[r * kImageSide + k];
      }
    img_shift += std::fabs(mj - mc) > 1e-3 * (r1 - r0 + 1) * kImageSide;
  }
  EXPECT_GE(raw_up, 18);
  EXPECT_GE(img_shift, 18);
}
