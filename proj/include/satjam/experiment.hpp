#pragma once

// Experiment harness behind the `satjam` CLI: JSON experiment configs,
// dataset/model/report files under an output directory, and the
// accuracy-vs-SNR reproduction table.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "satjam/dataset.hpp"
#include "satjam/detectors/cnn.hpp"
#include "satjam/detectors/pca_svm.hpp"
#include "satjam/errors.hpp"
#include "satjam/features.hpp"
#include "satjam/model_io.hpp"

#ifndef SATJAM_VERSION
#define SATJAM_VERSION "0.1.0"
#endif

namespace satjam {

namespace fs = std::filesystem;

inline std::string version_string() { return SATJAM_VERSION; }

enum class DetectorChoice { Cnn, Svm, Both };

struct ExperimentConfig {
  std::string name = "experiment";
  Seed seed = 1;
  std::string output_dir = "out";
  ScenarioSpec scenario{};
  DetectorChoice detector = DetectorChoice::Both;
  CnnArch arch = CnnArch::reference();
  TrainConfig train{};
  PcaSvmConfig svm{};
  std::vector<double> reproduce_snr{5.0, 10.0, 15.0};
  bool reproduce_mixed = false;
  // Full-scale sample counts, applied by --full-scale.
  std::optional<std::size_t> full_n_train, full_n_test;
  bool full_scale = false;

  bool wants_cnn() const { return detector != DetectorChoice::Svm; }
  bool wants_svm() const { return detector != DetectorChoice::Cnn; }

  bool intermittent_only() const {
    return scenario.attack_kinds.size() == 1 && scenario.attack_kinds[0] == AttackKind::Intermittent;
  }

  // Scenario with the experiment seed and any full-scale overrides applied.
  ScenarioSpec resolved_scenario() const {
    ScenarioSpec s = scenario;
    s.seed = derive_seed(seed, {0x5ce});
    if (full_scale) {
      s.waveform.frames_per_sample = 10;
      s.n_train = full_n_train.value_or(intermittent_only() ? 2000 : 6000);
      s.n_test = full_n_test.value_or(intermittent_only() ? 3000 : 9000);
    }
    return s;
  }

  TrainConfig resolved_train() const {
    TrainConfig t = train;
    t.seed = derive_seed(seed, {0xc22});
    return t;
  }

  PcaSvmConfig resolved_svm() const {
    PcaSvmConfig c = svm;
    c.svm.seed = derive_seed(seed, {0x5f3});
    return c;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["name"] = name;
    j["seed"] = seed;
    j["output_dir"] = output_dir;
    j["scenario"] = scenario_to_json(scenario);
    j["detector"] = detector == DetectorChoice::Cnn ? "cnn" : detector == DetectorChoice::Svm ? "svm" : "both";
    j["cnn"] = {{"arch", arch.to_json()}, {"train", train.to_json()}};
    j["svm"] = svm.to_json();
    j["reproduce"] = {{"snr_db", reproduce_snr}, {"mixed", reproduce_mixed}};
    nlohmann::json fsj = nlohmann::json::object();
    if (full_n_train) fsj["n_train"] = *full_n_train;
    if (full_n_test) fsj["n_test"] = *full_n_test;
    j["full_scale"] = fsj;
    j["full_scale_enabled"] = full_scale;
    return j;
  }

  static ExperimentConfig from_json(const nlohmann::json& j) {
    ExperimentConfig c;
    try {
      c.name = j.value("name", c.name);
      c.seed = j.value("seed", c.seed);
      c.output_dir = j.value("output_dir", c.output_dir);
      if (j.contains("scenario")) c.scenario = scenario_from_json(j.at("scenario"));
      const auto det = j.value("detector", std::string("both"));
      if (det == "cnn") c.detector = DetectorChoice::Cnn;
      else if (det == "svm") c.detector = DetectorChoice::Svm;
      else if (det == "both") c.detector = DetectorChoice::Both;
      else throw ConfigError("detector must be cnn, svm or both");
      if (j.contains("cnn")) {
        const auto& cj = j.at("cnn");
        if (cj.contains("arch")) c.arch = CnnArch::from_json(cj.at("arch"));
        else if (cj.contains("hidden")) c.arch = CnnArch::reference(cj.at("hidden").get<std::size_t>());
        if (cj.contains("train")) c.train = TrainConfig::from_json(cj.at("train"));
      }
      if (j.contains("svm")) c.svm = PcaSvmConfig::from_json(j.at("svm"));
      if (j.contains("reproduce")) {
        const auto& r = j.at("reproduce");
        if (r.contains("snr_db")) c.reproduce_snr = r.at("snr_db").get<std::vector<double>>();
        c.reproduce_mixed = r.value("mixed", false);
      }
      if (j.contains("full_scale")) {
        const auto& f = j.at("full_scale");
        if (f.contains("n_train")) c.full_n_train = f.at("n_train").get<std::size_t>();
        if (f.contains("n_test")) c.full_n_test = f.at("n_test").get<std::size_t>();
      }
      c.full_scale = j.value("full_scale_enabled", false);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }
    c.arch.validate();
    c.train.validate();
    if (c.arch.input != ml::Shape{1, kImageSide, kImageSide}) throw ConfigError("cnn: input must be [1, 96, 96]");
    c.resolved_scenario().validate();
    return c;
  }

  static ExperimentConfig load(const std::string& path) {
    std::string text;
    try {
      text = io::read_file(path);
    } catch (const IoError&) {
      throw;
    }
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("config '" + path + "': " + e.what());
    }
    return from_json(j);
  }
};

// ---------------------------------------------------------------------------
// Reports

struct Confusion {
  std::size_t tn = 0, fp = 0, fn = 0, tp = 0;
  std::size_t total() const { return tn + fp + fn + tp; }
  double accuracy() const { return total() ? static_cast<double>(tn + tp) / static_cast<double>(total()) : 0.0; }
};

// Rounded to 0.1 percentage points.
inline double round_acc(double a) { return std::round(a * 1000.0) / 1000.0; }

struct DetectorReport {
  Confusion confusion;
  std::map<std::string, std::pair<std::size_t, std::size_t>> per_sjr;     // key -> (correct, total)
  std::map<std::string, std::pair<std::size_t, std::size_t>> per_attack;
  std::map<std::string, std::pair<std::size_t, std::size_t>> per_snr;

  double accuracy() const { return confusion.accuracy(); }

  nlohmann::json to_json() const {
    auto table = [](const auto& m) {
      nlohmann::json j = nlohmann::json::object();
      for (const auto& [k, v] : m)
        j[k] = {{"accuracy", round_acc(static_cast<double>(v.first) / static_cast<double>(v.second))}, {"n", v.second}};
      return j;
    };
    return {{"accuracy", round_acc(accuracy())},
            {"confusion", {{"tn", confusion.tn}, {"fp", confusion.fp}, {"fn", confusion.fn}, {"tp", confusion.tp}}},
            {"per_sjr", table(per_sjr)},
            {"per_attack", table(per_attack)},
            {"per_snr", table(per_snr)}};
  }
};

inline std::string db_key(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

inline DetectorReport score(const Dataset& ds, const std::vector<std::uint8_t>& predicted) {
  if (predicted.size() != ds.size()) throw ShapeError("score: prediction count differs from dataset size");
  DetectorReport r;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const bool truth = ds.labels[i] != 0, pred = predicted[i] != 0;
    if (truth && pred) ++r.confusion.tp;
    else if (truth) ++r.confusion.fn;
    else if (pred) ++r.confusion.fp;
    else ++r.confusion.tn;
    const std::size_t ok = truth == pred ? 1 : 0;
    const auto& info = ds.info[i];
    auto bump = [&](auto& m, const std::string& k) {
      m[k].first += ok;
      m[k].second += 1;
    };
    bump(r.per_sjr, info.sjr_db ? db_key(*info.sjr_db) : std::string("clean"));
    bump(r.per_attack, std::string(to_string(info.attack)));
    bump(r.per_snr, db_key(info.snr_db));
  }
  return r;
}

// ---------------------------------------------------------------------------
// Pipeline steps

struct ExperimentPaths {
  fs::path dir;
  fs::path train_ds() const { return dir / "train.sjd"; }
  fs::path test_ds() const { return dir / "test.sjd"; }
  fs::path cnn_model() const { return dir / "cnn.sjm"; }
  fs::path cnn_trace() const { return dir / "cnn_trace.csv"; }
  fs::path svm_model() const { return dir / "svm.sjm"; }
  fs::path report() const { return dir / "report.json"; }
  fs::path runtime() const { return dir / "runtime.json"; }
  fs::path config() const { return dir / "config.json"; }
};

inline void write_text(const fs::path& p, const std::string& s) { io::write_file(p.string(), s); }

inline ExperimentPaths prepare_output(const ExperimentConfig& cfg) {
  ExperimentPaths p{cfg.output_dir};
  std::error_code ec;
  fs::create_directories(p.dir, ec);
  if (ec) throw IoError("cannot create output directory '" + p.dir.string() + "': " + ec.message());
  write_text(p.config(), cfg.to_json().dump(2) + "\n");
  return p;
}

inline void require_file(const fs::path& p, const char* hint) {
  if (!fs::exists(p)) throw IoError("missing '" + p.string() + "' (" + hint + ")");
}

struct GeneratedData {
  Dataset train, test;
};

inline GeneratedData cmd_generate(const ExperimentConfig& cfg) {
  const auto paths = prepare_output(cfg);
  const auto spec = cfg.resolved_scenario();
  GeneratedData d{generate(spec, Split::Train), generate(spec, Split::Test)};
  save(d.train, paths.train_ds().string());
  save(d.test, paths.test_ds().string());
  return d;
}

struct TrainedModels {
  std::optional<ModelParams> cnn, svm;
  std::vector<EpochTrace> trace;
};

inline TrainedModels train_models(const ExperimentConfig& cfg, const Dataset& train) {
  TrainedModels m;
  if (cfg.wants_cnn()) {
    auto res = cnn_train(train, cfg.arch, cfg.resolved_train());
    m.cnn = std::move(res.params);
    m.trace = std::move(res.trace);
  }
  if (cfg.wants_svm()) {
    const auto scfg = cfg.resolved_svm();
    m.svm = to_params(pca_svm_train(train, scfg), scfg);
  }
  return m;
}

inline TrainedModels cmd_train(const ExperimentConfig& cfg) {
  const auto paths = prepare_output(cfg);
  require_file(paths.train_ds(), "run `satjam generate` first");
  const auto train = load(paths.train_ds().string());
  auto m = train_models(cfg, train);
  if (m.cnn) {
    save_model(*m.cnn, paths.cnn_model().string());
    write_text(paths.cnn_trace(), trace_csv(m.trace));
  }
  if (m.svm) save_model(*m.svm, paths.svm_model().string());
  return m;
}

inline std::vector<std::uint8_t> predict(const ModelParams& model, const Dataset& ds) {
  if (model.kind == "cnn") return cnn_predict(model, ds.samples).labels;
  if (model.kind == "pca_svm") return pca_svm_predict(pca_svm_from_params(model), ds.samples);
  throw FormatError("unknown model kind '" + model.kind + "'", 5);
}

inline nlohmann::json build_report(const ExperimentConfig& cfg, Split split,
                                   const std::map<std::string, DetectorReport>& results) {
  nlohmann::json dets = nlohmann::json::object();
  for (const auto& [name, r] : results) dets[name] = r.to_json();
  return {{"version", version_string()}, {"config", cfg.to_json()}, {"split", std::string(to_string(split))}, {"detectors", dets}};
}

inline std::string format_table(const std::map<std::string, DetectorReport>& results) {
  std::ostringstream os;
  char line[160];
  for (const auto& [name, r] : results) {
    std::snprintf(line, sizeof line, "%-8s accuracy %5.1f%%  (tn=%zu fp=%zu fn=%zu tp=%zu)\n", name.c_str(),
                  100.0 * round_acc(r.accuracy()), r.confusion.tn, r.confusion.fp, r.confusion.fn, r.confusion.tp);
    os << line;
    for (const auto* group : {&r.per_attack, &r.per_sjr}) {
      for (const auto& [k, v] : *group) {
        std::snprintf(line, sizeof line, "  %-14s %5.1f%%  n=%zu\n", k.c_str(),
                      100.0 * round_acc(static_cast<double>(v.first) / static_cast<double>(v.second)), v.second);
        os << line;
      }
    }
  }
  return os.str();
}

struct EvaluateResult {
  nlohmann::json report;
  std::map<std::string, DetectorReport> detectors;
  std::string table;
};

inline EvaluateResult cmd_evaluate(const ExperimentConfig& cfg, Split split = Split::Test) {
  const auto paths = prepare_output(cfg);
  const auto ds_path = split == Split::Test ? paths.test_ds() : paths.train_ds();
  require_file(ds_path, "run `satjam generate` first");
  const auto ds = load(ds_path.string());
  EvaluateResult res;
  const auto t0 = std::chrono::steady_clock::now();
  if (cfg.wants_cnn()) {
    require_file(paths.cnn_model(), "run `satjam train` first");
    res.detectors["cnn"] = score(ds, predict(load_model(paths.cnn_model().string()), ds));
  }
  if (cfg.wants_svm()) {
    require_file(paths.svm_model(), "run `satjam train` first");
    res.detectors["svm"] = score(ds, predict(load_model(paths.svm_model().string()), ds));
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  res.report = build_report(cfg, split, res.detectors);
  res.table = format_table(res.detectors);
  const auto report_path = split == Split::Test ? paths.report() : paths.dir / "report_train.json";
  write_text(report_path, res.report.dump(2) + "\n");
  // Wall-clock numbers live outside the report so reports stay byte-identical.
  write_text(paths.runtime(), nlohmann::json{{"evaluate_seconds", secs}, {"samples", ds.size()}}.dump(2) + "\n");
  return res;
}

inline std::vector<fs::path> cmd_export_spectrogram(const ExperimentConfig& cfg, std::size_t index,
                                                    Split split = Split::Train) {
  const auto paths = prepare_output(cfg);
  const auto ds_path = split == Split::Test ? paths.test_ds() : paths.train_ds();
  require_file(ds_path, "run `satjam generate` first");
  const auto ds = load(ds_path.string());
  if (index >= ds.size())
    throw ConfigError("export-spectrogram: index " + std::to_string(index) + " out of range (" +
                      std::to_string(ds.size()) + " samples)");
  const auto& info = ds.info[index];
  const std::string stem = "spectrogram_" + std::string(to_string(split)) + "_" + std::to_string(index) + "_" +
                           std::string(to_string(info.attack)) +
                           (info.sjr_db ? "_sjr" + db_key(*info.sjr_db) : std::string()) + ".pgm";
  const auto out = paths.dir / stem;
  write_pgm(ds.samples[index], out.string());
  return {out};
}

// ---------------------------------------------------------------------------
// Accuracy-vs-SNR reproduction

struct ReferencePoint {
  double cnn, svm;
};

// Accuracies reported for the two experiment families at 5/10/15 dB, plus
// the mixed-SNR intermittent result.
inline std::optional<ReferencePoint> reference_point(bool intermittent_only, std::optional<double> snr_db) {
  if (!snr_db) return intermittent_only ? std::optional<ReferencePoint>({0.960, 0.849}) : std::nullopt;
  const int snr = static_cast<int>(std::lround(*snr_db));
  if (intermittent_only) {
    if (snr == 5) return ReferencePoint{0.804, 0.834};
    if (snr == 10) return ReferencePoint{0.888, 0.847};
    if (snr == 15) return ReferencePoint{0.931, 0.861};
  } else {
    if (snr == 5) return ReferencePoint{0.921, 0.906};
    if (snr == 10) return ReferencePoint{0.995, 0.913};
    if (snr == 15) return ReferencePoint{0.997, 0.918};
  }
  return std::nullopt;
}

struct ReproduceRow {
  std::optional<double> snr_db;  // empty: mixed-SNR dataset
  double cnn = 0.0, svm = 0.0;
  std::optional<ReferencePoint> reference;
  DetectorReport cnn_report, svm_report;
};

struct ReproduceResult {
  std::vector<ReproduceRow> rows;
  nlohmann::json json;
  std::string table;
};

inline ReproduceRow run_reproduce_point(const ExperimentConfig& base, std::optional<double> snr, std::size_t point) {
  ExperimentConfig cfg = base;
  cfg.detector = DetectorChoice::Both;
  if (snr) cfg.scenario.snr_levels = {*snr};
  else cfg.scenario.snr_levels = base.reproduce_snr;
  cfg.seed = derive_seed(base.seed, {0x7e9, point});
  const auto spec = cfg.resolved_scenario();
  const auto train = generate(spec, Split::Train);
  const auto test = generate(spec, Split::Test);
  const auto models = train_models(cfg, train);
  ReproduceRow row;
  row.snr_db = snr;
  row.cnn_report = score(test, predict(*models.cnn, test));
  row.svm_report = score(test, predict(*models.svm, test));
  row.cnn = round_acc(row.cnn_report.accuracy());
  row.svm = round_acc(row.svm_report.accuracy());
  row.reference = reference_point(cfg.intermittent_only(), snr);
  return row;
}

inline ReproduceResult cmd_reproduce(const ExperimentConfig& cfg, bool write_files = true) {
  ReproduceResult res;
  std::size_t point = 0;
  for (double snr : cfg.reproduce_snr) res.rows.push_back(run_reproduce_point(cfg, snr, point++));
  if (cfg.reproduce_mixed) res.rows.push_back(run_reproduce_point(cfg, std::nullopt, point++));

  nlohmann::json rows = nlohmann::json::array();
  std::ostringstream os;
  os << (cfg.intermittent_only() ? "intermittent-only" : "all attacks") << " detection accuracy (%)\n";
  os << "  SNR     CNN    SVM     ref CNN    ref SVM\n";
  char line[160];
  for (const auto& r : res.rows) {
    nlohmann::json j{{"snr_db", r.snr_db ? nlohmann::json(*r.snr_db) : nlohmann::json("mixed")},
                     {"cnn", r.cnn},
                     {"svm", r.svm},
                     {"cnn_report", r.cnn_report.to_json()},
                     {"svm_report", r.svm_report.to_json()}};
    if (r.reference) j["reference"] = {{"cnn", r.reference->cnn}, {"svm", r.reference->svm}};
    rows.push_back(j);
    const std::string snr = r.snr_db ? db_key(*r.snr_db) + " dB" : "mixed";
    if (r.reference)
      std::snprintf(line, sizeof line, "  %-6s %5.1f  %5.1f   %7.1f    %7.1f\n", snr.c_str(), 100 * r.cnn, 100 * r.svm,
                    100 * r.reference->cnn, 100 * r.reference->svm);
    else
      std::snprintf(line, sizeof line, "  %-6s %5.1f  %5.1f         -          -\n", snr.c_str(), 100 * r.cnn, 100 * r.svm);
    os << line;
  }
  res.table = os.str();
  res.json = {{"version", version_string()},
              {"config", cfg.to_json()},
              {"family", cfg.intermittent_only() ? "intermittent" : "all_attacks"},
              {"rows", rows}};
  if (write_files) {
    const auto paths = prepare_output(cfg);
    write_text(paths.dir / "reproduce.json", res.json.dump(2) + "\n");
    write_text(paths.dir / "reproduce.txt", res.table);
  }
  return res;
}

}  // namespace satjam
