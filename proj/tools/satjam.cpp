// satjam: generate datasets, train and evaluate the two detectors, export
// spectrograms and tabulate accuracy over SNR.
//
// Exit codes: 0 ok, 1 unexpected, 2 config/usage, 3 file format,
// 4 training, 5 missing file / IO, 6 shape mismatch.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "satjam/experiment.hpp"

namespace {

struct CommonOpts {
  std::string config;
  bool full_scale = false;
  std::optional<satjam::Seed> seed;
  std::optional<std::string> out;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--config", o.config, "experiment config (JSON)")->required();
  cmd->add_flag("--full-scale", o.full_scale, "full-size sample counts and 10 frames per sample");
  cmd->add_option("--seed", o.seed, "override the experiment seed");
  cmd->add_option("--out", o.out, "override the output directory");
}

satjam::ExperimentConfig load_config(const CommonOpts& o) {
  auto cfg = satjam::ExperimentConfig::load(o.config);
  if (o.seed) cfg.seed = *o.seed;
  if (o.out) cfg.output_dir = *o.out;
  if (o.full_scale) cfg.full_scale = true;
  cfg.resolved_scenario().validate();
  return cfg;
}

satjam::Split parse_split(const std::string& s) {
  if (s == "train") return satjam::Split::Train;
  if (s == "test") return satjam::Split::Test;
  throw satjam::ConfigError("--split must be train or test");
}

int run(int argc, char** argv) {
  CLI::App app{"Satellite OFDM jamming simulation and detection"};
  app.set_version_flag("--version", satjam::version_string());
  app.require_subcommand(1);

  CommonOpts gen_o, train_o, eval_o, exp_o, rep_o;
  auto* gen = app.add_subcommand("generate", "synthesize train/test spectrogram datasets");
  add_common(gen, gen_o);
  auto* train = app.add_subcommand("train", "train the configured detectors");
  add_common(train, train_o);
  auto* eval = app.add_subcommand("evaluate", "score trained detectors and write report.json");
  add_common(eval, eval_o);
  std::string eval_split = "test";
  eval->add_option("--split", eval_split, "dataset split to score (train|test)");
  auto* exp = app.add_subcommand("export-spectrogram", "write one dataset sample as a PGM image");
  add_common(exp, exp_o);
  std::size_t exp_index = 0;
  std::string exp_split = "train";
  exp->add_option("--index", exp_index, "sample index")->required();
  exp->add_option("--split", exp_split, "dataset split (train|test)");
  auto* rep = app.add_subcommand("reproduce", "accuracy table over SNR for both detectors");
  add_common(rep, rep_o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  if (gen->parsed()) {
    const auto cfg = load_config(gen_o);
    const auto d = satjam::cmd_generate(cfg);
    std::printf("generated %zu train / %zu test samples in %s\n", d.train.size(), d.test.size(),
                cfg.output_dir.c_str());
  } else if (train->parsed()) {
    const auto cfg = load_config(train_o);
    const auto m = satjam::cmd_train(cfg);
    if (m.cnn) {
      std::printf("cnn: best epoch %s, final loss %.4f\n", m.cnn->meta.at("best_epoch").dump().c_str(),
                  m.trace.empty() ? 0.0 : m.trace.back().loss);
    }
    if (m.svm) std::printf("svm: trained\n");
  } else if (eval->parsed()) {
    const auto cfg = load_config(eval_o);
    const auto r = satjam::cmd_evaluate(cfg, parse_split(eval_split));
    std::fputs(r.table.c_str(), stdout);
  } else if (exp->parsed()) {
    const auto cfg = load_config(exp_o);
    for (const auto& p : satjam::cmd_export_spectrogram(cfg, exp_index, parse_split(exp_split)))
      std::printf("%s\n", p.string().c_str());
  } else if (rep->parsed()) {
    const auto cfg = load_config(rep_o);
    const auto r = satjam::cmd_reproduce(cfg);
    std::fputs(r.table.c_str(), stdout);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const satjam::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const satjam::FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return 3;
  } catch (const satjam::TrainingError& e) {
    std::cerr << "training error: " << e.what() << "\n";
    return 4;
  } catch (const satjam::IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 5;
  } catch (const satjam::ShapeError& e) {
    std::cerr << "shape error: " << e.what() << "\n";
    return 6;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
