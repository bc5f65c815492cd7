#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "privshield/experiment.hpp"

namespace {

using privshield::ConfigError;
using privshield::DivergenceError;
using privshield::ExperimentConfig;

ExperimentConfig load_config(const std::string& path, bool seed_set,
                             std::uint64_t seed) {
  if (path.empty()) throw ConfigError("--config is required");
  ExperimentConfig cfg = ExperimentConfig::load(path);
  if (seed_set) cfg.seed = seed;
  return cfg;
}

std::string resolve_out(const std::string& cli_out, const ExperimentConfig& cfg) {
  if (!cli_out.empty()) return cli_out;
  if (!cfg.out.empty()) return cfg.out;
  throw ConfigError("no output directory: pass --out or set 'out' in the config");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "privshield - learn and evaluate inversion-resistant image "
      "representations"};
  app.require_subcommand(1);

  std::string config_path, out_dir, checkpoint;
  std::uint64_t seed = 0;
  bool seed_set = false;
  auto add_common = [&](CLI::App* cmd, bool needs_checkpoint = false) {
    cmd->add_option("--config", config_path, "experiment config (JSON)");
    cmd->add_option("--out", out_dir, "output directory");
    cmd->add_option("--seed", seed, "override the config's global seed")
        ->each([&](const std::string&) { seed_set = true; });
    if (needs_checkpoint)
      cmd->add_option("--checkpoint", checkpoint,
                      "checkpoint directory with enc.ckpt and f.ckpt")
          ->required();
  };

  auto* gen = app.add_subcommand("generate", "render a synthetic dataset");
  add_common(gen);
  auto* train = app.add_subcommand("train", "run the alternating min-max training");
  add_common(train);
  auto* attack = app.add_subcommand(
      "attack", "attack a trained encoder and write the metric report");
  add_common(attack, true);

  std::vector<double> lambda2_list{0, 1, 5};
  int sweep_seeds = 3;
  auto* sweep_l2 = app.add_subcommand(
      "sweep-lambda2", "train/attack/eval across lambda2 values");
  add_common(sweep_l2);
  sweep_l2->add_option("--lambda2", lambda2_list,
                       "lambda2 grid (default 0 1 5)");
  sweep_l2->add_option("--seeds", sweep_seeds, "seeds per grid point (default 3)");

  std::vector<std::string> taps;
  int layer_seeds = 1;
  auto* sweep_layers = app.add_subcommand(
      "sweep-layers", "baseline-vs-adversarial ablation across encoder taps");
  add_common(sweep_layers);
  sweep_layers->add_option("--taps", taps,
                           "encoder taps (default: every conv stage plus fc)");
  sweep_layers->add_option("--seeds", layer_seeds,
                           "seeds per grid point (default 1)");

  std::vector<std::string> run_dirs;
  auto* report = app.add_subcommand("report",
                                    "merge metric reports and render plots");
  report->add_option("--out", out_dir, "output directory")->required();
  report->add_option("dirs", run_dirs, "run directories")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) {
      const auto cfg = load_config(config_path, seed_set, seed);
      privshield::cmd_generate(cfg, resolve_out(out_dir, cfg));
    } else if (train->parsed()) {
      const auto cfg = load_config(config_path, seed_set, seed);
      const auto result = privshield::cmd_train(cfg, resolve_out(out_dir, cfg));
      std::cout << "final checkpoint: " << result.final_checkpoint_dir << "\n";
    } else if (attack->parsed()) {
      const auto cfg = load_config(config_path, seed_set, seed);
      const auto report_out =
          privshield::cmd_attack(cfg, checkpoint, resolve_out(out_dir, cfg));
      std::printf("mean_mcc=%.4f face_sim=%.4f feature_sim=%.4f ssim=%.4f psnr=%.2f\n",
                  report_out.mean_mcc, report_out.face_sim, report_out.feature_sim,
                  report_out.ssim, report_out.psnr);
    } else if (sweep_l2->parsed()) {
      const auto cfg = load_config(config_path, seed_set, seed);
      privshield::cmd_sweep_lambda2(cfg, lambda2_list, resolve_out(out_dir, cfg),
                                    sweep_seeds);
    } else if (sweep_layers->parsed()) {
      const auto cfg = load_config(config_path, seed_set, seed);
      if (taps.empty()) {
        for (std::size_t i = 0; i < cfg.nets.encoder_stages.size(); ++i)
          taps.push_back("conv" + std::to_string(i + 1));
        taps.push_back("fc");
      }
      privshield::cmd_sweep_layers(cfg, taps, resolve_out(out_dir, cfg),
                                   layer_seeds);
    } else if (report->parsed()) {
      privshield::cmd_report(run_dirs, out_dir);
    }
  } catch (const ConfigError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const DivergenceError& e) {
    std::cerr << "training diverged: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
