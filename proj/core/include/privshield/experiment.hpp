#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "privshield/attacks.hpp"
#include "privshield/data.hpp"
#include "privshield/metrics.hpp"
#include "privshield/nets.hpp"
#include "privshield/trainer.hpp"

namespace privshield {

// Schema violation; the message enumerates every problem found.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(what) {}
};

struct DataConfig {
  std::optional<SynthConfig> synthetic;  // exactly one of synthetic/manifest
  std::string manifest;
  double f1 = 0.5, f2 = 0.25, ft = 0.25;
  bool identity_disjoint = false;
  std::string extra_manifest;    // optional second manifest merged into X2
  std::string extra_to = "x2";   // "x2" or "both"
};

struct NetsConfig {
  std::vector<ConvStage> encoder_stages;
  std::string tap = "fc";
  int latent_dim = 64;
  int classifier_hidden = 64;
  std::vector<ConvStage> discriminator_stages;
  std::vector<ConvStage> perceptual_stages;
  std::vector<int> perceptual_taps;  // empty = all stages
  std::uint64_t perceptual_seed = 7002;
  std::vector<ConvStage> private_stages;
  int private_feature_dim = 64;
};

struct TrainSection {
  HyperParams hp;
  real lr_enc = 1e-3, lr_f = 1e-3, lr_dec = 1e-3, lr_disc = 1e-3;
  int batch_size = 32;
  int total_alternations = 400;
  int dec_steps_per_alt = 1;
  int enc_steps_per_alt = 1;
  int checkpoint_every = 0;  // 0 = final state only
  std::string dec_data = "x1";
};

struct AttackSection {
  real mu1 = 0, mu2 = 0;
  int steps = 1000;
  int batch_size = 32;
  real lr_dec = 1e-3, lr_disc = 1e-3;
  int feature_steps = 600;
  int feature_batch = 32;
  real feature_lr = 1e-3;
  int feature_hidden = 128;
  int grid_size = 8;
};

struct EvalSection {
  int private_steps = 400;
  int private_batch = 32;
  real private_lr = 1e-3;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::string out;  // default output directory; CLI --out overrides
  DataConfig data;
  NetsConfig nets;
  TrainSection train;
  AttackSection attack;
  EvalSection eval;

  // Strict parse: unknown keys anywhere are rejected and all schema problems
  // are reported together.
  static ExperimentConfig from_json(const json& j);
  static ExperimentConfig load(const std::string& path);
  json to_json() const;          // canonical form (also the hash input)
  std::string config_hash() const;
};

struct PreparedData {
  std::shared_ptr<const Dataset> source;
  SplitSet splits;
};
PreparedData prepare_data(const ExperimentConfig& cfg);

struct Specs {
  EncoderSpec enc;
  DecoderSpec dec;  // training-time decoder, mirrored from the tap
  ClassifierSpec f;
  DiscriminatorSpec disc;
  PerceptualSpec g;
  PrivateNetSpec c;
};
Specs build_specs(const ExperimentConfig& cfg, const Dataset& dataset);

// Subcommand drivers. Each writes its artifacts under out_dir and returns
// what the caller needs for aggregation.
void cmd_generate(const ExperimentConfig& cfg, const std::string& out_dir);

struct TrainOutput {
  std::string final_checkpoint_dir;  // step_{n} directory with the last state
};
TrainOutput cmd_train(const ExperimentConfig& cfg, const std::string& out_dir);

MetricsReport cmd_attack(const ExperimentConfig& cfg,
                         const std::string& checkpoint_dir,
                         const std::string& out_dir);

struct SweepRow {
  real x = 0;               // grid coordinate (lambda2)
  MetricsReport mean;       // metric means over seeds
  MetricsReport range;      // max - min over seeds, metric fields only
};
std::vector<SweepRow> cmd_sweep_lambda2(const ExperimentConfig& cfg,
                                        const std::vector<double>& lambda2_list,
                                        const std::string& out_dir,
                                        int n_seeds = 3);

struct LayerSweepRow {
  std::string tap;
  bool adversarial = false;
  real face_sim = 0, mean_mcc = 0, s_w = 0, s_b = 0, lda = 0;
};
std::vector<LayerSweepRow> cmd_sweep_layers(const ExperimentConfig& cfg,
                                            const std::vector<std::string>& taps,
                                            const std::string& out_dir,
                                            int n_seeds = 1);

// Merges MetricsReport files from run directories into one CSV/JSON table and
// renders the tradeoff and feature-projection plots. Missing or corrupt
// reports are listed on stderr and skipped.
void cmd_report(const std::vector<std::string>& run_dirs,
                const std::string& out_dir);

// Worker cap for sweep parallelism: PRIVSHIELD_THREADS, default 1.
int worker_threads();

}  // namespace privshield
