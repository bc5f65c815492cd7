#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "privshield/data.hpp"
#include "privshield/losses.hpp"
#include "privshield/nets.hpp"

namespace privshield {

struct OptimSettings {
  real lr = 1e-3;
  real beta1 = 0.9;
  real beta2 = 0.999;
  real eps = 1e-8;
};

// Adaptive-moment gradient descent over one network's parameter set.
class Adam {
 public:
  Adam() = default;
  explicit Adam(OptimSettings settings) : s_(settings) {}

  // Applies one update from the gradients accumulated in `leaves`.
  // direction = -1 turns the update into ascent.
  void step(ModelParams& params, const ParamVars& leaves, real direction = 1);

 private:
  OptimSettings s_;
  long t_ = 0;
  std::map<std::string, std::pair<Tensor, Tensor>> state_;  // first/second moment
};

enum class DecDataSource { X1, X2 };

struct TrainConfig {
  HyperParams hp;  // lambda1/lambda2 protect, mu1/mu2 drive the training-time decoder
  OptimSettings opt_enc, opt_f, opt_dec, opt_disc;
  int batch_size = 32;
  int total_alternations = 0;
  int dec_steps_per_alt = 1;
  int enc_steps_per_alt = 1;
  std::uint64_t seed = 0;
  int checkpoint_every = 0;  // 0 = only the final state
  // Fig. 2 places decoder updates on X2 while the loss expectation reads X1;
  // both are supported and the choice is recorded in run metadata.
  DecDataSource dec_data = DecDataSource::X1;

  void validate() const;
};

struct HistoryRecord {
  long step = 0;   // 1-based optimizer step (one update call)
  char phase = 0;  // 'A' adversary (dec [+disc]) update, 'P' protector update
  real utility = 0, pixel = 0, perceptual = 0, gan_gen = 0, gan_disc = 0,
       objective = 0;  // NaN marks terms a phase does not compute
};

struct TrainHistory {
  std::vector<HistoryRecord> records;
  void write_csv(const std::string& path) const;
};

struct AdversaryStepLosses {
  real pixel = 0, gan_gen = 0, gan_disc = 0, objective = 0;
};
struct ProtectorStepLosses {
  real utility = 0, pixel = 0, perceptual = 0, objective = 0;
};

// Runs the alternating min-max protocol: the training-time decoder (and, when
// mu1 > 0, the discriminator) take dec_steps_per_alt updates against the
// frozen encoder, then encoder and classifier take enc_steps_per_alt updates
// against the frozen decoder, for total_alternations rounds. Fully
// deterministic under (config, data).
class AlternatingTrainer {
 public:
  AlternatingTrainer(TrainConfig config, EncoderSpec enc_spec,
                     DecoderSpec dec_spec, ClassifierSpec f_spec,
                     DiscriminatorSpec disc_spec, PerceptualSpec g_spec,
                     std::uint64_t g_seed, DatasetSplit x1, DatasetSplit x2);

  AdversaryStepLosses adversary_update_step(const Batch& batch);
  ProtectorStepLosses protector_update_step(const Batch& batch);

  // alternation index (1-based) after each completed round, for checkpoints
  using CheckpointHook = std::function<void(long, const AlternatingTrainer&)>;
  void run(const CheckpointHook& on_checkpoint = nullptr);

  const ModelParams& enc_params() const { return enc_params_; }
  const ModelParams& f_params() const { return f_params_; }
  const ModelParams& dec_params() const { return dec_params_; }
  const ModelParams& disc_params() const { return disc_params_; }
  const ModelParams& g_params() const { return g_params_; }
  bool uses_discriminator() const { return config_.hp.mu1 > 0; }
  const TrainHistory& history() const { return history_; }
  const TrainConfig& config() const { return config_; }
  const EncoderSpec& encoder_spec() const { return enc_spec_; }
  const DecoderSpec& decoder_spec() const { return dec_spec_; }
  const ClassifierSpec& classifier_spec() const { return f_spec_; }
  const DiscriminatorSpec& discriminator_spec() const { return disc_spec_; }
  const PerceptualSpec& perceptual_spec() const { return g_spec_; }

 private:
  void guard_finite(real v, const char* what);

  TrainConfig config_;
  EncoderSpec enc_spec_;
  DecoderSpec dec_spec_;
  ClassifierSpec f_spec_;
  DiscriminatorSpec disc_spec_;
  PerceptualSpec g_spec_;
  ModelParams enc_params_, f_params_, dec_params_, disc_params_, g_params_;
  Adam adam_enc_, adam_f_, adam_dec_, adam_disc_;
  DatasetSplit x1_, x2_;
  std::optional<BatchIterator> dec_batches_, enc_batches_;
  TrainHistory history_;
  long step_ = 0;
};

}  // namespace privshield
