#pragma once

#include <atomic>
#include <cstdint>
#include <vector>

#include "privshield/data.hpp"
#include "privshield/losses.hpp"
#include "privshield/nets.hpp"
#include "privshield/trainer.hpp"

namespace privshield {

// The adversary's view of an encoder: inference only. The interface exposes
// no parameters and no gradients, so attack code structurally cannot reach
// them; every use is counted.
class BlackBoxEncoder {
 public:
  virtual ~BlackBoxEncoder() = default;
  virtual Tensor encode(const Tensor& x_batch) const = 0;
  virtual std::vector<int> z_shape() const = 0;  // without the batch dimension
  virtual long inference_calls() const = 0;
};

// Seals a concrete encoder behind the black-box interface. The audit accessor
// exists so tests can assert that attacks never touch parameters.
class SealedEncoder final : public BlackBoxEncoder {
 public:
  SealedEncoder(EncoderSpec spec, ModelParams params);

  Tensor encode(const Tensor& x_batch) const override;
  std::vector<int> z_shape() const override;
  long inference_calls() const override { return calls_.load(); }
  long parameter_accesses() const { return param_accesses_.load(); }
  const ModelParams& expose_parameters_for_audit() const;

 private:
  EncoderSpec spec_;
  ModelParams params_;
  mutable std::atomic<long> calls_{0};
  mutable std::atomic<long> param_accesses_{0};
};

struct AttackConfig {
  real mu1 = 0;  // GAN weight in Eq.-(5)-style objective
  real mu2 = 0;  // perceptual weight
  DecoderSpec decoder;
  DiscriminatorSpec discriminator;          // used when mu1 > 0
  PerceptualSpec perceptual;                // used when mu2 > 0
  std::uint64_t perceptual_seed = 7002;
  OptimSettings opt_dec, opt_disc;
  int steps = 0;
  int batch_size = 32;
  std::uint64_t seed = 0;

  void validate() const;
};

struct MiAttackResult {
  ModelParams decoder;
  ModelParams discriminator;  // empty when mu1 == 0
  bool has_discriminator = false;
  std::vector<real> pixel_history;  // training pixel loss per step
};

// Trains a fresh attack decoder from scratch on (x, bb(x)) pairs drawn from
// the adversary split. No gradient ever flows into the encoder.
MiAttackResult train_mi_attack(const BlackBoxEncoder& bb, const DatasetSplit& x2,
                               const AttackConfig& cfg);

// Reconstructions Dec_a(bb(x)) for a batch of images.
Tensor run_mi_attack(const DecoderSpec& dec_spec, const ModelParams& dec_params,
                     const BlackBoxEncoder& bb, const Tensor& images);

// Mean pixel reconstruction loss of the decoder over a whole split,
// evaluated in batches without gradients.
real heldout_pixel_loss(const DecoderSpec& dec_spec, const ModelParams& dec_params,
                        const BlackBoxEncoder& bb, const DatasetSplit& split,
                        int batch_size = 64);

struct FeatureAttackConfig {
  MapperSpec mapper;  // input_dim/output_dim filled from bb and C when 0
  OptimSettings opt;
  int steps = 0;
  int batch_size = 32;
  std::uint64_t seed = 0;

  void validate() const;
};

// Trains the mapper M to regress the private network's features from Z by
// minimizing the mean squared feature distance over the adversary split.
ModelParams train_feature_attack(const BlackBoxEncoder& bb,
                                 const PrivateNetSpec& c_spec,
                                 const ModelParams& c_params,
                                 const DatasetSplit& x2,
                                 const FeatureAttackConfig& cfg);

// Eq.-(11)-style objective value on a split (per-sample squared distance,
// batch mean); used for held-out attack strength checks.
real feature_attack_loss(const MapperSpec& m_spec, const ModelParams& m_params,
                         const BlackBoxEncoder& bb, const PrivateNetSpec& c_spec,
                         const ModelParams& c_params, const DatasetSplit& split,
                         int batch_size = 64);

}  // namespace privshield
