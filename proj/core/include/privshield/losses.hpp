#pragma once

#include "privshield/autodiff.hpp"
#include "privshield/nets.hpp"
#include "privshield/tensor.hpp"

namespace privshield {

// Protector weights (lambda) and adversary weights (mu). In the trainer the
// mu pair belongs to the training-time decoder; attacks carry their own pair.
struct HyperParams {
  real lambda1 = 0;  // negative pixel-reconstruction weight
  real lambda2 = 0;  // negative perceptual weight
  real mu1 = 0;      // GAN weight
  real mu2 = 0;      // perceptual weight
  void validate() const;
};

// Discriminator outputs are clamped to [kGanEps, 1-kGanEps] inside the GAN
// losses so every log term is finite.
inline constexpr real kGanEps = 1e-7;

// Mean over the batch of the per-sample squared Euclidean norm of (xhat - x).
// The norm is unnormalized (summed over all pixels of a sample); lambda/mu
// weights are calibrated against this convention.
ad::Var pixel_recon_loss(const ad::Var& xhat, const ad::Var& x);
real pixel_recon_value(const Tensor& xhat, const Tensor& x);

// mean log(1 - D(xhat)); minimized by the attack decoder.
ad::Var gan_generator_loss(const ad::Var& d_on_fake);

// mean [log(1 - D(x)) + log(D(xhat))]; maximized by D. High D on
// reconstructions is this framework's label convention.
ad::Var gan_discriminator_loss(const ad::Var& d_on_real, const ad::Var& d_on_fake);

// Mean over the batch of the summed squared distances between the tapped
// g features of xhat and of x.
ad::Var perceptual_loss(const PerceptualSpec& g_spec, const ParamVars& g_params,
                        const ad::Var& xhat, const ad::Var& x);

// Mean per-attribute binary cross entropy from logits.
ad::Var utility_loss(const ad::Var& logits, const Tensor& targets01);

// pixel + mu1 * gan_gen + mu2 * perc. Terms with zero weight may be null.
ad::Var adversary_objective(const HyperParams& hp, const ad::Var& pixel,
                            const ad::Var& gan_gen, const ad::Var& perc);

// utility - lambda1 * pixel - lambda2 * perc. Terms with zero weight may be
// null.
ad::Var protector_objective(const HyperParams& hp, const ad::Var& utility,
                            const ad::Var& pixel, const ad::Var& perc);

}  // namespace privshield
