#include "privshield/losses.hpp"

#include <cmath>

namespace privshield {

void HyperParams::validate() const {
  for (real v : {lambda1, lambda2, mu1, mu2})
    check(std::isfinite(v) && v >= 0, "hyperparameter weights must be finite and >= 0");
}

ad::Var pixel_recon_loss(const ad::Var& xhat, const ad::Var& x) {
  check(xhat->value.same_shape(x->value),
        "pixel loss: shape mismatch " + xhat->value.shape_str() + " vs " +
            x->value.shape_str());
  const int n = xhat->value.dim(0);
  return ad::scale(ad::sum(ad::square(ad::sub(xhat, x))), real(1) / n);
}

real pixel_recon_value(const Tensor& xhat, const Tensor& x) {
  check(xhat.same_shape(x), "pixel loss: shape mismatch");
  real total = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const real d = xhat[i] - x[i];
    total += d * d;
  }
  return total / x.dim(0);
}

ad::Var gan_generator_loss(const ad::Var& d_on_fake) {
  return ad::mean(ad::vlog(ad::clamp(ad::rsub_scalar(1, d_on_fake), kGanEps, 1 - kGanEps)));
}

ad::Var gan_discriminator_loss(const ad::Var& d_on_real, const ad::Var& d_on_fake) {
  auto real_term = ad::mean(
      ad::vlog(ad::clamp(ad::rsub_scalar(1, d_on_real), kGanEps, 1 - kGanEps)));
  auto fake_term = ad::mean(ad::vlog(ad::clamp(d_on_fake, kGanEps, 1 - kGanEps)));
  return ad::add(real_term, fake_term);
}

ad::Var perceptual_loss(const PerceptualSpec& g_spec, const ParamVars& g_params,
                        const ad::Var& xhat, const ad::Var& x) {
  check(xhat->value.same_shape(x->value),
        "perceptual loss: shape mismatch " + xhat->value.shape_str() + " vs " +
            x->value.shape_str());
  const auto f_hat = perceptual_forward(g_spec, g_params, xhat);
  const auto f_ref = perceptual_forward(g_spec, g_params, x);
  ad::Var total;
  for (std::size_t t = 0; t < f_hat.size(); ++t) {
    auto term = ad::sum(ad::square(ad::sub(f_hat[t], f_ref[t])));
    total = total ? ad::add(total, term) : term;
  }
  const int n = xhat->value.dim(0);
  return ad::scale(total, real(1) / n);
}

ad::Var utility_loss(const ad::Var& logits, const Tensor& targets01) {
  return ad::bce_with_logits_mean(logits, targets01);
}

ad::Var adversary_objective(const HyperParams& hp, const ad::Var& pixel,
                            const ad::Var& gan_gen, const ad::Var& perc) {
  hp.validate();
  check(pixel != nullptr, "adversary objective: pixel term is required");
  ad::Var obj = pixel;
  if (hp.mu1 > 0) {
    check(gan_gen != nullptr, "adversary objective: mu1 > 0 needs the GAN term");
    obj = ad::add(obj, ad::scale(gan_gen, hp.mu1));
  }
  if (hp.mu2 > 0) {
    check(perc != nullptr, "adversary objective: mu2 > 0 needs the perceptual term");
    obj = ad::add(obj, ad::scale(perc, hp.mu2));
  }
  return obj;
}

ad::Var protector_objective(const HyperParams& hp, const ad::Var& utility,
                            const ad::Var& pixel, const ad::Var& perc) {
  hp.validate();
  check(utility != nullptr, "protector objective: utility term is required");
  ad::Var obj = utility;
  if (hp.lambda1 > 0) {
    check(pixel != nullptr, "protector objective: lambda1 > 0 needs the pixel term");
    obj = ad::sub(obj, ad::scale(pixel, hp.lambda1));
  }
  if (hp.lambda2 > 0) {
    check(perc != nullptr, "protector objective: lambda2 > 0 needs the perceptual term");
    obj = ad::sub(obj, ad::scale(perc, hp.lambda2));
  }
  return obj;
}

}  // namespace privshield
