#include "privshield/trainer.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include "privshield/rng.hpp"

namespace privshield {

namespace {
constexpr real kNaN = std::numeric_limits<real>::quiet_NaN();
}

void Adam::step(ModelParams& params, const ParamVars& leaves, real direction) {
  ++t_;
  const real bc1 = 1 - std::pow(s_.beta1, static_cast<real>(t_));
  const real bc2 = 1 - std::pow(s_.beta2, static_cast<real>(t_));
  for (auto& [name, theta] : params.arrays) {
    const auto it = leaves.find(name);
    check(it != leaves.end(), "optimizer: no graph leaf for '" + name + "'");
    const Tensor& grad = it->second->grad;
    if (grad.empty()) continue;  // parameter unused by this objective
    auto& [m, v] = state_.try_emplace(name, Tensor(theta.dims()), Tensor(theta.dims()))
                       .first->second;
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const real g = direction * grad[i];
      m[i] = s_.beta1 * m[i] + (1 - s_.beta1) * g;
      v[i] = s_.beta2 * v[i] + (1 - s_.beta2) * g * g;
      theta[i] -= s_.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + s_.eps);
    }
  }
}

void TrainConfig::validate() const {
  hp.validate();
  check(batch_size >= 1, "train config: batch_size must be >= 1");
  check(total_alternations >= 0, "train config: total_alternations must be >= 0");
  check(dec_steps_per_alt >= 1 && enc_steps_per_alt >= 1,
        "train config: steps per alternation must be >= 1");
  check(checkpoint_every >= 0, "train config: checkpoint_every must be >= 0");
  for (const OptimSettings& o : {opt_enc, opt_f, opt_dec, opt_disc})
    check(o.lr > 0, "train config: step sizes must be positive");
}

void TrainHistory::write_csv(const std::string& path) const {
  std::ofstream out(path);
  check(out.good(), "cannot create history file " + path);
  out << "step,phase,utility,pixel,perceptual,gan_gen,gan_disc,objective\n";
  char line[256];
  for (const HistoryRecord& r : records) {
    std::snprintf(line, sizeof line, "%ld,%c,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                  r.step, r.phase, r.utility, r.pixel, r.perceptual, r.gan_gen,
                  r.gan_disc, r.objective);
    out << line;
  }
}

AlternatingTrainer::AlternatingTrainer(TrainConfig config, EncoderSpec enc_spec,
                                       DecoderSpec dec_spec, ClassifierSpec f_spec,
                                       DiscriminatorSpec disc_spec,
                                       PerceptualSpec g_spec, std::uint64_t g_seed,
                                       DatasetSplit x1, DatasetSplit x2)
    : config_(std::move(config)),
      enc_spec_(std::move(enc_spec)),
      dec_spec_(std::move(dec_spec)),
      f_spec_(std::move(f_spec)),
      disc_spec_(std::move(disc_spec)),
      g_spec_(std::move(g_spec)),
      x1_(std::move(x1)),
      x2_(std::move(x2)) {
  config_.validate();
  check(x1_.size() > 0 && x2_.size() > 0, "trainer: data splits must be nonempty");

  enc_params_ = build_encoder(enc_spec_, derive_seed(config_.seed, "enc"));
  f_params_ = build_classifier(f_spec_, derive_seed(config_.seed, "f"));
  dec_params_ = build_decoder(dec_spec_, derive_seed(config_.seed, "dec"));
  if (uses_discriminator())
    disc_params_ = build_discriminator(disc_spec_, derive_seed(config_.seed, "disc"));
  const bool needs_g = config_.hp.lambda2 > 0 || config_.hp.mu2 > 0;
  if (needs_g) g_params_ = build_perceptual(g_spec_, g_seed);

  adam_enc_ = Adam(config_.opt_enc);
  adam_f_ = Adam(config_.opt_f);
  adam_dec_ = Adam(config_.opt_dec);
  adam_disc_ = Adam(config_.opt_disc);

  const DatasetSplit& dec_split =
      config_.dec_data == DecDataSource::X1 ? x1_ : x2_;
  dec_batches_.emplace(dec_split, config_.batch_size,
                       derive_seed(config_.seed, "batch-dec"));
  enc_batches_.emplace(x1_, config_.batch_size,
                       derive_seed(config_.seed, "batch-enc"));
}

void AlternatingTrainer::guard_finite(real v, const char* what) {
  if (!std::isfinite(v))
    throw DivergenceError(std::string("non-finite ") + what, step_);
}

AdversaryStepLosses AlternatingTrainer::adversary_update_step(const Batch& batch) {
  ++step_;
  const auto x = ad::constant(batch.images);
  // Encoder is opaque here: constant leaves, so no gradient can reach it.
  const auto enc_vars = make_vars(enc_params_, false);
  const auto z = encoder_forward(enc_spec_, enc_vars, x);

  auto dec_vars = make_vars(dec_params_, true);
  const auto xhat = decoder_forward(dec_spec_, dec_vars, z);
  const auto pixel = pixel_recon_loss(xhat, x);

  ad::Var gan_gen, perc;
  if (config_.hp.mu1 > 0) {
    const auto disc_frozen = make_vars(disc_params_, false);
    gan_gen = gan_generator_loss(discriminator_forward(disc_spec_, disc_frozen, xhat));
  }
  if (config_.hp.mu2 > 0) {
    const auto g_vars = make_vars(g_params_, false);
    perc = perceptual_loss(g_spec_, g_vars, xhat, x);
  }
  const auto objective = adversary_objective(config_.hp, pixel, gan_gen, perc);

  AdversaryStepLosses losses;
  losses.pixel = pixel->value.item();
  losses.gan_gen = gan_gen ? gan_gen->value.item() : kNaN;
  losses.objective = objective->value.item();
  guard_finite(losses.objective, "adversary objective");

  ad::backward(objective);
  adam_dec_.step(dec_params_, dec_vars);

  losses.gan_disc = kNaN;
  if (config_.hp.mu1 > 0) {
    // Separate ascent step for D on detached reconstructions.
    auto disc_vars = make_vars(disc_params_, true);
    const auto d_real = discriminator_forward(disc_spec_, disc_vars, x);
    const auto d_fake =
        discriminator_forward(disc_spec_, disc_vars, ad::detach(xhat));
    const auto disc_loss = gan_discriminator_loss(d_real, d_fake);
    losses.gan_disc = disc_loss->value.item();
    guard_finite(losses.gan_disc, "discriminator loss");
    ad::backward(disc_loss);
    adam_disc_.step(disc_params_, disc_vars, real(-1));
  }

  history_.records.push_back({step_, 'A', kNaN, losses.pixel, kNaN,
                              losses.gan_gen, losses.gan_disc, losses.objective});
  return losses;
}

ProtectorStepLosses AlternatingTrainer::protector_update_step(const Batch& batch) {
  ++step_;
  const auto x = ad::constant(batch.images);
  auto enc_vars = make_vars(enc_params_, true);
  auto f_vars = make_vars(f_params_, true);
  const auto z = encoder_forward(enc_spec_, enc_vars, x);
  const auto logits = classifier_forward(f_spec_, f_vars, z);
  const auto utility = utility_loss(logits, batch.attributes);

  // Gradients flow through the frozen decoder (and g) back into the encoder.
  ad::Var pixel, perc, xhat;
  if (config_.hp.lambda1 > 0 || config_.hp.lambda2 > 0) {
    const auto dec_vars = make_vars(dec_params_, false);
    xhat = decoder_forward(dec_spec_, dec_vars, z);
    pixel = pixel_recon_loss(xhat, x);
    if (config_.hp.lambda2 > 0) {
      const auto g_vars = make_vars(g_params_, false);
      perc = perceptual_loss(g_spec_, g_vars, xhat, x);
    }
  }
  const auto objective = protector_objective(config_.hp, utility, pixel, perc);

  ProtectorStepLosses losses;
  losses.utility = utility->value.item();
  losses.pixel = pixel ? pixel->value.item() : kNaN;
  losses.perceptual = perc ? perc->value.item() : kNaN;
  losses.objective = objective->value.item();
  guard_finite(losses.objective, "protector objective");

  ad::backward(objective);
  adam_enc_.step(enc_params_, enc_vars);
  adam_f_.step(f_params_, f_vars);

  history_.records.push_back({step_, 'P', losses.utility, losses.pixel,
                              losses.perceptual, kNaN, kNaN, losses.objective});
  return losses;
}

void AlternatingTrainer::run(const CheckpointHook& on_checkpoint) {
  for (long alt = 1; alt <= config_.total_alternations; ++alt) {
    for (int s = 0; s < config_.dec_steps_per_alt; ++s)
      adversary_update_step(dec_batches_->next());
    for (int s = 0; s < config_.enc_steps_per_alt; ++s)
      protector_update_step(enc_batches_->next());
    if (on_checkpoint && config_.checkpoint_every > 0 &&
        alt % config_.checkpoint_every == 0)
      on_checkpoint(alt, *this);
  }
}

}  // namespace privshield
