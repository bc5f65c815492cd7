#include "privshield/attacks.hpp"

#include <cmath>

#include "privshield/rng.hpp"

namespace privshield {

SealedEncoder::SealedEncoder(EncoderSpec spec, ModelParams params)
    : spec_(std::move(spec)), params_(std::move(params)) {
  spec_.validate();
}

Tensor SealedEncoder::encode(const Tensor& x_batch) const {
  calls_.fetch_add(1, std::memory_order_relaxed);
  return privshield::encode(spec_, params_, x_batch);
}

std::vector<int> SealedEncoder::z_shape() const { return spec_.z_shape(); }

const ModelParams& SealedEncoder::expose_parameters_for_audit() const {
  param_accesses_.fetch_add(1, std::memory_order_relaxed);
  return params_;
}

void AttackConfig::validate() const {
  check(std::isfinite(mu1) && mu1 >= 0 && std::isfinite(mu2) && mu2 >= 0,
        "attack config: mu weights must be finite and >= 0");
  check(steps >= 0, "attack config: steps must be >= 0");
  check(batch_size >= 1, "attack config: batch_size must be >= 1");
  check(opt_dec.lr > 0 && opt_disc.lr > 0, "attack config: step sizes must be positive");
  decoder.validate();
}

namespace {

ad::Var z_leaf(const BlackBoxEncoder& bb, const DecoderSpec& dec_spec,
               const Tensor& images) {
  Tensor z = bb.encode(images);
  const auto expect = bb.z_shape();
  std::vector<int> want{images.dim(0)};
  want.insert(want.end(), expect.begin(), expect.end());
  check(z.dims() == want, "black-box encoder returned unexpected Z shape");
  std::vector<int> spec_shape = dec_spec.z_shape;
  check(expect == spec_shape,
        "attack decoder expects Z " + Tensor::shape_str(spec_shape) +
            " but the encoder emits " + Tensor::shape_str(expect));
  return ad::constant(std::move(z));
}

}  // namespace

MiAttackResult train_mi_attack(const BlackBoxEncoder& bb, const DatasetSplit& x2,
                               const AttackConfig& cfg) {
  cfg.validate();
  check(x2.size() > 0, "mi attack: adversary split is empty");

  MiAttackResult result;
  // Fresh adversary: initialized from scratch, never warm-started.
  result.decoder = build_decoder(cfg.decoder, derive_seed(cfg.seed, "attack-dec"));
  HyperParams hp;
  hp.mu1 = cfg.mu1;
  hp.mu2 = cfg.mu2;
  ModelParams g_params;
  if (cfg.mu2 > 0) g_params = build_perceptual(cfg.perceptual, cfg.perceptual_seed);
  if (cfg.mu1 > 0) {
    result.discriminator =
        build_discriminator(cfg.discriminator, derive_seed(cfg.seed, "attack-disc"));
    result.has_discriminator = true;
  }
  Adam adam_dec(cfg.opt_dec), adam_disc(cfg.opt_disc);
  BatchIterator batches(x2, cfg.batch_size, derive_seed(cfg.seed, "attack-batch"));

  result.pixel_history.reserve(cfg.steps);
  for (int step = 1; step <= cfg.steps; ++step) {
    const Batch batch = batches.next();
    const auto x = ad::constant(batch.images);
    const auto z = z_leaf(bb, cfg.decoder, batch.images);

    auto dec_vars = make_vars(result.decoder, true);
    const auto xhat = decoder_forward(cfg.decoder, dec_vars, z);
    const auto pixel = pixel_recon_loss(xhat, x);

    ad::Var gan_gen, perc;
    if (cfg.mu1 > 0) {
      const auto disc_frozen = make_vars(result.discriminator, false);
      gan_gen = gan_generator_loss(
          discriminator_forward(cfg.discriminator, disc_frozen, xhat));
    }
    if (cfg.mu2 > 0) {
      const auto g_vars = make_vars(g_params, false);
      perc = perceptual_loss(cfg.perceptual, g_vars, xhat, x);
    }
    const auto objective = adversary_objective(hp, pixel, gan_gen, perc);
    if (!std::isfinite(objective->value.item()))
      throw DivergenceError("non-finite attack objective", step);
    result.pixel_history.push_back(pixel->value.item());

    ad::backward(objective);
    adam_dec.step(result.decoder, dec_vars);

    if (cfg.mu1 > 0) {
      auto disc_vars = make_vars(result.discriminator, true);
      const auto d_real = discriminator_forward(cfg.discriminator, disc_vars, x);
      const auto d_fake =
          discriminator_forward(cfg.discriminator, disc_vars, ad::detach(xhat));
      const auto disc_loss = gan_discriminator_loss(d_real, d_fake);
      if (!std::isfinite(disc_loss->value.item()))
        throw DivergenceError("non-finite attack discriminator loss", step);
      ad::backward(disc_loss);
      adam_disc.step(result.discriminator, disc_vars, real(-1));
    }
  }
  return result;
}

Tensor run_mi_attack(const DecoderSpec& dec_spec, const ModelParams& dec_params,
                     const BlackBoxEncoder& bb, const Tensor& images) {
  check(images.rank() == 4, "run_mi_attack: images must be [N,C,H,W]");
  const auto z = z_leaf(bb, dec_spec, images);
  return decoder_forward(dec_spec, make_vars(dec_params, false), z)->value;
}

real heldout_pixel_loss(const DecoderSpec& dec_spec, const ModelParams& dec_params,
                        const BlackBoxEncoder& bb, const DatasetSplit& split,
                        int batch_size) {
  check(split.size() > 0, "heldout_pixel_loss: empty split");
  real total = 0;
  std::size_t pos = 0;
  while (pos < split.size()) {
    const std::size_t end = std::min(pos + batch_size, split.size());
    std::vector<std::size_t> idx(end - pos);
    for (std::size_t i = pos; i < end; ++i) idx[i - pos] = i;
    const Batch b = make_batch(split, idx);
    const Tensor xhat = run_mi_attack(dec_spec, dec_params, bb, b.images);
    // Sum of per-sample squared errors; normalized once at the end.
    total += pixel_recon_value(xhat, b.images) * b.images.dim(0);
    pos = end;
  }
  return total / split.size();
}

void FeatureAttackConfig::validate() const {
  check(steps >= 0, "feature attack config: steps must be >= 0");
  check(batch_size >= 1, "feature attack config: batch_size must be >= 1");
  check(opt.lr > 0, "feature attack config: step size must be positive");
}

namespace {

int flat_dim(const std::vector<int>& shape) {
  int n = 1;
  for (int d : shape) n *= d;
  return n;
}

ad::Var mapper_mse(const ad::Var& mapped, const Tensor& target) {
  check(mapped->value.same_shape(target), "feature attack: shape mismatch");
  const int n = target.dim(0);
  return ad::scale(ad::sum(ad::square(ad::sub(mapped, ad::constant(target)))),
                   real(1) / n);
}

}  // namespace

ModelParams train_feature_attack(const BlackBoxEncoder& bb,
                                 const PrivateNetSpec& c_spec,
                                 const ModelParams& c_params,
                                 const DatasetSplit& x2,
                                 const FeatureAttackConfig& cfg) {
  cfg.validate();
  MapperSpec m_spec = cfg.mapper;
  if (m_spec.input_dim == 0) m_spec.input_dim = flat_dim(bb.z_shape());
  if (m_spec.output_dim == 0) m_spec.output_dim = c_spec.feature_dim;
  m_spec.validate();

  ModelParams mapper = build_mapper(m_spec, derive_seed(cfg.seed, "attack-mapper"));
  Adam adam(cfg.opt);
  BatchIterator batches(x2, cfg.batch_size, derive_seed(cfg.seed, "attack-feat-batch"));
  for (int step = 1; step <= cfg.steps; ++step) {
    const Batch batch = batches.next();
    const Tensor z = bb.encode(batch.images);
    const Tensor target = private_features(c_spec, c_params, batch.images);
    auto m_vars = make_vars(mapper, true);
    const auto mapped = mapper_forward(m_spec, m_vars, ad::constant(z));
    const auto loss = mapper_mse(mapped, target);
    if (!std::isfinite(loss->value.item()))
      throw DivergenceError("non-finite feature attack loss", step);
    ad::backward(loss);
    adam.step(mapper, m_vars);
  }
  return mapper;
}

real feature_attack_loss(const MapperSpec& m_spec, const ModelParams& m_params,
                         const BlackBoxEncoder& bb, const PrivateNetSpec& c_spec,
                         const ModelParams& c_params, const DatasetSplit& split,
                         int batch_size) {
  check(split.size() > 0, "feature_attack_loss: empty split");
  real total = 0;
  std::size_t pos = 0;
  while (pos < split.size()) {
    const std::size_t end = std::min(pos + batch_size, split.size());
    std::vector<std::size_t> idx(end - pos);
    for (std::size_t i = pos; i < end; ++i) idx[i - pos] = i;
    const Batch b = make_batch(split, idx);
    const Tensor z = bb.encode(b.images);
    const Tensor mapped =
        mapper_forward(m_spec, make_vars(m_params, false), ad::constant(z))->value;
    const Tensor target = private_features(c_spec, c_params, b.images);
    for (std::size_t i = 0; i < mapped.size(); ++i) {
      const real d = mapped[i] - target[i];
      total += d * d;
    }
    pos = end;
  }
  return total / split.size();
}

}  // namespace privshield
