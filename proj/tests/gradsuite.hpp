#pragma once

// The (loss x network) gradient matrix: every loss family differentiated
// through every network it touches in the protocol, each checked against
// central finite differences on randomly sampled parameter coordinates.
// Shared between the unit tests and the acceptance suite.

#include <functional>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "privshield/losses.hpp"
#include "privshield/nets.hpp"
#include "privshield/rng.hpp"

namespace gradsuite {

using namespace privshield;

struct PairResult {
  std::string name;
  real max_rel_err = 0;
  int checked = 0;
};

struct Fixture {
  EncoderSpec enc;
  DecoderSpec dec;
  ClassifierSpec f;
  DiscriminatorSpec disc;
  PerceptualSpec g;
  PrivateNetSpec c;
  MapperSpec m;
  ModelParams enc_p, dec_p, f_p, disc_p, g_p, c_p, m_p;
  Tensor x;           // [N,C,H,W]
  Tensor labels;      // [N,k]
  std::vector<int> ids;
  HyperParams hp;
};

inline Fixture make_fixture(std::uint64_t seed) {
  Fixture fx;
  fx.enc.in_channels = 3;
  fx.enc.image_size = 16;
  fx.enc.stages = {{4, 2, Act::Relu}, {8, 2, Act::Relu}};
  fx.enc.tap_layer = "fc";
  fx.enc.latent_dim = 6;
  fx.dec = mirror_decoder_spec(fx.enc, "fc");
  fx.f = {6, 8, 3};
  fx.disc.in_channels = 3;
  fx.disc.image_size = 16;
  fx.disc.stages = {{4, 2, Act::LeakyRelu}, {8, 2, Act::LeakyRelu}};
  fx.g.in_channels = 3;
  fx.g.image_size = 16;
  fx.g.stages = {{4, 2, Act::Relu}, {6, 2, Act::Relu}};
  fx.c.in_channels = 3;
  fx.c.image_size = 16;
  fx.c.stages = {{4, 2, Act::Relu}, {8, 2, Act::Relu}};
  fx.c.feature_dim = 5;
  fx.c.n_identities = 3;
  fx.m = {6, 8, 5};

  fx.enc_p = build_encoder(fx.enc, derive_seed(seed, "enc"));
  fx.dec_p = build_decoder(fx.dec, derive_seed(seed, "dec"));
  fx.f_p = build_classifier(fx.f, derive_seed(seed, "f"));
  fx.disc_p = build_discriminator(fx.disc, derive_seed(seed, "disc"));
  fx.g_p = build_perceptual(fx.g, derive_seed(seed, "g"));
  fx.c_p = build_private_net(fx.c, derive_seed(seed, "c"));
  fx.m_p = build_mapper(fx.m, derive_seed(seed, "m"));

  Rng rng(derive_seed(seed, "data"));
  fx.x = Tensor({2, 3, 16, 16});
  for (std::size_t i = 0; i < fx.x.size(); ++i) fx.x[i] = rng.uniform();
  fx.labels = Tensor({2, 3});
  for (std::size_t i = 0; i < fx.labels.size(); ++i)
    fx.labels[i] = rng.uniform() < 0.5 ? 0 : 1;
  fx.ids = {0, 2};
  fx.hp = {0.5, 0.25, 0.7, 0.3};
  return fx;
}

// Runs the full matrix; n_coords finite-difference probes per pair.
inline std::vector<PairResult> run(std::uint64_t seed, int n_coords) {
  Fixture fx = make_fixture(seed);
  std::vector<PairResult> results;

  auto add = [&](const std::string& name, const ModelParams& params,
                 const std::function<ad::Var(const ParamVars&)>& loss) {
    const auto r = oracles::check_gradients(params, loss, n_coords,
                                            derive_seed(seed, name.c_str()));
    results.push_back({name, r.max_rel_err, r.checked});
  };

  const auto xin = [&] { return ad::constant(fx.x); };
  auto enc_const = [&] { return make_vars(fx.enc_p, false); };
  auto dec_const = [&] { return make_vars(fx.dec_p, false); };
  auto g_const = [&] { return make_vars(fx.g_p, false); };
  auto disc_const = [&] { return make_vars(fx.disc_p, false); };
  auto f_const = [&] { return make_vars(fx.f_p, false); };

  // pixel reconstruction loss
  add("pixel/dec", fx.dec_p, [&](const ParamVars& v) {
    auto z = encoder_forward(fx.enc, enc_const(), xin());
    return pixel_recon_loss(decoder_forward(fx.dec, v, z), xin());
  });
  add("pixel/enc", fx.enc_p, [&](const ParamVars& v) {
    auto z = encoder_forward(fx.enc, v, xin());
    return pixel_recon_loss(decoder_forward(fx.dec, dec_const(), z), xin());
  });

  // GAN generator loss
  add("gan_gen/dec", fx.dec_p, [&](const ParamVars& v) {
    auto z = encoder_forward(fx.enc, enc_const(), xin());
    auto xhat = decoder_forward(fx.dec, v, z);
    return gan_generator_loss(discriminator_forward(fx.disc, disc_const(), xhat));
  });
  add("gan_gen/disc", fx.disc_p, [&](const ParamVars& v) {
    auto z = encoder_forward(fx.enc, enc_const(), xin());
    auto xhat = decoder_forward(fx.dec, dec_const(), z);
    return gan_generator_loss(discriminator_forward(fx.disc, v, xhat));
  });

  // GAN discriminator loss
  add("gan_disc/disc", fx.disc_p, [&](const ParamVars& v) {
    auto z = encoder_forward(fx.enc, enc_const(), xin());
    auto xhat = decoder_forward(fx.dec, dec_const(), z);
    return gan_discriminator_loss(discriminator_forward(fx.disc, v, xin()),
                                  discriminator_forward(fx.disc, v, xhat));
  });

  // perceptual loss
  add("perceptual/dec", fx.dec_p, [&](const ParamVars& v) {
    auto z = encoder_forward(fx.enc, enc_const(), xin());
    return perceptual_loss(fx.g, g_const(), decoder_forward(fx.dec, v, z), xin());
  });
  add("perceptual/enc", fx.enc_p, [&](const ParamVars& v) {
    auto z = encoder_forward(fx.enc, v, xin());
    return perceptual_loss(fx.g, g_const(),
                           decoder_forward(fx.dec, dec_const(), z), xin());
  });

  // utility loss
  add("utility/f", fx.f_p, [&](const ParamVars& v) {
    auto z = encoder_forward(fx.enc, enc_const(), xin());
    return utility_loss(classifier_forward(fx.f, v, z), fx.labels);
  });
  add("utility/enc", fx.enc_p, [&](const ParamVars& v) {
    auto z = encoder_forward(fx.enc, v, xin());
    return utility_loss(classifier_forward(fx.f, f_const(), z), fx.labels);
  });

  // full adversary objective (Eq.-(5) form) through the decoder
  add("adversary_objective/dec", fx.dec_p, [&](const ParamVars& v) {
    auto z = encoder_forward(fx.enc, enc_const(), xin());
    auto xhat = decoder_forward(fx.dec, v, z);
    auto pixel = pixel_recon_loss(xhat, xin());
    auto gen = gan_generator_loss(discriminator_forward(fx.disc, disc_const(), xhat));
    auto perc = perceptual_loss(fx.g, g_const(), xhat, xin());
    return adversary_objective(fx.hp, pixel, gen, perc);
  });

  // full protector objective (Eq.-(10) form) through encoder and classifier
  auto protector_through = [&](const ParamVars& enc_vars,
                               const ParamVars& f_vars) {
    auto z = encoder_forward(fx.enc, enc_vars, xin());
    auto xhat = decoder_forward(fx.dec, dec_const(), z);
    auto util = utility_loss(classifier_forward(fx.f, f_vars, z), fx.labels);
    auto pixel = pixel_recon_loss(xhat, xin());
    auto perc = perceptual_loss(fx.g, g_const(), xhat, xin());
    return protector_objective(fx.hp, util, pixel, perc);
  };
  add("protector_objective/enc", fx.enc_p, [&](const ParamVars& v) {
    return protector_through(v, f_const());
  });
  add("protector_objective/f", fx.f_p, [&](const ParamVars& v) {
    return protector_through(enc_const(), v);
  });

  // feature-level attack objective through the mapper
  add("feature_mse/mapper", fx.m_p, [&](const ParamVars& v) {
    auto z = encoder_forward(fx.enc, enc_const(), xin());
    auto mapped = mapper_forward(fx.m, v, z);
    auto target = private_features_forward(fx.c, make_vars(fx.c_p, false), xin());
    const int n = fx.x.dim(0);
    return ad::scale(ad::sum(ad::square(ad::sub(mapped, ad::detach(target)))),
                     real(1) / n);
  });

  // identity cross entropy through the private network
  add("identity_ce/private", fx.c_p, [&](const ParamVars& v) {
    return ad::softmax_ce_mean(private_logits_forward(fx.c, v, xin()), fx.ids);
  });

  return results;
}

}  // namespace gradsuite
