#include "privshield/experiment.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "privshield/image.hpp"
#include "privshield/plot.hpp"
#include "privshield/rng.hpp"

namespace privshield {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Config parsing
// ---------------------------------------------------------------------------

namespace {

struct ParseCtx {
  std::vector<std::string> errors;

  void err(const std::string& path, const std::string& msg) {
    errors.push_back(path + ": " + msg);
  }

  void check_keys(const json& j, const std::string& path,
                  const std::set<std::string>& allowed) {
    if (!j.is_object()) {
      err(path, "must be an object");
      return;
    }
    for (const auto& [key, value] : j.items())
      if (!allowed.count(key)) err(path, "unknown key '" + key + "'");
  }

  template <typename T>
  T get(const json& j, const std::string& path, const std::string& key,
        T fallback) {
    if (!j.is_object() || !j.contains(key)) return fallback;
    try {
      return j.at(key).get<T>();
    } catch (const std::exception&) {
      err(path + "." + key, "has the wrong type");
      return fallback;
    }
  }

  std::vector<ConvStage> get_stages(const json& j, const std::string& path,
                                    const std::string& key,
                                    std::vector<ConvStage> fallback) {
    if (!j.is_object() || !j.contains(key)) return fallback;
    const json& arr = j.at(key);
    if (!arr.is_array()) {
      err(path + "." + key, "must be an array of stages");
      return fallback;
    }
    std::vector<ConvStage> stages;
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const std::string spath = path + "." + key + "[" + std::to_string(i) + "]";
      check_keys(arr[i], spath, {"channels", "stride", "act"});
      ConvStage st;
      st.out_channels = get<int>(arr[i], spath, "channels", 0);
      st.stride = get<int>(arr[i], spath, "stride", 1);
      try {
        st.act = act_from_name(get<std::string>(arr[i], spath, "act", "relu"));
      } catch (const Error& e) {
        err(spath + ".act", e.what());
      }
      stages.push_back(st);
    }
    return stages;
  }
};

std::vector<ConvStage> default_encoder_stages() {
  return {{8, 2, Act::Relu}, {16, 2, Act::Relu}, {32, 2, Act::Relu}, {64, 2, Act::Relu}};
}
std::vector<ConvStage> default_disc_stages() {
  return {{8, 2, Act::LeakyRelu}, {16, 2, Act::LeakyRelu}, {32, 2, Act::LeakyRelu}};
}
std::vector<ConvStage> default_small_stages() {
  return {{8, 2, Act::Relu}, {16, 2, Act::Relu}, {32, 2, Act::Relu}};
}

json stages_json(const std::vector<ConvStage>& stages) {
  json arr = json::array();
  for (const ConvStage& st : stages)
    arr.push_back({{"channels", st.out_channels},
                   {"stride", st.stride},
                   {"act", act_name(st.act)}});
  return arr;
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  ParseCtx ctx;
  ExperimentConfig cfg;

  ctx.check_keys(j, "config",
                 {"seed", "out", "data", "nets", "train", "attack", "eval"});
  cfg.seed = ctx.get<std::uint64_t>(j, "config", "seed", 0);
  cfg.out = ctx.get<std::string>(j, "config", "out", "");

  if (j.is_object() && j.contains("data")) {
    const json& d = j.at("data");
    ctx.check_keys(d, "data",
                   {"synthetic", "manifest", "fractions", "identity_disjoint",
                    "extra_manifest", "extra_to"});
    if (d.is_object() && d.contains("synthetic")) {
      const json& s = d.at("synthetic");
      ctx.check_keys(s, "data.synthetic",
                     {"n_identities", "samples_per_identity", "k_attributes",
                      "image_size", "channels", "seed"});
      SynthConfig sc;
      sc.n_identities = ctx.get<int>(s, "data.synthetic", "n_identities", 40);
      sc.samples_per_identity =
          ctx.get<int>(s, "data.synthetic", "samples_per_identity", 50);
      sc.k_attributes = ctx.get<int>(s, "data.synthetic", "k_attributes", 8);
      sc.image_size = ctx.get<int>(s, "data.synthetic", "image_size", 32);
      sc.channels = ctx.get<int>(s, "data.synthetic", "channels", 3);
      sc.seed = ctx.get<std::uint64_t>(s, "data.synthetic", "seed", 1000);
      cfg.data.synthetic = sc;
    }
    cfg.data.manifest = ctx.get<std::string>(d, "data", "manifest", "");
    if (d.is_object() && d.contains("fractions")) {
      const auto f = ctx.get<std::vector<double>>(d, "data", "fractions", {});
      if (f.size() != 3)
        ctx.err("data.fractions", "must be [f1, f2, f_test]");
      else {
        cfg.data.f1 = f[0];
        cfg.data.f2 = f[1];
        cfg.data.ft = f[2];
      }
    }
    cfg.data.identity_disjoint =
        ctx.get<bool>(d, "data", "identity_disjoint", false);
    cfg.data.extra_manifest = ctx.get<std::string>(d, "data", "extra_manifest", "");
    cfg.data.extra_to = ctx.get<std::string>(d, "data", "extra_to", "x2");
    if (cfg.data.extra_to != "x2" && cfg.data.extra_to != "both")
      ctx.err("data.extra_to", "must be 'x2' or 'both'");
  }
  if (!cfg.data.synthetic && cfg.data.manifest.empty())
    cfg.data.synthetic = SynthConfig{40, 50, 8, 32, 3, 1000};
  if (cfg.data.synthetic && !cfg.data.manifest.empty())
    ctx.err("data", "give either 'synthetic' or 'manifest', not both");

  {
    const json n = j.is_object() && j.contains("nets") ? j.at("nets") : json::object();
    ctx.check_keys(n, "nets",
                   {"encoder_stages", "tap", "latent_dim", "classifier_hidden",
                    "discriminator_stages", "perceptual_stages", "perceptual_taps",
                    "perceptual_seed", "private_stages", "private_feature_dim"});
    cfg.nets.encoder_stages =
        ctx.get_stages(n, "nets", "encoder_stages", default_encoder_stages());
    cfg.nets.tap = ctx.get<std::string>(n, "nets", "tap", "fc");
    cfg.nets.latent_dim = ctx.get<int>(n, "nets", "latent_dim", 64);
    cfg.nets.classifier_hidden = ctx.get<int>(n, "nets", "classifier_hidden", 64);
    cfg.nets.discriminator_stages =
        ctx.get_stages(n, "nets", "discriminator_stages", default_disc_stages());
    cfg.nets.perceptual_stages =
        ctx.get_stages(n, "nets", "perceptual_stages", default_small_stages());
    cfg.nets.perceptual_taps =
        ctx.get<std::vector<int>>(n, "nets", "perceptual_taps", {});
    cfg.nets.perceptual_seed =
        ctx.get<std::uint64_t>(n, "nets", "perceptual_seed", 7002);
    cfg.nets.private_stages =
        ctx.get_stages(n, "nets", "private_stages", default_small_stages());
    cfg.nets.private_feature_dim = ctx.get<int>(n, "nets", "private_feature_dim", 64);
  }

  {
    const json t = j.is_object() && j.contains("train") ? j.at("train") : json::object();
    ctx.check_keys(t, "train",
                   {"lambda1", "lambda2", "mu1", "mu2", "lr_enc", "lr_f", "lr_dec",
                    "lr_disc", "batch_size", "total_alternations",
                    "dec_steps_per_alt", "enc_steps_per_alt", "checkpoint_every",
                    "dec_data"});
    cfg.train.hp.lambda1 = ctx.get<real>(t, "train", "lambda1", 0);
    cfg.train.hp.lambda2 = ctx.get<real>(t, "train", "lambda2", 0);
    cfg.train.hp.mu1 = ctx.get<real>(t, "train", "mu1", 0);
    cfg.train.hp.mu2 = ctx.get<real>(t, "train", "mu2", 0);
    cfg.train.lr_enc = ctx.get<real>(t, "train", "lr_enc", 1e-3);
    cfg.train.lr_f = ctx.get<real>(t, "train", "lr_f", 1e-3);
    cfg.train.lr_dec = ctx.get<real>(t, "train", "lr_dec", 1e-3);
    cfg.train.lr_disc = ctx.get<real>(t, "train", "lr_disc", 1e-3);
    cfg.train.batch_size = ctx.get<int>(t, "train", "batch_size", 32);
    cfg.train.total_alternations = ctx.get<int>(t, "train", "total_alternations", 400);
    cfg.train.dec_steps_per_alt = ctx.get<int>(t, "train", "dec_steps_per_alt", 1);
    cfg.train.enc_steps_per_alt = ctx.get<int>(t, "train", "enc_steps_per_alt", 1);
    cfg.train.checkpoint_every = ctx.get<int>(t, "train", "checkpoint_every", 0);
    cfg.train.dec_data = ctx.get<std::string>(t, "train", "dec_data", "x1");
    if (cfg.train.dec_data != "x1" && cfg.train.dec_data != "x2")
      ctx.err("train.dec_data", "must be 'x1' or 'x2'");
  }

  {
    const json a = j.is_object() && j.contains("attack") ? j.at("attack") : json::object();
    ctx.check_keys(a, "attack",
                   {"mu1", "mu2", "steps", "batch_size", "lr_dec", "lr_disc",
                    "feature_steps", "feature_batch", "feature_lr",
                    "feature_hidden", "grid_size"});
    cfg.attack.mu1 = ctx.get<real>(a, "attack", "mu1", 0);
    cfg.attack.mu2 = ctx.get<real>(a, "attack", "mu2", 0);
    cfg.attack.steps = ctx.get<int>(a, "attack", "steps", 1000);
    cfg.attack.batch_size = ctx.get<int>(a, "attack", "batch_size", 32);
    cfg.attack.lr_dec = ctx.get<real>(a, "attack", "lr_dec", 1e-3);
    cfg.attack.lr_disc = ctx.get<real>(a, "attack", "lr_disc", 1e-3);
    cfg.attack.feature_steps = ctx.get<int>(a, "attack", "feature_steps", 600);
    cfg.attack.feature_batch = ctx.get<int>(a, "attack", "feature_batch", 32);
    cfg.attack.feature_lr = ctx.get<real>(a, "attack", "feature_lr", 1e-3);
    cfg.attack.feature_hidden = ctx.get<int>(a, "attack", "feature_hidden", 128);
    cfg.attack.grid_size = ctx.get<int>(a, "attack", "grid_size", 8);
  }

  {
    const json e = j.is_object() && j.contains("eval") ? j.at("eval") : json::object();
    ctx.check_keys(e, "eval", {"private_steps", "private_batch", "private_lr"});
    cfg.eval.private_steps = ctx.get<int>(e, "eval", "private_steps", 400);
    cfg.eval.private_batch = ctx.get<int>(e, "eval", "private_batch", 32);
    cfg.eval.private_lr = ctx.get<real>(e, "eval", "private_lr", 1e-3);
  }

  // Value-level validation, reported together with the schema problems.
  auto guard = [&ctx](const char* where, auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      ctx.err(where, e.what());
    }
  };
  guard("train", [&] { cfg.train.hp.validate(); });
  if (cfg.data.synthetic)
    guard("data.synthetic", [&] {
      const SynthConfig& sc = *cfg.data.synthetic;
      check(sc.n_identities > 0 && sc.samples_per_identity > 0 &&
                sc.k_attributes >= 1 && sc.image_size >= 16,
            "counts must be positive and image_size >= 16");
    });
  if (cfg.train.batch_size < 1) ctx.err("train.batch_size", "must be >= 1");
  if (cfg.train.total_alternations < 0)
    ctx.err("train.total_alternations", "must be >= 0");
  if (cfg.attack.steps < 0) ctx.err("attack.steps", "must be >= 0");
  if (cfg.attack.mu1 < 0 || cfg.attack.mu2 < 0)
    ctx.err("attack", "mu weights must be >= 0");
  if (cfg.eval.private_steps < 0) ctx.err("eval.private_steps", "must be >= 0");

  if (!ctx.errors.empty()) {
    std::string msg = "config errors:";
    for (const std::string& e : ctx.errors) msg += "\n  - " + e;
    throw ConfigError(msg);
  }
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in.good()) throw ConfigError("cannot open config file: " + path);
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ConfigError("config is not valid JSON: " + std::string(e.what()));
  }
  return from_json(j);
}

json ExperimentConfig::to_json() const {
  json d;
  if (data.synthetic) {
    const SynthConfig& s = *data.synthetic;
    d["synthetic"] = {{"n_identities", s.n_identities},
                      {"samples_per_identity", s.samples_per_identity},
                      {"k_attributes", s.k_attributes},
                      {"image_size", s.image_size},
                      {"channels", s.channels},
                      {"seed", s.seed}};
  } else {
    d["manifest"] = data.manifest;
  }
  d["fractions"] = {data.f1, data.f2, data.ft};
  d["identity_disjoint"] = data.identity_disjoint;
  if (!data.extra_manifest.empty()) {
    d["extra_manifest"] = data.extra_manifest;
    d["extra_to"] = data.extra_to;
  }

  json n = {{"encoder_stages", stages_json(nets.encoder_stages)},
            {"tap", nets.tap},
            {"latent_dim", nets.latent_dim},
            {"classifier_hidden", nets.classifier_hidden},
            {"discriminator_stages", stages_json(nets.discriminator_stages)},
            {"perceptual_stages", stages_json(nets.perceptual_stages)},
            {"perceptual_taps", nets.perceptual_taps},
            {"perceptual_seed", nets.perceptual_seed},
            {"private_stages", stages_json(nets.private_stages)},
            {"private_feature_dim", nets.private_feature_dim}};

  json t = {{"lambda1", train.hp.lambda1},
            {"lambda2", train.hp.lambda2},
            {"mu1", train.hp.mu1},
            {"mu2", train.hp.mu2},
            {"lr_enc", train.lr_enc},
            {"lr_f", train.lr_f},
            {"lr_dec", train.lr_dec},
            {"lr_disc", train.lr_disc},
            {"batch_size", train.batch_size},
            {"total_alternations", train.total_alternations},
            {"dec_steps_per_alt", train.dec_steps_per_alt},
            {"enc_steps_per_alt", train.enc_steps_per_alt},
            {"checkpoint_every", train.checkpoint_every},
            {"dec_data", train.dec_data}};

  json a = {{"mu1", attack.mu1},
            {"mu2", attack.mu2},
            {"steps", attack.steps},
            {"batch_size", attack.batch_size},
            {"lr_dec", attack.lr_dec},
            {"lr_disc", attack.lr_disc},
            {"feature_steps", attack.feature_steps},
            {"feature_batch", attack.feature_batch},
            {"feature_lr", attack.feature_lr},
            {"feature_hidden", attack.feature_hidden},
            {"grid_size", attack.grid_size}};

  json e = {{"private_steps", eval.private_steps},
            {"private_batch", eval.private_batch},
            {"private_lr", eval.private_lr}};

  return {{"seed", seed}, {"out", out}, {"data", d},
          {"nets", n},    {"train", t}, {"attack", a},
          {"eval", e}};
}

std::string ExperimentConfig::config_hash() const {
  const std::string dump = to_json().dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (char c : dump) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------
// Shared preparation
// ---------------------------------------------------------------------------

PreparedData prepare_data(const ExperimentConfig& cfg) {
  PreparedData pd;
  auto ds = std::make_shared<Dataset>();
  if (cfg.data.synthetic)
    *ds = generate_synthetic(*cfg.data.synthetic);
  else
    *ds = load_manifest(cfg.data.manifest);
  pd.source = ds;
  pd.splits = split_dataset(pd.source, cfg.data.f1, cfg.data.f2, cfg.data.ft,
                            cfg.seed, cfg.data.identity_disjoint);
  if (!cfg.data.extra_manifest.empty()) {
    const Dataset extra = load_manifest(cfg.data.extra_manifest);
    merge_extra_data(pd.splits, extra, cfg.data.extra_to == "both");
    pd.source = nullptr;  // splits now reference the merged dataset
  }
  return pd;
}

Specs build_specs(const ExperimentConfig& cfg, const Dataset& dataset) {
  Specs s;
  s.enc.in_channels = dataset.channels;
  s.enc.image_size = dataset.image_size;
  s.enc.stages = cfg.nets.encoder_stages;
  s.enc.tap_layer = cfg.nets.tap;
  s.enc.latent_dim = cfg.nets.latent_dim;
  s.enc.validate();

  s.dec = mirror_decoder_spec(s.enc, s.enc.tap_layer);

  s.f.input_dim = 1;
  for (int d : s.enc.z_shape()) s.f.input_dim *= d;
  s.f.hidden_dim = cfg.nets.classifier_hidden;
  s.f.k = dataset.k;
  s.f.validate();

  s.disc.in_channels = dataset.channels;
  s.disc.image_size = dataset.image_size;
  s.disc.stages = cfg.nets.discriminator_stages;
  s.disc.validate();

  s.g.in_channels = dataset.channels;
  s.g.image_size = dataset.image_size;
  s.g.stages = cfg.nets.perceptual_stages;
  s.g.taps = cfg.nets.perceptual_taps;
  s.g.validate();

  s.c.in_channels = dataset.channels;
  s.c.image_size = dataset.image_size;
  s.c.stages = cfg.nets.private_stages;
  s.c.feature_dim = cfg.nets.private_feature_dim;
  s.c.n_identities = dataset.n_identities;
  s.c.validate();
  return s;
}

namespace {

TrainConfig to_train_config(const ExperimentConfig& cfg) {
  TrainConfig tc;
  tc.hp = cfg.train.hp;
  tc.opt_enc.lr = cfg.train.lr_enc;
  tc.opt_f.lr = cfg.train.lr_f;
  tc.opt_dec.lr = cfg.train.lr_dec;
  tc.opt_disc.lr = cfg.train.lr_disc;
  tc.batch_size = cfg.train.batch_size;
  tc.total_alternations = cfg.train.total_alternations;
  tc.dec_steps_per_alt = cfg.train.dec_steps_per_alt;
  tc.enc_steps_per_alt = cfg.train.enc_steps_per_alt;
  tc.checkpoint_every = cfg.train.checkpoint_every;
  tc.seed = cfg.seed;
  tc.dec_data = cfg.train.dec_data == "x2" ? DecDataSource::X2 : DecDataSource::X1;
  return tc;
}

void write_checkpoint_set(const AlternatingTrainer& trainer, const fs::path& dir) {
  fs::create_directories(dir);
  save_checkpoint((dir / "enc.ckpt").string(), trainer.enc_params(),
                  to_json(trainer.encoder_spec()));
  save_checkpoint((dir / "f.ckpt").string(), trainer.f_params(),
                  to_json(trainer.classifier_spec()));
  save_checkpoint((dir / "dec.ckpt").string(), trainer.dec_params(),
                  to_json(trainer.decoder_spec()));
  if (trainer.uses_discriminator())
    save_checkpoint((dir / "disc.ckpt").string(), trainer.disc_params(),
                    to_json(trainer.discriminator_spec()));
}

}  // namespace

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

void cmd_generate(const ExperimentConfig& cfg, const std::string& out_dir) {
  check(cfg.data.synthetic.has_value(),
        "generate requires a data.synthetic section");
  const Dataset ds = generate_synthetic(*cfg.data.synthetic);
  save_dataset(ds, out_dir);
}

TrainOutput cmd_train(const ExperimentConfig& cfg, const std::string& out_dir) {
  PreparedData pd = prepare_data(cfg);
  const Specs specs = build_specs(cfg, pd.splits.x1.dataset());
  AlternatingTrainer trainer(to_train_config(cfg), specs.enc, specs.dec, specs.f,
                             specs.disc, specs.g, cfg.nets.perceptual_seed,
                             pd.splits.x1, pd.splits.x2);

  fs::create_directories(out_dir);
  {
    std::ofstream cj(fs::path(out_dir) / "config.json");
    cj << cfg.to_json().dump(2) << "\n";
  }
  long last_checkpoint = -1;
  trainer.run([&](long alt, const AlternatingTrainer& t) {
    write_checkpoint_set(t, fs::path(out_dir) / ("step_" + std::to_string(alt)));
    last_checkpoint = alt;
  });
  const long final_alt = cfg.train.total_alternations;
  if (last_checkpoint != final_alt)
    write_checkpoint_set(trainer,
                         fs::path(out_dir) / ("step_" + std::to_string(final_alt)));
  trainer.history().write_csv((fs::path(out_dir) / "history.csv").string());

  TrainOutput out;
  out.final_checkpoint_dir =
      (fs::path(out_dir) / ("step_" + std::to_string(final_alt))).string();
  return out;
}

namespace {

// C is trained as an identity classifier on the adversary split before any
// evaluation; deterministic under the config seed.
ModelParams train_private_net(const PrivateNetSpec& spec, const DatasetSplit& x2,
                              const EvalSection& eval, std::uint64_t seed) {
  ModelParams params = build_private_net(spec, derive_seed(seed, "private"));
  Adam adam(OptimSettings{eval.private_lr, 0.9, 0.999, 1e-8});
  BatchIterator batches(x2, eval.private_batch, derive_seed(seed, "private-batch"));
  for (int step = 1; step <= eval.private_steps; ++step) {
    const Batch b = batches.next();
    auto vars = make_vars(params, true);
    const auto logits = private_logits_forward(spec, vars, ad::constant(b.images));
    const auto loss = ad::softmax_ce_mean(logits, b.identities);
    if (!std::isfinite(loss->value.item()))
      throw DivergenceError("non-finite private-net loss", step);
    ad::backward(loss);
    adam.step(params, vars);
  }
  return params;
}

struct EvalAccumulator {
  real face_sim = 0, ssim = 0, psnr = 0;
  long count = 0;
};

}  // namespace

MetricsReport cmd_attack(const ExperimentConfig& cfg,
                         const std::string& checkpoint_dir,
                         const std::string& out_dir) {
  const fs::path ckpt(checkpoint_dir);
  check(fs::exists(ckpt / "enc.ckpt"),
        "checkpoint directory has no enc.ckpt: " + checkpoint_dir);
  check(fs::exists(ckpt / "f.ckpt"),
        "checkpoint directory has no f.ckpt: " + checkpoint_dir);
  auto [enc_params, enc_spec_json] = load_checkpoint((ckpt / "enc.ckpt").string());
  auto [f_params, f_spec_json] = load_checkpoint((ckpt / "f.ckpt").string());
  const EncoderSpec enc_spec = encoder_spec_from_json(enc_spec_json);
  const ClassifierSpec f_spec = classifier_spec_from_json(f_spec_json);

  PreparedData pd = prepare_data(cfg);
  const Dataset& dataset = pd.splits.x1.dataset();
  const Specs specs = build_specs(cfg, dataset);
  const SealedEncoder bb(enc_spec, enc_params);

  // The metric network C.
  const ModelParams c_params =
      train_private_net(specs.c, pd.splits.x2, cfg.eval, cfg.seed);

  // Black-box MI attack with a mirrored fresh decoder.
  AttackConfig acfg;
  acfg.mu1 = cfg.attack.mu1;
  acfg.mu2 = cfg.attack.mu2;
  acfg.decoder = mirror_decoder_spec(enc_spec, enc_spec.tap_layer);
  acfg.discriminator = specs.disc;
  acfg.perceptual = specs.g;
  acfg.perceptual_seed = cfg.nets.perceptual_seed;
  acfg.opt_dec.lr = cfg.attack.lr_dec;
  acfg.opt_disc.lr = cfg.attack.lr_disc;
  acfg.steps = cfg.attack.steps;
  acfg.batch_size = cfg.attack.batch_size;
  acfg.seed = derive_seed(cfg.seed, "attack");
  const MiAttackResult mi = train_mi_attack(bb, pd.splits.x2, acfg);

  // Feature-level attack.
  FeatureAttackConfig fcfg;
  fcfg.mapper.hidden_dim = cfg.attack.feature_hidden;
  fcfg.opt.lr = cfg.attack.feature_lr;
  fcfg.steps = cfg.attack.feature_steps;
  fcfg.batch_size = cfg.attack.feature_batch;
  fcfg.seed = derive_seed(cfg.seed, "feature-attack");
  MapperSpec m_spec = fcfg.mapper;
  {
    int zdim = 1;
    for (int d : bb.z_shape()) zdim *= d;
    m_spec.input_dim = zdim;
    m_spec.output_dim = specs.c.feature_dim;
  }
  const ModelParams m_params =
      train_feature_attack(bb, specs.c, c_params, pd.splits.x2, fcfg);

  // ---- Evaluation over the test split, in batches ----
  const DatasetSplit& test = pd.splits.test;
  const int nt = static_cast<int>(test.size());
  const int zdim = m_spec.input_dim;

  Tensor all_scores({nt, dataset.k});
  Tensor all_z({nt, zdim});
  std::vector<int> all_ids(nt);
  EvalAccumulator acc;
  real feat_sim_total = 0;

  Tensor grid_orig, grid_recon;
  const int grid_n = std::min<int>(cfg.attack.grid_size, nt);

  const int eval_batch = 64;
  std::size_t pos = 0;
  while (pos < test.size()) {
    const std::size_t end = std::min(pos + eval_batch, test.size());
    std::vector<std::size_t> idx(end - pos);
    for (std::size_t i = pos; i < end; ++i) idx[i - pos] = i;
    const Batch b = make_batch(test, idx);
    const int bn = b.images.dim(0);

    // Utility path uses the encoder directly; the black-box wrapper is the
    // attack's view.
    const Tensor z = encode(enc_spec, enc_params, b.images);
    const Tensor logits = classify(f_spec, f_params, z);
    for (int i = 0; i < bn; ++i) {
      for (int jk = 0; jk < dataset.k; ++jk) {
        const real l = logits.at({i, jk});
        all_scores.at({static_cast<int>(pos) + i, jk}) =
            l >= 0 ? 1 / (1 + std::exp(-l)) : std::exp(l) / (1 + std::exp(l));
      }
      const real* zrow = z.data() + static_cast<std::size_t>(i) * zdim;
      std::copy(zrow, zrow + zdim, all_z.data() + (pos + i) * zdim);
      all_ids[pos + i] = b.identities[i];
    }

    const Tensor xhat = run_mi_attack(acfg.decoder, mi.decoder, bb, b.images);
    acc.face_sim += face_similarity(specs.c, c_params, b.images, xhat) * bn;
    acc.ssim += ssim_batch(b.images, xhat) * bn;
    acc.psnr += psnr_batch(b.images, xhat) * bn;
    acc.count += bn;

    const Tensor mapped =
        mapper_forward(m_spec, make_vars(m_params, false), ad::constant(bb.encode(b.images)))
            ->value;
    const Tensor c_feats = private_features(specs.c, c_params, b.images);
    feat_sim_total += feature_similarity(mapped, c_feats) * bn;

    if (pos == 0 && grid_n > 0) {
      grid_orig = Tensor({grid_n, dataset.channels, dataset.image_size,
                          dataset.image_size});
      grid_recon = grid_orig;
      const std::size_t img = static_cast<std::size_t>(dataset.channels) *
                              dataset.image_size * dataset.image_size;
      for (int i = 0; i < std::min(grid_n, bn); ++i) {
        std::copy(b.images.data() + i * img, b.images.data() + (i + 1) * img,
                  grid_orig.data() + i * img);
        std::copy(xhat.data() + i * img, xhat.data() + (i + 1) * img,
                  grid_recon.data() + i * img);
      }
    }
    pos = end;
  }

  const Batch test_full = full_batch(test);
  MetricsReport report;
  report.per_attribute_mcc = per_attribute_mcc(all_scores, test_full.attributes);
  report.mean_mcc = 0;
  for (real v : report.per_attribute_mcc) report.mean_mcc += v;
  report.mean_mcc /= report.per_attribute_mcc.size();
  report.face_sim = acc.face_sim / acc.count;
  report.feature_sim = feat_sim_total / acc.count;
  report.ssim = acc.ssim / acc.count;
  report.psnr = acc.psnr / acc.count;
  const LdaResult lda = lda_score(all_z, all_ids);
  report.s_w = lda.s_w;
  report.s_b = lda.s_b;
  report.lda_score = lda.score;
  report.lda_infinite = lda.infinite;
  report.config_hash = cfg.config_hash();
  report.seed = cfg.seed;
  report.attack_steps = cfg.attack.steps;
  report.feature_attack_steps = cfg.attack.feature_steps;
  report.tap = enc_spec.tap_layer;
  report.dec_data = cfg.train.dec_data;
  report.identity_disjoint = cfg.data.identity_disjoint;
  report.validate();

  // ---- Artifacts ----
  fs::create_directories(out_dir);
  {
    std::ofstream mj(fs::path(out_dir) / "attack_metrics.json");
    mj << report.to_json().dump(2) << "\n";
  }
  {
    std::ofstream mc(fs::path(out_dir) / "metrics.csv");
    mc << MetricsReport::csv_header() << "\n" << report.csv_row() << "\n";
  }
  if (grid_n > 0) {
    Tensor both({2 * grid_n, dataset.channels, dataset.image_size,
                 dataset.image_size});
    const std::size_t img = static_cast<std::size_t>(dataset.channels) *
                            dataset.image_size * dataset.image_size;
    std::copy(grid_orig.data(), grid_orig.data() + grid_n * img, both.data());
    std::copy(grid_recon.data(), grid_recon.data() + grid_n * img,
              both.data() + grid_n * img);
    write_png((fs::path(out_dir) / "reconstructions.png").string(),
              tile_grid(both, 2, grid_n));
  }
  {
    std::ofstream fc(fs::path(out_dir) / "features.csv");
    fc << "identity";
    for (int jk = 0; jk < dataset.k; ++jk) fc << ",attr_" << jk;
    for (int d = 0; d < zdim; ++d) fc << ",z_" << d;
    fc << "\n";
    char num[48];
    for (int i = 0; i < nt; ++i) {
      fc << all_ids[i];
      for (int jk = 0; jk < dataset.k; ++jk)
        fc << ',' << static_cast<int>(test_full.attributes.at({i, jk}));
      for (int d = 0; d < zdim; ++d) {
        std::snprintf(num, sizeof num, "%.8g", all_z.at({i, d}));
        fc << ',' << num;
      }
      fc << "\n";
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

int worker_threads() {
  const char* env = std::getenv("PRIVSHIELD_THREADS");
  if (!env) return 1;
  const int n = std::atoi(env);
  return n >= 1 ? n : 1;
}

namespace {

void run_parallel(std::vector<std::function<void()>> tasks) {
  const int workers =
      std::min<int>(worker_threads(), static_cast<int>(tasks.size()));
  if (workers <= 1) {
    for (auto& t : tasks) t();
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex err_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      try {
        tasks[i]();
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

std::string format_g(real v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

MetricsReport run_train_attack(const ExperimentConfig& cfg, const fs::path& dir) {
  const TrainOutput t = cmd_train(cfg, (dir / "train").string());
  return cmd_attack(cfg, t.final_checkpoint_dir, (dir / "attack").string());
}

}  // namespace

std::vector<SweepRow> cmd_sweep_lambda2(const ExperimentConfig& cfg,
                                        const std::vector<double>& lambda2_list,
                                        const std::string& out_dir, int n_seeds) {
  check(!lambda2_list.empty(), "sweep-lambda2: the lambda2 list is empty");
  check(n_seeds >= 1, "sweep-lambda2: need at least one seed");
  fs::create_directories(out_dir);

  struct Cell {
    std::vector<MetricsReport> reports;
  };
  std::vector<Cell> cells(lambda2_list.size());
  for (auto& c : cells) c.reports.resize(n_seeds);

  std::vector<std::function<void()>> tasks;
  for (std::size_t gi = 0; gi < lambda2_list.size(); ++gi) {
    for (int si = 0; si < n_seeds; ++si) {
      tasks.push_back([&, gi, si] {
        ExperimentConfig run = cfg;
        // Table-2 regime: lambda1 = 1, mu1 = 0, mu2 = 1, lambda2 sweeps.
        run.train.hp.lambda1 = 1;
        run.train.hp.lambda2 = lambda2_list[gi];
        run.train.hp.mu1 = 0;
        run.train.hp.mu2 = 1;
        run.attack.mu1 = 0;
        run.attack.mu2 = 1;
        run.seed = derive_seed(cfg.seed, "sweep-l2",
                               static_cast<std::uint64_t>(gi) * 100 + si);
        const fs::path dir = fs::path(out_dir) /
                             ("l2_" + format_g(lambda2_list[gi])) /
                             ("seed_" + std::to_string(si));
        cells[gi].reports[si] = run_train_attack(run, dir);
      });
    }
  }
  run_parallel(std::move(tasks));

  std::vector<SweepRow> rows;
  for (std::size_t gi = 0; gi < lambda2_list.size(); ++gi) {
    SweepRow row;
    row.x = lambda2_list[gi];
    auto agg = [&](auto field) {
      real lo = 1e300, hi = -1e300, sum = 0;
      for (const MetricsReport& r : cells[gi].reports) {
        const real v = r.*field;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
        sum += v;
      }
      return std::array<real, 2>{sum / n_seeds, hi - lo};
    };
    auto [mcc_m, mcc_r] = agg(&MetricsReport::mean_mcc);
    auto [fs_m, fs_r] = agg(&MetricsReport::face_sim);
    auto [ft_m, ft_r] = agg(&MetricsReport::feature_sim);
    auto [ss_m, ss_r] = agg(&MetricsReport::ssim);
    auto [ps_m, ps_r] = agg(&MetricsReport::psnr);
    row.mean.mean_mcc = mcc_m;
    row.range.mean_mcc = mcc_r;
    row.mean.face_sim = fs_m;
    row.range.face_sim = fs_r;
    row.mean.feature_sim = ft_m;
    row.range.feature_sim = ft_r;
    row.mean.ssim = ss_m;
    row.range.ssim = ss_r;
    row.mean.psnr = ps_m;
    row.range.psnr = ps_r;
    rows.push_back(row);
  }

  {
    std::ofstream csv(fs::path(out_dir) / "sweep_lambda2.csv");
    csv << "lambda2,mean_mcc,mean_mcc_range,face_sim,face_sim_range,"
           "feature_sim,feature_sim_range,ssim,ssim_range,psnr,psnr_range\n";
    char line[512];
    for (const SweepRow& r : rows) {
      std::snprintf(line, sizeof line,
                    "%g,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f\n",
                    r.x, r.mean.mean_mcc, r.range.mean_mcc, r.mean.face_sim,
                    r.range.face_sim, r.mean.feature_sim, r.range.feature_sim,
                    r.mean.ssim, r.range.ssim, r.mean.psnr, r.range.psnr);
      csv << line;
    }
  }
  {
    SvgPlot plot("Utility-privacy tradeoff over lambda2", "face similarity",
                 "mean MCC");
    std::vector<real> xs, ys;
    for (const SweepRow& r : rows) {
      xs.push_back(r.mean.face_sim);
      ys.push_back(r.mean.mean_mcc);
    }
    plot.add_line(xs, ys, "lambda2 sweep", "#1f77b4");
    plot.write((fs::path(out_dir) / "tradeoff.svg").string());
  }
  return rows;
}

std::vector<LayerSweepRow> cmd_sweep_layers(const ExperimentConfig& cfg,
                                            const std::vector<std::string>& taps,
                                            const std::string& out_dir,
                                            int n_seeds) {
  check(!taps.empty(), "sweep-layers: the tap list is empty");
  check(n_seeds >= 1, "sweep-layers: need at least one seed");
  {
    // Validate every tap against the configured encoder before any work.
    const PreparedData probe_data = prepare_data(cfg);
    EncoderSpec probe;
    probe.in_channels = probe_data.splits.x1.dataset().channels;
    probe.image_size = probe_data.splits.x1.dataset().image_size;
    probe.stages = cfg.nets.encoder_stages;
    probe.latent_dim = cfg.nets.latent_dim;
    for (const std::string& tap : taps) {
      probe.tap_layer = tap;
      probe.validate();
    }
  }
  fs::create_directories(out_dir);

  struct Cell {
    std::vector<MetricsReport> reports;
  };
  std::vector<Cell> cells(taps.size() * 2);
  for (auto& c : cells) c.reports.resize(n_seeds);

  std::vector<std::function<void()>> tasks;
  for (std::size_t ti = 0; ti < taps.size(); ++ti) {
    for (int variant = 0; variant < 2; ++variant) {  // 0 = baseline, 1 = adversarial
      for (int si = 0; si < n_seeds; ++si) {
        tasks.push_back([&, ti, variant, si] {
          ExperimentConfig run = cfg;
          run.nets.tap = taps[ti];
          if (variant == 0) {
            run.train.hp.lambda1 = 0;
            run.train.hp.lambda2 = 0;
          } else {
            run.train.hp.lambda1 = 1;
          }
          run.seed = derive_seed(cfg.seed, "sweep-layers",
                                 (static_cast<std::uint64_t>(ti) * 2 + variant) *
                                         100 +
                                     si);
          const fs::path dir = fs::path(out_dir) / taps[ti] /
                               (variant ? "adv" : "base") /
                               ("seed_" + std::to_string(si));
          cells[ti * 2 + variant].reports[si] = run_train_attack(run, dir);
        });
      }
    }
  }
  run_parallel(std::move(tasks));

  std::vector<LayerSweepRow> rows;
  for (std::size_t ti = 0; ti < taps.size(); ++ti) {
    for (int variant = 0; variant < 2; ++variant) {
      LayerSweepRow row;
      row.tap = taps[ti];
      row.adversarial = variant == 1;
      for (const MetricsReport& r : cells[ti * 2 + variant].reports) {
        row.face_sim += r.face_sim / n_seeds;
        row.mean_mcc += r.mean_mcc / n_seeds;
        row.s_w += r.s_w / n_seeds;
        row.s_b += r.s_b / n_seeds;
        row.lda += r.lda_score / n_seeds;
      }
      rows.push_back(row);
    }
  }

  std::ofstream csv(fs::path(out_dir) / "sweep_layers.csv");
  csv << "tap,variant,face_sim,mean_mcc,s_w,s_b,lda_score\n";
  char line[320];
  for (const LayerSweepRow& r : rows) {
    std::snprintf(line, sizeof line, "%s,%s,%.6f,%.6f,%.6f,%.6f,%.6f\n",
                  r.tap.c_str(), r.adversarial ? "adv" : "base", r.face_sim,
                  r.mean_mcc, r.s_w, r.s_b, r.lda);
    csv << line;
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Report merging
// ---------------------------------------------------------------------------

namespace {

std::optional<fs::path> find_file(const fs::path& dir, const std::string& name) {
  if (fs::exists(dir / name)) return dir / name;
  if (fs::exists(dir / "attack" / name)) return dir / "attack" / name;
  return std::nullopt;
}

struct FeatureTable {
  int k = 0;
  std::vector<int> identities;
  std::vector<std::vector<int>> attrs;
  Tensor z;  // [N,D]
};

std::optional<FeatureTable> read_features_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in.good()) return std::nullopt;
  std::string line;
  if (!std::getline(in, line)) return std::nullopt;
  int k = 0, d = 0;
  {
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, ',')) {
      if (col.rfind("attr_", 0) == 0) ++k;
      if (col.rfind("z_", 0) == 0) ++d;
    }
  }
  if (d == 0) return std::nullopt;
  FeatureTable t;
  t.k = k;
  std::vector<real> zvals;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string col;
    std::getline(ss, col, ',');
    t.identities.push_back(std::stoi(col));
    std::vector<int> attrs(k);
    for (int j = 0; j < k; ++j) {
      std::getline(ss, col, ',');
      attrs[j] = std::stoi(col);
    }
    t.attrs.push_back(attrs);
    for (int j = 0; j < d; ++j) {
      std::getline(ss, col, ',');
      zvals.push_back(std::stod(col));
    }
  }
  const int n = static_cast<int>(t.identities.size());
  if (n < 2) return std::nullopt;
  t.z = Tensor({n, d}, std::move(zvals));
  return t;
}

}  // namespace

void cmd_report(const std::vector<std::string>& run_dirs,
                const std::string& out_dir) {
  fs::create_directories(out_dir);
  std::vector<MetricsReport> reports;
  std::vector<fs::path> feature_files;
  std::vector<std::string> problems;

  for (const std::string& dir : run_dirs) {
    const auto mpath = find_file(dir, "attack_metrics.json");
    if (!mpath) {
      problems.push_back(dir + ": no attack_metrics.json");
      continue;
    }
    try {
      std::ifstream in(*mpath);
      json j;
      in >> j;
      reports.push_back(MetricsReport::from_json(j));
    } catch (const std::exception& e) {
      problems.push_back(mpath->string() + ": " + e.what());
      continue;
    }
    if (const auto fpath = find_file(dir, "features.csv"))
      feature_files.push_back(*fpath);
    else
      feature_files.push_back({});
  }
  for (const std::string& p : problems) std::cerr << "report: skipped " << p << "\n";

  {
    std::ofstream csv(fs::path(out_dir) / "merged.csv");
    csv << MetricsReport::csv_header() << "\n";
    for (const MetricsReport& r : reports) csv << r.csv_row() << "\n";
  }
  {
    json arr = json::array();
    for (const MetricsReport& r : reports) arr.push_back(r.to_json());
    std::ofstream mj(fs::path(out_dir) / "merged.json");
    mj << arr.dump(2) << "\n";
  }
  if (!reports.empty()) {
    SvgPlot plot("Utility vs privacy", "face similarity", "mean MCC");
    std::vector<real> xs, ys;
    for (const MetricsReport& r : reports) {
      xs.push_back(r.face_sim);
      ys.push_back(r.mean_mcc);
    }
    plot.add_scatter(xs, ys, "runs", "#d62728");
    plot.write((fs::path(out_dir) / "tradeoff.svg").string());
  }

  // 2-D feature projections, coloured by an attribute pair as in the latent
  // visualizations.
  static const char* kColors[4] = {"#1f77b4", "#2ca02c", "#d62728", "#17becf"};
  for (std::size_t i = 0; i < feature_files.size(); ++i) {
    if (feature_files[i].empty()) continue;
    const auto table = read_features_csv(feature_files[i]);
    if (!table) {
      std::cerr << "report: skipped unreadable " << feature_files[i] << "\n";
      continue;
    }
    const Tensor proj = project_2d(table->z);
    const int a = 0, b = table->k > 1 ? 1 : 0;
    SvgPlot plot("Representation projection (" + reports[i].config_hash + ")",
                 "pc1", "pc2");
    for (int cls = 0; cls < 4; ++cls) {
      std::vector<real> xs, ys;
      for (std::size_t r = 0; r < table->identities.size(); ++r) {
        const int code = table->attrs[r][a] * 2 + table->attrs[r][b];
        if (code != cls) continue;
        xs.push_back(proj.at({static_cast<int>(r), 0}));
        ys.push_back(proj.at({static_cast<int>(r), 1}));
      }
      if (xs.empty()) continue;
      const std::string label = "attr" + std::to_string(a) +
                                (cls / 2 ? "+" : "-") + " attr" +
                                std::to_string(b) + (cls % 2 ? "+" : "-");
      plot.add_scatter(xs, ys, label, kColors[cls]);
    }
    plot.write((fs::path(out_dir) /
                ("projection_" + reports[i].config_hash + "_" +
                 std::to_string(i) + ".svg"))
                   .string());
  }
}

}  // namespace privshield
