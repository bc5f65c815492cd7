#include "privshield/nets.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "privshield/rng.hpp"

namespace privshield {

const char* act_name(Act a) {
  switch (a) {
    case Act::None: return "none";
    case Act::Relu: return "relu";
    case Act::LeakyRelu: return "lrelu";
    case Act::Sigmoid: return "sigmoid";
    case Act::Tanh: return "tanh";
  }
  return "?";
}

Act act_from_name(const std::string& name) {
  if (name == "none") return Act::None;
  if (name == "relu") return Act::Relu;
  if (name == "lrelu") return Act::LeakyRelu;
  if (name == "sigmoid") return Act::Sigmoid;
  if (name == "tanh") return Act::Tanh;
  throw Error("unknown activation '" + name + "'");
}

namespace {

ad::Var apply_act(const ad::Var& v, Act act) {
  switch (act) {
    case Act::None: return v;
    case Act::Relu: return ad::relu(v);
    case Act::LeakyRelu: return ad::leaky_relu(v, real(0.2));
    case Act::Sigmoid: return ad::sigmoid(v);
    case Act::Tanh: return ad::vtanh(v);
  }
  throw Error("bad activation");
}

// Applies the shared stride rules: 3x3 kernel, padding 1.
std::vector<int> conv_output_shape(const std::vector<int>& in, const ConvStage& st,
                                   const std::string& who, int stage_no) {
  const int h = in[1], w = in[2];
  check(st.out_channels > 0, who + " stage " + std::to_string(stage_no) +
                                 ": out_channels must be positive");
  check(st.stride == 1 || st.stride == 2,
        who + " stage " + std::to_string(stage_no) + ": stride must be 1 or 2");
  if (st.stride == 1) return {st.out_channels, h, w};
  check(h % 2 == 0 && w % 2 == 0,
        who + " stage " + std::to_string(stage_no) +
            ": stride-2 stage needs an even input size, got " +
            std::to_string(h) + "x" + std::to_string(w));
  return {st.out_channels, h / 2, w / 2};
}

void validate_conv_stack(int in_channels, int image_size,
                         const std::vector<ConvStage>& stages,
                         const std::string& who) {
  check(in_channels == 1 || in_channels == 3, who + ": channels must be 1 or 3");
  check(image_size > 0, who + ": image_size must be positive");
  check(!stages.empty(), who + ": needs at least one conv stage");
  std::vector<int> shape{in_channels, image_size, image_size};
  for (std::size_t i = 0; i < stages.size(); ++i)
    shape = conv_output_shape(shape, stages[i], who, static_cast<int>(i) + 1);
  check(shape[1] > 0 && shape[2] > 0, who + ": spatial size collapsed to zero");
}

}  // namespace

void EncoderSpec::validate() const {
  validate_conv_stack(in_channels, image_size, stages, "encoder");
  tap_stage();  // throws when the tap layer does not exist
  if (tap_layer == "fc")
    check(latent_dim > 0, "encoder: fc tap requires latent_dim > 0");
}

int EncoderSpec::tap_stage() const {
  if (tap_layer == "fc") return 0;
  for (std::size_t i = 0; i < stages.size(); ++i)
    if (tap_layer == "conv" + std::to_string(i + 1)) return static_cast<int>(i) + 1;
  throw Error("encoder: tap layer '" + tap_layer + "' does not name a stage");
}

std::vector<int> EncoderSpec::stage_shape(int i) const {
  std::vector<int> shape{in_channels, image_size, image_size};
  check(i >= 0 && i <= static_cast<int>(stages.size()), "encoder: bad stage index");
  for (int s = 0; s < i; ++s)
    shape = conv_output_shape(shape, stages[s], "encoder", s + 1);
  return shape;
}

std::vector<int> EncoderSpec::z_shape() const {
  const int tap = tap_stage();
  if (tap == 0) return {latent_dim};
  return stage_shape(tap);
}

std::vector<std::string> EncoderSpec::tap_names() const {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < stages.size(); ++i)
    names.push_back("conv" + std::to_string(i + 1));
  names.push_back("fc");
  return names;
}

void DecoderSpec::validate() const {
  check(!stages.empty(), "decoder: needs at least one stage");
  check(image_channels == 1 || image_channels == 3, "decoder: bad image channels");
  check(stages.back().out_channels == image_channels,
        "decoder: final stage must emit the image channels");
  check(stages.back().act == Act::Sigmoid,
        "decoder: final stage must be sigmoid so outputs stay in [0,1]");
  int c, h, w;
  if (from_flat()) {
    check(z_shape[0] > 0 && fc_channels > 0 && fc_h > 0 && fc_w > 0,
          "decoder: flat input requires an fc lift shape");
    c = fc_channels;
    h = fc_h;
    w = fc_w;
  } else {
    check(z_shape.size() == 3, "decoder: z shape must be {D} or {C,H,W}");
    c = z_shape[0];
    h = z_shape[1];
    w = z_shape[2];
  }
  check(c > 0 && h > 0 && w > 0, "decoder: bad input shape");
  for (const Stage& st : stages) {
    if (st.upsample) {
      h *= 2;
      w *= 2;
    }
    check(st.out_channels > 0, "decoder: stage out_channels must be positive");
  }
  check(h == image_size && w == image_size,
        "decoder: output size " + std::to_string(h) + " != image size " +
            std::to_string(image_size));
}

DecoderSpec mirror_decoder_spec(const EncoderSpec& enc, const std::string& tap_layer) {
  EncoderSpec probe = enc;
  probe.tap_layer = tap_layer;
  probe.validate();
  const int tap = probe.tap_stage();
  const int last = tap == 0 ? static_cast<int>(enc.stages.size()) : tap;

  DecoderSpec dec;
  dec.image_channels = enc.in_channels;
  dec.image_size = enc.image_size;
  dec.z_shape = probe.z_shape();
  if (tap == 0) {
    const auto lift = probe.stage_shape(last);
    dec.fc_channels = lift[0];
    dec.fc_h = lift[1];
    dec.fc_w = lift[2];
  }
  for (int i = last; i >= 1; --i) {
    DecoderSpec::Stage st;
    st.upsample = enc.stages[i - 1].stride == 2;
    st.out_channels = probe.stage_shape(i - 1)[0];
    st.act = (i == 1) ? Act::Sigmoid : Act::Relu;
    dec.stages.push_back(st);
  }
  dec.validate();
  return dec;
}

void ClassifierSpec::validate() const {
  check(input_dim > 0 && hidden_dim > 0 && k > 0, "classifier: bad dimensions");
}

void DiscriminatorSpec::validate() const {
  validate_conv_stack(in_channels, image_size, stages, "discriminator");
}

void PerceptualSpec::validate() const {
  validate_conv_stack(in_channels, image_size, stages, "perceptual");
  for (int t : effective_taps())
    check(t >= 1 && t <= static_cast<int>(stages.size()),
          "perceptual: tap index out of range");
}

std::vector<int> PerceptualSpec::effective_taps() const {
  if (!taps.empty()) return taps;
  std::vector<int> all(stages.size());
  for (std::size_t i = 0; i < stages.size(); ++i) all[i] = static_cast<int>(i) + 1;
  return all;
}

void PrivateNetSpec::validate() const {
  validate_conv_stack(in_channels, image_size, stages, "private net");
  check(feature_dim > 0, "private net: feature_dim must be positive");
  check(n_identities >= 2, "private net: needs at least 2 identities");
}

void MapperSpec::validate() const {
  check(input_dim > 0 && hidden_dim > 0 && output_dim > 0, "mapper: bad dimensions");
}

std::size_t ModelParams::total_size() const {
  std::size_t n = 0;
  for (const auto& [name, t] : arrays) n += t.size();
  return n;
}

std::uint64_t ModelParams::checksum() const {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* p, std::size_t n) {
    const unsigned char* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ULL;
    }
  };
  for (const auto& [name, t] : arrays) {
    mix(name.data(), name.size());
    for (int d : t.dims()) mix(&d, sizeof d);
    mix(t.data(), t.size() * sizeof(real));
  }
  return h;
}

namespace {

void init_tensor(Tensor& t, Rng& rng, int fan_in) {
  const real a = std::sqrt(real(3) / fan_in);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-a, a);
}

void add_conv(ModelParams& p, Rng& rng, const std::string& name, int out_c, int in_c) {
  Tensor w({out_c, in_c, 3, 3});
  init_tensor(w, rng, in_c * 9);
  p.arrays[name + ".w"] = std::move(w);
  p.arrays[name + ".b"] = Tensor({out_c});
}

void add_fc(ModelParams& p, Rng& rng, const std::string& name, int in_d, int out_d) {
  Tensor w({in_d, out_d});
  init_tensor(w, rng, in_d);
  p.arrays[name + ".w"] = std::move(w);
  p.arrays[name + ".b"] = Tensor({out_d});
}

int flat_size(const std::vector<int>& shape) {
  int n = 1;
  for (int d : shape) n *= d;
  return n;
}

}  // namespace

ModelParams build_encoder(const EncoderSpec& spec, std::uint64_t seed) {
  spec.validate();
  ModelParams p;
  p.init_seed = seed;
  Rng rng(derive_seed(seed, "encoder"));
  int in_c = spec.in_channels;
  for (std::size_t i = 0; i < spec.stages.size(); ++i) {
    add_conv(p, rng, "conv" + std::to_string(i + 1), spec.stages[i].out_channels, in_c);
    in_c = spec.stages[i].out_channels;
  }
  if (spec.tap_stage() == 0) {
    const int d = flat_size(spec.stage_shape(static_cast<int>(spec.stages.size())));
    add_fc(p, rng, "fc", d, spec.latent_dim);
  }
  return p;
}

ModelParams build_decoder(const DecoderSpec& spec, std::uint64_t seed) {
  spec.validate();
  ModelParams p;
  p.init_seed = seed;
  Rng rng(derive_seed(seed, "decoder"));
  int in_c;
  if (spec.from_flat()) {
    add_fc(p, rng, "fc", spec.z_shape[0], spec.fc_channels * spec.fc_h * spec.fc_w);
    in_c = spec.fc_channels;
  } else {
    in_c = spec.z_shape[0];
  }
  for (std::size_t i = 0; i < spec.stages.size(); ++i) {
    add_conv(p, rng, "conv" + std::to_string(i + 1), spec.stages[i].out_channels, in_c);
    in_c = spec.stages[i].out_channels;
  }
  return p;
}

ModelParams build_classifier(const ClassifierSpec& spec, std::uint64_t seed) {
  spec.validate();
  ModelParams p;
  p.init_seed = seed;
  Rng rng(derive_seed(seed, "classifier"));
  add_fc(p, rng, "fc1", spec.input_dim, spec.hidden_dim);
  add_fc(p, rng, "fc2", spec.hidden_dim, spec.k);
  return p;
}

ModelParams build_discriminator(const DiscriminatorSpec& spec, std::uint64_t seed) {
  spec.validate();
  ModelParams p;
  p.init_seed = seed;
  Rng rng(derive_seed(seed, "discriminator"));
  int in_c = spec.in_channels;
  std::vector<int> shape{spec.in_channels, spec.image_size, spec.image_size};
  for (std::size_t i = 0; i < spec.stages.size(); ++i) {
    add_conv(p, rng, "conv" + std::to_string(i + 1), spec.stages[i].out_channels, in_c);
    in_c = spec.stages[i].out_channels;
    shape = conv_output_shape(shape, spec.stages[i], "discriminator",
                              static_cast<int>(i) + 1);
  }
  add_fc(p, rng, "fc", flat_size(shape), 1);
  return p;
}

ModelParams build_perceptual(const PerceptualSpec& spec, std::uint64_t seed) {
  spec.validate();
  ModelParams p;
  p.init_seed = seed;
  Rng rng(derive_seed(seed, "perceptual"));
  int in_c = spec.in_channels;
  for (std::size_t i = 0; i < spec.stages.size(); ++i) {
    add_conv(p, rng, "conv" + std::to_string(i + 1), spec.stages[i].out_channels, in_c);
    in_c = spec.stages[i].out_channels;
  }
  return p;
}

ModelParams build_private_net(const PrivateNetSpec& spec, std::uint64_t seed) {
  spec.validate();
  ModelParams p;
  p.init_seed = seed;
  Rng rng(derive_seed(seed, "private"));
  int in_c = spec.in_channels;
  std::vector<int> shape{spec.in_channels, spec.image_size, spec.image_size};
  for (std::size_t i = 0; i < spec.stages.size(); ++i) {
    add_conv(p, rng, "conv" + std::to_string(i + 1), spec.stages[i].out_channels, in_c);
    in_c = spec.stages[i].out_channels;
    shape = conv_output_shape(shape, spec.stages[i], "private net",
                              static_cast<int>(i) + 1);
  }
  add_fc(p, rng, "fc_feat", flat_size(shape), spec.feature_dim);
  add_fc(p, rng, "fc_out", spec.feature_dim, spec.n_identities);
  return p;
}

ModelParams build_mapper(const MapperSpec& spec, std::uint64_t seed) {
  spec.validate();
  ModelParams p;
  p.init_seed = seed;
  Rng rng(derive_seed(seed, "mapper"));
  add_fc(p, rng, "fc1", spec.input_dim, spec.hidden_dim);
  add_fc(p, rng, "fc2", spec.hidden_dim, spec.output_dim);
  return p;
}

ParamVars make_vars(const ModelParams& params, bool trainable) {
  ParamVars vars;
  for (const auto& [name, t] : params.arrays)
    vars[name] = trainable ? ad::leaf(t) : ad::constant(t);
  return vars;
}

namespace {

const ad::Var& pv(const ParamVars& p, const std::string& name) {
  auto it = p.find(name);
  check(it != p.end(), "missing parameter '" + name + "'");
  return it->second;
}

ad::Var fc_layer(const ParamVars& p, const std::string& name, const ad::Var& x) {
  return ad::add_rowvec(ad::matmul(x, pv(p, name + ".w")), pv(p, name + ".b"));
}

ad::Var conv_layer(const ParamVars& p, const std::string& name, const ad::Var& x,
                   int stride) {
  return ad::conv2d(x, pv(p, name + ".w"), pv(p, name + ".b"), stride, 1);
}

void check_image_input(const ad::Var& x, int channels, int size, const char* who) {
  check(x->value.rank() == 4 && x->value.dim(1) == channels &&
            x->value.dim(2) == size && x->value.dim(3) == size,
        std::string(who) + ": expected [N," + std::to_string(channels) + "," +
            std::to_string(size) + "," + std::to_string(size) + "], got " +
            x->value.shape_str());
}

}  // namespace

ad::Var encoder_forward(const EncoderSpec& spec, const ParamVars& p, const ad::Var& x) {
  check_image_input(x, spec.in_channels, spec.image_size, "encoder");
  const int tap = spec.tap_stage();
  const int last = tap == 0 ? static_cast<int>(spec.stages.size()) : tap;
  ad::Var h = x;
  for (int i = 1; i <= last; ++i)
    h = apply_act(conv_layer(p, "conv" + std::to_string(i), h, spec.stages[i - 1].stride),
                  spec.stages[i - 1].act);
  if (tap == 0) h = fc_layer(p, "fc", ad::flatten(h));
  return h;
}

ad::Var decoder_forward(const DecoderSpec& spec, const ParamVars& p, const ad::Var& z) {
  ad::Var h = z;
  if (spec.from_flat()) {
    check(z->value.rank() == 2 && z->value.dim(1) == spec.z_shape[0],
          "decoder: expected [N," + std::to_string(spec.z_shape[0]) + "], got " +
              z->value.shape_str());
    h = ad::relu(fc_layer(p, "fc", h));
    h = ad::reshape(h, {z->value.dim(0), spec.fc_channels, spec.fc_h, spec.fc_w});
  } else {
    check(z->value.rank() == 4 && z->value.dim(1) == spec.z_shape[0] &&
              z->value.dim(2) == spec.z_shape[1] && z->value.dim(3) == spec.z_shape[2],
          "decoder: z shape " + z->value.shape_str() + " does not match spec");
  }
  for (std::size_t i = 0; i < spec.stages.size(); ++i) {
    if (spec.stages[i].upsample) h = ad::upsample2(h);
    h = apply_act(conv_layer(p, "conv" + std::to_string(i + 1), h, 1),
                  spec.stages[i].act);
  }
  return h;
}

ad::Var classifier_forward(const ClassifierSpec& spec, const ParamVars& p,
                           const ad::Var& z) {
  ad::Var h = ad::flatten(z);
  check(h->value.dim(1) == spec.input_dim,
        "classifier: input dim " + std::to_string(h->value.dim(1)) + " != " +
            std::to_string(spec.input_dim));
  return fc_layer(p, "fc2", ad::relu(fc_layer(p, "fc1", h)));
}

ad::Var discriminator_forward(const DiscriminatorSpec& spec, const ParamVars& p,
                              const ad::Var& x) {
  check_image_input(x, spec.in_channels, spec.image_size, "discriminator");
  ad::Var h = x;
  for (std::size_t i = 0; i < spec.stages.size(); ++i)
    h = apply_act(conv_layer(p, "conv" + std::to_string(i + 1), h, spec.stages[i].stride),
                  spec.stages[i].act);
  return ad::sigmoid(fc_layer(p, "fc", ad::flatten(h)));
}

std::vector<ad::Var> perceptual_forward(const PerceptualSpec& spec, const ParamVars& p,
                                        const ad::Var& x) {
  check_image_input(x, spec.in_channels, spec.image_size, "perceptual");
  const auto taps = spec.effective_taps();
  std::vector<ad::Var> feats;
  ad::Var h = x;
  for (std::size_t i = 0; i < spec.stages.size(); ++i) {
    h = apply_act(conv_layer(p, "conv" + std::to_string(i + 1), h, spec.stages[i].stride),
                  spec.stages[i].act);
    if (std::find(taps.begin(), taps.end(), static_cast<int>(i) + 1) != taps.end())
      feats.push_back(h);
  }
  return feats;
}

namespace {

ad::Var private_trunk(const PrivateNetSpec& spec, const ParamVars& p, const ad::Var& x) {
  check_image_input(x, spec.in_channels, spec.image_size, "private net");
  ad::Var h = x;
  for (std::size_t i = 0; i < spec.stages.size(); ++i)
    h = apply_act(conv_layer(p, "conv" + std::to_string(i + 1), h, spec.stages[i].stride),
                  spec.stages[i].act);
  return ad::relu(fc_layer(p, "fc_feat", ad::flatten(h)));
}

}  // namespace

ad::Var private_features_forward(const PrivateNetSpec& spec, const ParamVars& p,
                                 const ad::Var& x) {
  return private_trunk(spec, p, x);
}

ad::Var private_logits_forward(const PrivateNetSpec& spec, const ParamVars& p,
                               const ad::Var& x) {
  return fc_layer(p, "fc_out", private_trunk(spec, p, x));
}

ad::Var mapper_forward(const MapperSpec& spec, const ParamVars& p, const ad::Var& z) {
  ad::Var h = ad::flatten(z);
  check(h->value.dim(1) == spec.input_dim,
        "mapper: input dim " + std::to_string(h->value.dim(1)) + " != " +
            std::to_string(spec.input_dim));
  return fc_layer(p, "fc2", ad::relu(fc_layer(p, "fc1", h)));
}

Tensor encode(const EncoderSpec& spec, const ModelParams& params, const Tensor& x) {
  return encoder_forward(spec, make_vars(params, false), ad::constant(x))->value;
}

Tensor decode(const DecoderSpec& spec, const ModelParams& params, const Tensor& z) {
  return decoder_forward(spec, make_vars(params, false), ad::constant(z))->value;
}

Tensor classify(const ClassifierSpec& spec, const ModelParams& params, const Tensor& z) {
  return classifier_forward(spec, make_vars(params, false), ad::constant(z))->value;
}

Tensor discriminate(const DiscriminatorSpec& spec, const ModelParams& params,
                    const Tensor& x) {
  return discriminator_forward(spec, make_vars(params, false), ad::constant(x))->value;
}

std::vector<Tensor> perceptual(const PerceptualSpec& spec, const ModelParams& params,
                               const Tensor& x) {
  auto feats = perceptual_forward(spec, make_vars(params, false), ad::constant(x));
  std::vector<Tensor> out;
  out.reserve(feats.size());
  for (const auto& f : feats) out.push_back(f->value);
  return out;
}

Tensor private_features(const PrivateNetSpec& spec, const ModelParams& params,
                        const Tensor& x) {
  return private_features_forward(spec, make_vars(params, false), ad::constant(x))->value;
}

namespace {

json stages_to_json(const std::vector<ConvStage>& stages) {
  json arr = json::array();
  for (const ConvStage& st : stages)
    arr.push_back({{"channels", st.out_channels},
                   {"stride", st.stride},
                   {"act", act_name(st.act)}});
  return arr;
}

std::vector<ConvStage> stages_from_json(const json& arr) {
  std::vector<ConvStage> stages;
  for (const auto& j : arr) {
    ConvStage st;
    st.out_channels = j.at("channels").get<int>();
    st.stride = j.at("stride").get<int>();
    st.act = act_from_name(j.value("act", "relu"));
    stages.push_back(st);
  }
  return stages;
}

void check_kind(const json& j, const char* kind) {
  check(j.value("kind", "") == kind,
        std::string("expected spec kind '") + kind + "', got '" +
            j.value("kind", "<missing>") + "'");
}

}  // namespace

json to_json(const EncoderSpec& s) {
  return {{"kind", "encoder"},       {"in_channels", s.in_channels},
          {"image_size", s.image_size}, {"stages", stages_to_json(s.stages)},
          {"tap", s.tap_layer},      {"latent_dim", s.latent_dim}};
}

EncoderSpec encoder_spec_from_json(const json& j) {
  check_kind(j, "encoder");
  EncoderSpec s;
  s.in_channels = j.at("in_channels").get<int>();
  s.image_size = j.at("image_size").get<int>();
  s.stages = stages_from_json(j.at("stages"));
  s.tap_layer = j.at("tap").get<std::string>();
  s.latent_dim = j.at("latent_dim").get<int>();
  s.validate();
  return s;
}

json to_json(const DecoderSpec& s) {
  json stages = json::array();
  for (const auto& st : s.stages)
    stages.push_back({{"upsample", st.upsample},
                      {"channels", st.out_channels},
                      {"act", act_name(st.act)}});
  return {{"kind", "decoder"},
          {"z_shape", s.z_shape},
          {"fc", {{"channels", s.fc_channels}, {"h", s.fc_h}, {"w", s.fc_w}}},
          {"stages", stages},
          {"image_channels", s.image_channels},
          {"image_size", s.image_size}};
}

DecoderSpec decoder_spec_from_json(const json& j) {
  check_kind(j, "decoder");
  DecoderSpec s;
  s.z_shape = j.at("z_shape").get<std::vector<int>>();
  s.fc_channels = j.at("fc").at("channels").get<int>();
  s.fc_h = j.at("fc").at("h").get<int>();
  s.fc_w = j.at("fc").at("w").get<int>();
  for (const auto& stj : j.at("stages")) {
    DecoderSpec::Stage st;
    st.upsample = stj.at("upsample").get<bool>();
    st.out_channels = stj.at("channels").get<int>();
    st.act = act_from_name(stj.at("act").get<std::string>());
    s.stages.push_back(st);
  }
  s.image_channels = j.at("image_channels").get<int>();
  s.image_size = j.at("image_size").get<int>();
  s.validate();
  return s;
}

json to_json(const ClassifierSpec& s) {
  return {{"kind", "classifier"},
          {"input_dim", s.input_dim},
          {"hidden_dim", s.hidden_dim},
          {"k", s.k}};
}

ClassifierSpec classifier_spec_from_json(const json& j) {
  check_kind(j, "classifier");
  ClassifierSpec s;
  s.input_dim = j.at("input_dim").get<int>();
  s.hidden_dim = j.at("hidden_dim").get<int>();
  s.k = j.at("k").get<int>();
  s.validate();
  return s;
}

json to_json(const DiscriminatorSpec& s) {
  return {{"kind", "discriminator"},
          {"in_channels", s.in_channels},
          {"image_size", s.image_size},
          {"stages", stages_to_json(s.stages)}};
}

DiscriminatorSpec discriminator_spec_from_json(const json& j) {
  check_kind(j, "discriminator");
  DiscriminatorSpec s;
  s.in_channels = j.at("in_channels").get<int>();
  s.image_size = j.at("image_size").get<int>();
  s.stages = stages_from_json(j.at("stages"));
  s.validate();
  return s;
}

json to_json(const PerceptualSpec& s) {
  return {{"kind", "perceptual"},
          {"in_channels", s.in_channels},
          {"image_size", s.image_size},
          {"stages", stages_to_json(s.stages)},
          {"taps", s.taps}};
}

PerceptualSpec perceptual_spec_from_json(const json& j) {
  check_kind(j, "perceptual");
  PerceptualSpec s;
  s.in_channels = j.at("in_channels").get<int>();
  s.image_size = j.at("image_size").get<int>();
  s.stages = stages_from_json(j.at("stages"));
  s.taps = j.at("taps").get<std::vector<int>>();
  s.validate();
  return s;
}

json to_json(const PrivateNetSpec& s) {
  return {{"kind", "private"},
          {"in_channels", s.in_channels},
          {"image_size", s.image_size},
          {"stages", stages_to_json(s.stages)},
          {"feature_dim", s.feature_dim},
          {"n_identities", s.n_identities}};
}

PrivateNetSpec private_net_spec_from_json(const json& j) {
  check_kind(j, "private");
  PrivateNetSpec s;
  s.in_channels = j.at("in_channels").get<int>();
  s.image_size = j.at("image_size").get<int>();
  s.stages = stages_from_json(j.at("stages"));
  s.feature_dim = j.at("feature_dim").get<int>();
  s.n_identities = j.at("n_identities").get<int>();
  s.validate();
  return s;
}

json to_json(const MapperSpec& s) {
  return {{"kind", "mapper"},
          {"input_dim", s.input_dim},
          {"hidden_dim", s.hidden_dim},
          {"output_dim", s.output_dim}};
}

MapperSpec mapper_spec_from_json(const json& j) {
  check_kind(j, "mapper");
  MapperSpec s;
  s.input_dim = j.at("input_dim").get<int>();
  s.hidden_dim = j.at("hidden_dim").get<int>();
  s.output_dim = j.at("output_dim").get<int>();
  s.validate();
  return s;
}

namespace {

constexpr char kMagic[4] = {'P', 'S', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_le(std::ostream& out, T v) {
  unsigned char buf[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i)
    buf[i] = static_cast<unsigned char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xFF);
  out.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T read_le(std::istream& in) {
  unsigned char buf[sizeof(T)];
  in.read(reinterpret_cast<char*>(buf), sizeof(T));
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i)
    v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return static_cast<T>(v);
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelParams& params,
                     const json& spec) {
  json header;
  header["init_seed"] = params.init_seed;
  header["spec"] = spec;
  json plist = json::array();
  for (const auto& [name, t] : params.arrays)
    plist.push_back({{"name", name}, {"shape", t.dims()}});
  header["params"] = plist;
  const std::string head = header.dump();

  std::ofstream out(path, std::ios::binary);
  check(out.good(), "cannot create checkpoint " + path);
  out.write(kMagic, 4);
  write_le<std::uint32_t>(out, kVersion);
  write_le<std::uint64_t>(out, head.size());
  out.write(head.data(), static_cast<std::streamsize>(head.size()));
  for (const auto& [name, t] : params.arrays) {
    for (std::size_t i = 0; i < t.size(); ++i) {
      const float f = static_cast<float>(t[i]);
      std::uint32_t bits;
      std::memcpy(&bits, &f, 4);
      write_le<std::uint32_t>(out, bits);
    }
  }
  check(out.good(), "failed writing checkpoint " + path);
}

std::pair<ModelParams, json> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  check(in.good(), "cannot open checkpoint " + path);
  char magic[4];
  in.read(magic, 4);
  check(in.good() && std::memcmp(magic, kMagic, 4) == 0,
        "not a privshield checkpoint: " + path);
  const auto version = read_le<std::uint32_t>(in);
  check(version == kVersion, "unsupported checkpoint version " +
                                 std::to_string(version) + " in " + path);
  const auto head_len = read_le<std::uint64_t>(in);
  std::string head(head_len, '\0');
  in.read(head.data(), static_cast<std::streamsize>(head_len));
  check(in.good(), "truncated checkpoint header in " + path);
  json header = json::parse(head);

  ModelParams params;
  params.init_seed = header.at("init_seed").get<std::uint64_t>();
  for (const auto& pj : header.at("params")) {
    const auto name = pj.at("name").get<std::string>();
    const auto shape = pj.at("shape").get<std::vector<int>>();
    Tensor t(shape);
    for (std::size_t i = 0; i < t.size(); ++i) {
      const std::uint32_t bits = read_le<std::uint32_t>(in);
      float f;
      std::memcpy(&f, &bits, 4);
      t[i] = static_cast<real>(f);
    }
    check(in.good(), "truncated checkpoint payload in " + path);
    params.arrays[name] = std::move(t);
  }
  return {std::move(params), header.at("spec")};
}

}  // namespace privshield
