#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "privshield/autodiff.hpp"
#include "privshield/tensor.hpp"

namespace privshield {

using json = nlohmann::json;

enum class Act { None, Relu, LeakyRelu, Sigmoid, Tanh };
const char* act_name(Act a);
Act act_from_name(const std::string& name);

// All convolutions are 3x3 with zero padding 1, so spatial size is preserved
// at stride 1 and halved at stride 2 (even inputs required).
struct ConvStage {
  int out_channels = 0;
  int stride = 1;
  Act act = Act::Relu;
};

struct EncoderSpec {
  int in_channels = 3;
  int image_size = 32;
  std::vector<ConvStage> stages;  // named conv1..convN
  std::string tap_layer = "fc";   // "convI" or "fc"
  int latent_dim = 64;            // used when tap_layer == "fc"

  void validate() const;
  // Index of the tap conv stage (1-based), or 0 when the tap is "fc".
  int tap_stage() const;
  // Activation shape {C,H,W} after conv stage i (1-based); i=0 is the input.
  std::vector<int> stage_shape(int i) const;
  // Shape of the emitted representation Z (without the batch dimension).
  std::vector<int> z_shape() const;
  std::vector<std::string> tap_names() const;
};

struct DecoderSpec {
  std::vector<int> z_shape;  // {D} or {C,H,W}
  // Present when z is flat: fully connected lift to [fc_channels, fc_h, fc_w].
  int fc_channels = 0, fc_h = 0, fc_w = 0;
  struct Stage {
    bool upsample = false;  // nearest 2x before the conv
    int out_channels = 0;
    Act act = Act::Relu;
  };
  std::vector<Stage> stages;  // final stage must emit image channels, Sigmoid
  int image_channels = 3;
  int image_size = 32;

  bool from_flat() const { return z_shape.size() == 1; }
  void validate() const;
};

// Mirrors the encoder from the tap downward: every stride-2 stage becomes a
// 2x upsample followed by a 3x3 conv back to that stage's input channels; the
// fc tap first lifts Z to the last conv shape. Output is sigmoid-bounded.
DecoderSpec mirror_decoder_spec(const EncoderSpec& enc, const std::string& tap_layer);

struct ClassifierSpec {
  int input_dim = 0;  // flattened Z
  int hidden_dim = 64;
  int k = 0;  // attribute logits
  void validate() const;
};

struct DiscriminatorSpec {
  int in_channels = 3;
  int image_size = 32;
  std::vector<ConvStage> stages;
  void validate() const;
};

struct PerceptualSpec {
  int in_channels = 3;
  int image_size = 32;
  std::vector<ConvStage> stages;
  std::vector<int> taps;  // 1-based stage indices to compare, default all
  void validate() const;
  std::vector<int> effective_taps() const;
};

// Private attribute network C: identity classifier whose penultimate
// fully-connected activations are the deep features used by the privacy
// metrics.
struct PrivateNetSpec {
  int in_channels = 3;
  int image_size = 32;
  std::vector<ConvStage> stages;
  int feature_dim = 64;
  int n_identities = 0;
  void validate() const;
};

// Feature-level attack mapper M: two fully connected stages.
struct MapperSpec {
  int input_dim = 0;
  int hidden_dim = 128;
  int output_dim = 0;
  void validate() const;
};

// Named parameter arrays of one network.
struct ModelParams {
  std::map<std::string, Tensor> arrays;
  std::uint64_t init_seed = 0;

  std::size_t total_size() const;
  // FNV-1a over shapes and raw values, in name order. Used by the freeze
  // discipline tests and the reproducibility checks.
  std::uint64_t checksum() const;
};

// Deterministic fan-in-scaled uniform init: w ~ U(+-sqrt(3/fan_in)), b = 0.
ModelParams build_encoder(const EncoderSpec& spec, std::uint64_t seed);
ModelParams build_decoder(const DecoderSpec& spec, std::uint64_t seed);
ModelParams build_classifier(const ClassifierSpec& spec, std::uint64_t seed);
ModelParams build_discriminator(const DiscriminatorSpec& spec, std::uint64_t seed);
ModelParams build_perceptual(const PerceptualSpec& spec, std::uint64_t seed);
ModelParams build_private_net(const PrivateNetSpec& spec, std::uint64_t seed);
ModelParams build_mapper(const MapperSpec& spec, std::uint64_t seed);

// Graph leaves for a parameter set; trainable leaves receive gradients.
using ParamVars = std::map<std::string, ad::Var>;
ParamVars make_vars(const ModelParams& params, bool trainable);

// Forward maps. All are pure functions of (params, input).
ad::Var encoder_forward(const EncoderSpec& spec, const ParamVars& p, const ad::Var& x);
ad::Var decoder_forward(const DecoderSpec& spec, const ParamVars& p, const ad::Var& z);
ad::Var classifier_forward(const ClassifierSpec& spec, const ParamVars& p, const ad::Var& z);
ad::Var discriminator_forward(const DiscriminatorSpec& spec, const ParamVars& p, const ad::Var& x);
std::vector<ad::Var> perceptual_forward(const PerceptualSpec& spec, const ParamVars& p, const ad::Var& x);
ad::Var private_features_forward(const PrivateNetSpec& spec, const ParamVars& p, const ad::Var& x);
ad::Var private_logits_forward(const PrivateNetSpec& spec, const ParamVars& p, const ad::Var& x);
ad::Var mapper_forward(const MapperSpec& spec, const ParamVars& p, const ad::Var& z);

// Gradient-free evaluation wrappers.
Tensor encode(const EncoderSpec& spec, const ModelParams& params, const Tensor& x);
Tensor decode(const DecoderSpec& spec, const ModelParams& params, const Tensor& z);
Tensor classify(const ClassifierSpec& spec, const ModelParams& params, const Tensor& z);
Tensor discriminate(const DiscriminatorSpec& spec, const ModelParams& params, const Tensor& x);
std::vector<Tensor> perceptual(const PerceptualSpec& spec, const ModelParams& params, const Tensor& x);
Tensor private_features(const PrivateNetSpec& spec, const ModelParams& params, const Tensor& x);

// Spec (de)serialization, tagged with "kind" for checkpoint headers.
json to_json(const EncoderSpec&);
json to_json(const DecoderSpec&);
json to_json(const ClassifierSpec&);
json to_json(const DiscriminatorSpec&);
json to_json(const PerceptualSpec&);
json to_json(const PrivateNetSpec&);
json to_json(const MapperSpec&);
EncoderSpec encoder_spec_from_json(const json& j);
DecoderSpec decoder_spec_from_json(const json& j);
ClassifierSpec classifier_spec_from_json(const json& j);
DiscriminatorSpec discriminator_spec_from_json(const json& j);
PerceptualSpec perceptual_spec_from_json(const json& j);
PrivateNetSpec private_net_spec_from_json(const json& j);
MapperSpec mapper_spec_from_json(const json& j);

// Checkpoint container: "PSCK" magic, version, JSON header (spec + init_seed
// + parameter names/shapes), then the arrays as little-endian float32 in
// header order. save(load(f)) reproduces f byte for byte.
void save_checkpoint(const std::string& path, const ModelParams& params,
                     const json& spec);
std::pair<ModelParams, json> load_checkpoint(const std::string& path);

}  // namespace privshield
