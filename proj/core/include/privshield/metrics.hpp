#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "privshield/nets.hpp"
#include "privshield/tensor.hpp"

namespace privshield {

struct ConfusionTable {
  long tp = 0, tn = 0, fp = 0, fn = 0;
  long total() const { return tp + tn + fp + fn; }
};

// Matthews correlation coefficient; 0 when any denominator factor vanishes
// (the random-prediction reading of a degenerate table).
real mcc(const ConfusionTable& t);

// Thresholded per-attribute confusion tables. Prediction is score > threshold.
std::vector<ConfusionTable> confusion_tables(const Tensor& scores,
                                             const Tensor& labels01,
                                             real threshold = 0.5);
std::vector<real> per_attribute_mcc(const Tensor& scores, const Tensor& labels01,
                                    real threshold = 0.5);
real mean_mcc(const Tensor& scores, const Tensor& labels01, real threshold = 0.5);

// u.v / (|u||v|); 0 with the flag set when either vector is zero.
real cosine_similarity(const real* u, const real* v, std::size_t n,
                       bool* zero_flag = nullptr);
real cosine_similarity(const Tensor& u, const Tensor& v, bool* zero_flag = nullptr);

// Mean cosine similarity between the private network's features of x and of
// xhat, over a batch of pairs.
real face_similarity(const PrivateNetSpec& c_spec, const ModelParams& c_params,
                     const Tensor& x, const Tensor& xhat);

// Mean row-wise cosine similarity between mapped features and reference
// features [N,D].
real feature_similarity(const Tensor& mapped, const Tensor& reference);

// SSIM with an 11x11 Gaussian window (sigma 1.5), K1=0.01, K2=0.03, dynamic
// range 1; averaged over channels and window positions (valid placements).
real ssim(const Tensor& x, const Tensor& xhat);        // [C,H,W]
real ssim_batch(const Tensor& x, const Tensor& xhat);  // [N,C,H,W], mean

// 10*log10(1/MSE) in dB, capped at 100 when MSE < 1e-10.
real psnr(const Tensor& x, const Tensor& xhat);
real psnr_batch(const Tensor& x, const Tensor& xhat);  // mean of per-sample PSNR

struct LdaResult {
  real s_w = 0;  // mean within-class squared scatter
  real s_b = 0;  // mean between-class squared scatter
  real score = 0;  // s_b / s_w
  bool infinite = false;  // s_w == 0 with s_b > 0
};

// Trace-based scatter ratio of features [N,D] grouped by identity label.
LdaResult lda_score(const Tensor& features, const std::vector<int>& identities);

// Top-2 principal-component projection [N,2]. Component signs are fixed by
// making each direction's largest-magnitude coordinate positive.
Tensor project_2d(const Tensor& features);

struct MetricsReport {
  real mean_mcc = 0;
  std::vector<real> per_attribute_mcc;
  real face_sim = 0;
  real feature_sim = 0;
  real ssim = 0;
  real psnr = 0;
  real s_w = 0;
  real s_b = 0;
  real lda_score = 0;
  bool lda_infinite = false;
  // run metadata
  std::string config_hash;
  std::uint64_t seed = 0;
  long attack_steps = 0;
  long feature_attack_steps = 0;
  std::string tap;
  std::string dec_data;
  bool identity_disjoint = false;

  void validate() const;
  json to_json() const;
  static MetricsReport from_json(const json& j);
  // One CSV row; columns follow csv_header().
  static std::string csv_header();
  std::string csv_row() const;
};

}  // namespace privshield
