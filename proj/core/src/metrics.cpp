#include "privshield/metrics.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>

namespace privshield {

real mcc(const ConfusionTable& t) {
  check(t.tp >= 0 && t.tn >= 0 && t.fp >= 0 && t.fn >= 0,
        "mcc: counts must be non-negative");
  const real f1 = static_cast<real>(t.tp + t.fp);
  const real f2 = static_cast<real>(t.tp + t.fn);
  const real f3 = static_cast<real>(t.tn + t.fp);
  const real f4 = static_cast<real>(t.tn + t.fn);
  if (f1 == 0 || f2 == 0 || f3 == 0 || f4 == 0) return 0;
  const real num = static_cast<real>(t.tp) * t.tn - static_cast<real>(t.fp) * t.fn;
  // The factor sum is 2N, so the product stays well inside exact double range
  // for any desk-scale N and perfect tables give exactly +-1.
  return num / std::sqrt(f1 * f2 * f3 * f4);
}

std::vector<ConfusionTable> confusion_tables(const Tensor& scores,
                                             const Tensor& labels01,
                                             real threshold) {
  check(scores.rank() == 2 && scores.same_shape(labels01),
        "confusion: scores " + scores.shape_str() + " vs labels " +
            labels01.shape_str());
  const int n = scores.dim(0), k = scores.dim(1);
  std::vector<ConfusionTable> tables(k);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < k; ++j) {
      const bool pred = scores.at({i, j}) > threshold;
      const bool truth = labels01.at({i, j}) > real(0.5);
      ConfusionTable& t = tables[j];
      if (pred && truth) ++t.tp;
      else if (pred && !truth) ++t.fp;
      else if (!pred && truth) ++t.fn;
      else ++t.tn;
    }
  return tables;
}

std::vector<real> per_attribute_mcc(const Tensor& scores, const Tensor& labels01,
                                    real threshold) {
  const auto tables = confusion_tables(scores, labels01, threshold);
  std::vector<real> out(tables.size());
  for (std::size_t j = 0; j < tables.size(); ++j) out[j] = mcc(tables[j]);
  return out;
}

real mean_mcc(const Tensor& scores, const Tensor& labels01, real threshold) {
  const auto values = per_attribute_mcc(scores, labels01, threshold);
  real sum = 0;
  for (real v : values) sum += v;
  return sum / values.size();
}

real cosine_similarity(const real* u, const real* v, std::size_t n,
                       bool* zero_flag) {
  real uu = 0, vv = 0, uv = 0;
  for (std::size_t i = 0; i < n; ++i) {
    uu += u[i] * u[i];
    vv += v[i] * v[i];
    uv += u[i] * v[i];
  }
  if (zero_flag) *zero_flag = false;
  if (uu == 0 || vv == 0) {
    if (zero_flag) *zero_flag = true;
    return 0;
  }
  return uv / (std::sqrt(uu) * std::sqrt(vv));
}

real cosine_similarity(const Tensor& u, const Tensor& v, bool* zero_flag) {
  check(u.size() == v.size(), "cosine: size mismatch");
  return cosine_similarity(u.data(), v.data(), u.size(), zero_flag);
}

real face_similarity(const PrivateNetSpec& c_spec, const ModelParams& c_params,
                     const Tensor& x, const Tensor& xhat) {
  check(x.same_shape(xhat), "face_similarity: batch shapes differ");
  const Tensor fx = private_features(c_spec, c_params, x);
  const Tensor fh = private_features(c_spec, c_params, xhat);
  return feature_similarity(fh, fx);
}

real feature_similarity(const Tensor& mapped, const Tensor& reference) {
  check(mapped.rank() == 2 && mapped.same_shape(reference),
        "feature_similarity: expected matching [N,D] matrices");
  const int n = mapped.dim(0), d = mapped.dim(1);
  real total = 0;
  for (int i = 0; i < n; ++i)
    total += cosine_similarity(mapped.data() + static_cast<std::size_t>(i) * d,
                               reference.data() + static_cast<std::size_t>(i) * d,
                               d);
  return total / n;
}

namespace {

constexpr int kSsimWindow = 11;
constexpr real kSsimSigma = 1.5;
constexpr real kSsimC1 = 0.01 * 0.01;  // (K1 * L)^2, L = 1
constexpr real kSsimC2 = 0.03 * 0.03;

const std::vector<real>& ssim_kernel() {
  static const std::vector<real> kernel = [] {
    std::vector<real> k(kSsimWindow * kSsimWindow);
    const int r = kSsimWindow / 2;
    real sum = 0;
    for (int y = -r; y <= r; ++y)
      for (int x = -r; x <= r; ++x) {
        const real v = std::exp(-(x * x + y * y) / (2 * kSsimSigma * kSsimSigma));
        k[(y + r) * kSsimWindow + (x + r)] = v;
        sum += v;
      }
    for (real& v : k) v /= sum;
    return k;
  }();
  return kernel;
}

}  // namespace

real ssim(const Tensor& x, const Tensor& xhat) {
  check(x.rank() == 3 && x.same_shape(xhat),
        "ssim: expected matching [C,H,W] images");
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  check(h >= kSsimWindow && w >= kSsimWindow,
        "ssim: image smaller than the 11x11 window");
  const auto& kernel = ssim_kernel();
  real total = 0;
  long count = 0;
  for (int ch = 0; ch < c; ++ch) {
    const real* a = x.data() + static_cast<std::size_t>(ch) * h * w;
    const real* b = xhat.data() + static_cast<std::size_t>(ch) * h * w;
    for (int oy = 0; oy + kSsimWindow <= h; ++oy)
      for (int ox = 0; ox + kSsimWindow <= w; ++ox) {
        real mu_a = 0, mu_b = 0;
        for (int ky = 0; ky < kSsimWindow; ++ky)
          for (int kx = 0; kx < kSsimWindow; ++kx) {
            const real kv = kernel[ky * kSsimWindow + kx];
            mu_a += kv * a[(oy + ky) * w + ox + kx];
            mu_b += kv * b[(oy + ky) * w + ox + kx];
          }
        real var_a = 0, var_b = 0, cov = 0;
        for (int ky = 0; ky < kSsimWindow; ++ky)
          for (int kx = 0; kx < kSsimWindow; ++kx) {
            const real kv = kernel[ky * kSsimWindow + kx];
            const real da = a[(oy + ky) * w + ox + kx] - mu_a;
            const real db = b[(oy + ky) * w + ox + kx] - mu_b;
            var_a += kv * da * da;
            var_b += kv * db * db;
            cov += kv * da * db;
          }
        const real num = (2 * mu_a * mu_b + kSsimC1) * (2 * cov + kSsimC2);
        const real den =
            (mu_a * mu_a + mu_b * mu_b + kSsimC1) * (var_a + var_b + kSsimC2);
        total += num / den;
        ++count;
      }
  }
  return total / count;
}

real ssim_batch(const Tensor& x, const Tensor& xhat) {
  check(x.rank() == 4 && x.same_shape(xhat), "ssim_batch: expected [N,C,H,W]");
  const int n = x.dim(0);
  const std::vector<int> img{x.dim(1), x.dim(2), x.dim(3)};
  const std::size_t sz = shape_size(img);
  real total = 0;
  for (int i = 0; i < n; ++i) {
    Tensor a(img), b(img);
    std::copy(x.data() + i * sz, x.data() + (i + 1) * sz, a.data());
    std::copy(xhat.data() + i * sz, xhat.data() + (i + 1) * sz, b.data());
    total += ssim(a, b);
  }
  return total / n;
}

namespace {

real psnr_from_mse(real mse) {
  if (mse < 1e-10) return 100;
  return 10 * std::log10(1 / mse);
}

}  // namespace

real psnr(const Tensor& x, const Tensor& xhat) {
  check(x.same_shape(xhat), "psnr: shape mismatch");
  real mse = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const real d = x[i] - xhat[i];
    mse += d * d;
  }
  mse /= x.size();
  return psnr_from_mse(mse);
}

real psnr_batch(const Tensor& x, const Tensor& xhat) {
  check(x.rank() == 4 && x.same_shape(xhat), "psnr_batch: expected [N,C,H,W]");
  const int n = x.dim(0);
  const std::size_t sz = x.size() / n;
  real total = 0;
  for (int i = 0; i < n; ++i) {
    real mse = 0;
    for (std::size_t j = i * sz; j < (i + 1) * sz; ++j) {
      const real d = x[j] - xhat[j];
      mse += d * d;
    }
    total += psnr_from_mse(mse / sz);
  }
  return total / n;
}

LdaResult lda_score(const Tensor& features, const std::vector<int>& identities) {
  check(features.rank() == 2, "lda: features must be [N,D]");
  const int n = features.dim(0), d = features.dim(1);
  check(static_cast<int>(identities.size()) == n, "lda: label count mismatch");

  std::map<int, std::vector<int>> classes;
  for (int i = 0; i < n; ++i) classes[identities[i]].push_back(i);
  check(classes.size() >= 2, "lda: needs at least 2 identities");

  std::vector<real> global_mean(d, 0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) global_mean[j] += features.at({i, j});
  for (real& v : global_mean) v /= n;

  real sw = 0, sb = 0;
  for (const auto& [id, rows] : classes) {
    std::vector<real> mu(d, 0);
    for (int i : rows)
      for (int j = 0; j < d; ++j) mu[j] += features.at({i, j});
    for (real& v : mu) v /= rows.size();
    for (int i : rows)
      for (int j = 0; j < d; ++j) {
        const real dv = features.at({i, j}) - mu[j];
        sw += dv * dv;
      }
    real dist = 0;
    for (int j = 0; j < d; ++j) {
      const real dv = mu[j] - global_mean[j];
      dist += dv * dv;
    }
    sb += rows.size() * dist;
  }
  LdaResult r;
  r.s_w = sw / n;
  r.s_b = sb / n;
  if (r.s_b == 0) {
    r.score = 0;
  } else if (r.s_w == 0) {
    r.score = std::numeric_limits<real>::infinity();
    r.infinite = true;
  } else {
    r.score = r.s_b / r.s_w;
  }
  return r;
}

Tensor project_2d(const Tensor& features) {
  check(features.rank() == 2 && features.dim(0) >= 2,
        "project_2d: needs [N,D] with N >= 2");
  const int n = features.dim(0), d = features.dim(1);
  using Mat = Eigen::Matrix<real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Mat centered = Eigen::Map<const Mat>(features.data(), n, d);
  const Eigen::RowVectorXd mean = centered.colwise().mean();
  centered.rowwise() -= mean;

  Eigen::BDCSVD<Mat> svd(centered, Eigen::ComputeThinV);
  const auto& v = svd.matrixV();
  Tensor out({n, 2});
  const int comps = std::min<int>(2, static_cast<int>(v.cols()));
  for (int c = 0; c < comps; ++c) {
    Eigen::VectorXd dir = v.col(c);
    // Deterministic sign: the largest-magnitude coordinate points positive.
    int arg = 0;
    for (int j = 1; j < d; ++j)
      if (std::abs(dir[j]) > std::abs(dir[arg])) arg = j;
    if (dir[arg] < 0) dir = -dir;
    const Eigen::VectorXd proj = centered * dir;
    for (int i = 0; i < n; ++i) out.at({i, c}) = proj[i];
  }
  return out;
}

void MetricsReport::validate() const {
  auto in_range = [](real v, real lo, real hi) { return v >= lo && v <= hi; };
  check(in_range(mean_mcc, -1, 1), "report: mean_mcc out of [-1,1]");
  for (real v : per_attribute_mcc)
    check(in_range(v, -1, 1), "report: per-attribute mcc out of [-1,1]");
  check(in_range(face_sim, -1, 1), "report: face_sim out of [-1,1]");
  check(in_range(feature_sim, -1, 1), "report: feature_sim out of [-1,1]");
  check(in_range(ssim, -1, 1), "report: ssim out of [-1,1]");
  check(psnr >= 0, "report: psnr must be >= 0");
  check(s_w >= 0 && s_b >= 0, "report: scatter terms must be >= 0");
}

json MetricsReport::to_json() const {
  return {{"mean_mcc", mean_mcc},
          {"per_attribute_mcc", per_attribute_mcc},
          {"face_sim", face_sim},
          {"feature_sim", feature_sim},
          {"ssim", ssim},
          {"psnr", psnr},
          {"s_w", s_w},
          {"s_b", s_b},
          {"lda_score", lda_infinite ? json("inf") : json(lda_score)},
          {"lda_infinite", lda_infinite},
          {"meta",
           {{"config_hash", config_hash},
            {"seed", seed},
            {"attack_steps", attack_steps},
            {"feature_attack_steps", feature_attack_steps},
            {"tap", tap},
            {"dec_data", dec_data},
            {"identity_disjoint", identity_disjoint}}}};
}

MetricsReport MetricsReport::from_json(const json& j) {
  MetricsReport r;
  r.mean_mcc = j.at("mean_mcc").get<real>();
  r.per_attribute_mcc = j.at("per_attribute_mcc").get<std::vector<real>>();
  r.face_sim = j.at("face_sim").get<real>();
  r.feature_sim = j.at("feature_sim").get<real>();
  r.ssim = j.at("ssim").get<real>();
  r.psnr = j.at("psnr").get<real>();
  r.s_w = j.at("s_w").get<real>();
  r.s_b = j.at("s_b").get<real>();
  r.lda_infinite = j.at("lda_infinite").get<bool>();
  r.lda_score = r.lda_infinite ? std::numeric_limits<real>::infinity()
                               : j.at("lda_score").get<real>();
  const json& m = j.at("meta");
  r.config_hash = m.at("config_hash").get<std::string>();
  r.seed = m.at("seed").get<std::uint64_t>();
  r.attack_steps = m.at("attack_steps").get<long>();
  r.feature_attack_steps = m.at("feature_attack_steps").get<long>();
  r.tap = m.at("tap").get<std::string>();
  r.dec_data = m.at("dec_data").get<std::string>();
  r.identity_disjoint = m.at("identity_disjoint").get<bool>();
  return r;
}

std::string MetricsReport::csv_header() {
  return "mean_mcc,face_sim,feature_sim,ssim,psnr,s_w,s_b,lda_score,"
         "config_hash,seed,attack_steps,feature_attack_steps,tap,dec_data,"
         "identity_disjoint";
}

std::string MetricsReport::csv_row() const {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%s,%llu,%ld,%ld,%s,%s,%d",
                mean_mcc, face_sim, feature_sim, ssim, psnr, s_w, s_b, lda_score,
                config_hash.c_str(), static_cast<unsigned long long>(seed),
                attack_steps, feature_attack_steps, tap.c_str(), dec_data.c_str(),
                identity_disjoint ? 1 : 0);
  return buf;
}

}  // namespace privshield
