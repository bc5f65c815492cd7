#pragma once

// Independent brute-force reimplementations of the metric formulas plus the
// finite-difference gradient checker. Everything here is deliberately written
// against the raw definitions, not via the library code paths it verifies.

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <vector>

#include "privshield/nets.hpp"
#include "privshield/rng.hpp"
#include "privshield/tensor.hpp"

namespace oracles {

using privshield::real;
using privshield::Tensor;

inline real mcc(long tp, long tn, long fp, long fn) {
  const long double a = static_cast<long double>(tp) + fp;
  const long double b = static_cast<long double>(tp) + fn;
  const long double c = static_cast<long double>(tn) + fp;
  const long double d = static_cast<long double>(tn) + fn;
  if (a == 0 || b == 0 || c == 0 || d == 0) return 0;
  const long double num =
      static_cast<long double>(tp) * tn - static_cast<long double>(fp) * fn;
  const long double denom = sqrtl(a) * sqrtl(b) * sqrtl(c) * sqrtl(d);
  return static_cast<real>(num / denom);
}

inline real mean_mcc(const Tensor& scores, const Tensor& labels, real threshold) {
  const int n = scores.dim(0), k = scores.dim(1);
  real sum = 0;
  for (int j = 0; j < k; ++j) {
    long tp = 0, tn = 0, fp = 0, fn = 0;
    for (int i = 0; i < n; ++i) {
      const bool p = scores.at({i, j}) > threshold;
      const bool t = labels.at({i, j}) > 0.5;
      if (p && t) ++tp;
      if (p && !t) ++fp;
      if (!p && t) ++fn;
      if (!p && !t) ++tn;
    }
    sum += mcc(tp, tn, fp, fn);
  }
  return sum / k;
}

inline real cosine(const std::vector<real>& u, const std::vector<real>& v) {
  long double uu = 0, vv = 0, uv = 0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    uu += static_cast<long double>(u[i]) * u[i];
    vv += static_cast<long double>(v[i]) * v[i];
    uv += static_cast<long double>(u[i]) * v[i];
  }
  if (uu == 0 || vv == 0) return 0;
  return static_cast<real>(uv / (sqrtl(uu) * sqrtl(vv)));
}

inline real psnr(const std::vector<real>& x, const std::vector<real>& y) {
  long double mse = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const long double d = static_cast<long double>(x[i]) - y[i];
    mse += d * d;
  }
  mse /= x.size();
  if (mse < 1e-10L) return 100;
  return static_cast<real>(10 * log10l(1 / mse));
}

struct Lda {
  real s_w, s_b, score;
  bool infinite;
};

inline Lda lda(const std::vector<std::vector<real>>& rows,
               const std::vector<int>& ids) {
  const std::size_t n = rows.size();
  const std::size_t d = rows[0].size();
  std::map<int, std::vector<std::size_t>> classes;
  for (std::size_t i = 0; i < n; ++i) classes[ids[i]].push_back(i);
  std::vector<real> mu(d, 0);
  for (const auto& r : rows)
    for (std::size_t j = 0; j < d; ++j) mu[j] += r[j];
  for (real& v : mu) v /= n;
  real sw = 0, sb = 0;
  for (const auto& [id, members] : classes) {
    std::vector<real> cm(d, 0);
    for (std::size_t i : members)
      for (std::size_t j = 0; j < d; ++j) cm[j] += rows[i][j];
    for (real& v : cm) v /= members.size();
    for (std::size_t i : members)
      for (std::size_t j = 0; j < d; ++j)
        sw += (rows[i][j] - cm[j]) * (rows[i][j] - cm[j]);
    real dist = 0;
    for (std::size_t j = 0; j < d; ++j) dist += (cm[j] - mu[j]) * (cm[j] - mu[j]);
    sb += members.size() * dist;
  }
  Lda r{};
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

// ---------------------------------------------------------------------------
// Finite-difference gradient check
// ---------------------------------------------------------------------------

struct GradCheck {
  real max_rel_err = 0;
  int checked = 0;
};

// build_loss must construct the full graph from the given parameter leaves.
// Analytic gradients come from one backward pass; each sampled coordinate is
// then verified against a central difference of the loss value.
inline GradCheck check_gradients(
    const privshield::ModelParams& params,
    const std::function<privshield::ad::Var(const privshield::ParamVars&)>&
        build_loss,
    int n_coords, std::uint64_t seed, real fd_eps = 1e-5) {
  using privshield::ad::backward;
  auto vars = privshield::make_vars(params, true);
  auto loss = build_loss(vars);
  backward(loss);

  // Flat index space over all parameter coordinates.
  std::vector<std::pair<std::string, std::size_t>> coords;
  for (const auto& [name, t] : params.arrays)
    for (std::size_t i = 0; i < t.size(); ++i) coords.emplace_back(name, i);

  privshield::Rng rng(seed);
  GradCheck result;
  for (int c = 0; c < n_coords; ++c) {
    const auto& [name, idx] = coords[rng.uniform_int(coords.size())];
    const Tensor& grad = vars.at(name)->grad;
    const real analytic = grad.empty() ? 0 : grad[idx];

    auto eval_at = [&](real delta) {
      privshield::ModelParams shifted = params;
      shifted.arrays.at(name)[idx] += delta;
      const auto v = privshield::make_vars(shifted, false);
      return build_loss(v)->value.item();
    };
    const real fd = (eval_at(fd_eps) - eval_at(-fd_eps)) / (2 * fd_eps);
    const real denom = std::max(std::abs(analytic) + std::abs(fd), real(1e-6));
    result.max_rel_err = std::max(result.max_rel_err,
                                  std::abs(analytic - fd) / denom);
    ++result.checked;
  }
  return result;
}

}  // namespace oracles
