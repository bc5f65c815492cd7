#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "privshield/metrics.hpp"
#include "privshield/rng.hpp"

using namespace privshield;

TEST_CASE("mcc hand values and degenerate rule") {
  CHECK(mcc({10, 10, 0, 0}) == 1.0);               // perfect
  CHECK(mcc({1, 1, 1, 1}) == 0.0);                 // numerator zero
  CHECK(mcc({2, 1, 0, 1}) == doctest::Approx(2.0 / std::sqrt(12.0)));  // 0.5774
  CHECK(mcc({5, 0, 3, 0}) == 0.0);                 // a denominator factor is 0
  CHECK(mcc({0, 0, 0, 0}) == 0.0);
  CHECK_THROWS_AS(mcc({-1, 0, 0, 0}), Error);
}

TEST_CASE("mcc invariance under swapping TP<->TN with FP<->FN") {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    ConfusionTable t{static_cast<long>(rng.uniform_int(20)),
                     static_cast<long>(rng.uniform_int(20)),
                     static_cast<long>(rng.uniform_int(20)),
                     static_cast<long>(rng.uniform_int(20))};
    ConfusionTable s{t.tn, t.tp, t.fn, t.fp};
    CHECK(mcc(t) == doctest::Approx(mcc(s)).epsilon(1e-12));
  }
}

TEST_CASE("mean_mcc basics") {
  Tensor labels({4, 2}, {1, 0, 0, 1, 1, 1, 0, 0});
  CHECK(mean_mcc(labels, labels) == doctest::Approx(1.0));

  // k=1 equals the single-attribute mcc.
  Tensor s1({4, 1}, {0.9, 0.2, 0.8, 0.1});
  Tensor l1({4, 1}, {1, 0, 1, 0});
  CHECK(mean_mcc(s1, l1) == doctest::Approx(mcc({2, 2, 0, 0})));

  CHECK_THROWS_AS(mean_mcc(Tensor({2, 2}), Tensor({2, 3})), Error);
}

TEST_CASE("random predictions on balanced labels give mcc near zero") {
  Rng rng(77);
  const int n = 10000;
  Tensor scores({n, 1}), labels({n, 1});
  for (int i = 0; i < n; ++i) {
    scores.at({i, 0}) = rng.uniform();
    labels.at({i, 0}) = i % 2;
  }
  CHECK(std::abs(mean_mcc(scores, labels)) < 0.05);
}

TEST_CASE("mean_mcc matches the brute-force oracle on 1000 random tables") {
  Rng rng(4242);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 3 + static_cast<int>(rng.uniform_int(40));
    const int k = 1 + static_cast<int>(rng.uniform_int(5));
    Tensor scores({n, k}), labels({n, k});
    for (std::size_t i = 0; i < scores.size(); ++i) {
      scores[i] = rng.uniform();
      labels[i] = rng.uniform() < 0.5 ? 0 : 1;
    }
    const real ours = mean_mcc(scores, labels);
    const real ref = oracles::mean_mcc(scores, labels, 0.5);
    CHECK(std::abs(ours - ref) <=
          1e-12 * std::max<real>(1, std::max(std::abs(ours), std::abs(ref))));
  }
}

TEST_CASE("cosine similarity") {
  const Tensor u({2}, {1, 0}), v({2}, {1, 1});
  CHECK(cosine_similarity(u, u) == doctest::Approx(1.0));
  CHECK(cosine_similarity(u, Tensor({2}, {0, 1})) == doctest::Approx(0.0));
  CHECK(cosine_similarity(u, v) == doctest::Approx(1 / std::sqrt(2.0)));

  bool zero = false;
  CHECK(cosine_similarity(Tensor({2}), v, &zero) == 0.0);
  CHECK(zero);

  // Scale invariance for positive scalars.
  Rng rng(5);
  for (int t = 0; t < 100; ++t) {
    Tensor a({4}), b({4});
    for (int i = 0; i < 4; ++i) {
      a[i] = rng.uniform(-1, 1);
      b[i] = rng.uniform(-1, 1);
    }
    Tensor a2 = a, b2 = b;
    const real ca = rng.uniform(0.1, 5), cb = rng.uniform(0.1, 5);
    for (int i = 0; i < 4; ++i) {
      a2[i] *= ca;
      b2[i] *= cb;
    }
    CHECK(cosine_similarity(a, b) ==
          doctest::Approx(cosine_similarity(a2, b2)).epsilon(1e-9));
  }
}

TEST_CASE("ssim identity, symmetry and range") {
  Rng rng(6);
  Tensor x({3, 16, 16}), y({3, 16, 16});
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = rng.uniform();
    y[i] = rng.uniform();
  }
  CHECK(ssim(x, x) == doctest::Approx(1.0));
  CHECK(ssim(x, y) == doctest::Approx(ssim(y, x)).epsilon(1e-12));
  CHECK(ssim(x, y) >= -1.0);
  CHECK(ssim(x, y) <= 1.0);
  CHECK_THROWS_AS(ssim(Tensor({1, 8, 8}), Tensor({1, 8, 8})), Error);  // < window
}

TEST_CASE("psnr values and monotonicity") {
  Tensor x({1, 16, 16}), y({1, 16, 16});
  x.fill(0.5);
  y.fill(0.6);  // MSE = 0.01 -> 20 dB
  CHECK(psnr(x, y) == doctest::Approx(20.0).epsilon(1e-9));
  CHECK(psnr(x, x) == 100.0);

  real last = 101;
  for (real d : {0.01, 0.02, 0.05, 0.1, 0.2}) {
    Tensor z = x;
    for (std::size_t i = 0; i < z.size(); ++i) z[i] += d;
    const real p = psnr(x, z);
    CHECK(p < last);  // strictly decreasing in MSE below the cap
    last = p;
  }
}

TEST_CASE("psnr and cosine match their oracles on random input") {
  Rng rng(7);
  for (int t = 0; t < 1000; ++t) {
    const int n = 4 + static_cast<int>(rng.uniform_int(30));
    std::vector<real> a(n), b(n);
    for (int i = 0; i < n; ++i) {
      a[i] = rng.uniform();
      b[i] = rng.uniform();
    }
    Tensor ta({n}, std::vector<real>(a)), tb({n}, std::vector<real>(b));
    const real p1 = psnr(ta, tb);
    const real p2 = oracles::psnr(a, b);
    CHECK(std::abs(p1 - p2) <= 1e-12 * std::max<real>(1, std::abs(p2)));
    const real c1 = cosine_similarity(ta, tb);
    const real c2 = oracles::cosine(a, b);
    CHECK(std::abs(c1 - c2) <= 1e-12);
  }
}

TEST_CASE("lda score hand example and degenerate cases") {
  // Classes {0,2} and {4,6} in 1-D: s_w = 1, s_b = 4, score 4.
  const Tensor feats({4, 1}, {0, 2, 4, 6});
  const std::vector<int> ids{0, 0, 1, 1};
  const LdaResult r = lda_score(feats, ids);
  CHECK(r.s_w == doctest::Approx(1.0));
  CHECK(r.s_b == doctest::Approx(4.0));
  CHECK(r.score == doctest::Approx(4.0));
  CHECK_FALSE(r.infinite);

  // Equal class means -> s_b = 0, score 0.
  const Tensor same({4, 1}, {-1, 1, -1, 1});
  const LdaResult rz = lda_score(same, ids);
  CHECK(rz.s_b == doctest::Approx(0.0));
  CHECK(rz.score == 0.0);

  // Zero within-class spread -> flagged infinite.
  const Tensor tight({4, 1}, {-1, -1, 1, 1});
  const LdaResult ri = lda_score(tight, ids);
  CHECK(ri.infinite);
  CHECK(std::isinf(ri.score));

  CHECK_THROWS_AS(lda_score(feats, std::vector<int>{0, 0, 0, 0}), Error);
}

TEST_CASE("lda score is invariant under translation and global scaling") {
  Rng rng(8);
  Tensor feats({12, 3});
  std::vector<int> ids(12);
  for (int i = 0; i < 12; ++i) {
    ids[i] = i % 3;
    for (int j = 0; j < 3; ++j)
      feats.at({i, j}) = rng.uniform(-1, 1) + ids[i] * 2.0;
  }
  const LdaResult base = lda_score(feats, ids);
  Tensor shifted = feats, scaled = feats;
  for (int i = 0; i < 12; ++i)
    for (int j = 0; j < 3; ++j) {
      shifted.at({i, j}) += 17.5;
      scaled.at({i, j}) *= 3.0;
    }
  CHECK(lda_score(shifted, ids).score == doctest::Approx(base.score).epsilon(1e-9));
  const LdaResult sc = lda_score(scaled, ids);
  CHECK(sc.score == doctest::Approx(base.score).epsilon(1e-9));
  CHECK(sc.s_w == doctest::Approx(9 * base.s_w).epsilon(1e-9));
  CHECK(sc.s_b == doctest::Approx(9 * base.s_b).epsilon(1e-9));
}

TEST_CASE("lda matches the oracle on random data") {
  Rng rng(9);
  for (int t = 0; t < 200; ++t) {
    const int n = 6 + static_cast<int>(rng.uniform_int(20));
    const int d = 1 + static_cast<int>(rng.uniform_int(4));
    const int c = 2 + static_cast<int>(rng.uniform_int(3));
    Tensor feats({n, d});
    std::vector<int> ids(n);
    std::vector<std::vector<real>> rows(n, std::vector<real>(d));
    for (int i = 0; i < n; ++i) {
      ids[i] = i % c;
      for (int j = 0; j < d; ++j) {
        rows[i][j] = rng.uniform(-2, 2);
        feats.at({i, j}) = rows[i][j];
      }
    }
    const LdaResult ours = lda_score(feats, ids);
    const auto ref = oracles::lda(rows, ids);
    CHECK(std::abs(ours.s_w - ref.s_w) <= 1e-12 * std::max<real>(1, ref.s_w));
    CHECK(std::abs(ours.s_b - ref.s_b) <= 1e-12 * std::max<real>(1, ref.s_b));
  }
}

TEST_CASE("project_2d preserves 2-D variance and orders components") {
  Rng rng(10);
  const int n = 50;
  Tensor feats({n, 2});
  for (int i = 0; i < n; ++i) {
    feats.at({i, 0}) = rng.normal(0, 3);
    feats.at({i, 1}) = rng.normal(0, 1);
  }
  const Tensor proj = project_2d(feats);
  auto var_of = [n](const Tensor& t) {
    real m0 = 0, m1 = 0;
    for (int i = 0; i < n; ++i) {
      m0 += t.at({i, 0});
      m1 += t.at({i, 1});
    }
    m0 /= n;
    m1 /= n;
    real v = 0;
    for (int i = 0; i < n; ++i) {
      v += (t.at({i, 0}) - m0) * (t.at({i, 0}) - m0);
      v += (t.at({i, 1}) - m1) * (t.at({i, 1}) - m1);
    }
    return v / n;
  };
  CHECK(var_of(proj) == doctest::Approx(var_of(feats)).epsilon(1e-9));
}

TEST_CASE("project_2d on rank-1 data zeroes the second coordinate") {
  const int n = 20;
  Tensor feats({n, 3});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < 3; ++j) feats.at({i, j}) = (i - 10) * (j + 1.0);
  const Tensor proj = project_2d(feats);
  for (int i = 0; i < n; ++i)
    CHECK(std::abs(proj.at({i, 1})) < 1e-8);
}

TEST_CASE("project_2d captures at least as much variance as random projections") {
  Rng rng(11);
  const int n = 60, d = 5;
  Tensor feats({n, d});
  for (std::size_t i = 0; i < feats.size(); ++i) feats[i] = rng.normal(0, 1);
  const Tensor proj = project_2d(feats);

  auto variance2 = [n](const std::vector<std::pair<real, real>>& pts) {
    real m0 = 0, m1 = 0;
    for (const auto& [a, b] : pts) {
      m0 += a;
      m1 += b;
    }
    m0 /= n;
    m1 /= n;
    real v = 0;
    for (const auto& [a, b] : pts)
      v += (a - m0) * (a - m0) + (b - m1) * (b - m1);
    return v / n;
  };
  std::vector<std::pair<real, real>> pc;
  for (int i = 0; i < n; ++i) pc.push_back({proj.at({i, 0}), proj.at({i, 1})});
  const real pca_var = variance2(pc);

  for (int trial = 0; trial < 100; ++trial) {
    // Random orthonormal pair via Gram-Schmidt.
    std::vector<real> u(d), v(d);
    for (int j = 0; j < d; ++j) {
      u[j] = rng.normal(0, 1);
      v[j] = rng.normal(0, 1);
    }
    real nu = 0;
    for (real x : u) nu += x * x;
    nu = std::sqrt(nu);
    for (real& x : u) x /= nu;
    real dot = 0;
    for (int j = 0; j < d; ++j) dot += u[j] * v[j];
    for (int j = 0; j < d; ++j) v[j] -= dot * u[j];
    real nv = 0;
    for (real x : v) nv += x * x;
    nv = std::sqrt(nv);
    for (real& x : v) x /= nv;

    std::vector<std::pair<real, real>> pts;
    for (int i = 0; i < n; ++i) {
      real a = 0, b = 0;
      for (int j = 0; j < d; ++j) {
        a += feats.at({i, j}) * u[j];
        b += feats.at({i, j}) * v[j];
      }
      pts.push_back({a, b});
    }
    CHECK(variance2(pts) <= pca_var + 1e-9);
  }
}

TEST_CASE("metrics report json and csv round trip") {
  MetricsReport r;
  r.mean_mcc = 0.8;
  r.per_attribute_mcc = {0.7, 0.9};
  r.face_sim = 0.5;
  r.feature_sim = 0.4;
  r.ssim = 0.3;
  r.psnr = 14.2;
  r.s_w = 1.5;
  r.s_b = 0.75;
  r.lda_score = 0.5;
  r.config_hash = "abc123";
  r.seed = 9;
  r.attack_steps = 100;
  r.feature_attack_steps = 50;
  r.tap = "fc";
  r.dec_data = "x1";
  r.validate();

  const MetricsReport back = MetricsReport::from_json(r.to_json());
  CHECK(back.mean_mcc == r.mean_mcc);
  CHECK(back.per_attribute_mcc == r.per_attribute_mcc);
  CHECK(back.config_hash == r.config_hash);
  CHECK(back.tap == "fc");

  const std::string row = r.csv_row();
  CHECK(row.find("abc123") != std::string::npos);
  CHECK(MetricsReport::csv_header().find("lda_score") != std::string::npos);

  MetricsReport bad = r;
  bad.mean_mcc = 1.5;
  CHECK_THROWS_AS(bad.validate(), Error);
}
