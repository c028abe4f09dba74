// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include "doctest.h"
#include "scandiff/encodings.hpp"

using namespace scandiff;
using namespace scandiff::encodings;

namespace {
double vec_dist(const std::vector<float>& a, const std::vector<float>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    s += (double(a[i]) - b[i]) * (double(a[i]) - b[i]);
  return std::sqrt(s);
}
}  // namespace

TEST_SUITE("encodings") {

TEST_CASE("fourier_encode matches the direct formula") {
  EncoderConfig cfg;
  const std::vector<float> v = fourier_encode(0.0, cfg);
  REQUIRE(static_cast<int>(v.size()) == cfg.embed_dim());
  for (int k = 0; k < cfg.num_frequencies; ++k) {
    CHECK(v[2 * k] == doctest::Approx(0.0));      // sin 0
    CHECK(v[2 * k + 1] == doctest::Approx(1.0));  // cos 0
  }
  const double x = 2.37;
  const std::vector<float> u = fourier_encode(x, cfg);
  for (int k = 0; k < cfg.num_frequencies; ++k) {
    const double wk = std::pow(cfg.base, -double(k) / cfg.num_frequencies);
    CHECK(u[2 * k] == doctest::Approx(std::sin(x * wk)).epsilon(1e-6));
    CHECK(u[2 * k + 1] == doctest::Approx(std::cos(x * wk)).epsilon(1e-6));
    // Pythagorean identity per pair
    CHECK(double(u[2 * k]) * u[2 * k] + double(u[2 * k + 1]) * u[2 * k + 1] ==
          doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("fourier_encode shares only the w_0 period across frequencies") {
  EncoderConfig cfg;
  const double a = 0.913;
  const double period0 = 2 * kPi;  // w_0 = 1
  const std::vector<float> u = fourier_encode(a, cfg);
  const std::vector<float> v = fourier_encode(a + period0, cfg);
  CHECK(u[0] == doctest::Approx(v[0]).epsilon(1e-5));
  CHECK(u[1] == doctest::Approx(v[1]).epsilon(1e-5));
  CHECK(vec_dist(u, v) > 1e-3);  // full vector differs at lower frequencies
}

TEST_CASE("cyclical_encode is exactly 2*pi periodic") {
  EncoderConfig cfg;
  for (double phi : {0.0, 0.5, -2.7, 3.1}) {
    const std::vector<float> a = cyclical_encode(phi, cfg);
    REQUIRE(static_cast<int>(a.size()) == cfg.embed_dim());
    for (int k = -2; k <= 2; ++k) {
      const std::vector<float> b = cyclical_encode(phi + 2 * kPi * k, cfg);
      CHECK(vec_dist(a, b) < 1e-6);
    }
  }
}

TEST_CASE("cyclical_encode is continuous across the wrap point") {
  EncoderConfig cfg;
  const std::vector<float> at0 = cyclical_encode(0.0, cfg);
  const std::vector<float> near_pi = cyclical_encode(kPi - 1e-9, cfg);
  const std::vector<float> past_pi = cyclical_encode(-kPi + 1e-9, cfg);
  CHECK(vec_dist(near_pi, past_pi) < 1e-6);
  CHECK(vec_dist(at0, near_pi) > 0.1);
}

TEST_CASE("cyclical_encode leading pair from (sin, cos) lift at pi/2") {
  EncoderConfig cfg;
  const std::vector<float> v = cyclical_encode(kPi / 2, cfg);
  // first half encodes sin(phi)=1, second half cos(phi)=0
  CHECK(v[0] == doctest::Approx(std::sin(1.0)).epsilon(1e-6));
  CHECK(v[1] == doctest::Approx(std::cos(1.0)).epsilon(1e-6));
  CHECK(v[cfg.embed_dim() / 2] == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(v[cfg.embed_dim() / 2 + 1] == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("encode_condition layout, width, and null substitution") {
  EncoderConfig cfg;
  objects::Condition kappa;
  kappa.phi = 0.4;
  kappa.d = 12;
  kappa.z = -1;
  kappa.l = 4;
  kappa.w = 2;
  kappa.h = 1.5;
  std::vector<float> null_emb(static_cast<std::size_t>(cfg.cond_dim()));
  for (std::size_t i = 0; i < null_emb.size(); ++i) null_emb[i] = 0.01f * float(i);

  const ConditionEncoding e = encode_condition(kappa, 17.0, cfg, null_emb);
  CHECK(static_cast<int>(e.cond.size()) == 6 * cfg.embed_dim());
  CHECK(static_cast<int>(e.time.size()) == cfg.embed_dim());
  CHECK(!e.used_null);
  // concatenation order: [cyc(phi), F(d), F(z), F(l), F(w), F(h)]
  const std::vector<float> fd = fourier_encode(kappa.d, cfg);
  for (int i = 0; i < cfg.embed_dim(); ++i)
    CHECK(e.cond[static_cast<std::size_t>(cfg.embed_dim() + i)] == fd[static_cast<std::size_t>(i)]);
  const std::vector<float> ft = fourier_encode(17.0, cfg);
  for (int i = 0; i < cfg.embed_dim(); ++i) CHECK(e.time[static_cast<std::size_t>(i)] == ft[static_cast<std::size_t>(i)]);

  SUBCASE("phi + 2pi gives the identical condition vector") {
    objects::Condition k2 = kappa;
    k2.phi += 2 * kPi;
    const ConditionEncoding e2 = encode_condition(k2, 17.0, cfg, null_emb);
    CHECK(vec_dist(e.cond, e2.cond) < 1e-6);
  }
  SUBCASE("no periodicity in the linear components") {
    objects::Condition k2 = kappa;
    k2.d += 2 * kPi;
    const ConditionEncoding e2 = encode_condition(k2, 17.0, cfg, null_emb);
    CHECK(vec_dist(e.cond, e2.cond) > 1e-3);
  }
  SUBCASE("is_null returns the stored embedding bit-for-bit") {
    objects::Condition kn = kappa;
    kn.is_null = true;
    const ConditionEncoding en = encode_condition(kn, 17.0, cfg, null_emb);
    CHECK(en.used_null);
    REQUIRE(en.cond.size() == null_emb.size());
    for (std::size_t i = 0; i < null_emb.size(); ++i) CHECK(en.cond[i] == null_emb[i]);
  }
}

TEST_CASE("finite-difference Lipschitz sanity") {
  EncoderConfig cfg;
  const double eps = 1e-6;
  const std::vector<float> a = fourier_encode(3.0, cfg);
  const std::vector<float> b = fourier_encode(3.0 + eps, cfg);
  CHECK(vec_dist(a, b) < 10 * eps * std::sqrt(double(cfg.num_frequencies)) + 1e-6);
}

}  // TEST_SUITE
