// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <cstdio>

#include "doctest.h"
#include "scandiff/denoiser.hpp"

using namespace scandiff;
using namespace scandiff::denoiser;
using scandiff::tensor::Tape;
using scandiff::tensor::Tensor;

namespace {

DenoiserConfig tiny_config(Variant v) {
  DenoiserConfig c;
  c.variant = v;
  c.depth = 1;
  c.heads = 2;
  c.width = 8;
  c.max_points = 8;
  return c;
}

// Overwrite every parameter from one random stream so two variants with
// identical parameter layouts end up with identical weights.
void randomize(DenoiserWeights& w, uint64_t seed) {
  Rng rng(seed);
  for (auto& [name, t] : w.params.items)
    for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = 0.3 * rng.normal();
}

objects::Condition test_kappa() {
  objects::Condition k;
  k.phi = 0.7;
  k.d = 14;
  k.z = -0.8;
  k.l = 4.0;
  k.w = 1.8;
  k.h = 1.5;
  return k;
}

std::vector<tensor::real> cond_vec(const DenoiserWeights& w, double t,
                                   std::vector<tensor::real>* time_out) {
  const encodings::ConditionEncoding e =
      encodings::encode_condition(test_kappa(), t, w.cfg.enc, {});
  std::vector<tensor::real> cv(e.cond.begin(), e.cond.end());
  if (time_out) time_out->assign(e.time.begin(), e.time.end());
  return cv;
}

}  // namespace

TEST_SUITE("denoiser") {

TEST_CASE("variant names round trip") {
  for (Variant v :
       {Variant::kDit3dAdalnZero, Variant::kPixartAdalnSingle, Variant::kLogen})
    CHECK(variant_from_string(variant_to_string(v)) == v);
  CHECK_THROWS_AS(variant_from_string("nope"), ContractError);
}

TEST_CASE("config validation") {
  DenoiserConfig c = tiny_config(Variant::kLogen);
  c.width = 9;  // not divisible by heads
  CHECK_THROWS_AS(c.validate(), ContractError);
  c = tiny_config(Variant::kLogen);
  c.depth = 0;
  CHECK_THROWS_AS(c.validate(), ContractError);
}

TEST_CASE("embed_points: zero projection leaves the positional table") {
  Rng rng(1);
  DenoiserWeights w = init_weights(tiny_config(Variant::kDit3dAdalnZero), rng);
  Tensor pos = w.get("pos");  // zero-init; seed with known values
  for (std::size_t i = 0; i < pos.size(); ++i) pos.data()[i] = 0.1 * double(i);
  Tensor ew = w.get("embed.w");
  for (std::size_t i = 0; i < ew.size(); ++i) ew.data()[i] = 0.0;
  Tape tape;
  Tensor x = Tensor::from({2, 4}, {1, 2, 3, 0.5, -1, 0, 2, 0.1});
  Tensor out = embed_points(tape, x, w);
  REQUIRE(out.shape() == std::vector<int>{2, 8});
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 8; ++c)
      CHECK(out.data()[r * 8 + c] == doctest::Approx(pos.data()[r * 8 + c]));
}

TEST_CASE("embed_points enforces the capacity limit") {
  Rng rng(1);
  DenoiserWeights w = init_weights(tiny_config(Variant::kLogen), rng);
  Tape tape;
  Tensor x = Tensor::zeros({9, 4});  // max_points is 8
  CHECK_THROWS_AS(embed_points(tape, x, w), ContractError);
}

TEST_CASE("embed_points is pointwise before the positional add") {
  Rng rng(5);
  DenoiserWeights w = init_weights(tiny_config(Variant::kLogen), rng);
  // positional table is zero at init, so outputs are pure projections
  Tape tape;
  Tensor a = Tensor::from({3, 4}, {1, 2, 3, 0.1, 4, 5, 6, 0.2, 7, 8, 9, 0.3});
  Tensor b = Tensor::from({3, 4}, {7, 8, 9, 0.3, 1, 2, 3, 0.1, 4, 5, 6, 0.2});
  Tensor ha = embed_points(tape, a, w);
  Tensor hb = embed_points(tape, b, w);
  const int perm[3] = {2, 0, 1};  // b's row r is a's row perm[r]
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 8; ++c)
      CHECK(hb.data()[r * 8 + c] == doctest::Approx(ha.data()[perm[r] * 8 + c]));
}

TEST_CASE("adaLN-zero block is the exact identity at init") {
  Rng rng(21);
  DenoiserWeights w = init_weights(tiny_config(Variant::kDit3dAdalnZero), rng);
  Tape tape;
  Rng drng(4);
  Tensor h = Tensor::randn({4, 8}, drng, 1.0);
  std::vector<tensor::real> tv;
  Tensor cv = Tensor::from({1, w.cfg.enc.cond_dim()}, cond_vec(w, 3.0, &tv));
  Tensor tvec = Tensor::from({1, w.cfg.enc.embed_dim()}, tv);
  const std::vector<char> mask(4, 1);
  Tensor out = block_forward(tape, h, cv, tvec, mask, w, 0);
  double max_abs = 0;
  for (std::size_t i = 0; i < h.size(); ++i)
    max_abs = std::max(max_abs, std::abs(out.data()[i] - h.data()[i]));
  CHECK(max_abs == 0.0);  // exact, not approximate
}

TEST_CASE("logen and pixart orderings produce different outputs on shared weights") {
  DenoiserWeights wp, wl;
  {
    Rng rng(31);
    wp = init_weights(tiny_config(Variant::kPixartAdalnSingle), rng);
  }
  {
    Rng rng(31);
    wl = init_weights(tiny_config(Variant::kLogen), rng);
  }
  randomize(wp, 77);
  randomize(wl, 77);
  // identical layouts => identical weights
  REQUIRE(wp.params.items.size() == wl.params.items.size());
  for (std::size_t i = 0; i < wp.params.items.size(); ++i) {
    REQUIRE(wp.params.items[i].first == wl.params.items[i].first);
    REQUIRE(wp.params.items[i].second.values() == wl.params.items[i].second.values());
  }
  Rng drng(9);
  Tensor h = Tensor::randn({4, 8}, drng, 1.0);
  std::vector<tensor::real> tv;
  Tensor cv = Tensor::from({1, wp.cfg.enc.cond_dim()}, cond_vec(wp, 5.0, &tv));
  Tensor tvec = Tensor::from({1, wp.cfg.enc.embed_dim()}, tv);
  const std::vector<char> mask(4, 1);
  Tape tp, tl;
  Tensor op = block_forward(tp, h, cv, tvec, mask, wp, 0);
  Tensor ol = block_forward(tl, h, cv, tvec, mask, wl, 0);
  double max_diff = 0;
  for (std::size_t i = 0; i < op.size(); ++i)
    max_diff = std::max(max_diff, std::abs(op.data()[i] - ol.data()[i]));
  CHECK(max_diff > 1e-6);
}

TEST_CASE("padded slots cannot influence unmasked outputs") {
  for (Variant v :
       {Variant::kDit3dAdalnZero, Variant::kPixartAdalnSingle, Variant::kLogen}) {
    CAPTURE(variant_to_string(v));
    Rng rng(41);
    DenoiserWeights w = init_weights(tiny_config(v), rng);
    randomize(w, 13);
    const std::vector<char> mask = {1, 1, 1, 0};
    Rng drng(2);
    std::vector<tensor::real> base(4 * 4);
    for (auto& x : base) x = drng.normal();
    std::vector<tensor::real> poked = base;
    poked[12] += 100;  // padded row
    poked[15] -= 3;
    Tape t1, t2;
    Tensor o1 = predict_noise(t1, Tensor::from({4, 4}, base), 7.0, test_kappa(), w, mask);
    Tensor o2 = predict_noise(t2, Tensor::from({4, 4}, poked), 7.0, test_kappa(), w, mask);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 4; ++c)
        CHECK(o1.data()[r * 4 + c] == o2.data()[r * 4 + c]);
  }
}

TEST_CASE("gradients w.r.t. padded-slot inputs are exactly zero") {
  Rng rng(43);
  DenoiserWeights w = init_weights(tiny_config(Variant::kLogen), rng);
  randomize(w, 17);
  const std::vector<char> mask = {1, 1, 0, 0};
  Rng drng(3);
  Tensor x = Tensor::randn({4, 4}, drng, 1.0, true);
  Tensor target = Tensor::zeros({4, 4});
  Tape tape;
  Tensor out = predict_noise(tape, x, 5.0, test_kappa(), w, mask);
  Tensor loss = tape.masked_mse(out, target, mask);
  tape.backward(loss);
  for (int r = 2; r < 4; ++r)
    for (int c = 0; c < 4; ++c) CHECK(x.grad()[r * 4 + c] == 0.0);
  bool any = false;
  for (int k = 0; k < 8; ++k) any = any || x.grad()[k] != 0.0;
  CHECK(any);
}

TEST_CASE("batch-of-one equals the corresponding rows of a padded batch") {
  for (Variant v :
       {Variant::kDit3dAdalnZero, Variant::kPixartAdalnSingle, Variant::kLogen}) {
    CAPTURE(variant_to_string(v));
    Rng rng(47);
    DenoiserWeights w = init_weights(tiny_config(v), rng);
    randomize(w, 19);
    Rng drng(8);
    std::vector<tensor::real> vals(3 * 4);
    for (auto& x : vals) x = drng.normal();
    // alone: 3 real points, no padding
    Tape t1;
    Tensor alone = predict_noise(t1, Tensor::from({3, 4}, vals), 9.0, test_kappa(), w,
                                 std::vector<char>(3, 1));
    // padded to 5 slots
    std::vector<tensor::real> padded = vals;
    padded.resize(5 * 4, 0.0);
    Tape t2;
    Tensor inb = predict_noise(t2, Tensor::from({5, 4}, padded), 9.0, test_kappa(), w,
                               {1, 1, 1, 0, 0});
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 4; ++c)
        CHECK(alone.data()[r * 4 + c] ==
              doctest::Approx(inb.data()[r * 4 + c]).epsilon(1e-12));
  }
}

TEST_CASE("predict_noise is 2*pi periodic in phi") {
  Rng rng(53);
  DenoiserWeights w = init_weights(tiny_config(Variant::kLogen), rng);
  randomize(w, 23);
  Rng drng(6);
  Tensor x = Tensor::randn({4, 4}, drng, 1.0);
  objects::Condition k1 = test_kappa();
  objects::Condition k2 = k1;
  k2.phi += 2 * kPi;
  Tape t1, t2;
  Tensor o1 = predict_noise(t1, x, 3.0, k1, w, std::vector<char>(4, 1));
  Tensor o2 = predict_noise(t2, x, 3.0, k2, w, std::vector<char>(4, 1));
  for (std::size_t i = 0; i < o1.size(); ++i) CHECK(o1.data()[i] == o2.data()[i]);
}

TEST_CASE("gradient check per variant (depth 1, width 8, heads 2, N=4)") {
  for (Variant v :
       {Variant::kDit3dAdalnZero, Variant::kPixartAdalnSingle, Variant::kLogen}) {
    CAPTURE(variant_to_string(v));
    Rng rng(61);
    DenoiserWeights w = init_weights(tiny_config(v), rng);
    randomize(w, 29);
    Rng drng(12);
    Tensor x = Tensor::randn({4, 4}, drng, 1.0, true);
    Tensor target = Tensor::randn({4, 4}, drng, 1.0);
    const std::vector<char> mask = {1, 1, 1, 1};
    std::vector<Tensor> params = {x};
    for (auto& [name, t] : w.params.items) params.push_back(t);
    auto f = [&](Tape& tape) {
      Tensor out = predict_noise(tape, x, 4.0, test_kappa(), w, mask);
      return tape.masked_mse(out, target, mask);
    };
    CHECK(tensor::grad_check(f, params) < 1e-3);
  }
}

TEST_CASE("weight save/load round trip preserves config and float32 values") {
  Rng rng(71);
  DenoiserWeights w = init_weights(tiny_config(Variant::kPixartAdalnSingle), rng);
  randomize(w, 31);
  const std::string path = "/tmp/scandiff_test_weights.ckpt";
  save_weights(path, w, "{\"step\":42}");
  std::string extra;
  DenoiserWeights r = load_weights(path, &extra);
  CHECK(extra.find("42") != std::string::npos);
  CHECK(r.cfg.variant == w.cfg.variant);
  CHECK(r.cfg.width == w.cfg.width);
  REQUIRE(r.params.items.size() == w.params.items.size());
  for (std::size_t i = 0; i < w.params.items.size(); ++i)
    for (std::size_t k = 0; k < w.params.items[i].second.size(); ++k)
      CHECK(r.params.items[i].second.data()[k] ==
            double(static_cast<float>(w.params.items[i].second.data()[k])));
  std::remove(path.c_str());
}

TEST_CASE("XS reference config lands near 7.5M parameters") {
  Rng rng(81);
  const DenoiserWeights w = init_weights(xs_config(Variant::kDit3dAdalnZero), rng);
  const double count = static_cast<double>(w.param_count());
  CHECK(count > 7.5e6 * 0.85);
  CHECK(count < 7.5e6 * 1.15);
}

}  // TEST_SUITE
