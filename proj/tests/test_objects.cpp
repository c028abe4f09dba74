// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include "doctest.h"
#include "scandiff/objects.hpp"

using namespace scandiff;
using namespace scandiff::objects;

TEST_SUITE("objects") {

TEST_CASE("wrap_angle maps into [-pi, pi)") {
  CHECK(wrap_angle(0.0) == doctest::Approx(0.0));
  CHECK(wrap_angle(kPi) == doctest::Approx(-kPi));
  CHECK(wrap_angle(-kPi) == doctest::Approx(-kPi));
  CHECK(wrap_angle(3 * kPi) == doctest::Approx(-kPi));
  CHECK(wrap_angle(2.5) == doctest::Approx(2.5));
  for (double a = -20; a < 20; a += 0.37) {
    const double w = wrap_angle(a);
    CHECK(w >= -kPi);
    CHECK(w < kPi);
    CHECK(std::abs(std::sin(w) - std::sin(a)) < 1e-12);
    CHECK(std::abs(std::cos(w) - std::cos(a)) < 1e-12);
  }
}

TEST_CASE("observation_angle reference cases") {
  BoxAnnotation b;
  b.cx = 5;
  b.cy = 0;
  b.cz = 0;
  b.l = b.w = b.h = 1;
  // heading rotated pi points back at the sensor
  b.yaw = kPi;
  CHECK(observation_angle(b) == doctest::Approx(0.0).epsilon(1e-12));
  // heading directly away
  b.yaw = 0;
  CHECK(observation_angle(b) == doctest::Approx(-kPi).epsilon(1e-12));
  // center on +y axis: atan2(-5, 0) = -pi/2
  b.cx = 0;
  b.cy = 5;
  CHECK(observation_angle(b) == doctest::Approx(-kPi / 2).epsilon(1e-12));
}

TEST_CASE("observation_angle errors at the origin") {
  BoxAnnotation b;
  b.l = b.w = b.h = 1;
  CHECK_THROWS_AS(observation_angle(b), ContractError);
}

TEST_CASE("observation_angle invariant under scene rotation about sensor z") {
  Rng rng(42);
  for (int trial = 0; trial < 50; ++trial) {
    BoxAnnotation b;
    const double r = rng.uniform(2.0, 30.0);
    const double az = rng.uniform(-kPi, kPi);
    b.cx = r * std::cos(az);
    b.cy = r * std::sin(az);
    b.cz = rng.uniform(-2.0, 2.0);
    b.l = b.w = b.h = 1;
    b.yaw = rng.uniform(-kPi, kPi);
    const double phi = observation_angle(b);
    const double delta = rng.uniform(-kPi, kPi);
    BoxAnnotation rb = b;
    const double c = std::cos(delta), s = std::sin(delta);
    rb.cx = c * b.cx - s * b.cy;
    rb.cy = s * b.cx + c * b.cy;
    rb.yaw = wrap_angle(b.yaw + delta);
    CHECK(std::abs(wrap_angle(observation_angle(rb) - phi)) < 1e-9);
  }
}

TEST_CASE("intensity scaling examples and round trip") {
  CHECK(scale_intensity(0, 255) == doctest::Approx(0.0));
  CHECK(scale_intensity(255, 255) == doctest::Approx(1.0));
  // log(16)/log(256) = 1/2 since 16 = 256^(1/2)
  CHECK(scale_intensity(15, 255) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK_THROWS_AS(scale_intensity(-1, 255), ContractError);
  double prev = -1;
  for (double i = 0; i <= 255; i += 3.7) {
    const double s = scale_intensity(i, 255);
    CHECK(s > prev);  // strictly monotone
    prev = s;
    CHECK(std::abs(unscale_intensity(s, 255) - i) < 1e-6);
  }
}

TEST_CASE("canonicalize reference cases") {
  LidarObject obj;
  obj.cls = "t";
  obj.box = {3, 4, 1, 2, 2, 2, 0};

  SUBCASE("point at center maps to origin") {
    obj.box.yaw = 1.234;
    obj.raw.points = {{3, 4, 1, 10}};
    auto [pts, cond] = canonicalize(obj, 255);
    CHECK(pts.points[0].x == doctest::Approx(0.0));
    CHECK(pts.points[0].y == doctest::Approx(0.0));
    CHECK(pts.points[0].z == doctest::Approx(0.0));
  }
  SUBCASE("identity rotation") {
    obj.raw.points = {{4, 4, 1, 10}};
    auto [pts, cond] = canonicalize(obj, 255);
    CHECK(pts.points[0].x == doctest::Approx(1.0));
    CHECK(pts.points[0].y == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(cond.d == doctest::Approx(5.0));  // horizontal range, not 3D
    CHECK(cond.z == doctest::Approx(1.0));
    CHECK(cond.l == doctest::Approx(2.0));
  }
  SUBCASE("yaw pi/2: R_z(-pi/2) sends (1,0,0) to (0,-1,0)") {
    obj.box.yaw = kPi / 2;
    obj.raw.points = {{4, 4, 1, 10}};
    auto [pts, cond] = canonicalize(obj, 255);
    CHECK(pts.points[0].x == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(pts.points[0].y == doctest::Approx(-1.0));
    CHECK(pts.points[0].z == doctest::Approx(0.0));
  }
  SUBCASE("degenerate box refused") {
    obj.box.l = 0;
    obj.raw.points = {{3, 4, 1, 10}};
    CHECK_THROWS_AS(canonicalize(obj, 255), ContractError);
  }
}

TEST_CASE("canonicalize round trip to 1e-9 relative error") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    LidarObject obj;
    obj.box.cx = rng.uniform(-20, 20);
    obj.box.cy = rng.uniform(-20, 20);
    obj.box.cz = rng.uniform(-2, 2);
    obj.box.l = rng.uniform(0.5, 4);
    obj.box.w = rng.uniform(0.5, 2);
    obj.box.h = rng.uniform(0.5, 2);
    obj.box.yaw = rng.uniform(-kPi, kPi);
    if (std::hypot(obj.box.cx, obj.box.cy) < 1.0) obj.box.cx += 5;
    for (int i = 0; i < 30; ++i)
      obj.raw.points.push_back({obj.box.cx + rng.uniform(-0.4, 0.4) * obj.box.l,
                                obj.box.cy + rng.uniform(-0.4, 0.4) * obj.box.w,
                                obj.box.cz + rng.uniform(-0.4, 0.4) * obj.box.h,
                                rng.uniform(0, 255)});
    auto [canon, cond] = canonicalize(obj, 255);
    PointSet back = uncanonicalize(canon, obj.box);
    for (std::size_t i = 0; i < back.points.size(); ++i) {
      const Point& a = obj.raw.points[i];
      const Point& b = back.points[i];
      const double scale = std::max({1.0, std::abs(a.x), std::abs(a.y), std::abs(a.z)});
      CHECK(std::abs(a.x - b.x) / scale < 1e-9);
      CHECK(std::abs(a.y - b.y) / scale < 1e-9);
      CHECK(std::abs(a.z - b.z) / scale < 1e-9);
    }
  }
}

TEST_CASE("point_in_box respects yaw and the 1 cm slack") {
  BoxAnnotation b{10, 0, 0, 4, 2, 2, 0};
  CHECK(point_in_box({11.9, 0, 0, 0}, b));
  CHECK(point_in_box({12.005, 0, 0, 0}, b));   // inside the slack
  CHECK(!point_in_box({12.02, 0, 0, 0}, b));   // beyond the slack
  b.yaw = kPi / 2;  // length axis now along y
  CHECK(point_in_box({10, 1.9, 0, 0}, b));
  CHECK(!point_in_box({11.9, 0, 0, 0}, b));
}

TEST_CASE("pad_batch examples") {
  PointSet a, b;
  for (int i = 0; i < 20; ++i) a.points.push_back({double(i), 0, 0, 0.5});
  for (int i = 0; i < 35; ++i) b.points.push_back({0, double(i), 0, 0.5});

  SUBCASE("batch of one: no padding") {
    PaddedBatch pb = pad_batch({a});
    CHECK(pb.max_len == 20);
    CHECK(std::count(pb.mask[0].begin(), pb.mask[0].end(), char(1)) == 20);
  }
  SUBCASE("two objects pad to the max length") {
    PaddedBatch pb = pad_batch({a, b});
    CHECK(pb.max_len == 35);
    CHECK(pb.data[0].size() == 35 * 4);
    int mask_sum = 0;
    for (const auto& m : pb.mask)
      mask_sum += static_cast<int>(std::count(m.begin(), m.end(), char(1)));
    CHECK(mask_sum == 55);  // padding adds no real points
    // padded tail is zero and the first mask has 15 false slots
    CHECK(std::count(pb.mask[0].begin(), pb.mask[0].end(), char(0)) == 15);
    for (std::size_t k = 20 * 4; k < pb.data[0].size(); ++k)
      CHECK(pb.data[0][k] == 0.0f);
  }
  SUBCASE("pad then unpad is the identity") {
    PaddedBatch pb = pad_batch({a, b});
    for (int which = 0; which < 2; ++which) {
      const PointSet& src = which == 0 ? a : b;
      PointSet got = unpad(pb.data[which], pb.mask[which]);
      REQUIRE(got.points.size() == src.points.size());
      for (std::size_t i = 0; i < got.points.size(); ++i) {
        CHECK(got.points[i].x == doctest::Approx(src.points[i].x));
        CHECK(got.points[i].y == doctest::Approx(src.points[i].y));
      }
    }
  }
  SUBCASE("empty batch refused") { CHECK_THROWS_AS(pad_batch({}), ContractError); }
}

}  // TEST_SUITE
