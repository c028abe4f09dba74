// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "scandiff/common.hpp"

namespace scandiff::objects {

struct Point {
  double x = 0, y = 0, z = 0;
  double i = 0;  // intensity, [0,1] once scaled
};

struct PointSet {
  std::vector<Point> points;
  std::size_t size() const { return points.size(); }
};

struct BoxAnnotation {
  double cx = 0, cy = 0, cz = 0;  // center, sensor frame
  double l = 0, w = 0, h = 0;     // extents, strictly positive
  double yaw = 0;                 // [-pi, pi)
};

struct LidarObject {
  std::string cls;
  PointSet raw;  // sensor frame, raw intensities
  BoxAnnotation box;
};

// kappa = (phi, d, z, l, w, h); is_null marks the CFG null condition.
struct Condition {
  double phi = 0;
  double d = 0;
  double z = 0;
  double l = 0, w = 0, h = 0;
  bool is_null = false;
};

// Object in interchange form: canonical coordinates + condition.
struct CanonicalObject {
  PointSet pts;  // box-frame coordinates, scaled intensities
  Condition kappa;
  uint32_t class_id = 0;
};

// Angle between the object heading and the ray from box center to the
// sensor; 0 means the object faces the sensor.
double observation_angle(const BoxAnnotation& box);

double scale_intensity(double i_raw, double i_max);
double unscale_intensity(double i_scaled, double i_max);

// Center/rotate points into the box frame and derive the condition.
// d is horizontal (xy) range; z is kept as its own component.
std::pair<PointSet, Condition> canonicalize(const LidarObject& obj, double i_max);

// Inverse of the coordinate part of canonicalize (intensities untouched).
PointSet uncanonicalize(const PointSet& canonical, const BoxAnnotation& box);

// True if p lies inside the box inflated by `slack` meters per side.
bool point_in_box(const Point& p, const BoxAnnotation& box, double slack = 0.01);

struct PaddedBatch {
  std::size_t max_len = 0;
  // One entry per object: max_len x 4 row-major floats and a mask of
  // real points. Padded slots are zero and must be ignored downstream.
  std::vector<std::vector<float>> data;
  std::vector<std::vector<char>> mask;
};

PaddedBatch pad_batch(const std::vector<PointSet>& objs);

// Mask-filtered extraction, inverse of pad_batch for one object.
PointSet unpad(const std::vector<float>& data, const std::vector<char>& mask);

}  // namespace scandiff::objects
