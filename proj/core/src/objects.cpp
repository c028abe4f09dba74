// SPDX-License-Identifier: Apache-2.0
#include "scandiff/objects.hpp"

#include <cmath>

namespace scandiff::objects {

double observation_angle(const BoxAnnotation& box) {
  const double r2 = box.cx * box.cx + box.cy * box.cy;
  if (r2 <= 0.0) throw ContractError("observation_angle: box center at sensor origin");
  // Ray from box center to the sensor is (-cx, -cy).
  return wrap_angle(std::atan2(-box.cy, -box.cx) - box.yaw);
}

double scale_intensity(double i_raw, double i_max) {
  if (i_raw < 0) throw ContractError("scale_intensity: negative raw intensity");
  if (i_max <= 0) throw ContractError("scale_intensity: i_max must be positive");
  return std::log1p(i_raw) / std::log1p(i_max);
}

double unscale_intensity(double i_scaled, double i_max) {
  if (i_max <= 0) throw ContractError("unscale_intensity: i_max must be positive");
  return std::expm1(i_scaled * std::log1p(i_max));
}

std::pair<PointSet, Condition> canonicalize(const LidarObject& obj, double i_max) {
  const BoxAnnotation& b = obj.box;
  if (b.l <= 0 || b.w <= 0 || b.h <= 0)
    throw ContractError("canonicalize: degenerate box extent");

  const double c = std::cos(-b.yaw);
  const double s = std::sin(-b.yaw);
  PointSet out;
  out.points.reserve(obj.raw.size());
  for (const Point& p : obj.raw.points) {
    const double dx = p.x - b.cx;
    const double dy = p.y - b.cy;
    Point q;
    q.x = c * dx - s * dy;
    q.y = s * dx + c * dy;
    q.z = p.z - b.cz;
    q.i = scale_intensity(p.i, i_max);
    out.points.push_back(q);
  }

  Condition k;
  k.phi = observation_angle(b);
  k.d = std::hypot(b.cx, b.cy);
  k.z = b.cz;
  k.l = b.l;
  k.w = b.w;
  k.h = b.h;
  return {std::move(out), k};
}

PointSet uncanonicalize(const PointSet& canonical, const BoxAnnotation& box) {
  const double c = std::cos(box.yaw);
  const double s = std::sin(box.yaw);
  PointSet out;
  out.points.reserve(canonical.size());
  for (const Point& p : canonical.points) {
    Point q;
    q.x = c * p.x - s * p.y + box.cx;
    q.y = s * p.x + c * p.y + box.cy;
    q.z = p.z + box.cz;
    q.i = p.i;
    out.points.push_back(q);
  }
  return out;
}

bool point_in_box(const Point& p, const BoxAnnotation& box, double slack) {
  const double c = std::cos(-box.yaw);
  const double s = std::sin(-box.yaw);
  const double dx = p.x - box.cx;
  const double dy = p.y - box.cy;
  const double bx = c * dx - s * dy;
  const double by = s * dx + c * dy;
  const double bz = p.z - box.cz;
  return std::abs(bx) <= box.l / 2 + slack && std::abs(by) <= box.w / 2 + slack &&
         std::abs(bz) <= box.h / 2 + slack;
}

PaddedBatch pad_batch(const std::vector<PointSet>& objs) {
  if (objs.empty()) throw ContractError("pad_batch: empty batch");
  PaddedBatch b;
  for (const PointSet& ps : objs) b.max_len = std::max(b.max_len, ps.size());
  for (const PointSet& ps : objs) {
    std::vector<float> d(b.max_len * 4, 0.0f);
    std::vector<char> m(b.max_len, 0);
    for (std::size_t i = 0; i < ps.size(); ++i) {
      d[i * 4 + 0] = static_cast<float>(ps.points[i].x);
      d[i * 4 + 1] = static_cast<float>(ps.points[i].y);
      d[i * 4 + 2] = static_cast<float>(ps.points[i].z);
      d[i * 4 + 3] = static_cast<float>(ps.points[i].i);
      m[i] = 1;
    }
    b.data.push_back(std::move(d));
    b.mask.push_back(std::move(m));
  }
  return b;
}

PointSet unpad(const std::vector<float>& data, const std::vector<char>& mask) {
  PointSet ps;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    ps.points.push_back({data[i * 4 + 0], data[i * 4 + 1], data[i * 4 + 2], data[i * 4 + 3]});
  }
  return ps;
}

}  // namespace scandiff::objects
