// SPDX-License-Identifier: Apache-2.0
#include "scandiff/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace scandiff::synthgen {

namespace {

constexpr double kDeg = kPi / 180.0;

struct Vec3 {
  double x = 0, y = 0, z = 0;
};

// Ray/primitive intersection in the object frame. Returns smallest
// positive t and the outward surface normal at the hit.
bool intersect(const Primitive& pr, const Vec3& o, const Vec3& dir, double* t_out,
               Vec3* n_out) {
  switch (pr.type) {
    case Primitive::Type::kBox: {
      double tmin = 0.0, tmax = std::numeric_limits<double>::infinity();
      int axis = -1;
      double sign = 0;
      const double oc[3] = {o.x - pr.cx, o.y - pr.cy, o.z - pr.cz};
      const double dd[3] = {dir.x, dir.y, dir.z};
      const double hh[3] = {pr.hx, pr.hy, pr.hz};
      for (int a = 0; a < 3; ++a) {
        if (std::abs(dd[a]) < 1e-12) {
          if (std::abs(oc[a]) > hh[a]) return false;
          continue;
        }
        double t1 = (-hh[a] - oc[a]) / dd[a];
        double t2 = (hh[a] - oc[a]) / dd[a];
        double s = -1;
        if (t1 > t2) {
          std::swap(t1, t2);
          s = 1;
        }
        if (t1 > tmin) {
          tmin = t1;
          axis = a;
          sign = s;
        }
        tmax = std::min(tmax, t2);
        if (tmin > tmax) return false;
      }
      if (axis < 0 || tmin <= 1e-9) return false;
      *t_out = tmin;
      *n_out = Vec3{};
      if (axis == 0) n_out->x = sign;
      if (axis == 1) n_out->y = sign;
      if (axis == 2) n_out->z = sign;
      return true;
    }
    case Primitive::Type::kCylinder: {
      const double ox = o.x - pr.cx, oy = o.y - pr.cy;
      const double a = dir.x * dir.x + dir.y * dir.y;
      double best = std::numeric_limits<double>::infinity();
      Vec3 bn;
      if (a > 1e-12) {
        const double b = 2 * (ox * dir.x + oy * dir.y);
        const double c = ox * ox + oy * oy - pr.r * pr.r;
        const double disc = b * b - 4 * a * c;
        if (disc >= 0) {
          const double sq = std::sqrt(disc);
          for (double t : {(-b - sq) / (2 * a), (-b + sq) / (2 * a)}) {
            if (t <= 1e-9 || t >= best) continue;
            const double z = o.z + t * dir.z;
            if (z < pr.zmin || z > pr.zmax) continue;
            best = t;
            bn = Vec3{(ox + t * dir.x) / pr.r, (oy + t * dir.y) / pr.r, 0};
          }
        }
      }
      // end caps
      for (double zc : {pr.zmin, pr.zmax}) {
        if (std::abs(dir.z) < 1e-12) continue;
        const double t = (zc - o.z) / dir.z;
        if (t <= 1e-9 || t >= best) continue;
        const double x = ox + t * dir.x, y = oy + t * dir.y;
        if (x * x + y * y > pr.r * pr.r) continue;
        best = t;
        bn = Vec3{0, 0, zc == pr.zmin ? -1.0 : 1.0};
      }
      if (!std::isfinite(best)) return false;
      *t_out = best;
      *n_out = bn;
      return true;
    }
    case Primitive::Type::kSphere: {
      const double ox = o.x - pr.cx, oy = o.y - pr.cy, oz = o.z - pr.cz;
      const double b = 2 * (ox * dir.x + oy * dir.y + oz * dir.z);
      const double c = ox * ox + oy * oy + oz * oz - pr.r * pr.r;
      const double disc = b * b - 4 * c;
      if (disc < 0) return false;
      const double sq = std::sqrt(disc);
      double t = (-b - sq) / 2;
      if (t <= 1e-9) t = (-b + sq) / 2;
      if (t <= 1e-9) return false;
      *t_out = t;
      *n_out = Vec3{(ox + t * dir.x) / pr.r, (oy + t * dir.y) / pr.r,
                    (oz + t * dir.z) / pr.r};
      return true;
    }
  }
  return false;
}

std::vector<Primitive> build_vehicle(double l, double w, double h) {
  std::vector<Primitive> ps;
  Primitive body;
  body.type = Primitive::Type::kBox;
  body.hx = l / 2;
  body.hy = w / 2;
  body.hz = h * 0.55 / 2;
  body.cz = -h / 2 + body.hz;
  body.mat.base = 0.55;
  ps.push_back(body);
  Primitive cabin;
  cabin.type = Primitive::Type::kBox;
  cabin.hx = l * 0.45 / 2;
  cabin.hy = w * 0.85 / 2;
  cabin.hz = h * 0.45 / 2;
  cabin.cx = -l * 0.05;
  cabin.cz = h / 2 - cabin.hz;
  cabin.mat.base = 0.75;
  ps.push_back(cabin);
  return ps;
}

std::vector<Primitive> build_post(double l, double w, double h) {
  Primitive cyl;
  cyl.type = Primitive::Type::kCylinder;
  cyl.r = std::min(l, w) / 2;
  cyl.zmin = -h / 2;
  cyl.zmax = h / 2;
  cyl.mat.base = 0.85;
  return {cyl};
}

std::vector<Primitive> build_bike(double l, double w, double h) {
  std::vector<Primitive> ps;
  const double wheel_r = std::min({h * 0.35, l * 0.25, w / 2, 0.45});
  for (double sx : {-1.0, 1.0}) {
    Primitive wheel;
    wheel.type = Primitive::Type::kSphere;
    wheel.r = wheel_r;
    wheel.cx = sx * (l / 2 - wheel_r);
    wheel.cz = -h / 2 + wheel_r;
    wheel.mat.base = 0.25;
    ps.push_back(wheel);
  }
  Primitive frame;
  frame.type = Primitive::Type::kBox;
  frame.hx = l * 0.8 / 2;
  frame.hy = w / 2;
  frame.hz = h * 0.5 / 2;
  frame.cz = h / 2 - frame.hz;
  frame.mat.base = 0.6;
  ps.push_back(frame);
  return ps;
}

std::vector<Primitive> build_barrier(double l, double w, double h) {
  Primitive wall;
  wall.type = Primitive::Type::kBox;
  wall.hx = l / 2;
  wall.hy = w / 2;
  wall.hz = h / 2;
  wall.mat.base = 0.35;
  return {wall};
}

}  // namespace

std::vector<ShapeTemplate> builtin_templates() {
  return {
      {"box-vehicle", {2.8, 4.2}, {1.5, 2.0}, {1.4, 1.9}, &build_vehicle},
      {"cylinder-post", {0.25, 0.5}, {0.25, 0.5}, {1.2, 2.6}, &build_post},
      {"composite-bike", {1.4, 2.0}, {0.4, 0.7}, {0.9, 1.4}, &build_bike},
      {"thin-wall-barrier", {1.5, 3.0}, {0.12, 0.3}, {0.8, 1.3}, &build_barrier},
  };
}

const ShapeTemplate& template_for_class(const std::string& cls) {
  static const std::vector<ShapeTemplate> tmpls = builtin_templates();
  for (const ShapeTemplate& t : tmpls)
    if (t.cls == cls) return t;
  throw ContractError("template_for_class: unknown class " + cls);
}

std::optional<objects::LidarObject> scan_object(const ShapeTemplate& tmpl, double l,
                                                double w, double h, const Pose& pose,
                                                const ScannerSpec& spec) {
  if (pose.d <= 0) throw ContractError("scan_object: pose distance must be > 0");
  if (spec.num_beams < 1) throw ContractError("scan_object: num_beams must be >= 1");

  std::vector<Primitive> prims = tmpl.build(l, w, h);
  // cylinder posts with w == l: template sizes are the box extents

  objects::BoxAnnotation box;
  box.cx = pose.d * std::cos(pose.azimuth);
  box.cy = pose.d * std::sin(pose.azimuth);
  box.cz = pose.z;
  box.l = l;
  box.w = w;
  box.h = h;
  box.yaw = wrap_angle(pose.yaw);

  // ray walk restricted to the object's angular window
  const double bound_r = 0.5 * std::sqrt(l * l + w * w);
  const double center_range = std::hypot(box.cx, box.cy);
  if (center_range <= bound_r) throw ContractError("scan_object: sensor inside object");
  const double half_win =
      std::asin(std::min(1.0, bound_r / center_range)) + 2.0 * spec.azimuth_res_deg * kDeg;
  const double az_res = spec.azimuth_res_deg * kDeg;
  // absolute azimuth grid, so the sampling pattern is pose-independent
  const long k_lo = static_cast<long>(std::ceil((pose.azimuth - half_win + kPi) / az_res));
  const long k_hi = static_cast<long>(std::floor((pose.azimuth + half_win + kPi) / az_res));

  const double cy_ = std::cos(-box.yaw), sy_ = std::sin(-box.yaw);
  objects::LidarObject obj;
  obj.cls = tmpl.cls;
  obj.box = box;

  for (int b = 0; b < spec.num_beams; ++b) {
    const double elev =
        spec.num_beams == 1
            ? 0.5 * (spec.vfov_min_deg + spec.vfov_max_deg) * kDeg
            : (spec.vfov_min_deg +
               (spec.vfov_max_deg - spec.vfov_min_deg) * b / double(spec.num_beams - 1)) *
                  kDeg;
    const double ce = std::cos(elev), se = std::sin(elev);
    for (long k = k_lo; k <= k_hi; ++k) {
      const double az = -kPi + k * az_res;
      Vec3 dir{ce * std::cos(az), ce * std::sin(az), se};
      // into the object frame
      Vec3 o_obj;
      {
        const double dx = -box.cx, dy = -box.cy, dz = -box.cz;
        o_obj = Vec3{cy_ * dx - sy_ * dy, sy_ * dx + cy_ * dy, dz};
      }
      Vec3 d_obj{cy_ * dir.x - sy_ * dir.y, sy_ * dir.x + cy_ * dir.y, dir.z};

      double best_t = std::numeric_limits<double>::infinity();
      Vec3 best_n;
      const Primitive* best_pr = nullptr;
      for (const Primitive& pr : prims) {
        double t;
        Vec3 n;
        if (intersect(pr, o_obj, d_obj, &t, &n) && t < best_t) {
          best_t = t;
          best_n = n;
          best_pr = &pr;
        }
      }
      if (!best_pr) continue;

      objects::Point p;
      p.x = best_t * dir.x;
      p.y = best_t * dir.y;
      p.z = best_t * dir.z;
      const double cos_inc = std::max(
          0.0, -(best_n.x * d_obj.x + best_n.y * d_obj.y + best_n.z * d_obj.z));
      const double raw = spec.i_max * best_pr->mat.base *
                         std::pow(cos_inc, spec.incidence_exponent) /
                         (1.0 + spec.range_attenuation * best_t * best_t);
      p.i = std::clamp(raw, 0.0, spec.i_max);
      obj.raw.points.push_back(p);
    }
  }

  const int n = static_cast<int>(obj.raw.size());
  if (n < spec.min_points || n > spec.max_points) return std::nullopt;
  return obj;
}

objects::LidarObject sample_object(const std::string& cls, const ScannerSpec& spec,
                                   Rng& rng, Pose* pose_out) {
  const ShapeTemplate& tmpl = template_for_class(cls);
  for (int attempt = 0; attempt < 256; ++attempt) {
    const double l = rng.uniform(tmpl.l.lo, tmpl.l.hi);
    const double w = rng.uniform(tmpl.w.lo, tmpl.w.hi);
    const double h = rng.uniform(tmpl.h.lo, tmpl.h.hi);
    Pose pose;
    pose.d = rng.uniform(8.0, 22.0);
    pose.azimuth = rng.uniform(-kPi, kPi);
    pose.z = -spec.sensor_height + h / 2;
    pose.yaw = rng.uniform(-kPi, kPi);
    auto obj = scan_object(tmpl, l, w, h, pose, spec);
    if (obj) {
      if (pose_out) *pose_out = pose;
      return *obj;
    }
  }
  throw std::runtime_error("sample_object: no valid pose found for class " + cls);
}

void make_dataset(const std::string& out_dir, const std::string& name,
                  const std::map<std::string, int>& counts, const ScannerSpec& spec,
                  uint64_t seed) {
  dataset::Manifest m;
  m.name = name;
  m.i_max = spec.i_max;
  std::vector<objects::CanonicalObject> train, val;
  uint64_t index = 0;
  for (const auto& [cls, count] : counts) {
    if (count < 1) throw ContractError("make_dataset: counts must be >= 1");
    const uint32_t class_id = static_cast<uint32_t>(m.classes.size());
    m.classes.push_back(cls);
    for (int i = 0; i < count; ++i, ++index) {
      Rng rng(derive_seed(seed, index));
      objects::LidarObject obj = sample_object(cls, spec, rng);
      auto [pts, kappa] = objects::canonicalize(obj, spec.i_max);
      objects::CanonicalObject co{std::move(pts), kappa, class_id};
      if (i % 5 == 4)
        val.push_back(std::move(co));
      else
        train.push_back(std::move(co));
    }
  }
  dataset::write_dataset(out_dir, m, train, val);
}

}  // namespace scandiff::synthgen
