// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "scandiff/dataset.hpp"
#include "scandiff/objects.hpp"

namespace scandiff::synthgen {

struct Material {
  double base = 0.5;  // reflectance in (0, 1]
};

// Analytic primitives in the object (box) frame.
struct Primitive {
  enum class Type { kBox, kCylinder, kSphere };
  Type type = Type::kBox;
  // box: center + half extents; cylinder: vertical axis through (cx,cy),
  // radius r, z in [zmin,zmax]; sphere: center + radius r
  double cx = 0, cy = 0, cz = 0;
  double hx = 0, hy = 0, hz = 0;
  double r = 0, zmin = 0, zmax = 0;
  Material mat;
};

struct ScannerSpec {
  int num_beams = 32;
  double vfov_min_deg = -25.0;
  double vfov_max_deg = 5.0;
  double azimuth_res_deg = 0.8;
  double sensor_height = 1.8;  // ground sits at z = -sensor_height
  double incidence_exponent = 2.0;
  double range_attenuation = 0.004;  // 1 / (1 + c d^2) falloff
  double i_max = 255.0;
  int min_points = 20;
  int max_points = 250;  // generator rejection cap, resample above
};

struct SizeRange {
  double lo = 1, hi = 1;
};

struct ShapeTemplate {
  std::string cls;
  SizeRange l, w, h;
  // primitive composition for sampled extents; union must fit the box
  std::vector<Primitive> (*build)(double l, double w, double h) = nullptr;
};

// box-vehicle, cylinder-post, composite-bike, thin-wall-barrier
std::vector<ShapeTemplate> builtin_templates();
const ShapeTemplate& template_for_class(const std::string& cls);

struct Pose {
  double d = 10;        // horizontal range of box center
  double azimuth = 0;   // direction of box center from sensor
  double z = 0;         // box center altitude (sensor frame)
  double yaw = 0;
};

struct RayHit {
  objects::Point p;  // world frame, raw intensity
  double range = 0;
};

// One ray per (beam, azimuth step) against the posed primitives;
// first hit wins. Returns nullopt when fewer than spec.min_points or
// more than spec.max_points rays hit (caller resamples the pose).
std::optional<objects::LidarObject> scan_object(const ShapeTemplate& tmpl,
                                                double l, double w, double h,
                                                const Pose& pose,
                                                const ScannerSpec& spec);

// Samples sizes and a pose for `cls` from the rng and scans until the
// point-count gate passes.
objects::LidarObject sample_object(const std::string& cls, const ScannerSpec& spec,
                                   Rng& rng, Pose* pose_out = nullptr);

// Writes a dataset directory (objects-module format): per-class counts,
// deterministic 80/20 train/val split, per-object RNG streams.
void make_dataset(const std::string& out_dir, const std::string& name,
                  const std::map<std::string, int>& counts,
                  const ScannerSpec& spec, uint64_t seed);

}  // namespace scandiff::synthgen
