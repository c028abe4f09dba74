// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "scandiff/objects.hpp"

namespace scandiff::render {

// ASCII PLY with per-vertex x, y, z, intensity. Refuses empty sets.
void write_ply(const std::string& path, const objects::PointSet& ps);

// Two-panel orthographic SVG (top-down x/y and side x/z) with an
// intensity colormap; optional box outline in the top view.
void write_svg(const std::string& path, const objects::PointSet& ps,
               const objects::BoxAnnotation* box = nullptr);

}  // namespace scandiff::render
