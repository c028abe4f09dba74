// SPDX-License-Identifier: Apache-2.0
#include "scandiff/render.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace scandiff::render {

namespace {

// Simple blue -> cyan -> yellow -> red ramp over [0, 1].
void colormap(double v, int& r, int& g, int& b) {
  v = std::clamp(v, 0.0, 1.0);
  if (v < 1.0 / 3.0) {
    const double t = v * 3.0;
    r = 30;
    g = static_cast<int>(60 + 160 * t);
    b = static_cast<int>(200 - 40 * t);
  } else if (v < 2.0 / 3.0) {
    const double t = (v - 1.0 / 3.0) * 3.0;
    r = static_cast<int>(30 + 200 * t);
    g = static_cast<int>(220 - 30 * t);
    b = static_cast<int>(160 - 130 * t);
  } else {
    const double t = (v - 2.0 / 3.0) * 3.0;
    r = static_cast<int>(230 + 20 * t);
    g = static_cast<int>(190 - 160 * t);
    b = 30;
  }
}

struct Panel {
  double x0, y0, size;   // pixel square
  double cx, cy, scale;  // world center + world-to-pixel scale
};

Panel fit_panel(double x0, double y0, double size, double wx_min, double wx_max,
                double wy_min, double wy_max) {
  Panel p;
  p.x0 = x0;
  p.y0 = y0;
  p.size = size;
  p.cx = 0.5 * (wx_min + wx_max);
  p.cy = 0.5 * (wy_min + wy_max);
  const double extent = std::max({wx_max - wx_min, wy_max - wy_min, 1e-6});
  p.scale = (size - 40.0) / extent;
  return p;
}

double px(const Panel& p, double wx) { return p.x0 + p.size / 2 + (wx - p.cx) * p.scale; }
double py(const Panel& p, double wy) { return p.y0 + p.size / 2 - (wy - p.cy) * p.scale; }

}  // namespace

void write_ply(const std::string& path, const objects::PointSet& ps) {
  if (ps.points.empty()) throw ContractError("write_ply: empty point set");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_ply: cannot open " + path);
  out << "ply\nformat ascii 1.0\n";
  out << "element vertex " << ps.points.size() << "\n";
  out << "property float x\nproperty float y\nproperty float z\n";
  out << "property float intensity\nend_header\n";
  char line[160];
  for (const objects::Point& p : ps.points) {
    std::snprintf(line, sizeof(line), "%.6f %.6f %.6f %.6f\n", p.x, p.y, p.z, p.i);
    out << line;
  }
  if (!out) throw std::runtime_error("write_ply: write failed " + path);
}

void write_svg(const std::string& path, const objects::PointSet& ps,
               const objects::BoxAnnotation* box) {
  if (ps.points.empty()) throw ContractError("write_svg: empty point set");
  double xmin = 1e30, xmax = -1e30, ymin = 1e30, ymax = -1e30, zmin = 1e30,
         zmax = -1e30;
  for (const objects::Point& p : ps.points) {
    xmin = std::min(xmin, p.x);
    xmax = std::max(xmax, p.x);
    ymin = std::min(ymin, p.y);
    ymax = std::max(ymax, p.y);
    zmin = std::min(zmin, p.z);
    zmax = std::max(zmax, p.z);
  }
  if (box) {
    const double r = 0.5 * std::hypot(box->l, box->w);
    xmin = std::min(xmin, box->cx - r);
    xmax = std::max(xmax, box->cx + r);
    ymin = std::min(ymin, box->cy - r);
    ymax = std::max(ymax, box->cy + r);
  }
  const double panel = 380;
  const Panel top = fit_panel(10, 30, panel, xmin, xmax, ymin, ymax);
  const Panel side = fit_panel(410, 30, panel, xmin, xmax, zmin, zmax);

  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_svg: cannot open " + path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"800\" height=\"430\" "
         "viewBox=\"0 0 800 430\">\n";
  out << "<rect width=\"800\" height=\"430\" fill=\"#101318\"/>\n";
  out << "<text x=\"14\" y=\"20\" fill=\"#ccc\" font-size=\"13\" "
         "font-family=\"monospace\">top (x/y)</text>\n";
  out << "<text x=\"414\" y=\"20\" fill=\"#ccc\" font-size=\"13\" "
         "font-family=\"monospace\">side (x/z)</text>\n";
  char buf[256];
  for (const Panel* p : {&top, &side}) {
    std::snprintf(buf, sizeof(buf),
                  "<rect x=\"%.1f\" y=\"%.1f\" width=\"%.1f\" height=\"%.1f\" "
                  "fill=\"none\" stroke=\"#444\"/>\n",
                  p->x0, p->y0, p->size, p->size);
    out << buf;
  }
  if (box) {
    const double c = std::cos(box->yaw), s = std::sin(box->yaw);
    const double hl = box->l / 2, hw = box->w / 2;
    double cx[4], cy[4];
    const double sx[4] = {hl, hl, -hl, -hl};
    const double sy[4] = {hw, -hw, -hw, hw};
    for (int k = 0; k < 4; ++k) {
      cx[k] = box->cx + c * sx[k] - s * sy[k];
      cy[k] = box->cy + s * sx[k] + c * sy[k];
    }
    out << "<polygon points=\"";
    for (int k = 0; k < 4; ++k) {
      std::snprintf(buf, sizeof(buf), "%.1f,%.1f ", px(top, cx[k]), py(top, cy[k]));
      out << buf;
    }
    out << "\" fill=\"none\" stroke=\"#7a7\" stroke-width=\"1.2\"/>\n";
  }
  for (const objects::Point& p : ps.points) {
    int r, g, b;
    colormap(p.i, r, g, b);
    std::snprintf(buf, sizeof(buf),
                  "<circle cx=\"%.1f\" cy=\"%.1f\" r=\"2\" fill=\"rgb(%d,%d,%d)\"/>\n",
                  px(top, p.x), py(top, p.y), r, g, b);
    out << buf;
    std::snprintf(buf, sizeof(buf),
                  "<circle cx=\"%.1f\" cy=\"%.1f\" r=\"2\" fill=\"rgb(%d,%d,%d)\"/>\n",
                  px(side, p.x), py(side, p.z), r, g, b);
    out << buf;
  }
  out << "</svg>\n";
  if (!out) throw std::runtime_error("write_svg: write failed " + path);
}

}  // namespace scandiff::render
