#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "hardylab/field.hpp"

namespace hardylab {

/// A point where the piecewise-linear interpolant of a 1D field equals t.
struct Crossing {
  double r = 0.0;
  int cell = 0;
};

/// Marching-squares segment inside one tensor cell.
struct Segment {
  Vec2 a{}, b{};
  int cell = 0;

  double length() const { return std::hypot(b[0] - a[0], b[1] - a[1]); }
  Vec2 midpoint() const { return {0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])}; }
};

struct LevelSet {
  double t = 0.0;
  std::vector<Crossing> crossings;  // 1D meshes
  std::vector<Segment> segments;    // tensor2d meshes
  /// Some crossing lies in a cell that touches a boundary node.
  bool touches_boundary = false;

  double length() const {
    double s = 0.0;
    for (const auto& seg : segments) s += seg.length();
    return s;
  }
};

namespace detail {

inline bool cell_touches_boundary(const Mesh& m, std::size_t c) {
  for (int v : m.cell_nodes(c))
    if (m.is_boundary(v)) return true;
  return false;
}

}  // namespace detail

/// {f = t} for the nodal interpolant of f: points on 1D meshes, segments on tensor grids.
inline LevelSet level_set(const ScalarField& f, double t) {
  detail::require(f.min() < t && t < f.max(), "level_set needs min f < t < max f");
  const Mesh& m = f.mesh();
  LevelSet out;
  out.t = t;
  if (m.one_dimensional()) {
    for (std::size_t c = 0; c < m.cell_count(); ++c) {
      const int a = m.cells[c][0], b = m.cells[c][1];
      const double fa = f[a], fb = f[b];
      if ((fa < t) == (fb < t)) continue;
      const double s = (t - fa) / (fb - fa);
      out.crossings.push_back({m.x[a] + s * (m.x[b] - m.x[a]), static_cast<int>(c)});
      if (detail::cell_touches_boundary(m, c)) out.touches_boundary = true;
    }
    return out;
  }

  for (std::size_t c = 0; c < m.cell_count(); ++c) {
    const auto& q = m.cells[c];  // corners 00, 10, 11, 01 in cyclic order
    std::array<double, 4> v{f[q[0]], f[q[1]], f[q[2]], f[q[3]]};
    std::array<bool, 4> below{v[0] < t, v[1] < t, v[2] < t, v[3] < t};
    std::array<Vec2, 4> cross{};
    std::array<bool, 4> has{};
    int count = 0;
    for (int e = 0; e < 4; ++e) {
      const int a = e, b = (e + 1) % 4;
      if (below[a] == below[b]) continue;
      const double s = (t - v[a]) / (v[b] - v[a]);
      const Vec2 pa = m.node_point(q[a]), pb = m.node_point(q[b]);
      cross[e] = {pa[0] + s * (pb[0] - pa[0]), pa[1] + s * (pb[1] - pa[1])};
      has[e] = true;
      ++count;
    }
    if (count == 0) continue;
    const int ci = static_cast<int>(c);
    if (count == 2) {
      int e0 = -1, e1 = -1;
      for (int e = 0; e < 4; ++e)
        if (has[e]) (e0 < 0 ? e0 : e1) = e;
      out.segments.push_back({cross[e0], cross[e1], ci});
    } else {
      // saddle: resolve with the cell-centre value
      const bool centre_below = 0.25 * (v[0] + v[1] + v[2] + v[3]) < t;
      if (centre_below == below[0]) {
        out.segments.push_back({cross[0], cross[1], ci});
        out.segments.push_back({cross[2], cross[3], ci});
      } else {
        out.segments.push_back({cross[3], cross[0], ci});
        out.segments.push_back({cross[1], cross[2], ci});
      }
    }
    if (detail::cell_touches_boundary(m, c)) out.touches_boundary = true;
  }
  return out;
}

/// Value of the bilinear interpolant of a tensor cell at point p.
inline double bilinear_value(const ScalarField& f, std::size_t cell, Vec2 p) {
  const Mesh& m = f.mesh();
  const auto& q = m.cells[cell];
  const double sx = (p[0] - m.x[q[0]]) / m.hx, sy = (p[1] - m.y[q[0]]) / m.hy;
  return f[q[0]] * (1 - sx) * (1 - sy) + f[q[1]] * sx * (1 - sy) + f[q[2]] * sx * sy + f[q[3]] * (1 - sx) * sy;
}

/// Gradient of the bilinear interpolant of a tensor cell at point p.
inline Vec2 bilinear_gradient(const ScalarField& f, std::size_t cell, Vec2 p) {
  const Mesh& m = f.mesh();
  const auto& q = m.cells[cell];
  const double sx = (p[0] - m.x[q[0]]) / m.hx, sy = (p[1] - m.y[q[0]]) / m.hy;
  const double f00 = f[q[0]], f10 = f[q[1]], f11 = f[q[2]], f01 = f[q[3]];
  return {((f10 - f00) * (1 - sy) + (f11 - f01) * sy) / m.hx,
          ((f01 - f00) * (1 - sx) + (f11 - f10) * sx) / m.hy};
}

}  // namespace hardylab
