#pragma once

// Meshes for punctured radial domains, plain intervals and 2D tensor grids.
//
// Values live at nodes; gradients are constant on elements. A 1D cell is a
// single element; a tensor cell is split along its (0,0)-(1,1) diagonal into
// two linear triangles whose averaged gradient is the bilinear midpoint
// gradient of the cell.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numbers>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "hardylab/error.hpp"

namespace hardylab {

enum class MeshKind { radial, interval, tensor2d };
enum class NodeTag : std::uint8_t { interior, outer_boundary, inner_boundary };

using Vec2 = std::array<double, 2>;

inline const char* to_string(MeshKind k) {
  switch (k) {
    case MeshKind::radial: return "radial";
    case MeshKind::interval: return "interval";
    case MeshKind::tensor2d: return "tensor2d";
  }
  return "?";
}

inline const char* to_string(NodeTag t) {
  switch (t) {
    case NodeTag::interior: return "interior";
    case NodeTag::outer_boundary: return "outer_boundary";
    case NodeTag::inner_boundary: return "inner_boundary";
  }
  return "?";
}

/// Linear finite element carried by a cell: a segment (2 nodes) or a triangle (3 nodes).
struct Element {
  std::array<int, 3> node{};
  int count = 0;
  /// Gradient of each nodal hat function restricted to the element.
  std::array<Vec2, 3> dchi{};
  double weight = 0.0;
  int cell = 0;
};

/// Axis-aligned box; for 1D meshes only [x0, x1] is used.
struct Box {
  double x0 = 0.0, x1 = 0.0, y0 = 0.0, y1 = 0.0;

  /// Strictly inside, by more than tol (grid nodes on the rim must stay outside).
  bool contains_open(double x, double y, double tol = 0.0) const {
    return x > x0 + tol && x < x1 - tol && y > y0 + tol && y < y1 - tol;
  }
};

struct Grading {
  enum class Kind { uniform, geometric, log_uniform };
  Kind kind = Kind::uniform;
  double ratio = 1.0;

  static Grading uniform() { return {}; }
  /// Successive spacings grow by `ratio`.
  static Grading geometric(double ratio) { return {Kind::geometric, ratio}; }
  /// Nodes equispaced in log r (a constant ratio between neighbouring radii).
  static Grading log_uniform() { return {Kind::log_uniform, 1.0}; }
};

/// Surface area of the unit sphere in R^n.
inline double unit_sphere_area(int n) {
  const double half = 0.5 * n;
  return 2.0 * std::pow(std::numbers::pi, half) / std::tgamma(half);
}

struct Mesh {
  MeshKind kind = MeshKind::interval;
  /// Ambient dimension entering the radial weight; 1 for intervals, 2 for tensor grids.
  int n_dim = 1;
  std::vector<double> x;  // r for radial meshes
  std::vector<double> y;  // tensor2d only
  std::vector<NodeTag> tags;
  /// 1D: {left, right, -1, -1}; tensor: {n00, n10, n11, n01}.
  std::vector<std::array<int, 4>> cells;
  std::vector<double> cell_measures;
  std::vector<Element> elements;

  // tensor2d grid bookkeeping
  int nx = 0, ny = 0;
  double x_lo = 0.0, y_lo = 0.0, hx = 0.0, hy = 0.0;
  std::vector<int> node_i, node_j;
  std::vector<int> cell_i, cell_j;
  std::optional<Box> hole;

  // maps into the mesh this one was cut from (empty for root meshes)
  std::vector<int> parent_node;
  std::vector<int> parent_cell;

  std::string id;

  std::size_t node_count() const { return x.size(); }
  std::size_t cell_count() const { return cells.size(); }
  bool one_dimensional() const { return kind != MeshKind::tensor2d; }
  int nodes_per_cell() const { return one_dimensional() ? 2 : 4; }
  bool is_boundary(std::size_t i) const { return tags[i] != NodeTag::interior; }

  Vec2 node_point(std::size_t i) const {
    return {x[i], one_dimensional() ? 0.0 : y[i]};
  }

  std::span<const int> cell_nodes(std::size_t c) const {
    return {cells[c].data(), static_cast<std::size_t>(nodes_per_cell())};
  }

  Vec2 cell_center(std::size_t c) const {
    const auto nodes = cell_nodes(c);
    Vec2 m{0.0, 0.0};
    for (int v : nodes) {
      m[0] += x[v];
      if (!one_dimensional()) m[1] += y[v];
    }
    m[0] /= nodes.size();
    m[1] /= nodes.size();
    return m;
  }

  /// Characteristic length of a cell (Delta r, or the larger side).
  double cell_size(std::size_t c) const {
    if (one_dimensional()) return x[cells[c][1]] - x[cells[c][0]];
    return std::max(hx, hy);
  }

  std::vector<int> boundary_nodes() const {
    std::vector<int> out;
    for (std::size_t i = 0; i < tags.size(); ++i)
      if (is_boundary(i)) out.push_back(static_cast<int>(i));
    return out;
  }
};

using MeshPtr = std::shared_ptr<const Mesh>;

namespace detail {

inline std::string fmt_num(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

inline void finish_1d(Mesh& m) {
  const std::size_t n_cells = m.x.size() - 1;
  const double omega = m.kind == MeshKind::radial ? unit_sphere_area(m.n_dim) : 1.0;
  m.cells.resize(n_cells);
  m.cell_measures.resize(n_cells);
  m.elements.resize(n_cells);
  for (std::size_t c = 0; c < n_cells; ++c) {
    const int a = static_cast<int>(c), b = static_cast<int>(c + 1);
    const double h = m.x[b] - m.x[a];
    require(h > 0.0, "mesh nodes must be strictly increasing");
    double measure = h;
    if (m.kind == MeshKind::radial) {
      const double mid = 0.5 * (m.x[a] + m.x[b]);
      measure = omega * std::pow(mid, m.n_dim - 1) * h;
    }
    require(measure > 0.0 && std::isfinite(measure), "cell measure must be positive and finite");
    m.cells[c] = {a, b, -1, -1};
    m.cell_measures[c] = measure;
    Element& e = m.elements[c];
    e.node = {a, b, -1};
    e.count = 2;
    e.dchi[0] = {-1.0 / h, 0.0};
    e.dchi[1] = {1.0 / h, 0.0};
    e.weight = measure;
    e.cell = static_cast<int>(c);
  }
}

inline void add_tensor_cell_elements(Mesh& m, std::size_t c) {
  const auto& q = m.cells[c];
  const double hx = m.hx, hy = m.hy, half = 0.5 * m.cell_measures[c];
  // lower triangle (n00, n10, n11)
  Element lo;
  lo.node = {q[0], q[1], q[2]};
  lo.count = 3;
  lo.dchi = {Vec2{-1.0 / hx, 0.0}, Vec2{1.0 / hx, -1.0 / hy}, Vec2{0.0, 1.0 / hy}};
  lo.weight = half;
  lo.cell = static_cast<int>(c);
  // upper triangle (n00, n11, n01)
  Element up;
  up.node = {q[0], q[2], q[3]};
  up.count = 3;
  up.dchi = {Vec2{0.0, -1.0 / hy}, Vec2{1.0 / hx, 0.0}, Vec2{-1.0 / hx, 1.0 / hy}};
  up.weight = half;
  up.cell = static_cast<int>(c);
  m.elements.push_back(lo);
  m.elements.push_back(up);
}

inline std::vector<double> graded_nodes(double a, double b, int num_cells, const Grading& g) {
  std::vector<double> nodes(num_cells + 1);
  switch (g.kind) {
    case Grading::Kind::uniform: {
      const double h = (b - a) / num_cells;
      for (int i = 0; i <= num_cells; ++i) nodes[i] = a + i * h;
      break;
    }
    case Grading::Kind::geometric: {
      require(g.ratio > 0.0, "geometric grading ratio must be positive");
      if (std::abs(g.ratio - 1.0) < 1e-14) return graded_nodes(a, b, num_cells, Grading::uniform());
      const double q = g.ratio;
      const double h0 = (b - a) * (q - 1.0) / (std::pow(q, num_cells) - 1.0);
      for (int i = 0; i <= num_cells; ++i) nodes[i] = a + h0 * (std::pow(q, i) - 1.0) / (q - 1.0);
      break;
    }
    case Grading::Kind::log_uniform: {
      require(a > 0.0, "log-uniform grading needs a positive lower bound");
      const double span = std::log(b / a);
      for (int i = 0; i <= num_cells; ++i) nodes[i] = a * std::exp(span * i / num_cells);
      break;
    }
  }
  nodes.front() = a;
  nodes.back() = b;
  return nodes;
}

}  // namespace detail

/// Radial mesh of the shell r_min <= |x| <= r_max in R^n; cell measures carry
/// the factor omega_{n-1} r_mid^{n-1}.
inline MeshPtr build_radial_mesh(int n_dim, double r_min, double r_max, int num_cells,
                                 Grading grading = Grading::uniform()) {
  detail::require(r_min > 0.0,
                  "radial mesh needs r_min > 0 (punctured-domain meshes never touch the singularity)");
  detail::require(r_min < r_max, "radial mesh needs r_min < r_max");
  detail::require(num_cells >= 8, "radial mesh needs at least 8 cells");
  detail::require(n_dim >= 2, "radial mesh needs ambient dimension n >= 2");
  auto m = std::make_shared<Mesh>();
  m->kind = MeshKind::radial;
  m->n_dim = n_dim;
  m->x = detail::graded_nodes(r_min, r_max, num_cells, grading);
  m->tags.assign(m->x.size(), NodeTag::interior);
  m->tags.front() = NodeTag::inner_boundary;
  m->tags.back() = NodeTag::outer_boundary;
  detail::finish_1d(*m);
  m->id = "radial(n=" + std::to_string(n_dim) + ",[" + detail::fmt_num(r_min) + "," +
          detail::fmt_num(r_max) + "],N=" + std::to_string(num_cells) + ")";
  return m;
}

/// Plain 1D interval (x_min, x_max) with Lebesgue measure; both ends are outer boundary.
inline MeshPtr build_interval_mesh(double x_min, double x_max, int num_cells,
                                   Grading grading = Grading::uniform()) {
  detail::require(x_min < x_max, "interval mesh needs x_min < x_max");
  detail::require(num_cells >= 8, "interval mesh needs at least 8 cells");
  auto m = std::make_shared<Mesh>();
  m->kind = MeshKind::interval;
  m->n_dim = 1;
  m->x = detail::graded_nodes(x_min, x_max, num_cells, grading);
  m->tags.assign(m->x.size(), NodeTag::interior);
  m->tags.front() = NodeTag::outer_boundary;
  m->tags.back() = NodeTag::outer_boundary;
  detail::finish_1d(*m);
  m->id = "interval([" + detail::fmt_num(x_min) + "," + detail::fmt_num(x_max) +
          "],N=" + std::to_string(num_cells) + ")";
  return m;
}

/// Tensor grid on x_bounds x y_bounds. An optional hole removes the nodes
/// strictly inside it; nodes on its rim become inner_boundary.
inline MeshPtr build_tensor_mesh(std::array<double, 2> x_bounds, std::array<double, 2> y_bounds,
                                 int nx, int ny, std::optional<Box> hole = std::nullopt) {
  detail::require(nx >= 8 && ny >= 8, "tensor mesh needs nx, ny >= 8");
  detail::require(x_bounds[0] < x_bounds[1] && y_bounds[0] < y_bounds[1],
                  "tensor mesh bounds are degenerate");
  if (hole) {
    detail::require(hole->x0 < hole->x1 && hole->y0 < hole->y1, "hole box is degenerate");
    detail::require(hole->x0 > x_bounds[0] && hole->x1 < x_bounds[1] && hole->y0 > y_bounds[0] &&
                        hole->y1 < y_bounds[1],
                    "hole must lie strictly inside the mesh bounds");
  }
  auto m = std::make_shared<Mesh>();
  m->kind = MeshKind::tensor2d;
  m->n_dim = 2;
  m->nx = nx;
  m->ny = ny;
  m->x_lo = x_bounds[0];
  m->y_lo = y_bounds[0];
  m->hx = (x_bounds[1] - x_bounds[0]) / nx;
  m->hy = (y_bounds[1] - y_bounds[0]) / ny;
  m->hole = hole;

  auto gx = [&](int i) { return i == nx ? x_bounds[1] : x_bounds[0] + i * m->hx; };
  auto gy = [&](int j) { return j == ny ? y_bounds[1] : y_bounds[0] + j * m->hy; };
  auto grid = [&](int i, int j) { return j * (nx + 1) + i; };

  std::vector<char> keep((nx + 1) * (ny + 1), 1);
  const double snap = 1e-9 * std::min(m->hx, m->hy);
  if (hole)
    for (int j = 0; j <= ny; ++j)
      for (int i = 0; i <= nx; ++i)
        if (hole->contains_open(gx(i), gy(j), snap)) keep[grid(i, j)] = 0;

  std::vector<char> active(nx * ny, 0);
  std::vector<char> used((nx + 1) * (ny + 1), 0);
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      bool ok = keep[grid(i, j)] && keep[grid(i + 1, j)] && keep[grid(i + 1, j + 1)] &&
                keep[grid(i, j + 1)];
      if (ok && hole) ok = !hole->contains_open(0.5 * (gx(i) + gx(i + 1)), 0.5 * (gy(j) + gy(j + 1)));
      if (!ok) continue;
      active[j * nx + i] = 1;
      used[grid(i, j)] = used[grid(i + 1, j)] = used[grid(i + 1, j + 1)] = used[grid(i, j + 1)] = 1;
    }

  std::vector<int> id((nx + 1) * (ny + 1), -1);
  for (int j = 0; j <= ny; ++j)
    for (int i = 0; i <= nx; ++i) {
      if (!used[grid(i, j)]) continue;
      id[grid(i, j)] = static_cast<int>(m->x.size());
      m->x.push_back(gx(i));
      m->y.push_back(gy(j));
      m->node_i.push_back(i);
      m->node_j.push_back(j);
      NodeTag tag = NodeTag::interior;
      if (i == 0 || i == nx || j == 0 || j == ny) {
        tag = NodeTag::outer_boundary;
      } else {
        for (int dj = -1; dj <= 0; ++dj)
          for (int di = -1; di <= 0; ++di)
            if (!active[(j + dj) * nx + (i + di)]) tag = NodeTag::inner_boundary;
      }
      m->tags.push_back(tag);
    }

  const double measure = m->hx * m->hy;
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      if (!active[j * nx + i]) continue;
      m->cells.push_back({id[grid(i, j)], id[grid(i + 1, j)], id[grid(i + 1, j + 1)], id[grid(i, j + 1)]});
      m->cell_measures.push_back(measure);
      m->cell_i.push_back(i);
      m->cell_j.push_back(j);
      detail::add_tensor_cell_elements(*m, m->cells.size() - 1);
    }
  m->id = "tensor2d([" + detail::fmt_num(x_bounds[0]) + "," + detail::fmt_num(x_bounds[1]) + "]x[" +
          detail::fmt_num(y_bounds[0]) + "," + detail::fmt_num(y_bounds[1]) + "]," +
          std::to_string(nx) + "x" + std::to_string(ny) + (hole ? ",hole" : "") + ")";
  return m;
}

namespace detail {

inline MeshPtr submesh_1d(const MeshPtr& parent, int lo, int hi) {
  auto m = std::make_shared<Mesh>();
  m->kind = parent->kind;
  m->n_dim = parent->n_dim;
  m->x.assign(parent->x.begin() + lo, parent->x.begin() + hi + 1);
  m->tags.assign(m->x.size(), NodeTag::interior);
  m->tags.front() = lo == 0 ? parent->tags.front()
                            : (parent->kind == MeshKind::radial ? NodeTag::inner_boundary
                                                                : NodeTag::outer_boundary);
  m->tags.back() = NodeTag::outer_boundary;
  finish_1d(*m);
  for (int i = lo; i <= hi; ++i) m->parent_node.push_back(i);
  for (int c = lo; c < hi; ++c) m->parent_cell.push_back(c);
  m->id = parent->id + "/sub[" + std::to_string(lo) + "," + std::to_string(hi) + "]";
  return m;
}

inline MeshPtr submesh_tensor(const MeshPtr& parent, int i0, int i1, int j0, int j1) {
  auto m = std::make_shared<Mesh>();
  const Mesh& P = *parent;
  m->kind = MeshKind::tensor2d;
  m->n_dim = 2;
  m->nx = i1 - i0;
  m->ny = j1 - j0;
  m->x_lo = P.x_lo + i0 * P.hx;
  m->y_lo = P.y_lo + j0 * P.hy;
  m->hx = P.hx;
  m->hy = P.hy;
  m->hole = P.hole;
  std::vector<int> keep_cell;
  std::vector<char> node_used(P.node_count(), 0);
  for (std::size_t c = 0; c < P.cell_count(); ++c) {
    if (P.cell_i[c] < i0 || P.cell_i[c] >= i1 || P.cell_j[c] < j0 || P.cell_j[c] >= j1) continue;
    keep_cell.push_back(static_cast<int>(c));
    for (int v : P.cells[c]) node_used[v] = 1;
  }
  std::vector<int> id(P.node_count(), -1);
  for (std::size_t v = 0; v < P.node_count(); ++v) {
    if (!node_used[v]) continue;
    id[v] = static_cast<int>(m->x.size());
    m->x.push_back(P.x[v]);
    m->y.push_back(P.y[v]);
    m->node_i.push_back(P.node_i[v] - i0);
    m->node_j.push_back(P.node_j[v] - j0);
    const bool on_box = P.node_i[v] == i0 || P.node_i[v] == i1 || P.node_j[v] == j0 || P.node_j[v] == j1;
    m->tags.push_back(on_box ? NodeTag::outer_boundary : P.tags[v]);
    m->parent_node.push_back(static_cast<int>(v));
  }
  for (int c : keep_cell) {
    const auto& q = P.cells[c];
    m->cells.push_back({id[q[0]], id[q[1]], id[q[2]], id[q[3]]});
    m->cell_measures.push_back(P.cell_measures[c]);
    m->cell_i.push_back(P.cell_i[c] - i0);
    m->cell_j.push_back(P.cell_j[c] - j0);
    m->parent_cell.push_back(c);
    add_tensor_cell_elements(*m, m->cells.size() - 1);
  }
  m->id = P.id + "/sub[" + std::to_string(i0) + ":" + std::to_string(i1) + "," + std::to_string(j0) +
          ":" + std::to_string(j1) + "]";
  return m;
}

}  // namespace detail

/// Default exhaustion core: the middle quarter of the domain (in log r for radial meshes).
inline Box default_core(const Mesh& m) {
  if (m.kind == MeshKind::radial) {
    const double la = std::log(m.x.front()), lb = std::log(m.x.back());
    const double mid = 0.5 * (la + lb), half = 0.125 * (lb - la);
    return {std::exp(mid - half), std::exp(mid + half), 0.0, 0.0};
  }
  if (m.kind == MeshKind::interval) {
    const double a = m.x.front(), b = m.x.back(), mid = 0.5 * (a + b), half = 0.125 * (b - a);
    return {mid - half, mid + half, 0.0, 0.0};
  }
  const double X1 = m.x_lo + m.nx * m.hx, Y1 = m.y_lo + m.ny * m.hy;
  const double cx = 0.5 * (m.x_lo + X1), cy = 0.5 * (m.y_lo + Y1);
  const double qx = 0.125 * (X1 - m.x_lo), qy = 0.125 * (Y1 - m.y_lo);
  return {cx - qx, cx + qx, cy - qy, cy + qy};
}

/// Level k of a K-step exhaustion: interpolates from `core` (geometrically in
/// r for radial meshes, linearly otherwise) out to the full mesh, snapping
/// outward to existing nodes. Level K is the full mesh; levels are nested.
inline MeshPtr exhaustion(const MeshPtr& mesh, int k, int K, std::optional<Box> core = std::nullopt) {
  detail::require(K >= 1 && k >= 1 && k <= K, "exhaustion needs 1 <= k <= K");
  if (k == K) return mesh;
  const Mesh& m = *mesh;
  const Box c = core.value_or(default_core(m));
  const double s = static_cast<double>(k) / K;
  if (m.one_dimensional()) {
    const double a = m.x.front(), b = m.x.back();
    detail::require(c.x0 >= a && c.x1 <= b && c.x0 < c.x1, "exhaustion core must lie inside the mesh");
    double lo_x, hi_x;
    if (m.kind == MeshKind::radial) {
      lo_x = c.x0 * std::pow(a / c.x0, s);
      hi_x = c.x1 * std::pow(b / c.x1, s);
    } else {
      lo_x = c.x0 + (a - c.x0) * s;
      hi_x = c.x1 + (b - c.x1) * s;
    }
    const int last = static_cast<int>(m.x.size()) - 1;
    auto it_lo = std::upper_bound(m.x.begin(), m.x.end(), lo_x + 1e-12 * std::abs(lo_x));
    int lo = std::max(0, static_cast<int>(it_lo - m.x.begin()) - 1);
    auto it_hi = std::lower_bound(m.x.begin(), m.x.end(), hi_x - 1e-12 * std::abs(hi_x));
    int hi = std::min(last, static_cast<int>(it_hi - m.x.begin()));
    if (hi - lo < 2) {
      lo = std::max(0, lo - 1);
      hi = std::min(last, hi + 1);
    }
    if (lo == 0 && hi == last) return mesh;
    return detail::submesh_1d(mesh, lo, hi);
  }
  const double ci0 = std::floor((c.x0 - m.x_lo) / m.hx + 1e-9);
  const double ci1 = std::ceil((c.x1 - m.x_lo) / m.hx - 1e-9);
  const double cj0 = std::floor((c.y0 - m.y_lo) / m.hy + 1e-9);
  const double cj1 = std::ceil((c.y1 - m.y_lo) / m.hy - 1e-9);
  const int i0 = std::max(0, static_cast<int>(std::floor(ci0 * (1.0 - s) + 1e-9)));
  const int i1 = std::min(m.nx, static_cast<int>(std::ceil(ci1 + (m.nx - ci1) * s - 1e-9)));
  const int j0 = std::max(0, static_cast<int>(std::floor(cj0 * (1.0 - s) + 1e-9)));
  const int j1 = std::min(m.ny, static_cast<int>(std::ceil(cj1 + (m.ny - cj1) * s - 1e-9)));
  if (i0 == 0 && j0 == 0 && i1 == m.nx && j1 == m.ny) return mesh;
  return detail::submesh_tensor(mesh, i0, i1, j0, j1);
}

}  // namespace hardylab
