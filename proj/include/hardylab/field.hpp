#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdio>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hardylab/error.hpp"
#include "hardylab/mesh.hpp"

namespace hardylab {

struct on_nodes {
  static std::size_t size(const Mesh& m) { return m.node_count(); }
  static constexpr const char* name = "node";
};
struct on_cells {
  static std::size_t size(const Mesh& m) { return m.cell_count(); }
  static constexpr const char* name = "cell";
};

/// Real values attached to the nodes or cells of a mesh. Immutable once built.
template <class Location>
class Field {
 public:
  Field() = default;
  Field(MeshPtr mesh, std::vector<double> values) : mesh_(std::move(mesh)), values_(std::move(values)) {
    detail::require(mesh_ != nullptr, "field needs a mesh");
    detail::require(values_.size() == Location::size(*mesh_),
                    std::string("field length does not match the ") + Location::name + " count");
    for (double v : values_) detail::require(std::isfinite(v), "field values must be finite");
  }

  static Field zeros(MeshPtr mesh) {
    const std::size_t n = Location::size(*mesh);
    return Field(std::move(mesh), std::vector<double>(n, 0.0));
  }
  static Field constant(MeshPtr mesh, double v) {
    const std::size_t n = Location::size(*mesh);
    return Field(std::move(mesh), std::vector<double>(n, v));
  }

  const Mesh& mesh() const { return *mesh_; }
  const MeshPtr& mesh_ptr() const { return mesh_; }
  std::span<const double> values() const { return values_; }
  const std::vector<double>& vector() const { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }
  std::size_t size() const { return values_.size(); }

  double max() const { return *std::max_element(values_.begin(), values_.end()); }
  double min() const { return *std::min_element(values_.begin(), values_.end()); }
  double max_abs() const {
    double m = 0.0;
    for (double v : values_) m = std::max(m, std::abs(v));
    return m;
  }

  /// Pointwise map; the result lives on the same mesh.
  template <class F>
  Field map(F&& f) const {
    std::vector<double> out(values_.size());
    for (std::size_t i = 0; i < values_.size(); ++i) out[i] = f(values_[i]);
    return Field(mesh_, std::move(out));
  }

  Field scaled(double s) const {
    return map([s](double v) { return s * v; });
  }

 private:
  MeshPtr mesh_;
  std::vector<double> values_;
};

using ScalarField = Field<on_nodes>;
using CellField = Field<on_cells>;

/// One gradient per cell: the midpoint (bilinear) gradient on tensor cells.
struct VectorFieldOnCells {
  MeshPtr mesh;
  int dim = 1;
  std::vector<Vec2> values;
};

namespace detail {

template <class F>
double call_at(F& f, const Mesh& m, Vec2 p) {
  if constexpr (std::invocable<F&, double, double>) {
    return f(p[0], p[1]);
  } else {
    (void)m;
    return f(p[0]);
  }
}

inline void same_mesh(const Mesh& a, const Mesh& b, const char* what) {
  require(&a == &b, std::string(what) + ": fields live on different meshes");
}

}  // namespace detail

/// Samples f at the nodes. f takes (r) on 1D meshes or (x, y) on tensor meshes.
template <class F>
ScalarField sample_nodes(const MeshPtr& mesh, F&& f) {
  std::vector<double> v(mesh->node_count());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = detail::call_at(f, *mesh, mesh->node_point(i));
  return ScalarField(mesh, std::move(v));
}

/// Samples f at the cell centres.
template <class F>
CellField sample_cells(const MeshPtr& mesh, F&& f) {
  std::vector<double> v(mesh->cell_count());
  for (std::size_t c = 0; c < v.size(); ++c) v[c] = detail::call_at(f, *mesh, mesh->cell_center(c));
  return CellField(mesh, std::move(v));
}

/// Gradient of a linear element interpolant.
inline Vec2 element_gradient(const Element& e, std::span<const double> u) {
  Vec2 g{0.0, 0.0};
  for (int j = 0; j < e.count; ++j) {
    g[0] += e.dchi[j][0] * u[e.node[j]];
    g[1] += e.dchi[j][1] * u[e.node[j]];
  }
  return g;
}

inline double element_average(const Element& e, std::span<const double> u) {
  double s = 0.0;
  for (int j = 0; j < e.count; ++j) s += u[e.node[j]];
  return s / e.count;
}

inline VectorFieldOnCells gradient(const ScalarField& f) {
  const Mesh& m = f.mesh();
  VectorFieldOnCells out{f.mesh_ptr(), m.one_dimensional() ? 1 : 2, std::vector<Vec2>(m.cell_count(), Vec2{0, 0})};
  std::vector<double> wsum(m.cell_count(), 0.0);
  for (const Element& e : m.elements) {
    const Vec2 g = element_gradient(e, f.values());
    out.values[e.cell][0] += e.weight * g[0];
    out.values[e.cell][1] += e.weight * g[1];
    wsum[e.cell] += e.weight;
  }
  for (std::size_t c = 0; c < m.cell_count(); ++c) {
    out.values[c][0] /= wsum[c];
    out.values[c][1] /= wsum[c];
  }
  return out;
}

/// Piecewise-linear interpolation of a field on a 1D mesh; clamps outside the hull.
inline double interpolate(const ScalarField& f, double r) {
  const Mesh& m = f.mesh();
  detail::require(m.one_dimensional(), "interpolate(f, r) needs a 1D mesh");
  if (r <= m.x.front()) return f[0];
  if (r >= m.x.back()) return f[m.node_count() - 1];
  const std::size_t b = std::upper_bound(m.x.begin(), m.x.end(), r) - m.x.begin();
  const std::size_t a = b - 1;
  const double s = (r - m.x[a]) / (m.x[b] - m.x[a]);
  return f[a] + s * (f[b] - f[a]);
}

/// Sum over elements of weight * element mean: the mass the load vector sees.
inline double element_integral(const Mesh& m, std::span<const double> u) {
  double s = 0.0;
  for (const Element& e : m.elements) s += e.weight * element_average(e, u);
  return s;
}

/// Sum of value * cell measure.
inline double integrate(std::span<const double> cellwise, const Mesh& mesh) {
  detail::require(cellwise.size() == mesh.cell_count(), "integrate needs one value per cell");
  double s = 0.0;
  for (std::size_t c = 0; c < cellwise.size(); ++c) s += cellwise[c] * mesh.cell_measures[c];
  return s;
}

inline double integrate(const CellField& f) { return integrate(f.values(), f.mesh()); }

/// Per-cell mean of the nodal values.
inline CellField cell_average(const ScalarField& f) {
  const Mesh& m = f.mesh();
  std::vector<double> v(m.cell_count());
  for (std::size_t c = 0; c < v.size(); ++c) {
    double s = 0.0;
    const auto nodes = m.cell_nodes(c);
    for (int n : nodes) s += f[n];
    v[c] = s / nodes.size();
  }
  return CellField(f.mesh_ptr(), std::move(v));
}

/// Integral of every nodal hat function under the one-point element rule.
inline std::vector<double> lumped_mass(const Mesh& m) {
  std::vector<double> mass(m.node_count(), 0.0);
  for (const Element& e : m.elements)
    for (int j = 0; j < e.count; ++j) mass[e.node[j]] += e.weight / e.count;
  return mass;
}

/// Copies parent-mesh values onto a mesh cut from it.
inline ScalarField restrict_to(const ScalarField& parent_field, const MeshPtr& sub) {
  if (sub.get() == &parent_field.mesh()) return parent_field;
  detail::require(!sub->parent_node.empty(), "restrict_to needs a sub-mesh");
  std::vector<double> v(sub->node_count());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = parent_field[sub->parent_node[i]];
  return ScalarField(sub, std::move(v));
}

inline CellField restrict_to(const CellField& parent_field, const MeshPtr& sub) {
  if (sub.get() == &parent_field.mesh()) return parent_field;
  detail::require(!sub->parent_cell.empty(), "restrict_to needs a sub-mesh");
  std::vector<double> v(sub->cell_count());
  for (std::size_t c = 0; c < v.size(); ++c) v[c] = parent_field[sub->parent_cell[c]];
  return CellField(sub, std::move(v));
}

/// Extends sub-mesh values to the parent mesh by zero.
inline ScalarField extend_to(const ScalarField& sub_field, const MeshPtr& parent) {
  if (parent.get() == &sub_field.mesh()) return sub_field;
  const Mesh& sub = sub_field.mesh();
  detail::require(sub.parent_node.size() == sub.node_count(), "extend_to needs a sub-mesh");
  std::vector<double> v(parent->node_count(), 0.0);
  for (std::size_t i = 0; i < sub.node_count(); ++i) v[sub.parent_node[i]] = sub_field[i];
  return ScalarField(parent, std::move(v));
}

// ---------------------------------------------------------------------------
// CSV snapshots. Frozen column order:
//   1D meshes:  node,r,tag,<columns...>     (r is x on interval meshes)
//   tensor2d:   node,x,y,tag,<columns...>
//   cells:      cell,<center coords>,measure,<columns...>

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

using NamedColumn = std::pair<std::string, std::span<const double>>;

inline void write_node_csv(std::ostream& os, const Mesh& m, const std::vector<NamedColumn>& columns) {
  for (const auto& [name, col] : columns)
    detail::require(col.size() == m.node_count(), "node CSV column '" + name + "' has the wrong length");
  os << (m.one_dimensional() ? "node,r,tag" : "node,x,y,tag");
  for (const auto& c : columns) os << ',' << c.first;
  os << '\n';
  for (std::size_t i = 0; i < m.node_count(); ++i) {
    os << i << ',' << format_double(m.x[i]);
    if (!m.one_dimensional()) os << ',' << format_double(m.y[i]);
    os << ',' << to_string(m.tags[i]);
    for (const auto& c : columns) os << ',' << format_double(c.second[i]);
    os << '\n';
  }
}

inline void write_cell_csv(std::ostream& os, const Mesh& m, const std::vector<NamedColumn>& columns) {
  for (const auto& [name, col] : columns)
    detail::require(col.size() == m.cell_count(), "cell CSV column '" + name + "' has the wrong length");
  os << (m.one_dimensional() ? "cell,r_mid,measure" : "cell,x_mid,y_mid,measure");
  for (const auto& c : columns) os << ',' << c.first;
  os << '\n';
  for (std::size_t c = 0; c < m.cell_count(); ++c) {
    const Vec2 p = m.cell_center(c);
    os << c << ',' << format_double(p[0]);
    if (!m.one_dimensional()) os << ',' << format_double(p[1]);
    os << ',' << format_double(m.cell_measures[c]);
    for (const auto& col : columns) os << ',' << format_double(col.second[c]);
    os << '\n';
  }
}

}  // namespace hardylab
