#pragma once

// The energy of Q_{p,A,V} and its weak residual on linear elements.
//
// Every element contributes  w_e * (|g|_A^p + V |u_avg|^p)  where g is the
// (constant) element gradient and u_avg the mean of its nodal values. The
// residual is the exact derivative of the regularized energy
//   J(u) = sum_e w_e [ (|g|_A^2 + eps^2)^{p/2} / p + V (u_avg^2 + eps^2)^{p/2} / p ]
// with respect to each interior nodal value. The residual regularizes both
// powers the same way, |t|^{p-2} t -> (t^2 + eps^2)^{(p-2)/2} t, so that it
// stays the exact derivative of J; at p = 2 nothing changes.

#include <cmath>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hardylab/field.hpp"

namespace hardylab {

/// Symmetric 2x2 matrix; 1D meshes only use a11.
struct SymMat2 {
  double a11 = 1.0, a12 = 0.0, a22 = 1.0;

  Vec2 apply(Vec2 v) const { return {a11 * v[0] + a12 * v[1], a12 * v[0] + a22 * v[1]}; }
  double quad(Vec2 v) const { return a11 * v[0] * v[0] + 2.0 * a12 * v[0] * v[1] + a22 * v[1] * v[1]; }
  double det() const { return a11 * a22 - a12 * a12; }
  double min_eigenvalue() const {
    const double m = 0.5 * (a11 + a22), d = std::hypot(0.5 * (a11 - a22), a12);
    return m - d;
  }
};

/// Per-cell symmetric positive-definite coefficient matrix.
class MatrixField {
 public:
  MatrixField() = default;
  MatrixField(MeshPtr mesh, std::vector<SymMat2> values, std::string descriptor = "custom")
      : mesh_(std::move(mesh)), values_(std::move(values)), descriptor_(std::move(descriptor)) {
    detail::require(mesh_ != nullptr, "matrix field needs a mesh");
    detail::require(values_.size() == mesh_->cell_count(), "matrix field needs one entry per cell");
    theta_min_ = INFINITY;
    for (auto& a : values_) {
      if (mesh_->one_dimensional()) a = {a.a11, 0.0, a.a11};
      detail::require(std::isfinite(a.a11) && std::isfinite(a.a12) && std::isfinite(a.a22),
                      "matrix entries must be finite");
      const double lo = a.min_eigenvalue();
      detail::require(lo > 0.0, "matrix field is not positive definite");
      theta_min_ = std::min(theta_min_, lo);
    }
  }

  static MatrixField constant(MeshPtr mesh, SymMat2 a, std::string descriptor) {
    const std::size_t n = mesh->cell_count();
    return MatrixField(std::move(mesh), std::vector<SymMat2>(n, a), std::move(descriptor));
  }
  static MatrixField identity(MeshPtr mesh) { return constant(std::move(mesh), {}, "identity"); }
  static MatrixField diag(MeshPtr mesh, double a, double b) {
    return constant(std::move(mesh), {a, 0.0, b}, "diag(" + format_double(a) + "," + format_double(b) + ")");
  }
  /// R(theta) diag(a, b) R(theta)^T.
  static MatrixField rotated_diag(MeshPtr mesh, double a, double b, double theta) {
    const double c = std::cos(theta), s = std::sin(theta);
    const SymMat2 m{a * c * c + b * s * s, (a - b) * c * s, a * s * s + b * c * c};
    return constant(std::move(mesh), m,
                    "rotdiag(" + format_double(a) + "," + format_double(b) + "," + format_double(theta) + ")");
  }

  const Mesh& mesh() const { return *mesh_; }
  const MeshPtr& mesh_ptr() const { return mesh_; }
  const SymMat2& operator[](std::size_t c) const { return values_[c]; }
  double theta_min() const { return theta_min_; }
  const std::string& descriptor() const { return descriptor_; }

  /// Same matrices on a sub-mesh (or the parent mesh itself).
  MatrixField restricted(const MeshPtr& sub) const {
    if (sub.get() == mesh_.get()) return *this;
    detail::require(sub->parent_cell.size() == sub->cell_count(), "restricted() needs a sub-mesh");
    std::vector<SymMat2> v(sub->cell_count());
    for (std::size_t c = 0; c < v.size(); ++c) v[c] = values_[sub->parent_cell[c]];
    return MatrixField(sub, std::move(v), descriptor_);
  }

 private:
  MeshPtr mesh_;
  std::vector<SymMat2> values_;
  double theta_min_ = 0.0;
  std::string descriptor_;
};

/// |xi|_A = <A xi, xi>^{1/2}.
inline double norm_A(Vec2 xi, const SymMat2& a) {
  const double q = a.quad(xi);
  if (q < 0.0) throw ConstructionError("norm_A: quadratic form is negative (A is not SPD)");
  return std::sqrt(q);
}

/// (p/(p-1))^{p-1}
inline double c_p(double p) {
  detail::require(p > 1.0, "c_p needs p > 1");
  return std::pow(p / (p - 1.0), p - 1.0);
}

/// |t|^{p-2} t
inline double I_p(double t, double p) { return t == 0.0 ? 0.0 : std::copysign(std::pow(std::abs(t), p - 1.0), t); }

struct ProblemSpec {
  double p = 2.0;
  int n_dim = 1;
  MeshPtr mesh;
  MatrixField A;
  CellField V;
  double eps_reg = 1e-14;

  static ProblemSpec make(double p, const MeshPtr& mesh, MatrixField A, CellField V, double eps_reg = 1e-14) {
    ProblemSpec s;
    s.p = p;
    s.n_dim = mesh->n_dim;
    s.mesh = mesh;
    s.A = std::move(A);
    s.V = std::move(V);
    s.eps_reg = eps_reg;
    s.validate();
    return s;
  }
  /// p, A = identity, V = 0.
  static ProblemSpec laplacian(double p, const MeshPtr& mesh, double eps_reg = 1e-14) {
    return make(p, mesh, MatrixField::identity(mesh), CellField::zeros(mesh), eps_reg);
  }

  void validate() const {
    detail::require(p > 1.0, "p must exceed 1");
    detail::require(mesh != nullptr, "problem needs a mesh");
    detail::require(&A.mesh() == mesh.get() && &V.mesh() == mesh.get(), "A and V must live on the problem mesh");
    detail::require(eps_reg >= 0.0 && std::isfinite(eps_reg), "eps_reg must be >= 0");
  }

  ProblemSpec with_potential(CellField v) const {
    ProblemSpec s = *this;
    s.V = std::move(v);
    s.validate();
    return s;
  }
  ProblemSpec with_p(double q) const {
    ProblemSpec s = *this;
    s.p = q;
    s.validate();
    return s;
  }
  /// The same operator on a sub-mesh.
  ProblemSpec restricted(const MeshPtr& sub) const {
    ProblemSpec s = *this;
    s.mesh = sub;
    s.A = A.restricted(sub);
    s.V = restrict_to(V, sub);
    return s;
  }
};

struct EnergyBreakdown {
  double kinetic = 0.0;
  double potential = 0.0;
  double total = 0.0;
  double p = 0.0;
  std::string mesh_id;
};

inline void to_json(nlohmann::json& j, const EnergyBreakdown& e) {
  j = {{"kinetic", e.kinetic}, {"potential", e.potential}, {"total", e.total}, {"p", e.p}, {"mesh_id", e.mesh_id}};
}

namespace detail {

inline void check_same(const ProblemSpec& spec, const ScalarField& u, const char* what) {
  require(&u.mesh() == spec.mesh.get(), std::string(what) + ": field is not on the problem mesh");
}

/// Energy without the boundary check (solver use).
inline EnergyBreakdown energy_terms(const ProblemSpec& spec, std::span<const double> u) {
  const Mesh& m = *spec.mesh;
  EnergyBreakdown e;
  for (const Element& el : m.elements) {
    const Vec2 g = element_gradient(el, u);
    const double ub = element_average(el, u);
    e.kinetic += el.weight * std::pow(spec.A[el.cell].quad(g), 0.5 * spec.p);
    e.potential += el.weight * spec.V[el.cell] * std::pow(std::abs(ub), spec.p);
  }
  e.total = e.kinetic + e.potential;
  e.p = spec.p;
  e.mesh_id = m.id;
  return e;
}

/// Kinetic and potential parts of the weak residual at every node (boundary included).
struct ResidualParts {
  std::vector<double> kinetic, potential;
};

inline ResidualParts residual_parts(const ProblemSpec& spec, std::span<const double> u) {
  const Mesh& m = *spec.mesh;
  ResidualParts r{std::vector<double>(m.node_count(), 0.0), std::vector<double>(m.node_count(), 0.0)};
  const double eps2 = spec.eps_reg * spec.eps_reg, half = 0.5 * (spec.p - 2.0);
  for (const Element& el : m.elements) {
    const SymMat2& a = spec.A[el.cell];
    const Vec2 g = element_gradient(el, u);
    const Vec2 ag = a.apply(g);
    const double s = a.quad(g) + eps2;
    const double coef = s > 0.0 ? std::pow(s, half) : 0.0;
    const double ub = element_average(el, u);
    const double pot = spec.V[el.cell] * std::pow(ub * ub + eps2, half) * ub / el.count;
    for (int j = 0; j < el.count; ++j) {
      const Vec2& d = el.dchi[j];
      r.kinetic[el.node[j]] += el.weight * coef * (ag[0] * d[0] + ag[1] * d[1]);
      r.potential[el.node[j]] += el.weight * pot;
    }
  }
  return r;
}

}  // namespace detail

/// Energy of phi; phi must vanish on every boundary node.
inline EnergyBreakdown energy(const ProblemSpec& spec, const ScalarField& phi) {
  detail::check_same(spec, phi, "energy");
  const double tol = 1e-14 * phi.max_abs();
  for (int b : spec.mesh->boundary_nodes())
    if (std::abs(phi[b]) > tol)
      throw ConstructionError("energy: test function is nonzero on boundary node " + std::to_string(b));
  return detail::energy_terms(spec, phi.values());
}

/// Simplified energy  int v^2 |grad w|_A^2 (|w| |grad v|_A + v |grad w|_A)^{p-2}.
inline double energy_sim(const ProblemSpec& spec, const ScalarField& v, const ScalarField& w) {
  detail::check_same(spec, v, "energy_sim");
  detail::check_same(spec, w, "energy_sim");
  for (std::size_t i = 0; i < v.size(); ++i)
    detail::require(v[i] > 0.0, "energy_sim needs v > 0 at every node");
  double s = 0.0;
  for (const Element& el : spec.mesh->elements) {
    const SymMat2& a = spec.A[el.cell];
    const double gw = std::sqrt(a.quad(element_gradient(el, w.values())));
    if (gw == 0.0) continue;
    const double gv = std::sqrt(a.quad(element_gradient(el, v.values())));
    const double vb = element_average(el, v.values()), wb = std::abs(element_average(el, w.values()));
    s += el.weight * vb * vb * gw * gw * std::pow(wb * gv + vb * gw, spec.p - 2.0);
  }
  return s;
}

/// X(w) = int v^p |grad w|_A^p
inline double X_functional(const ProblemSpec& spec, const ScalarField& v, const ScalarField& w) {
  detail::check_same(spec, v, "X_functional");
  detail::check_same(spec, w, "X_functional");
  double s = 0.0;
  for (const Element& el : spec.mesh->elements) {
    const double gw2 = spec.A[el.cell].quad(element_gradient(el, w.values()));
    s += el.weight * std::pow(std::abs(element_average(el, v.values())), spec.p) * std::pow(gw2, 0.5 * spec.p);
  }
  return s;
}

/// Y(w) = int |w|^p |grad v|_A^p
inline double Y_functional(const ProblemSpec& spec, const ScalarField& v, const ScalarField& w) {
  detail::check_same(spec, v, "Y_functional");
  detail::check_same(spec, w, "Y_functional");
  double s = 0.0;
  for (const Element& el : spec.mesh->elements) {
    const double gv2 = spec.A[el.cell].quad(element_gradient(el, v.values()));
    s += el.weight * std::pow(std::abs(element_average(el, w.values())), spec.p) * std::pow(gv2, 0.5 * spec.p);
  }
  return s;
}

/// Weak residual r_i = int |grad u|_A^{p-2} A grad u . grad chi_i + int V I_p(u) chi_i
/// at interior nodes (both powers regularized by eps_reg); boundary entries are zero.
inline ScalarField apply_Q(const ProblemSpec& spec, const ScalarField& u) {
  detail::check_same(spec, u, "apply_Q");
  auto parts = detail::residual_parts(spec, u.values());
  std::vector<double> r(u.size(), 0.0);
  for (std::size_t i = 0; i < r.size(); ++i)
    if (!spec.mesh->is_boundary(i)) r[i] = parts.kinetic[i] + parts.potential[i];
  return ScalarField(spec.mesh, std::move(r));
}

/// Integral of g against every hat function under the element one-point rule.
inline std::vector<double> load_vector(const Mesh& m, std::span<const double> g) {
  std::vector<double> b(m.node_count(), 0.0);
  for (const Element& el : m.elements) {
    const double gb = element_average(el, g);
    for (int j = 0; j < el.count; ++j) b[el.node[j]] += el.weight * gb / el.count;
  }
  return b;
}

}  // namespace hardylab
