#pragma once

// Hardy weights from Green potentials through the power transform
// f(t) = t^{(p-1)/p}. Weights are piecewise constant on cells.

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hardylab/green.hpp"

namespace hardylab {

struct Transform {
  double f = 0.0;
  double df = 0.0;
  /// -(p-1) |f'|^{p-2} f'', the one-dimensional p-Laplacian of f at t
  double minus_dp = 0.0;
  /// ((p-1)/p)^p f^{p-1} / t^p; equal to minus_dp up to rounding
  double identity_rhs = 0.0;
};

inline Transform transform_f(double t, double p) {
  detail::require(t > 0.0, "transform_f needs t > 0");
  detail::require(p > 1.0, "transform_f needs p > 1");
  const double a = (p - 1.0) / p;
  Transform out;
  out.f = std::pow(t, a);
  out.df = a * std::pow(t, -1.0 / p);
  const double d2f = -a / p * std::pow(t, -1.0 / p - 1.0);
  out.minus_dp = -(p - 1.0) * std::pow(std::abs(out.df), p - 2.0) * d2f;
  out.identity_rhs = std::pow(a, p) * std::pow(out.f, p - 1.0) / std::pow(t, p);
  return out;
}

enum class WeightProvenance { from_green_potential, plaplacian_case1, plaplacian_case2, perturbed };

inline const char* to_string(WeightProvenance w) {
  switch (w) {
    case WeightProvenance::from_green_potential: return "from_green_potential";
    case WeightProvenance::plaplacian_case1: return "plaplacian_case1";
    case WeightProvenance::plaplacian_case2: return "plaplacian_case2";
    case WeightProvenance::perturbed: return "perturbed";
  }
  return "?";
}

struct HardyWeight {
  CellField W;
  ScalarField ground_state;
  /// Cells where W is the closed-form |grad G / G|_A^p expression.
  std::vector<char> closed_form_region;
  WeightProvenance provenance = WeightProvenance::from_green_potential;
  std::optional<ScalarField> source_G;
  std::optional<double> gamma;
  std::optional<double> eps;
  double p = 2.0;
  /// Clipped negative mass over total |W| mass inside supp(phi).
  double clip_fraction = 0.0;
  /// Cells dropped by weight_case_gamma (G >= gamma or a vanishing factor).
  int excluded_cells = 0;
  /// "theorem", "corollary" or "unverified".
  std::string route = "unverified";

  HardyWeight scaled(double s) const {
    HardyWeight h = *this;
    h.W = W.scaled(s);
    return h;
  }

  nlohmann::json sidecar() const {
    nlohmann::json j{{"provenance", to_string(provenance)},
                     {"p", p},
                     {"c_p", c_p(p)},
                     {"clip_fraction", clip_fraction},
                     {"route", route},
                     {"mesh_id", W.mesh().id}};
    if (gamma) j["gamma"] = *gamma;
    if (eps) j["eps"] = *eps;
    if (excluded_cells) j["excluded_cells"] = excluded_cells;
    return j;
  }
};

namespace detail {

/// |grad G|_A / G per cell, with G the cell mean of its nodal values.
inline double log_derivative(const Mesh& m, const MatrixField& A, const VectorFieldOnCells& grad,
                             const CellField& Gc, std::size_t c) {
  (void)m;
  return std::sqrt(A[c].quad(grad.values[c])) / Gc[c];
}

}  // namespace detail

/// W = Q(f(G)) / f(G)^{p-1} for the operator in `weighted` (potential V/c_p when
/// G solves Q_{p,A,V}(G) = phi). Outside supp(phi) the closed form
/// ((p-1)/p)^p |grad G|_A^p / G^p is used cellwise; inside, the nodal residual
/// density of f(G), clipped at zero.
inline HardyWeight weight_from_green(const ProblemSpec& weighted, const GreenPotential& gp,
                                     const AssumptionCheck* check = nullptr) {
  weighted.validate();
  const Mesh& m = *weighted.mesh;
  detail::require(&gp.G.mesh() == &m, "weight_from_green: G is not on the problem mesh");
  detail::require(gp.spec.p == weighted.p, "weight_from_green: p differs from the Green operator");
  const double p = weighted.p, cp = c_p(p);
  const double vscale = std::max(gp.spec.V.max_abs(), 1e-300);
  for (std::size_t c = 0; c < m.cell_count(); ++c)
    detail::require(std::abs(weighted.V[c] * cp - gp.spec.V[c]) <= 1e-12 * vscale,
                    "weight_from_green expects the potential V/c_p of the Green operator");
  for (std::size_t i = 0; i < m.node_count(); ++i)
    if (!m.is_boundary(i)) detail::require(gp.G[i] > 0.0, "weight_from_green needs G > 0 at interior nodes");

  HardyWeight hw;
  hw.p = p;
  hw.provenance = WeightProvenance::from_green_potential;
  hw.source_G = gp.G;
  const ScalarField v = gp.G.map([p](double t) { return t > 0.0 ? std::pow(t, (p - 1.0) / p) : 0.0; });
  hw.ground_state = v;

  const auto support = gp.support_cells();
  const VectorFieldOnCells grad = gradient(gp.G);
  const CellField Gc = cell_average(gp.G);
  const double ap = std::pow((p - 1.0) / p, p);
  std::vector<double> W(m.cell_count(), 0.0);
  hw.closed_form_region.assign(m.cell_count(), 0);

  bool any_support = false;
  for (char s : support) any_support = any_support || s;
  std::vector<double> nodal_density;
  if (any_support) {
    const ScalarField r = apply_Q(weighted, v);
    const auto mass = lumped_mass(m);
    nodal_density.assign(m.node_count(), 0.0);
    for (std::size_t i = 0; i < m.node_count(); ++i)
      if (!m.is_boundary(i)) nodal_density[i] = r[i] / mass[i] / std::pow(v[i], p - 1.0);
  }

  double clipped = 0.0, total = 0.0;
  for (std::size_t c = 0; c < m.cell_count(); ++c) {
    if (!support[c]) {
      hw.closed_form_region[c] = 1;
      W[c] = ap * std::pow(detail::log_derivative(m, weighted.A, grad, Gc, c), p);
      continue;
    }
    double s = 0.0;
    int k = 0;
    for (int n : m.cell_nodes(c))
      if (!m.is_boundary(n)) {
        s += nodal_density[n];
        ++k;
      }
    const double w = k ? s / k : 0.0;
    total += std::abs(w) * m.cell_measures[c];
    if (w < 0.0) clipped += -w * m.cell_measures[c];
    W[c] = std::max(w, 0.0);
  }
  hw.clip_fraction = total > 0.0 ? clipped / total : 0.0;
  hw.W = CellField(weighted.mesh, std::move(W));

  if (check) {
    const bool v_nonpositive = weighted.V.max() <= 0.0;
    if (check->theorem_hypotheses())
      hw.route = "theorem";
    else if (v_nonpositive && check->corollary_hypotheses())
      hw.route = "corollary";
  }
  return hw;
}

/// Second p-Laplacian case (G bounded by gamma near the origin):
///   W = ((p-1)/p)^p |grad G / (G (gamma - G))|_A^p |gamma - 2G|^{p-2} [2(p-2) G (gamma - G) + gamma^2],
///   v = [G (gamma - G)]^{(p-1)/p}.
/// Cells with G >= gamma at some node, or where the formula is not finite, are excluded (W = 0).
inline HardyWeight weight_case_gamma(const ScalarField& G, double gamma, double p, const MatrixField& A) {
  detail::require(p > 1.0, "weight_case_gamma needs p > 1");
  detail::require(gamma > 0.0, "weight_case_gamma needs gamma > 0");
  const Mesh& m = G.mesh();
  detail::require(&A.mesh() == &m, "weight_case_gamma: A is not on the mesh of G");
  HardyWeight hw;
  hw.p = p;
  hw.provenance = WeightProvenance::plaplacian_case2;
  hw.gamma = gamma;
  hw.source_G = G;
  hw.ground_state = G.map([&](double g) {
    const double q = g * (gamma - g);
    return q > 0.0 ? std::pow(q, (p - 1.0) / p) : 0.0;
  });
  const VectorFieldOnCells grad = gradient(G);
  const CellField Gc = cell_average(G);
  const double ap = std::pow((p - 1.0) / p, p);
  std::vector<double> W(m.cell_count(), 0.0);
  hw.closed_form_region.assign(m.cell_count(), 0);
  for (std::size_t c = 0; c < m.cell_count(); ++c) {
    bool inside = true;
    for (int n : m.cell_nodes(c)) inside = inside && G[n] < gamma;
    const double g = Gc[c];
    if (!inside || g <= 0.0) {
      ++hw.excluded_cells;
      continue;
    }
    const double q = g * (gamma - g);
    const double w = ap * std::pow(std::sqrt(A[c].quad(grad.values[c])) / q, p) *
                     std::pow(std::abs(gamma - 2.0 * g), p - 2.0) * (2.0 * (p - 2.0) * q + gamma * gamma);
    if (!std::isfinite(w)) {
      ++hw.excluded_cells;
      continue;
    }
    W[c] = w;
    hw.closed_form_region[c] = 1;
  }
  hw.W = CellField(G.mesh_ptr(), std::move(W));
  return hw;
}

/// First p-Laplacian case: the closed form on every cell, v = G^{(p-1)/p}.
inline HardyWeight weight_case_one(const ScalarField& G, double p, const MatrixField& A) {
  const Mesh& m = G.mesh();
  detail::require(&A.mesh() == &m, "weight_case_one: A is not on the mesh of G");
  HardyWeight hw;
  hw.p = p;
  hw.provenance = WeightProvenance::plaplacian_case1;
  hw.source_G = G;
  hw.ground_state = G.map([p](double t) { return t > 0.0 ? std::pow(t, (p - 1.0) / p) : 0.0; });
  const VectorFieldOnCells grad = gradient(G);
  const CellField Gc = cell_average(G);
  const double ap = std::pow((p - 1.0) / p, p);
  std::vector<double> W(m.cell_count());
  for (std::size_t c = 0; c < W.size(); ++c) {
    detail::require(Gc[c] > 0.0, "weight_case_one needs G > 0");
    W[c] = ap * std::pow(detail::log_derivative(m, A, grad, Gc, c), p);
  }
  hw.W = CellField(G.mesh_ptr(), std::move(W));
  hw.closed_form_region.assign(m.cell_count(), 1);
  return hw;
}

/// W + V1 for a perturbation with V1 >= -eps W cellwise, 0 <= eps < 1.
inline HardyWeight perturbed_weight(const HardyWeight& w, const CellField& V1, double eps) {
  detail::require(eps >= 0.0 && eps < 1.0, "perturbed_weight needs 0 <= eps < 1");
  detail::require(&V1.mesh() == &w.W.mesh(), "perturbed_weight: V1 is not on the weight mesh");
  std::vector<std::size_t> bad;
  for (std::size_t c = 0; c < V1.size(); ++c) {
    const double bound = -eps * w.W[c];
    if (V1[c] < bound - 1e-12 * std::abs(bound)) bad.push_back(c);
  }
  if (!bad.empty()) {
    std::string where;
    for (std::size_t k = 0; k < std::min<std::size_t>(bad.size(), 8); ++k)
      where += (k ? ", " : "") + std::to_string(bad[k]);
    throw ConstructionError("perturbed_weight: V1 < -eps W on " + std::to_string(bad.size()) + " cells (" + where +
                            (bad.size() > 8 ? ", ..." : "") + ")");
  }
  HardyWeight out = w;
  std::vector<double> v(V1.size());
  for (std::size_t c = 0; c < v.size(); ++c) v[c] = w.W[c] + V1[c];
  out.W = CellField(w.W.mesh_ptr(), std::move(v));
  out.provenance = WeightProvenance::perturbed;
  out.eps = eps;
  return out;
}

struct OptimalPair {
  ProblemSpec spec_V;         // operator whose Green potential is built
  ProblemSpec spec_weighted;  // potential V / c_p: the operator receiving the weight
  GreenPotential green;
  AssumptionCheck check;
  HardyWeight weight;
};

/// G_phi for Q_{p,A,V}, assumption check, potential divided by c_p, weight attached.
inline OptimalPair optimal_pair(const ProblemSpec& spec_V, const ScalarField& phi, int K,
                                const GreenOptions& opts = {}, const DomainGrowth& grow = {}) {
  OptimalPair out{spec_V, spec_V, green_potential(spec_V, phi, K, opts), {}, {}};
  const double cp = c_p(spec_V.p);
  out.spec_weighted = spec_V.with_potential(spec_V.V.map([cp](double v) { return v / cp; }));
  out.check = check_assumptions(spec_V, out.green, grow);
  out.weight = weight_from_green(out.spec_weighted, out.green, &out.check);
  return out;
}

inline OptimalPair optimal_pair(const ProblemSpec& spec_V, const Density& d, int K, const GreenOptions& opts = {},
                                const DomainGrowth& grow = {}) {
  OptimalPair out = optimal_pair(spec_V, mollified_delta(spec_V.mesh, d), K, opts, grow);
  out.green.descriptor = d;
  return out;
}

}  // namespace hardylab
