#pragma once

// Green potentials by exhaustion: on the k-th domain solve
//   -div(|grad w|_A^{p-2} A grad w) + (V + 2^{-k}) |w|^{p-2} w = phi,  w = 0 on the boundary,
// grow the domain to the full mesh, then keep halving the shift until the
// sup change stalls; a last solve with V alone gives the discrete limit.

#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hardylab/solver.hpp"

namespace hardylab {

/// A smooth compactly supported bump of given mass.
struct Density {
  Vec2 center{};  // r0 on 1D meshes
  double radius = 0.0;
  double mass = 1.0;
};

/// Quartic bump (1 - s^2)^2, s = distance / radius, scaled to the requested mass.
inline ScalarField mollified_delta(const MeshPtr& mesh, Vec2 center, double radius, double mass = 1.0) {
  const Mesh& m = *mesh;
  detail::require(radius > 0.0 && mass > 0.0, "mollified_delta needs radius > 0 and mass > 0");
  if (m.one_dimensional()) {
    const double lo = center[0] - radius, hi = center[0] + radius;
    detail::require(lo > m.x.front() && hi < m.x.back(), "density support touches the mesh boundary");
    int across = 0;
    for (std::size_t c = 0; c < m.cell_count(); ++c)
      if (m.x[m.cells[c][1]] > lo && m.x[m.cells[c][0]] < hi) ++across;
    detail::require(across >= 4, "density is under-resolved (fewer than 4 cells across its support)");
  } else {
    const double X1 = m.x_lo + m.nx * m.hx, Y1 = m.y_lo + m.ny * m.hy;
    detail::require(center[0] - radius > m.x_lo && center[0] + radius < X1 && center[1] - radius > m.y_lo &&
                        center[1] + radius < Y1,
                    "density support touches the mesh boundary");
    if (m.hole) {
      const Box& h = *m.hole;
      const double dx = std::max({h.x0 - center[0], 0.0, center[0] - h.x1});
      const double dy = std::max({h.y0 - center[1], 0.0, center[1] - h.y1});
      detail::require(std::hypot(dx, dy) > radius, "density support touches the hole");
    }
    detail::require(2.0 * radius / std::max(m.hx, m.hy) >= 4.0,
                    "density is under-resolved (fewer than 4 cells across its support)");
  }
  ScalarField raw = sample_nodes(mesh, [&](double x, double y) {
    const double d = m.one_dimensional() ? std::abs(x - center[0]) : std::hypot(x - center[0], y - center[1]);
    const double s = d / radius;
    return s < 1.0 ? (1.0 - s * s) * (1.0 - s * s) : 0.0;
  });
  const double total = element_integral(m, raw.values());
  detail::require(total > 0.0, "density has no mass on this mesh");
  return raw.scaled(mass / total);
}

inline ScalarField mollified_delta(const MeshPtr& mesh, const Density& d) {
  return mollified_delta(mesh, d.center, d.radius, d.mass);
}

struct GreenOptions {
  /// Cap on the total number of shifted levels (growth + shift halving).
  int max_levels = 100;
  /// Stop halving the shift once sup |G^{k+1} - G^k| < tol_change * sup G.
  double tol_change = 1e-8;
  /// Allowed decrease between consecutive levels, relative to sup G.
  double monotone_tol = 1e-12;
  /// sup G growing by more than this factor on 3 consecutive levels is taken as criticality.
  double growth_factor = 1.9;
  /// Run principal_eigen first and refuse when lambda_1 <= 0.
  bool checked = false;
  SolveOptions solve = [] {
    SolveOptions o;
    o.tol_residual = 1e-12;
    return o;
  }();
};

struct ExhaustionStep {
  int level = 0;
  double k = 0.0;  // potential shift is 1/k; infinity for the final solve
  std::string mesh_id;
  int cells = 0;
  double sup_change = 0.0;
  double sup_G = 0.0;
  /// max over nodes of (G_prev - G), extended by zero outside each domain.
  double max_decrease = 0.0;
};

struct GreenPotential {
  ScalarField G;
  ScalarField density;
  std::optional<Density> descriptor;
  std::vector<ExhaustionStep> trace;
  ProblemSpec spec;
  /// Last shifted level changed by less than tol_change * sup G.
  bool converged = false;
  /// Every step satisfied max_decrease <= monotone_tol * sup G.
  bool monotone = true;
  std::string source = "exhaustion";

  /// Closed-form profile wrapped as a potential (no density, no trace).
  static GreenPotential from_field(const ProblemSpec& spec, ScalarField G, std::string source = "oracle") {
    GreenPotential gp;
    gp.spec = spec;
    gp.density = ScalarField::zeros(spec.mesh);
    gp.G = std::move(G);
    gp.converged = true;
    gp.source = std::move(source);
    return gp;
  }

  /// Cells touching a node where the density is positive.
  std::vector<char> support_cells() const {
    const Mesh& m = *spec.mesh;
    std::vector<char> out(m.cell_count(), 0);
    for (std::size_t c = 0; c < m.cell_count(); ++c)
      for (int v : m.cell_nodes(c))
        if (density[v] > 0.0) out[c] = 1;
    return out;
  }

  nlohmann::json sidecar() const {
    nlohmann::json j;
    j["p"] = spec.p;
    j["n"] = spec.n_dim;
    j["mesh_id"] = spec.mesh->id;
    j["source"] = source;
    if (descriptor)
      j["density"] = {{"center", descriptor->center}, {"radius", descriptor->radius}, {"mass", descriptor->mass}};
    j["converged"] = converged;
    j["monotone"] = monotone;
    j["exhaustion_trace"] = nlohmann::json::array();
    for (const auto& s : trace)
      j["exhaustion_trace"].push_back({{"level", s.level},
                                       {"k", std::isfinite(s.k) ? nlohmann::json(s.k) : nlohmann::json("inf")},
                                       {"mesh_id", s.mesh_id},
                                       {"cells", s.cells},
                                       {"sup_change", s.sup_change},
                                       {"sup_G", s.sup_G},
                                       {"max_decrease", s.max_decrease}});
    return j;
  }
};

namespace detail {

/// Box around supp(phi), padded by two cells and clipped to the mesh.
inline Box support_core(const ScalarField& phi) {
  const Mesh& m = phi.mesh();
  if (m.one_dimensional()) {
    int lo = -1, hi = -1;
    for (std::size_t i = 0; i < phi.size(); ++i)
      if (phi[i] > 0.0) {
        if (lo < 0) lo = static_cast<int>(i);
        hi = static_cast<int>(i);
      }
    lo = std::max(0, lo - 2);
    hi = std::min(static_cast<int>(m.node_count()) - 1, hi + 2);
    return {m.x[lo], m.x[hi], 0.0, 0.0};
  }
  Box b{INFINITY, -INFINITY, INFINITY, -INFINITY};
  for (std::size_t i = 0; i < phi.size(); ++i)
    if (phi[i] > 0.0) {
      b.x0 = std::min(b.x0, m.x[i]);
      b.x1 = std::max(b.x1, m.x[i]);
      b.y0 = std::min(b.y0, m.y[i]);
      b.y1 = std::max(b.y1, m.y[i]);
    }
  const double X1 = m.x_lo + m.nx * m.hx, Y1 = m.y_lo + m.ny * m.hy;
  return {std::max(m.x_lo, b.x0 - 2 * m.hx), std::min(X1, b.x1 + 2 * m.hx), std::max(m.y_lo, b.y0 - 2 * m.hy),
          std::min(Y1, b.y1 + 2 * m.hy)};
}

}  // namespace detail

/// G_phi for Q_{p,A,V} by exhaustion over K growing domains, then shift halving.
inline GreenPotential green_potential(const ProblemSpec& spec, const ScalarField& phi, int K,
                                      const GreenOptions& opts = {}) {
  spec.validate();
  detail::check_same(spec, phi, "green_potential");
  detail::require(K >= 1, "green_potential needs K >= 1");
  detail::require(phi.min() >= 0.0 && phi.max() > 0.0, "green_potential needs a density phi >= 0, phi != 0");
  for (int b : spec.mesh->boundary_nodes())
    detail::require(phi[b] == 0.0, "density must vanish on the boundary");

  if (opts.checked) {
    SolveOptions eo;
    eo.require_convergence = false;
    const double l1 = principal_eigen(spec, eo).lambda1;
    if (!(l1 > 0.0))
      throw CriticalitySuspected("green_potential: lambda_1 = " + format_double(l1) + " <= 0 on the full mesh");
  }

  const MeshPtr& full = spec.mesh;
  const Box core = detail::support_core(phi);
  GreenPotential gp;
  gp.spec = spec;
  gp.density = phi;

  SolveOptions so = opts.solve;
  so.require_convergence = false;
  ScalarField prev = ScalarField::zeros(full);
  int growth_run = 0;

  auto solve_level = [&](const MeshPtr& sub, double shift, int level, double k) {
    ProblemSpec s = spec.restricted(sub);
    if (shift > 0.0) s = s.with_potential(s.V.map([shift](double v) { return v + shift; }));
    SolveOptions o = so;
    if (level > 0) {
      o.init = SolveOptions::Init::given;
      o.initial = restrict_to(prev, sub);
    }
    SolveResult r = dirichlet_solve(s, restrict_to(phi, sub), {}, o);
    if (r.diverged)
      throw CriticalitySuspected("green_potential: solve diverged at level " + std::to_string(level) +
                                 " (shift " + format_double(shift) + ")");
    if (!r.converged) {
      // a failed level on an operator with lambda_1 <= 0 is the supercritical case, not a solver problem
      SolveOptions eo;
      eo.require_convergence = false;
      const double l1 = principal_eigen(s, eo).lambda1;
      if (l1 <= 0.0)
        throw CriticalitySuspected("green_potential: level " + std::to_string(level) + " has lambda_1 = " +
                                   format_double(l1) + " <= 0 (shift " + format_double(shift) + ")");
      throw ConvergenceError("green_potential: solve failed at level " + std::to_string(level) +
                             "; last residuals: " + detail::history_tail(r));
    }
    ScalarField G = extend_to(r.u, full);
    ExhaustionStep st;
    st.level = level;
    st.k = k;
    st.mesh_id = sub->id;
    st.cells = static_cast<int>(sub->cell_count());
    st.sup_G = G.max();
    double change = 0.0, decrease = -INFINITY;
    for (std::size_t i = 0; i < G.size(); ++i) {
      change = std::max(change, std::abs(G[i] - prev[i]));
      decrease = std::max(decrease, prev[i] - G[i]);
    }
    st.sup_change = change;
    st.max_decrease = level == 0 ? 0.0 : decrease;
    const double prev_sup = prev.max();
    if (level > 0 && prev_sup > 0.0 && st.sup_G > opts.growth_factor * prev_sup) {
      if (++growth_run >= 3)
        throw CriticalitySuspected("green_potential: sup G keeps growing (" + format_double(st.sup_G) +
                                   " at level " + std::to_string(level) + ")");
    } else {
      growth_run = 0;
    }
    gp.trace.push_back(st);
    prev = std::move(G);
  };

  for (int level = 0; level < opts.max_levels; ++level) {
    const MeshPtr sub = level <= K ? exhaustion(full, level + 1, K + 1, core) : full;
    const double k = std::ldexp(1.0, level);
    solve_level(sub, 1.0 / k, level, k);
    const auto& st = gp.trace.back();
    if (level >= K && st.sup_change < opts.tol_change * st.sup_G) {
      gp.converged = true;
      break;
    }
  }
  solve_level(full, 0.0, static_cast<int>(gp.trace.size()), INFINITY);

  gp.G = prev;
  const double sup = gp.G.max();
  double lowest = INFINITY;
  for (std::size_t i = 0; i < gp.G.size(); ++i)
    if (!full->is_boundary(i)) lowest = std::min(lowest, gp.G[i]);
  if (!(sup > 0.0) || lowest < -1e-8 * sup)
    throw CriticalitySuspected("green_potential: G is not positive (min " + format_double(lowest) + ", max " +
                               format_double(sup) + ")");
  for (const auto& st : gp.trace) gp.monotone = gp.monotone && st.max_decrease <= opts.monotone_tol * sup;
  return gp;
}

inline GreenPotential green_potential(const ProblemSpec& spec, const Density& d, int K, const GreenOptions& opts = {}) {
  GreenPotential gp = green_potential(spec, mollified_delta(spec.mesh, d), K, opts);
  gp.descriptor = d;
  return gp;
}

/// Radial (p, n) Green profile for A = identity, V = 0:
///   p < n:  r^e  (or r^e - R^e on a ball of radius R),  e = (p - n)/(p - 1)
///   p = n:  log(R / r)
///   p > n:  r^e  (grows at infinity)
struct RadialGreenOracle {
  double p = 2.0;
  int n = 3;
  std::optional<double> R;

  double exponent() const { return (p - n) / (p - 1.0); }
  bool logarithmic() const { return p == static_cast<double>(n); }

  double operator()(double r) const {
    if (logarithmic()) return std::log(*R / r);
    const double e = exponent();
    return R ? std::pow(r, e) - std::pow(*R, e) : std::pow(r, e);
  }
  double derivative(double r) const {
    if (logarithmic()) return -1.0 / r;
    const double e = exponent();
    return e * std::pow(r, e - 1.0);
  }
  /// r^{n-1} |G'|^{p-1} omega_{n-1}; constant in r.
  double flux() const {
    const double e = logarithmic() ? -1.0 : exponent();
    return unit_sphere_area(n) * std::pow(std::abs(e), p - 1.0);
  }
};

inline RadialGreenOracle radial_green_oracle(double p, int n_dim, std::optional<double> R = std::nullopt) {
  detail::require(p > 1.0 && n_dim >= 1, "radial_green_oracle needs p > 1, n >= 1");
  detail::require(p != static_cast<double>(n_dim) || R.has_value(), "p = n needs the ball radius R");
  return {p, n_dim, R};
}

/// Samples the oracle on a mesh; on tensor grids with constant A the profile is
/// taken in rho = sqrt(x . A^{-1} x), which makes it (p, A)-harmonic for n = 2.
inline ScalarField sample_oracle(const MeshPtr& mesh, const RadialGreenOracle& g, const SymMat2& A = {}) {
  if (mesh->one_dimensional()) return sample_nodes(mesh, [&](double r) { return g(r); });
  const double d = A.det();
  const SymMat2 inv{A.a22 / d, -A.a12 / d, A.a11 / d};
  return sample_nodes(mesh, [&](double x, double y) { return g(std::sqrt(inv.quad({x, y}))); });
}

struct AssumptionCheck {
  bool decay_at_infinity = false;
  std::string decay_method;
  /// (outer radius, G sample) pairs or (distance, max G) for trend checks.
  std::vector<std::array<double, 2>> trend;
  double decay_slope = NAN;
  double expected_slope = NAN;
  double integral_VG = 0.0;
  double integral_absVG = 0.0;
  bool V_nonpositive = false;

  bool theorem_hypotheses() const {
    return decay_at_infinity && integral_VG < 0.0 && std::isfinite(integral_absVG);
  }
  bool corollary_hypotheses() const { return decay_at_infinity && V_nonpositive && std::isfinite(integral_absVG); }

  nlohmann::json to_json() const {
    nlohmann::json t = nlohmann::json::array();
    for (const auto& r : trend) t.push_back({r[0], r[1]});
    return {{"decay_at_infinity", decay_at_infinity},
            {"decay_method", decay_method},
            {"trend", t},
            {"decay_slope", std::isfinite(decay_slope) ? nlohmann::json(decay_slope) : nlohmann::json(nullptr)},
            {"expected_slope", std::isfinite(expected_slope) ? nlohmann::json(expected_slope) : nlohmann::json(nullptr)},
            {"integral_VG", integral_VG},
            {"integral_absVG", integral_absVG},
            {"V_nonpositive", V_nonpositive},
            {"theorem_hypotheses", theorem_hypotheses()},
            {"corollary_hypotheses", corollary_hypotheses()}};
  }
};

/// Rebuilds G on a domain whose outer radius is scaled by the given factor.
using DomainGrowth = std::function<ScalarField(double factor)>;

/// Reports the hypotheses of the main theorem for G; never throws on failure.
/// With `grow`, decay is judged from G(R/2) for R = r_max, 2 r_max, 4 r_max:
/// the log-log slope must be negative and, for p < n, within 25% of (p-n)/(p-1).
/// Without it, from a monotone outward trend of G.
inline AssumptionCheck check_assumptions(const ProblemSpec& spec, const GreenPotential& gp,
                                         const DomainGrowth& grow = {}) {
  const Mesh& m = *spec.mesh;
  AssumptionCheck a;
  const CellField Gc = cell_average(gp.G);
  a.V_nonpositive = spec.V.max() <= 0.0;
  for (std::size_t c = 0; c < m.cell_count(); ++c) {
    const double g = std::pow(std::max(Gc[c], 0.0), spec.p - 1.0) * m.cell_measures[c];
    a.integral_VG += spec.V[c] * g;
    a.integral_absVG += std::abs(spec.V[c]) * g;
  }

  if (m.kind == MeshKind::radial && spec.p < spec.n_dim) a.expected_slope = (spec.p - spec.n_dim) / (spec.p - 1.0);

  if (grow && m.one_dimensional()) {
    a.decay_method = "domain_growth";
    const double R = m.x.back();
    for (double f : {1.0, 2.0, 4.0}) {
      const ScalarField G = f == 1.0 ? gp.G : grow(f);
      a.trend.push_back({f * R, interpolate(G, 0.5 * f * R)});
    }
    bool positive = true;
    for (const auto& t : a.trend) positive = positive && t[1] > 0.0;
    if (positive) {
      a.decay_slope = std::log(a.trend[2][1] / a.trend[0][1]) / std::log(4.0);
      a.decay_at_infinity = a.decay_slope < 0.0;
      if (std::isfinite(a.expected_slope))
        a.decay_at_infinity = a.decay_at_infinity &&
                              std::abs(a.decay_slope - a.expected_slope) <= 0.25 * std::abs(a.expected_slope);
    }
    return a;
  }

  if (m.one_dimensional()) {
    a.decay_method = "outer_trend";
    // G must be non-increasing over the outer half (in log r) of the mesh
    const std::size_t n = m.node_count();
    const std::size_t start = n / 2;
    bool dec = true;
    for (std::size_t i = start; i + 1 < n; ++i) dec = dec && gp.G[i + 1] <= gp.G[i];
    for (int s = 0; s <= 4; ++s) {
      const std::size_t i = start + (n - 1 - start) * s / 4;
      a.trend.push_back({m.x[i], gp.G[i]});
    }
    a.decay_at_infinity = dec;
    return a;
  }

  a.decay_method = "ring_trend";
  std::size_t imax = 0;
  for (std::size_t i = 0; i < gp.G.size(); ++i)
    if (gp.G[i] > gp.G[imax]) imax = i;
  const Vec2 c = m.node_point(imax);
  double dmax = 0.0;
  for (std::size_t i = 0; i < m.node_count(); ++i)
    dmax = std::max(dmax, std::hypot(m.x[i] - c[0], m.y[i] - c[1]));
  constexpr int rings = 8;
  std::vector<double> ring_max(rings, -INFINITY);
  for (std::size_t i = 0; i < m.node_count(); ++i) {
    const double d = std::hypot(m.x[i] - c[0], m.y[i] - c[1]);
    const int k = std::min(rings - 1, static_cast<int>(rings * d / dmax));
    ring_max[k] = std::max(ring_max[k], gp.G[i]);
  }
  bool dec = true;
  for (int k = 0; k < rings; ++k) {
    a.trend.push_back({dmax * (k + 0.5) / rings, ring_max[k]});
    if (k > 0 && std::isfinite(ring_max[k - 1]) && std::isfinite(ring_max[k])) dec = dec && ring_max[k] <= ring_max[k - 1];
  }
  a.decay_at_infinity = dec;
  return a;
}

}  // namespace hardylab
