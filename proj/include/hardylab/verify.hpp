#pragma once

// Verification battery. Every check returns a VerificationReport; nothing here throws
// on a failed property, only on malformed input.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hardylab/hardy.hpp"
#include "hardylab/level_set.hpp"
#include "hardylab/report.hpp"

namespace hardylab {

// ---------------------------------------------------------------------------
// test functions

struct TestFunctionFamily {
  enum class Kind { random_bumps, tensor_sines, hat_products };

  Kind kind = Kind::random_bumps;
  int count = 20;
  std::uint64_t seed = 1;
  /// Fraction of the (log-)extent kept free at each end.
  double margin = 0.05;
  /// Bumps on wide radial meshes are multiplied by r^{-beta}, beta uniform in this range.
  double tilt_lo = 0.0, tilt_hi = 1.0;

  std::vector<ScalarField> members(const MeshPtr& mesh) const;

  nlohmann::json to_json() const {
    static const char* names[] = {"random_bumps", "tensor_sines", "hat_products"};
    return {{"kind", names[static_cast<int>(kind)]}, {"count", count}, {"seed", seed}, {"margin", margin},
            {"tilt", {tilt_lo, tilt_hi}}};
  }
};

namespace detail {

/// Uniform doubles from mt19937_64 without going through std:: distributions,
/// whose output is implementation-defined.
class Uniform {
 public:
  explicit Uniform(std::uint64_t seed) : gen_(seed) {}
  double operator()(double a, double b) { return a + (b - a) * ((gen_() >> 11) * 0x1p-53); }
  int integer(int lo, int hi) { return lo + static_cast<int>((gen_() >> 11) % static_cast<std::uint64_t>(hi - lo + 1)); }

 private:
  std::mt19937_64 gen_;
};

/// Radial meshes spanning more than two decades are sampled in log r.
inline bool log_coordinate(const Mesh& m) {
  return m.kind == MeshKind::radial && m.x.front() > 0.0 && m.x.back() / m.x.front() > 100.0;
}

/// (1 - q^2)^2 shoulder after a flat top of relative width `flat`.
inline double plateau(double q, double flat) {
  if (q >= 1.0) return 0.0;
  if (q <= flat) return 1.0;
  const double s = (q - flat) / (1.0 - flat);
  return (1.0 - s * s) * (1.0 - s * s);
}

inline double hat(double q) { return std::max(0.0, 1.0 - std::abs(q)); }

}  // namespace detail

inline std::vector<ScalarField> TestFunctionFamily::members(const MeshPtr& mesh) const {
  detail::require(count >= 1, "test function family needs count >= 1");
  detail::require(margin >= 0.0 && margin < 0.5, "test function margin must lie in [0, 0.5)");
  detail::require(tilt_lo <= tilt_hi, "test function tilt range is empty");
  const Mesh& m = *mesh;
  detail::Uniform rng(seed);
  std::vector<ScalarField> out;
  out.reserve(count);

  const bool logc = detail::log_coordinate(m);
  const bool oned = m.one_dimensional();
  auto coord = [&](double x) { return logc ? std::log(x) : x; };
  double a0, a1, b0 = 0.0, b1 = 0.0;
  if (m.one_dimensional()) {
    a0 = coord(m.x.front());
    a1 = coord(m.x.back());
  } else {
    a0 = m.x_lo;
    a1 = m.x_lo + m.nx * m.hx;
    b0 = m.y_lo;
    b1 = m.y_lo + m.ny * m.hy;
  }
  const double ma = margin * (a1 - a0), mb = margin * (b1 - b0);
  a0 += ma, a1 -= ma, b0 += mb, b1 -= mb;

  int attempts = 0;
  while (static_cast<int>(out.size()) < count) {
    detail::require(++attempts <= 100 * count, "test function family: members keep vanishing on this mesh");
    std::function<double(double, double)> f;
    switch (kind) {
      case Kind::random_bumps: {
        const double flat = rng(0.0, 0.9);
        if (m.one_dimensional()) {
          const double c = rng(a0, a1);
          const double w = std::min(c - a0, a1 - c) * rng(0.05, 1.0);
          const double beta = logc ? rng(tilt_lo, tilt_hi) : 0.0;
          f = [=](double x, double) {
            const double s = logc ? std::log(x) : x;
            return detail::plateau(std::abs(s - c) / w, flat) * std::exp(-beta * (s - c));
          };
        } else {
          const double cx = rng(a0, a1), cy = rng(b0, b1);
          const double room = std::min({cx - a0, a1 - cx, cy - b0, b1 - cy});
          const double R = room * rng(0.1, 1.0);
          f = [=](double x, double y) { return detail::plateau(std::hypot(x - cx, y - cy) / R, flat); };
        }
        break;
      }
      case Kind::tensor_sines: {
        const int kx = rng.integer(1, 4), ky = rng.integer(1, 4);
        const double amp = rng(0.5, 1.0);
        f = [=](double x, double y) {
          const double s = logc ? std::log(x) : x;
          if (s <= a0 || s >= a1) return 0.0;
          double v = amp * std::sin(kx * M_PI * (s - a0) / (a1 - a0));
          if (!oned) v *= (y > b0 && y < b1) ? std::sin(ky * M_PI * (y - b0) / (b1 - b0)) : 0.0;
          return v;
        };
        break;
      }
      case Kind::hat_products: {
        const double cx = rng(a0, a1), wx = std::min(cx - a0, a1 - cx) * rng(0.1, 1.0);
        const double cy = oned ? 0.0 : rng(b0, b1);
        const double wy = oned ? 1.0 : std::min(cy - b0, b1 - cy) * rng(0.1, 1.0);
        f = [=](double x, double y) {
          const double s = logc ? std::log(x) : x;
          const double v = detail::hat((s - cx) / wx);
          return oned ? v : v * detail::hat((y - cy) / wy);
        };
        break;
      }
    }
    std::vector<double> v(m.node_count());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = m.is_boundary(i) ? 0.0 : f(m.x[i], oned ? 0.0 : m.y[i]);
    ScalarField phi(mesh, std::move(v));
    const double s = phi.max_abs();
    if (!(s > 0.0) || !std::isfinite(s)) continue;
    out.push_back(phi.scaled(1.0 / s));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Hardy margin

/// int W |phi|^p with the same one-point rule as the potential term of energy().
inline double weighted_lp(const CellField& W, const ScalarField& phi, double p) {
  detail::require(&W.mesh() == &phi.mesh(), "weighted_lp: W and phi live on different meshes");
  double s = 0.0;
  for (const Element& el : phi.mesh().elements)
    s += el.weight * W[el.cell] * std::pow(std::abs(element_average(el, phi.values())), p);
  return s;
}

struct HardyMarginOptions {
  double tol = 1e-6;
  /// Discretization allowance added to tol; see README for the calibration.
  double allowance = 0.0;
  /// Multiplies W before the comparison (1.5 for the over-weighting probe).
  double weight_scale = 1.0;
};

/// min over the family of (E(phi) - int W|phi|^p) / max(|E|, |int W|phi|^p|); pass iff >= -(tol + allowance).
inline VerificationReport hardy_margin(const ProblemSpec& spec, const HardyWeight& W, const TestFunctionFamily& fam,
                                       const HardyMarginOptions& opts = {}) {
  spec.validate();
  detail::require(&W.W.mesh() == spec.mesh.get(), "hardy_margin: weight and operator live on different meshes");
  VerificationReport rep;
  rep.check_name = opts.weight_scale == 1.0 ? "hardy_margin" : "hardy_margin_overweight";
  rep.parameters = {{"p", spec.p},
                    {"family", fam.to_json()},
                    {"tol", opts.tol},
                    {"allowance", opts.allowance},
                    {"weight_scale", opts.weight_scale},
                    {"weight", W.sidecar()}};
  rep.direction = VerificationReport::Direction::at_least;
  rep.threshold = -(opts.tol + opts.allowance);
  rep.table.columns = {"member", "energy", "weighted", "margin"};
  double worst = INFINITY;
  const auto phis = fam.members(spec.mesh);
  for (std::size_t k = 0; k < phis.size(); ++k) {
    const double E = energy(spec, phis[k]).total;
    const double H = opts.weight_scale * weighted_lp(W.W, phis[k], spec.p);
    const double margin = (E - H) / std::max(std::abs(E), std::abs(H));
    rep.table.add({static_cast<double>(k), E, H, margin});
    worst = std::min(worst, margin);
  }
  rep.statistic = worst;
  rep.decide();
  return rep;
}

/// Optimality probe: with W scaled by `factor` some member must violate the inequality
/// by more than `below`.
inline VerificationReport overweight_probe(const ProblemSpec& spec, const HardyWeight& W,
                                           const TestFunctionFamily& fam, double factor = 1.5, double below = 1e-2) {
  HardyMarginOptions o;
  o.weight_scale = factor;
  VerificationReport rep = hardy_margin(spec, W, fam, o);
  rep.direction = VerificationReport::Direction::at_most;
  rep.threshold = -below;
  rep.parameters["below"] = below;
  rep.decide();
  return rep;
}

// ---------------------------------------------------------------------------
// null sequence

/// Five-piece cutoff: 0 below k^-2, 2 + log t/log k up to 1/k, 1 up to k,
/// 2 - log t/log k up to k^2, 0 beyond.
inline double null_cutoff(double t, double k) {
  if (t <= 0.0) return 0.0;
  const double lk = std::log(k), lt = std::log(t);
  if (lt <= -2.0 * lk || lt >= 2.0 * lk) return 0.0;
  if (lt < -lk) return 2.0 + lt / lk;
  if (lt > lk) return 2.0 - lt / lk;
  return 1.0;
}

/// u_k = phi_k(f(G)) f(G), f(t) = t^{(p-1)/p}.
inline ScalarField null_sequence_field(const ScalarField& G, double p, int k) {
  detail::require(k >= 2, "null_sequence_field needs k >= 2");
  return G.map([p, k](double g) {
    if (g <= 0.0) return 0.0;
    const double s = std::pow(g, (p - 1.0) / p);
    return null_cutoff(s, k) * s;
  });
}

inline ScalarField null_sequence_field(const GreenPotential& gp, int k) {
  return null_sequence_field(gp.G, gp.spec.p, k);
}

/// The critical operator Q_{p,A,V-W} from the weighted operator and its weight.
inline ProblemSpec critical_spec(const ProblemSpec& weighted, const HardyWeight& w) {
  detail::require(&w.W.mesh() == weighted.mesh.get(), "critical_spec: weight is on another mesh");
  std::vector<double> v(weighted.V.size());
  for (std::size_t c = 0; c < v.size(); ++c) v[c] = weighted.V[c] - w.W[c];
  return weighted.with_potential(CellField(weighted.mesh, std::move(v)));
}

namespace detail {

inline double fit_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace detail

struct NullSequenceOptions {
  /// Band B = {eps0/2 < f(G) < eps0} for the normalization check.
  double eps0 = 1.0;
  double slope_tol = 0.15;
  double band_factor = 2.0;
};

/// Q(u_k), X_k, Y_k and the band mass for each usable k. statistic is the fitted slope of
/// log Q(u_k) against log log k; pass iff within slope_tol of -(p-1), the band mass varies
/// by less than band_factor and Q(u_k) decreases.
inline VerificationReport null_sequence_decay(const ProblemSpec& critical, const ScalarField& G,
                                              const std::vector<int>& k_list, const NullSequenceOptions& opts = {}) {
  critical.validate();
  detail::check_same(critical, G, "null_sequence_decay");
  const Mesh& m = *critical.mesh;
  const double p = critical.p;
  const ScalarField v = G.map([p](double g) { return g > 0.0 ? std::pow(g, (p - 1.0) / p) : 0.0; });

  VerificationReport rep;
  rep.check_name = "null_sequence_decay";
  rep.parameters = {{"p", p}, {"k_list", k_list}, {"eps0", opts.eps0}, {"mesh_id", m.id}};
  rep.threshold = opts.slope_tol * (p - 1.0);
  rep.table.columns = {"k", "Q_uk", "X_k", "Y_k", "band_mass"};

  const double fmin = v.min(), fmax = v.max();
  std::vector<int> usable;
  for (int k : k_list) {
    bool ok = k >= 2 && fmin <= 1.0 / (double(k) * k) && (fmax <= k || fmax >= double(k) * k);
    for (int b : m.boundary_nodes()) ok = ok && null_cutoff(v[b], k) == 0.0;
    if (ok)
      usable.push_back(k);
    else
      rep.notes.push_back("k=" + std::to_string(k) + " dropped: levels k^-2, k^2 of f(G) not resolved on the mesh");
  }
  rep.parameters["usable_k"] = usable;
  if (usable.size() < 2) {
    rep.notes.push_back("under-resolved: fewer than two usable k");
    rep.conditions["resolved"] = false;
    rep.decide();
    return rep;
  }

  const CellField vc = cell_average(v);
  std::vector<double> lq, llk, lx, Q;
  std::vector<double> band;
  for (int k : usable) {
    const ScalarField u = null_sequence_field(G, p, k);
    const ScalarField w = v.map([k](double s) { return null_cutoff(s, k); });
    const double q = energy(critical, u).total;
    const double X = X_functional(critical, v, w), Y = Y_functional(critical, v, w);
    double bm = 0.0;
    for (const Element& el : m.elements)
      if (vc[el.cell] > 0.5 * opts.eps0 && vc[el.cell] < opts.eps0)
        bm += el.weight * std::pow(std::abs(element_average(el, u.values())), p);
    rep.table.add({double(k), q, X, Y, bm});
    Q.push_back(q);
    band.push_back(bm);
    llk.push_back(std::log(std::log(double(k))));
    lq.push_back(q > 0.0 ? std::log(q) : NAN);
    lx.push_back(std::log(X));
  }
  const double slope = detail::fit_slope(llk, lq);
  rep.statistic = std::abs(slope + (p - 1.0));
  rep.parameters["slope"] = slope;
  rep.parameters["expected_slope"] = -(p - 1.0);
  rep.parameters["X_slope"] = detail::fit_slope(llk, lx);
  const auto [bmin, bmax] = std::minmax_element(band.begin(), band.end());
  rep.parameters["band_ratio"] = *bmax / *bmin;
  rep.conditions["band_mass_within_factor"] = *bmin > 0.0 && *bmax <= opts.band_factor * *bmin;
  bool dec = true;
  for (std::size_t i = 1; i < Q.size(); ++i) dec = dec && Q[i] < Q[i - 1];
  rep.conditions["Q_decreasing"] = dec;
  rep.decide();
  return rep;
}

// ---------------------------------------------------------------------------
// null-criticality

/// I(tau) = int_{tau < G < t0} W v^p with each cell counted by the fraction of its
/// G-range inside (tau, t0). statistic = (max - min)/min of I(tau)/log(t0/tau).
inline VerificationReport null_criticality_growth(const HardyWeight& hw, const std::vector<double>& tau_list,
                                                  double t0 = 1.0, double tol = 0.1) {
  detail::require(hw.source_G.has_value(), "null_criticality_growth needs the weight's Green potential");
  const ScalarField& G = *hw.source_G;
  const Mesh& m = G.mesh();
  const double p = hw.p;
  VerificationReport rep;
  rep.check_name = "null_criticality_growth";
  rep.parameters = {{"p", p}, {"tau_list", tau_list}, {"t0", t0}, {"weight", hw.sidecar()}};
  rep.threshold = tol;
  rep.table.columns = {"tau", "I", "ratio"};

  double gmin = INFINITY;
  for (std::size_t i = 0; i < G.size(); ++i)
    if (G[i] > 0.0) gmin = std::min(gmin, G[i]);
  const CellField vc = cell_average(hw.ground_state);
  std::vector<double> ratios;
  for (double tau : tau_list) {
    detail::require(tau > 0.0 && tau < t0, "null_criticality_growth needs 0 < tau < t0");
    if (tau < gmin * (1.0 - 1e-12)) {
      rep.notes.push_back("tau=" + format_double(tau) + " below the smallest positive G on the mesh; dropped");
      continue;
    }
    double I = 0.0;
    for (std::size_t c = 0; c < m.cell_count(); ++c) {
      double lo = INFINITY, hi = -INFINITY;
      for (int n : m.cell_nodes(c)) {
        lo = std::min(lo, G[n]);
        hi = std::max(hi, G[n]);
      }
      double frac;
      if (hi > lo)
        frac = std::max(0.0, std::min(hi, t0) - std::max(lo, tau)) / (hi - lo);
      else
        frac = (lo > tau && lo < t0) ? 1.0 : 0.0;
      if (frac > 0.0) I += frac * hw.W[c] * std::pow(vc[c], p) * m.cell_measures[c];
    }
    const double r = I / std::log(t0 / tau);
    rep.table.add({tau, I, r});
    ratios.push_back(r);
  }
  if (ratios.size() < 2) {
    rep.notes.push_back("under-resolved: fewer than two usable tau");
    rep.conditions["resolved"] = false;
  } else {
    const auto [lo, hi] = std::minmax_element(ratios.begin(), ratios.end());
    rep.statistic = *lo > 0.0 ? (*hi - *lo) / *lo : INFINITY;
  }
  rep.decide();
  return rep;
}

// ---------------------------------------------------------------------------
// coarea flux

namespace detail {

/// Slope of the parabola through nodes i-1, i, i+1 (1D, interior i).
inline double recovered_slope(const ScalarField& f, int i) {
  const auto& x = f.mesh().x;
  const double h0 = x[i] - x[i - 1], h1 = x[i + 1] - x[i];
  const double s0 = (f[i] - f[i - 1]) / h0, s1 = (f[i + 1] - f[i]) / h1;
  return (s0 * h1 + s1 * h0) / (h0 + h1);
}

}  // namespace detail

/// F(t) = sum over the level set {G = t} of |grad G|_A^{p-1} (|grad G|_A / |grad G|) dH.
/// Radial meshes use the exact sphere area at the crossing and the gradient interpolated
/// from second-order nodal slopes;
/// tensor grids use the bilinear gradient at each segment midpoint and the segment length.
/// Levels whose crossings touch the boundary are dropped.
inline VerificationReport coarea_flux(const ScalarField& G, const MatrixField& A, double p,
                                      const std::vector<double>& t_list, std::optional<double> tol = std::nullopt) {
  const Mesh& m = G.mesh();
  detail::require(&A.mesh() == &m, "coarea_flux: A is not on the mesh of G");
  VerificationReport rep;
  rep.check_name = "coarea_flux";
  const double t_tol = tol.value_or(m.one_dimensional() ? 0.02 : 0.05);
  rep.parameters = {{"p", p}, {"t_list", t_list}, {"A", A.descriptor()}, {"mesh_id", m.id}, {"tol", t_tol}};
  rep.threshold = 1.0 + t_tol;
  rep.table.columns = {"t", "flux"};
  std::vector<double> F;
  for (double t : t_list) {
    if (!(G.min() < t && t < G.max())) {
      rep.notes.push_back("t=" + format_double(t) + " outside the range of G; dropped");
      continue;
    }
    const LevelSet ls = level_set(G, t);
    if (ls.touches_boundary) {
      rep.notes.push_back("t=" + format_double(t) + " level set touches the boundary; dropped");
      continue;
    }
    double flux = 0.0;
    if (m.one_dimensional()) {
      for (const Crossing& x : ls.crossings) {
        const int a = m.cells[x.cell][0], b = m.cells[x.cell][1];
        const double s = (x.r - m.x[a]) / (m.x[b] - m.x[a]);
        const double g = (1.0 - s) * detail::recovered_slope(G, a) + s * detail::recovered_slope(G, b);
        if (g == 0.0) continue;
        const double ga = std::sqrt(A[x.cell].a11) * std::abs(g);
        const double area = m.kind == MeshKind::radial ? unit_sphere_area(m.n_dim) * std::pow(x.r, m.n_dim - 1) : 1.0;
        flux += std::pow(ga, p - 1.0) * (ga / std::abs(g)) * area;
      }
    } else {
      for (const Segment& s : ls.segments) {
        const Vec2 g = bilinear_gradient(G, s.cell, s.midpoint());
        const double gn = std::hypot(g[0], g[1]);
        if (gn == 0.0) continue;
        const double ga = std::sqrt(A[s.cell].quad(g));
        flux += std::pow(ga, p - 1.0) * (ga / gn) * s.length();
      }
    }
    rep.table.add({t, flux});
    F.push_back(flux);
  }
  if (F.size() < 2) {
    rep.notes.push_back("fewer than two usable levels");
    rep.conditions["resolved"] = false;
  } else {
    const auto [lo, hi] = std::minmax_element(F.begin(), F.end());
    rep.statistic = *lo > 0.0 ? *hi / *lo : INFINITY;
  }
  rep.decide();
  return rep;
}

/// Variant for a Green potential with a density and possibly V != 0: the flux through
/// {G = t} equals the enclosed source M(t) = int_{G>t} (phi - V G^{p-1}), so the statistic
/// is max/min of F(t)/M(t). Cells cut by the level set count with their linear fraction.
inline VerificationReport coarea_flux(const GreenPotential& gp, const std::vector<double>& t_list,
                                      std::optional<double> tol = std::nullopt) {
  const ProblemSpec& spec = gp.spec;
  const Mesh& m = *spec.mesh;
  VerificationReport rep = coarea_flux(gp.G, spec.A, spec.p, t_list, tol);
  rep.parameters["normalized_by"] = "enclosed_source";
  rep.conditions.erase("resolved");
  DataTable t;
  t.columns = {"t", "flux", "enclosed", "ratio"};
  std::vector<double> ratios;
  for (const auto& row : rep.table.rows) {
    const double level = row[0];
    double M = 0.0;
    for (const Element& el : m.elements) {
      double lo = INFINITY, hi = -INFINITY;
      int above = 0;
      for (int j = 0; j < el.count; ++j) {
        const double g = gp.G[el.node[j]];
        lo = std::min(lo, g), hi = std::max(hi, g);
        above += g > level;
      }
      double frac = above == el.count ? 1.0 : 0.0;
      if (above > 0 && above < el.count)
        frac = m.one_dimensional() ? (hi - level) / (hi - lo) : double(above) / el.count;
      if (frac == 0.0) continue;
      const double gb = element_average(el, gp.G.values());
      M += frac * el.weight *
           (element_average(el, gp.density.values()) - spec.V[el.cell] * I_p(gb, spec.p));
    }
    t.add({level, row[1], M, row[1] / M});
    ratios.push_back(row[1] / M);
  }
  rep.table = t;
  if (ratios.size() < 2) {
    rep.conditions["resolved"] = false;
    rep.statistic = NAN;
  } else {
    const auto [lo, hi] = std::minmax_element(ratios.begin(), ratios.end());
    rep.statistic = *lo > 0.0 ? *hi / *lo : INFINITY;
  }
  rep.decide();
  return rep;
}

// ---------------------------------------------------------------------------
// chain rule

/// A concave increasing transform with its 1D p-Laplacian -(p-1)|f'|^{p-2} f''.
struct ConcaveTransform {
  std::string name;
  std::function<double(double)> f, df, d2f;
  /// Exponent q when f = t^q (enables the c_p factor check at q = (p-1)/p).
  std::optional<double> power;

  double minus_dp(double t, double p) const {
    const double d = df(t);
    return -(p - 1.0) * std::pow(std::abs(d), p - 2.0) * d2f(t);
  }
};

inline ConcaveTransform power_transform(double q) {
  detail::require(q > 0.0 && q <= 1.0, "power_transform needs 0 < q <= 1");
  return {"t^" + format_double(q), [q](double t) { return std::pow(t, q); },
          [q](double t) { return q * std::pow(t, q - 1.0); },
          [q](double t) { return q * (q - 1.0) * std::pow(t, q - 2.0); }, q};
}

inline ConcaveTransform identity_transform() {
  return {"t", [](double t) { return t; }, [](double) { return 1.0; }, [](double) { return 0.0; }, 1.0};
}

/// max over nodes of |(f(u)/(f'(u) u))^{p-1} / c_p - 1| for f = t^{(p-1)/p}.
inline double c_p_factor_deviation(const ScalarField& u, double p) {
  const ConcaveTransform f = power_transform((p - 1.0) / p);
  double dev = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double t = u[i];
    dev = std::max(dev, std::abs(std::pow(f.f(t) / (f.df(t) * t), p - 1.0) / c_p(p) - 1.0));
  }
  return dev;
}

/// Weak residual of Q(f(u)) against the termwise right-hand side
///   (-Delta_p f)(u) |grad u|_A^p + f'(u)^{p-1} (-Delta_{p,A} u) + V f(u)^{p-1},
/// as a relative l2 norm over interior nodes.
inline VerificationReport chain_rule_residual(const ProblemSpec& spec, const ScalarField& u,
                                              const ConcaveTransform& f, double tol = 1e-3) {
  spec.validate();
  detail::check_same(spec, u, "chain_rule_residual");
  for (std::size_t i = 0; i < u.size(); ++i) detail::require(u[i] > 0.0, "chain_rule_residual needs u > 0");
  const Mesh& m = *spec.mesh;
  const double p = spec.p;

  const ScalarField fu = u.map(f.f);
  const ScalarField lhs = apply_Q(spec, fu);
  const auto parts = detail::residual_parts(spec, u.values());
  std::vector<double> rhs(m.node_count(), 0.0);
  for (const Element& el : m.elements) {
    const double ub = element_average(el, u.values());
    const double g = std::sqrt(spec.A[el.cell].quad(element_gradient(el, u.values())));
    const double t1 = f.minus_dp(ub, p) * std::pow(g, p);
    const double t3 = spec.V[el.cell] * std::pow(f.f(ub), p - 1.0);
    for (int j = 0; j < el.count; ++j) rhs[el.node[j]] += el.weight * (t1 + t3) / el.count;
  }
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < rhs.size(); ++i) {
    if (m.is_boundary(i)) continue;
    rhs[i] += std::pow(f.df(u[i]), p - 1.0) * parts.kinetic[i];
    num += (lhs[i] - rhs[i]) * (lhs[i] - rhs[i]);
    den += lhs[i] * lhs[i];
  }

  VerificationReport rep;
  rep.check_name = "chain_rule_residual";
  rep.parameters = {{"p", p}, {"f", f.name}, {"mesh_id", m.id}, {"cells", m.cell_count()}};
  rep.threshold = tol;
  rep.statistic = den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
  if (f.power && std::abs(*f.power - (p - 1.0) / p) < 1e-15) {
    const double dev = c_p_factor_deviation(u, p);
    rep.parameters["c_p_factor_deviation"] = dev;
    rep.conditions["c_p_factor_exact"] = dev <= 1e-12;
  }
  rep.decide();
  return rep;
}

// ---------------------------------------------------------------------------
// simplified energy

struct SimpEquivalenceOptions {
  /// Relative residual above which v is not accepted as a solution.
  double solution_tol = 1e-6;
  /// Largest accepted max/min ratio over the family.
  double max_band = 1e6;
};

/// Ratios E(v w) / E_sim(v, w) and E(v w) / (X + X^{2/p} Y^{(p-2)/p}) over the family.
/// statistic = max/min of the first ratio.
inline VerificationReport simp_equivalence(const ProblemSpec& spec, const ScalarField& v,
                                           const TestFunctionFamily& fam, const SimpEquivalenceOptions& opts = {}) {
  spec.validate();
  detail::check_same(spec, v, "simp_equivalence");
  const Mesh& m = *spec.mesh;
  const double p = spec.p;
  VerificationReport rep;
  rep.check_name = "simp_equivalence";
  rep.parameters = {{"p", p}, {"family", fam.to_json()}, {"mesh_id", m.id}};
  rep.threshold = opts.max_band;

  // residual relative to that of the boundary lift (v with interior values zeroed)
  std::vector<double> lift(v.vector());
  for (std::size_t i = 0; i < lift.size(); ++i)
    if (!m.is_boundary(i)) lift[i] = 0.0;
  const auto parts = detail::residual_parts(spec, v.values());
  const auto parts0 = detail::residual_parts(spec, lift);
  double r2 = 0.0, s2 = 0.0;
  for (std::size_t i = 0; i < m.node_count(); ++i) {
    if (m.is_boundary(i)) continue;
    const double r = parts.kinetic[i] + parts.potential[i], r0 = parts0.kinetic[i] + parts0.potential[i];
    r2 += r * r;
    s2 += r0 * r0;
  }
  const double rel = s2 > 0.0 ? std::sqrt(r2 / s2) : std::sqrt(r2);
  rep.parameters["v_residual"] = rel;
  rep.conditions["valid_v"] = rel <= opts.solution_tol;
  if (rel > opts.solution_tol) rep.notes.push_back("invalid v: relative residual " + format_double(rel));

  rep.table.columns = {"member", "energy", "energy_sim", "ratio", "bound_ratio"};
  std::vector<double> ratios, bounds;
  const auto ws = fam.members(spec.mesh);
  for (std::size_t k = 0; k < ws.size(); ++k) {
    std::vector<double> vw(m.node_count());
    for (std::size_t i = 0; i < vw.size(); ++i) vw[i] = v[i] * ws[k][i];
    const double E = energy(spec, ScalarField(spec.mesh, std::move(vw))).total;
    const double S = energy_sim(spec, v, ws[k]);
    const double X = X_functional(spec, v, ws[k]), Y = Y_functional(spec, v, ws[k]);
    const double B = X + std::pow(X, 2.0 / p) * std::pow(Y, (p - 2.0) / p);
    rep.table.add({double(k), E, S, E / S, E / B});
    ratios.push_back(E / S);
    bounds.push_back(E / B);
  }
  const auto [lo, hi] = std::minmax_element(ratios.begin(), ratios.end());
  const auto [blo, bhi] = std::minmax_element(bounds.begin(), bounds.end());
  rep.parameters["ratio_min"] = *lo;
  rep.parameters["ratio_max"] = *hi;
  rep.parameters["bound_ratio_min"] = *blo;
  rep.parameters["bound_ratio_max"] = *bhi;
  rep.statistic = *lo > 0.0 ? *hi / *lo : INFINITY;
  rep.decide();
  return rep;
}

// ---------------------------------------------------------------------------
// exhaustion monotonicity

inline VerificationReport exhaustion_monotonicity(const GreenPotential& gp, double tol = 1e-12) {
  VerificationReport rep;
  rep.check_name = "exhaustion_monotonicity";
  rep.parameters = {{"p", gp.spec.p}, {"levels", gp.trace.size()}, {"mesh_id", gp.spec.mesh->id}};
  const double sup = gp.G.max();
  rep.threshold = tol;
  rep.table.columns = {"level", "sup_G", "max_decrease_rel"};
  double worst = 0.0;
  for (const auto& st : gp.trace) {
    const double rel = st.max_decrease / sup;
    rep.table.add({double(st.level), st.sup_G, rel});
    worst = std::max(worst, rel);
  }
  rep.statistic = worst;
  rep.decide();
  return rep;
}

}  // namespace hardylab
