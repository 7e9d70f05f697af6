#pragma once

// Dirichlet solves of Q_{p,A,V}(u) = g and the principal eigenpair.
//
// The discrete problem is the minimization of
//   J(u) = sum_e w_e [ ((|g|_A^2 + eps^2)^{p/2} + V (u_avg^2 + eps^2)^{p/2}) / p ] - b . u
// over interior nodal values. Each iteration tries, in order, a full Newton
// step, a Newton step with the negative part of V dropped from the Hessian,
// and a Picard step (frozen coefficients); the first one that is a descent
// direction and passes the Armijo line search on J is taken.

#include <cmath>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <nlohmann/json.hpp>

#include "hardylab/operator.hpp"
#include "hardylab/report.hpp"

namespace hardylab {

struct SolveOptions {
  enum class Damping { line_search, fixed };
  enum class Init { zero, given, p2_warmstart };

  int max_iters = 200;
  double tol_residual = 1e-10;
  Damping damping = Damping::line_search;
  double alpha = 1.0;  // step for Damping::fixed
  Init init = Init::p2_warmstart;
  std::optional<ScalarField> initial;  // for Init::given
  /// Run principal_eigen first and refuse when lambda_1 <= 0.
  bool checked = false;
  /// Throw ConvergenceError instead of returning an unconverged result.
  bool require_convergence = true;
  /// Receives one JSON line per iteration when set.
  std::ostream* log = nullptr;

  void validate() const {
    detail::require(max_iters >= 1, "max_iters must be >= 1");
    detail::require(tol_residual > 0.0, "tol_residual must be > 0");
    detail::require(alpha > 0.0 && alpha <= 1.0, "damping factor must lie in (0, 1]");
    detail::require(init != Init::given || initial.has_value(), "Init::given needs an initial field");
  }
};

struct IterationRecord {
  int iter = 0;
  double residual = 0.0;
  double energy = 0.0;
  double step_size = 0.0;
};

struct SolveResult {
  ScalarField u;
  double residual_norm = NAN;
  int iterations = 0;
  bool converged = false;
  /// |u| exceeded 1e100 or J became non-finite.
  bool diverged = false;
  /// Stopped because the Newton correction fell below roundoff before tol_residual was met.
  bool roundoff_floor = false;
  std::vector<IterationRecord> history;
};

struct EigenResult {
  double lambda1 = NAN;
  ScalarField u1;
  int iterations = 0;
  bool converged = false;
  double shift = 0.0;
};

namespace detail {

enum class StepKind { newton, modified_newton, picard };

class NonlinearSystem {
 public:
  NonlinearSystem(const ProblemSpec& spec, std::vector<double> rhs) : spec_(spec), b_(std::move(rhs)) {
    const Mesh& m = *spec.mesh;
    index_.assign(m.node_count(), -1);
    for (std::size_t i = 0; i < m.node_count(); ++i)
      if (!m.is_boundary(i)) {
        index_[i] = static_cast<int>(free_.size());
        free_.push_back(static_cast<int>(i));
      }
  }

  std::size_t unknowns() const { return free_.size(); }

  double J(const std::vector<double>& u) const {
    const double p = spec_.p, eps2 = spec_.eps_reg * spec_.eps_reg;
    const double floor = std::pow(eps2, 0.5 * p);
    double s = 0.0;
    for (const Element& el : spec_.mesh->elements) {
      const Vec2 g = element_gradient(el, u);
      const double ub = element_average(el, u);
      const double kin = std::pow(spec_.A[el.cell].quad(g) + eps2, 0.5 * p) - floor;
      const double pot = std::pow(ub * ub + eps2, 0.5 * p) - floor;
      s += el.weight * (kin + spec_.V[el.cell] * pot) / p;
    }
    for (int i : free_) s -= b_[i] * u[i];
    return s;
  }

  /// J(t) - J(u) summed element by element, so that elements with tiny
  /// energies are not lost in the cancellation of two large totals.
  double delta_J(const std::vector<double>& u, const std::vector<double>& t) const {
    const double p = spec_.p, eps2 = spec_.eps_reg * spec_.eps_reg;
    double s = 0.0;
    for (const Element& el : spec_.mesh->elements) {
      const SymMat2& a = spec_.A[el.cell];
      const double ku = std::pow(a.quad(element_gradient(el, u)) + eps2, 0.5 * p);
      const double kt = std::pow(a.quad(element_gradient(el, t)) + eps2, 0.5 * p);
      const double uu = element_average(el, u), ut = element_average(el, t);
      const double pu = std::pow(uu * uu + eps2, 0.5 * p);
      const double pt = std::pow(ut * ut + eps2, 0.5 * p);
      s += el.weight * ((kt - ku) + spec_.V[el.cell] * (pt - pu)) / p;
    }
    for (int i : free_) s -= b_[i] * (t[i] - u[i]);
    return s;
  }

  /// dJ/du over the free nodes.
  Eigen::VectorXd grad(const std::vector<double>& u) const {
    const auto parts = residual_parts(spec_, u);
    Eigen::VectorXd r(free_.size());
    for (std::size_t k = 0; k < free_.size(); ++k) {
      const int i = free_[k];
      r[k] = parts.kinetic[i] + parts.potential[i] - b_[i];
    }
    return r;
  }

  Eigen::SparseMatrix<double> hessian(const std::vector<double>& u, StepKind kind) const {
    const double p = spec_.p, eps2 = spec_.eps_reg * spec_.eps_reg, h = 0.5 * (p - 2.0);
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(spec_.mesh->elements.size() * 9);
    for (const Element& el : spec_.mesh->elements) {
      const SymMat2& a = spec_.A[el.cell];
      const Vec2 g = element_gradient(el, u);
      const Vec2 ag = a.apply(g);
      const double s = a.quad(g) + eps2;
      const double c0 = std::pow(s, h);
      const double c1 = kind == StepKind::picard ? 0.0 : (p - 2.0) * std::pow(s, h - 1.0);
      const double ub = element_average(el, u);
      double v = spec_.V[el.cell];
      if (kind != StepKind::newton) v = std::max(v, 0.0);
      const double su = ub * ub + eps2;
      // d/du of (u^2 + eps^2)^{(p-2)/2} u, or the frozen coefficient for Picard
      const double dpot = kind == StepKind::picard ? std::pow(su, h) : std::pow(su, h - 1.0) * ((p - 1.0) * ub * ub + eps2);
      const double vcoef = v * dpot / (el.count * el.count);
      for (int j = 0; j < el.count; ++j) {
        const int rj = index_[el.node[j]];
        if (rj < 0) continue;
        const Vec2& dj = el.dchi[j];
        const Vec2 adj = a.apply(dj);
        const double agdj = ag[0] * dj[0] + ag[1] * dj[1];
        for (int k = 0; k < el.count; ++k) {
          const int rk = index_[el.node[k]];
          if (rk < 0) continue;
          const Vec2& dk = el.dchi[k];
          const double agdk = ag[0] * dk[0] + ag[1] * dk[1];
          const double kin = c0 * (adj[0] * dk[0] + adj[1] * dk[1]) + c1 * agdj * agdk;
          trip.emplace_back(rj, rk, el.weight * (kin + vcoef));
        }
      }
    }
    Eigen::SparseMatrix<double> H(free_.size(), free_.size());
    H.setFromTriplets(trip.begin(), trip.end());
    return H;
  }

  void axpy(std::vector<double>& u, double alpha, const Eigen::VectorXd& d) const {
    for (std::size_t k = 0; k < free_.size(); ++k) u[free_[k]] += alpha * d[k];
  }

  double free_norm(std::span<const double> v) const {
    double s = 0.0;
    for (int i : free_) s += v[i] * v[i];
    return std::sqrt(s);
  }

 private:
  const ProblemSpec& spec_;
  std::vector<double> b_;
  std::vector<int> index_;
  std::vector<int> free_;
};

inline double max_abs(const std::vector<double>& u) {
  double m = 0.0;
  for (double v : u) m = std::max(m, std::abs(v));
  return m;
}

/// Newton / line-search iteration at the spec's own eps_reg. u carries the
/// boundary values and the initial guess.
inline SolveResult solve_stage(const ProblemSpec& spec, const std::vector<double>& rhs, std::vector<double> u,
                               const SolveOptions& opts) {
  NonlinearSystem sys(spec, rhs);
  SolveResult out;

  std::vector<double> u_bc(u.size(), 0.0);
  for (std::size_t i = 0; i < u.size(); ++i)
    if (spec.mesh->is_boundary(i)) u_bc[i] = u[i];
  // relative residual scale: |b| + |r(u_bc)| with zero interior values
  const NonlinearSystem homog(spec, std::vector<double>(rhs.size(), 0.0));
  double scale = sys.free_norm(rhs) + homog.grad(u_bc).norm();
  if (!(scale > 0.0)) scale = 1.0;

  auto record = [&](int it, double res, double J, double step) {
    out.history.push_back({it, res, J, step});
    if (opts.log)
      *opts.log << nlohmann::json{{"iter", it}, {"residual", res}, {"energy", J}, {"step_size", step}}.dump() << '\n';
  };

  if (sys.unknowns() == 0) {
    out.u = ScalarField(spec.mesh, std::move(u));
    out.residual_norm = 0.0;
    out.converged = true;
    record(0, 0.0, 0.0, 0.0);
    return out;
  }

  double J = sys.J(u);
  Eigen::VectorXd gr = sys.grad(u);
  double step = 0.0;
  int it = 0;
  for (;; ++it) {
    const double res = gr.norm() / scale;
    record(it, res, J, step);
    out.residual_norm = res;
    if (res <= opts.tol_residual) {
      out.converged = true;
      break;
    }
    if (it >= opts.max_iters) break;

    bool accepted = false;
    for (StepKind kind : {StepKind::newton, StepKind::modified_newton, StepKind::picard}) {
      Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(sys.hessian(u, kind));
      if (ldlt.info() != Eigen::Success) continue;
      const Eigen::VectorXd d = -ldlt.solve(gr);
      if (ldlt.info() != Eigen::Success || !d.allFinite()) continue;
      const double slope = gr.dot(d);
      if (!(slope < 0.0)) continue;
      if (kind == StepKind::newton && d.lpNorm<Eigen::Infinity>() <= 1e-14 * max_abs(u) &&
          res <= std::max(1e3 * opts.tol_residual, 1e-8)) {
        // the Newton correction is below roundoff: this is the discrete solution
        out.roundoff_floor = true;
        break;
      }

      if (opts.damping == SolveOptions::Damping::fixed) {
        sys.axpy(u, opts.alpha, d);
        step = opts.alpha;
        J = sys.J(u);
        gr = sys.grad(u);
        accepted = true;
        break;
      }

      double alpha = 1.0;
      for (int ls = 0; ls < 60; ++ls, alpha *= 0.5) {
        std::vector<double> trial = u;
        sys.axpy(trial, alpha, d);
        const double dJ = sys.delta_J(u, trial);
        if (!std::isfinite(dJ)) continue;
        bool ok = dJ <= 1e-4 * alpha * slope;
        Eigen::VectorXd gt;
        if (!ok && dJ <= 1e-13 * std::abs(J)) {
          // energy flat to roundoff: accept when the gradient still drops
          gt = sys.grad(trial);
          ok = gt.norm() < gr.norm();
        }
        if (!ok) continue;
        u = std::move(trial);
        J = sys.J(u);
        gr = gt.size() ? gt : sys.grad(u);
        step = alpha;
        accepted = true;
        break;
      }
      if (accepted) break;
    }
    if (out.roundoff_floor) {
      out.converged = true;
      break;
    }
    if (!accepted) break;
    if (!std::isfinite(J) || max_abs(u) > 1e100) {
      out.diverged = true;
      break;
    }
  }
  out.iterations = it;
  bool finite = true;
  for (double v : u) finite = finite && std::isfinite(v);
  if (!finite) {
    out.diverged = true;
    out.converged = false;
    for (double& v : u) v = 0.0;
  }
  out.u = ScalarField(spec.mesh, std::move(u));
  return out;
}

inline double max_gradient(const ProblemSpec& spec, std::span<const double> u) {
  double g = 0.0;
  for (const Element& el : spec.mesh->elements) g = std::max(g, spec.A[el.cell].quad(element_gradient(el, u)));
  return std::sqrt(g);
}

/// For p != 2 the flux |g|^{p-2} g is not smooth at g = 0 and plain Newton
/// stalls where gradients change sign. The regularization is therefore
/// lowered in decades from 1e-2 * max|grad u| down to eps_reg, each stage
/// warm-starting the next.
inline SolveResult solve_system(const ProblemSpec& spec, const std::vector<double>& rhs, std::vector<double> u,
                                const SolveOptions& opts) {
  if (spec.p == 2.0) return solve_stage(spec, rhs, std::move(u), opts);
  SolveOptions stage_opts = opts;
  stage_opts.tol_residual = std::max(opts.tol_residual, 1e-6);
  stage_opts.log = nullptr;
  int spent = 0;
  for (double eps = 1e-2 * max_gradient(spec, u); eps > 10.0 * spec.eps_reg; eps *= 0.1) {
    ProblemSpec s = spec;
    s.eps_reg = eps;
    SolveResult r = solve_stage(s, rhs, u, stage_opts);
    spent += r.iterations;
    if (r.diverged) break;
    u.assign(r.u.values().begin(), r.u.values().end());
  }
  SolveResult out = solve_stage(spec, rhs, std::move(u), opts);
  out.iterations += spent;
  return out;
}

inline std::vector<double> boundary_vector(const Mesh& m, const std::vector<double>& bc) {
  const auto nodes = m.boundary_nodes();
  require(bc.empty() || bc.size() == nodes.size(), "boundary values need one entry per boundary node");
  std::vector<double> u(m.node_count(), 0.0);
  for (std::size_t k = 0; k < bc.size(); ++k) u[nodes[k]] = bc[k];
  return u;
}

/// Initial guess from opts (boundary entries of u_bc are kept).
inline std::vector<double> initial_guess(const ProblemSpec& spec, const std::vector<double>& rhs,
                                         const std::vector<double>& u_bc, const SolveOptions& opts) {
  const Mesh& m = *spec.mesh;
  std::vector<double> u = u_bc;
  if (opts.init == SolveOptions::Init::given) {
    const ScalarField& init = *opts.initial;
    require(&init.mesh() == &m, "initial field is not on the problem mesh");
    for (std::size_t i = 0; i < u.size(); ++i)
      if (!m.is_boundary(i)) u[i] = init[i];
    return u;
  }
  if (opts.init == SolveOptions::Init::zero || spec.p == 2.0) return u;

  SolveOptions lin = opts;
  lin.init = SolveOptions::Init::zero;
  lin.log = nullptr;
  lin.max_iters = 20;
  const ProblemSpec spec2 = spec.with_p(2.0);
  SolveResult r2 = solve_system(spec2, rhs, u_bc, lin);
  if (r2.diverged) return u;
  std::vector<double> w(r2.u.values().begin(), r2.u.values().end());

  bool zero_bc = true;
  for (double v : u_bc) zero_bc = zero_bc && v == 0.0;
  if (zero_bc) {
    // best multiple of the p = 2 solution: argmin_c J(c w)
    const EnergyBreakdown e = energy_terms(spec, w);
    double L = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i)
      if (!m.is_boundary(i)) L += rhs[i] * w[i];
    if (e.total > 0.0 && L > 0.0) {
      const double c = std::pow(L / e.total, 1.0 / (spec.p - 1.0));
      for (double& v : w) v *= c;
    }
  }
  return w;
}

inline double lp_norm_p(const Mesh& m, std::span<const double> u, double p) {
  double s = 0.0;
  for (const Element& el : m.elements) s += el.weight * std::pow(std::abs(element_average(el, u)), p);
  return s;
}

inline std::string history_tail(const SolveResult& r) {
  std::string s;
  const std::size_t from = r.history.size() > 5 ? r.history.size() - 5 : 0;
  for (std::size_t k = from; k < r.history.size(); ++k)
    s += (s.empty() ? "" : ", ") + format_double(r.history[k].residual);
  return s;
}

}  // namespace detail

EigenResult principal_eigen(const ProblemSpec& spec, const SolveOptions& opts = {});

/// Solves Q(u) = g with u = boundary_values on the boundary (one value per
/// entry of mesh.boundary_nodes(); empty means zero).
inline SolveResult dirichlet_solve(const ProblemSpec& spec, const ScalarField& g,
                                   const std::vector<double>& boundary_values = {}, const SolveOptions& opts = {}) {
  spec.validate();
  opts.validate();
  detail::check_same(spec, g, "dirichlet_solve");
  if (opts.checked) {
    SolveOptions eo;
    eo.require_convergence = false;
    const EigenResult eig = principal_eigen(spec, eo);
    if (!(eig.lambda1 > 0.0))
      throw CriticalitySuspected("dirichlet_solve: lambda_1 = " + format_double(eig.lambda1) +
                                 " <= 0, the operator is not subcritical on this mesh");
  }
  const std::vector<double> rhs = load_vector(*spec.mesh, g.values());
  const std::vector<double> u_bc = detail::boundary_vector(*spec.mesh, boundary_values);
  SolveResult r = detail::solve_system(spec, rhs, detail::initial_guess(spec, rhs, u_bc, opts), opts);
  if (opts.require_convergence && !r.converged)
    throw ConvergenceError("dirichlet_solve did not converge after " + std::to_string(r.iterations) +
                           " iterations" + (r.diverged ? " (diverged)" : "") +
                           "; last residuals: " + detail::history_tail(r));
  return r;
}

/// Rayleigh quotient energy(u) / int |u|^p.
inline double rayleigh_quotient(const ProblemSpec& spec, const ScalarField& u) {
  detail::check_same(spec, u, "rayleigh_quotient");
  const double n = detail::lp_norm_p(*spec.mesh, u.values(), spec.p);
  detail::require(n > 0.0, "rayleigh_quotient of the zero function");
  return detail::energy_terms(spec, u.values()).total / n;
}

/// Principal eigenpair by nonlinear inverse iteration:
/// solve (Q + sigma)(w) = |u|^{p-2} u, then u <- |w| / ||w||_p.
inline EigenResult principal_eigen(const ProblemSpec& spec, const SolveOptions& opts) {
  spec.validate();
  const Mesh& m = *spec.mesh;
  const double p = spec.p;
  EigenResult out;
  out.shift = std::max(0.0, -spec.V.min());
  const ProblemSpec shifted = spec.with_potential(spec.V.map([&](double v) { return v + out.shift; }));

  std::vector<double> u(m.node_count(), 0.0);
  for (std::size_t i = 0; i < u.size(); ++i)
    if (!m.is_boundary(i)) u[i] = opts.initial ? std::abs((*opts.initial)[i]) : 1.0;
  auto normalize = [&](std::vector<double>& v) {
    const double n = std::pow(detail::lp_norm_p(m, v, p), 1.0 / p);
    detail::require(n > 0.0 && std::isfinite(n), "principal_eigen: iterate vanished");
    for (double& x : v) x /= n;
  };
  normalize(u);
  double lambda = rayleigh_quotient(spec, ScalarField(spec.mesh, u));

  SolveOptions inner;
  inner.tol_residual = 1e-11;
  inner.require_convergence = false;
  const int max_outer = std::max(opts.max_iters, 50);
  for (int it = 1; it <= max_outer; ++it) {
    std::vector<double> rhs(m.node_count(), 0.0);
    for (const Element& el : m.elements) {
      const double ip = I_p(element_average(el, u), p) / el.count;
      for (int j = 0; j < el.count; ++j) rhs[el.node[j]] += el.weight * ip;
    }
    const double mu = lambda + out.shift;
    std::vector<double> guess = u;
    if (mu > 0.0) {
      const double c = std::pow(mu, -1.0 / (p - 1.0));
      for (double& x : guess) x *= c;
      inner.init = SolveOptions::Init::given;
      inner.initial = ScalarField(spec.mesh, guess);
      guess = detail::initial_guess(shifted, rhs, std::vector<double>(m.node_count(), 0.0), inner);
    } else {
      inner.init = SolveOptions::Init::p2_warmstart;
      guess = detail::initial_guess(shifted, rhs, std::vector<double>(m.node_count(), 0.0), inner);
    }
    SolveResult r = detail::solve_system(shifted, rhs, std::move(guess), inner);
    out.iterations = it;
    if (r.diverged) break;
    std::vector<double> w(r.u.values().begin(), r.u.values().end());
    for (double& x : w) x = std::abs(x);
    normalize(w);
    const double next = rayleigh_quotient(spec, ScalarField(spec.mesh, w));
    u = std::move(w);
    const bool done = std::abs(next - lambda) <= 1e-10 * std::abs(next) && r.converged;
    lambda = next;
    if (done) {
      out.converged = true;
      break;
    }
  }
  out.lambda1 = lambda;
  out.u1 = ScalarField(spec.mesh, std::move(u));
  if (opts.require_convergence && !out.converged)
    throw ConvergenceError("principal_eigen did not converge; best quotient " + format_double(lambda));
  return out;
}

/// One pair of monotone data for the comparison principle: g1 <= g2, bc1 <= bc2.
struct ComparisonPair {
  ScalarField g1;
  std::vector<double> bc1;
  ScalarField g2;
  std::vector<double> bc2;
};

/// Reports max over valid pairs and nodes of (u1 - u2); passes iff <= 1e-8 * scale.
inline VerificationReport comparison_check(const ProblemSpec& spec, const std::vector<ComparisonPair>& pairs,
                                           const SolveOptions& opts = {}) {
  VerificationReport rep;
  rep.check_name = "comparison_principle";
  rep.parameters = {{"p", spec.p}, {"mesh_id", spec.mesh->id}, {"pairs", pairs.size()}};
  rep.table.columns = {"pair", "valid", "max_u1_minus_u2", "scale"};

  SolveOptions eo;
  eo.require_convergence = false;
  const EigenResult eig = principal_eigen(spec, eo);
  rep.parameters["lambda1"] = eig.lambda1;
  const bool subcritical = eig.lambda1 > 0.0;
  if (!subcritical) rep.notes.push_back("lambda_1 <= 0: every pair is invalid");

  SolveOptions so = opts;
  so.require_convergence = false;
  double worst = -INFINITY, scale = 0.0;
  int valid_count = 0;
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const auto& pr = pairs[k];
    bool valid = subcritical;
    for (std::size_t i = 0; i < pr.g1.size() && valid; ++i) valid = pr.g1[i] <= pr.g2[i];
    const std::vector<double> b1 = detail::boundary_vector(*spec.mesh, pr.bc1);
    const std::vector<double> b2 = detail::boundary_vector(*spec.mesh, pr.bc2);
    for (std::size_t i = 0; i < b1.size() && valid; ++i) valid = b1[i] <= b2[i];
    double diff = NAN, sc = NAN;
    if (valid) {
      const SolveResult r1 = dirichlet_solve(spec, pr.g1, pr.bc1, so);
      const SolveResult r2 = dirichlet_solve(spec, pr.g2, pr.bc2, so);
      if (!r1.converged || !r2.converged) {
        valid = false;
        rep.notes.push_back("pair " + std::to_string(k) + ": solve did not converge");
      } else {
        diff = -INFINITY;
        for (std::size_t i = 0; i < r1.u.size(); ++i) diff = std::max(diff, r1.u[i] - r2.u[i]);
        sc = std::max(r1.u.max_abs(), r2.u.max_abs());
        worst = std::max(worst, diff);
        scale = std::max(scale, sc);
        ++valid_count;
      }
    } else {
      rep.notes.push_back("pair " + std::to_string(k) + ": invalid (data not ordered or lambda_1 <= 0)");
    }
    rep.table.add({double(k), valid ? 1.0 : 0.0, diff, sc});
  }
  rep.statistic = valid_count ? worst : NAN;
  rep.threshold = 1e-8 * std::max(scale, 1e-300);
  rep.conditions["some_valid_pair"] = valid_count > 0;
  rep.decide();
  return rep;
}

}  // namespace hardylab
