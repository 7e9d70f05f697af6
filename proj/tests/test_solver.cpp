#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "hardylab/solver.hpp"

using namespace hardylab;
constexpr double pi = std::numbers::pi;

namespace {

// Shooting oracle for the first Dirichlet eigenvalue of -(|u'|^{p-2}u')' = lam |u|^{p-2}u on (0,1).
// With lam = 1 and u(0) = 0, u'(0) = 1 the first zero z fixes lam_1 = z^p by scaling x -> z x.
// State (u, w) with w = |u'|^{p-2}u', so u' = |w|^{1/(p-1)-1} w and w' = -|u|^{p-2}u.
double shooting_eigenvalue(double p) {
  auto rhs = [p](double u, double w, double& du, double& dw) {
    du = w == 0.0 ? 0.0 : std::copysign(std::pow(std::abs(w), 1.0 / (p - 1.0)), w);
    dw = u == 0.0 ? 0.0 : -std::copysign(std::pow(std::abs(u), p - 1.0), u);
  };
  const double h = 1e-5;
  double x = 0, u = 0, w = 1;
  for (;;) {
    double k1u, k1w, k2u, k2w, k3u, k3w, k4u, k4w;
    rhs(u, w, k1u, k1w);
    rhs(u + 0.5 * h * k1u, w + 0.5 * h * k1w, k2u, k2w);
    rhs(u + 0.5 * h * k2u, w + 0.5 * h * k2w, k3u, k3w);
    rhs(u + h * k3u, w + h * k3w, k4u, k4w);
    const double un = u + h / 6 * (k1u + 2 * k2u + 2 * k3u + k4u);
    const double wn = w + h / 6 * (k1w + 2 * k2w + 2 * k3w + k4w);
    if (x > h && un <= 0.0) {
      const double z = x + h * u / (u - un);
      return std::pow(z, p);
    }
    x += h;
    u = un;
    w = wn;
  }
}

ProblemSpec interval_spec(double p, double a, double b, int N, double V = 0.0) {
  auto m = build_interval_mesh(a, b, N, Grading::uniform());
  return ProblemSpec::make(p, m, MatrixField::identity(m), CellField::constant(m, V));
}

}  // namespace

TEST(Oracle, ShootingMatchesClosedForm) {
  const double p = 1.5;
  const double pi_p = 2 * pi / (p * std::sin(pi / p));
  EXPECT_NEAR(shooting_eigenvalue(p), (p - 1) * std::pow(pi_p, p), 1e-6);
  EXPECT_NEAR(shooting_eigenvalue(2.0), pi * pi, 1e-6);
}

TEST(Dirichlet, ZeroData) {
  auto s = interval_spec(3.0, 0, 1, 50);
  auto r = dirichlet_solve(s, ScalarField::zeros(s.mesh));
  EXPECT_TRUE(r.converged);
  EXPECT_EQ(r.u.max_abs(), 0.0);
}

TEST(Dirichlet, P2Load) {
  auto s = interval_spec(2.0, 0, 1, 200);
  auto r = dirichlet_solve(s, ScalarField::constant(s.mesh, 1.0));
  EXPECT_NEAR(r.u.max(), 0.125, 1e-4);
  EXPECT_LE(r.residual_norm, 1e-10);
  for (std::size_t i = 0; i < r.u.size(); ++i) EXPECT_GE(r.u[i], 0.0);
}

TEST(Dirichlet, P3Load) {
  auto s = interval_spec(3.0, -1, 1, 400);
  auto r = dirichlet_solve(s, ScalarField::constant(s.mesh, 1.0));
  EXPECT_NEAR(interpolate(r.u, 0.0), 2.0 / 3.0, 1e-3);
  for (std::size_t i = 0; i < r.u.size(); ++i) {
    const double x = s.mesh->x[i];
    EXPECT_NEAR(r.u[i], 2.0 / 3.0 * (1 - std::pow(std::abs(x), 1.5)), 2e-3);
  }
}

TEST(Dirichlet, P15LoadConverges) {
  auto s = interval_spec(1.5, 0, 1, 200);
  auto r = dirichlet_solve(s, ScalarField::constant(s.mesh, 1.0));
  // exact: u(1/2) = (1/3) (1/2)^3 = 1/24 from |u'|^{1/2} u' = 1/2 - x
  EXPECT_NEAR(r.u.max(), 1.0 / 24, 2e-4);
}

TEST(Dirichlet, LinearScaling) {
  auto s = interval_spec(2.0, 0, 1, 100);
  auto g = sample_nodes(s.mesh, [](double x) { return 1 + std::sin(3 * x); });
  auto a = dirichlet_solve(s, g), b = dirichlet_solve(s, g.scaled(2.0));
  for (std::size_t i = 0; i < a.u.size(); ++i) EXPECT_NEAR(b.u[i], 2 * a.u[i], 1e-13);
}

TEST(Dirichlet, BoundaryValues) {
  auto s = interval_spec(2.0, 0, 1, 40);
  auto r = dirichlet_solve(s, ScalarField::zeros(s.mesh), {0.0, 1.0});
  for (std::size_t i = 0; i < r.u.size(); ++i) EXPECT_NEAR(r.u[i], s.mesh->x[i], 1e-12);
}

TEST(Dirichlet, EnergyNonIncreasing) {
  auto s = interval_spec(3.0, 0, 1, 100);
  auto r = dirichlet_solve(s, sample_nodes(s.mesh, [](double x) { return 1 + 10 * x * x; }));
  ASSERT_GE(r.history.size(), 2u);
  for (std::size_t k = 1; k < r.history.size(); ++k)
    EXPECT_LE(r.history[k].energy, r.history[k - 1].energy + 1e-12 * std::abs(r.history[k - 1].energy));
}

TEST(Dirichlet, IterationLog) {
  auto s = interval_spec(3.0, 0, 1, 30);
  std::ostringstream os;
  SolveOptions o;
  o.log = &os;
  dirichlet_solve(s, ScalarField::constant(s.mesh, 1.0), {}, o);
  std::istringstream is(os.str());
  std::string line;
  int n = 0;
  while (std::getline(is, line)) {
    auto j = nlohmann::json::parse(line);
    for (const char* k : {"iter", "residual", "energy", "step_size"}) EXPECT_TRUE(j.contains(k));
    ++n;
  }
  EXPECT_GT(n, 0);
}

TEST(Dirichlet, FixedDamping) {
  auto s = interval_spec(2.0, 0, 1, 50);
  SolveOptions o;
  o.damping = SolveOptions::Damping::fixed;
  o.alpha = 0.5;
  o.init = SolveOptions::Init::zero;
  auto r = dirichlet_solve(s, ScalarField::constant(s.mesh, 1.0), {}, o);
  EXPECT_TRUE(r.converged);
  EXPECT_NEAR(r.u.max(), 0.125, 1e-3);
}

TEST(Dirichlet, OptionValidation) {
  auto s = interval_spec(2.0, 0, 1, 20);
  SolveOptions o;
  o.alpha = 0.0;
  o.damping = SolveOptions::Damping::fixed;
  EXPECT_THROW(dirichlet_solve(s, ScalarField::zeros(s.mesh), {}, o), ConstructionError);
  SolveOptions g;
  g.init = SolveOptions::Init::given;
  EXPECT_THROW(dirichlet_solve(s, ScalarField::zeros(s.mesh), {}, g), ConstructionError);
}

TEST(Dirichlet, CheckedRefusesSupercritical) {
  auto s = interval_spec(2.0, 0, 1, 100, -12.0);  // lambda_1 = pi^2 - 12 < 0
  SolveOptions o;
  o.checked = true;
  EXPECT_THROW(dirichlet_solve(s, ScalarField::constant(s.mesh, 1.0), {}, o), CriticalitySuspected);
}

TEST(Dirichlet, NonConvergenceReportsHistory) {
  auto s = interval_spec(3.0, 0, 1, 100);
  SolveOptions o;
  o.max_iters = 1;
  o.tol_residual = 1e-15;
  o.init = SolveOptions::Init::zero;
  try {
    dirichlet_solve(s, ScalarField::constant(s.mesh, 1.0), {}, o);
    FAIL() << "expected ConvergenceError";
  } catch (const ConvergenceError& e) {
    EXPECT_NE(std::string(e.what()).find("last residuals"), std::string::npos);
  }
}

TEST(Eigen, P2) {
  auto s = interval_spec(2.0, 0, 1, 400);
  auto e = principal_eigen(s);
  EXPECT_TRUE(e.converged);
  EXPECT_NEAR(e.lambda1, pi * pi, 0.005 * pi * pi);
  EXPECT_NEAR(rayleigh_quotient(s, e.u1), e.lambda1, 1e-10 * e.lambda1);
  for (std::size_t i = 0; i < e.u1.size(); ++i) EXPECT_GE(e.u1[i], 0.0);
}

TEST(Eigen, ShiftByConstant) {
  auto s = interval_spec(2.0, 0, 1, 100);
  auto a = principal_eigen(s);
  auto b = principal_eigen(s.with_potential(CellField::constant(s.mesh, 3.0)));
  EXPECT_NEAR(b.lambda1 - a.lambda1, 3.0, 1e-8);
  for (std::size_t i = 0; i < a.u1.size(); ++i) EXPECT_NEAR(a.u1[i], b.u1[i], 1e-6);
}

TEST(Eigen, P15Shooting) {
  auto s = interval_spec(1.5, 0, 1, 400);
  const double oracle = shooting_eigenvalue(1.5);
  auto e = principal_eigen(s);
  EXPECT_NEAR(e.lambda1, oracle, 0.01 * oracle);
}

TEST(Eigen, InitialScalingInvariant) {
  auto s = interval_spec(3.0, 0, 1, 100);
  SolveOptions a, b;
  a.initial = sample_nodes(s.mesh, [](double x) { return x * (1 - x); });
  b.initial = a.initial->scaled(40.0);
  EXPECT_NEAR(principal_eigen(s, a).lambda1, principal_eigen(s, b).lambda1, 1e-8);
}

TEST(Comparison, Examples) {
  auto s = interval_spec(2.0, 0, 1, 100);
  const auto& m = s.mesh;
  auto half = ScalarField::constant(m, 0.5), one = ScalarField::constant(m, 1.0);
  auto rep = comparison_check(s, {{one, {}, one, {}}, {half, {}, one, {}}});
  EXPECT_TRUE(rep.pass) << rep.to_text();
  EXPECT_LE(rep.table.rows[0][2], 1e-14);
  auto u1 = dirichlet_solve(s, half).u, u2 = dirichlet_solve(s, one).u;
  for (std::size_t i = 0; i < u1.size(); ++i) EXPECT_NEAR(u1[i], 0.5 * u2[i], 1e-14);

  auto s3 = interval_spec(3.0, 0, 1, 100);
  auto r3 = comparison_check(s3, {{ScalarField::zeros(s3.mesh), {}, ScalarField::constant(s3.mesh, 1.0), {}}});
  EXPECT_TRUE(r3.pass);
}

TEST(Comparison, InvalidPairFlagged) {
  auto s = interval_spec(2.0, 0, 1, 50);
  auto one = ScalarField::constant(s.mesh, 1.0), half = ScalarField::constant(s.mesh, 0.5);
  auto rep = comparison_check(s, {{one, {}, half, {}}});
  EXPECT_EQ(rep.table.rows[0][1], 0.0);
  EXPECT_FALSE(rep.pass);
}

TEST(Comparison, RandomPairs) {
  std::mt19937_64 gen(5);
  auto uni = [&] { return (gen() >> 11) * 0x1p-53; };
  for (double p : {1.5, 3.0}) {
    auto s = interval_spec(p, 0, 1, 60, 0.5);
    std::vector<ComparisonPair> pairs;
    for (int k = 0; k < 5; ++k) {
      const double a = uni(), b = uni(), c = uni();
      auto g1 = sample_nodes(s.mesh, [&](double x) { return a * std::sin(6 * x + b) - 0.2; });
      auto g2 = sample_nodes(s.mesh, [&](double x) { return a * std::sin(6 * x + b) - 0.2 + c; });
      pairs.push_back({g1, {0.0, c}, g2, {c, c}});
    }
    auto rep = comparison_check(s, pairs);
    EXPECT_TRUE(rep.pass) << rep.to_text();
  }
}
