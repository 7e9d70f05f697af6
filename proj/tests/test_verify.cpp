#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "hardylab/verify.hpp"

using namespace hardylab;
constexpr double pi = std::numbers::pi;

namespace {

struct Classical {
  MeshPtr mesh;
  ProblemSpec spec;
  ScalarField G;
  HardyWeight hw;
};

Classical classical(double lo, double hi, int N) {
  auto m = build_radial_mesh(3, lo, hi, N, Grading::log_uniform());
  auto spec = ProblemSpec::laplacian(2.0, m);
  auto G = sample_oracle(m, radial_green_oracle(2.0, 3));
  auto hw = weight_from_green(spec, GreenPotential::from_field(spec, G));
  return {m, spec, G, hw};
}

}  // namespace

TEST(Family, VanishesOnBoundaryAndReproducible) {
  auto radial = build_radial_mesh(3, 1e-3, 1e3, 400, Grading::log_uniform());
  auto tensor = build_tensor_mesh({-1, 1}, {-1, 1}, 20, 20, Box{-0.1, 0.1, -0.1, 0.1});
  for (auto kind : {TestFunctionFamily::Kind::random_bumps, TestFunctionFamily::Kind::tensor_sines,
                    TestFunctionFamily::Kind::hat_products})
    for (const auto& m : {radial, tensor}) {
      TestFunctionFamily fam;
      fam.kind = kind;
      fam.count = 6;
      fam.seed = 42;
      auto a = fam.members(m), b = fam.members(m);
      ASSERT_EQ(a.size(), 6u);
      for (std::size_t k = 0; k < a.size(); ++k) {
        EXPECT_GT(a[k].max_abs(), 0.0);
        for (int bn : m->boundary_nodes()) EXPECT_EQ(a[k][bn], 0.0);
        for (std::size_t i = 0; i < a[k].size(); ++i) EXPECT_EQ(a[k][i], b[k][i]);
      }
      fam.seed = 43;
      auto c = fam.members(m);
      bool differs = false;
      for (std::size_t i = 0; i < c[0].size(); ++i) differs = differs || c[0][i] != a[0][i];
      EXPECT_TRUE(differs);
    }
}

TEST(HardyMargin, ClassicalBumpPositive) {
  auto c = classical(1e-2, 1e2, 800);
  TestFunctionFamily fam;
  fam.tilt_lo = fam.tilt_hi = 0.0;
  auto rep = hardy_margin(c.spec, c.hw, fam);
  EXPECT_TRUE(rep.pass) << rep.to_text();
  EXPECT_GT(rep.statistic, 0.0);
  EXPECT_EQ(rep.table.rows.size(), 20u);
}

TEST(HardyMargin, NearGroundStateSaturates) {
  // r^{-1/2} cut off by the null-sequence plateau: margin close to 0 from above
  auto c = classical(1e-10, 1e10, 4000);
  auto u = null_sequence_field(c.G, 2.0, 80);
  const double E = energy(c.spec, u).total, H = weighted_lp(c.hw.W, u, 2.0);
  EXPECT_GT(E, H);
  EXPECT_LT((E - H) / E, 0.1);
  EXPECT_LT(E - 1.5 * H, 0.0);
}

TEST(HardyMargin, OverweightProbe) {
  auto c = classical(1e-4, 1e4, 1500);
  TestFunctionFamily fam;
  fam.count = 40;
  fam.seed = 3;
  fam.tilt_lo = 0.4;
  fam.tilt_hi = 0.6;
  auto probe = overweight_probe(c.spec, c.hw, fam);
  EXPECT_TRUE(probe.pass) << probe.to_text();
  EXPECT_EQ(probe.check_name, "hardy_margin_overweight");
  EXPECT_TRUE(hardy_margin(c.spec, c.hw, fam).pass);
}

TEST(NullSequence, CutoffValues) {
  for (int k : {2, 5, 32}) {
    EXPECT_DOUBLE_EQ(null_cutoff(1.0, k), 1.0);
    EXPECT_EQ(null_cutoff(double(k) * k, k), 0.0);
    EXPECT_NEAR(null_cutoff(std::pow(k, -1.5), k), 0.5, 1e-14);
    EXPECT_NEAR(null_cutoff(std::pow(k, 1.5), k), 0.5, 1e-14);
    EXPECT_EQ(null_cutoff(std::pow(k, -2.5), k), 0.0);
  }
}

TEST(NullSequence, FieldValues) {
  auto m = build_interval_mesh(0, 1, 8, Grading::uniform());
  const int k = 4;
  // p = 2: f(G) = sqrt(G); choose G so that f = 1, k^2, k^{-3/2}
  std::vector<double> g(m->node_count(), 1.0);
  g[1] = std::pow(k, 4.0);
  g[2] = std::pow(k, -3.0);
  auto u = null_sequence_field(ScalarField(m, g), 2.0, k);
  EXPECT_DOUBLE_EQ(u[0], 1.0);
  EXPECT_EQ(u[1], 0.0);
  EXPECT_NEAR(u[2], std::pow(k, -1.5) / 2, 1e-15);
  EXPECT_THROW(null_sequence_field(ScalarField(m, g), 2.0, 1), ConstructionError);
}

TEST(NullSequence, DecayP2) {
  auto c = classical(1e-7, 1e7, 4000);
  auto rep = null_sequence_decay(critical_spec(c.spec, c.hw), c.G, {2, 4, 8, 16, 32});
  EXPECT_TRUE(rep.pass) << rep.to_text();
  auto Q = rep.table.column("Q_uk"), Y = rep.table.column("Y_k");
  for (std::size_t i = 1; i < Q.size(); ++i) {
    EXPECT_LT(Q[i], Q[i - 1]);
    EXPECT_GT(Y[i], Y[i - 1]);
  }
  // Y_k grows like log k: Y/log k roughly constant
  const auto k = rep.table.column("k");
  const double a = Y.front() / std::log(k.front()), b = Y.back() / std::log(k.back());
  EXPECT_LT(std::max(a, b) / std::min(a, b), 2.0);
}

TEST(NullSequence, UnderResolved) {
  auto c = classical(1e-1, 1e1, 200);
  auto rep = null_sequence_decay(critical_spec(c.spec, c.hw), c.G, {4, 8, 16, 32});
  EXPECT_FALSE(rep.pass);
  EXPECT_FALSE(rep.conditions.at("resolved"));
}

TEST(NullCriticality, LogGrowth) {
  auto c = classical(1.0, 1e5, 2000);
  auto rep = null_criticality_growth(c.hw, {1e-2, 1e-3, 1e-4, 1e-5});
  EXPECT_TRUE(rep.pass) << rep.to_text();
  // equal increments per decade
  auto I = rep.table.column("I");
  for (std::size_t i = 2; i < I.size(); ++i) EXPECT_NEAR(I[i] - I[i - 1], I[1] - I[0], 0.1 * (I[1] - I[0]));
  // continuum value: int W f^2 over tau < G < 1 is 4 pi (1/4) log(1/tau) = pi log(1/tau)
  auto ratio = rep.table.column("ratio");
  for (double q : ratio) EXPECT_NEAR(q, pi, 0.01 * pi);

  auto half = null_criticality_growth(c.hw.scaled(0.5), {1e-2, 1e-3, 1e-4, 1e-5});
  auto hr = half.table.column("ratio");
  for (std::size_t i = 0; i < hr.size(); ++i) EXPECT_NEAR(hr[i], 0.5 * ratio[i], 1e-12 * ratio[i]);
}

TEST(NullCriticality, TruncatesBelowResolution) {
  auto c = classical(1.0, 1e3, 400);
  auto rep = null_criticality_growth(c.hw, {1e-2, 1e-3, 1e-4, 1e-5});
  EXPECT_LT(rep.table.rows.size(), 4u);
  EXPECT_FALSE(rep.notes.empty());
}

TEST(Coarea, RadialFluxes) {
  auto m = build_radial_mesh(3, 0.1, 100, 2000, Grading::log_uniform());
  auto G = sample_oracle(m, radial_green_oracle(2.0, 3));
  auto rep = coarea_flux(G, MatrixField::identity(m), 2.0, {0.05, 0.5, 5.0});
  EXPECT_TRUE(rep.pass) << rep.to_text();
  for (double f : rep.table.column("flux")) EXPECT_NEAR(f, 4 * pi, 1e-3);

  auto o = radial_green_oracle(1.5, 3);
  auto G15 = sample_oracle(m, o);
  auto r15 = coarea_flux(G15, MatrixField::identity(m), 1.5, {1e-4, 1e-2, 1.0, 1e2});
  EXPECT_TRUE(r15.pass) << r15.to_text();
  // omega_2 ((n-p)/(p-1))^{p-1} = 4 pi sqrt(3)
  for (double f : r15.table.column("flux")) EXPECT_NEAR(f, 4 * pi * std::sqrt(3.0), 1e-3 * f);
}

TEST(Coarea, DropsLevelOutOfRange) {
  auto m = build_radial_mesh(3, 0.1, 10, 200, Grading::log_uniform());
  auto G = sample_oracle(m, radial_green_oracle(2.0, 3));
  auto rep = coarea_flux(G, MatrixField::identity(m), 2.0, {0.5, 1.0, 50.0});
  EXPECT_EQ(rep.table.rows.size(), 2u);
  EXPECT_FALSE(rep.notes.empty());
}

TEST(Coarea, PotentialInsideLevelSet) {
  // V != 0: raw flux moves, flux / enclosed source stays constant
  auto m = build_radial_mesh(3, 1e-2, 1e4, 1500, Grading::log_uniform());
  auto V = sample_cells(m, [](double r) { return r > 1 && r < 2 ? -0.1 : 0.0; });
  auto spec = ProblemSpec::make(2.0, m, MatrixField::identity(m), V);
  auto gp = green_potential(spec, Density{{0.3, 0}, 0.1, 1.0}, 6);
  const std::vector<double> ts{interpolate(gp.G, 0.6), interpolate(gp.G, 5.0), interpolate(gp.G, 50.0)};
  auto raw = coarea_flux(gp.G, spec.A, 2.0, ts);
  auto flux = raw.table.column("flux");
  EXPECT_GT(std::abs(flux.back() / flux.front() - 1), 0.02);
  auto norm = coarea_flux(gp, ts, 0.02);
  EXPECT_TRUE(norm.pass) << norm.to_text();
}

TEST(Coarea, Tensor) {
  auto m = build_tensor_mesh({-1, 1}, {-2, 2}, 100, 100, Box{-0.1, 0.1, -0.2, 0.2});
  auto G = sample_oracle(m, radial_green_oracle(1.25, 2), {1, 0, 4});
  auto rep = coarea_flux(G, MatrixField::diag(m, 1, 4), 1.25, {2, 5, 20, 100});
  EXPECT_TRUE(rep.pass) << rep.to_text();
}

TEST(ChainRule, Identity) {
  auto m = build_radial_mesh(3, 1.0, 10.0, 100, Grading::uniform());
  auto u = sample_nodes(m, [](double r) { return 1.0 / r; });
  for (double p : {1.5, 2.0, 3.0}) {
    auto rep = chain_rule_residual(ProblemSpec::laplacian(p, m), u, identity_transform());
    EXPECT_LE(rep.statistic, 1e-13) << p;
  }
}

TEST(ChainRule, SqrtConverges) {
  std::vector<double> res;
  for (int N : {250, 500, 1000}) {
    auto m = build_radial_mesh(3, 1.0, 10.0, N, Grading::uniform());
    auto rep = chain_rule_residual(ProblemSpec::laplacian(2.0, m), sample_nodes(m, [](double r) { return 1.0 / r; }),
                                   power_transform(0.5));
    EXPECT_TRUE(rep.conditions.at("c_p_factor_exact"));
    res.push_back(rep.statistic);
  }
  EXPECT_GE(std::log2(res[0] / res[1]), 1.0);
  EXPECT_GE(std::log2(res[1] / res[2]), 1.0);
}

TEST(ChainRule, CpFactor) {
  auto m = build_radial_mesh(3, 0.1, 10.0, 50, Grading::log_uniform());
  auto u = sample_nodes(m, [](double r) { return 1.0 / r + r; });
  for (double p : {1.5, 2.0, 3.0}) EXPECT_LE(c_p_factor_deviation(u, p), 1e-12);
  EXPECT_THROW(chain_rule_residual(ProblemSpec::laplacian(2.0, m), u.scaled(-1.0), power_transform(0.5)),
               ConstructionError);
}

TEST(SimpEquivalence, P2RatioOne) {
  auto m = build_interval_mesh(0, 1, 400, Grading::uniform());
  auto spec = ProblemSpec::laplacian(2.0, m);
  auto v = sample_nodes(m, [](double x) { return 1 + x; });  // harmonic, positive
  TestFunctionFamily fam;
  fam.count = 10;
  auto rep = simp_equivalence(spec, v, fam);
  EXPECT_TRUE(rep.pass) << rep.to_text();
  EXPECT_NEAR(rep.parameters["ratio_min"].get<double>(), 1.0, 1e-3);
  EXPECT_NEAR(rep.parameters["ratio_max"].get<double>(), 1.0, 1e-3);
}

TEST(SimpEquivalence, P3ConstantV) {
  auto m = build_interval_mesh(0, 1, 200, Grading::uniform());
  auto spec = ProblemSpec::laplacian(3.0, m);
  TestFunctionFamily fam;
  fam.count = 8;
  auto rep = simp_equivalence(spec, ScalarField::constant(m, 1.0), fam);
  EXPECT_TRUE(rep.pass) << rep.to_text();
  EXPECT_NEAR(rep.parameters["ratio_min"].get<double>(), 1.0, 1e-12);
  EXPECT_NEAR(rep.parameters["ratio_max"].get<double>(), 1.0, 1e-12);
  EXPECT_LE(rep.parameters["ratio_min"].get<double>(), 1.0 + 1e-12);
}

TEST(SimpEquivalence, InvalidV) {
  auto m = build_interval_mesh(0, 1, 100, Grading::uniform());
  auto spec = ProblemSpec::laplacian(2.0, m);
  auto v = sample_nodes(m, [](double x) { return 1 + x * x; });  // not harmonic
  auto rep = simp_equivalence(spec, v, TestFunctionFamily{});
  EXPECT_FALSE(rep.pass);
  EXPECT_FALSE(rep.conditions.at("valid_v"));
}

TEST(ExhaustionMonotone, GreenRun) {
  auto m = build_radial_mesh(3, 1e-2, 1e2, 300, Grading::log_uniform());
  auto gp = green_potential(ProblemSpec::laplacian(2.0, m), Density{{0.3, 0}, 0.1, 1.0}, 5);
  auto rep = exhaustion_monotonicity(gp);
  EXPECT_TRUE(rep.pass) << rep.to_text();
}

TEST(Reports, Deterministic) {
  auto c = classical(1e-2, 1e2, 400);
  TestFunctionFamily fam;
  fam.seed = 9;
  auto a = hardy_margin(c.spec, c.hw, fam).to_json().dump();
  auto b = hardy_margin(c.spec, c.hw, fam).to_json().dump();
  EXPECT_EQ(a, b);
}
