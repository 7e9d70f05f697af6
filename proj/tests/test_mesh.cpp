#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "hardylab/level_set.hpp"
#include "hardylab/mesh.hpp"

using namespace hardylab;
constexpr double pi = std::numbers::pi;

TEST(RadialMesh, UniformSpacing) {
  auto m = build_radial_mesh(3, 0.01, 1.0, 100, Grading::uniform());
  EXPECT_EQ(m->node_count(), 101u);
  EXPECT_EQ(m->cell_count(), 100u);
  for (std::size_t c = 0; c < m->cell_count(); ++c) EXPECT_NEAR(m->cell_size(c), 0.0099, 1e-14);
  EXPECT_EQ(m->tags.front(), NodeTag::inner_boundary);
  EXPECT_EQ(m->tags.back(), NodeTag::outer_boundary);
  for (std::size_t i = 1; i + 1 < m->node_count(); ++i) EXPECT_EQ(m->tags[i], NodeTag::interior);
}

TEST(RadialMesh, GeometricRatio) {
  auto m = build_radial_mesh(2, 0.1, 1.0, 10, Grading::geometric(1.26));
  for (std::size_t c = 1; c < m->cell_count(); ++c)
    EXPECT_NEAR(m->cell_size(c) / m->cell_size(c - 1), 1.26, 1e-10);
  EXPECT_DOUBLE_EQ(m->x.front(), 0.1);
  EXPECT_DOUBLE_EQ(m->x.back(), 1.0);
}

TEST(RadialMesh, CellMeasureMidpoint) {
  // cells of width 0.01 on [0.01, 1]; [0.5, 0.51] is cell 49
  auto m = build_radial_mesh(3, 0.01, 1.0, 99, Grading::uniform());
  std::size_t c = 49;
  ASSERT_NEAR(m->x[m->cells[c][0]], 0.5, 1e-12);
  EXPECT_NEAR(m->cell_measures[c], 4 * pi * 0.505 * 0.505 * 0.01, 1e-12);
  EXPECT_NEAR(m->cell_measures[c], 0.03205, 1e-5);
}

TEST(RadialMesh, Rejects) {
  EXPECT_THROW(build_radial_mesh(3, 0.0, 1.0, 100, Grading::uniform()), ConstructionError);
  EXPECT_THROW(build_radial_mesh(3, -1.0, 1.0, 100, Grading::uniform()), ConstructionError);
  EXPECT_THROW(build_radial_mesh(3, 1.0, 0.5, 100, Grading::uniform()), ConstructionError);
  EXPECT_THROW(build_radial_mesh(3, 0.1, 1.0, 7, Grading::uniform()), ConstructionError);
}

TEST(TensorMesh, Counts) {
  auto m = build_tensor_mesh({0, 1}, {0, 1}, 10, 10);
  EXPECT_EQ(m->node_count(), 121u);
  EXPECT_EQ(m->cell_count(), 100u);
  for (double v : m->cell_measures) EXPECT_NEAR(v, 0.01, 1e-15);
  auto b = build_tensor_mesh({-1, 1}, {-1, 1}, 8, 8);
  for (double v : b->cell_measures) EXPECT_DOUBLE_EQ(v, 0.0625);
  EXPECT_EQ(b->boundary_nodes().size(), 32u);
  for (int i : b->boundary_nodes()) EXPECT_EQ(b->tags[i], NodeTag::outer_boundary);
}

TEST(TensorMesh, Hole) {
  auto full = build_tensor_mesh({-1, 1}, {-1, 1}, 40, 40);
  auto m = build_tensor_mesh({-1, 1}, {-1, 1}, 40, 40, Box{-0.05, 0.05, -0.05, 0.05});
  EXPECT_EQ(full->node_count() - m->node_count(), 1u);  // only the origin is strictly inside
  int rim = 0;
  for (std::size_t i = 0; i < m->node_count(); ++i) {
    const Vec2 q = m->node_point(i);
    EXPECT_GE(std::max(std::abs(q[0]), std::abs(q[1])), 0.05 - 1e-12);
    if (m->tags[i] == NodeTag::inner_boundary) {
      ++rim;
      EXPECT_LE(std::max(std::abs(q[0]), std::abs(q[1])), 0.05 + 1e-12);
    }
  }
  EXPECT_EQ(rim, 8);
}

TEST(TensorMesh, Rejects) {
  EXPECT_THROW(build_tensor_mesh({1, 1}, {0, 1}, 10, 10), ConstructionError);
  EXPECT_THROW(build_tensor_mesh({0, 1}, {0, 1}, 4, 10), ConstructionError);
}

TEST(Gradient, LinearExact) {
  auto m = build_radial_mesh(3, 0.1, 2.0, 37, Grading::geometric(1.05));
  auto g = gradient(sample_nodes(m, [](double r) { return r; }));
  for (const Vec2& v : g.values) EXPECT_NEAR(v[0], 1.0, 1e-13);
}

TEST(Gradient, QuadraticMidpoint) {
  auto m = build_radial_mesh(3, 0.1, 2.0, 40, Grading::uniform());
  auto g = gradient(sample_nodes(m, [](double r) { return r * r; }));
  for (std::size_t c = 0; c < m->cell_count(); ++c) EXPECT_NEAR(g.values[c][0], 2 * m->cell_center(c)[0], 1e-13);
}

TEST(Gradient, TensorPlane) {
  auto m = build_tensor_mesh({-1, 2}, {0, 1}, 12, 9);
  auto g = gradient(sample_nodes(m, [](double x, double y) { return x + 2 * y; }));
  EXPECT_EQ(g.dim, 2);
  for (const Vec2& v : g.values) {
    EXPECT_NEAR(v[0], 1.0, 1e-13);
    EXPECT_NEAR(v[1], 2.0, 1e-13);
  }
}

TEST(Integrate, ShellVolume) {
  auto m = build_radial_mesh(3, 0.01, 1.0, 200, Grading::uniform());
  std::vector<double> one(m->cell_count(), 1.0);
  // midpoint rule on r^2: error h^2/12 per unit length times 4pi
  EXPECT_NEAR(integrate(one, *m), 4 * pi / 3 * (1 - 1e-6), 1e-4);
  auto sq = build_tensor_mesh({0, 1}, {0, 1}, 10, 10);
  EXPECT_NEAR(integrate(std::vector<double>(sq->cell_count(), 1.0), *sq), 1.0, 1e-14);
}

TEST(Integrate, InverseSquareExact) {
  auto m = build_radial_mesh(3, 0.1, 1.0, 50, Grading::geometric(1.03));
  auto f = sample_cells(m, [](double r) { return 1.0 / (r * r); });
  EXPECT_NEAR(integrate(f), 4 * pi * 0.9, 1e-12);  // r_mid^2 cancels exactly
}

TEST(Integrate, SecondOrderRefinement) {
  // int (1/r)^2 4 pi r^2 dr on [0.1, 1] with f^2 taken from nodal values
  const double exact = 4 * pi * 0.9;
  std::vector<double> err;
  for (int N : {50, 100, 200, 400}) {
    auto m = build_radial_mesh(3, 0.1, 1.0, N, Grading::uniform());
    auto f = sample_nodes(m, [](double r) { return 1.0 / r; });
    std::vector<double> v(m->cell_count());
    for (std::size_t c = 0; c < v.size(); ++c) {
      const double a = f[m->cells[c][0]], b = f[m->cells[c][1]];
      v[c] = 0.5 * (a * a + b * b);
    }
    err.push_back(std::abs(integrate(v, *m) - exact));
  }
  for (std::size_t k = 1; k < err.size(); ++k) EXPECT_GE(std::log2(err[k - 1] / err[k]), 1.9);
}

TEST(LevelSet, RadialInverse) {
  auto m = build_radial_mesh(3, 0.1, 1.0, 90, Grading::uniform());
  auto f = sample_nodes(m, [](double r) { return 1.0 / r; });
  auto ls = level_set(f, 5.0);
  ASSERT_EQ(ls.crossings.size(), 1u);
  EXPECT_NEAR(ls.crossings[0].r, 0.2, 1e-3);
  // crossing sits on the linear interpolant exactly
  EXPECT_NEAR(interpolate(f, ls.crossings[0].r), 5.0, 5e-12);
}

TEST(LevelSet, TwoCrossings) {
  auto m = build_interval_mesh(0.0, 1.0, 100, Grading::uniform());
  auto f = sample_nodes(m, [](double x) { return x * (1 - x); });
  auto ls = level_set(f, 0.24);
  ASSERT_EQ(ls.crossings.size(), 2u);
  EXPECT_NEAR(ls.crossings[0].r, 0.4, 1e-3);
  EXPECT_NEAR(ls.crossings[1].r, 0.6, 1e-3);
}

TEST(LevelSet, TensorCircle) {
  auto m = build_tensor_mesh({-1, 1}, {-1, 1}, 64, 64);
  auto f = sample_nodes(m, [](double x, double y) { return x * x + y * y; });
  auto ls = level_set(f, 0.25);
  EXPECT_FALSE(ls.segments.empty());
  EXPECT_NEAR(ls.length(), pi, 0.02 * pi);
  for (const auto& s : ls.segments) {
    EXPECT_NEAR(bilinear_value(f, s.cell, s.a), 0.25, 1e-12);
    EXPECT_NEAR(bilinear_value(f, s.cell, s.b), 0.25, 1e-12);
  }
}

TEST(LevelSet, OutOfRange) {
  auto m = build_radial_mesh(3, 0.1, 1.0, 20, Grading::uniform());
  auto f = sample_nodes(m, [](double r) { return 1.0 / r; });
  EXPECT_THROW(level_set(f, 20.0), ConstructionError);
  EXPECT_THROW(level_set(f, 1.0), ConstructionError);
}

TEST(Exhaustion, Nested) {
  auto m = build_radial_mesh(3, 1e-3, 1.0, 120, Grading::log_uniform());
  const int K = 4;
  EXPECT_EQ(exhaustion(m, K, K).get(), m.get());
  std::vector<MeshPtr> lv;
  for (int k = 1; k <= K; ++k) lv.push_back(exhaustion(m, k, K));
  EXPECT_GT(lv[0]->x.front(), m->x.front());
  EXPECT_LT(lv[0]->x.back(), m->x.back());
  auto parent_nodes = [&](const MeshPtr& s) {
    std::set<double> out;
    for (double r : s->x) out.insert(r);
    return out;
  };
  for (int k = 0; k + 1 < K; ++k) {
    auto a = parent_nodes(lv[k]), b = parent_nodes(lv[k + 1]);
    EXPECT_TRUE(std::includes(b.begin(), b.end(), a.begin(), a.end()));
    EXPECT_LT(a.size(), b.size());
  }
}

TEST(Exhaustion, TensorNested) {
  auto m = build_tensor_mesh({-1, 1}, {-1, 1}, 32, 32);
  const int K = 3;
  std::size_t prev = 0;
  for (int k = 1; k <= K; ++k) {
    auto s = exhaustion(m, k, K);
    EXPECT_GT(s->node_count(), prev);
    prev = s->node_count();
    if (k < K) {
      ASSERT_EQ(s->parent_node.size(), s->node_count());
      for (std::size_t i = 0; i < s->node_count(); ++i) {
        const Vec2 a = s->node_point(i), b = m->node_point(s->parent_node[i]);
        EXPECT_EQ(a[0], b[0]);
        EXPECT_EQ(a[1], b[1]);
      }
    }
  }
  EXPECT_THROW(exhaustion(m, 0, K), ConstructionError);
}
