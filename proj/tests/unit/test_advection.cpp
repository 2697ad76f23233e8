#include <gtest/gtest.h>

#include <cmath>

#include "fluidnet/advection.hpp"
#include "fluidnet/fdops.hpp"
#include "test_util.hpp"

using namespace fluidnet;
using namespace fluidnet::testing;

namespace {

ScalarGrid gaussian(GridDims d, Vec2 c, double sigma) {
  ScalarGrid q(d);
  for (int j = 0; j < d.ny; ++j) {
    for (int i = 0; i < d.nx; ++i) {
      const double x = (i + 0.5) * d.h - c.x;
      const double y = (j + 0.5) * d.h - c.y;
      q.at(i, j) = std::exp(-(x * x + y * y) / (2 * sigma * sigma));
    }
  }
  return q;
}

double l2_diff(const ScalarGrid& a, const ScalarGrid& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.values.size(); ++k) s += (a.values[k] - b.values[k]) * (a.values[k] - b.values[k]);
  return std::sqrt(s);
}

bool strictly_inside(GridDims d, Vec2 p) { return p.x > 0.0 && p.y > 0.0 && p.x < d.nx * d.h && p.y < d.ny * d.h; }

}  // namespace

TEST(AdvectScalarSl, ZeroVelocityIsIdentity) {
  Rng rng(31);
  const GridDims d{8, 8, 1.0};
  const OccupancyGrid g = random_occupancy(d, rng, 0.2);
  const ScalarGrid q = random_scalar(d, rng);
  EXPECT_EQ(advect_scalar_sl(q, MacVelocity(d), g, 0.1), q);
}

TEST(AdvectScalarSl, OneCellShift) {
  const GridDims d{8, 6, 0.5};
  const double dt = 0.2;
  ScalarGrid q(d);
  for (int j = 0; j < d.ny; ++j) q.at(3, j) = 1.0;
  const ScalarGrid out = advect_scalar_sl(q, MacVelocity(d, {d.h / dt, 0.0}), OccupancyGrid(d), dt);
  for (int j = 0; j < d.ny; ++j)
    for (int i = 1; i < d.nx; ++i) EXPECT_NEAR(out.at(i, j), i == 4 ? 1.0 : 0.0, 1e-12);
}

TEST(AdvectScalarSl, NegativeDtRejected) {
  const GridDims d{8, 8, 1.0};
  EXPECT_THROW(advect_scalar_sl(ScalarGrid(d), MacVelocity(d), OccupancyGrid(d), -0.1), std::invalid_argument);
}

TEST(AdvectScalarSl, MatchesBruteForceTrace) {
  Rng rng(32);
  for (int trial = 0; trial < 20; ++trial) {
    const GridDims d{uniform_int(rng, 6, 14), uniform_int(rng, 6, 14), uniform(rng, 0.3, 1.5)};
    ScalarGrid q(d);
    const double kx = uniform(rng, 0.1, 0.6), ky = uniform(rng, 0.1, 0.6);
    for (int j = 0; j < d.ny; ++j)
      for (int i = 0; i < d.nx; ++i) q.at(i, j) = std::sin(kx * i) * std::cos(ky * j);
    const Vec2 vel{uniform(rng, -2.0, 2.0), uniform(rng, -2.0, 2.0)};
    const double dt = uniform(rng, 0.05, 1.0);
    const ScalarGrid out = advect_scalar_sl(q, MacVelocity(d, vel), OccupancyGrid(d), dt);
    for (int j = 0; j < d.ny; ++j) {
      for (int i = 0; i < d.nx; ++i) {
        const Vec2 x{(i + 0.5) * d.h, (j + 0.5) * d.h};
        const Vec2 back = x - dt * vel;
        if (!strictly_inside(d, back)) continue;
        EXPECT_NEAR(out.at(i, j), sample_scalar(q, back), 1e-12);
      }
    }
  }
}

TEST(AdvectScalarSl, SolidCellsKeepValues) {
  Rng rng(33);
  const GridDims d{10, 10, 1.0};
  const OccupancyGrid g = random_occupancy(d, rng, 0.3);
  const ScalarGrid q = random_scalar(d, rng);
  const ScalarGrid out = advect_scalar_sl(q, random_velocity(d, rng, -3.0, 3.0), g, 0.5);
  for (std::size_t k = 0; k < q.values.size(); ++k)
    if (g.solid[k]) EXPECT_EQ(out.values[k], q.values[k]);
}

TEST(ClampTrace, StaysInFluid) {
  Rng rng(34);
  for (int trial = 0; trial < 200; ++trial) {
    const GridDims d{12, 12, 0.5};
    const OccupancyGrid g = random_occupancy(d, rng, 0.3);
    int i, j;
    do {
      i = uniform_int(rng, 0, d.nx - 1);
      j = uniform_int(rng, 0, d.ny - 1);
    } while (g.is_solid(i, j));
    const Vec2 start{(i + 0.5) * d.h, (j + 0.5) * d.h};
    const Vec2 end{uniform(rng, -3.0, 9.0), uniform(rng, -3.0, 9.0)};
    const Vec2 r = clamp_trace(g, start, end);
    ASSERT_TRUE(strictly_inside(d, r) || r == start);
    const int ci = std::min(static_cast<int>(r.x / d.h), d.nx - 1);
    const int cj = std::min(static_cast<int>(r.y / d.h), d.ny - 1);
    EXPECT_FALSE(g.is_solid(ci, cj));
  }
}

TEST(ClampTrace, UnobstructedSegmentIsUnchanged) {
  const OccupancyGrid g({8, 8, 1.0});
  const Vec2 r = clamp_trace(g, {2.5, 2.5}, {4.25, 3.0});
  EXPECT_EQ(r, (Vec2{4.25, 3.0}));
}

TEST(AdvectScalarMaccormack, ConstantIsPreserved) {
  Rng rng(35);
  const GridDims d{10, 10, 1.0};
  const OccupancyGrid g = random_occupancy(d, rng, 0.2);
  const ScalarGrid out = advect_scalar_maccormack(ScalarGrid(d, 0.7), random_velocity(d, rng), g, 0.4);
  for (double v : out.values) EXPECT_NEAR(v, 0.7, 1e-12);
}

TEST(AdvectScalarMaccormack, ZeroVelocityIsIdentity) {
  Rng rng(36);
  const GridDims d{8, 8, 1.0};
  const ScalarGrid q = random_scalar(d, rng);
  EXPECT_EQ(advect_scalar_maccormack(q, MacVelocity(d), OccupancyGrid(d), 0.3), q);
}

TEST(AdvectScalarMaccormack, GaussianBeatsSemiLagrangianWithoutOvershoot) {
  const GridDims d{64, 64, 1.0};
  const OccupancyGrid g(d);
  const Vec2 vel{0.7, 0.35};
  const double dt = 1.0;
  const double sigma = 4.0;
  const ScalarGrid q0 = gaussian(d, {20.0, 24.0}, sigma);
  double peak0 = 0.0;
  for (double v : q0.values) peak0 = std::max(peak0, std::abs(v));
  ScalarGrid sl = q0;
  ScalarGrid mc = q0;
  const MacVelocity u(d, vel);
  for (int step = 1; step <= 10; ++step) {
    sl = advect_scalar_sl(sl, u, g, dt);
    mc = advect_scalar_maccormack(mc, u, g, dt);
    for (double v : mc.values) ASSERT_LE(std::abs(v), peak0);
  }
  const ScalarGrid exact = gaussian(d, {20.0 + 10 * vel.x, 24.0 + 10 * vel.y}, sigma);
  EXPECT_LE(l2_diff(mc, exact), l2_diff(sl, exact));
}

TEST(AdvectScalarMaccormack, NoNewExtremaOnRandomData) {
  Rng rng(37);
  for (int trial = 0; trial < 20; ++trial) {
    const GridDims d{12, 12, 1.0};
    const OccupancyGrid g = random_occupancy(d, rng, 0.2);
    const ScalarGrid q = random_scalar(d, rng);
    const ScalarGrid out = advect_scalar_maccormack(q, random_velocity(d, rng, -2.0, 2.0), g, 0.7);
    const auto [lo, hi] = std::minmax_element(q.values.begin(), q.values.end());
    for (double v : out.values) {
      EXPECT_GE(v, *lo);
      EXPECT_LE(v, *hi);
    }
  }
}

TEST(SelfAdvect, UniformFieldUnchanged) {
  const GridDims d{10, 8, 0.5};
  const MacVelocity u(d, {0.3, -0.2});
  for (auto scheme : {AdvectionScheme::semi_lagrangian, AdvectionScheme::maccormack}) {
    const MacVelocity out = self_advect_velocity(u, OccupancyGrid(d), 0.5, scheme);
    EXPECT_LE(max_abs_diff(out, u), 1e-12);
  }
}

TEST(SelfAdvect, ZeroFieldStaysZero) {
  Rng rng(38);
  const GridDims d{8, 8, 1.0};
  const MacVelocity out =
      self_advect_velocity(MacVelocity(d), random_occupancy(d, rng, 0.2), 0.5, AdvectionScheme::maccormack);
  EXPECT_EQ(max_abs(out.ux), 0.0);
  EXPECT_EQ(max_abs(out.uy), 0.0);
}

TEST(SelfAdvect, MatchesPerFaceTraceOracle) {
  Rng rng(39);
  for (int trial = 0; trial < 10; ++trial) {
    const GridDims d{uniform_int(rng, 6, 12), uniform_int(rng, 6, 12), uniform(rng, 0.3, 1.5)};
    const OccupancyGrid g(d);
    const MacVelocity u = random_velocity(d, rng);
    const double dt = 0.1;
    const MacVelocity out = self_advect_velocity(u, g, dt, AdvectionScheme::semi_lagrangian);
    for (int j = 0; j < d.ny; ++j) {
      for (int i = 0; i <= d.nx; ++i) {
        if (!x_face_open(g, i, j)) {
          EXPECT_EQ(out.x_at(i, j), u.x_at(i, j));
          continue;
        }
        const Vec2 x{i * d.h, (j + 0.5) * d.h};
        const Vec2 back = x - dt * sample_velocity(u, x);
        if (!strictly_inside(d, back)) continue;
        EXPECT_NEAR(out.x_at(i, j), sample_velocity(u, back).x, 1e-12);
      }
    }
    for (int j = 0; j <= d.ny; ++j) {
      for (int i = 0; i < d.nx; ++i) {
        if (!y_face_open(g, i, j)) {
          EXPECT_EQ(out.y_at(i, j), u.y_at(i, j));
          continue;
        }
        const Vec2 x{(i + 0.5) * d.h, j * d.h};
        const Vec2 back = x - dt * sample_velocity(u, x);
        if (!strictly_inside(d, back)) continue;
        EXPECT_NEAR(out.y_at(i, j), sample_velocity(u, back).y, 1e-12);
      }
    }
  }
}
