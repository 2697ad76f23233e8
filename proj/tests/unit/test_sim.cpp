#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <sstream>

#include "fluidnet/data.hpp"
#include "fluidnet/fdops.hpp"
#include "fluidnet/sim.hpp"
#include "test_util.hpp"

using namespace fluidnet;
using namespace fluidnet::testing;
namespace fs = std::filesystem;

namespace {

SimState noisy_scene(GridDims d, std::uint64_t seed) {
  Rng rng(seed);
  const OccupancyGrid g = random_geometry(d, rng, ShapePool::train);
  SimState s = make_state(g);
  s.u = curl_noise_velocity(d, NoiseConfig{}, seed, &g);
  for (double& v : s.u.ux) v += uniform(rng, -0.2, 0.2) * d.ny;
  for (double& v : s.u.uy) v += uniform(rng, -0.2, 0.2) * d.ny;
  s.u = enforce_solid_velocities(s.u, g);
  for (std::size_t k = 0; k < s.density.values.size(); ++k)
    if (!g.solid[k]) s.density.values[k] = uniform01(rng);
  return s;
}

double interior_max_div(const MacVelocity& u, const OccupancyGrid& g) { return max_abs(divergence(u, g).values); }

}  // namespace

TEST(ParseSolver, RoundTripsSpecs) {
  EXPECT_TRUE(std::holds_alternative<SolverNone>(parse_solver("none")));
  EXPECT_TRUE(std::holds_alternative<SolverExact>(parse_solver("exact")));
  EXPECT_EQ(std::get<SolverJacobi>(parse_solver("jacobi:34")).iters, 34);
  EXPECT_DOUBLE_EQ(std::get<SolverPcg>(parse_solver("pcg:1e-6")).tol, 1e-6);
  EXPECT_EQ(to_string(parse_solver("jacobi:12")), "jacobi:12");
  EXPECT_EQ(to_string(SolverNone{}), "none");
}

TEST(ParseSolver, RejectsMalformedSpecs) {
  for (const char* bad : {"", "jacobi", "jacobi:x", "jacobi:-3", "pcg:", "pcg:0", "pcg:-1", "multigrid", "convnet:"})
    EXPECT_THROW(parse_solver(bad), std::invalid_argument) << bad;
  EXPECT_ANY_THROW(parse_solver("convnet:/nonexistent/model.fnm"));
}

TEST(SimConfig, Validation) {
  SimConfig c;
  EXPECT_NO_THROW(validate(c));
  c.dt = 0.0;
  EXPECT_THROW(validate(c), std::invalid_argument);
}

TEST(Step, ZeroStateIsFixedPoint) {
  const GridDims d{16, 16, 1.0};
  Rng rng(101);
  const SimState s = make_state(random_geometry(d, rng, ShapePool::train));
  SimConfig cfg;
  cfg.forces.lambda_vc = 0.05;
  for (const char* solver : {"none", "jacobi:34", "pcg:1e-6", "exact"}) {
    cfg.solver = parse_solver(solver);
    const SimState out = step(s, cfg);
    EXPECT_EQ(out.u, s.u) << solver;
    EXPECT_EQ(out.density, s.density) << solver;
    EXPECT_EQ(out.frame, 1);
  }
}

TEST(Step, TraceOrder) {
  SimState s = noisy_scene({16, 16, 1.0}, 102);
  SimConfig cfg;
  StepInfo info;
  step(s, cfg, &info);
  const std::vector<std::string> want{"advect_density", "advect_velocity",   "forces",        "vorticity_confinement",
                                      "enforce_solids", "solve_pressure",    "subtract_gradient", "enforce_solids"};
  EXPECT_EQ(info.trace, want);

  s.inflows.push_back({{8.0, 3.0}, 2.0, {0.0, 1.0}, 1.0});
  cfg.solver = SolverNone{};
  StepInfo none;
  step(s, cfg, &none);
  const std::vector<std::string> want_none{"inflow", "advect_density", "advect_velocity", "forces",
                                           "vorticity_confinement", "enforce_solids"};
  EXPECT_EQ(none.trace, want_none);
}

TEST(Step, ExactProjectionRemovesDivergence) {
  SimConfig cfg;
  cfg.solver = SolverExact{};
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const SimState s = step(noisy_scene({16, 16, 1.0}, 110 + seed), cfg);
    EXPECT_LE(interior_max_div(s.u, s.g), 1e-8);
  }
}

TEST(Project, PcgIsIdempotent) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const SimState s = noisy_scene({32, 32, 1.0}, 120 + seed);
    const ProjectionOutcome first = project(s.u, s.g, SolverPcg{1e-10, 5000});
    const ProjectionOutcome second = project(first.u, s.g, SolverPcg{1e-10, 5000});
    EXPECT_LE(max_abs(second.p.values), 1e-6);
  }
}

TEST(Project, NoneReturnsInput) {
  const SimState s = noisy_scene({16, 16, 1.0}, 130);
  const ProjectionOutcome r = project(s.u, s.g, SolverNone{});
  EXPECT_EQ(r.u, s.u);
  EXPECT_EQ(max_abs(r.p.values), 0.0);
}

TEST(Project, BackendsAgreeWithDenseOracle) {
  const SimState s = noisy_scene({16, 16, 1.0}, 131);
  const ProjectionOutcome exact = project(s.u, s.g, SolverExact{});
  const ProjectionOutcome pcg = project(s.u, s.g, SolverPcg{1e-12, 5000});
  const ProjectionOutcome jac = project(s.u, s.g, SolverJacobi{20000});
  EXPECT_LE(max_abs_diff(pcg.u, exact.u), 1e-8);
  EXPECT_LE(max_abs_diff(jac.u, exact.u), 1e-6);
  EXPECT_LT(pcg.relative_residual, 1e-11);
}

TEST(Run, SingleFrameEqualsStep) {
  const SimState s = noisy_scene({16, 16, 1.0}, 140);
  SimConfig cfg;
  const RunResult r = run(s, cfg, 1);
  ASSERT_EQ(r.metrics.size(), 1u);
  EXPECT_EQ(r.final_state.u, step(s, cfg).u);
}

TEST(Run, CsvRowsAndDeterminism) {
  const SimState s = noisy_scene({16, 16, 1.0}, 141);
  SimConfig cfg;
  std::ostringstream a, b;
  CsvMetricsSink sa(a, false), sb(b, false);
  run(s, cfg, 12, {&sa});
  run(s, cfg, 12, {&sb});
  EXPECT_EQ(a.str(), b.str());
  std::istringstream in(a.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "frame,mean_div_l2,std_div_l2,max_div,max_speed,residual,wall_ms");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 12);
}

TEST(Run, NonFiniteStateAbortsAndDumps) {
  SimState s = noisy_scene({16, 16, 1.0}, 142);
  s.u.ux[20] = std::nan("");
  const fs::path dir = fs::temp_directory_path() / "fluidnet_test_nan";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const RunResult r = run(s, SimConfig{}, 5, {}, dir.string());
  EXPECT_TRUE(r.aborted);
  EXPECT_TRUE(r.metrics.empty());
  EXPECT_TRUE(fs::exists(dir / "nan_frame_000000.fnf"));
  fs::remove_all(dir);
}

TEST(Measure, MetricDefinitions) {
  const GridDims d{4, 4, 1.0};
  SimState s = make_state(OccupancyGrid(d));
  s.u.x_at(2, 1) = 2.0;  // div +2 at (1,1), -2 at (2,1)
  const FrameMetrics m = measure(s);
  EXPECT_DOUBLE_EQ(m.max_div, 2.0);
  EXPECT_DOUBLE_EQ(m.mean_div_l2, std::sqrt(8.0 / 16.0));
  const double mean_abs = 4.0 / 16.0;
  EXPECT_DOUBLE_EQ(m.std_div_l2, std::sqrt(8.0 / 16.0 - mean_abs * mean_abs));
  EXPECT_DOUBLE_EQ(m.max_speed, 1.0);
}

TEST(Pgm, HeaderAndOrientation) {
  ScalarGrid q({4, 4, 1.0});
  q.at(0, 3) = 1.0;  // top-left cell
  q.at(3, 0) = 0.5;
  const auto bytes = encode_pgm(q, 1.0);
  const std::string header = "P5\n4 4\n255\n";
  ASSERT_EQ(bytes.size(), header.size() + 16);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + static_cast<long>(header.size())), header);
  EXPECT_EQ(bytes[header.size()], 255);
  EXPECT_EQ(bytes[header.size() + 15], 128);
}

TEST(Plume, InflowInsideDomainAndDivergenceLocal) {
  const GridDims d{64, 64, 1.0};
  const Scenario sc = plume_scenario(d);
  ASSERT_EQ(sc.state.inflows.size(), 1u);
  const Inflow& in = sc.state.inflows[0];
  EXPECT_GE(in.center.x - in.radius, 0.0);
  EXPECT_LE(in.center.x + in.radius, d.nx * d.h);
  EXPECT_GE(in.center.y - in.radius, 0.0);
  EXPECT_LE(in.center.y + in.radius, d.ny * d.h);
  const ScalarGrid div = divergence(sc.state.u, sc.state.g);
  double total = 0.0;
  for (int j = 0; j < d.ny; ++j)
    for (int i = 0; i < d.nx; ++i) {
      const double r = std::hypot((i + 0.5) * d.h - in.center.x, (j + 0.5) * d.h - in.center.y);
      total += std::abs(div.at(i, j));
      if (r > in.radius + 1.5 * d.h) EXPECT_EQ(div.at(i, j), 0.0) << i << "," << j;
    }
  EXPECT_GT(total, 0.0);
}

TEST(Plume, ObstacleCellsAreSolid) {
  PlumeConfig c;
  EXPECT_EQ(plume_scenario({32, 32, 1.0}, c).state.g.fluid_count(), 32u * 32u);
  c.obstacle = ObstacleKind::disc;
  const OccupancyGrid g = plume_scenario({32, 32, 1.0}, c).state.g;
  EXPECT_LT(g.fluid_count(), 32u * 32u);
  EXPECT_TRUE(g.is_solid(16, static_cast<int>(0.55 * 32)));
  c.obstacle = ObstacleKind::box;
  EXPECT_TRUE(plume_scenario({32, 32, 1.0}, c).state.g.is_solid(16, static_cast<int>(0.55 * 32)));
  EXPECT_THROW(plume_scenario({30, 32, 1.0}, c), std::invalid_argument);
}

TEST(Plume, NoProjectionLeavesDivergence) {
  const Scenario sc = plume_scenario({32, 32, 1.0});
  SimConfig cfg;
  cfg.forces = sc.forces;
  cfg.solver = SolverNone{};
  const RunResult r = run(sc.state, cfg, 32);
  ASSERT_FALSE(r.aborted);
  for (const auto& m : r.metrics) EXPECT_GT(m.mean_div_l2, 0.1);
}

TEST(Plume, PcgKeepsDivergenceSmall) {
  const Scenario sc = plume_scenario({32, 32, 1.0});
  SimConfig cfg;
  cfg.forces = sc.forces;
  cfg.solver = SolverPcg{1e-10, 5000};
  const RunResult r = run(sc.state, cfg, 32);
  ASSERT_FALSE(r.aborted);
  for (const auto& m : r.metrics) EXPECT_LE(m.mean_div_l2, 1e-6);
}
