#pragma once

// One velocity update per frame, in this order:
//
//   0 inflow      overwrite density/velocity inside inflow discs
//   1 advect      density through u(t-1)
//   2 advect      velocity through itself
//   3 forces      body force and buoyancy
//   4 vorticity   confinement
//   5 solids      enforce solid-face normal velocities
//   6 solve       divergence, compatible rhs, pressure solve
//   7 update      subtract the pressure gradient
//   8 solids      re-enforce solid faces
//
// Backend `none` skips 6 and 7.

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "fluidnet/advection.hpp"
#include "fluidnet/forces.hpp"
#include "fluidnet/grid.hpp"
#include "fluidnet/net.hpp"

namespace fluidnet {

struct SolverNone {};
struct SolverJacobi {
  int iters = 34;
};
struct SolverPcg {
  double tol = 1e-6;
  int max_iter = 5000;
};
struct SolverExact {};
struct SolverConvNet {
  std::shared_ptr<const NetParams<float>> model;
  std::string path;  // informational
};
using SolverSpec = std::variant<SolverNone, SolverJacobi, SolverPcg, SolverExact, SolverConvNet>;

// `none`, `exact`, `jacobi:<iters>`, `pcg:<tol>`, `convnet:<model path>`.
// Throws std::invalid_argument on malformed specs; convnet specs load the model.
SolverSpec parse_solver(const std::string& spec);
std::string to_string(const SolverSpec& spec);

struct Inflow {
  Vec2 center;  // world units
  double radius = 1.0;
  Vec2 velocity;
  double density = 1.0;
};

struct SimConfig {
  double dt = 1.0 / 30.0;
  ForceConfig forces;
  AdvectionScheme scheme = AdvectionScheme::maccormack;
  SolverSpec solver = SolverPcg{};
  Vec2 solid_velocity;
};

// Throws std::invalid_argument on dt <= 0 or invalid forces.
void validate(const SimConfig& cfg);

struct SimState {
  MacVelocity u;
  ScalarGrid density;
  OccupancyGrid g;
  int frame = 0;
  double clock = 0.0;
  std::vector<Inflow> inflows;
};

SimState make_state(const OccupancyGrid& g);

struct ProjectionOutcome {
  MacVelocity u;
  ScalarGrid p;
  double relative_residual = 0.0;  // ||A p - b|| / ||b||, 0 when b = 0
  int iterations = 0;
  bool converged = true;
};

// Steps 6-8 on an already predicted velocity.
ProjectionOutcome project(const MacVelocity& u_star, const OccupancyGrid& g, const SolverSpec& solver,
                          Vec2 solid_velocity = {});

// Steps 0-5 with an explicit dt; returns the state holding u*. Appends the
// names of executed sub-steps to trace when given.
SimState predict(const SimState& s, const SimConfig& cfg, double dt, std::vector<std::string>* trace = nullptr);

struct StepInfo {
  std::vector<std::string> trace;
  ProjectionOutcome projection;
};

class NonFiniteError : public std::runtime_error {
 public:
  NonFiniteError(const std::string& what, int frame) : std::runtime_error(what), frame_(frame) {}
  int frame() const { return frame_; }

 private:
  int frame_;
};

// One full frame. Throws NonFiniteError when the result holds NaN or Inf.
SimState step(const SimState& s, const SimConfig& cfg, StepInfo* info = nullptr);

bool all_finite(const SimState& s);

// --- driver ---------------------------------------------------------------

struct FrameMetrics {
  int frame = 0;
  double mean_div_l2 = 0.0;  // RMS of the divergence over fluid cells
  double std_div_l2 = 0.0;   // standard deviation of |div| over fluid cells
  double max_div = 0.0;      // max |div|
  double max_speed = 0.0;    // max cell-centered speed
  double residual = 0.0;     // relative residual of the pressure solve
  double wall_ms = 0.0;
};

FrameMetrics measure(const SimState& s);

class FrameSink {
 public:
  virtual ~FrameSink() = default;
  virtual void on_frame(const SimState& s, const FrameMetrics& m) = 0;
};

// Header `frame,mean_div_l2,std_div_l2,max_div,max_speed,residual,wall_ms`.
// With timing disabled wall_ms is written as 0 so output is byte-reproducible.
class CsvMetricsSink : public FrameSink {
 public:
  CsvMetricsSink(std::ostream& out, bool timing = true);
  void on_frame(const SimState& s, const FrameMetrics& m) override;

 private:
  std::ostream& out_;
  bool timing_;
};

// Binary PGM per frame, `frame_%06d.pgm`, 8-bit value
// clamp(density / density_max, 0, 1) * 255, top row first.
class PgmSink : public FrameSink {
 public:
  PgmSink(std::string dir, double density_max = 1.0);
  void on_frame(const SimState& s, const FrameMetrics& m) override;

 private:
  std::string dir_;
  double density_max_;
};

std::vector<std::uint8_t> encode_pgm(const ScalarGrid& density, double density_max);

struct RunResult {
  SimState final_state;
  std::vector<FrameMetrics> metrics;
  bool aborted = false;
  std::string error;
};

// Steps `frames` times, reporting metrics after every frame. Stops early on
// non-finite values; the offending input state is written to
// dump_dir/nan_frame_%06d.fnf when dump_dir is set.
RunResult run(const SimState& initial, const SimConfig& cfg, int frames, const std::vector<FrameSink*>& sinks = {},
              const std::string& dump_dir = {});

// --- plume --------------------------------------------------------------

enum class ObstacleKind { none, disc, box };

struct PlumeConfig {
  BoundaryMode boundary = BoundaryMode::closed;
  double inflow_width = 1.0 / 8.0;  // disc diameter as a fraction of nx
  double inflow_speed = 0.25;       // in ny per second
  double inflow_density = 1.0;
  double buoyancy = 0.25;           // in ny per second^2 per unit density
  double lambda_vc = 0.05;
  ObstacleKind obstacle = ObstacleKind::none;
  double obstacle_size = 0.125;     // radius or half-width as a fraction of nx
};

struct Scenario {
  SimState state;
  ForceConfig forces;
};

// Throws std::invalid_argument unless dims are divisible by 4.
Scenario plume_scenario(const GridDims& dims, const PlumeConfig& cfg = {});

}  // namespace fluidnet
