#include "fluidnet/sim.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <ostream>

#include "fluidnet/binary_io.hpp"
#include "fluidnet/fdops.hpp"
#include "fluidnet/frame_io.hpp"
#include "fluidnet/pressure.hpp"

namespace fluidnet {

// --- solver specs -----------------------------------------------------------

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

double parse_number(const std::string& text, const std::string& spec) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size() || !std::isfinite(v)) {
    throw std::invalid_argument("bad number in solver spec '" + spec + "'");
  }
  return v;
}

}  // namespace

SolverSpec parse_solver(const std::string& spec) {
  const auto colon = spec.find(':');
  const std::string head = spec.substr(0, colon);
  const std::string arg = colon == std::string::npos ? std::string() : spec.substr(colon + 1);
  const bool has_arg = colon != std::string::npos;
  if (head == "none" && !has_arg) return SolverNone{};
  if (head == "exact" && !has_arg) return SolverExact{};
  if (head == "jacobi" && has_arg) {
    const double it = parse_number(arg, spec);
    if (it < 1 || it != std::floor(it) || it > 1e9) throw std::invalid_argument("jacobi iterations must be a positive integer");
    return SolverJacobi{static_cast<int>(it)};
  }
  if (head == "pcg" && has_arg) {
    const double tol = parse_number(arg, spec);
    if (!(tol > 0.0)) throw std::invalid_argument("pcg tolerance must be positive");
    return SolverPcg{tol};
  }
  if (head == "convnet" && has_arg && !arg.empty()) {
    return SolverConvNet{std::make_shared<const NetParams<float>>(load_model(arg)), arg};
  }
  throw std::invalid_argument("unknown solver spec '" + spec +
                              "' (expected none, exact, jacobi:<iters>, pcg:<tol>, convnet:<path>)");
}

std::string to_string(const SolverSpec& spec) {
  return std::visit(Overloaded{
                        [](const SolverNone&) { return std::string("none"); },
                        [](const SolverJacobi& s) { return "jacobi:" + std::to_string(s.iters); },
                        [](const SolverPcg& s) {
                          char buf[64];
                          std::snprintf(buf, sizeof buf, "pcg:%g", s.tol);
                          return std::string(buf);
                        },
                        [](const SolverExact&) { return std::string("exact"); },
                        [](const SolverConvNet& s) { return "convnet:" + s.path; },
                    },
                    spec);
}

void validate(const SimConfig& cfg) {
  if (!(cfg.dt > 0.0) || !std::isfinite(cfg.dt)) throw std::invalid_argument("dt must be positive");
  validate(cfg.forces);
}

SimState make_state(const OccupancyGrid& g) {
  SimState s;
  s.g = g;
  s.u = MacVelocity(g.dims);
  s.density = ScalarGrid(g.dims);
  return s;
}

// --- projection -----------------------------------------------------------

namespace {

double relative_residual(const OccupancyGrid& g, const ScalarGrid& p, const ScalarGrid& b) {
  const double nb = l2_norm(b, g);
  if (nb == 0.0) return residual_norm(g, p, b) == 0.0 ? 0.0 : 1.0;
  return residual_norm(g, p, b) / nb;
}

ScalarGrid negated(ScalarGrid q) {
  for (double& v : q.values) v = -v;
  return q;
}

}  // namespace

ProjectionOutcome project(const MacVelocity& u_star, const OccupancyGrid& g, const SolverSpec& solver,
                          Vec2 solid_velocity) {
  ProjectionOutcome out;
  const ScalarGrid b = make_compatible(negated(divergence(u_star, g)), g);

  if (const auto* net = std::get_if<SolverConvNet>(&solver)) {
    if (!net->model) throw std::invalid_argument("convnet backend without a model");
    Projection<float> pr = learned_project(*net->model, u_star, g, solid_velocity);
    out.u = std::move(pr.u_hat);
    out.p = std::move(pr.p_hat);
    out.relative_residual = relative_residual(g, out.p, b);
    return out;
  }

  if (std::holds_alternative<SolverNone>(solver)) {
    out.u = u_star;
    out.p = ScalarGrid(u_star.dims);
    out.relative_residual = relative_residual(g, out.p, b);
    return out;
  }

  if (const auto* j = std::get_if<SolverJacobi>(&solver)) {
    out.p = solve_jacobi(g, b, j->iters);
    out.iterations = j->iters;
  } else if (const auto* c = std::get_if<SolverPcg>(&solver)) {
    PcgResult r = solve_pcg(g, b, c->tol, c->max_iter);
    out.p = std::move(r.p);
    out.iterations = r.iterations;
    out.converged = r.converged;
  } else {
    out.p = solve_dense_direct(g, b);
  }
  out.relative_residual = relative_residual(g, out.p, b);
  out.u = enforce_solid_velocities(subtract_pressure_gradient(u_star, out.p, g), g, solid_velocity);
  return out;
}

// --- step -----------------------------------------------------------------

namespace {

void apply_inflows(SimState& s) {
  const GridDims& d = s.g.dims;
  const double h = d.h;
  for (const Inflow& in : s.inflows) {
    const double r2 = in.radius * in.radius;
    const auto inside = [&](double x, double y) {
      const double dx = x - in.center.x;
      const double dy = y - in.center.y;
      return dx * dx + dy * dy <= r2;
    };
    for (int j = 0; j < d.ny; ++j)
      for (int i = 0; i < d.nx; ++i)
        if (!s.g.is_solid(i, j) && inside((i + 0.5) * h, (j + 0.5) * h)) s.density.at(i, j) = in.density;
    for (int j = 0; j < d.ny; ++j)
      for (int i = 0; i <= d.nx; ++i)
        if (x_face_open(s.g, i, j) && inside(i * h, (j + 0.5) * h)) s.u.x_at(i, j) = in.velocity.x;
    for (int j = 0; j <= d.ny; ++j)
      for (int i = 0; i < d.nx; ++i)
        if (y_face_open(s.g, i, j) && inside((i + 0.5) * h, j * h)) s.u.y_at(i, j) = in.velocity.y;
  }
}

void note(std::vector<std::string>* trace, const char* name) {
  if (trace) trace->emplace_back(name);
}

}  // namespace

SimState predict(const SimState& s, const SimConfig& cfg, double dt, std::vector<std::string>* trace) {
  SimState n = s;
  if (!n.inflows.empty()) {
    apply_inflows(n);
    note(trace, "inflow");
  }
  n.density = advect_scalar(n.density, n.u, n.g, dt, cfg.scheme);
  note(trace, "advect_density");
  n.u = self_advect_velocity(n.u, n.g, dt, cfg.scheme);
  note(trace, "advect_velocity");
  if (cfg.forces.gravity.x != 0.0 || cfg.forces.gravity.y != 0.0) n.u = add_body_force(n.u, cfg.forces.gravity, n.g, dt);
  if (cfg.forces.buoyancy_coeff > 0.0) n.u = add_buoyancy(n.u, n.density, cfg.forces, n.g, dt);
  note(trace, "forces");
  if (cfg.forces.lambda_vc > 0.0) n.u = vorticity_confinement(n.u, n.g, cfg.forces, dt);
  note(trace, "vorticity_confinement");
  n.u = enforce_solid_velocities(n.u, n.g, cfg.solid_velocity);
  note(trace, "enforce_solids");
  return n;
}

bool all_finite(const SimState& s) {
  const auto ok = [](const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
  };
  return ok(s.u.ux) && ok(s.u.uy) && ok(s.density.values);
}

SimState step(const SimState& s, const SimConfig& cfg, StepInfo* info) {
  validate(cfg);
  // Advection clamping can silently swallow a NaN, so check the input too.
  if (!all_finite(s)) throw NonFiniteError("non-finite values at frame " + std::to_string(s.frame), s.frame);
  std::vector<std::string>* trace = info ? &info->trace : nullptr;
  SimState n = predict(s, cfg, cfg.dt, trace);
  if (!std::holds_alternative<SolverNone>(cfg.solver)) {
    ProjectionOutcome pr = project(n.u, n.g, cfg.solver, cfg.solid_velocity);
    note(trace, "solve_pressure");
    note(trace, "subtract_gradient");
    note(trace, "enforce_solids");
    n.u = pr.u;
    if (info) info->projection = std::move(pr);
  } else if (info) {
    info->projection = project(n.u, n.g, SolverNone{}, cfg.solid_velocity);
  }
  n.frame = s.frame + 1;
  n.clock = s.clock + cfg.dt;
  if (!all_finite(n)) throw NonFiniteError("non-finite values at frame " + std::to_string(n.frame), n.frame);
  return n;
}

// --- driver ---------------------------------------------------------------

FrameMetrics measure(const SimState& s) {
  FrameMetrics m;
  m.frame = s.frame;
  const ScalarGrid div = divergence(s.u, s.g);
  const GridDims& d = s.g.dims;
  double sum2 = 0.0;
  double sum_abs = 0.0;
  std::size_t n = 0;
  for (int j = 0; j < d.ny; ++j) {
    for (int i = 0; i < d.nx; ++i) {
      if (s.g.is_solid(i, j)) continue;
      const double v = div.at(i, j);
      sum2 += v * v;
      sum_abs += std::abs(v);
      m.max_div = std::max(m.max_div, std::abs(v));
      const double cx = 0.5 * (s.u.x_at(i, j) + s.u.x_at(i + 1, j));
      const double cy = 0.5 * (s.u.y_at(i, j) + s.u.y_at(i, j + 1));
      m.max_speed = std::max(m.max_speed, std::hypot(cx, cy));
      ++n;
    }
  }
  if (n > 0) {
    const double nn = static_cast<double>(n);
    m.mean_div_l2 = std::sqrt(sum2 / nn);
    const double mean_abs = sum_abs / nn;
    m.std_div_l2 = std::sqrt(std::max(0.0, sum2 / nn - mean_abs * mean_abs));
  }
  return m;
}

CsvMetricsSink::CsvMetricsSink(std::ostream& out, bool timing) : out_(out), timing_(timing) {
  out_ << "frame,mean_div_l2,std_div_l2,max_div,max_speed,residual,wall_ms\n";
}

void CsvMetricsSink::on_frame(const SimState&, const FrameMetrics& m) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.3f\n", m.frame, m.mean_div_l2, m.std_div_l2, m.max_div,
                m.max_speed, m.residual, timing_ ? m.wall_ms : 0.0);
  out_ << buf;
}

std::vector<std::uint8_t> encode_pgm(const ScalarGrid& density, double density_max) {
  const GridDims& d = density.dims;
  const std::string header = "P5\n" + std::to_string(d.nx) + " " + std::to_string(d.ny) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  for (int j = d.ny - 1; j >= 0; --j) {
    for (int i = 0; i < d.nx; ++i) {
      const double v = std::clamp(density.at(i, j) / density_max, 0.0, 1.0);
      out.push_back(static_cast<std::uint8_t>(std::lround(v * 255.0)));
    }
  }
  return out;
}

PgmSink::PgmSink(std::string dir, double density_max) : dir_(std::move(dir)), density_max_(density_max) {
  if (!(density_max > 0.0)) throw std::invalid_argument("density_max must be positive");
  std::filesystem::create_directories(dir_);
}

void PgmSink::on_frame(const SimState& s, const FrameMetrics& m) {
  char name[32];
  std::snprintf(name, sizeof name, "frame_%06d.pgm", m.frame);
  write_file((std::filesystem::path(dir_) / name).string(), encode_pgm(s.density, density_max_));
}

RunResult run(const SimState& initial, const SimConfig& cfg, int frames, const std::vector<FrameSink*>& sinks,
              const std::string& dump_dir) {
  if (frames < 1) throw std::invalid_argument("frames must be >= 1");
  validate(cfg);
  RunResult res;
  res.final_state = initial;
  for (int f = 0; f < frames; ++f) {
    StepInfo info;
    const auto t0 = std::chrono::steady_clock::now();
    SimState next;
    try {
      next = step(res.final_state, cfg, &info);
    } catch (const NonFiniteError& e) {
      res.aborted = true;
      res.error = e.what();
      if (!dump_dir.empty()) {
        std::filesystem::create_directories(dump_dir);
        char name[40];
        std::snprintf(name, sizeof name, "nan_frame_%06d.fnf", e.frame());
        FrameRecord rec{res.final_state.g, res.final_state.u, res.final_state.density, static_cast<float>(cfg.dt), {}};
        write_frame((std::filesystem::path(dump_dir) / name).string(), rec);
      }
      return res;
    }
    const auto t1 = std::chrono::steady_clock::now();
    res.final_state = std::move(next);
    FrameMetrics m = measure(res.final_state);
    m.residual = info.projection.relative_residual;
    m.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    for (FrameSink* sink : sinks) sink->on_frame(res.final_state, m);
    res.metrics.push_back(m);
  }
  return res;
}

// --- plume ----------------------------------------------------------------

Scenario plume_scenario(const GridDims& dims, const PlumeConfig& cfg) {
  validate(dims);
  if (dims.nx % 4 != 0 || dims.ny % 4 != 0) throw std::invalid_argument("plume dims must be divisible by 4");
  if (!(cfg.inflow_width > 0.0 && cfg.inflow_width < 1.0)) throw std::invalid_argument("inflow width must be in (0, 1)");
  const double h = dims.h;
  const double w = dims.nx * h;
  const double hgt = dims.ny * h;

  Scenario sc;
  OccupancyGrid g(dims, cfg.boundary);
  if (cfg.obstacle != ObstacleKind::none) {
    const double size = cfg.obstacle_size * w;
    const Vec2 c{0.5 * w, 0.55 * hgt};
    for (int j = 0; j < dims.ny; ++j) {
      for (int i = 0; i < dims.nx; ++i) {
        const double dx = (i + 0.5) * h - c.x;
        const double dy = (j + 0.5) * h - c.y;
        const bool hit = cfg.obstacle == ObstacleKind::disc ? dx * dx + dy * dy <= size * size
                                                            : std::abs(dx) <= size && std::abs(dy) <= size;
        if (hit) g.set_solid(i, j, true);
      }
    }
  }
  sc.state = make_state(g);
  Inflow in;
  in.radius = 0.5 * cfg.inflow_width * w;
  in.center = {0.5 * w, in.radius + 2.0 * h};
  in.velocity = {0.0, cfg.inflow_speed * hgt};
  in.density = cfg.inflow_density;
  sc.state.inflows.push_back(in);
  apply_inflows(sc.state);
  sc.state.u = enforce_solid_velocities(sc.state.u, sc.state.g);

  sc.forces.gravity = {0.0, 0.0};
  sc.forces.buoyancy_coeff = cfg.buoyancy * hgt;
  sc.forces.lambda_vc = cfg.lambda_vc;
  return sc;
}

}  // namespace fluidnet
