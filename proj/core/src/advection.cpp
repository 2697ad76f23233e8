#include "fluidnet/advection.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "fluidnet/fdops.hpp"

namespace fluidnet {

namespace {

constexpr int kBisectionSteps = 8;
constexpr double kMarchStep = 0.25;  // cells

// Points are in index space: cell (i, j) covers [i, i+1] x [j, j+1].
bool in_fluid(const OccupancyGrid& g, double x, double y) {
  const int nx = g.dims.nx;
  const int ny = g.dims.ny;
  if (!(x >= 0.0 && x <= nx && y >= 0.0 && y <= ny)) return false;
  const int i = std::min(static_cast<int>(x), nx - 1);
  const int j = std::min(static_cast<int>(y), ny - 1);
  return !g.is_solid(i, j);
}

Vec2 clamp_trace_index(const OccupancyGrid& g, Vec2 a, Vec2 b) {
  const Vec2 delta = b - a;
  const double len = std::hypot(delta.x, delta.y);
  if (len == 0.0) return b;
  const int steps = std::max(1, static_cast<int>(std::ceil(len / kMarchStep)));
  double t_in = 0.0;
  for (int k = 1; k <= steps; ++k) {
    const double t = static_cast<double>(k) / steps;
    const Vec2 p = k == steps ? b : a + t * delta;
    if (in_fluid(g, p.x, p.y)) {
      t_in = t;
      continue;
    }
    double lo = t_in;
    double hi = t;
    for (int it = 0; it < kBisectionSteps; ++it) {
      const double mid = 0.5 * (lo + hi);
      const Vec2 m = a + mid * delta;
      if (in_fluid(g, m.x, m.y)) lo = mid;
      else hi = mid;
    }
    return lo == 0.0 ? a : a + lo * delta;
  }
  return b;
}

// Lattice whose sample (a, b) sits at index-space point (a + ox, b + oy).
struct Lattice {
  int width;
  int height;
  double ox;
  double oy;
};

struct Read {
  double value;
  double lo;
  double hi;
};

Read read_lattice(const std::vector<double>& values, const Lattice& lat, double x, double y) {
  const double fx = std::clamp(x - lat.ox, 0.0, static_cast<double>(lat.width - 1));
  const double fy = std::clamp(y - lat.oy, 0.0, static_cast<double>(lat.height - 1));
  const int i0 = std::min(static_cast<int>(fx), lat.width - 1);
  const int j0 = std::min(static_cast<int>(fy), lat.height - 1);
  const int i1 = std::min(i0 + 1, lat.width - 1);
  const int j1 = std::min(j0 + 1, lat.height - 1);
  const auto at = [&](int i, int j) { return values[static_cast<std::size_t>(i) + static_cast<std::size_t>(lat.width) * j]; };
  const double a = at(i0, j0);
  const double b = at(i1, j0);
  const double c = at(i0, j1);
  const double d = at(i1, j1);
  const double tx = fx - i0;
  const double ty = fy - j0;
  const double bottom = a + tx * (b - a);
  const double top = c + tx * (d - c);
  return {bottom + ty * (top - bottom), std::min({a, b, c, d}), std::max({a, b, c, d})};
}

// Velocity in index units per unit time at an index-space point.
Vec2 velocity_index(const MacVelocity& u, double x, double y) {
  const double inv_h = 1.0 / u.dims.h;
  return {sample_lattice(u.ux, u.dims.nx + 1, u.dims.ny, x, y - 0.5) * inv_h,
          sample_lattice(u.uy, u.dims.nx, u.dims.ny + 1, x - 0.5, y) * inv_h};
}

// Semi-Lagrangian pass over the samples flagged in `update`. Signed dt; a
// negative dt traces forward. Optional lo/hi receive the stencil range.
std::vector<double> sl_pass(const std::vector<double>& q, const Lattice& lat, const std::vector<std::uint8_t>& update,
                            const MacVelocity& u, const OccupancyGrid& g, double dt, std::vector<double>* lo,
                            std::vector<double>* hi) {
  std::vector<double> out = q;
  if (lo) *lo = q;
  if (hi) *hi = q;
  for (int b = 0; b < lat.height; ++b) {
    for (int a = 0; a < lat.width; ++a) {
      const std::size_t idx = static_cast<std::size_t>(a) + static_cast<std::size_t>(lat.width) * b;
      if (!update[idx]) continue;
      const Vec2 x0{a + lat.ox, b + lat.oy};
      const Vec2 vel = velocity_index(u, x0.x, x0.y);
      const Vec2 back = clamp_trace_index(g, x0, x0 - dt * vel);
      const Read r = read_lattice(q, lat, back.x, back.y);
      out[idx] = r.value;
      if (lo) (*lo)[idx] = r.lo;
      if (hi) (*hi)[idx] = r.hi;
    }
  }
  return out;
}

std::vector<double> advect_lattice(const std::vector<double>& q, const Lattice& lat,
                                   const std::vector<std::uint8_t>& update, const MacVelocity& u,
                                   const OccupancyGrid& g, double dt, AdvectionScheme scheme) {
  if (scheme == AdvectionScheme::semi_lagrangian) return sl_pass(q, lat, update, u, g, dt, nullptr, nullptr);
  std::vector<double> lo;
  std::vector<double> hi;
  std::vector<double> fwd = sl_pass(q, lat, update, u, g, dt, &lo, &hi);
  const std::vector<double> bwd = sl_pass(fwd, lat, update, u, g, -dt, nullptr, nullptr);
  std::vector<double> out = fwd;
  for (std::size_t k = 0; k < out.size(); ++k) {
    if (!update[k]) continue;
    const double corrected = fwd[k] + 0.5 * (q[k] - bwd[k]);
    out[k] = (corrected < lo[k] || corrected > hi[k]) ? fwd[k] : corrected;
  }
  return out;
}

void check_dt(double dt) {
  if (!(dt >= 0.0) || !std::isfinite(dt)) throw std::invalid_argument("advection requires a finite dt >= 0");
}

std::vector<std::uint8_t> fluid_mask(const OccupancyGrid& g) {
  std::vector<std::uint8_t> m(g.solid.size());
  for (std::size_t c = 0; c < m.size(); ++c) m[c] = g.solid[c] ? 0 : 1;
  return m;
}

}  // namespace

Vec2 clamp_trace(const OccupancyGrid& g, Vec2 start, Vec2 end) {
  const double h = g.dims.h;
  const Vec2 r = clamp_trace_index(g, (1.0 / h) * start, (1.0 / h) * end);
  return h * r;
}

ScalarGrid advect_scalar(const ScalarGrid& q, const MacVelocity& u, const OccupancyGrid& g, double dt,
                         AdvectionScheme scheme) {
  check_dt(dt);
  const Lattice lat{q.dims.nx, q.dims.ny, 0.5, 0.5};
  ScalarGrid out(q.dims);
  out.values = advect_lattice(q.values, lat, fluid_mask(g), u, g, dt, scheme);
  return out;
}

ScalarGrid advect_scalar_sl(const ScalarGrid& q, const MacVelocity& u, const OccupancyGrid& g, double dt) {
  return advect_scalar(q, u, g, dt, AdvectionScheme::semi_lagrangian);
}

ScalarGrid advect_scalar_maccormack(const ScalarGrid& q, const MacVelocity& u, const OccupancyGrid& g, double dt) {
  return advect_scalar(q, u, g, dt, AdvectionScheme::maccormack);
}

MacVelocity self_advect_velocity(const MacVelocity& u, const OccupancyGrid& g, double dt, AdvectionScheme scheme) {
  check_dt(dt);
  const GridDims& d = u.dims;
  std::vector<std::uint8_t> open_x(d.x_faces());
  std::vector<std::uint8_t> open_y(d.y_faces());
  for (int j = 0; j < d.ny; ++j)
    for (int i = 0; i <= d.nx; ++i) open_x[i + static_cast<std::size_t>(d.nx + 1) * j] = x_face_open(g, i, j);
  for (int j = 0; j <= d.ny; ++j)
    for (int i = 0; i < d.nx; ++i) open_y[i + static_cast<std::size_t>(d.nx) * j] = y_face_open(g, i, j);

  MacVelocity out(d);
  out.ux = advect_lattice(u.ux, Lattice{d.nx + 1, d.ny, 0.0, 0.5}, open_x, u, g, dt, scheme);
  out.uy = advect_lattice(u.uy, Lattice{d.nx, d.ny + 1, 0.5, 0.0}, open_y, u, g, dt, scheme);
  return out;
}

}  // namespace fluidnet
