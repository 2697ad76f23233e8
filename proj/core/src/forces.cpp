#include "fluidnet/forces.hpp"

#include <cmath>
#include <stdexcept>

#include "fluidnet/fdops.hpp"

namespace fluidnet {

void validate(const ForceConfig& cfg) {
  if (!(cfg.rho > 0.0)) throw std::invalid_argument("fluid density rho must be positive");
  if (!(cfg.lambda_vc >= 0.0)) throw std::invalid_argument("vorticity confinement lambda must be >= 0");
  if (!(cfg.buoyancy_coeff >= 0.0)) throw std::invalid_argument("buoyancy coefficient must be >= 0");
}

Vec2 buoyancy_direction(Vec2 gravity) {
  const double n = std::hypot(gravity.x, gravity.y);
  if (n == 0.0) return {0.0, 1.0};
  return {-gravity.x / n, -gravity.y / n};
}

MacVelocity add_body_force(const MacVelocity& u, Vec2 f, const OccupancyGrid& g, double dt) {
  const GridDims& d = u.dims;
  MacVelocity out = u;
  const double dx = dt * f.x;
  const double dy = dt * f.y;
  for (int j = 0; j < d.ny; ++j)
    for (int i = 0; i <= d.nx; ++i)
      if (x_face_open(g, i, j)) out.x_at(i, j) += dx;
  for (int j = 0; j <= d.ny; ++j)
    for (int i = 0; i < d.nx; ++i)
      if (y_face_open(g, i, j)) out.y_at(i, j) += dy;
  return out;
}

namespace {

// Average of the fluid cells adjacent to a face.
double face_average(const ScalarGrid& q, const OccupancyGrid& g, int ia, int ja, int ib, int jb) {
  const bool a = g.is_fluid(ia, ja);
  const bool b = g.is_fluid(ib, jb);
  if (a && b) return 0.5 * (q.at(ia, ja) + q.at(ib, jb));
  if (a) return q.at(ia, ja);
  if (b) return q.at(ib, jb);
  return 0.0;
}

}  // namespace

MacVelocity add_buoyancy(const MacVelocity& u, const ScalarGrid& density, const ForceConfig& cfg,
                         const OccupancyGrid& g, double dt) {
  const GridDims& d = u.dims;
  MacVelocity out = u;
  if (cfg.buoyancy_coeff == 0.0) return out;
  const Vec2 up = buoyancy_direction(cfg.gravity);
  const double s = dt * cfg.buoyancy_coeff;
  if (up.x != 0.0) {
    for (int j = 0; j < d.ny; ++j)
      for (int i = 0; i <= d.nx; ++i)
        if (x_face_open(g, i, j)) out.x_at(i, j) += s * face_average(density, g, i - 1, j, i, j) * up.x;
  }
  if (up.y != 0.0) {
    for (int j = 0; j <= d.ny; ++j)
      for (int i = 0; i < d.nx; ++i)
        if (y_face_open(g, i, j)) out.y_at(i, j) += s * face_average(density, g, i, j - 1, i, j) * up.y;
  }
  return out;
}

MacVelocity vorticity_confinement_increment(const MacVelocity& u, const OccupancyGrid& g, const ForceConfig& cfg,
                                            double dt) {
  const GridDims& d = u.dims;
  const int nx = d.nx;
  const int ny = d.ny;
  MacVelocity inc(d);
  if (cfg.lambda_vc == 0.0) return inc;

  const ScalarGrid w = vorticity(u);
  ScalarGrid fx(d);
  ScalarGrid fy(d);
  constexpr double kEps = 1e-20;
  const double scale = cfg.lambda_vc * d.h;
  for (int j = 0; j < ny; ++j) {
    const int jm = j > 0 ? j - 1 : j;
    const int jp = j < ny - 1 ? j + 1 : j;
    for (int i = 0; i < nx; ++i) {
      if (g.is_solid(i, j)) continue;
      const int im = i > 0 ? i - 1 : i;
      const int ip = i < nx - 1 ? i + 1 : i;
      const double gx = (std::abs(w.at(ip, j)) - std::abs(w.at(im, j))) / ((ip - im) * d.h);
      const double gy = (std::abs(w.at(i, jp)) - std::abs(w.at(i, jm))) / ((jp - jm) * d.h);
      const double norm = std::hypot(gx, gy) + kEps;
      const double wc = w.at(i, j);
      // N x w with N = (nx, ny, 0) and w along z.
      fx.at(i, j) = scale * (gy / norm) * wc;
      fy.at(i, j) = -scale * (gx / norm) * wc;
    }
  }
  for (int j = 0; j < ny; ++j)
    for (int i = 1; i < nx; ++i)
      if (g.is_fluid(i - 1, j) && g.is_fluid(i, j)) inc.x_at(i, j) = dt * (0.5 * (fx.at(i - 1, j) + fx.at(i, j)));
  for (int j = 1; j < ny; ++j)
    for (int i = 0; i < nx; ++i)
      if (g.is_fluid(i, j - 1) && g.is_fluid(i, j)) inc.y_at(i, j) = dt * (0.5 * (fy.at(i, j - 1) + fy.at(i, j)));
  return inc;
}

MacVelocity vorticity_confinement(const MacVelocity& u, const OccupancyGrid& g, const ForceConfig& cfg, double dt) {
  MacVelocity out = u;
  if (cfg.lambda_vc == 0.0) return out;
  const MacVelocity inc = vorticity_confinement_increment(u, g, cfg, dt);
  for (std::size_t k = 0; k < out.ux.size(); ++k) out.ux[k] += inc.ux[k];
  for (std::size_t k = 0; k < out.uy.size(); ++k) out.uy[k] += inc.uy[k];
  return out;
}

MacVelocity enforce_solid_velocities(const MacVelocity& u, const OccupancyGrid& g, Vec2 solid_velocity) {
  const GridDims& d = u.dims;
  MacVelocity out = u;
  for (int j = 0; j < d.ny; ++j) {
    out.x_at(0, j) = 0.0;
    out.x_at(d.nx, j) = 0.0;
    for (int i = 1; i < d.nx; ++i)
      if (g.is_solid(i - 1, j) || g.is_solid(i, j)) out.x_at(i, j) = solid_velocity.x;
  }
  for (int i = 0; i < d.nx; ++i) {
    out.y_at(i, 0) = 0.0;
    if (g.boundary == BoundaryMode::closed) out.y_at(i, d.ny) = 0.0;
    else if (g.is_solid(i, d.ny - 1)) out.y_at(i, d.ny) = solid_velocity.y;
    for (int j = 1; j < d.ny; ++j)
      if (g.is_solid(i, j - 1) || g.is_solid(i, j)) out.y_at(i, j) = solid_velocity.y;
  }
  return out;
}

}  // namespace fluidnet
