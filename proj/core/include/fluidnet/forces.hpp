#pragma once

#include "fluidnet/grid.hpp"

namespace fluidnet {

struct ForceConfig {
  Vec2 gravity{0.0, 0.0};      // cells / s^2
  double buoyancy_coeff = 0.0;  // >= 0
  double lambda_vc = 0.05;      // vorticity confinement amplitude, >= 0
  double rho = 1.0;             // > 0
};

// Throws std::invalid_argument on rho <= 0 or negative coefficients.
void validate(const ForceConfig& cfg);

// Unit vector opposite to gravity; +y when gravity is zero.
Vec2 buoyancy_direction(Vec2 gravity);

// u += dt * f on every open face.
MacVelocity add_body_force(const MacVelocity& u, Vec2 f, const OccupancyGrid& g, double dt);

// Boussinesq term: open faces gain dt * coeff * (face-averaged density) along
// the direction opposite to gravity.
MacVelocity add_buoyancy(const MacVelocity& u, const ScalarGrid& density, const ForceConfig& cfg,
                         const OccupancyGrid& g, double dt);

// Per-face increment dt * lambda * h * (N x w) averaged from cell centers onto
// faces between two fluid cells; zero elsewhere.
MacVelocity vorticity_confinement_increment(const MacVelocity& u, const OccupancyGrid& g, const ForceConfig& cfg,
                                            double dt);

MacVelocity vorticity_confinement(const MacVelocity& u, const OccupancyGrid& g, const ForceConfig& cfg, double dt);

// Slip condition: the normal component on every face touching a solid cell is
// set to the solid's normal velocity. Faces on the domain frame belong to the
// static walls and are set to zero.
MacVelocity enforce_solid_velocities(const MacVelocity& u, const OccupancyGrid& g, Vec2 solid_velocity = {});

}  // namespace fluidnet
