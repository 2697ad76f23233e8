#pragma once

#include "fluidnet/grid.hpp"

namespace fluidnet {

enum class AdvectionScheme { semi_lagrangian, maccormack };

// Clips the straight segment start -> end (world units) at its first exit
// from the fluid region (solid cells or the domain frame). The crossing is
// located by bisection on the occupancy indicator and the fluid-side point is
// returned, so the result always lies inside a fluid cell.
Vec2 clamp_trace(const OccupancyGrid& g, Vec2 start, Vec2 end);

// Single backward-Euler trace per fluid cell plus a bilinear read; solid cells
// keep their input value. dt must be >= 0.
ScalarGrid advect_scalar_sl(const ScalarGrid& q, const MacVelocity& u, const OccupancyGrid& g, double dt);

// Predictor/corrector on top of advect_scalar_sl. Values that leave the range
// of the four samples read by the forward trace fall back to the forward value.
ScalarGrid advect_scalar_maccormack(const ScalarGrid& q, const MacVelocity& u, const OccupancyGrid& g, double dt);

ScalarGrid advect_scalar(const ScalarGrid& q, const MacVelocity& u, const OccupancyGrid& g, double dt,
                         AdvectionScheme scheme);

// Each open face component is advected as a scalar through the frozen field
// u; faces touching a solid keep their enforced values.
MacVelocity self_advect_velocity(const MacVelocity& u, const OccupancyGrid& g, double dt, AdvectionScheme scheme);

}  // namespace fluidnet
