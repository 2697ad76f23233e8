#pragma once

// Finite-difference operators on the MAC grid and their transposes.
//
// Pressure convention: the library solves for the unit-scaled pressure
// p~ = dt * p / rho, so the velocity update is u = u* - grad(p~) and the
// Poisson system reads A p~ = -div(u*), where A = -laplacian is the symmetric
// positive semi-definite 5-point operator over fluid cells.

#include "fluidnet/grid.hpp"

namespace fluidnet {

// A face is "open" when neither adjacent cell is solid (walls count as solid)
// and at least one is fluid. Open faces carry the pressure-gradient update;
// every other face holds an enforced solid velocity.
inline bool x_face_open(const OccupancyGrid& g, int i, int j) {
  const CellKind l = g.kind(i - 1, j);
  const CellKind r = g.kind(i, j);
  return l != CellKind::solid && r != CellKind::solid && (l == CellKind::fluid || r == CellKind::fluid);
}
inline bool y_face_open(const OccupancyGrid& g, int i, int j) {
  const CellKind b = g.kind(i, j - 1);
  const CellKind t = g.kind(i, j);
  return b != CellKind::solid && t != CellKind::solid && (b == CellKind::fluid || t == CellKind::fluid);
}

// Fluid and air neighbors of a cell (the diagonal of A times h^2).
int nonsolid_neighbors(const OccupancyGrid& g, int i, int j);

struct PoissonSystem {
  OccupancyGrid g;
  ScalarGrid b;
};

// Net outward face flux per fluid cell divided by h; zero on solid cells.
ScalarGrid divergence(const MacVelocity& u, const OccupancyGrid& g);

// u - grad(p) on open faces; air cells contribute p = 0.
MacVelocity subtract_pressure_gradient(const MacVelocity& u, const ScalarGrid& p, const OccupancyGrid& g);

// Transpose of p -> subtract_pressure_gradient(0, p): maps a face cotangent to
// the pressure cotangent. Equals minus the divergence of the cotangent
// restricted to open faces.
ScalarGrid pressure_gradient_adjoint(const MacVelocity& cot, const OccupancyGrid& g);

// Scalar curl at cell centers from cell-averaged velocity, central
// differences inside and one-sided differences on the domain border.
ScalarGrid vorticity(const MacVelocity& u);

// Matrix-free A p on fluid cells; zero on solid cells.
ScalarGrid apply_poisson(const OccupancyGrid& g, const ScalarGrid& p);
inline ScalarGrid apply_poisson(const PoissonSystem& sys, const ScalarGrid& p) { return apply_poisson(sys.g, p); }

// Full transpose of divergence: <divergence(u, g), p> = <u, result> for every u.
MacVelocity adjoint_divergence(const ScalarGrid& p, const OccupancyGrid& g);

double dot(const ScalarGrid& a, const ScalarGrid& b);
double dot(const MacVelocity& a, const MacVelocity& b);

}  // namespace fluidnet
