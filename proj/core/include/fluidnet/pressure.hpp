#pragma once

// Classical solvers for the pressure Poisson system A p = b (A from fdops).
//
// Every fluid component without an air neighbor is a pure-Neumann system
// whose solution is defined up to a constant; solvers report those
// components with zero mean.

#include <vector>

#include "fluidnet/grid.hpp"

namespace fluidnet {

struct ComponentInfo {
  ComponentLabels labels;
  std::vector<std::uint8_t> closed;  // per component: 1 when it has no air neighbor
};

ComponentInfo analyze_components(const OccupancyGrid& g);

// Subtracts the per-component mean of b on closed components.
ScalarGrid make_compatible(const ScalarGrid& b, const OccupancyGrid& g);

// Subtracts the per-component mean of p on closed components. Used to align
// solutions before comparing them.
ScalarGrid remove_closed_means(const ScalarGrid& p, const OccupancyGrid& g);

// Jacobi sweeps from p = 0 with ping-pong buffers. Solid neighbors mirror the
// center value, air neighbors are p = 0:
//   p'(c) = (sum_fluid p(n) + n_solid * p(c) + h^2 b(c)) / 4
// Throws std::domain_error when a fluid cell with no fluid or air neighbor
// carries a nonzero right-hand side.
ScalarGrid solve_jacobi(const OccupancyGrid& g, const ScalarGrid& b, int iters);

struct PcgResult {
  ScalarGrid p;
  int iterations = 0;
  double relative_residual = 0.0;  // ||A p - b|| / ||b|| of the returned iterate
  bool converged = false;
  int guarded_pivots = 0;          // IC(0) pivots replaced by the diagonal
  bool diagonal_fallback = false;  // the factorization was unusable
};

// Conjugate gradient with an IC(0) preconditioner built on the 5-point
// matrix. Stops at ||A p - b|| <= tol * ||b|| or after max_iter iterations
// (converged = false, iterate still returned).
PcgResult solve_pcg(const OccupancyGrid& g, const ScalarGrid& b, double tol, int max_iter);

// Minimum-norm least-squares solve of the densely assembled system.
// Throws std::length_error above kDenseMaxUnknowns fluid cells.
inline constexpr std::size_t kDenseMaxUnknowns = 4096;
ScalarGrid solve_dense_direct(const OccupancyGrid& g, const ScalarGrid& b);

// ||A p - b||_2 over fluid cells.
double residual_norm(const OccupancyGrid& g, const ScalarGrid& p, const ScalarGrid& b);

double l2_norm(const ScalarGrid& q, const OccupancyGrid& g);

}  // namespace fluidnet
