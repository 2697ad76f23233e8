#include "fluidnet/pressure.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>

#include "fluidnet/fdops.hpp"

namespace fluidnet {

ComponentInfo analyze_components(const OccupancyGrid& g) {
  ComponentInfo info{connected_components(g), {}};
  info.closed.assign(static_cast<std::size_t>(info.labels.count), 1);
  if (g.boundary == BoundaryMode::open_top) {
    const int top = g.dims.ny - 1;
    for (int i = 0; i < g.dims.nx; ++i) {
      const int label = info.labels.at(i, top);
      if (label != ComponentLabels::kSolid) info.closed[label] = 0;
    }
  }
  return info;
}

namespace {

void subtract_closed_means(std::vector<double>& values, const ComponentInfo& info) {
  const auto& labels = info.labels.labels;
  std::vector<double> sum(info.closed.size(), 0.0);
  std::vector<std::size_t> count(info.closed.size(), 0);
  for (std::size_t c = 0; c < values.size(); ++c) {
    if (labels[c] == ComponentLabels::kSolid) continue;
    sum[labels[c]] += values[c];
    ++count[labels[c]];
  }
  for (std::size_t c = 0; c < values.size(); ++c) {
    const int l = labels[c];
    if (l == ComponentLabels::kSolid || !info.closed[l]) continue;
    values[c] -= sum[l] / static_cast<double>(count[l]);
  }
}

}  // namespace

ScalarGrid make_compatible(const ScalarGrid& b, const OccupancyGrid& g) {
  ScalarGrid out = b;
  for (std::size_t c = 0; c < out.values.size(); ++c)
    if (g.solid[c]) out.values[c] = 0.0;
  subtract_closed_means(out.values, analyze_components(g));
  return out;
}

ScalarGrid remove_closed_means(const ScalarGrid& p, const OccupancyGrid& g) {
  ScalarGrid out = p;
  subtract_closed_means(out.values, analyze_components(g));
  return out;
}

ScalarGrid solve_jacobi(const OccupancyGrid& g, const ScalarGrid& b, int iters) {
  if (iters < 1) throw std::invalid_argument("jacobi needs at least one iteration");
  const GridDims& d = g.dims;
  const double h2 = d.h * d.h;
  for (int j = 0; j < d.ny; ++j) {
    for (int i = 0; i < d.nx; ++i) {
      if (!g.is_solid(i, j) && nonsolid_neighbors(g, i, j) == 0 && b.at(i, j) != 0.0) {
        throw std::domain_error("isolated fluid cell (" + std::to_string(i) + ", " + std::to_string(j) +
                                ") has a nonzero right-hand side");
      }
    }
  }
  ScalarGrid cur(d);
  ScalarGrid next(d);
  for (int it = 0; it < iters; ++it) {
    for (int j = 0; j < d.ny; ++j) {
      for (int i = 0; i < d.nx; ++i) {
        if (g.is_solid(i, j)) continue;
        const double pc = cur.at(i, j);
        const int ni[4] = {i - 1, i + 1, i, i};
        const int nj[4] = {j, j, j - 1, j + 1};
        double acc = h2 * b.at(i, j);
        for (int k = 0; k < 4; ++k) {
          switch (g.kind(ni[k], nj[k])) {
            case CellKind::fluid: acc += cur.at(ni[k], nj[k]); break;
            case CellKind::solid: acc += pc; break;
            case CellKind::air: break;
          }
        }
        next.at(i, j) = 0.25 * acc;
      }
    }
    std::swap(cur, next);
  }
  return cur;
}

namespace {

// Fluid cells with at least one fluid or air neighbor, in cell order.
struct Unknowns {
  std::vector<int> cell;      // unknown -> cell index
  std::vector<int> index;     // cell -> unknown or -1
  std::vector<double> diag;   // h^2-scaled diagonal
  std::vector<int> left, right, down, up;  // neighbor unknowns or -1
  std::vector<int> component;
};

Unknowns build_unknowns(const OccupancyGrid& g, const ComponentInfo& info) {
  const GridDims& d = g.dims;
  Unknowns u;
  u.index.assign(d.cells(), -1);
  for (int j = 0; j < d.ny; ++j) {
    for (int i = 0; i < d.nx; ++i) {
      if (g.is_solid(i, j) || nonsolid_neighbors(g, i, j) == 0) continue;
      const int c = i + d.nx * j;
      u.index[c] = static_cast<int>(u.cell.size());
      u.cell.push_back(c);
    }
  }
  const std::size_t n = u.cell.size();
  u.diag.resize(n);
  u.left.assign(n, -1);
  u.right.assign(n, -1);
  u.down.assign(n, -1);
  u.up.assign(n, -1);
  u.component.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    const int c = u.cell[k];
    const int i = c % d.nx;
    const int j = c / d.nx;
    u.diag[k] = nonsolid_neighbors(g, i, j);
    u.component[k] = info.labels.labels[c];
    if (g.is_fluid(i - 1, j)) u.left[k] = u.index[c - 1];
    if (g.is_fluid(i + 1, j)) u.right[k] = u.index[c + 1];
    if (g.is_fluid(i, j - 1)) u.down[k] = u.index[c - d.nx];
    if (g.is_fluid(i, j + 1)) u.up[k] = u.index[c + d.nx];
  }
  return u;
}

void apply_scaled(const Unknowns& u, const std::vector<double>& x, std::vector<double>& y) {
  const std::size_t n = x.size();
  for (std::size_t k = 0; k < n; ++k) {
    double acc = u.diag[k] * x[k];
    if (u.left[k] >= 0) acc -= x[u.left[k]];
    if (u.right[k] >= 0) acc -= x[u.right[k]];
    if (u.down[k] >= 0) acc -= x[u.down[k]];
    if (u.up[k] >= 0) acc -= x[u.up[k]];
    y[k] = acc;
  }
}

double dotv(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

class ClosedMeanProjector {
 public:
  ClosedMeanProjector(const Unknowns& u, const ComponentInfo& info)
      : comp_(u.component), closed_(info.closed), sum_(info.closed.size()), count_(info.closed.size(), 0) {
    for (int c : comp_) ++count_[c];
  }

  void operator()(std::vector<double>& x) {
    std::fill(sum_.begin(), sum_.end(), 0.0);
    for (std::size_t k = 0; k < x.size(); ++k) sum_[comp_[k]] += x[k];
    for (std::size_t k = 0; k < x.size(); ++k) {
      const int c = comp_[k];
      if (closed_[c]) x[k] -= sum_[c] / static_cast<double>(count_[c]);
    }
  }

 private:
  const std::vector<int>& comp_;
  const std::vector<std::uint8_t>& closed_;
  std::vector<double> sum_;
  std::vector<std::size_t> count_;
};

// IC(0) factor stored as inverse pivots, A ~ L L^T with L_kk = 1 / inv[k].
// Pivots below kSafety * diag are replaced by the diagonal.
struct IncompleteCholesky {
  static constexpr double kSafety = 0.25;

  std::vector<double> inv;
  int guarded = 0;
  bool diagonal_only = false;

  explicit IncompleteCholesky(const Unknowns& u) : inv(u.cell.size()) {
    for (std::size_t k = 0; k < inv.size(); ++k) {
      double e = u.diag[k];
      if (u.left[k] >= 0) e -= inv[u.left[k]] * inv[u.left[k]];
      if (u.down[k] >= 0) e -= inv[u.down[k]] * inv[u.down[k]];
      if (e < kSafety * u.diag[k]) {
        e = u.diag[k];
        ++guarded;
      }
      inv[k] = 1.0 / std::sqrt(e);
      if (!std::isfinite(inv[k])) diagonal_only = true;
    }
    if (diagonal_only) {
      for (std::size_t k = 0; k < inv.size(); ++k) inv[k] = 1.0 / std::sqrt(u.diag[k]);
    }
  }

  void apply(const Unknowns& u, const std::vector<double>& r, std::vector<double>& z) const {
    const std::size_t n = r.size();
    if (diagonal_only) {
      for (std::size_t k = 0; k < n; ++k) z[k] = r[k] * inv[k] * inv[k];
      return;
    }
    // Forward: L q = r. Off-diagonal entries of L are -inv[neighbor].
    for (std::size_t k = 0; k < n; ++k) {
      double t = r[k];
      if (u.left[k] >= 0) t += inv[u.left[k]] * z[u.left[k]];
      if (u.down[k] >= 0) t += inv[u.down[k]] * z[u.down[k]];
      z[k] = t * inv[k];
    }
    // Backward: L^T z = q.
    for (std::size_t k = n; k-- > 0;) {
      double t = z[k];
      if (u.right[k] >= 0) t += inv[k] * z[u.right[k]];
      if (u.up[k] >= 0) t += inv[k] * z[u.up[k]];
      z[k] = t * inv[k];
    }
  }
};

}  // namespace

PcgResult solve_pcg(const OccupancyGrid& g, const ScalarGrid& b, double tol, int max_iter) {
  if (!(tol > 0.0)) throw std::invalid_argument("pcg tolerance must be positive");
  const GridDims& d = g.dims;
  PcgResult res;
  res.p = ScalarGrid(d);

  const ComponentInfo info = analyze_components(g);
  const Unknowns u = build_unknowns(g, info);
  const std::size_t n = u.cell.size();
  const double h2 = d.h * d.h;

  std::vector<double> rhs(n);
  for (std::size_t k = 0; k < n; ++k) rhs[k] = h2 * b.values[u.cell[k]];
  const double b_norm = std::sqrt(dotv(rhs, rhs));
  if (b_norm == 0.0) {
    res.converged = true;
    return res;
  }

  const IncompleteCholesky precon(u);
  res.guarded_pivots = precon.guarded;
  res.diagonal_fallback = precon.diagonal_only;
  ClosedMeanProjector project(u, info);

  std::vector<double> x(n, 0.0);
  std::vector<double> r = rhs;
  std::vector<double> z(n);
  std::vector<double> s(n);
  std::vector<double> q(n);

  const double target = tol * b_norm;
  const auto restart = [&]() {
    precon.apply(u, r, z);
    project(z);
    s = z;
    return dotv(r, z);
  };
  double rho = restart();
  double r_norm = b_norm;
  int it = 0;
  while (it < max_iter) {
    apply_scaled(u, s, q);
    const double sq = dotv(s, q);
    if (!(sq > 0.0)) break;
    const double alpha = rho / sq;
    for (std::size_t k = 0; k < n; ++k) {
      x[k] += alpha * s[k];
      r[k] -= alpha * q[k];
    }
    project(x);
    ++it;
    r_norm = std::sqrt(dotv(r, r));
    if (r_norm <= target) {
      // Confirm against the true residual; restart from it if the recurrence drifted.
      apply_scaled(u, x, q);
      for (std::size_t k = 0; k < n; ++k) r[k] = rhs[k] - q[k];
      r_norm = std::sqrt(dotv(r, r));
      if (r_norm <= target) break;
      rho = restart();
      continue;
    }
    precon.apply(u, r, z);
    project(z);
    const double rho_next = dotv(r, z);
    const double beta = rho_next / rho;
    rho = rho_next;
    for (std::size_t k = 0; k < n; ++k) s[k] = z[k] + beta * s[k];
  }

  for (std::size_t k = 0; k < n; ++k) res.p.values[u.cell[k]] = x[k];
  res.iterations = it;
  // Cells excluded from the unknowns (no fluid or air neighbor) still count
  // toward the reported residual.
  res.relative_residual = residual_norm(g, res.p, b) / l2_norm(b, g);
  res.converged = res.relative_residual <= tol;
  return res;
}

ScalarGrid solve_dense_direct(const OccupancyGrid& g, const ScalarGrid& b) {
  const GridDims& d = g.dims;
  std::vector<int> cells;
  std::vector<int> index(d.cells(), -1);
  for (std::size_t c = 0; c < d.cells(); ++c) {
    if (g.solid[c]) continue;
    index[c] = static_cast<int>(cells.size());
    cells.push_back(static_cast<int>(c));
  }
  const std::size_t n = cells.size();
  if (n > kDenseMaxUnknowns) {
    throw std::length_error("dense direct solve limited to " + std::to_string(kDenseMaxUnknowns) +
                            " fluid cells, got " + std::to_string(n));
  }
  ScalarGrid out(d);
  if (n == 0) return out;

  const double inv_h2 = 1.0 / (d.h * d.h);
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  Eigen::VectorXd rhs(static_cast<Eigen::Index>(n));
  for (std::size_t k = 0; k < n; ++k) {
    const int c = cells[k];
    const int i = c % d.nx;
    const int j = c / d.nx;
    rhs[static_cast<Eigen::Index>(k)] = b.values[c];
    a(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k)) = nonsolid_neighbors(g, i, j) * inv_h2;
    const int ni[4] = {i - 1, i + 1, i, i};
    const int nj[4] = {j, j, j - 1, j + 1};
    for (int m = 0; m < 4; ++m) {
      if (!g.is_fluid(ni[m], nj[m])) continue;
      a(static_cast<Eigen::Index>(k), index[ni[m] + d.nx * nj[m]]) = -inv_h2;
    }
  }
  const Eigen::VectorXd x = a.completeOrthogonalDecomposition().solve(rhs);
  for (std::size_t k = 0; k < n; ++k) out.values[cells[k]] = x[static_cast<Eigen::Index>(k)];
  return out;
}

double residual_norm(const OccupancyGrid& g, const ScalarGrid& p, const ScalarGrid& b) {
  const ScalarGrid ap = apply_poisson(g, p);
  double s = 0.0;
  for (std::size_t c = 0; c < ap.values.size(); ++c) {
    if (g.solid[c]) continue;
    const double r = ap.values[c] - b.values[c];
    s += r * r;
  }
  return std::sqrt(s);
}

double l2_norm(const ScalarGrid& q, const OccupancyGrid& g) {
  double s = 0.0;
  for (std::size_t c = 0; c < q.values.size(); ++c)
    if (!g.solid[c]) s += q.values[c] * q.values[c];
  return std::sqrt(s);
}

}  // namespace fluidnet
