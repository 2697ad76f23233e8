#include "fluidnet/grid.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace fluidnet {

void validate(const GridDims& dims) {
  if (dims.nx < 4 || dims.ny < 4) {
    throw std::invalid_argument("grid dims must be at least 4x4, got " + std::to_string(dims.nx) + "x" +
                                std::to_string(dims.ny));
  }
  if (!(dims.h > 0.0) || !std::isfinite(dims.h)) throw std::invalid_argument("grid cell size h must be positive");
}

ScalarGrid::ScalarGrid(GridDims d, double fill) : dims(d), values(d.cells(), fill) {}

MacVelocity::MacVelocity(GridDims d, Vec2 fill) : dims(d), ux(d.x_faces(), fill.x), uy(d.y_faces(), fill.y) {}

OccupancyGrid::OccupancyGrid(GridDims d, BoundaryMode mode) : dims(d), solid(d.cells(), 0), boundary(mode) {}

std::size_t OccupancyGrid::fluid_count() const {
  return static_cast<std::size_t>(std::count(solid.begin(), solid.end(), std::uint8_t{0}));
}

namespace {

inline double lerp(double a, double b, double t) { return a + t * (b - a); }

// Splits a clamped continuous coordinate into a base index and fraction. At
// the upper edge base = n - 1 and t = 0, so exact sample points read exactly.
inline void split(double f, int n, int& base, double& t) {
  f = std::clamp(f, 0.0, static_cast<double>(n - 1));
  base = std::min(static_cast<int>(f), n - 1);
  t = f - base;
}

}  // namespace

double sample_lattice(const std::vector<double>& values, int width, int height, double fx, double fy) {
  int i0 = 0;
  int j0 = 0;
  double tx = 0.0;
  double ty = 0.0;
  split(fx, width, i0, tx);
  split(fy, height, j0, ty);
  const int i1 = std::min(i0 + 1, width - 1);
  const int j1 = std::min(j0 + 1, height - 1);
  const auto at = [&](int i, int j) { return values[static_cast<std::size_t>(i) + static_cast<std::size_t>(width) * j]; };
  return lerp(lerp(at(i0, j0), at(i1, j0), tx), lerp(at(i0, j1), at(i1, j1), tx), ty);
}

double sample_scalar(const ScalarGrid& grid, Vec2 pos) {
  const double h = grid.dims.h;
  return sample_lattice(grid.values, grid.dims.nx, grid.dims.ny, pos.x / h - 0.5, pos.y / h - 0.5);
}

Vec2 sample_velocity(const MacVelocity& u, Vec2 pos) {
  const double h = u.dims.h;
  const double fx = pos.x / h;
  const double fy = pos.y / h;
  return {sample_lattice(u.ux, u.dims.nx + 1, u.dims.ny, fx, fy - 0.5),
          sample_lattice(u.uy, u.dims.nx, u.dims.ny + 1, fx - 0.5, fy)};
}

namespace {

// One-dimensional squared-distance transform of f (lower envelope of
// parabolas). Entries of f equal to kInf mark "no site".
constexpr double kInf = 1e30;

void edt_1d(const std::vector<double>& f, std::vector<double>& out, std::vector<int>& v, std::vector<double>& z) {
  const int n = static_cast<int>(f.size());
  int k = -1;
  for (int q = 0; q < n; ++q) {
    if (f[q] >= kInf) continue;
    if (k < 0) {
      k = 0;
      v[0] = q;
      z[0] = -kInf;
      z[1] = kInf;
      continue;
    }
    const auto intersect = [&](int p) {
      return ((f[q] + static_cast<double>(q) * q) - (f[p] + static_cast<double>(p) * p)) / (2.0 * (q - p));
    };
    double s = intersect(v[k]);
    // z[0] = -inf bounds the walk.
    while (s <= z[k]) {
      --k;
      s = intersect(v[k]);
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = kInf;
  }
  if (k < 0) {
    std::fill(out.begin(), out.end(), kInf);
    return;
  }
  int j = 0;
  for (int q = 0; q < n; ++q) {
    while (z[j + 1] < q) ++j;
    const double dq = q - v[j];
    out[q] = dq * dq + f[v[j]];
  }
}

}  // namespace

DistanceField distance_field(const OccupancyGrid& g) {
  const int nx = g.dims.nx;
  const int ny = g.dims.ny;
  DistanceField df{g.dims, std::vector<double>(g.dims.cells(), DistanceField::kNoSolid)};
  if (std::none_of(g.solid.begin(), g.solid.end(), [](std::uint8_t s) { return s != 0; })) return df;

  std::vector<double> sq(g.dims.cells());
  for (std::size_t c = 0; c < sq.size(); ++c) sq[c] = g.solid[c] ? 0.0 : kInf;

  const int n = std::max(nx, ny);
  std::vector<double> f(n);
  std::vector<double> out(n);
  std::vector<int> v(n);
  std::vector<double> z(n + 1);

  // Columns (along y).
  f.resize(ny);
  out.resize(ny);
  for (int i = 0; i < nx; ++i) {
    for (int j = 0; j < ny; ++j) f[j] = sq[i + static_cast<std::size_t>(nx) * j];
    edt_1d(f, out, v, z);
    for (int j = 0; j < ny; ++j) sq[i + static_cast<std::size_t>(nx) * j] = out[j];
  }
  // Rows (along x).
  f.resize(nx);
  out.resize(nx);
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) f[i] = sq[i + static_cast<std::size_t>(nx) * j];
    edt_1d(f, out, v, z);
    for (int i = 0; i < nx; ++i) sq[i + static_cast<std::size_t>(nx) * j] = out[i];
  }
  for (std::size_t c = 0; c < sq.size(); ++c) df.d[c] = g.solid[c] ? 0.0 : std::sqrt(sq[c]);
  return df;
}

ComponentLabels connected_components(const OccupancyGrid& g) {
  const int nx = g.dims.nx;
  const int ny = g.dims.ny;
  ComponentLabels out{g.dims, std::vector<int>(g.dims.cells(), ComponentLabels::kSolid), 0};
  std::vector<int> stack;
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      const std::size_t c = i + static_cast<std::size_t>(nx) * j;
      if (g.solid[c] || out.labels[c] != ComponentLabels::kSolid) continue;
      const int label = out.count++;
      out.labels[c] = label;
      stack.assign(1, static_cast<int>(c));
      while (!stack.empty()) {
        const int cur = stack.back();
        stack.pop_back();
        const int ci = cur % nx;
        const int cj = cur / nx;
        const int ni[4] = {ci - 1, ci + 1, ci, ci};
        const int nj[4] = {cj, cj, cj - 1, cj + 1};
        for (int k = 0; k < 4; ++k) {
          if (ni[k] < 0 || ni[k] >= nx || nj[k] < 0 || nj[k] >= ny) continue;
          const std::size_t nc = ni[k] + static_cast<std::size_t>(nx) * nj[k];
          if (g.solid[nc] || out.labels[nc] != ComponentLabels::kSolid) continue;
          out.labels[nc] = label;
          stack.push_back(static_cast<int>(nc));
        }
      }
    }
  }
  return out;
}

}  // namespace fluidnet
