#include "fluidnet/fdops.hpp"

#include <numeric>

namespace fluidnet {

int nonsolid_neighbors(const OccupancyGrid& g, int i, int j) {
  return static_cast<int>(g.kind(i - 1, j) != CellKind::solid) + static_cast<int>(g.kind(i + 1, j) != CellKind::solid) +
         static_cast<int>(g.kind(i, j - 1) != CellKind::solid) + static_cast<int>(g.kind(i, j + 1) != CellKind::solid);
}

ScalarGrid divergence(const MacVelocity& u, const OccupancyGrid& g) {
  const GridDims& d = u.dims;
  ScalarGrid out(d);
  const double inv_h = 1.0 / d.h;
  for (int j = 0; j < d.ny; ++j) {
    for (int i = 0; i < d.nx; ++i) {
      if (g.is_solid(i, j)) continue;
      out.at(i, j) = (u.x_at(i + 1, j) - u.x_at(i, j) + u.y_at(i, j + 1) - u.y_at(i, j)) * inv_h;
    }
  }
  return out;
}

namespace {

inline double pressure_or_air(const ScalarGrid& p, const OccupancyGrid& g, int i, int j) {
  return g.kind(i, j) == CellKind::fluid ? p.at(i, j) : 0.0;
}

}  // namespace

MacVelocity subtract_pressure_gradient(const MacVelocity& u, const ScalarGrid& p, const OccupancyGrid& g) {
  const GridDims& d = u.dims;
  MacVelocity out = u;
  const double inv_h = 1.0 / d.h;
  for (int j = 0; j < d.ny; ++j) {
    for (int i = 0; i <= d.nx; ++i) {
      if (!x_face_open(g, i, j)) continue;
      out.x_at(i, j) -= (pressure_or_air(p, g, i, j) - pressure_or_air(p, g, i - 1, j)) * inv_h;
    }
  }
  for (int j = 0; j <= d.ny; ++j) {
    for (int i = 0; i < d.nx; ++i) {
      if (!y_face_open(g, i, j)) continue;
      out.y_at(i, j) -= (pressure_or_air(p, g, i, j) - pressure_or_air(p, g, i, j - 1)) * inv_h;
    }
  }
  return out;
}

ScalarGrid pressure_gradient_adjoint(const MacVelocity& cot, const OccupancyGrid& g) {
  const GridDims& d = cot.dims;
  ScalarGrid out(d);
  const double inv_h = 1.0 / d.h;
  for (int j = 0; j < d.ny; ++j) {
    for (int i = 0; i <= d.nx; ++i) {
      if (!x_face_open(g, i, j)) continue;
      const double c = cot.x_at(i, j) * inv_h;
      if (g.is_fluid(i, j)) out.at(i, j) -= c;
      if (g.is_fluid(i - 1, j)) out.at(i - 1, j) += c;
    }
  }
  for (int j = 0; j <= d.ny; ++j) {
    for (int i = 0; i < d.nx; ++i) {
      if (!y_face_open(g, i, j)) continue;
      const double c = cot.y_at(i, j) * inv_h;
      if (g.is_fluid(i, j)) out.at(i, j) -= c;
      if (g.is_fluid(i, j - 1)) out.at(i, j - 1) += c;
    }
  }
  return out;
}

ScalarGrid vorticity(const MacVelocity& u) {
  const GridDims& d = u.dims;
  const int nx = d.nx;
  const int ny = d.ny;
  ScalarGrid cu(d);
  ScalarGrid cv(d);
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      cu.at(i, j) = 0.5 * (u.x_at(i, j) + u.x_at(i + 1, j));
      cv.at(i, j) = 0.5 * (u.y_at(i, j) + u.y_at(i, j + 1));
    }
  }
  ScalarGrid w(d);
  const double h = d.h;
  for (int j = 0; j < ny; ++j) {
    const int jm = j > 0 ? j - 1 : j;
    const int jp = j < ny - 1 ? j + 1 : j;
    for (int i = 0; i < nx; ++i) {
      const int im = i > 0 ? i - 1 : i;
      const int ip = i < nx - 1 ? i + 1 : i;
      const double dvdx = (cv.at(ip, j) - cv.at(im, j)) / ((ip - im) * h);
      const double dudy = (cu.at(i, jp) - cu.at(i, jm)) / ((jp - jm) * h);
      w.at(i, j) = dvdx - dudy;
    }
  }
  return w;
}

ScalarGrid apply_poisson(const OccupancyGrid& g, const ScalarGrid& p) {
  const GridDims& d = p.dims;
  ScalarGrid out(d);
  const double inv_h2 = 1.0 / (d.h * d.h);
  for (int j = 0; j < d.ny; ++j) {
    for (int i = 0; i < d.nx; ++i) {
      if (g.is_solid(i, j)) continue;
      const int ni[4] = {i - 1, i + 1, i, i};
      const int nj[4] = {j, j, j - 1, j + 1};
      double acc = 0.0;
      for (int k = 0; k < 4; ++k) {
        switch (g.kind(ni[k], nj[k])) {
          case CellKind::fluid: acc += p.at(i, j) - p.at(ni[k], nj[k]); break;
          case CellKind::air: acc += p.at(i, j); break;
          case CellKind::solid: break;
        }
      }
      out.at(i, j) = acc * inv_h2;
    }
  }
  return out;
}

MacVelocity adjoint_divergence(const ScalarGrid& p, const OccupancyGrid& g) {
  const GridDims& d = p.dims;
  MacVelocity v(d);
  const double inv_h = 1.0 / d.h;
  // The face is the right (top) face of the left (bottom) cell, contributing
  // +u / h to its divergence, and the left (bottom) face of the other cell.
  for (int j = 0; j < d.ny; ++j) {
    for (int i = 0; i <= d.nx; ++i) {
      double acc = 0.0;
      if (g.is_fluid(i - 1, j)) acc += p.at(i - 1, j);
      if (g.is_fluid(i, j)) acc -= p.at(i, j);
      v.x_at(i, j) = acc * inv_h;
    }
  }
  for (int j = 0; j <= d.ny; ++j) {
    for (int i = 0; i < d.nx; ++i) {
      double acc = 0.0;
      if (g.is_fluid(i, j - 1)) acc += p.at(i, j - 1);
      if (g.is_fluid(i, j)) acc -= p.at(i, j);
      v.y_at(i, j) = acc * inv_h;
    }
  }
  return v;
}

double dot(const ScalarGrid& a, const ScalarGrid& b) {
  return std::inner_product(a.values.begin(), a.values.end(), b.values.begin(), 0.0);
}

double dot(const MacVelocity& a, const MacVelocity& b) {
  return std::inner_product(a.ux.begin(), a.ux.end(), b.ux.begin(), 0.0) +
         std::inner_product(a.uy.begin(), a.uy.end(), b.uy.begin(), 0.0);
}

}  // namespace fluidnet
