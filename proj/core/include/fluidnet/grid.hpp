#pragma once

// Staggered (MAC) grid containers.
//
// Indexing convention used throughout the library: cell (i, j) has i along x
// and j along y. Storage is row-major with j as the slow index, so the flat
// index of cell (i, j) is i + nx * j.
//
//            uy(i, j+1)
//          +-----^-----+
//          |           |
//  ux(i,j) >  p(i, j)  > ux(i+1, j)
//          |           |
//          +-----^-----+
//             uy(i, j)
//
// x-faces: (nx + 1) * ny samples at world position (i * h, (j + 0.5) * h)
// y-faces: nx * (ny + 1) samples at world position ((i + 0.5) * h, j * h)
// cells:   nx * ny samples at world position ((i + 0.5) * h, (j + 0.5) * h)

#include <cstddef>
#include <cstdint>
#include <limits>
#include <vector>

namespace fluidnet {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend bool operator==(Vec2 a, Vec2 b) = default;
};

// Boundary treatment of the implicit one-cell frame around the domain.
// closed: every border is a static solid wall.
// open_top: the row above the domain is air (p = 0), the others are walls.
enum class BoundaryMode : std::uint8_t { closed = 0, open_top = 1 };

struct GridDims {
  int nx = 0;
  int ny = 0;
  double h = 1.0;

  std::size_t cells() const { return static_cast<std::size_t>(nx) * ny; }
  std::size_t x_faces() const { return static_cast<std::size_t>(nx + 1) * ny; }
  std::size_t y_faces() const { return static_cast<std::size_t>(nx) * (ny + 1); }

  friend bool operator==(const GridDims&, const GridDims&) = default;
};

// Throws std::invalid_argument unless nx, ny >= 4 and h > 0.
void validate(const GridDims& dims);

struct ScalarGrid {
  GridDims dims;
  std::vector<double> values;

  ScalarGrid() = default;
  explicit ScalarGrid(GridDims d, double fill = 0.0);

  double& at(int i, int j) { return values[static_cast<std::size_t>(i) + static_cast<std::size_t>(dims.nx) * j]; }
  double at(int i, int j) const { return values[static_cast<std::size_t>(i) + static_cast<std::size_t>(dims.nx) * j]; }

  friend bool operator==(const ScalarGrid&, const ScalarGrid&) = default;
};

struct MacVelocity {
  GridDims dims;
  std::vector<double> ux;  // (nx + 1) * ny
  std::vector<double> uy;  // nx * (ny + 1)

  MacVelocity() = default;
  explicit MacVelocity(GridDims d, Vec2 fill = {});

  double& x_at(int i, int j) { return ux[static_cast<std::size_t>(i) + static_cast<std::size_t>(dims.nx + 1) * j]; }
  double x_at(int i, int j) const { return ux[static_cast<std::size_t>(i) + static_cast<std::size_t>(dims.nx + 1) * j]; }
  double& y_at(int i, int j) { return uy[static_cast<std::size_t>(i) + static_cast<std::size_t>(dims.nx) * j]; }
  double y_at(int i, int j) const { return uy[static_cast<std::size_t>(i) + static_cast<std::size_t>(dims.nx) * j]; }

  friend bool operator==(const MacVelocity&, const MacVelocity&) = default;
};

enum class CellKind : std::uint8_t { fluid, solid, air };

struct OccupancyGrid {
  GridDims dims;
  std::vector<std::uint8_t> solid;  // 1 = solid, 0 = fluid
  BoundaryMode boundary = BoundaryMode::closed;

  OccupancyGrid() = default;
  explicit OccupancyGrid(GridDims d, BoundaryMode mode = BoundaryMode::closed);

  bool is_solid(int i, int j) const { return solid[static_cast<std::size_t>(i) + static_cast<std::size_t>(dims.nx) * j] != 0; }
  void set_solid(int i, int j, bool s) { solid[static_cast<std::size_t>(i) + static_cast<std::size_t>(dims.nx) * j] = s ? 1 : 0; }

  // Classification that also covers the implicit frame: any (i, j) outside
  // the domain is a wall, except the row above the top in open_top mode.
  CellKind kind(int i, int j) const {
    if (i < 0 || i >= dims.nx || j < 0) return CellKind::solid;
    if (j >= dims.ny) return (j == dims.ny && boundary == BoundaryMode::open_top) ? CellKind::air : CellKind::solid;
    return is_solid(i, j) ? CellKind::solid : CellKind::fluid;
  }
  bool is_fluid(int i, int j) const { return kind(i, j) == CellKind::fluid; }

  std::size_t fluid_count() const;

  friend bool operator==(const OccupancyGrid&, const OccupancyGrid&) = default;
};

// d = 0 on solid cells; Euclidean center-to-center distance (in cells) to the
// nearest solid cell elsewhere. kNoSolid fills every entry when the grid has
// no solid cell.
struct DistanceField {
  static constexpr double kNoSolid = std::numeric_limits<double>::max();

  GridDims dims;
  std::vector<double> d;

  double at(int i, int j) const { return d[static_cast<std::size_t>(i) + static_cast<std::size_t>(dims.nx) * j]; }
};

struct ComponentLabels {
  static constexpr int kSolid = -1;

  GridDims dims;
  std::vector<int> labels;  // dense 0..count-1 on fluid cells, kSolid elsewhere
  int count = 0;

  int at(int i, int j) const { return labels[static_cast<std::size_t>(i) + static_cast<std::size_t>(dims.nx) * j]; }
};

// Bilinear interpolation of cell-center samples; positions are in world
// units and are clamped into the band spanned by the outermost samples.
double sample_scalar(const ScalarGrid& grid, Vec2 pos);

// Each component interpolated on its own face lattice, clamped per component.
Vec2 sample_velocity(const MacVelocity& u, Vec2 pos);

// Bilinear read of a width x height lattice in its own index space (sample
// (i, j) sits at (i, j)); coordinates are clamped to [0, width-1] x [0, height-1].
double sample_lattice(const std::vector<double>& values, int width, int height, double fx, double fy);

// Exact Euclidean distance transform (two separable passes over squared
// distances, Felzenszwalb-Huttenlocher lower envelope).
DistanceField distance_field(const OccupancyGrid& g);

// 4-connected labeling of fluid cells in scan order.
ComponentLabels connected_components(const OccupancyGrid& g);

}  // namespace fluidnet
