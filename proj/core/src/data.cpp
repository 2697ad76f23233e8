#include "fluidnet/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include "fluidnet/random.hpp"
#include "fluidnet/sim.hpp"

namespace fluidnet {

namespace fs = std::filesystem;

// --- curl noise ---------------------------------------------------------------

namespace {

double smooth(double t) { return t * t * (3.0 - 2.0 * t); }

// One octave of value noise: random lattice values every `spacing` nodes,
// blended with smoothstep weights.
void add_octave(std::vector<double>& psi, int w, int h, double spacing, double amp, Rng& rng) {
  const int lw = static_cast<int>(std::ceil(w / spacing)) + 2;
  const int lh = static_cast<int>(std::ceil(h / spacing)) + 2;
  std::vector<double> lattice(static_cast<std::size_t>(lw) * lh);
  for (double& v : lattice) v = uniform(rng, -1.0, 1.0);
  const double ox = uniform(rng, 0.0, 1.0);
  const double oy = uniform(rng, 0.0, 1.0);
  for (int j = 0; j < h; ++j) {
    const double fy = j / spacing + oy;
    const int y0 = static_cast<int>(fy);
    const double ty = smooth(fy - y0);
    for (int i = 0; i < w; ++i) {
      const double fx = i / spacing + ox;
      const int x0 = static_cast<int>(fx);
      const double tx = smooth(fx - x0);
      const auto at = [&](int x, int y) { return lattice[static_cast<std::size_t>(x) + static_cast<std::size_t>(lw) * y]; };
      const double bot = at(x0, y0) + tx * (at(x0 + 1, y0) - at(x0, y0));
      const double top = at(x0, y0 + 1) + tx * (at(x0 + 1, y0 + 1) - at(x0, y0 + 1));
      psi[static_cast<std::size_t>(i) + static_cast<std::size_t>(w) * j] += amp * (bot + ty * (top - bot));
    }
  }
}

}  // namespace

MacVelocity curl_noise_velocity(const GridDims& dims, const NoiseConfig& cfg, std::uint64_t seed,
                                const OccupancyGrid* g) {
  validate(dims);
  if (cfg.octaves < 1 || !(cfg.scale_min > 0.0) || cfg.scale_max < cfg.scale_min || cfg.amplitude < 0.0) {
    throw std::invalid_argument("invalid noise config");
  }
  if (g && !(g->dims == dims)) throw std::invalid_argument("occupancy dims differ");
  MacVelocity u(dims);
  if (cfg.amplitude == 0.0) return u;

  const int w = dims.nx + 1;
  const int hgt = dims.ny + 1;
  Rng rng(seed);
  const double base = uniform(rng, cfg.scale_min, cfg.scale_max) * std::min(dims.nx, dims.ny);
  std::vector<double> psi(static_cast<std::size_t>(w) * hgt, 0.0);
  for (int o = 0; o < cfg.octaves; ++o) {
    const double spacing = std::max(1.0, base / std::ldexp(1.0, o));
    add_octave(psi, w, hgt, spacing, std::ldexp(1.0, -o), rng);
  }

  // Nodes where psi must vanish: the frame and corners of solid cells.
  OccupancyGrid blocked(GridDims{w, hgt, 1.0});
  for (int j = 0; j < hgt; ++j)
    for (int i = 0; i < w; ++i)
      if (i == 0 || j == 0 || i == w - 1 || j == hgt - 1) blocked.set_solid(i, j, true);
  if (g) {
    for (int j = 0; j < dims.ny; ++j) {
      for (int i = 0; i < dims.nx; ++i) {
        if (!g->is_solid(i, j)) continue;
        blocked.set_solid(i, j, true);
        blocked.set_solid(i + 1, j, true);
        blocked.set_solid(i, j + 1, true);
        blocked.set_solid(i + 1, j + 1, true);
      }
    }
  }
  const DistanceField dist = distance_field(blocked);
  for (std::size_t k = 0; k < psi.size(); ++k) {
    const double t = cfg.border_ramp > 0.0 ? std::min(1.0, dist.d[k] / cfg.border_ramp) : (blocked.solid[k] ? 0.0 : 1.0);
    psi[k] *= smooth(t);
  }

  const double h = dims.h;
  const auto node = [&](int i, int j) { return psi[static_cast<std::size_t>(i) + static_cast<std::size_t>(w) * j]; };
  for (int j = 0; j < dims.ny; ++j)
    for (int i = 0; i <= dims.nx; ++i) u.x_at(i, j) = (node(i, j + 1) - node(i, j)) / h;
  for (int j = 0; j <= dims.ny; ++j)
    for (int i = 0; i < dims.nx; ++i) u.y_at(i, j) = -(node(i + 1, j) - node(i, j)) / h;

  double sum2 = 0.0;
  for (double v : u.ux) sum2 += v * v;
  for (double v : u.uy) sum2 += v * v;
  const double rms = std::sqrt(sum2 / static_cast<double>(u.ux.size() + u.uy.size()));
  if (rms > 0.0) {
    const double s = cfg.amplitude * dims.ny * h / rms;
    for (double& v : u.ux) v *= s;
    for (double& v : u.uy) v *= s;
  }
  return u;
}

// --- geometry -------------------------------------------------------------------

bool contains(const Shape& s, Vec2 p) {
  const double c = std::cos(s.angle);
  const double sn = std::sin(s.angle);
  const double dx = p.x - s.center.x;
  const double dy = p.y - s.center.y;
  const double lx = c * dx + sn * dy;
  const double ly = -sn * dx + c * dy;
  switch (s.kind) {
    case ShapeKind::disc:
      return lx * lx + ly * ly <= s.a * s.a;
    case ShapeKind::box:
      return std::abs(lx) <= s.a && std::abs(ly) <= s.b;
    case ShapeKind::capsule: {
      const double qx = std::max(std::abs(lx) - s.a, 0.0);
      return qx * qx + ly * ly <= s.b * s.b;
    }
  }
  return false;
}

OccupancyGrid rasterize(const GridDims& dims, const std::vector<Shape>& shapes, BoundaryMode mode) {
  OccupancyGrid g(dims, mode);
  for (int j = 0; j < dims.ny; ++j) {
    for (int i = 0; i < dims.nx; ++i) {
      const Vec2 p{i + 0.5, j + 0.5};
      for (const Shape& s : shapes) {
        if (contains(s, p)) {
          g.set_solid(i, j, true);
          break;
        }
      }
    }
  }
  return g;
}

ShapeTemplate shape_template(ShapePool pool, int t) {
  if (t < 0 || t >= kTemplatesPerPool) throw std::out_of_range("shape template index out of range");
  Rng rng(mix_seed(0x5eedf00dULL, static_cast<std::uint64_t>(pool) + 1, static_cast<std::uint64_t>(t)));
  ShapeTemplate tm;
  tm.kind = static_cast<ShapeKind>(uniform_int(rng, 0, 2));
  tm.aspect = uniform(rng, 0.2, 1.0);
  return tm;
}

OccupancyGrid random_geometry(const GridDims& dims, Rng& rng, ShapePool pool, const GeometryConfig& cfg) {
  validate(dims);
  if (cfg.shapes_min < 0 || cfg.shapes_max < cfg.shapes_min || !(cfg.size_min > 0.0) || cfg.size_max < cfg.size_min) {
    throw std::invalid_argument("invalid geometry config");
  }
  const double extent = std::min(dims.nx, dims.ny);
  for (int attempt = 0; attempt < 100; ++attempt) {
    const int n = uniform_int(rng, cfg.shapes_min, cfg.shapes_max);
    std::vector<Shape> shapes;
    for (int k = 0; k < n; ++k) {
      const ShapeTemplate tm = shape_template(pool, uniform_int(rng, 0, kTemplatesPerPool - 1));
      Shape s;
      s.kind = tm.kind;
      s.a = uniform(rng, cfg.size_min, cfg.size_max) * extent;
      s.b = tm.kind == ShapeKind::disc ? s.a : tm.aspect * s.a;
      s.center = {uniform(rng, 0.0, dims.nx), uniform(rng, 0.0, dims.ny)};
      s.angle = uniform(rng, 0.0, std::numbers::pi);
      shapes.push_back(s);
    }
    OccupancyGrid g = rasterize(dims, shapes, cfg.boundary);
    if (2 * g.fluid_count() >= dims.cells()) return g;
  }
  throw std::runtime_error("random_geometry: no geometry with >= 50% fluid after 100 attempts");
}

// --- emitters -------------------------------------------------------------------

MacVelocity apply_emitters(const MacVelocity& u, const std::vector<EmitterParams>& emitters, int frame) {
  MacVelocity out = u;
  const GridDims& d = u.dims;
  const double h = d.h;
  for (const EmitterParams& e : emitters) {
    if (frame < e.start || frame >= e.start + e.duration || !(e.radius > 0.0)) continue;
    const auto falloff = [&](double x, double y) {
      const double r = std::hypot(x - e.center.x, y - e.center.y);
      return std::max(0.0, 1.0 - r / e.radius);
    };
    for (int j = 0; j < d.ny; ++j)
      for (int i = 0; i <= d.nx; ++i) out.x_at(i, j) += e.velocity.x * falloff(i * h, (j + 0.5) * h);
    for (int j = 0; j <= d.ny; ++j)
      for (int i = 0; i < d.nx; ++i) out.y_at(i, j) += e.velocity.y * falloff((i + 0.5) * h, j * h);
  }
  return out;
}

// --- scenes ---------------------------------------------------------------------

void validate(const SceneConfig& cfg) {
  validate(cfg.dims);
  if (cfg.dims.nx % 4 != 0 || cfg.dims.ny % 4 != 0) throw std::invalid_argument("scene dims must be divisible by 4");
  if (cfg.emitters_min < 0 || cfg.emitters_max < cfg.emitters_min || cfg.emitter_radius_min <= 0.0 ||
      cfg.emitter_radius_max < cfg.emitter_radius_min || cfg.emitter_speed_min < 0.0 ||
      cfg.emitter_speed_max < cfg.emitter_speed_min || cfg.emitter_duration_min < 1 ||
      cfg.emitter_duration_max < cfg.emitter_duration_min || cfg.density_blobs < 0 || !(cfg.dt > 0.0) ||
      !(cfg.pcg_tol > 0.0) || cfg.amplitude_min < 0.0 || cfg.amplitude_max < cfg.amplitude_min) {
    throw std::invalid_argument("invalid scene config");
  }
  validate(cfg.forces);
}

namespace {

Vec2 random_fluid_point(const OccupancyGrid& g, Rng& rng) {
  const GridDims& d = g.dims;
  for (int tries = 0; tries < 1000; ++tries) {
    const int i = uniform_int(rng, 0, d.nx - 1);
    const int j = uniform_int(rng, 0, d.ny - 1);
    if (!g.is_solid(i, j)) return {(i + 0.5) * d.h, (j + 0.5) * d.h};
  }
  return {0.5 * d.nx * d.h, 0.5 * d.ny * d.h};
}

}  // namespace

Scene make_scene(const SceneConfig& cfg, ShapePool pool, std::uint64_t seed, int frames) {
  validate(cfg);
  Rng rng(seed);
  const GridDims& d = cfg.dims;
  const double extent = std::min(d.nx, d.ny) * d.h;
  Scene sc;
  sc.g = random_geometry(d, rng, pool, cfg.geometry);

  NoiseConfig noise = cfg.noise;
  noise.amplitude = uniform(rng, cfg.amplitude_min, cfg.amplitude_max);
  sc.u = curl_noise_velocity(d, noise, rng(), &sc.g);

  sc.density = ScalarGrid(d);
  for (int k = 0; k < cfg.density_blobs; ++k) {
    const Vec2 c = random_fluid_point(sc.g, rng);
    const double r = uniform(rng, 0.05, 0.15) * extent;
    for (int j = 0; j < d.ny; ++j) {
      for (int i = 0; i < d.nx; ++i) {
        if (sc.g.is_solid(i, j)) continue;
        const double dist = std::hypot((i + 0.5) * d.h - c.x, (j + 0.5) * d.h - c.y);
        sc.density.at(i, j) += std::max(0.0, 1.0 - dist / r);
      }
    }
  }

  const int n_emit = uniform_int(rng, cfg.emitters_min, cfg.emitters_max);
  for (int k = 0; k < n_emit; ++k) {
    EmitterParams e;
    e.center = random_fluid_point(sc.g, rng);
    e.radius = uniform(rng, cfg.emitter_radius_min, cfg.emitter_radius_max) * extent;
    const double speed = uniform(rng, cfg.emitter_speed_min, cfg.emitter_speed_max) * d.ny * d.h;
    const double dir = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    e.velocity = {speed * std::cos(dir), speed * std::sin(dir)};
    e.start = uniform_int(rng, 0, std::max(0, frames - 1));
    e.duration = uniform_int(rng, cfg.emitter_duration_min, cfg.emitter_duration_max);
    sc.emitters.push_back(e);
  }
  return sc;
}

std::uint64_t scene_seed(std::uint64_t master, ShapePool pool, int index) {
  return mix_seed(master, static_cast<std::uint64_t>(pool) + 1, static_cast<std::uint64_t>(index));
}

// --- dataset --------------------------------------------------------------------

namespace {

const char* pool_name(ShapePool p) { return p == ShapePool::train ? "train" : "test"; }

}  // namespace

DatasetSummary generate_dataset(const DatasetConfig& cfg, const std::string& out_dir) {
  validate(cfg.scene);
  if (cfg.train_scenes < 0 || cfg.test_scenes < 0 || cfg.frames < 1 || cfg.stride < 1) {
    throw std::invalid_argument("invalid dataset config");
  }
  DatasetSummary summary;
  SimConfig sim;
  sim.dt = cfg.scene.dt;
  sim.forces = cfg.scene.forces;
  sim.solver = SolverPcg{cfg.scene.pcg_tol};

  for (ShapePool pool : {ShapePool::train, ShapePool::test}) {
    const int count = pool == ShapePool::train ? cfg.train_scenes : cfg.test_scenes;
    for (int idx = 0; idx < count; ++idx) {
      char name[32];
      std::snprintf(name, sizeof name, "scene_%04d", idx);
      const fs::path dir = fs::path(out_dir) / pool_name(pool) / name;
      fs::create_directories(dir);

      const std::uint64_t seed = scene_seed(cfg.seed, pool, idx);
      const Scene sc = make_scene(cfg.scene, pool, seed, cfg.frames);
      SimState st = make_state(sc.g);
      st.u = sc.u;
      st.density = sc.density;

      std::vector<int> nonconverged;
      for (int k = 1; k <= cfg.frames; ++k) {
        st.u = enforce_solid_velocities(apply_emitters(st.u, sc.emitters, k - 1), st.g);
        StepInfo info;
        st = step(st, sim, &info);
        if (!info.projection.converged) {
          nonconverged.push_back(k);
          std::fprintf(stderr, "warning: %s/%s frame %d: PCG did not converge (relative residual %.3g)\n",
                       pool_name(pool), name, k, info.projection.relative_residual);
        }
        if (k % cfg.stride != 0) continue;
        char fname[32];
        std::snprintf(fname, sizeof fname, "frame_%04d.fnf", k);
        FrameRecord rec{st.g, st.u, st.density, static_cast<float>(sim.dt), info.projection.p};
        write_frame((dir / fname).string(), rec);
        ++summary.frames_written;
      }
      summary.nonconverged += static_cast<int>(nonconverged.size());

      std::ofstream meta(dir / "meta.txt", std::ios::trunc);
      meta << "pool=" << pool_name(pool) << "\nindex=" << idx << "\nseed=" << seed << "\nnx=" << cfg.scene.dims.nx
           << "\nny=" << cfg.scene.dims.ny << "\nframes=" << cfg.frames << "\nstride=" << cfg.stride
           << "\nemitters=" << sc.emitters.size() << "\nnonconverged_frames=";
      for (std::size_t k = 0; k < nonconverged.size(); ++k) meta << (k ? "," : "") << nonconverged[k];
      meta << "\n";
      if (!meta) throw std::runtime_error("cannot write " + (dir / "meta.txt").string());
      ++summary.scenes;
    }
  }
  return summary;
}

std::vector<DatasetFrame> load_split(const std::string& dir, const std::string& split) {
  const fs::path root = fs::path(dir) / split;
  if (!fs::is_directory(root)) throw std::runtime_error("dataset split not found: " + root.string());
  std::vector<std::string> paths;
  for (const auto& entry : fs::recursive_directory_iterator(root))
    if (entry.is_regular_file() && entry.path().extension() == ".fnf") paths.push_back(entry.path().string());
  std::sort(paths.begin(), paths.end());
  std::vector<DatasetFrame> out;
  out.reserve(paths.size());
  for (auto& p : paths) {
    FrameRecord rec = read_frame(p);
    out.push_back({std::move(p), std::move(rec)});
  }
  return out;
}

}  // namespace fluidnet
