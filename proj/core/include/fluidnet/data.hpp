#pragma once

// Procedural scenes and the on-disk dataset.
//
// Layout written by generate_dataset:
//
//   <out>/train/scene_0000/meta.txt
//   <out>/train/scene_0000/frame_0008.fnf
//   ...
//   <out>/test/scene_0000/...
//
// Frame files are FNF1 (frame_io.hpp); frame numbers count solver steps.

#include <cstdint>
#include <string>
#include <vector>

#include "fluidnet/forces.hpp"
#include "fluidnet/frame_io.hpp"
#include "fluidnet/grid.hpp"
#include "fluidnet/random.hpp"

namespace fluidnet {

struct NoiseConfig {
  int octaves = 3;
  double amplitude = 0.2;     // RMS face speed, in domain heights per second
  double scale_min = 0.15;    // base wavelength range, fraction of the smaller extent
  double scale_max = 0.5;
  double border_ramp = 2.0;   // cells over which the potential fades to zero at walls
};

// Perpendicular gradient of a smoothed multi-octave random potential psi
// sampled on grid nodes. psi vanishes on the domain frame and on the corners
// of solid cells (when g is given), so every cell has exactly zero MAC
// divergence up to rounding and solid faces carry zero normal velocity.
// The field is scaled to the configured RMS speed.
MacVelocity curl_noise_velocity(const GridDims& dims, const NoiseConfig& cfg, std::uint64_t seed,
                                const OccupancyGrid* g = nullptr);

enum class ShapeKind : std::uint8_t { disc, box, capsule };

struct Shape {
  ShapeKind kind = ShapeKind::disc;
  Vec2 center;        // cells
  double a = 1.0;     // disc radius; box half-width; capsule half-length
  double b = 1.0;     // box half-height; capsule radius
  double angle = 0.0; // radians
};

bool contains(const Shape& s, Vec2 p);

// Cells whose centers lie inside any shape become solid.
OccupancyGrid rasterize(const GridDims& dims, const std::vector<Shape>& shapes,
                        BoundaryMode mode = BoundaryMode::closed);

enum class ShapePool : std::uint8_t { train = 0, test = 1 };

inline constexpr int kTemplatesPerPool = 50;

// Template t of a pool fixes the shape kind and aspect ratio; placement,
// size and rotation are sampled per scene. The two pools draw from disjoint
// seed ranges.
struct ShapeTemplate {
  ShapeKind kind;
  double aspect;  // b / a
};
ShapeTemplate shape_template(ShapePool pool, int t);

struct GeometryConfig {
  int shapes_min = 0;
  int shapes_max = 3;
  double size_min = 0.08;  // a, fraction of the smaller extent
  double size_max = 0.25;
  BoundaryMode boundary = BoundaryMode::closed;
};

// Samples shapes until at least half the cells are fluid; throws
// std::runtime_error after 100 rejected attempts.
OccupancyGrid random_geometry(const GridDims& dims, Rng& rng, ShapePool pool, const GeometryConfig& cfg = {});

struct EmitterParams {
  Vec2 center;  // world units
  double radius = 1.0;
  Vec2 velocity;
  int start = 0;
  int duration = 1;
};

// Active emitters (start <= frame < start + duration) add
// velocity * max(0, 1 - r / radius) to every face within their radius.
MacVelocity apply_emitters(const MacVelocity& u, const std::vector<EmitterParams>& emitters, int frame);

struct SceneConfig {
  GridDims dims{32, 32, 1.0};
  NoiseConfig noise;            // amplitude is drawn per scene from the range below
  double amplitude_min = 0.1;
  double amplitude_max = 0.4;
  GeometryConfig geometry;
  int emitters_min = 0;
  int emitters_max = 3;
  double emitter_radius_min = 0.04;  // fraction of the smaller extent
  double emitter_radius_max = 0.12;
  double emitter_speed_min = 0.1;    // domain heights per second
  double emitter_speed_max = 0.5;
  int emitter_duration_min = 4;
  int emitter_duration_max = 32;
  int density_blobs = 2;
  ForceConfig forces;
  double dt = 1.0 / 30.0;
  double pcg_tol = 1e-6;
};

// Throws std::invalid_argument on empty ranges or dims not divisible by 4.
void validate(const SceneConfig& cfg);

struct Scene {
  OccupancyGrid g;
  MacVelocity u;
  ScalarGrid density;
  std::vector<EmitterParams> emitters;
};

Scene make_scene(const SceneConfig& cfg, ShapePool pool, std::uint64_t seed, int frames);

struct DatasetConfig {
  SceneConfig scene;
  int train_scenes = 64;
  int test_scenes = 64;
  int frames = 64;  // solver steps per scene
  int stride = 8;   // record every stride-th step
  std::uint64_t seed = 1;
};

struct DatasetSummary {
  int scenes = 0;
  int frames_written = 0;
  int nonconverged = 0;
};

std::uint64_t scene_seed(std::uint64_t master, ShapePool pool, int index);

// Rolls every scene forward with the PCG backend and writes recorded frames.
DatasetSummary generate_dataset(const DatasetConfig& cfg, const std::string& out_dir);

struct DatasetFrame {
  std::string path;
  FrameRecord record;
};

// All frames of <dir>/<split>, ordered by path.
std::vector<DatasetFrame> load_split(const std::string& dir, const std::string& split);

}  // namespace fluidnet
