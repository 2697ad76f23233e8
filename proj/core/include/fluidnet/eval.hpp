#pragma once

// Evaluation harnesses: divergence-versus-frame curves over a test set,
// projection timing, the Jacobi budget search, and key = value config files.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "fluidnet/data.hpp"
#include "fluidnet/sim.hpp"

namespace fluidnet {

// The first recorded frame of every scene directory, in path order.
std::vector<DatasetFrame> initial_frames(const std::vector<DatasetFrame>& frames);

struct Backend {
  std::string name;  // CSV column prefix
  SolverSpec solver;
};

struct CurveSet {
  int frames = 0;
  std::vector<std::string> names;
  std::vector<std::vector<double>> mean;  // [backend][frame]
  std::vector<std::vector<double>> stdev;
  std::vector<int> samples;   // per backend, successful rollouts
  std::vector<int> failures;  // per backend
};

// Rolls every start frame forward `frames` steps with each backend and
// aggregates the per-frame RMS divergence (FrameMetrics::mean_div_l2) as mean
// and population standard deviation across samples. Failed rollouts are
// excluded and counted.
CurveSet divergence_curves(const std::vector<DatasetFrame>& starts, const std::vector<Backend>& backends, int frames,
                           const SimConfig& base = {});

// Header `frame,<name>_mean,<name>_std,...`, one row per frame, then a
// `# failures name=count ...` footer line.
void write_curves_csv(std::ostream& out, const CurveSet& c);

CurveSet eval_divergence_curves(const std::string& dataset_dir, const std::vector<Backend>& backends, int frames,
                                const std::string& out_csv, const SimConfig& base = {});

struct BenchRow {
  int nx = 0;
  int ny = 0;
  int repetitions = 0;
  double median_ms = 0.0;
  double min_ms = 0.0;
  double checksum = 0.0;  // sum of the projected velocity, identical across repetitions
};

// Times divergence + solve + velocity update on a synthetic noisy state with
// obstacles. Median over repetitions.
std::vector<BenchRow> bench(const SolverSpec& solver, const std::vector<GridDims>& dims, int repetitions,
                            std::uint64_t seed);

// Header `nx,ny,repetitions,median_ms,min_ms`.
void write_bench_csv(std::ostream& out, const std::vector<BenchRow>& rows);

struct MatchResult {
  int iterations = 0;
  double target = 0.0;    // reference mean divergence
  double achieved = 0.0;  // Jacobi mean divergence at `iterations`
};

// Smallest Jacobi iteration count (searched in [1, max_iters]) whose
// frame-averaged mean divergence is at most the reference backend's.
MatchResult match_divergence(const std::vector<DatasetFrame>& starts, const SolverSpec& reference, int frames,
                             int max_iters = 4096, const SimConfig& base = {});

// `key = value` per line, `#` comments, blank lines ignored. Keys outside
// `allowed` raise std::invalid_argument naming the line.
std::map<std::string, std::string> parse_config(std::istream& in, const std::set<std::string>& allowed);
std::map<std::string, std::string> read_config(const std::string& path, const std::set<std::string>& allowed);

}  // namespace fluidnet
