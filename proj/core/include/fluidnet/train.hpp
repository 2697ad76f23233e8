#pragma once

// Unsupervised training of the learned projection.
//
// The objective is the weighted squared divergence of the projected velocity,
// sum_i w_i div(u_hat)_i^2 with w_i = max(1, k - d_i), evaluated one step
// after a dataset frame and again n steps later. Gradients flow through the
// network application of the step where each term is evaluated; advection,
// forces and earlier projections are constants.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "fluidnet/data.hpp"
#include "fluidnet/forces.hpp"
#include "fluidnet/grid.hpp"
#include "fluidnet/net.hpp"
#include "fluidnet/random.hpp"
#include "fluidnet/sim.hpp"

namespace fluidnet {

struct LossConfig {
  double k = 3.0;
  std::vector<std::pair<int, double>> unroll{{4, 0.9}, {25, 0.1}};
  double dt_base = 1.0 / 30.0;
  bool single_frame = false;  // drop the step-n term
};

// Throws std::invalid_argument on k < 1, empty or non-normalized unroll
// distributions, or n < 1.
void validate(const LossConfig& cfg);

// max(1, k - d) on fluid cells, 0 on solid cells.
ScalarGrid loss_weights(const DistanceField& d, const OccupancyGrid& g, double k);

struct LossValue {
  double value = 0.0;
  MacVelocity cotangent;  // d value / d u_hat
};

LossValue divergence_loss(const MacVelocity& u_hat, const ScalarGrid& w, const OccupancyGrid& g);

// dt_base * (0.203 + |z|) for a standard normal z.
double timestep_from_normal(double z, double dt_base = 1.0 / 30.0);
double sample_timestep(Rng& rng, double dt_base = 1.0 / 30.0);
int sample_unroll(Rng& rng, const LossConfig& cfg);

struct AugmentConfig {
  double p_gravity = 0.5;
  double gravity_min = 0.0;  // domain heights per second^2
  double gravity_max = 1.0;
  double p_buoyancy = 0.5;
  double buoyancy_min = 0.0;  // domain heights per second^2 per unit density
  double buoyancy_max = 0.5;
  double p_vorticity = 0.5;
  double lambda_min = 0.0;
  double lambda_max = 0.2;
  double p_density = 0.5;
  int density_blobs_max = 3;
};

void validate(const AugmentConfig& cfg);

struct Augmented {
  SimState state;
  ForceConfig forces;  // gravity, buoyancy and confinement for the whole rollout
};

// All probabilities zero leaves the state untouched and returns zero forces.
Augmented augment(const SimState& s, Rng& rng, const AugmentConfig& cfg);

SimState state_from_frame(const FrameRecord& f);

template <typename T>
struct UnrollResult {
  double loss = 0.0;
  double loss_step1 = 0.0;
  double loss_stepn = 0.0;  // equals loss_step1 when n = 1
  int steps = 0;
  double dt = 0.0;
  bool skipped = false;  // velocity exceeded the blow-up threshold
  NetParams<T> grad;
};

inline constexpr double kBlowUpSpeed = 1e6;

// Fixed rollout parameters, normally drawn by unrolled_loss.
struct Rollout {
  int steps = 1;
  double dt = 1.0 / 30.0;
  ForceConfig forces;
  SimState start;  // after augmentation
};

Rollout draw_rollout(const SimState& frame, const LossConfig& loss, const AugmentConfig& aug, Rng& rng);

template <typename T>
UnrollResult<T> rollout_loss(const NetParams<T>& params, const Rollout& r, const LossConfig& cfg,
                             bool want_grad = true);

template <typename T>
UnrollResult<T> unrolled_loss(const NetParams<T>& params, const SimState& frame, const LossConfig& loss,
                              const AugmentConfig& aug, Rng& rng, bool want_grad = true);

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  long step = 0;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam. Moments are (re)sized on first use.
template <typename T>
void adam_step(NetParams<T>& params, const std::vector<double>& grads, AdamState& st);

std::vector<double> flatten(const NetParams<float>& p);
std::vector<double> flatten(const NetParams<double>& p);

struct GradCheckResult {
  double max_rel_error = 0.0;
  int checked = 0;
  double loss = 0.0;
};

// Central differences of the one-step loss at a fixed u* for `count`
// parameters drawn without replacement. Relative error per parameter is
// |a - n| / max(|a|, |n|, floor) with floor = 1e-6 * max |a| over all
// parameters, so components that vanish analytically (for instance a bias
// feeding a constant pressure offset) are compared at the gradient's scale.
GradCheckResult gradient_check(const NetParams<double>& params, const MacVelocity& u_star, const OccupancyGrid& g,
                               double k, double eps, int count, std::uint64_t seed);

// Reduced configuration for CLI and tests: 8x8 noise field with one obstacle,
// a 4-feature network in double precision.
struct GradCheckSetup {
  NetParams<double> params;
  MacVelocity u_star;
  OccupancyGrid g;
};
GradCheckSetup gradcheck_setup(int res, const NetArch& arch, std::uint64_t seed);

struct TrainConfig {
  NetArch arch;
  int epochs = 10;
  int batch = 8;
  double lr = 1e-4;
  double clip = 1.0;  // global gradient L2 clip per batch, <= 0 disables
  LossConfig loss;
  AugmentConfig augment;
};

struct EpochLog {
  int epoch = 0;
  double mean_loss = 0.0;
  double mean_div_step1 = 0.0;
  double mean_div_stepn = 0.0;
  double wall_ms = 0.0;
  int skipped = 0;
};

struct TrainResult {
  NetParams<float> params;
  std::vector<EpochLog> log;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shuffled mini-batches with per-sample random streams derived from
// (seed, epoch, sample index); gradients are averaged in sample order, so the
// result is bitwise reproducible. Writes one CSV row per epoch to log_csv
// when given (header `epoch,mean_loss,mean_div_step1,mean_div_stepn,wall_ms`).
// Throws TrainingError on a non-finite loss.
TrainResult train(const std::vector<DatasetFrame>& data, const TrainConfig& cfg, std::uint64_t seed,
                  std::ostream* log_csv = nullptr, const NetParams<float>* initial = nullptr);

void write_log_header(std::ostream& out);
void write_log_row(std::ostream& out, const EpochLog& row, bool timing = true);

// Mean one-step weighted divergence loss over frames with a fixed dt and no
// augmentation. A null model means no projection.
double mean_one_step_loss(const NetParams<float>* params, const std::vector<DatasetFrame>& data, double k,
                          double dt = 1.0 / 30.0);

}  // namespace fluidnet
