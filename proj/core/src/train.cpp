#include "fluidnet/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "fluidnet/fdops.hpp"

namespace fluidnet {

void validate(const LossConfig& cfg) {
  if (!(cfg.k >= 1.0)) throw std::invalid_argument("loss k must be >= 1");
  if (cfg.unroll.empty()) throw std::invalid_argument("unroll distribution is empty");
  double total = 0.0;
  for (const auto& [n, p] : cfg.unroll) {
    if (n < 1) throw std::invalid_argument("unroll steps must be >= 1");
    if (!(p >= 0.0)) throw std::invalid_argument("unroll probabilities must be >= 0");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("unroll probabilities must sum to 1");
  if (!(cfg.dt_base > 0.0)) throw std::invalid_argument("dt_base must be positive");
}

ScalarGrid loss_weights(const DistanceField& d, const OccupancyGrid& g, double k) {
  if (!(k >= 1.0)) throw std::invalid_argument("loss k must be >= 1");
  ScalarGrid w(g.dims);
  for (std::size_t c = 0; c < w.values.size(); ++c) w.values[c] = g.solid[c] ? 0.0 : std::max(1.0, k - d.d[c]);
  return w;
}

LossValue divergence_loss(const MacVelocity& u_hat, const ScalarGrid& w, const OccupancyGrid& g) {
  const ScalarGrid div = divergence(u_hat, g);
  ScalarGrid seed(g.dims);
  LossValue out;
  for (std::size_t c = 0; c < div.values.size(); ++c) {
    if (g.solid[c]) continue;
    out.value += w.values[c] * div.values[c] * div.values[c];
    seed.values[c] = 2.0 * w.values[c] * div.values[c];
  }
  out.cotangent = adjoint_divergence(seed, g);
  return out;
}

double timestep_from_normal(double z, double dt_base) { return dt_base * (0.203 + std::abs(z)); }

double sample_timestep(Rng& rng, double dt_base) { return timestep_from_normal(standard_normal(rng), dt_base); }

int sample_unroll(Rng& rng, const LossConfig& cfg) {
  const double u = uniform01(rng);
  double acc = 0.0;
  for (const auto& [n, p] : cfg.unroll) {
    acc += p;
    if (u < acc) return n;
  }
  for (auto it = cfg.unroll.rbegin(); it != cfg.unroll.rend(); ++it)
    if (it->second > 0.0) return it->first;
  return cfg.unroll.back().first;
}

void validate(const AugmentConfig& c) {
  const auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
  const auto range = [](double lo, double hi) { return lo >= 0.0 && hi >= lo; };
  if (!prob(c.p_gravity) || !prob(c.p_buoyancy) || !prob(c.p_vorticity) || !prob(c.p_density) ||
      !range(c.gravity_min, c.gravity_max) || !range(c.buoyancy_min, c.buoyancy_max) ||
      !range(c.lambda_min, c.lambda_max) || c.density_blobs_max < 1) {
    throw std::invalid_argument("invalid augmentation config");
  }
}

Augmented augment(const SimState& s, Rng& rng, const AugmentConfig& cfg) {
  Augmented a;
  a.state = s;
  a.forces.lambda_vc = 0.0;
  const GridDims& d = s.g.dims;
  const double height = d.ny * d.h;
  if (uniform01(rng) < cfg.p_gravity) {
    const double angle = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    const double mag = uniform(rng, cfg.gravity_min, cfg.gravity_max) * height;
    a.forces.gravity = {mag * std::cos(angle), mag * std::sin(angle)};
  }
  if (uniform01(rng) < cfg.p_buoyancy) a.forces.buoyancy_coeff = uniform(rng, cfg.buoyancy_min, cfg.buoyancy_max) * height;
  if (uniform01(rng) < cfg.p_vorticity) a.forces.lambda_vc = uniform(rng, cfg.lambda_min, cfg.lambda_max);
  if (uniform01(rng) < cfg.p_density) {
    const int blobs = uniform_int(rng, 1, cfg.density_blobs_max);
    const double extent = std::min(d.nx, d.ny) * d.h;
    for (int b = 0; b < blobs; ++b) {
      const Vec2 c{uniform(rng, 0.0, d.nx * d.h), uniform(rng, 0.0, d.ny * d.h)};
      const double r = uniform(rng, 0.05, 0.15) * extent;
      for (int j = 0; j < d.ny; ++j) {
        for (int i = 0; i < d.nx; ++i) {
          if (s.g.is_solid(i, j)) continue;
          const double dist = std::hypot((i + 0.5) * d.h - c.x, (j + 0.5) * d.h - c.y);
          a.state.density.at(i, j) += std::max(0.0, 1.0 - dist / r);
        }
      }
    }
  }
  return a;
}

SimState state_from_frame(const FrameRecord& f) {
  SimState s = make_state(f.g);
  s.u = f.u;
  s.density = f.density;
  return s;
}

Rollout draw_rollout(const SimState& frame, const LossConfig& loss, const AugmentConfig& aug, Rng& rng) {
  Rollout r;
  r.steps = sample_unroll(rng, loss);
  r.dt = sample_timestep(rng, loss.dt_base);
  Augmented a = augment(frame, rng, aug);
  r.forces = a.forces;
  r.start = std::move(a.state);
  return r;
}

namespace {

template <typename T>
void accumulate(NetParams<T>& acc, const NetParams<T>& g) {
  for (std::size_t l = 0; l < acc.layers.size(); ++l) {
    for (std::size_t k = 0; k < acc.layers[l].weight.size(); ++k) acc.layers[l].weight[k] += g.layers[l].weight[k];
    for (std::size_t k = 0; k < acc.layers[l].bias.size(); ++k) acc.layers[l].bias[k] += g.layers[l].bias[k];
  }
}

double max_abs(const MacVelocity& u) {
  double m = 0.0;
  for (double v : u.ux) m = std::max(m, std::abs(v));
  for (double v : u.uy) m = std::max(m, std::abs(v));
  return m;
}

}  // namespace

template <typename T>
UnrollResult<T> rollout_loss(const NetParams<T>& params, const Rollout& r, const LossConfig& cfg, bool want_grad) {
  UnrollResult<T> res;
  res.steps = r.steps;
  res.dt = r.dt;
  if (want_grad) res.grad = zero_params<T>(params.arch);

  SimConfig sim;
  sim.dt = r.dt;
  sim.forces = r.forces;
  sim.solver = SolverNone{};
  const OccupancyGrid& g = r.start.g;
  const ScalarGrid w = loss_weights(distance_field(g), g, cfg.k);
  const int last = cfg.single_frame ? 1 : r.steps;

  SimState state = r.start;
  for (int t = 1; t <= last; ++t) {
    SimState pred = predict(state, sim, r.dt);
    Projection<T> pr = learned_project(params, pred.u, g);
    if (t == 1 || t == last) {
      const LossValue lv = divergence_loss(pr.u_hat, w, g);
      if (t == 1) res.loss_step1 = lv.value;
      if (t == last) res.loss_stepn = lv.value;
      res.loss += lv.value;
      if (want_grad && !pr.bypassed)
        accumulate(res.grad, net_backward(params, pr.cache, pressure_gradient_adjoint(lv.cotangent, g)));
    }
    state.u = std::move(pr.u_hat);
    state.density = std::move(pred.density);
    ++state.frame;
    const double m = max_abs(state.u);
    if (!(m <= kBlowUpSpeed)) {
      res.skipped = true;
      return res;
    }
  }
  if (cfg.single_frame) res.loss_stepn = 0.0;
  return res;
}

template <typename T>
UnrollResult<T> unrolled_loss(const NetParams<T>& params, const SimState& frame, const LossConfig& loss,
                              const AugmentConfig& aug, Rng& rng, bool want_grad) {
  return rollout_loss(params, draw_rollout(frame, loss, aug, rng), loss, want_grad);
}

template <typename T>
void adam_step(NetParams<T>& params, const std::vector<double>& grads, AdamState& st) {
  const std::size_t n = params.parameter_count();
  if (grads.size() != n) throw std::invalid_argument("gradient size does not match parameters");
  if (st.m.size() != n) {
    st.m.assign(n, 0.0);
    st.v.assign(n, 0.0);
  }
  ++st.step;
  const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  std::size_t idx = 0;
  const auto update = [&](T& p) {
    const double g = grads[idx];
    st.m[idx] = st.beta1 * st.m[idx] + (1.0 - st.beta1) * g;
    st.v[idx] = st.beta2 * st.v[idx] + (1.0 - st.beta2) * g * g;
    const double mh = st.m[idx] / c1;
    const double vh = st.v[idx] / c2;
    p = static_cast<T>(static_cast<double>(p) - st.lr * mh / (std::sqrt(vh) + st.eps));
    ++idx;
  };
  for (auto& l : params.layers) {
    for (T& p : l.weight) update(p);
    for (T& p : l.bias) update(p);
  }
}

namespace {

template <typename T>
std::vector<double> flatten_impl(const NetParams<T>& p) {
  std::vector<double> out;
  out.reserve(p.parameter_count());
  for (const auto& l : p.layers) {
    out.insert(out.end(), l.weight.begin(), l.weight.end());
    out.insert(out.end(), l.bias.begin(), l.bias.end());
  }
  return out;
}

double one_step_loss(const NetParams<double>& params, const MacVelocity& u_star, const OccupancyGrid& g,
                     const ScalarGrid& w) {
  return divergence_loss(learned_project(params, u_star, g).u_hat, w, g).value;
}

}  // namespace

std::vector<double> flatten(const NetParams<float>& p) { return flatten_impl(p); }
std::vector<double> flatten(const NetParams<double>& p) { return flatten_impl(p); }

GradCheckResult gradient_check(const NetParams<double>& params, const MacVelocity& u_star, const OccupancyGrid& g,
                               double k, double eps, int count, std::uint64_t seed) {
  if (!(eps > 0.0) || count < 1) throw std::invalid_argument("gradient_check: eps > 0 and count >= 1 required");
  const ScalarGrid w = loss_weights(distance_field(g), g, k);
  const Projection<double> pr = learned_project(params, u_star, g);
  if (pr.bypassed) throw std::invalid_argument("gradient_check: velocity scale below the bypass threshold");
  const LossValue lv = divergence_loss(pr.u_hat, w, g);
  const std::vector<double> analytic =
      flatten(net_backward(params, pr.cache, pressure_gradient_adjoint(lv.cotangent, g)));

  const std::size_t n = params.parameter_count();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(seed);
  const std::size_t m = std::min(n, static_cast<std::size_t>(count));
  for (std::size_t a = 0; a < m; ++a) {
    const std::size_t b = a + static_cast<std::size_t>(rng() % (n - a));
    std::swap(idx[a], idx[b]);
  }

  double gmax = 0.0;
  for (double v : analytic) gmax = std::max(gmax, std::abs(v));
  const double floor = std::max(1e-6 * gmax, 1e-300);

  GradCheckResult res;
  res.loss = lv.value;
  NetParams<double> probe = params;
  for (std::size_t a = 0; a < m; ++a) {
    const std::size_t i = idx[a];
    const double orig = probe.flat(i);
    probe.flat(i) = orig + eps;
    const double lp = one_step_loss(probe, u_star, g, w);
    probe.flat(i) = orig - eps;
    const double lm = one_step_loss(probe, u_star, g, w);
    probe.flat(i) = orig;
    const double numeric = (lp - lm) / (2.0 * eps);
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), floor});
    res.max_rel_error = std::max(res.max_rel_error, std::abs(analytic[i] - numeric) / denom);
    ++res.checked;
  }
  return res;
}

GradCheckSetup gradcheck_setup(int res, const NetArch& arch, std::uint64_t seed) {
  if (res < 4 || res % 4 != 0) throw std::invalid_argument("gradcheck resolution must be a multiple of 4");
  const GridDims d{res, res, 1.0};
  GradCheckSetup s;
  s.g = OccupancyGrid(d);
  const int c = res / 2;
  s.g.set_solid(c - 1, c, true);
  s.g.set_solid(c, c, true);
  Rng rng(seed);
  s.u_star = MacVelocity(d);
  for (double& v : s.u_star.ux) v = uniform(rng, -1.0, 1.0);
  for (double& v : s.u_star.uy) v = uniform(rng, -1.0, 1.0);
  s.u_star = enforce_solid_velocities(s.u_star, s.g);
  s.params = init_params<double>(arch, mix_seed(seed, 0x9c));
  return s;
}

void write_log_header(std::ostream& out) { out << "epoch,mean_loss,mean_div_step1,mean_div_stepn,wall_ms\n"; }

void write_log_row(std::ostream& out, const EpochLog& row, bool timing) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,%.9g,%.3f\n", row.epoch, row.mean_loss, row.mean_div_step1,
                row.mean_div_stepn, timing ? row.wall_ms : 0.0);
  out << buf;
}

TrainResult train(const std::vector<DatasetFrame>& data, const TrainConfig& cfg, std::uint64_t seed,
                  std::ostream* log_csv, const NetParams<float>* initial) {
  validate(cfg.loss);
  validate(cfg.augment);
  if (cfg.epochs < 0 || cfg.batch < 1 || !(cfg.lr > 0.0)) throw std::invalid_argument("invalid training config");
  TrainResult out;
  out.params = initial ? *initial : init_params<float>(cfg.arch, mix_seed(seed, 0x1417));
  if (cfg.epochs == 0) return out;
  if (data.empty()) throw std::invalid_argument("training dataset is empty");

  std::vector<SimState> states;
  states.reserve(data.size());
  for (const auto& f : data) states.push_back(state_from_frame(f.record));

  AdamState adam;
  adam.lr = cfg.lr;
  const std::size_t n_params = out.params.parameter_count();
  std::vector<std::size_t> order(data.size());
  if (log_csv) write_log_header(*log_csv);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle(mix_seed(seed, 0x5f, static_cast<std::uint64_t>(epoch)));
    for (std::size_t a = order.size(); a > 1; --a) std::swap(order[a - 1], order[shuffle() % a]);

    EpochLog row;
    row.epoch = epoch;
    int used = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch));
      std::vector<double> grad(n_params, 0.0);
      int count = 0;
      for (std::size_t b = start; b < stop; ++b) {
        const std::size_t sample = order[b];
        Rng rng(mix_seed(seed, static_cast<std::uint64_t>(epoch), sample));
        const UnrollResult<float> r = unrolled_loss(out.params, states[sample], cfg.loss, cfg.augment, rng);
        if (r.skipped) {
          ++row.skipped;
          std::fprintf(stderr, "warning: epoch %d: skipped %s (velocity above %.0e)\n", epoch,
                       data[sample].path.c_str(), kBlowUpSpeed);
          continue;
        }
        if (!std::isfinite(r.loss)) {
          throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + " on " + data[sample].path +
                              " (steps " + std::to_string(r.steps) + ", dt " + std::to_string(r.dt) + ")");
        }
        std::size_t idx = 0;
        for (const auto& l : r.grad.layers) {
          for (float v : l.weight) grad[idx++] += v;
          for (float v : l.bias) grad[idx++] += v;
        }
        row.mean_loss += r.loss;
        row.mean_div_step1 += r.loss_step1;
        row.mean_div_stepn += r.loss_stepn;
        ++count;
      }
      if (count == 0) continue;
      used += count;
      double norm2 = 0.0;
      for (double& v : grad) {
        v /= count;
        norm2 += v * v;
      }
      const double norm = std::sqrt(norm2);
      if (!std::isfinite(norm)) throw TrainingError("non-finite gradient at epoch " + std::to_string(epoch));
      if (cfg.clip > 0.0 && norm > cfg.clip)
        for (double& v : grad) v *= cfg.clip / norm;
      adam_step(out.params, grad, adam);
    }
    if (used > 0) {
      row.mean_loss /= used;
      row.mean_div_step1 /= used;
      row.mean_div_stepn /= used;
    }
    row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    out.log.push_back(row);
    if (log_csv) {
      write_log_row(*log_csv, row);
      log_csv->flush();
    }
  }
  return out;
}

double mean_one_step_loss(const NetParams<float>* params, const std::vector<DatasetFrame>& data, double k,
                          double dt) {
  if (data.empty()) return 0.0;
  SimConfig sim;
  sim.dt = dt;
  sim.forces.lambda_vc = 0.0;
  sim.solver = SolverNone{};
  double total = 0.0;
  for (const auto& f : data) {
    const SimState s = state_from_frame(f.record);
    const SimState pred = predict(s, sim, dt);
    const MacVelocity u = params ? learned_project(*params, pred.u, s.g).u_hat : pred.u;
    total += divergence_loss(u, loss_weights(distance_field(s.g), s.g, k), s.g).value;
  }
  return total / static_cast<double>(data.size());
}

template UnrollResult<float> rollout_loss<float>(const NetParams<float>&, const Rollout&, const LossConfig&, bool);
template UnrollResult<double> rollout_loss<double>(const NetParams<double>&, const Rollout&, const LossConfig&, bool);
template UnrollResult<float> unrolled_loss<float>(const NetParams<float>&, const SimState&, const LossConfig&,
                                                  const AugmentConfig&, Rng&, bool);
template UnrollResult<double> unrolled_loss<double>(const NetParams<double>&, const SimState&, const LossConfig&,
                                                    const AugmentConfig&, Rng&, bool);
template void adam_step<float>(NetParams<float>&, const std::vector<double>&, AdamState&);
template void adam_step<double>(NetParams<double>&, const std::vector<double>&, AdamState&);

}  // namespace fluidnet
