// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.
// Criteria 5-7 share one desk-scale dataset and two trained models, so the
// whole binary takes several minutes.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "fluidnet/binary_io.hpp"
#include "fluidnet/eval.hpp"
#include "fluidnet/fdops.hpp"
#include "fluidnet/forces.hpp"
#include "fluidnet/frame_io.hpp"
#include "fluidnet/net.hpp"
#include "fluidnet/pressure.hpp"
#include "fluidnet/random.hpp"
#include "fluidnet/sim.hpp"
#include "fluidnet/train.hpp"

using namespace fluidnet;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

void report(int id, bool ok, const std::string& detail) {
  std::printf("criterion %d: %s  %s\n", id, ok ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

template <typename... A>
std::string fmt(const char* f, A... a) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, a...);
  return buf;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

double max_abs(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("fluidnet_acceptance_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

int cli(const std::string& args) {
  const std::string cmd = std::string(FLUIDNET_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// FNV-1a over relative paths and contents, in sorted path order.
std::uint64_t hash_tree(const fs::path& root) {
  std::vector<fs::path> files;
  if (fs::is_regular_file(root)) {
    files.push_back(root);
  } else {
    for (const auto& e : fs::recursive_directory_iterator(root))
      if (e.is_regular_file()) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::uint64_t h = 1469598103934665603ull;
  const auto mix = [&h](std::uint8_t b) {
    h ^= b;
    h *= 1099511628211ull;
  };
  for (const auto& f : files) {
    for (char c : fs::relative(f, fs::is_regular_file(root) ? root.parent_path() : root).string())
      mix(static_cast<std::uint8_t>(c));
    for (std::uint8_t b : read_file(f.string())) mix(b);
  }
  return h;
}

// Random occupancy with a random solid fraction and boundary mode.
OccupancyGrid random_system_grid(Rng& rng) {
  const GridDims d{uniform_int(rng, 8, 16), uniform_int(rng, 8, 16), uniform(rng, 0.25, 2.0)};
  OccupancyGrid g(d, uniform01(rng) < 0.5 ? BoundaryMode::closed : BoundaryMode::open_top);
  const double frac = uniform(rng, 0.0, 0.35);
  for (std::size_t k = 0; k < d.cells(); ++k) g.solid[k] = uniform01(rng) < frac ? 1 : 0;
  return g;
}

// Subtract the per-component mean of (a - b) over each closed component, so
// solutions that differ by the nullspace compare equal.
double aligned_diff(const ScalarGrid& a, const ScalarGrid& b, const OccupancyGrid& g) {
  const ComponentInfo info = analyze_components(g);
  const std::size_t n = g.dims.cells();
  std::vector<double> sum(static_cast<std::size_t>(info.labels.count), 0.0);
  std::vector<double> cnt(static_cast<std::size_t>(info.labels.count), 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    const int c = info.labels.labels[k];
    if (c < 0) continue;
    sum[static_cast<std::size_t>(c)] += a.values[k] - b.values[k];
    cnt[static_cast<std::size_t>(c)] += 1.0;
  }
  double worst = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const int c = info.labels.labels[k];
    if (c < 0) continue;
    const std::size_t ci = static_cast<std::size_t>(c);
    const double shift = info.closed[ci] ? sum[ci] / cnt[ci] : 0.0;
    worst = std::max(worst, std::abs(a.values[k] - b.values[k] - shift));
  }
  return worst;
}

void criterion_1() {
  const auto t0 = Clock::now();
  Rng rng(1001);
  double worst_pcg = 0.0, worst_jac = 0.0, worst_div = 0.0;
  for (int t = 0; t < 100; ++t) {
    const OccupancyGrid g = random_system_grid(rng);
    ScalarGrid raw(g.dims);
    for (std::size_t k = 0; k < g.dims.cells(); ++k)
      if (!g.solid[k]) raw.values[k] = uniform(rng, -1.0, 1.0);
    const ScalarGrid b = make_compatible(raw, g);
    const ScalarGrid dense = solve_dense_direct(g, b);
    worst_pcg = std::max(worst_pcg, aligned_diff(solve_pcg(g, b, 1e-10, 10000).p, dense, g));
    worst_jac = std::max(worst_jac, aligned_diff(solve_jacobi(g, b, 10000), dense, g));

    MacVelocity u(g.dims);
    for (double& v : u.ux) v = uniform(rng, -1.0, 1.0);
    for (double& v : u.uy) v = uniform(rng, -1.0, 1.0);
    u = enforce_solid_velocities(u, g);
    const ProjectionOutcome out = project(u, g, SolverExact{});
    worst_div = std::max(worst_div, max_abs(divergence(out.u, g).values));
  }
  const double sec = seconds_since(t0);
  report(1, worst_pcg <= 1e-6 && worst_jac <= 1e-6 && worst_div <= 1e-8 && sec < 30.0,
         fmt("pcg %.2e jacobi %.2e (<= 1e-6), exact div %.2e (<= 1e-8), %.1f s (< 30)", worst_pcg, worst_jac, worst_div,
             sec));
}

// Every dataset frame is stepped once with the default PCG backend.
void criterion_2(const std::string& dataset) {
  const auto t0 = Clock::now();
  const auto frames = load_split(dataset, "test");
  SimConfig cfg;
  cfg.solver = SolverPcg{};
  double worst = 0.0;
  int projected = 0;
  for (const auto& f : frames) {
    StepInfo info;
    step(state_from_frame(f.record), cfg, &info);
    worst = std::max(worst, info.projection.relative_residual);
    ++projected;
  }
  const double sec = seconds_since(t0);
  report(2, projected > 0 && worst < 1e-3 && sec < 120.0,
         fmt("max relative residual %.2e over %d test frames (< 1e-3), %.1f s (< 120)", worst, projected, sec));
}

void criterion_3() {
  const auto t0 = Clock::now();
  const GradCheckSetup s = gradcheck_setup(8, NetArch{ArchKind::multires, 4, 3}, 1);
  const GradCheckResult r = gradient_check(s.params, s.u_star, s.g, 3.0, 1e-5, 100, 1);
  const double sec = seconds_since(t0);
  report(3, r.max_rel_error <= 1e-4 && r.checked >= 100 && sec < 120.0,
         fmt("max relative error %.2e over %d parameters (<= 1e-4), %.1f s", r.max_rel_error, r.checked, sec));
}

void criterion_4() {
  Rng rng(1004);
  double adj = 0.0, curl = 0.0, equiv = 0.0;
  for (int t = 0; t < 50; ++t) {
    const OccupancyGrid g = random_system_grid(rng);
    const GridDims& d = g.dims;
    MacVelocity u(d);
    for (double& v : u.ux) v = uniform(rng, -1.0, 1.0);
    for (double& v : u.uy) v = uniform(rng, -1.0, 1.0);
    ScalarGrid p(d);
    for (double& v : p.values) v = uniform(rng, -1.0, 1.0);
    const double lhs = dot(divergence(u, g), p);
    const double rhs = dot(u, adjoint_divergence(p, g));
    adj = std::max(adj, std::abs(lhs - rhs) / std::max(1.0, std::abs(lhs)));

    // Gradient fields from the pressure bottleneck are curl free away from walls.
    const OccupancyGrid open(d);
    const ScalarGrid w = vorticity(subtract_pressure_gradient(MacVelocity(d), p, open));
    for (int j = 2; j + 2 < d.ny; ++j)
      for (int i = 2; i + 2 < d.nx; ++i) curl = std::max(curl, std::abs(w.at(i, j)));
  }

  const auto params = init_params<float>(NetArch{}, 7);
  for (int t = 0; t < 5; ++t) {
    const GridDims d{32, 32, 1.0};
    OccupancyGrid g(d);
    for (std::size_t k = 0; k < d.cells(); ++k) g.solid[k] = uniform01(rng) < 0.1 ? 1 : 0;
    MacVelocity u(d);
    for (double& v : u.ux) v = uniform(rng, -1.0, 1.0);
    for (double& v : u.uy) v = uniform(rng, -1.0, 1.0);
    u = enforce_solid_velocities(u, g);
    const Projection<float> base = learned_project(params, u, g);
    const double ref = std::max(max_abs(base.u_hat.ux), max_abs(base.u_hat.uy));
    for (double alpha : {1e-2, 0.5, 7.0, 300.0}) {
      MacVelocity s = u;
      for (double& v : s.ux) v *= alpha;
      for (double& v : s.uy) v *= alpha;
      const Projection<float> r = learned_project(params, s, g);
      for (std::size_t k = 0; k < u.ux.size(); ++k)
        equiv = std::max(equiv, std::abs(r.u_hat.ux[k] - alpha * base.u_hat.ux[k]) / (alpha * ref));
      for (std::size_t k = 0; k < u.uy.size(); ++k)
        equiv = std::max(equiv, std::abs(r.u_hat.uy[k] - alpha * base.u_hat.uy[k]) / (alpha * ref));
    }
  }
  report(4, adj <= 1e-12 && curl <= 1e-10 && equiv <= 1e-5,
         fmt("adjoint %.2e (<= 1e-12), curl of gradient %.2e (<= 1e-10), scale equivariance %.2e (<= 1e-5)", adj, curl,
             equiv));
}

struct Trained {
  NetParams<float> params;
  double seconds = 0.0;
};

// Settings shared by the two ablation models; only the loss differs.
Trained train_model(const std::vector<DatasetFrame>& data, bool single_frame) {
  TrainConfig cfg;
  cfg.epochs = 15;
  cfg.lr = 1e-3;
  cfg.loss.single_frame = single_frame;
  const auto t0 = Clock::now();
  TrainResult r = train(data, cfg, 1);
  return {std::move(r.params), seconds_since(t0)};
}

void criterion_5(const Trained& multi, const std::vector<DatasetFrame>& test) {
  const double none = mean_one_step_loss(nullptr, test, 3.0);
  const auto untrained_params = init_params<float>(NetArch{}, 1);
  const double untrained = mean_one_step_loss(&untrained_params, test, 3.0);
  const double trained = mean_one_step_loss(&multi.params, test, 3.0);
  report(5, trained <= 0.25 * none && trained <= 0.6 * untrained && multi.seconds <= 1800.0,
         fmt("test loss trained %.4g, none %.4g (ratio %.3f <= 0.25), untrained %.4g (ratio %.3f <= 0.6), training %.0f s "
             "(<= 1800)",
             trained, none, trained / none, untrained, trained / untrained, multi.seconds));
}

void criterion_6(const Trained& multi) {
  const Scenario sc = plume_scenario({64, 64, 1.0});
  SimConfig cfg;
  cfg.forces = sc.forces;
  cfg.solver = SolverConvNet{std::make_shared<const NetParams<float>>(multi.params), ""};
  const RunResult r = run(sc.state, cfg, 256);
  if (r.aborted || r.metrics.size() != 256) {
    report(6, false, "plume aborted: " + r.error);
    return;
  }
  double early_div = 0.0;
  for (int f = 0; f < 16; ++f) early_div = std::max(early_div, r.metrics[static_cast<std::size_t>(f)].mean_div_l2);
  const double speed16 = r.metrics[15].max_speed;
  double worst_div = 0.0, worst_speed = 0.0;
  for (const auto& m : r.metrics) {
    worst_div = std::max(worst_div, m.mean_div_l2);
    worst_speed = std::max(worst_speed, m.max_speed);
  }
  report(6, worst_div <= 5.0 * early_div && worst_speed <= 10.0 * speed16,
         fmt("div peak/early max %.2f (<= 5), speed peak/frame-16 %.2f (<= 10)", worst_div / early_div,
             worst_speed / speed16));
}

void criterion_7(const Trained& multi, const Trained& single, const std::vector<DatasetFrame>& test) {
  const std::vector<Backend> backends{
      {"multi", SolverConvNet{std::make_shared<const NetParams<float>>(multi.params), ""}},
      {"single", SolverConvNet{std::make_shared<const NetParams<float>>(single.params), ""}}};
  const CurveSet c = divergence_curves(initial_frames(test), backends, 64);
  const double m = c.mean[0][63];
  const double s = c.mean[1][63];
  report(7, m < s, fmt("frame-64 mean divergence unrolled %.5g vs single-frame %.5g", m, s));
}

void criterion_8() {
  const fs::path a = scratch("det_a");
  const fs::path b = scratch("det_b");
  bool ok = true;
  std::string detail;
  for (const fs::path& dir : {a, b}) {
    const std::string d = dir.string();
    ok &= cli("gen-data --res 16 --train-scenes 4 --test-scenes 2 --frames 16 --stride 4 --seed 11 --out " + d + "/data") == 0;
    ok &= cli("train --data " + d + "/data --epochs 2 --features 8 --seed 12 --no-timing --out " + d +
              "/model.fnm --log " + d + "/train.csv") == 0;
    ok &= cli("simulate --res 32 --frames 24 --no-timing --pgm --solver convnet:" + d + "/model.fnm --out " + d +
              "/sim") == 0;
  }
  if (!ok) {
    report(8, false, "a CLI run failed");
    return;
  }
  for (const char* part : {"data", "model.fnm", "train.csv", "sim"}) {
    const std::uint64_t ha = hash_tree(a / part);
    const std::uint64_t hb = hash_tree(b / part);
    detail += fmt("%s %016llx%s ", part, static_cast<unsigned long long>(ha), ha == hb ? "" : " MISMATCH");
    ok &= ha == hb;
  }
  report(8, ok, detail);
  fs::remove_all(a);
  fs::remove_all(b);
}

void criterion_9() {
  Rng rng(1009);
  int trials = 0;
  bool ok = true;
  const auto f32 = [&] { return static_cast<double>(static_cast<float>(uniform(rng, -1e3, 1e3))); };
  for (int t = 0; t < 100; ++t, ++trials) {
    const OccupancyGrid g = random_system_grid(rng);
    FrameRecord r;
    r.g = g;
    r.g.dims.h = 1.0;
    r.u = MacVelocity(r.g.dims);
    for (double& v : r.u.ux) v = f32();
    for (double& v : r.u.uy) v = f32();
    r.density = ScalarGrid(r.g.dims);
    for (double& v : r.density.values) v = f32();
    r.dt = static_cast<float>(uniform(rng, 1e-3, 1.0));
    if (t % 2) {
      ScalarGrid p(r.g.dims);
      for (double& v : p.values) v = f32();
      r.pressure = p;
    }
    const auto bytes = encode_frame(r);
    const FrameRecord back = decode_frame(bytes);
    ok &= back == r && encode_frame(back) == bytes;

    NetArch arch{uniform01(rng) < 0.5 ? ArchKind::multires : ArchKind::linear, uniform_int(rng, 1, 8), 1 + 2 * uniform_int(rng, 0, 2)};
    if (arch.kind == ArchKind::linear) arch = NetArch::linear();
    NetParams<float> p = init_params<float>(arch, static_cast<std::uint64_t>(t));
    const auto mb = encode_model(p);
    const NetParams<float> q = decode_model(mb);
    ok &= encode_model(q) == mb && flatten(q) == flatten(p);
  }
  report(9, ok, fmt("%d FNF1 and %d FNM1 random payloads", trials, trials));
}

// Runs fn, turning an escaped exception into a FAIL line.
void guarded(int id, const std::function<void()>& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    report(id, false, std::string("exception: ") + e.what());
  }
}

}  // namespace

int main() {
  guarded(1, criterion_1);
  guarded(3, criterion_3);
  guarded(4, criterion_4);
  guarded(9, criterion_9);
  guarded(8, criterion_8);

  // Desk-scale dataset: 64 train + 64 test scenes at 32x32.
  const fs::path desk = scratch("desk");
  const std::string dataset = (desk / "data").string();
  if (cli("gen-data --res 32 --train-scenes 64 --test-scenes 64 --seed 1 --out " + dataset) != 0) {
    for (int id : {2, 5, 6, 7}) report(id, false, "dataset generation failed");
    return 1;
  }
  guarded(2, [&] { criterion_2(dataset); });
  try {
    const auto train_set = load_split(dataset, "train");
    const auto test_set = load_split(dataset, "test");
    const Trained multi = train_model(train_set, false);
    guarded(5, [&] { criterion_5(multi, test_set); });
    guarded(6, [&] { criterion_6(multi); });
    const Trained single = train_model(train_set, true);
    guarded(7, [&] { criterion_7(multi, single, test_set); });
  } catch (const std::exception& e) {
    for (int id : {5, 6, 7}) report(id, false, std::string("exception: ") + e.what());
  }
  fs::remove_all(desk);

  std::printf("%s: %d criteria failed\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}
