// fluidnet command-line tool.
//
// Exit codes: 0 success, 1 invalid arguments or configuration, 2 runtime failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fluidnet/binary_io.hpp"
#include "fluidnet/data.hpp"
#include "fluidnet/eval.hpp"
#include "fluidnet/net.hpp"
#include "fluidnet/sim.hpp"
#include "fluidnet/train.hpp"

namespace fs = std::filesystem;
using namespace fluidnet;

namespace {

constexpr int kExitInvalid = 1;
constexpr int kExitRuntime = 2;

struct InvalidUsage : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Applies `key = value` lines to options of `cmd` not given on the command
// line. Keys are long option names without the leading dashes.
void apply_config(CLI::App* cmd, const std::string& path) {
  std::set<std::string> allowed;
  for (const CLI::Option* o : cmd->get_options()) {
    for (const std::string& name : o->get_lnames())
      if (name != "help" && name != "config") allowed.insert(name);
  }
  for (const auto& [key, value] : read_config(path, allowed)) {
    CLI::Option* o = cmd->get_option("--" + key);
    if (o->count() > 0) continue;
    o->add_result(value);
    try {
      o->run_callback();
    } catch (const CLI::Error& e) {
      throw InvalidUsage("config key '" + key + "': " + e.what());
    }
  }
}

BoundaryMode boundary_from(bool open_top) { return open_top ? BoundaryMode::open_top : BoundaryMode::closed; }

std::string backend_name(const std::string& spec) {
  const auto colon = spec.find(':');
  if (colon == std::string::npos) return spec;
  const std::string head = spec.substr(0, colon);
  std::string arg = spec.substr(colon + 1);
  if (head == "convnet") arg = fs::path(arg).stem().string();
  std::string name = head + "_" + arg;
  for (char& c : name)
    if (c == ',' || c == ' ') c = '_';
  return name;
}

// --- subcommands ---------------------------------------------------------

struct GenDataArgs {
  std::string out;
  int res = 32;
  int train_scenes = 64;
  int test_scenes = 64;
  int frames = 64;
  int stride = 8;
  bool open_top = false;
  double pcg_tol = 1e-6;
  int shapes_max = 3;
  int emitters_max = 3;
};

int run_gen_data(const GenDataArgs& a, std::uint64_t seed) {
  DatasetConfig cfg;
  cfg.scene.dims = {a.res, a.res, 1.0};
  cfg.scene.geometry.boundary = boundary_from(a.open_top);
  cfg.scene.geometry.shapes_max = a.shapes_max;
  cfg.scene.emitters_max = a.emitters_max;
  cfg.scene.pcg_tol = a.pcg_tol;
  cfg.train_scenes = a.train_scenes;
  cfg.test_scenes = a.test_scenes;
  cfg.frames = a.frames;
  cfg.stride = a.stride;
  cfg.seed = seed;
  const DatasetSummary s = generate_dataset(cfg, a.out);
  std::printf("wrote %d scenes, %d frames to %s (%d non-converged solves)\n", s.scenes, s.frames_written,
              a.out.c_str(), s.nonconverged);
  return 0;
}

struct TrainArgs {
  std::string data;
  std::string out = "model.fnm";
  std::string log;
  std::string init;
  int epochs = 10;
  int batch = 8;
  double lr = 1e-4;
  int features = 16;
  int kernel = 3;
  double k = 3.0;
  double clip = 1.0;
  bool single_frame = false;
  bool no_timing = false;
  std::string unroll = "4:0.9,25:0.1";
};

std::vector<std::pair<int, double>> parse_unroll(const std::string& text) {
  std::vector<std::pair<int, double>> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto comma = text.find(',', pos);
    const std::string item = text.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw InvalidUsage("unroll entries are <steps>:<probability>, got '" + item + "'");
    try {
      out.emplace_back(std::stoi(item.substr(0, colon)), std::stod(item.substr(colon + 1)));
    } catch (const std::exception&) {
      throw InvalidUsage("bad unroll entry '" + item + "'");
    }
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

int run_train(const TrainArgs& a, std::uint64_t seed) {
  TrainConfig cfg;
  cfg.arch.features = a.features;
  cfg.arch.kernel = a.kernel;
  cfg.epochs = a.epochs;
  cfg.batch = a.batch;
  cfg.lr = a.lr;
  cfg.clip = a.clip;
  cfg.loss.k = a.k;
  cfg.loss.single_frame = a.single_frame;
  cfg.loss.unroll = parse_unroll(a.unroll);
  validate(cfg.loss);

  const auto data = load_split(a.data, "train");
  std::printf("training on %zu frames from %s\n", data.size(), a.data.c_str());
  NetParams<float> init;
  if (!a.init.empty()) init = load_model(a.init);

  std::ofstream log_file;
  if (!a.log.empty()) {
    log_file.open(a.log, std::ios::trunc);
    if (!log_file) throw std::runtime_error("cannot create " + a.log);
    write_log_header(log_file);
  }
  // The CSV is written here rather than by train() so --no-timing can zero
  // the timing column.
  const TrainResult r = train(data, cfg, seed, nullptr, a.init.empty() ? nullptr : &init);
  for (const EpochLog& row : r.log) {
    std::printf("epoch %d  loss %.6g  step1 %.6g  stepn %.6g  skipped %d  %.0f ms\n", row.epoch, row.mean_loss,
                row.mean_div_step1, row.mean_div_stepn, row.skipped, row.wall_ms);
    if (log_file.is_open()) write_log_row(log_file, row, !a.no_timing);
  }
  save_model(a.out, r.params);
  std::printf("saved %s (%zu parameters)\n", a.out.c_str(), r.params.parameter_count());
  return 0;
}

struct SimulateArgs {
  std::string scene = "plume";
  std::string out;
  std::string solver = "pcg:1e-6";
  int res = 64;
  int frames = 64;
  double dt = 1.0 / 30.0;
  std::string scheme = "maccormack";
  bool open_top = false;
  std::string obstacle = "none";
  double inflow_width = 1.0 / 8.0;
  double inflow_speed = 0.25;
  double buoyancy = 0.25;
  double lambda_vc = 0.05;
  bool pgm = false;
  double density_max = 1.0;
  bool no_timing = false;
};

int run_simulate(const SimulateArgs& a) {
  if (a.scene != "plume") throw InvalidUsage("unknown scene '" + a.scene + "' (available: plume)");
  PlumeConfig pc;
  pc.boundary = boundary_from(a.open_top);
  pc.inflow_width = a.inflow_width;
  pc.inflow_speed = a.inflow_speed;
  pc.buoyancy = a.buoyancy;
  pc.lambda_vc = a.lambda_vc;
  if (a.obstacle == "none") pc.obstacle = ObstacleKind::none;
  else if (a.obstacle == "disc") pc.obstacle = ObstacleKind::disc;
  else if (a.obstacle == "box") pc.obstacle = ObstacleKind::box;
  else throw InvalidUsage("unknown obstacle '" + a.obstacle + "' (none, disc, box)");
  if (a.scheme != "maccormack" && a.scheme != "sl") throw InvalidUsage("scheme must be maccormack or sl");

  const Scenario sc = plume_scenario({a.res, a.res, 1.0}, pc);
  SimConfig cfg;
  cfg.dt = a.dt;
  cfg.forces = sc.forces;
  cfg.scheme = a.scheme == "sl" ? AdvectionScheme::semi_lagrangian : AdvectionScheme::maccormack;
  cfg.solver = parse_solver(a.solver);
  validate(cfg);

  fs::create_directories(a.out);
  std::ofstream csv(fs::path(a.out) / "metrics.csv", std::ios::trunc);
  if (!csv) throw std::runtime_error("cannot create metrics.csv in " + a.out);
  CsvMetricsSink metrics(csv, !a.no_timing);
  std::vector<FrameSink*> sinks{&metrics};
  std::unique_ptr<PgmSink> pgm;
  if (a.pgm) {
    pgm = std::make_unique<PgmSink>((fs::path(a.out) / "frames").string(), a.density_max);
    sinks.push_back(pgm.get());
  }
  const RunResult r = run(sc.state, cfg, a.frames, sinks, a.out);
  if (r.aborted) {
    std::fprintf(stderr, "simulation aborted after %zu frames: %s\n", r.metrics.size(), r.error.c_str());
    return kExitRuntime;
  }
  const FrameMetrics& last = r.metrics.back();
  std::printf("%d frames, final mean_div_l2 %.3g, max_speed %.3g\n", a.frames, last.mean_div_l2, last.max_speed);
  return 0;
}

struct EvalArgs {
  std::string data;
  std::vector<std::string> backends;
  int frames = 64;
  std::string out = "curves.csv";
  std::string match;
  int max_iters = 4096;
};

int run_eval(EvalArgs a) {
  if (a.backends.empty()) a.backends = {"none", "jacobi:34", "pcg:1e-6"};
  std::vector<Backend> backends;
  for (const auto& spec : a.backends) backends.push_back({backend_name(spec), parse_solver(spec)});
  const CurveSet c = eval_divergence_curves(a.data, backends, a.frames, a.out);
  for (std::size_t b = 0; b < c.names.size(); ++b) {
    std::printf("%-24s frame %d mean %.4g (samples %d, failures %d)\n", c.names[b].c_str(), c.frames,
                c.mean[b].back(), c.samples[b], c.failures[b]);
  }
  if (!a.match.empty()) {
    const auto starts = initial_frames(load_split(a.data, "test"));
    const MatchResult m = match_divergence(starts, parse_solver(a.match), a.frames, a.max_iters);
    std::printf("match-divergence: jacobi:%d reaches %.4g (target %.4g from %s)\n", m.iterations, m.achieved, m.target,
                a.match.c_str());
  }
  return 0;
}

struct BenchArgs {
  std::string solver = "jacobi:34";
  std::vector<int> res{32, 64, 128};
  int reps = 5;
  std::string out;
};

int run_bench(const BenchArgs& a, std::uint64_t seed) {
  std::vector<GridDims> dims;
  for (int r : a.res) dims.push_back({r, r, 1.0});
  const auto rows = bench(parse_solver(a.solver), dims, a.reps, seed);
  if (a.out.empty()) {
    write_bench_csv(std::cout, rows);
  } else {
    std::ofstream out(a.out, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot create " + a.out);
    write_bench_csv(out, rows);
  }
  return 0;
}

struct GradcheckArgs {
  int res = 8;
  bool use_double = true;
  std::string arch = "multires";
  int features = 4;
  int kernel = 3;
  int count = 100;
  double eps = 1e-5;
  double k = 3.0;
  double tol = 1e-4;
};

int run_gradcheck(const GradcheckArgs& a, std::uint64_t seed) {
  NetArch arch;
  if (a.arch == "linear") arch = NetArch::linear();
  else if (a.arch == "multires") arch = {ArchKind::multires, a.features, a.kernel};
  else throw InvalidUsage("arch must be multires or linear");
  const GradCheckSetup s = gradcheck_setup(a.res, arch, seed);
  const GradCheckResult r = gradient_check(s.params, s.u_star, s.g, a.k, a.eps, a.count, seed);
  std::printf("max relative error %.3e over %d parameters (loss %.6g)\n", r.max_rel_error, r.checked, r.loss);
  return r.max_rel_error <= a.tol ? 0 : kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Eulerian smoke solver with classical and learned pressure projection"};
  app.require_subcommand(1);
  app.footer(
      "CSV schemas:\n"
      "  simulate metrics.csv  frame,mean_div_l2,std_div_l2,max_div,max_speed,residual,wall_ms\n"
      "  train --log           epoch,mean_loss,mean_div_step1,mean_div_stepn,wall_ms\n"
      "  eval --out            frame,<backend>_mean,<backend>_std,... then '# failures name=count ...'\n"
      "  bench                 nx,ny,repetitions,median_ms,min_ms\n"
      "Solver specs: none, exact, jacobi:<iters>, pcg:<tol>, convnet:<model.fnm>\n"
      "Config files: one 'key = value' per line (keys are long flag names), '#' comments;\n"
      "command-line flags take precedence; unknown keys are rejected.\n"
      "Exit codes: 0 success, 1 invalid arguments, 2 runtime failure.");

  std::uint64_t seed = 1;
  std::string config;
  const auto common = [&](CLI::App* cmd) {
    cmd->add_option("--seed", seed, "Master random seed")->capture_default_str();
    cmd->add_option("--config", config, "key = value file overriding defaults");
  };

  GenDataArgs gd;
  auto* c_gen = app.add_subcommand("gen-data", "Generate a procedural train/test dataset of FNF1 frames");
  c_gen->add_option("--out", gd.out, "Output directory")->required();
  c_gen->add_option("--res", gd.res, "Grid resolution (square, multiple of 4)")->capture_default_str();
  c_gen->add_option("--train-scenes", gd.train_scenes, "Training scenes")->capture_default_str();
  c_gen->add_option("--test-scenes", gd.test_scenes, "Test scenes")->capture_default_str();
  c_gen->add_option("--frames", gd.frames, "Solver steps per scene")->capture_default_str();
  c_gen->add_option("--stride", gd.stride, "Record every n-th step")->capture_default_str();
  c_gen->add_option("--pcg-tol", gd.pcg_tol, "Reference PCG relative tolerance")->capture_default_str();
  c_gen->add_option("--shapes-max", gd.shapes_max, "Maximum obstacles per scene")->capture_default_str();
  c_gen->add_option("--emitters-max", gd.emitters_max, "Maximum emitters per scene")->capture_default_str();
  c_gen->add_flag("--open-top", gd.open_top, "Open top boundary (air) instead of a closed box");
  common(c_gen);

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", "Train the projection network on <data>/train");
  c_train->add_option("--data", tr.data, "Dataset directory")->required();
  c_train->add_option("--out", tr.out, "Output model file (FNM1)")->capture_default_str();
  c_train->add_option("--log", tr.log, "Per-epoch CSV log");
  c_train->add_option("--init", tr.init, "Start from this model instead of random weights");
  c_train->add_option("--epochs", tr.epochs, "Epochs")->capture_default_str();
  c_train->add_option("--batch", tr.batch, "Mini-batch size")->capture_default_str();
  c_train->add_option("--lr", tr.lr, "Adam learning rate")->capture_default_str();
  c_train->add_option("--features", tr.features, "Feature channels per layer")->capture_default_str();
  c_train->add_option("--kernel", tr.kernel, "Odd convolution kernel size")->capture_default_str();
  c_train->add_option("--k", tr.k, "Boundary weighting constant")->capture_default_str();
  c_train->add_option("--clip", tr.clip, "Gradient L2 clip per batch (<= 0 disables)")->capture_default_str();
  c_train->add_option("--unroll", tr.unroll, "Unroll distribution <steps>:<prob>,...")->capture_default_str();
  c_train->add_flag("--single-frame-loss", tr.single_frame, "Drop the long-term (step n) loss term");
  c_train->add_flag("--no-timing", tr.no_timing, "Write wall_ms as 0 in the log");
  common(c_train);

  SimulateArgs sm;
  auto* c_sim = app.add_subcommand("simulate", "Run a scenario and write per-frame metrics");
  c_sim->add_option("--out", sm.out, "Output directory (metrics.csv, frames/)")->required();
  c_sim->add_option("--scene", sm.scene, "Scenario (plume)")->capture_default_str();
  c_sim->add_option("--solver", sm.solver, "Projection backend spec")->capture_default_str();
  c_sim->add_option("--res", sm.res, "Grid resolution (square, multiple of 4)")->capture_default_str();
  c_sim->add_option("--frames", sm.frames, "Frames to simulate")->capture_default_str();
  c_sim->add_option("--dt", sm.dt, "Time step in seconds")->capture_default_str();
  c_sim->add_option("--scheme", sm.scheme, "Advection: maccormack or sl")->capture_default_str();
  c_sim->add_option("--obstacle", sm.obstacle, "none, disc or box")->capture_default_str();
  c_sim->add_option("--inflow-width", sm.inflow_width, "Inflow diameter as a fraction of the width")->capture_default_str();
  c_sim->add_option("--inflow-speed", sm.inflow_speed, "Inflow speed in domain heights per second")->capture_default_str();
  c_sim->add_option("--buoyancy", sm.buoyancy, "Buoyancy in domain heights per second^2")->capture_default_str();
  c_sim->add_option("--vorticity", sm.lambda_vc, "Vorticity confinement strength")->capture_default_str();
  c_sim->add_option("--density-max", sm.density_max, "Density mapped to white in PGM frames")->capture_default_str();
  c_sim->add_flag("--open-top", sm.open_top, "Open top boundary");
  c_sim->add_flag("--pgm", sm.pgm, "Write frames/frame_%06d.pgm density images");
  c_sim->add_flag("--no-timing", sm.no_timing, "Write wall_ms as 0");
  common(c_sim);

  EvalArgs ev;
  auto* c_eval = app.add_subcommand("eval", "Divergence-versus-frame curves over <data>/test");
  c_eval->add_option("--data", ev.data, "Dataset directory")->required();
  c_eval->add_option("--backend", ev.backends, "Backend spec (repeatable; default none, jacobi:34, pcg:1e-6)");
  c_eval->add_option("--frames", ev.frames, "Rollout length")->capture_default_str();
  c_eval->add_option("--out", ev.out, "Output CSV")->capture_default_str();
  c_eval->add_option("--match-divergence", ev.match, "Find the Jacobi iterations matching this backend");
  c_eval->add_option("--max-iters", ev.max_iters, "Upper bound for --match-divergence")->capture_default_str();
  common(c_eval);

  BenchArgs bn;
  auto* c_bench = app.add_subcommand("bench", "Time the projection phase across resolutions");
  c_bench->add_option("--solver", bn.solver, "Backend spec")->capture_default_str();
  c_bench->add_option("--res", bn.res, "Resolutions")->capture_default_str()->delimiter(',');
  c_bench->add_option("--reps", bn.reps, "Repetitions per resolution")->capture_default_str();
  c_bench->add_option("--out", bn.out, "Output CSV (default stdout)");
  common(c_bench);

  GradcheckArgs gc;
  auto* c_grad = app.add_subcommand("gradcheck", "Finite-difference check of network parameter gradients");
  c_grad->add_option("--res", gc.res, "Grid resolution (multiple of 4)")->capture_default_str();
  c_grad->add_flag("--double", gc.use_double, "Double precision (the only supported mode)");
  c_grad->add_option("--arch", gc.arch, "multires or linear")->capture_default_str();
  c_grad->add_option("--features", gc.features, "Feature channels")->capture_default_str();
  c_grad->add_option("--kernel", gc.kernel, "Kernel size")->capture_default_str();
  c_grad->add_option("--count", gc.count, "Parameters to check")->capture_default_str();
  c_grad->add_option("--eps", gc.eps, "Finite-difference step")->capture_default_str();
  c_grad->add_option("--k", gc.k, "Boundary weighting constant")->capture_default_str();
  c_grad->add_option("--tol", gc.tol, "Pass threshold on the max relative error")->capture_default_str();
  common(c_grad);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInvalid;
  }

  try {
    CLI::App* cmd = app.get_subcommands().front();
    if (!config.empty()) apply_config(cmd, config);
    if (cmd == c_gen) return run_gen_data(gd, seed);
    if (cmd == c_train) return run_train(tr, seed);
    if (cmd == c_sim) return run_simulate(sm);
    if (cmd == c_eval) return run_eval(ev);
    if (cmd == c_bench) return run_bench(bn, seed);
    if (cmd == c_grad) return run_gradcheck(gc, seed);
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitInvalid;
  } catch (const FormatError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitInvalid;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
  return kExitInvalid;
}
