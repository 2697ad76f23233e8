#include "fluidnet/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>

#include "fluidnet/fdops.hpp"
#include "fluidnet/pressure.hpp"
#include "fluidnet/train.hpp"

namespace fluidnet {

std::vector<DatasetFrame> initial_frames(const std::vector<DatasetFrame>& frames) {
  std::vector<DatasetFrame> out;
  std::string last_dir;
  for (const auto& f : frames) {
    const std::string dir = std::filesystem::path(f.path).parent_path().string();
    if (!out.empty() && dir == last_dir) continue;
    last_dir = dir;
    out.push_back(f);
  }
  return out;
}

CurveSet divergence_curves(const std::vector<DatasetFrame>& starts, const std::vector<Backend>& backends, int frames,
                           const SimConfig& base) {
  if (frames < 1) throw std::invalid_argument("frames must be >= 1");
  CurveSet c;
  c.frames = frames;
  for (const Backend& b : backends) {
    SimConfig cfg = base;
    cfg.solver = b.solver;
    std::vector<double> sum(static_cast<std::size_t>(frames), 0.0);
    std::vector<double> sum2(static_cast<std::size_t>(frames), 0.0);
    int ok = 0;
    int failed = 0;
    for (const auto& s : starts) {
      RunResult r;
      try {
        r = run(state_from_frame(s.record), cfg, frames);
      } catch (const std::exception& e) {
        r.aborted = true;
        r.error = e.what();
      }
      if (r.aborted) {
        ++failed;
        std::fprintf(stderr, "warning: %s on %s: %s\n", b.name.c_str(), s.path.c_str(), r.error.c_str());
        continue;
      }
      for (int f = 0; f < frames; ++f) {
        const double v = r.metrics[static_cast<std::size_t>(f)].mean_div_l2;
        sum[static_cast<std::size_t>(f)] += v;
        sum2[static_cast<std::size_t>(f)] += v * v;
      }
      ++ok;
    }
    std::vector<double> mean(sum.size(), 0.0);
    std::vector<double> sd(sum.size(), 0.0);
    if (ok > 0) {
      for (std::size_t f = 0; f < sum.size(); ++f) {
        mean[f] = sum[f] / ok;
        sd[f] = std::sqrt(std::max(0.0, sum2[f] / ok - mean[f] * mean[f]));
      }
    }
    c.names.push_back(b.name);
    c.mean.push_back(std::move(mean));
    c.stdev.push_back(std::move(sd));
    c.samples.push_back(ok);
    c.failures.push_back(failed);
  }
  return c;
}

void write_curves_csv(std::ostream& out, const CurveSet& c) {
  out << "frame";
  for (const auto& n : c.names) out << ',' << n << "_mean," << n << "_std";
  out << '\n';
  char buf[64];
  for (int f = 0; f < c.frames; ++f) {
    out << f + 1;
    for (std::size_t b = 0; b < c.names.size(); ++b) {
      std::snprintf(buf, sizeof buf, ",%.9g,%.9g", c.mean[b][static_cast<std::size_t>(f)],
                    c.stdev[b][static_cast<std::size_t>(f)]);
      out << buf;
    }
    out << '\n';
  }
  out << "# failures";
  for (std::size_t b = 0; b < c.names.size(); ++b) out << ' ' << c.names[b] << '=' << c.failures[b];
  out << '\n';
}

CurveSet eval_divergence_curves(const std::string& dataset_dir, const std::vector<Backend>& backends, int frames,
                                const std::string& out_csv, const SimConfig& base) {
  const auto starts = initial_frames(load_split(dataset_dir, "test"));
  if (starts.empty()) throw std::runtime_error("no test frames in " + dataset_dir);
  CurveSet c = divergence_curves(starts, backends, frames, base);
  std::ofstream out(out_csv, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot create " + out_csv);
  write_curves_csv(out, c);
  return c;
}

std::vector<BenchRow> bench(const SolverSpec& solver, const std::vector<GridDims>& dims, int repetitions,
                            std::uint64_t seed) {
  if (repetitions < 1) throw std::invalid_argument("repetitions must be >= 1");
  std::vector<BenchRow> rows;
  for (const GridDims& d : dims) {
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(d.nx), static_cast<std::uint64_t>(d.ny)));
    const OccupancyGrid g = random_geometry(d, rng, ShapePool::test);
    MacVelocity u = curl_noise_velocity(d, NoiseConfig{}, rng(), &g);
    for (double& v : u.ux) v += uniform(rng, -0.1, 0.1) * d.ny;
    for (double& v : u.uy) v += uniform(rng, -0.1, 0.1) * d.ny;
    u = enforce_solid_velocities(u, g);

    std::vector<double> times;
    BenchRow row;
    row.nx = d.nx;
    row.ny = d.ny;
    row.repetitions = repetitions;
    for (int r = 0; r < repetitions; ++r) {
      const auto t0 = std::chrono::steady_clock::now();
      const ProjectionOutcome p = project(u, g, solver);
      const auto t1 = std::chrono::steady_clock::now();
      times.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
      double sum = 0.0;
      for (double v : p.u.ux) sum += v;
      for (double v : p.u.uy) sum += v;
      row.checksum = sum;
    }
    std::sort(times.begin(), times.end());
    const std::size_t n = times.size();
    row.median_ms = n % 2 ? times[n / 2] : 0.5 * (times[n / 2 - 1] + times[n / 2]);
    row.min_ms = times.front();
    rows.push_back(row);
  }
  return rows;
}

void write_bench_csv(std::ostream& out, const std::vector<BenchRow>& rows) {
  out << "nx,ny,repetitions,median_ms,min_ms\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%d,%d,%d,%.6f,%.6f\n", r.nx, r.ny, r.repetitions, r.median_ms, r.min_ms);
    out << buf;
  }
}

namespace {

double frame_average(const CurveSet& c, std::size_t b) {
  double s = 0.0;
  for (double v : c.mean[b]) s += v;
  return s / static_cast<double>(c.mean[b].size());
}

}  // namespace

MatchResult match_divergence(const std::vector<DatasetFrame>& starts, const SolverSpec& reference, int frames,
                             int max_iters, const SimConfig& base) {
  if (max_iters < 1) throw std::invalid_argument("max_iters must be >= 1");
  MatchResult m;
  m.target = frame_average(divergence_curves(starts, {{"ref", reference}}, frames, base), 0);
  const auto eval = [&](int iters) {
    return frame_average(divergence_curves(starts, {{"jacobi", SolverJacobi{iters}}}, frames, base), 0);
  };
  int lo = 1;
  int hi = max_iters;
  double at_hi = eval(hi);
  if (at_hi > m.target) {
    m.iterations = hi;
    m.achieved = at_hi;
    return m;
  }
  while (lo < hi) {
    const int mid = lo + (hi - lo) / 2;
    const double v = eval(mid);
    if (v <= m.target) {
      hi = mid;
      at_hi = v;
    } else {
      lo = mid + 1;
    }
  }
  m.iterations = hi;
  m.achieved = at_hi;
  return m;
}

std::map<std::string, std::string> parse_config(std::istream& in, const std::set<std::string>& allowed) {
  const auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  };
  std::map<std::string, std::string> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw std::invalid_argument("config line " + std::to_string(lineno) + ": empty key");
    if (!allowed.count(key)) throw std::invalid_argument("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    out[key] = value;
  }
  return out;
}

std::map<std::string, std::string> read_config(const std::string& path, const std::set<std::string>& allowed) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config file " + path);
  return parse_config(in, allowed);
}

}  // namespace fluidnet
