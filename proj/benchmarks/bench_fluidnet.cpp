#include <benchmark/benchmark.h>

#include <memory>

#include "fluidnet/advection.hpp"
#include "fluidnet/data.hpp"
#include "fluidnet/net.hpp"
#include "fluidnet/sim.hpp"

using namespace fluidnet;

namespace {

struct Fixture {
  OccupancyGrid g;
  MacVelocity u;
  ScalarGrid density;
};

// Obstacle geometry plus curl noise and a density field, seeded by resolution.
Fixture make_fixture(int res) {
  const GridDims d{res, res, 1.0};
  Rng rng(static_cast<std::uint64_t>(res));
  Fixture f{random_geometry(d, rng, ShapePool::train), MacVelocity(d), ScalarGrid(d)};
  f.u = curl_noise_velocity(d, NoiseConfig{}, 7, &f.g);
  for (double& v : f.u.ux) v += uniform(rng, -0.1, 0.1) * res;
  for (double& v : f.u.uy) v += uniform(rng, -0.1, 0.1) * res;
  for (std::size_t k = 0; k < d.cells(); ++k)
    if (!f.g.solid[k]) f.density.values[k] = uniform01(rng);
  return f;
}

void run_projection(benchmark::State& state, const SolverSpec& solver) {
  const Fixture f = make_fixture(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(project(f.u, f.g, solver));
  state.SetItemsProcessed(state.iterations() * static_cast<long>(f.g.dims.cells()));
}

void BM_ProjectJacobi34(benchmark::State& state) { run_projection(state, SolverJacobi{34}); }
void BM_ProjectPcg(benchmark::State& state) { run_projection(state, SolverPcg{}); }
void BM_ProjectConvNet(benchmark::State& state) {
  run_projection(state, SolverConvNet{std::make_shared<const NetParams<float>>(init_params<float>(NetArch{}, 1)), ""});
}

void BM_NetForward(benchmark::State& state) {
  const Fixture f = make_fixture(static_cast<int>(state.range(0)));
  const auto params = init_params<float>(NetArch{}, 1);
  const ScalarGrid div(f.g.dims);
  for (auto _ : state) benchmark::DoNotOptimize(net_forward(params, div, f.g, 1.0));
}

void BM_AdvectDensity(benchmark::State& state) {
  const Fixture f = make_fixture(static_cast<int>(state.range(0)));
  const auto scheme = state.range(1) ? AdvectionScheme::maccormack : AdvectionScheme::semi_lagrangian;
  for (auto _ : state) benchmark::DoNotOptimize(advect_scalar(f.density, f.u, f.g, 1.0 / 30.0, scheme));
}

void BM_SelfAdvect(benchmark::State& state) {
  const Fixture f = make_fixture(static_cast<int>(state.range(0)));
  for (auto _ : state)
    benchmark::DoNotOptimize(self_advect_velocity(f.u, f.g, 1.0 / 30.0, AdvectionScheme::maccormack));
}

}  // namespace

BENCHMARK(BM_ProjectJacobi34)->Arg(32)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ProjectPcg)->Arg(32)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ProjectConvNet)->Arg(32)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_NetForward)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_AdvectDensity)->ArgsProduct({{64, 128}, {0, 1}})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SelfAdvect)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
