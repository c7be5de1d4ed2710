#include "spinhover/analysis.hpp"
#include "spinhover/config.hpp"
#include "spinhover/harness.hpp"

#include <benchmark/benchmark.h>

using namespace spinhover;

static void BM_PlantStep(benchmark::State& state) {
  const VehicleParams p = make_bicopter({}, Handedness::Cw);
  RigidBodyState s0;
  s0.position.z() = 1.0;
  s0.omega.z() = equilibrium_yaw_rate(p);
  Plant plant(p, s0, false);
  plant.set_command(MotorCommand{{0.14, 0.12}});
  for (auto _ : state) {
    plant.step(5e-4);
    benchmark::DoNotOptimize(plant.state());
  }
}
BENCHMARK(BM_PlantStep);

static void BM_Rk4Scalar(benchmark::State& state) {
  using Vec1 = Eigen::Matrix<double, 1, 1>;
  Vec1 x = Vec1::Constant(1.0);
  for (auto _ : state) {
    x = rk4_step([](double, const Vec1& y) { return Vec1(-y); }, x, 0.0, 1e-6);
    benchmark::DoNotOptimize(x);
  }
}
BENCHMARK(BM_Rk4Scalar);

static void BM_StabilityMap(benchmark::State& state) {
  SweepSpec sweep;
  sweep.kp_steps = sweep.kd_steps = static_cast<int>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(stability_map({}, sweep, {Handedness::Cw, Handedness::Ccw}));
  }
  state.SetItemsProcessed(state.iterations() * 2 * state.range(0) * state.range(0));
}
BENCHMARK(BM_StabilityMap)->Arg(10)->Arg(50);

static void BM_RunScenario(benchmark::State& state) {
  const Scenario s = scenario_preset("bicopter_circle");
  for (auto _ : state) benchmark::DoNotOptimize(run_scenario(s, {}, 1));
}
BENCHMARK(BM_RunScenario)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
