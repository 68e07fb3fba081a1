// Column-parallel renderer against the per-pixel serial reference, plus the
// training step cost at the desk-scale model size.

#include <benchmark/benchmark.h>

#include <vector>

#include "socnav/depth_render.hpp"
#include "socnav/model.hpp"

namespace {

using namespace socnav;

StaticMap bench_map() {
  StaticMap map;
  map.name = "bench";
  map.walkable = {{0, 0}, {20, 0}, {20, 20}, {0, 20}};
  map.obstacles = {{{6, 6}, {8, 6}, {8, 9}, {6, 9}}, {{12, 11}, {15, 11}, {15, 13}, {12, 13}}};
  return map;
}

std::vector<AgentView> bench_agents() {
  std::vector<AgentView> agents;
  for (int i = 0; i < 10; ++i) {
    agents.push_back({{{4.0 + 1.3 * i, 10.0 + ((i % 3) - 1) * 1.5}, 0.0}, AgentBody{}});
  }
  return agents;
}

template <DepthFrame (*Render)(const Pose&, std::span<const AgentView>, const StaticMap&,
                               const CameraConfig&)>
void BM_Render(benchmark::State& state) {
  const StaticMap map = bench_map();
  const auto agents = bench_agents();
  CameraConfig cam;
  cam.width = int(state.range(0));
  cam.height = cam.width * 3 / 4;
  const Pose viewer{{2.0, 10.0}, 0.0};
  for (auto _ : state) benchmark::DoNotOptimize(Render(viewer, agents, map, cam));
  state.SetItemsProcessed(state.iterations());
}

BENCHMARK_TEMPLATE(BM_Render, render_depth_reference)->Arg(32)->Arg(320)->Unit(benchmark::kMillisecond);
BENCHMARK_TEMPLATE(BM_Render, render_depth)->Arg(32)->Arg(320)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
  ModelConfig config;
  const ModelParams params = ModelParams::initialize(config, 1);
  const int n = int(state.range(0));
  DepthFrame frame(config.depth_width, config.depth_height, 0.5f);
  std::vector<HistoryStep> history(std::size_t(config.history), HistoryStep{{0.5, 0.5}, {0.9, 0.9}, &frame});
  Batch batch(config, n);
  for (int i = 0; i < n; ++i) batch.set(i, history, {1.0, 0.0}, frame, config);
  Eigen::VectorXd grad;
  for (auto _ : state) benchmark::DoNotOptimize(batch_loss(params, config, batch, &grad).total);
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_TrainStep)->Arg(32)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
