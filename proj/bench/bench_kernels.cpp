// Serial reference kernels vs the OpenMP kernels, plus end-to-end costs of
// the operations that dominate a run (one SAC update, one MC-dropout estimate).

#include <benchmark/benchmark.h>

#include "sero/kernels.hpp"
#include "sero/learner.hpp"
#include "sero/uncertainty.hpp"

namespace {

sero::Matrix random_matrix(std::size_t r, std::size_t c, sero::Rng& rng) {
  sero::Matrix m(r, c);
  for (double& v : m.data) v = sero::uniform(rng, -1.0, 1.0);
  return m;
}

template <bool Parallel>
void BM_AffineForward(benchmark::State& state) {
  const auto batch = static_cast<std::size_t>(state.range(0));
  const auto width = static_cast<std::size_t>(state.range(1));
  sero::Rng rng = sero::make_rng(1);
  const sero::Matrix w = random_matrix(width, width, rng);
  const sero::Vector b(width, 0.1);
  const sero::Matrix x = random_matrix(batch, width, rng);
  sero::Matrix y(batch, width);
  for (auto _ : state) {
    if constexpr (Parallel) {
      sero::kernels::parallel::affine_forward(w, b, x, y);
    } else {
      sero::kernels::reference::affine_forward(w, b, x, y);
    }
    benchmark::DoNotOptimize(y.data.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * batch * width * width));
}

template <bool Parallel>
void BM_AffineBackwardParams(benchmark::State& state) {
  const auto batch = static_cast<std::size_t>(state.range(0));
  const auto width = static_cast<std::size_t>(state.range(1));
  sero::Rng rng = sero::make_rng(2);
  const sero::Matrix x = random_matrix(batch, width, rng);
  const sero::Matrix dy = random_matrix(batch, width, rng);
  sero::Matrix dw(width, width);
  sero::Vector db(width, 0.0);
  for (auto _ : state) {
    if constexpr (Parallel) {
      sero::kernels::parallel::affine_backward_params(x, dy, dw, db);
    } else {
      sero::kernels::reference::affine_backward_params(x, dy, dw, db);
    }
    benchmark::DoNotOptimize(dw.data.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * batch * width * width));
}

void BM_McUncertainty(benchmark::State& state) {
  sero::Rng rng = sero::make_rng(3);
  const auto enc = sero::MlpParams::create(3, {64, 64}, 64, 0.1, rng);
  const sero::Vector s{0.3, -0.2, 1.0};
  for (auto _ : state) {
    if (state.range(0) == 1) {
      benchmark::DoNotOptimize(sero::mc_uncertainty(enc, s, 10, rng));
    } else {
      benchmark::DoNotOptimize(sero::mc_uncertainty_serial(enc, s, 10, rng));
    }
  }
}

void BM_SacUpdate(benchmark::State& state) {
  sero::LearnerConfig cfg;
  cfg.batch_size = static_cast<std::size_t>(state.range(0));
  sero::Rng rng = sero::make_rng(4);
  sero::SacState sac = sero::SacState::create(3, 1, cfg, rng);
  sero::ReplayBuffer buffer(10000);
  for (int i = 0; i < 2000; ++i) {
    sero::Transition t;
    t.state = {sero::uniform(rng, -1, 1), sero::uniform(rng, -1, 1), sero::uniform(rng, -8, 8)};
    t.next_state = t.state;
    t.action = {sero::uniform(rng, -1, 1)};
    t.effective_reward = sero::uniform(rng, -1, 1);
    buffer.push(t);
  }
  for (auto _ : state) {
    const auto batch = sero::Batch::from(buffer.sample(cfg.batch_size, rng));
    sero::critic_update(sac, batch, cfg, rng);
    sero::policy_update(sac, batch, cfg, rng);
    sero::target_update(sac, cfg.tau);
  }
}

}  // namespace

BENCHMARK(BM_AffineForward<false>)->Args({128, 64})->Args({256, 64});
BENCHMARK(BM_AffineForward<true>)->Args({128, 64})->Args({256, 64});
BENCHMARK(BM_AffineBackwardParams<false>)->Args({128, 64})->Args({256, 64});
BENCHMARK(BM_AffineBackwardParams<true>)->Args({128, 64})->Args({256, 64});
BENCHMARK(BM_McUncertainty)->Arg(0)->Arg(1);
BENCHMARK(BM_SacUpdate)->Arg(64)->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
