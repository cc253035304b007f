// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include "devmoe/continual/trainer.hpp"
#include "devmoe/linalg/decompositions.hpp"
#include "devmoe/linalg/ops.hpp"

namespace la = devmoe::linalg;
namespace cl = devmoe::continual;

static void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  la::Rng rng(1);
  const la::Matrix a = la::gaussian(n, n, 1.0, rng);
  const la::Matrix b = la::gaussian(n, n, 1.0, rng);
  for (auto _ : state) benchmark::DoNotOptimize(la::matmul(a, b));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(32)->Arg(64)->Arg(128);

// The ortho term's SVD runs on (n·T) x d_in inputs.
static void BM_Svd(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  la::Rng rng(2);
  const la::Matrix m = la::gaussian(rows, 32, 1.0, rng);
  for (auto _ : state) benchmark::DoNotOptimize(la::svd(m));
}
BENCHMARK(BM_Svd)->Arg(64)->Arg(512);

static void BM_TopRRightRows(benchmark::State& state) {
  la::Rng rng(3);
  const la::Matrix m = la::gaussian(512, 32, 1.0, rng);
  for (auto _ : state) benchmark::DoNotOptimize(la::top_r_right_rows(m, 4));
}
BENCHMARK(BM_TopRRightRows);

// One full minibatch step on task 2 of the default model: forward, the three
// loss terms, and backward.
static void BM_TrainStep(benchmark::State& state) {
  const cl::StreamConfig sc;
  const cl::TaskStream stream(sc);
  devmoe::network::ModelConfig mc;
  devmoe::network::DevMoeModel model(mc, devmoe::moe::BankLayout::RealAndFakes);
  devmoe::objective::SubspaceArchive archive(model.layers().size());
  model.expand_for_task(1);
  for (std::size_t l = 0; l < model.layers().size(); ++l) archive.add_basis(l, model.layers()[l].experts().back().b);
  model.expand_for_task(2);
  const cl::Dataset data = stream.generate_task(2).train;
  std::vector<std::size_t> idx(128);
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i * 15;
  const la::Matrix tokens = data.gather(idx);
  const std::vector<int> labels = data.gather_labels(idx);
  const devmoe::objective::OrthoConfig oc;
  const cl::VariantTraits vt = cl::traits(cl::Variant::Full);
  for (auto _ : state) {
    devmoe::ad::Tape tape;
    const devmoe::network::ModelBinding bnd = devmoe::network::bind(tape, model, true);
    const cl::BatchLoss loss = cl::batch_loss(tape, bnd, model, archive, tokens, labels, 0, oc, vt);
    benchmark::DoNotOptimize(tape.backward(loss.total, bnd.parameters));
  }
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
