#include <benchmark/benchmark.h>

#include "mergeflow/gbdt.hpp"
#include "mergeflow/kernels.hpp"
#include "mergeflow/random.hpp"

using namespace mergeflow;
using namespace mergeflow::kernels;

namespace {

struct HistogramInput {
    BinnedMatrix bins;
    std::vector<std::uint32_t> rows;
    std::vector<GradPair> gpair;
    std::vector<int> features;
};

HistogramInput make_input(std::size_t rows) {
    rnd::Engine rng(1);
    HistogramInput in;
    auto& m = in.bins;
    m.rows = rows;
    m.features = 18;
    m.offsets.push_back(0);
    for (std::size_t f = 0; f < m.features; ++f) m.offsets.push_back(m.offsets.back() + 256);
    for (std::size_t i = 0; i < rows * m.features; ++i) m.codes.push_back(static_cast<std::uint16_t>(rnd::index(rng, 256)));
    for (std::uint32_t i = 0; i < rows; ++i) {
        in.rows.push_back(i);
        in.gpair.push_back({rnd::uniform(rng, -1, 1), rnd::uniform(rng, 0, 0.25)});
    }
    for (int f = 0; f < 18; ++f) in.features.push_back(f);
    return in;
}

template <auto Kernel>
void BM_Histogram(benchmark::State& state) {
    const auto in = make_input(static_cast<std::size_t>(state.range(0)));
    std::vector<GradPair> out(in.bins.total_bins());
    for (auto _ : state) {
        Kernel(in.bins, in.rows, in.gpair, in.features, out);
        benchmark::DoNotOptimize(out.data());
    }
    state.SetItemsProcessed(state.iterations() * state.range(0) * 18);
}

template <auto Kernel>
void BM_ShuffledRank(benchmark::State& state) {
    for (auto _ : state) benchmark::DoNotOptimize(Kernel(static_cast<std::size_t>(state.range(0)), 3, 10'000, 7));
    state.SetItemsProcessed(state.iterations() * 10'000);
}

void BM_Train(benchmark::State& state) {
    const auto rows = static_cast<std::size_t>(state.range(0));
    rnd::Engine rng(2);
    predictor::Matrix x(rows, 18);
    std::vector<int> y;
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t f = 0; f < 18; ++f) x.row(i)[f] = rnd::uniform(rng, 0, 10);
        y.push_back(x.row(i)[0] + x.row(i)[1] + rnd::normal(rng) > 12 ? 1 : 0);
    }
    predictor::Hyperparams hp;
    hp.n_rounds = 50;
    predictor::TrainOptions options;
    options.serial = state.range(1) != 0;
    for (auto _ : state) benchmark::DoNotOptimize(predictor::train(x, y, hp, options));
}

}  // namespace

BENCHMARK(BM_Histogram<histogram_serial>)->Name("histogram/serial")->Arg(5'000)->Arg(50'000);
BENCHMARK(BM_Histogram<histogram_parallel>)->Name("histogram/parallel")->Arg(5'000)->Arg(50'000)->UseRealTime();
BENCHMARK(BM_ShuffledRank<mean_shuffled_rank_serial>)->Name("shuffled_rank/serial")->Arg(20)->Arg(200);
BENCHMARK(BM_ShuffledRank<mean_shuffled_rank_parallel>)->Name("shuffled_rank/parallel")->Arg(20)->Arg(200)->UseRealTime();
BENCHMARK(BM_Train)->Name("gbdt_train/serial")->Args({5'000, 1})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Train)->Name("gbdt_train/parallel")->Args({5'000, 0})->Unit(benchmark::kMillisecond)->UseRealTime();

BENCHMARK_MAIN();
