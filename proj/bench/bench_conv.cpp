// Serial reference conv against the blocked OpenMP path.
// Args: channels, spatial extent (square images, 3x3 filters).

#include <benchmark/benchmark.h>

#include "gpdip/ops.hpp"
#include "gpdip/rng.hpp"

namespace {

using namespace gpdip;

Tensor random_tensor(Shape shape, std::uint64_t stream) {
    Tensor t(std::move(shape));
    Rng rng(7, stream);
    for (double& v : t.storage()) v = rng.normal();
    return t;
}

struct Problem {
    Tensor input, filters, upstream;
    explicit Problem(const benchmark::State& state) {
        const auto c = static_cast<std::size_t>(state.range(0));
        const auto n = static_cast<std::size_t>(state.range(1));
        input = random_tensor({c, n, n}, 1);
        filters = random_tensor({c, c, 3, 3}, 2);
        upstream = random_tensor({c, n, n}, 3);
    }
};

void set_counters(benchmark::State& state) {
    const double c = static_cast<double>(state.range(0)), n = static_cast<double>(state.range(1));
    state.counters["flops"] = benchmark::Counter(2.0 * c * c * 9.0 * n * n, benchmark::Counter::kIsIterationInvariantRate);
}

void BM_conv_reference(benchmark::State& state) {
    const Problem p(state);
    for (auto _ : state) benchmark::DoNotOptimize(reference::conv(p.input, p.filters, Padding::circular));
    set_counters(state);
}

void BM_conv_parallel(benchmark::State& state) {
    const Problem p(state);
    for (auto _ : state) benchmark::DoNotOptimize(conv(p.input, p.filters, Padding::circular));
    set_counters(state);
}

void BM_conv_grad_reference(benchmark::State& state) {
    const Problem p(state);
    for (auto _ : state) benchmark::DoNotOptimize(reference::conv_grad(p.input, p.filters, p.upstream, Padding::reflect));
    set_counters(state);
}

void BM_conv_grad_parallel(benchmark::State& state) {
    const Problem p(state);
    for (auto _ : state) benchmark::DoNotOptimize(conv_grad(p.input, p.filters, p.upstream, Padding::reflect));
    set_counters(state);
}

const std::vector<std::vector<std::int64_t>> kSizes = {{16, 32, 64, 128}, {32, 64}};

}  // namespace

BENCHMARK(BM_conv_reference)->ArgsProduct(kSizes)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_conv_parallel)->ArgsProduct(kSizes)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_conv_grad_reference)->ArgsProduct(kSizes)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_conv_grad_parallel)->ArgsProduct(kSizes)->Unit(benchmark::kMillisecond)->UseRealTime();

BENCHMARK_MAIN();
