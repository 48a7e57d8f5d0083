#include <benchmark/benchmark.h>

#include "ckd/rng.hpp"
#include "ckd/tensor.hpp"

using namespace ckd;

static void BM_Matmul(benchmark::State& state) {
    const std::size_t n = static_cast<std::size_t>(state.range(0));
    Rng rng(1);
    const Tensor a = Tensor::randn(rng, {n, n}, 1.0);
    const Tensor b = Tensor::randn(rng, {n, n}, 1.0);
    for (auto _ : state) {
        benchmark::DoNotOptimize(matmul(nullptr, a, b));
    }
    state.SetItemsProcessed(state.iterations() * 2 * n * n * n);
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(128)->Arg(256);

static void BM_MatmulBackward(benchmark::State& state) {
    const std::size_t n = static_cast<std::size_t>(state.range(0));
    Rng rng(1);
    Tensor a = Tensor::randn(rng, {n, n}, 1.0, true);
    Tensor b = Tensor::randn(rng, {n, n}, 1.0, true);
    for (auto _ : state) {
        Tape tape;
        const Tensor loss = mean_all(&tape, matmul(&tape, a, b));
        a.zero_grad();
        b.zero_grad();
        backward(tape, loss);
        benchmark::DoNotOptimize(a.grad().data());
    }
}
BENCHMARK(BM_MatmulBackward)->Arg(64)->Arg(128);

static void BM_SoftmaxRows(benchmark::State& state) {
    Rng rng(2);
    const Tensor x = Tensor::randn(rng, {256, 128}, 3.0);
    for (auto _ : state) {
        benchmark::DoNotOptimize(softmax_rows(nullptr, x));
    }
}
BENCHMARK(BM_SoftmaxRows);

static void BM_LayerNorm(benchmark::State& state) {
    Rng rng(3);
    const Tensor x = Tensor::randn(rng, {512, 128}, 1.0);
    const Tensor gain = Tensor::full({128}, 1.0);
    const Tensor bias = Tensor::zeros({128});
    for (auto _ : state) {
        benchmark::DoNotOptimize(layer_norm(nullptr, x, gain, bias));
    }
}
BENCHMARK(BM_LayerNorm);

static void BM_BceWithLogits(benchmark::State& state) {
    Rng rng(4);
    const Tensor logits = Tensor::randn(rng, {32, 25}, 2.0);
    const Tensor targets = Tensor::rand_uniform(rng, {32, 25}, 0.0, 1.0);
    const Tensor weights = Tensor::scalar(1.0);
    for (auto _ : state) {
        benchmark::DoNotOptimize(bce_with_logits_mean(nullptr, logits, targets, weights));
    }
}
BENCHMARK(BM_BceWithLogits);
