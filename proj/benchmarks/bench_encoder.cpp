#include <benchmark/benchmark.h>

#include "ckd/model/encoder.hpp"
#include "ckd/optim.hpp"

using namespace ckd;
using namespace ckd::model;

namespace {

TokenBatch synthetic_batch(std::size_t batch, std::size_t seq, std::size_t vocab) {
    Rng rng(7);
    TokenBatch b;
    b.batch = batch;
    b.seq = seq;
    for (std::size_t i = 0; i < batch * seq; ++i) {
        const bool pad = (i % seq) > seq - 8;
        b.ids.push_back(pad ? 0 : static_cast<int>(3 + rng.below(vocab - 3)));
        b.mask.push_back(pad ? 0 : 1);
    }
    return b;
}

Encoder make_encoder(const EncoderConfig& base, std::size_t vocab) {
    EncoderConfig c = base;
    c.vocab_size = vocab;
    Rng rng(1);
    return Encoder::init(c, rng);
}

} // namespace

static void BM_TeacherForward(benchmark::State& state) {
    const auto enc = make_encoder(EncoderConfig::teacher_defaults(), 400);
    const auto batch = synthetic_batch(static_cast<std::size_t>(state.range(0)), 128, 400);
    for (auto _ : state) {
        benchmark::DoNotOptimize(enc.forward(nullptr, batch));
    }
}
BENCHMARK(BM_TeacherForward)->Arg(1)->Arg(8)->Arg(32);

static void BM_StudentForward(benchmark::State& state) {
    const auto enc = make_encoder(EncoderConfig::student_defaults(), 400);
    const auto batch = synthetic_batch(static_cast<std::size_t>(state.range(0)), 128, 400);
    for (auto _ : state) {
        benchmark::DoNotOptimize(enc.forward(nullptr, batch));
    }
}
BENCHMARK(BM_StudentForward)->Arg(1)->Arg(8)->Arg(32);

static void BM_TeacherTrainStep(benchmark::State& state) {
    EncoderConfig c = EncoderConfig::teacher_defaults();
    c.vocab_size = 400;
    Rng rng(1);
    auto enc = Encoder::init(c, rng);
    enc.attach_lora(4, rng);
    enc.freeze_base();
    auto head = Mlaph::init(c.d_model, 25, Mlaph::Pooling::last_token, rng);
    auto params = enc.trainable_parameters();
    for (auto& p : head.parameters()) {
        params.push_back(p);
    }
    AdamState opt(params, 5e-3);
    const auto batch = synthetic_batch(16, 128, 400);
    const Tensor targets = Tensor::rand_uniform(rng, {16, 25}, 0.0, 1.0);
    for (auto _ : state) {
        Tape tape;
        const Tensor hidden = enc.forward(&tape, batch);
        const Tensor logits = mlaph_forward(&tape, head, hidden, batch.mask);
        const Tensor loss = bce_with_logits_mean(&tape, logits, targets, Tensor::scalar(1.0));
        opt.zero_grad();
        backward(tape, loss);
        opt.step();
        benchmark::DoNotOptimize(loss.item());
    }
}
BENCHMARK(BM_TeacherTrainStep)->Unit(benchmark::kMillisecond);
