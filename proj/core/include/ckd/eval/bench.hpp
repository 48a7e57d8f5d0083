#pragma once

#include <string>
#include <vector>

#include "ckd/model/encoder.hpp"
#include "ckd/model/vocab.hpp"

namespace ckd::eval {

struct BenchEnvironment {
    std::string cpu_model;
    unsigned hardware_threads = 0;

    static BenchEnvironment capture();
};

struct BenchResult {
    std::string name;
    double mean_latency_s = 0.0;
    double stddev_latency_s = 0.0;
    std::size_t repeats = 0;
    std::size_t parameter_count = 0;
    std::size_t model_bytes = 0;   // serialized checkpoint size
    double speedup = 1.0;          // reference latency / this latency
    std::string reference_name;
};

// Mean single-sample forward latency (batch size 1, one worker, monotonic
// clock), cycling through `samples`. Warm-up runs are excluded from the
// statistics. repeats must be >= 30.
BenchResult bench_inference(const std::string& name, const model::Encoder& encoder,
                            const model::Mlaph& head,
                            const std::vector<model::TokenizedText>& samples,
                            std::size_t repeats, std::size_t warmup = 5);

// Fills subject.speedup from the named reference run.
void apply_reference(BenchResult& subject, const BenchResult& reference);

std::string bench_report_json(const std::vector<BenchResult>& results,
                              const BenchEnvironment& env);

} // namespace ckd::eval
