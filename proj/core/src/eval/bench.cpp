#include "ckd/eval/bench.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <thread>

#include <json.hpp>

#include "ckd/checkpoint.hpp"
#include "ckd/errors.hpp"

namespace ckd::eval {

BenchEnvironment BenchEnvironment::capture() {
    BenchEnvironment env;
    env.hardware_threads = std::thread::hardware_concurrency();
    env.cpu_model = "unknown";
    std::ifstream cpuinfo("/proc/cpuinfo");
    std::string line;
    while (std::getline(cpuinfo, line)) {
        if (line.rfind("model name", 0) == 0) {
            const auto colon = line.find(':');
            if (colon != std::string::npos) {
                std::size_t b = colon + 1;
                while (b < line.size() && line[b] == ' ') {
                    ++b;
                }
                env.cpu_model = line.substr(b);
            }
            break;
        }
    }
    return env;
}

BenchResult bench_inference(const std::string& name, const model::Encoder& encoder,
                            const model::Mlaph& head,
                            const std::vector<model::TokenizedText>& samples,
                            std::size_t repeats, std::size_t warmup) {
    if (repeats < 30) {
        throw contract_error("bench_inference requires repeats >= 30, got " +
                             std::to_string(repeats));
    }
    if (samples.empty()) {
        throw contract_error("bench_inference needs at least one sample");
    }
    const std::size_t seq = samples[0].ids.size();
    auto run_one = [&](const model::TokenizedText& sample) {
        model::TokenBatch batch;
        batch.batch = 1;
        batch.seq = seq;
        batch.ids = sample.ids;
        batch.mask = sample.mask;
        const Tensor hidden = encoder.forward(nullptr, batch);
        return model::mlaph_forward(nullptr, head, hidden, batch.mask);
    };

    for (std::size_t i = 0; i < warmup; ++i) {
        run_one(samples[i % samples.size()]);
    }

    using Clock = std::chrono::steady_clock;
    std::vector<double> latencies(repeats);
    for (std::size_t i = 0; i < repeats; ++i) {
        const auto start = Clock::now();
        run_one(samples[i % samples.size()]);
        latencies[i] = std::chrono::duration<double>(Clock::now() - start).count();
    }
    double mean = 0.0;
    for (double x : latencies) {
        mean += x;
    }
    mean /= static_cast<double>(repeats);
    double var = 0.0;
    for (double x : latencies) {
        var += (x - mean) * (x - mean);
    }
    var /= static_cast<double>(repeats);

    BenchResult result;
    result.name = name;
    result.mean_latency_s = mean;
    result.stddev_latency_s = std::sqrt(var);
    result.repeats = repeats;
    result.parameter_count = encoder.parameter_count() + head.parameter_count();
    auto tensors = encoder.named_parameters();
    for (auto& nt : head.named_parameters()) {
        tensors.push_back(nt);
    }
    result.model_bytes = encode_checkpoint(tensors).size();
    return result;
}

void apply_reference(BenchResult& subject, const BenchResult& reference) {
    subject.reference_name = reference.name;
    subject.speedup = reference.mean_latency_s / subject.mean_latency_s;
}

std::string bench_report_json(const std::vector<BenchResult>& results,
                              const BenchEnvironment& env) {
    nlohmann::ordered_json j;
    j["environment"] = {
        {"cpu_model", env.cpu_model},
        {"hardware_threads", env.hardware_threads},
    };
    j["results"] = nlohmann::ordered_json::array();
    for (const auto& r : results) {
        nlohmann::ordered_json row;
        row["name"] = r.name;
        row["mean_latency_s"] = r.mean_latency_s;
        row["stddev_latency_s"] = r.stddev_latency_s;
        row["repeats"] = r.repeats;
        row["parameter_count"] = r.parameter_count;
        row["model_bytes"] = r.model_bytes;
        row["speedup"] = r.speedup;
        row["reference"] = r.reference_name;
        j["results"].push_back(row);
    }
    return j.dump(2) + "\n";
}

} // namespace ckd::eval
