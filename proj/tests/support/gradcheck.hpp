#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "ckd/tensor.hpp"

namespace ckd::testsupport {

// Central finite differences against tape gradients. `fn` must rebuild the
// forward graph from the captured input tensors on every call (their values
// are perturbed in place) and return a scalar loss. The numeric side runs
// without a tape, so it exercises only the forward path.
inline double gradcheck_max_rel_error(const std::function<Tensor(Tape*)>& fn,
                                      std::vector<Tensor> inputs, double h = 1e-5) {
    Tape tape;
    const Tensor loss = fn(&tape);
    for (auto& t : inputs) {
        t.zero_grad();
    }
    backward(tape, loss);
    std::vector<std::vector<double>> analytic;
    analytic.reserve(inputs.size());
    for (auto& t : inputs) {
        analytic.push_back(t.grad());
    }

    double worst = 0.0;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        auto& data = inputs[i].data();
        for (std::size_t j = 0; j < data.size(); ++j) {
            const double orig = data[j];
            data[j] = orig + h;
            const double fp = fn(nullptr).item();
            data[j] = orig - h;
            const double fm = fn(nullptr).item();
            data[j] = orig;
            const double numeric = (fp - fm) / (2.0 * h);
            const double a = analytic[i][j];
            const double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
            worst = std::max(worst, std::abs(a - numeric) / denom);
        }
    }
    return worst;
}

} // namespace ckd::testsupport
