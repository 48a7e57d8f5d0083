#pragma once

#include <cstddef>
#include <vector>

#include "ckd/tensor.hpp"

namespace ckd {

// Adam with bias correction. Moment buffers are allocated per parameter at
// construction and shape-match it; the step counter advances by exactly one
// per update call. Parameters with requires_grad=false are never touched.
class AdamState {
  public:
    AdamState(std::vector<Tensor> params, double lr, double beta1 = 0.9, double beta2 = 0.999,
              double eps = 1e-8);

    // One update over all trainable parameters using their accumulated grads.
    // Throws divergence_error if any gradient is NaN/Inf.
    void step();

    void zero_grad();

    double lr() const { return lr_; }
    void set_lr(double lr) { lr_ = lr; }
    std::size_t step_count() const { return step_count_; }
    const std::vector<Tensor>& params() const { return params_; }

  private:
    std::vector<Tensor> params_;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
    double lr_;
    double beta1_;
    double beta2_;
    double eps_;
    std::size_t step_count_ = 0;
};

// Free-function form: one Adam update of `params` using gradients already
// accumulated in each tensor's grad buffer.
inline void adam_step(AdamState& state) {
    state.step();
}

} // namespace ckd
