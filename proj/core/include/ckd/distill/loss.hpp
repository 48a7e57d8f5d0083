#pragma once

#include <vector>

#include "ckd/tensor.hpp"

namespace ckd::distill {

// Mixing weights for the combined objective alpha*hard + (1-alpha)*soft.
// beta is derived, so alpha + beta == 1 holds exactly. label_weights, when
// non-empty, gives one positive weight per label (default: all ones).
struct LossConfig {
    double alpha = 0.9;
    std::vector<double> label_weights;

    double beta() const { return 1.0 - alpha; }
    void validate() const;
};

// Scalar mean binary cross-entropy from logits; see bce_with_logits_mean for
// the stable evaluation. Weights: empty = 1, per-label, or elementwise.
Tensor bce_with_logits(Tape* tape, const Tensor& logits, const Tensor& targets,
                       const std::vector<double>& weights = {});

double total_loss(double hard_loss, double soft_loss, const LossConfig& config);
Tensor total_loss(Tape* tape, const Tensor& hard_loss, const Tensor& soft_loss,
                  const LossConfig& config);

} // namespace ckd::distill
