#include "ckd/distill/loss.hpp"

#include <cmath>

#include "ckd/errors.hpp"

namespace ckd::distill {

void LossConfig::validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
        throw config_error("loss alpha must be in [0,1], got " + std::to_string(alpha));
    }
    for (double w : label_weights) {
        if (!(w > 0.0)) {
            throw config_error("label weights must be positive, got " + std::to_string(w));
        }
    }
}

Tensor bce_with_logits(Tape* tape, const Tensor& logits, const Tensor& targets,
                       const std::vector<double>& weights) {
    Tensor w;
    if (weights.empty()) {
        w = Tensor::scalar(1.0);
    } else {
        w = Tensor::from_data({weights.size()}, weights);
    }
    return bce_with_logits_mean(tape, logits, targets, w);
}

double total_loss(double hard_loss, double soft_loss, const LossConfig& config) {
    config.validate();
    if (!std::isfinite(hard_loss) || !std::isfinite(soft_loss) || hard_loss < 0.0 ||
        soft_loss < 0.0) {
        throw contract_error("total_loss requires finite nonnegative losses");
    }
    return config.alpha * hard_loss + config.beta() * soft_loss;
}

Tensor total_loss(Tape* tape, const Tensor& hard_loss, const Tensor& soft_loss,
                  const LossConfig& config) {
    config.validate();
    if (!std::isfinite(hard_loss.item()) || !std::isfinite(soft_loss.item()) ||
        hard_loss.item() < 0.0 || soft_loss.item() < 0.0) {
        throw contract_error("total_loss requires finite nonnegative losses");
    }
    return add(tape, scale(tape, hard_loss, config.alpha),
               scale(tape, soft_loss, config.beta()));
}

} // namespace ckd::distill
