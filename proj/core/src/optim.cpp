#include "ckd/optim.hpp"

#include <cmath>

#include "ckd/errors.hpp"

namespace ckd {

AdamState::AdamState(std::vector<Tensor> params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    m_.resize(params_.size());
    v_.resize(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) {
        if (params_[i].requires_grad()) {
            m_[i].assign(params_[i].size(), 0.0);
            v_[i].assign(params_[i].size(), 0.0);
        }
    }
}

void AdamState::step() {
    ++step_count_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_count_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_count_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        Tensor& p = params_[i];
        if (!p.requires_grad()) {
            continue;
        }
        auto& g = p.grad();
        auto& m = m_[i];
        auto& v = v_[i];
        auto& w = p.data();
        for (std::size_t j = 0; j < w.size(); ++j) {
            if (!std::isfinite(g[j])) {
                throw divergence_error("adam_step: non-finite gradient in parameter " +
                                       std::to_string(i) + " at element " + std::to_string(j));
            }
            m[j] = beta1_ * m[j] + (1.0 - beta1_) * g[j];
            v[j] = beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j];
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            w[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

void AdamState::zero_grad() {
    for (auto& p : params_) {
        p.zero_grad();
    }
}

} // namespace ckd
