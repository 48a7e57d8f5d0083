#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ckd/errors.hpp"
#include "ckd/rng.hpp"

namespace ckd {

// Shared storage behind a Tensor handle. Ops allocate a fresh impl per
// output; parameters keep theirs across steps so gradients can accumulate
// until the next zero_grad.
struct TensorImpl {
    std::vector<std::size_t> shape;
    std::vector<double> value;
    std::vector<double> grad; // empty until backward (or ensure_grad) touches it
    bool requires_grad = false;

    void ensure_grad() {
        if (grad.size() != value.size()) {
            grad.assign(value.size(), 0.0);
        }
    }
};

// Dense row-major f64 tensor, copied by handle (shared storage).
class Tensor {
  public:
    Tensor() = default;

    static Tensor zeros(std::vector<std::size_t> shape, bool requires_grad = false);
    static Tensor full(std::vector<std::size_t> shape, double v, bool requires_grad = false);
    static Tensor from_data(std::vector<std::size_t> shape, std::vector<double> data,
                            bool requires_grad = false);
    static Tensor scalar(double v, bool requires_grad = false);
    // Elements ~ N(0, stddev^2).
    static Tensor randn(Rng& rng, std::vector<std::size_t> shape, double stddev,
                        bool requires_grad = false);
    static Tensor rand_uniform(Rng& rng, std::vector<std::size_t> shape, double lo, double hi,
                               bool requires_grad = false);

    bool defined() const { return impl_ != nullptr; }
    const std::vector<std::size_t>& shape() const { return impl_->shape; }
    std::size_t rank() const { return impl_->shape.size(); }
    std::size_t size() const { return impl_->value.size(); }

    // Rank-2 accessors; contract_error on other ranks.
    std::size_t rows() const;
    std::size_t cols() const;

    std::vector<double>& data() { return impl_->value; }
    const std::vector<double>& data() const { return impl_->value; }

    double at(std::size_t i) const { return impl_->value[i]; }
    double at(std::size_t i, std::size_t j) const { return impl_->value[i * cols() + j]; }
    double item() const; // scalar value; contract_error unless size()==1

    bool requires_grad() const { return impl_->requires_grad; }
    void set_requires_grad(bool b) { impl_->requires_grad = b; }

    bool has_grad() const { return impl_ && !impl_->grad.empty(); }
    std::vector<double>& grad();
    const std::vector<double>& grad() const;
    void zero_grad();

    Tensor clone() const; // deep copy (values only, same flags)

    std::shared_ptr<TensorImpl> impl() const { return impl_; }
    bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

  private:
    explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
    std::shared_ptr<TensorImpl> impl_;
};

std::string shape_string(const std::vector<std::size_t>& shape);

// Records forward ops in execution order; backward() replays them in reverse,
// so inputs always precede their consumers and each node is visited once.
class Tape {
  public:
    void record(std::shared_ptr<TensorImpl> out, std::function<void()> backprop);
    void clear();
    std::size_t size() const { return nodes_.size(); }
    bool empty() const { return nodes_.empty(); }

  private:
    friend void backward(Tape& tape, const Tensor& loss);
    struct Node {
        std::shared_ptr<TensorImpl> out;
        std::function<void()> backprop;
    };
    std::vector<Node> nodes_;
};

// Seeds d(loss)/d(loss) = 1 and accumulates gradients into every tensor
// reachable from loss. The loss must be a scalar produced on this tape.
void backward(Tape& tape, const Tensor& loss);

// ---- forward ops (pass tape=nullptr for inference) ----

// [m x k] * [k x n] -> [m x n]
Tensor matmul(Tape* tape, const Tensor& a, const Tensor& b);
Tensor transpose(Tape* tape, const Tensor& a);
Tensor add(Tape* tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape* tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape* tape, const Tensor& a, const Tensor& b); // elementwise
Tensor scale(Tape* tape, const Tensor& a, double c);
// X [n x d] + v [d] broadcast over rows
Tensor add_rowvec(Tape* tape, const Tensor& x, const Tensor& v);

// Numerically stable logistic; outputs clamped to the open interval (0,1)
// even where exp underflows, so sigmoid(-1e3) is positive and finite.
Tensor sigmoid(Tape* tape, const Tensor& a);
Tensor relu(Tape* tape, const Tensor& a);
// Softmax over the last dimension with max-subtraction.
Tensor softmax_rows(Tape* tape, const Tensor& a);
// Per-row normalization over the last dimension, then gain/bias affine.
Tensor layer_norm(Tape* tape, const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);

// Copy of the block rows [r0,r1) x cols [c0,c1) of a rank-2 tensor.
Tensor slice_block(Tape* tape, const Tensor& a, std::size_t r0, std::size_t r1, std::size_t c0,
                   std::size_t c1);
Tensor slice_rows(Tape* tape, const Tensor& a, std::size_t r0, std::size_t r1);
Tensor slice_cols(Tape* tape, const Tensor& a, std::size_t c0, std::size_t c1);
Tensor concat_rows(Tape* tape, std::span<const Tensor> parts);
Tensor concat_cols(Tape* tape, std::span<const Tensor> parts);

// out[i,:] = table[ids[i],:]; scatter-add on backward.
Tensor gather_rows(Tape* tape, const Tensor& table, const std::vector<int>& ids);

// Same data, new extents (product must match); gradient passes through.
Tensor reshape(Tape* tape, const Tensor& a, std::vector<std::size_t> new_shape);

Tensor sum_all(Tape* tape, const Tensor& a);
Tensor mean_all(Tape* tape, const Tensor& a);

// Mean over all cells of -w.[t.log(sigmoid(x)) + (1-t).log(1-sigmoid(x))],
// evaluated in log-sum-exp form: max(x,0) - t*x + log1p(exp(-|x|)).
// Targets must lie in [0,1] (hard or soft). Weights may be a scalar, one
// weight per column, or elementwise. d/dx = w*(sigmoid(x)-t)/N.
Tensor bce_with_logits_mean(Tape* tape, const Tensor& logits, const Tensor& targets,
                            const Tensor& weights);

// Mean over rows of logsumexp(x_i) - x_i[target_i]; d/dx = (softmax - onehot)/n.
Tensor softmax_xent_mean(Tape* tape, const Tensor& logits, const std::vector<int>& targets);

} // namespace ckd
