#include "ckd/tensor.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace ckd {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

std::size_t shape_product(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (auto e : shape) {
        n *= e;
    }
    return n;
}

void check_positive_extents(const std::vector<std::size_t>& shape) {
    for (auto e : shape) {
        if (e == 0) {
            throw shape_error("tensor extents must be positive, got " + shape_string(shape));
        }
    }
}

std::shared_ptr<TensorImpl> make_impl(std::vector<std::size_t> shape) {
    check_positive_extents(shape);
    auto impl = std::make_shared<TensorImpl>();
    impl->value.assign(shape_product(shape), 0.0);
    impl->shape = std::move(shape);
    return impl;
}

void require_rank2(const Tensor& t, const char* who) {
    if (t.rank() != 2) {
        throw shape_error(std::string(who) + " requires a rank-2 tensor, got " +
                          shape_string(t.shape()));
    }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* who) {
    if (a.shape() != b.shape()) {
        throw shape_error(std::string(who) + ": shapes " + shape_string(a.shape()) + " and " +
                          shape_string(b.shape()) + " differ");
    }
}

// Stable logistic, clamped into the open unit interval.
double stable_sigmoid(double z) {
    double s;
    if (z >= 0.0) {
        s = 1.0 / (1.0 + std::exp(-z));
    } else {
        const double e = std::exp(z);
        s = e / (1.0 + e);
    }
    const double lo = std::numeric_limits<double>::min();
    const double hi = std::nextafter(1.0, 0.0);
    return std::min(std::max(s, lo), hi);
}

struct Rank2View {
    // n-d tensors are treated as [rows x last_extent] for row-wise ops.
    std::size_t rows;
    std::size_t cols;
};

Rank2View rowwise_view(const Tensor& t, const char* who) {
    if (t.rank() < 1) {
        throw shape_error(std::string(who) + ": tensor has no dimensions");
    }
    const std::size_t cols = t.shape().back();
    return {t.size() / cols, cols};
}

} // namespace

// ---- Tensor ----

Tensor Tensor::zeros(std::vector<std::size_t> shape, bool requires_grad) {
    auto impl = make_impl(std::move(shape));
    impl->requires_grad = requires_grad;
    return Tensor(std::move(impl));
}

Tensor Tensor::full(std::vector<std::size_t> shape, double v, bool requires_grad) {
    Tensor t = zeros(std::move(shape), requires_grad);
    std::fill(t.data().begin(), t.data().end(), v);
    return t;
}

Tensor Tensor::from_data(std::vector<std::size_t> shape, std::vector<double> data,
                         bool requires_grad) {
    check_positive_extents(shape);
    if (shape_product(shape) != data.size()) {
        throw shape_error("from_data: " + shape_string(shape) + " does not hold " +
                          std::to_string(data.size()) + " values");
    }
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = std::move(shape);
    impl->value = std::move(data);
    impl->requires_grad = requires_grad;
    return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double v, bool requires_grad) {
    return from_data({1}, {v}, requires_grad);
}

Tensor Tensor::randn(Rng& rng, std::vector<std::size_t> shape, double stddev, bool requires_grad) {
    Tensor t = zeros(std::move(shape), requires_grad);
    for (auto& x : t.data()) {
        x = rng.normal(0.0, stddev);
    }
    return t;
}

Tensor Tensor::rand_uniform(Rng& rng, std::vector<std::size_t> shape, double lo, double hi,
                            bool requires_grad) {
    Tensor t = zeros(std::move(shape), requires_grad);
    for (auto& x : t.data()) {
        x = rng.uniform(lo, hi);
    }
    return t;
}

std::size_t Tensor::rows() const {
    require_rank2(*this, "rows()");
    return impl_->shape[0];
}

std::size_t Tensor::cols() const {
    require_rank2(*this, "cols()");
    return impl_->shape[1];
}

double Tensor::item() const {
    if (size() != 1) {
        throw contract_error("item() on non-scalar tensor " + shape_string(shape()));
    }
    return impl_->value[0];
}

std::vector<double>& Tensor::grad() {
    impl_->ensure_grad();
    return impl_->grad;
}

const std::vector<double>& Tensor::grad() const {
    impl_->ensure_grad();
    return impl_->grad;
}

void Tensor::zero_grad() {
    if (!impl_->grad.empty()) {
        std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
    }
}

Tensor Tensor::clone() const {
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = impl_->shape;
    impl->value = impl_->value;
    impl->requires_grad = impl_->requires_grad;
    return Tensor(std::move(impl));
}

std::string shape_string(const std::vector<std::size_t>& shape) {
    std::ostringstream oss;
    oss << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) {
            oss << "x";
        }
        oss << shape[i];
    }
    oss << "]";
    return oss.str();
}

// ---- Tape ----

void Tape::record(std::shared_ptr<TensorImpl> out, std::function<void()> backprop) {
    nodes_.push_back({std::move(out), std::move(backprop)});
}

void Tape::clear() {
    nodes_.clear();
}

void backward(Tape& tape, const Tensor& loss) {
    if (loss.size() != 1) {
        throw contract_error("backward: loss must be scalar, got " + shape_string(loss.shape()));
    }
    std::size_t start = tape.nodes_.size();
    for (std::size_t i = tape.nodes_.size(); i-- > 0;) {
        if (tape.nodes_[i].out == loss.impl()) {
            start = i;
            break;
        }
    }
    if (start == tape.nodes_.size()) {
        throw contract_error("backward: loss tensor was not produced on this tape");
    }
    loss.impl()->ensure_grad();
    loss.impl()->grad[0] = 1.0;
    for (std::size_t i = start + 1; i-- > 0;) {
        tape.nodes_[i].backprop();
    }
}

// ---- ops ----

Tensor matmul(Tape* tape, const Tensor& a, const Tensor& b) {
    require_rank2(a, "matmul");
    require_rank2(b, "matmul");
    const std::size_t m = a.rows(), k = a.cols(), k2 = b.rows(), n = b.cols();
    if (k != k2) {
        throw shape_error("matmul: inner dimensions disagree, " + shape_string(a.shape()) +
                          " vs " + shape_string(b.shape()));
    }
    Tensor out = Tensor::zeros({m, n});
    {
        ConstMatMap am(a.data().data(), m, k);
        ConstMatMap bm(b.data().data(), k, n);
        MatMap om(out.data().data(), m, n);
        om.noalias() = am * bm;
    }
    if (tape) {
        auto ai = a.impl(), bi = b.impl(), oi = out.impl();
        tape->record(oi, [ai, bi, oi, m, k, n]() {
            if (oi->grad.empty()) {
                return;
            }
            ConstMatMap g(oi->grad.data(), m, n);
            ai->ensure_grad();
            bi->ensure_grad();
            MatMap da(ai->grad.data(), m, k);
            MatMap db(bi->grad.data(), k, n);
            ConstMatMap av(ai->value.data(), m, k);
            ConstMatMap bv(bi->value.data(), k, n);
            da.noalias() += g * bv.transpose();
            db.noalias() += av.transpose() * g;
        });
    }
    return out;
}

Tensor transpose(Tape* tape, const Tensor& a) {
    require_rank2(a, "transpose");
    const std::size_t m = a.rows(), n = a.cols();
    Tensor out = Tensor::zeros({n, m});
    {
        ConstMatMap am(a.data().data(), m, n);
        MatMap om(out.data().data(), n, m);
        om.noalias() = am.transpose();
    }
    if (tape) {
        auto ai = a.impl(), oi = out.impl();
        tape->record(oi, [ai, oi, m, n]() {
            if (oi->grad.empty()) {
                return;
            }
            ai->ensure_grad();
            ConstMatMap g(oi->grad.data(), n, m);
            MatMap da(ai->grad.data(), m, n);
            da.noalias() += g.transpose();
        });
    }
    return out;
}

Tensor add(Tape* tape, const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    Tensor out = Tensor::zeros(a.shape());
    const std::size_t n = a.size();
    for (std::size_t i = 0; i < n; ++i) {
        out.data()[i] = a.data()[i] + b.data()[i];
    }
    if (tape) {
        auto ai = a.impl(), bi = b.impl(), oi = out.impl();
        tape->record(oi, [ai, bi, oi]() {
            if (oi->grad.empty()) {
                return;
            }
            ai->ensure_grad();
            bi->ensure_grad();
            for (std::size_t i = 0; i < oi->grad.size(); ++i) {
                ai->grad[i] += oi->grad[i];
                bi->grad[i] += oi->grad[i];
            }
        });
    }
    return out;
}

Tensor sub(Tape* tape, const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    Tensor out = Tensor::zeros(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) {
        out.data()[i] = a.data()[i] - b.data()[i];
    }
    if (tape) {
        auto ai = a.impl(), bi = b.impl(), oi = out.impl();
        tape->record(oi, [ai, bi, oi]() {
            if (oi->grad.empty()) {
                return;
            }
            ai->ensure_grad();
            bi->ensure_grad();
            for (std::size_t i = 0; i < oi->grad.size(); ++i) {
                ai->grad[i] += oi->grad[i];
                bi->grad[i] -= oi->grad[i];
            }
        });
    }
    return out;
}

Tensor mul(Tape* tape, const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    Tensor out = Tensor::zeros(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) {
        out.data()[i] = a.data()[i] * b.data()[i];
    }
    if (tape) {
        auto ai = a.impl(), bi = b.impl(), oi = out.impl();
        tape->record(oi, [ai, bi, oi]() {
            if (oi->grad.empty()) {
                return;
            }
            ai->ensure_grad();
            bi->ensure_grad();
            for (std::size_t i = 0; i < oi->grad.size(); ++i) {
                ai->grad[i] += oi->grad[i] * bi->value[i];
                bi->grad[i] += oi->grad[i] * ai->value[i];
            }
        });
    }
    return out;
}

Tensor scale(Tape* tape, const Tensor& a, double c) {
    Tensor out = Tensor::zeros(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) {
        out.data()[i] = a.data()[i] * c;
    }
    if (tape) {
        auto ai = a.impl(), oi = out.impl();
        tape->record(oi, [ai, oi, c]() {
            if (oi->grad.empty()) {
                return;
            }
            ai->ensure_grad();
            for (std::size_t i = 0; i < oi->grad.size(); ++i) {
                ai->grad[i] += c * oi->grad[i];
            }
        });
    }
    return out;
}

Tensor add_rowvec(Tape* tape, const Tensor& x, const Tensor& v) {
    const Rank2View view = rowwise_view(x, "add_rowvec");
    if (v.size() != view.cols) {
        throw shape_error("add_rowvec: vector " + shape_string(v.shape()) +
                          " does not match row width " + std::to_string(view.cols));
    }
    Tensor out = Tensor::zeros(x.shape());
    for (std::size_t r = 0; r < view.rows; ++r) {
        for (std::size_t c = 0; c < view.cols; ++c) {
            out.data()[r * view.cols + c] = x.data()[r * view.cols + c] + v.data()[c];
        }
    }
    if (tape) {
        auto xi = x.impl(), vi = v.impl(), oi = out.impl();
        tape->record(oi, [xi, vi, oi, view]() {
            if (oi->grad.empty()) {
                return;
            }
            xi->ensure_grad();
            vi->ensure_grad();
            for (std::size_t r = 0; r < view.rows; ++r) {
                for (std::size_t c = 0; c < view.cols; ++c) {
                    const double g = oi->grad[r * view.cols + c];
                    xi->grad[r * view.cols + c] += g;
                    vi->grad[c] += g;
                }
            }
        });
    }
    return out;
}

Tensor sigmoid(Tape* tape, const Tensor& a) {
    Tensor out = Tensor::zeros(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) {
        out.data()[i] = stable_sigmoid(a.data()[i]);
    }
    if (tape) {
        auto ai = a.impl(), oi = out.impl();
        tape->record(oi, [ai, oi]() {
            if (oi->grad.empty()) {
                return;
            }
            ai->ensure_grad();
            for (std::size_t i = 0; i < oi->grad.size(); ++i) {
                const double s = oi->value[i];
                ai->grad[i] += oi->grad[i] * s * (1.0 - s);
            }
        });
    }
    return out;
}

Tensor relu(Tape* tape, const Tensor& a) {
    Tensor out = Tensor::zeros(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) {
        out.data()[i] = a.data()[i] > 0.0 ? a.data()[i] : 0.0;
    }
    if (tape) {
        auto ai = a.impl(), oi = out.impl();
        tape->record(oi, [ai, oi]() {
            if (oi->grad.empty()) {
                return;
            }
            ai->ensure_grad();
            for (std::size_t i = 0; i < oi->grad.size(); ++i) {
                if (ai->value[i] > 0.0) {
                    ai->grad[i] += oi->grad[i];
                }
            }
        });
    }
    return out;
}

Tensor softmax_rows(Tape* tape, const Tensor& a) {
    const Rank2View view = rowwise_view(a, "softmax_rows");
    Tensor out = Tensor::zeros(a.shape());
    for (std::size_t r = 0; r < view.rows; ++r) {
        const double* in = a.data().data() + r * view.cols;
        double* o = out.data().data() + r * view.cols;
        double mx = in[0];
        for (std::size_t c = 1; c < view.cols; ++c) {
            mx = std::max(mx, in[c]);
        }
        double sum = 0.0;
        for (std::size_t c = 0; c < view.cols; ++c) {
            o[c] = std::exp(in[c] - mx);
            sum += o[c];
        }
        for (std::size_t c = 0; c < view.cols; ++c) {
            o[c] /= sum;
        }
    }
    if (tape) {
        auto ai = a.impl(), oi = out.impl();
        tape->record(oi, [ai, oi, view]() {
            if (oi->grad.empty()) {
                return;
            }
            ai->ensure_grad();
            for (std::size_t r = 0; r < view.rows; ++r) {
                const double* y = oi->value.data() + r * view.cols;
                const double* g = oi->grad.data() + r * view.cols;
                double* dx = ai->grad.data() + r * view.cols;
                double dot = 0.0;
                for (std::size_t c = 0; c < view.cols; ++c) {
                    dot += g[c] * y[c];
                }
                for (std::size_t c = 0; c < view.cols; ++c) {
                    dx[c] += y[c] * (g[c] - dot);
                }
            }
        });
    }
    return out;
}

Tensor layer_norm(Tape* tape, const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps) {
    const Rank2View view = rowwise_view(x, "layer_norm");
    if (gain.size() != view.cols || bias.size() != view.cols) {
        throw shape_error("layer_norm: gain " + shape_string(gain.shape()) + " / bias " +
                          shape_string(bias.shape()) + " must match row width " +
                          std::to_string(view.cols));
    }
    Tensor out = Tensor::zeros(x.shape());
    // Per-row inverse stddev, cached for backward.
    auto inv_std = std::make_shared<std::vector<double>>(view.rows);
    auto normalized = std::make_shared<std::vector<double>>(x.size());
    for (std::size_t r = 0; r < view.rows; ++r) {
        const double* in = x.data().data() + r * view.cols;
        double mean = 0.0;
        for (std::size_t c = 0; c < view.cols; ++c) {
            mean += in[c];
        }
        mean /= static_cast<double>(view.cols);
        double var = 0.0;
        for (std::size_t c = 0; c < view.cols; ++c) {
            const double d = in[c] - mean;
            var += d * d;
        }
        var /= static_cast<double>(view.cols);
        const double inv = 1.0 / std::sqrt(var + eps);
        (*inv_std)[r] = inv;
        for (std::size_t c = 0; c < view.cols; ++c) {
            const double xn = (in[c] - mean) * inv;
            (*normalized)[r * view.cols + c] = xn;
            out.data()[r * view.cols + c] = gain.data()[c] * xn + bias.data()[c];
        }
    }
    if (tape) {
        auto xi = x.impl(), gi = gain.impl(), bi = bias.impl(), oi = out.impl();
        tape->record(oi, [xi, gi, bi, oi, view, inv_std, normalized]() {
            if (oi->grad.empty()) {
                return;
            }
            xi->ensure_grad();
            gi->ensure_grad();
            bi->ensure_grad();
            const double n = static_cast<double>(view.cols);
            for (std::size_t r = 0; r < view.rows; ++r) {
                const double* g = oi->grad.data() + r * view.cols;
                const double* xn = normalized->data() + r * view.cols;
                const double inv = (*inv_std)[r];
                double mean_dxn = 0.0;
                double mean_dxn_xn = 0.0;
                for (std::size_t c = 0; c < view.cols; ++c) {
                    const double dxn = g[c] * gi->value[c];
                    mean_dxn += dxn;
                    mean_dxn_xn += dxn * xn[c];
                    gi->grad[c] += g[c] * xn[c];
                    bi->grad[c] += g[c];
                }
                mean_dxn /= n;
                mean_dxn_xn /= n;
                double* dx = xi->grad.data() + r * view.cols;
                for (std::size_t c = 0; c < view.cols; ++c) {
                    const double dxn = g[c] * gi->value[c];
                    dx[c] += inv * (dxn - mean_dxn - xn[c] * mean_dxn_xn);
                }
            }
        });
    }
    return out;
}

Tensor slice_block(Tape* tape, const Tensor& a, std::size_t r0, std::size_t r1, std::size_t c0,
                   std::size_t c1) {
    require_rank2(a, "slice_block");
    const std::size_t rows = a.rows(), cols = a.cols();
    if (r0 >= r1 || r1 > rows || c0 >= c1 || c1 > cols) {
        throw shape_error("slice_block: bounds [" + std::to_string(r0) + "," + std::to_string(r1) +
                          ")x[" + std::to_string(c0) + "," + std::to_string(c1) +
                          ") out of range for " + shape_string(a.shape()));
    }
    const std::size_t out_rows = r1 - r0, out_cols = c1 - c0;
    Tensor out = Tensor::zeros({out_rows, out_cols});
    for (std::size_t r = 0; r < out_rows; ++r) {
        const double* src = a.data().data() + (r0 + r) * cols + c0;
        std::copy(src, src + out_cols, out.data().data() + r * out_cols);
    }
    if (tape) {
        auto ai = a.impl(), oi = out.impl();
        tape->record(oi, [ai, oi, r0, c0, cols, out_rows, out_cols]() {
            if (oi->grad.empty()) {
                return;
            }
            ai->ensure_grad();
            for (std::size_t r = 0; r < out_rows; ++r) {
                double* dst = ai->grad.data() + (r0 + r) * cols + c0;
                const double* g = oi->grad.data() + r * out_cols;
                for (std::size_t c = 0; c < out_cols; ++c) {
                    dst[c] += g[c];
                }
            }
        });
    }
    return out;
}

Tensor slice_rows(Tape* tape, const Tensor& a, std::size_t r0, std::size_t r1) {
    return slice_block(tape, a, r0, r1, 0, a.cols());
}

Tensor slice_cols(Tape* tape, const Tensor& a, std::size_t c0, std::size_t c1) {
    return slice_block(tape, a, 0, a.rows(), c0, c1);
}

Tensor concat_rows(Tape* tape, std::span<const Tensor> parts) {
    if (parts.empty()) {
        throw contract_error("concat_rows: no parts");
    }
    const std::size_t cols = parts[0].cols();
    std::size_t rows = 0;
    for (const auto& p : parts) {
        if (p.cols() != cols) {
            throw shape_error("concat_rows: column widths differ, " +
                              shape_string(parts[0].shape()) + " vs " + shape_string(p.shape()));
        }
        rows += p.rows();
    }
    Tensor out = Tensor::zeros({rows, cols});
    std::size_t offset = 0;
    std::vector<std::shared_ptr<TensorImpl>> impls;
    std::vector<std::size_t> offsets;
    for (const auto& p : parts) {
        std::copy(p.data().begin(), p.data().end(), out.data().begin() + offset * cols);
        impls.push_back(p.impl());
        offsets.push_back(offset);
        offset += p.rows();
    }
    if (tape) {
        auto oi = out.impl();
        tape->record(oi, [impls, offsets, oi, cols]() {
            if (oi->grad.empty()) {
                return;
            }
            for (std::size_t i = 0; i < impls.size(); ++i) {
                auto& part = impls[i];
                part->ensure_grad();
                const double* g = oi->grad.data() + offsets[i] * cols;
                for (std::size_t j = 0; j < part->grad.size(); ++j) {
                    part->grad[j] += g[j];
                }
            }
        });
    }
    return out;
}

Tensor concat_cols(Tape* tape, std::span<const Tensor> parts) {
    if (parts.empty()) {
        throw contract_error("concat_cols: no parts");
    }
    const std::size_t rows = parts[0].rows();
    std::size_t cols = 0;
    for (const auto& p : parts) {
        if (p.rows() != rows) {
            throw shape_error("concat_cols: row counts differ, " +
                              shape_string(parts[0].shape()) + " vs " + shape_string(p.shape()));
        }
        cols += p.cols();
    }
    Tensor out = Tensor::zeros({rows, cols});
    std::vector<std::shared_ptr<TensorImpl>> impls;
    std::vector<std::size_t> offsets;
    std::size_t offset = 0;
    for (const auto& p : parts) {
        const std::size_t pc = p.cols();
        for (std::size_t r = 0; r < rows; ++r) {
            std::copy(p.data().begin() + r * pc, p.data().begin() + (r + 1) * pc,
                      out.data().begin() + r * cols + offset);
        }
        impls.push_back(p.impl());
        offsets.push_back(offset);
        offset += pc;
    }
    if (tape) {
        auto oi = out.impl();
        tape->record(oi, [impls, offsets, oi, rows, cols]() {
            if (oi->grad.empty()) {
                return;
            }
            for (std::size_t i = 0; i < impls.size(); ++i) {
                auto& part = impls[i];
                part->ensure_grad();
                const std::size_t pc = part->shape[1];
                for (std::size_t r = 0; r < rows; ++r) {
                    const double* g = oi->grad.data() + r * cols + offsets[i];
                    double* dst = part->grad.data() + r * pc;
                    for (std::size_t c = 0; c < pc; ++c) {
                        dst[c] += g[c];
                    }
                }
            }
        });
    }
    return out;
}

Tensor gather_rows(Tape* tape, const Tensor& table, const std::vector<int>& ids) {
    require_rank2(table, "gather_rows");
    const std::size_t v = table.rows(), d = table.cols();
    if (ids.empty()) {
        throw contract_error("gather_rows: empty id list");
    }
    for (int id : ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= v) {
            throw contract_error("gather_rows: id " + std::to_string(id) +
                                 " outside table rows " + std::to_string(v));
        }
    }
    Tensor out = Tensor::zeros({ids.size(), d});
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const double* src = table.data().data() + static_cast<std::size_t>(ids[i]) * d;
        std::copy(src, src + d, out.data().data() + i * d);
    }
    if (tape) {
        auto ti = table.impl(), oi = out.impl();
        auto id_copy = std::make_shared<std::vector<int>>(ids);
        tape->record(oi, [ti, oi, id_copy, d]() {
            if (oi->grad.empty()) {
                return;
            }
            ti->ensure_grad();
            for (std::size_t i = 0; i < id_copy->size(); ++i) {
                double* dst = ti->grad.data() + static_cast<std::size_t>((*id_copy)[i]) * d;
                const double* g = oi->grad.data() + i * d;
                for (std::size_t c = 0; c < d; ++c) {
                    dst[c] += g[c];
                }
            }
        });
    }
    return out;
}

Tensor reshape(Tape* tape, const Tensor& a, std::vector<std::size_t> new_shape) {
    check_positive_extents(new_shape);
    if (shape_product(new_shape) != a.size()) {
        throw shape_error("reshape: " + shape_string(a.shape()) + " cannot become " +
                          shape_string(new_shape));
    }
    Tensor out = Tensor::from_data(std::move(new_shape), a.data());
    if (tape) {
        auto ai = a.impl(), oi = out.impl();
        tape->record(oi, [ai, oi]() {
            if (oi->grad.empty()) {
                return;
            }
            ai->ensure_grad();
            for (std::size_t i = 0; i < oi->grad.size(); ++i) {
                ai->grad[i] += oi->grad[i];
            }
        });
    }
    return out;
}

Tensor sum_all(Tape* tape, const Tensor& a) {
    double s = 0.0;
    for (double x : a.data()) {
        s += x;
    }
    Tensor out = Tensor::scalar(s);
    if (tape) {
        auto ai = a.impl(), oi = out.impl();
        tape->record(oi, [ai, oi]() {
            if (oi->grad.empty()) {
                return;
            }
            ai->ensure_grad();
            const double g = oi->grad[0];
            for (auto& d : ai->grad) {
                d += g;
            }
        });
    }
    return out;
}

Tensor mean_all(Tape* tape, const Tensor& a) {
    double s = 0.0;
    for (double x : a.data()) {
        s += x;
    }
    const double n = static_cast<double>(a.size());
    Tensor out = Tensor::scalar(s / n);
    if (tape) {
        auto ai = a.impl(), oi = out.impl();
        tape->record(oi, [ai, oi, n]() {
            if (oi->grad.empty()) {
                return;
            }
            ai->ensure_grad();
            const double g = oi->grad[0] / n;
            for (auto& d : ai->grad) {
                d += g;
            }
        });
    }
    return out;
}

Tensor bce_with_logits_mean(Tape* tape, const Tensor& logits, const Tensor& targets,
                            const Tensor& weights) {
    require_same_shape(logits, targets, "bce_with_logits");
    const std::size_t n = logits.size();
    const Rank2View view = rowwise_view(logits, "bce_with_logits");
    const std::size_t wn = weights.size();
    if (wn != 1 && wn != view.cols && wn != n) {
        throw shape_error("bce_with_logits: weights " + shape_string(weights.shape()) +
                          " must be scalar, per-column, or elementwise for logits " +
                          shape_string(logits.shape()));
    }
    for (double t : targets.data()) {
        if (!(t >= 0.0 && t <= 1.0)) {
            throw contract_error("bce_with_logits: target " + std::to_string(t) +
                                 " outside [0,1]");
        }
    }
    auto weight_at = [&](std::size_t i) {
        if (wn == 1) {
            return weights.data()[0];
        }
        if (wn == view.cols) {
            return weights.data()[i % view.cols];
        }
        return weights.data()[i];
    };
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double x = logits.data()[i];
        const double t = targets.data()[i];
        const double cell = std::max(x, 0.0) - x * t + std::log1p(std::exp(-std::abs(x)));
        total += weight_at(i) * cell;
    }
    Tensor out = Tensor::scalar(total / static_cast<double>(n));
    if (tape) {
        auto xi = logits.impl(), ti = targets.impl(), wi = weights.impl(), oi = out.impl();
        tape->record(oi, [xi, ti, wi, oi, n, wn, view]() {
            if (oi->grad.empty()) {
                return;
            }
            xi->ensure_grad();
            const double g = oi->grad[0] / static_cast<double>(n);
            for (std::size_t i = 0; i < n; ++i) {
                double w;
                if (wn == 1) {
                    w = wi->value[0];
                } else if (wn == view.cols) {
                    w = wi->value[i % view.cols];
                } else {
                    w = wi->value[i];
                }
                xi->grad[i] += g * w * (stable_sigmoid(xi->value[i]) - ti->value[i]);
            }
        });
    }
    return out;
}

Tensor softmax_xent_mean(Tape* tape, const Tensor& logits, const std::vector<int>& targets) {
    require_rank2(logits, "softmax_xent");
    const std::size_t n = logits.rows(), c = logits.cols();
    if (targets.size() != n) {
        throw shape_error("softmax_xent: " + std::to_string(targets.size()) + " targets for " +
                          std::to_string(n) + " rows");
    }
    for (int t : targets) {
        if (t < 0 || static_cast<std::size_t>(t) >= c) {
            throw contract_error("softmax_xent: target class " + std::to_string(t) +
                                 " outside [0," + std::to_string(c) + ")");
        }
    }
    double total = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
        const double* x = logits.data().data() + r * c;
        double mx = x[0];
        for (std::size_t j = 1; j < c; ++j) {
            mx = std::max(mx, x[j]);
        }
        double sum = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            sum += std::exp(x[j] - mx);
        }
        total += mx + std::log(sum) - x[targets[r]];
    }
    Tensor out = Tensor::scalar(total / static_cast<double>(n));
    if (tape) {
        auto xi = logits.impl(), oi = out.impl();
        auto tcopy = std::make_shared<std::vector<int>>(targets);
        tape->record(oi, [xi, oi, tcopy, n, c]() {
            if (oi->grad.empty()) {
                return;
            }
            xi->ensure_grad();
            const double g = oi->grad[0] / static_cast<double>(n);
            for (std::size_t r = 0; r < n; ++r) {
                const double* x = xi->value.data() + r * c;
                double mx = x[0];
                for (std::size_t j = 1; j < c; ++j) {
                    mx = std::max(mx, x[j]);
                }
                double sum = 0.0;
                for (std::size_t j = 0; j < c; ++j) {
                    sum += std::exp(x[j] - mx);
                }
                double* dx = xi->grad.data() + r * c;
                for (std::size_t j = 0; j < c; ++j) {
                    const double p = std::exp(x[j] - mx) / sum;
                    dx[j] += g * (p - (static_cast<std::size_t>((*tcopy)[r]) == j ? 1.0 : 0.0));
                }
            }
        });
    }
    return out;
}

} // namespace ckd
