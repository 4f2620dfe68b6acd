#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <vector>

#include "mplp/error.hpp"

namespace mplp {

class Tape;

namespace detail {

struct TensorImpl {
    std::vector<int64_t> shape;
    std::vector<double> data;
    std::vector<double> grad;  // allocated when requires_grad or recorded on a tape
    bool requires_grad = false;

    std::vector<std::shared_ptr<TensorImpl>> parents;
    std::function<void(TensorImpl&)> backward_fn;
    uint64_t tape_id = 0;  // 0 = not recorded

    int64_t numel() const { return static_cast<int64_t>(data.size()); }
};

}  // namespace detail

/// Dense row-major tensor of 64-bit floats with shared storage. Copies are
/// shallow; ops return fresh tensors and, while a Tape is active, record the
/// backward closure needed for reverse-mode differentiation.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(std::vector<int64_t> shape, bool requires_grad = false);
    static Tensor full(std::vector<int64_t> shape, double value, bool requires_grad = false);
    static Tensor from_data(std::vector<int64_t> shape, std::vector<double> values,
                            bool requires_grad = false);
    static Tensor scalar(double value);
    /// uniform(-limit, limit) fill from the given engine
    static Tensor uniform(std::vector<int64_t> shape, double limit, std::mt19937_64& rng,
                          bool requires_grad = false);

    bool defined() const { return impl_ != nullptr; }
    const std::vector<int64_t>& shape() const { return impl_->shape; }
    int64_t ndim() const { return static_cast<int64_t>(impl_->shape.size()); }
    int64_t dim(int i) const { return impl_->shape.at(static_cast<size_t>(i)); }
    int64_t numel() const { return impl_->numel(); }
    int64_t rows() const;  // 2-D only
    int64_t cols() const;  // 2-D only

    std::span<const double> data() const { return impl_->data; }
    std::span<double> mutable_data() { return impl_->data; }
    bool requires_grad() const { return impl_->requires_grad; }
    void set_requires_grad(bool on);
    bool has_grad() const { return !impl_->grad.empty(); }
    std::span<const double> grad() const;
    void zero_grad();

    /// Value of a one-element tensor.
    double value() const;
    double at(int64_t i) const;              // 1-D
    double at(int64_t r, int64_t c) const;   // 2-D

    bool same_shape(const Tensor& other) const { return impl_->shape == other.impl_->shape; }
    bool all_finite() const;

    detail::TensorImpl* impl() const { return impl_.get(); }
    std::shared_ptr<detail::TensorImpl> impl_ptr() const { return impl_; }

private:
    explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
    std::shared_ptr<detail::TensorImpl> impl_;

    friend Tensor make_op_result(std::vector<int64_t> shape, std::vector<double> values,
                                 std::vector<Tensor> parents,
                                 std::function<void(detail::TensorImpl&)> backward_fn);
};

/// Records operations in construction order; that order is topological, so a
/// single reverse sweep visits every node once. A tape may be consumed by
/// backward() exactly once; a second call throws ContractError.
class Tape {
public:
    Tape();
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    void backward(const Tensor& root);
    size_t node_count() const { return nodes_.size(); }
    bool consumed() const { return consumed_; }
    uint64_t id() const { return id_; }

private:
    friend Tensor make_op_result(std::vector<int64_t>, std::vector<double>, std::vector<Tensor>,
                                 std::function<void(detail::TensorImpl&)>);
    std::vector<std::shared_ptr<detail::TensorImpl>> nodes_;
    uint64_t id_;
    bool consumed_ = false;
};

/// Makes `tape` the recording target for ops on this thread.
class TapeScope {
public:
    explicit TapeScope(Tape& tape);
    ~TapeScope();
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

private:
    Tape* previous_;
};

Tape* active_tape();

// ---- elementwise and arithmetic ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
/// x: [n, d] (or [d]); bias: [d] broadcast over the leading axis
Tensor add_bias(const Tensor& x, const Tensor& bias);
Tensor gelu(const Tensor& x);
Tensor tanh_t(const Tensor& x);
Tensor sigmoid(const Tensor& x);

// ---- matrix products (2-D; vectors where stated) ----
Tensor matmul(const Tensor& a, const Tensor& b);     // [m,k]x[k,n] -> [m,n]
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // [m,k]x[n,k]^T -> [m,n]
Tensor matvec(const Tensor& a, const Tensor& x);     // [m,k]x[k] -> [m]
Tensor matvec_t(const Tensor& a, const Tensor& x);   // [m,k]^T x [m] -> [k]

// ---- shape plumbing ----
Tensor concat(const std::vector<Tensor>& parts);       // 1-D concatenation
Tensor concat_rows(const std::vector<Tensor>& parts);  // rows ([d] counts as one row)
Tensor concat_cols(const std::vector<Tensor>& parts);  // 2-D, equal row counts
Tensor slice(const Tensor& x, int64_t start, int64_t len);       // 1-D
Tensor row(const Tensor& x, int64_t r);                          // 2-D -> [cols]
Tensor slice_rows(const Tensor& x, int64_t start, int64_t len);  // 2-D
Tensor slice_cols(const Tensor& x, int64_t start, int64_t len);  // 2-D

// ---- reductions and losses ----
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

/// Softmax over the last axis. Rejects non-finite input; shift-invariant.
Tensor softmax(const Tensor& x);
/// Softmax over the last axis where mask[j] == 0 forces probability 0 exactly.
/// mask is a plain 0/1 vector of length cols (no gradient through mask).
Tensor softmax_masked(const Tensor& x, const std::vector<double>& mask);
/// Per-row masks: mask has one 0/1 entry per element of x (attention masks
/// that differ by row, e.g. causal + padding combined).
Tensor softmax_masked_rows(const Tensor& x, const std::vector<double>& mask);
/// -log softmax(logits)[gold]; logits 1-D.
Tensor cross_entropy(const Tensor& logits, int64_t gold);
/// Mean of -log softmax(row r)[targets[r]] over rows with weights[r] != 0.
Tensor sequence_cross_entropy(const Tensor& logits, const std::vector<int64_t>& targets,
                              const std::vector<double>& weights);

/// LayerNorm over the last axis with learned gain/shift.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

/// Inverted dropout. Identity when enabled is false or p == 0.
Tensor dropout(const Tensor& x, double p, std::mt19937_64& rng, bool enabled);

/// Gather rows of the embedding matrix; backward scatter-adds.
Tensor embedding(const Tensor& table, const std::vector<int64_t>& ids);

}  // namespace mplp
