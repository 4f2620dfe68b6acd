#include "mplp/tensor.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>

namespace mplp {

namespace {

using detail::TensorImpl;

thread_local Tape* g_active_tape = nullptr;

int64_t shape_numel(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (int64_t d : shape) {
        if (d <= 0) throw ContractError("tensor dimensions must be positive");
        n *= d;
    }
    return n;
}

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;
using MapVec = Eigen::Map<Eigen::VectorXd>;
using CMapVec = Eigen::Map<const Eigen::VectorXd>;

CMapMat as_mat(const TensorImpl& t) {
    return CMapMat(t.data.data(), t.shape[0], t.shape[1]);
}

void require_finite(const Tensor& t, const char* op) {
    if (!t.all_finite()) throw NumericError(std::string(op) + ": non-finite input");
}

void require_2d(const Tensor& t, const char* op) {
    if (t.ndim() != 2) throw ContractError(std::string(op) + ": expected a 2-D tensor");
}

std::vector<double>* parent_grad(TensorImpl& self, size_t i) {
    auto& p = self.parents[i];
    return p->grad.empty() ? nullptr : &p->grad;
}

// Softmax of one contiguous row, written into out. Entries where mask (if
// given) is zero get probability exactly zero.
void softmax_row(const double* x, double* out, int64_t n, const double* mask) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int64_t j = 0; j < n; ++j)
        if (!mask || mask[j] != 0.0) mx = std::max(mx, x[j]);
    if (!std::isfinite(mx)) throw ContractError("softmax: no unmasked entries");
    double denom = 0.0;
    for (int64_t j = 0; j < n; ++j) {
        if (mask && mask[j] == 0.0) {
            out[j] = 0.0;
        } else {
            out[j] = std::exp(x[j] - mx);
            denom += out[j];
        }
    }
    for (int64_t j = 0; j < n; ++j) out[j] /= denom;
}

double logsumexp(const double* x, int64_t n) {
    double mx = *std::max_element(x, x + n);
    double s = 0.0;
    for (int64_t j = 0; j < n; ++j) s += std::exp(x[j] - mx);
    return mx + std::log(s);
}

}  // namespace

// Shared by all ops: materialize the result and, when a tape is active,
// record parents and the backward closure.
Tensor make_op_result(std::vector<int64_t> shape, std::vector<double> values,
                      std::vector<Tensor> parents,
                      std::function<void(TensorImpl&)> backward_fn) {
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = std::move(shape);
    impl->data = std::move(values);
    if (g_active_tape != nullptr) {
        impl->grad.assign(impl->data.size(), 0.0);
        impl->parents.reserve(parents.size());
        for (auto& p : parents) impl->parents.push_back(p.impl_ptr());
        impl->backward_fn = std::move(backward_fn);
        impl->tape_id = g_active_tape->id();
        g_active_tape->nodes_.push_back(impl);
    }
    return Tensor(std::move(impl));
}

// ---- Tensor basics ----

Tensor Tensor::zeros(std::vector<int64_t> shape, bool requires_grad) {
    return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(std::vector<int64_t> shape, double value, bool requires_grad) {
    int64_t n = shape_numel(shape);
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = std::move(shape);
    impl->data.assign(static_cast<size_t>(n), value);
    Tensor t(std::move(impl));
    if (requires_grad) t.set_requires_grad(true);
    return t;
}

Tensor Tensor::from_data(std::vector<int64_t> shape, std::vector<double> values,
                         bool requires_grad) {
    if (shape_numel(shape) != static_cast<int64_t>(values.size()))
        throw ContractError("from_data: shape does not match value count");
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = std::move(shape);
    impl->data = std::move(values);
    Tensor t(std::move(impl));
    if (requires_grad) t.set_requires_grad(true);
    return t;
}

Tensor Tensor::scalar(double value) { return from_data({1}, {value}); }

Tensor Tensor::uniform(std::vector<int64_t> shape, double limit, std::mt19937_64& rng,
                       bool requires_grad) {
    int64_t n = shape_numel(shape);
    std::uniform_real_distribution<double> dist(-limit, limit);
    std::vector<double> values(static_cast<size_t>(n));
    for (auto& v : values) v = dist(rng);
    return from_data(std::move(shape), std::move(values), requires_grad);
}

int64_t Tensor::rows() const {
    if (ndim() != 2) throw ContractError("rows(): tensor is not 2-D");
    return impl_->shape[0];
}

int64_t Tensor::cols() const {
    if (ndim() != 2) throw ContractError("cols(): tensor is not 2-D");
    return impl_->shape[1];
}

void Tensor::set_requires_grad(bool on) {
    impl_->requires_grad = on;
    if (on && impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
    if (!on) impl_->grad.clear();
}

std::span<const double> Tensor::grad() const {
    if (impl_->grad.empty()) throw ContractError("grad(): no gradient buffer on this tensor");
    return impl_->grad;
}

void Tensor::zero_grad() {
    std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

double Tensor::value() const {
    if (numel() != 1) throw ContractError("value(): tensor is not a scalar");
    return impl_->data[0];
}

double Tensor::at(int64_t i) const {
    if (ndim() != 1) throw ContractError("at(i): tensor is not 1-D");
    return impl_->data.at(static_cast<size_t>(i));
}

double Tensor::at(int64_t r, int64_t c) const {
    if (ndim() != 2) throw ContractError("at(r,c): tensor is not 2-D");
    return impl_->data.at(static_cast<size_t>(r * impl_->shape[1] + c));
}

bool Tensor::all_finite() const {
    for (double v : impl_->data)
        if (!std::isfinite(v)) return false;
    return true;
}

// ---- Tape ----

namespace {
uint64_t next_tape_id() {
    static std::atomic<uint64_t> counter{1};
    return counter.fetch_add(1);
}
}  // namespace

Tape::Tape() : id_(next_tape_id()) {}

void Tape::backward(const Tensor& root) {
    if (consumed_)
        throw ContractError("backward: tape already consumed; build a fresh tape per step");
    if (!root.defined() || root.impl()->tape_id != id_)
        throw ContractError("backward: root was not produced on this tape");
    if (root.numel() != 1) throw ContractError("backward: root must be a scalar");
    consumed_ = true;
    root.impl()->grad.assign(1, 1.0);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        TensorImpl& node = **it;
        if (node.backward_fn) node.backward_fn(node);
    }
}

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }

TapeScope::~TapeScope() { g_active_tape = previous_; }

Tape* active_tape() { return g_active_tape; }

// ---- elementwise ----

Tensor add(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw ContractError("add: shape mismatch");
    std::vector<double> out(a.data().begin(), a.data().end());
    for (int64_t i = 0; i < a.numel(); ++i) out[static_cast<size_t>(i)] += b.data()[i];
    return make_op_result(a.shape(), std::move(out), {a, b}, [](TensorImpl& self) {
        for (size_t p = 0; p < 2; ++p)
            if (auto* g = parent_grad(self, p))
                for (size_t i = 0; i < self.grad.size(); ++i) (*g)[i] += self.grad[i];
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw ContractError("sub: shape mismatch");
    std::vector<double> out(a.data().begin(), a.data().end());
    for (int64_t i = 0; i < a.numel(); ++i) out[static_cast<size_t>(i)] -= b.data()[i];
    return make_op_result(a.shape(), std::move(out), {a, b}, [](TensorImpl& self) {
        if (auto* g = parent_grad(self, 0))
            for (size_t i = 0; i < self.grad.size(); ++i) (*g)[i] += self.grad[i];
        if (auto* g = parent_grad(self, 1))
            for (size_t i = 0; i < self.grad.size(); ++i) (*g)[i] -= self.grad[i];
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw ContractError("mul: shape mismatch");
    std::vector<double> out(static_cast<size_t>(a.numel()));
    for (int64_t i = 0; i < a.numel(); ++i) out[static_cast<size_t>(i)] = a.data()[i] * b.data()[i];
    return make_op_result(a.shape(), std::move(out), {a, b}, [](TensorImpl& self) {
        const auto& av = self.parents[0]->data;
        const auto& bv = self.parents[1]->data;
        if (auto* g = parent_grad(self, 0))
            for (size_t i = 0; i < self.grad.size(); ++i) (*g)[i] += self.grad[i] * bv[i];
        if (auto* g = parent_grad(self, 1))
            for (size_t i = 0; i < self.grad.size(); ++i) (*g)[i] += self.grad[i] * av[i];
    });
}

Tensor scale(const Tensor& a, double c) {
    std::vector<double> out(static_cast<size_t>(a.numel()));
    for (int64_t i = 0; i < a.numel(); ++i) out[static_cast<size_t>(i)] = a.data()[i] * c;
    return make_op_result(a.shape(), std::move(out), {a}, [c](TensorImpl& self) {
        if (auto* g = parent_grad(self, 0))
            for (size_t i = 0; i < self.grad.size(); ++i) (*g)[i] += self.grad[i] * c;
    });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
    if (bias.ndim() != 1) throw ContractError("add_bias: bias must be 1-D");
    int64_t d = bias.numel();
    if (x.ndim() == 1) {
        if (x.numel() != d) throw ContractError("add_bias: width mismatch");
        return add(x, bias);
    }
    require_2d(x, "add_bias");
    if (x.cols() != d) throw ContractError("add_bias: width mismatch");
    std::vector<double> out(x.data().begin(), x.data().end());
    for (int64_t r = 0; r < x.rows(); ++r)
        for (int64_t c = 0; c < d; ++c) out[static_cast<size_t>(r * d + c)] += bias.data()[c];
    return make_op_result(x.shape(), std::move(out), {x, bias}, [d](TensorImpl& self) {
        int64_t n = self.shape[0];
        if (auto* g = parent_grad(self, 0))
            for (size_t i = 0; i < self.grad.size(); ++i) (*g)[i] += self.grad[i];
        if (auto* g = parent_grad(self, 1))
            for (int64_t r = 0; r < n; ++r)
                for (int64_t c = 0; c < d; ++c)
                    (*g)[static_cast<size_t>(c)] += self.grad[static_cast<size_t>(r * d + c)];
    });
}

namespace {
constexpr double kGeluScale = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluCubic = 0.044715;
}  // namespace

Tensor gelu(const Tensor& x) {
    require_finite(x, "gelu");
    std::vector<double> out(static_cast<size_t>(x.numel()));
    for (int64_t i = 0; i < x.numel(); ++i) {
        double v = x.data()[i];
        double u = kGeluScale * (v + kGeluCubic * v * v * v);
        out[static_cast<size_t>(i)] = 0.5 * v * (1.0 + std::tanh(u));
    }
    return make_op_result(x.shape(), std::move(out), {x}, [](TensorImpl& self) {
        auto* g = parent_grad(self, 0);
        if (!g) return;
        const auto& xv = self.parents[0]->data;
        for (size_t i = 0; i < self.grad.size(); ++i) {
            double v = xv[i];
            double u = kGeluScale * (v + kGeluCubic * v * v * v);
            double t = std::tanh(u);
            double du = kGeluScale * (1.0 + 3.0 * kGeluCubic * v * v);
            double dydx = 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du;
            (*g)[i] += self.grad[i] * dydx;
        }
    });
}

Tensor tanh_t(const Tensor& x) {
    require_finite(x, "tanh");
    std::vector<double> out(static_cast<size_t>(x.numel()));
    for (int64_t i = 0; i < x.numel(); ++i) out[static_cast<size_t>(i)] = std::tanh(x.data()[i]);
    return make_op_result(x.shape(), std::move(out), {x}, [](TensorImpl& self) {
        auto* g = parent_grad(self, 0);
        if (!g) return;
        for (size_t i = 0; i < self.grad.size(); ++i) {
            double y = self.data[i];
            (*g)[i] += self.grad[i] * (1.0 - y * y);
        }
    });
}

Tensor sigmoid(const Tensor& x) {
    require_finite(x, "sigmoid");
    std::vector<double> out(static_cast<size_t>(x.numel()));
    for (int64_t i = 0; i < x.numel(); ++i)
        out[static_cast<size_t>(i)] = 1.0 / (1.0 + std::exp(-x.data()[i]));
    return make_op_result(x.shape(), std::move(out), {x}, [](TensorImpl& self) {
        auto* g = parent_grad(self, 0);
        if (!g) return;
        for (size_t i = 0; i < self.grad.size(); ++i) {
            double y = self.data[i];
            (*g)[i] += self.grad[i] * y * (1.0 - y);
        }
    });
}

// ---- matrix products ----

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_2d(a, "matmul");
    require_2d(b, "matmul");
    if (a.cols() != b.rows()) throw ContractError("matmul: inner dimension mismatch");
    int64_t m = a.rows(), k = a.cols(), n = b.cols();
    std::vector<double> out(static_cast<size_t>(m * n));
    MapMat(out.data(), m, n) = as_mat(*a.impl()) * as_mat(*b.impl());
    return make_op_result({m, n}, std::move(out), {a, b}, [m, k, n](TensorImpl& self) {
        CMapMat g(self.grad.data(), m, n);
        if (auto* ga = parent_grad(self, 0))
            MapMat(ga->data(), m, k) += g * as_mat(*self.parents[1]).transpose();
        if (auto* gb = parent_grad(self, 1))
            MapMat(gb->data(), k, n) += as_mat(*self.parents[0]).transpose() * g;
    });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    require_2d(a, "matmul_nt");
    require_2d(b, "matmul_nt");
    if (a.cols() != b.cols()) throw ContractError("matmul_nt: inner dimension mismatch");
    int64_t m = a.rows(), k = a.cols(), n = b.rows();
    std::vector<double> out(static_cast<size_t>(m * n));
    MapMat(out.data(), m, n) = as_mat(*a.impl()) * as_mat(*b.impl()).transpose();
    return make_op_result({m, n}, std::move(out), {a, b}, [m, k, n](TensorImpl& self) {
        CMapMat g(self.grad.data(), m, n);
        if (auto* ga = parent_grad(self, 0))
            MapMat(ga->data(), m, k) += g * as_mat(*self.parents[1]);
        if (auto* gb = parent_grad(self, 1))
            MapMat(gb->data(), n, k) += g.transpose() * as_mat(*self.parents[0]);
    });
}

Tensor matvec(const Tensor& a, const Tensor& x) {
    require_2d(a, "matvec");
    if (x.ndim() != 1 || x.numel() != a.cols()) throw ContractError("matvec: size mismatch");
    int64_t m = a.rows(), k = a.cols();
    std::vector<double> out(static_cast<size_t>(m));
    MapVec(out.data(), m) = as_mat(*a.impl()) * CMapVec(x.impl()->data.data(), k);
    return make_op_result({m}, std::move(out), {a, x}, [m, k](TensorImpl& self) {
        CMapVec g(self.grad.data(), m);
        if (auto* ga = parent_grad(self, 0))
            MapMat(ga->data(), m, k) += g * CMapVec(self.parents[1]->data.data(), k).transpose();
        if (auto* gx = parent_grad(self, 1))
            MapVec(gx->data(), k) += as_mat(*self.parents[0]).transpose() * g;
    });
}

Tensor matvec_t(const Tensor& a, const Tensor& x) {
    require_2d(a, "matvec_t");
    if (x.ndim() != 1 || x.numel() != a.rows()) throw ContractError("matvec_t: size mismatch");
    int64_t m = a.rows(), k = a.cols();
    std::vector<double> out(static_cast<size_t>(k));
    MapVec(out.data(), k) = as_mat(*a.impl()).transpose() * CMapVec(x.impl()->data.data(), m);
    return make_op_result({k}, std::move(out), {a, x}, [m, k](TensorImpl& self) {
        CMapVec g(self.grad.data(), k);
        if (auto* ga = parent_grad(self, 0))
            MapMat(ga->data(), m, k) += CMapVec(self.parents[1]->data.data(), m) * g.transpose();
        if (auto* gx = parent_grad(self, 1))
            MapVec(gx->data(), m) += as_mat(*self.parents[0]) * g;
    });
}

// ---- shape plumbing ----

Tensor concat(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ContractError("concat: empty part list");
    std::vector<double> out;
    std::vector<int64_t> sizes;
    for (const auto& p : parts) {
        if (p.ndim() != 1) throw ContractError("concat: parts must be 1-D");
        out.insert(out.end(), p.data().begin(), p.data().end());
        sizes.push_back(p.numel());
    }
    int64_t total = static_cast<int64_t>(out.size());
    return make_op_result({total}, std::move(out), parts, [sizes](TensorImpl& self) {
        size_t offset = 0;
        for (size_t p = 0; p < sizes.size(); ++p) {
            if (auto* g = parent_grad(self, p))
                for (size_t i = 0; i < static_cast<size_t>(sizes[p]); ++i)
                    (*g)[i] += self.grad[offset + i];
            offset += static_cast<size_t>(sizes[p]);
        }
    });
}

namespace {
// rows and cols of a part interpreted as rows of a matrix
std::pair<int64_t, int64_t> as_rows(const Tensor& t) {
    if (t.ndim() == 1) return {1, t.numel()};
    if (t.ndim() == 2) return {t.shape()[0], t.shape()[1]};
    throw ContractError("concat_rows: parts must be 1-D or 2-D");
}
}  // namespace

Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ContractError("concat_rows: empty part list");
    int64_t d = as_rows(parts[0]).second;
    int64_t total_rows = 0;
    std::vector<double> out;
    std::vector<int64_t> counts;
    for (const auto& p : parts) {
        auto [r, c] = as_rows(p);
        if (c != d) throw ContractError("concat_rows: column width mismatch");
        out.insert(out.end(), p.data().begin(), p.data().end());
        total_rows += r;
        counts.push_back(r * c);
    }
    return make_op_result({total_rows, d}, std::move(out), parts, [counts](TensorImpl& self) {
        size_t offset = 0;
        for (size_t p = 0; p < counts.size(); ++p) {
            if (auto* g = parent_grad(self, p))
                for (size_t i = 0; i < static_cast<size_t>(counts[p]); ++i)
                    (*g)[i] += self.grad[offset + i];
            offset += static_cast<size_t>(counts[p]);
        }
    });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ContractError("concat_cols: empty part list");
    int64_t n = -1;
    int64_t total_cols = 0;
    std::vector<int64_t> widths;
    for (const auto& p : parts) {
        require_2d(p, "concat_cols");
        if (n < 0) n = p.rows();
        if (p.rows() != n) throw ContractError("concat_cols: row count mismatch");
        widths.push_back(p.cols());
        total_cols += p.cols();
    }
    std::vector<double> out(static_cast<size_t>(n * total_cols));
    int64_t col0 = 0;
    for (size_t p = 0; p < parts.size(); ++p) {
        for (int64_t r = 0; r < n; ++r)
            for (int64_t c = 0; c < widths[p]; ++c)
                out[static_cast<size_t>(r * total_cols + col0 + c)] =
                    parts[p].data()[r * widths[p] + c];
        col0 += widths[p];
    }
    return make_op_result({n, total_cols}, std::move(out), parts,
                          [n, total_cols, widths](TensorImpl& self) {
                              int64_t col0 = 0;
                              for (size_t p = 0; p < widths.size(); ++p) {
                                  if (auto* g = parent_grad(self, p))
                                      for (int64_t r = 0; r < n; ++r)
                                          for (int64_t c = 0; c < widths[p]; ++c)
                                              (*g)[static_cast<size_t>(r * widths[p] + c)] +=
                                                  self.grad[static_cast<size_t>(r * total_cols +
                                                                                col0 + c)];
                                  col0 += widths[p];
                              }
                          });
}

Tensor slice(const Tensor& x, int64_t start, int64_t len) {
    if (x.ndim() != 1) throw ContractError("slice: tensor must be 1-D");
    if (start < 0 || len <= 0 || start + len > x.numel())
        throw ContractError("slice: range out of bounds");
    std::vector<double> out(x.data().begin() + start, x.data().begin() + start + len);
    return make_op_result({len}, std::move(out), {x}, [start](TensorImpl& self) {
        if (auto* g = parent_grad(self, 0))
            for (size_t i = 0; i < self.grad.size(); ++i)
                (*g)[static_cast<size_t>(start) + i] += self.grad[i];
    });
}

Tensor slice_rows(const Tensor& x, int64_t start, int64_t len) {
    require_2d(x, "slice_rows");
    if (start < 0 || len <= 0 || start + len > x.rows())
        throw ContractError("slice_rows: range out of bounds");
    int64_t d = x.cols();
    std::vector<double> out(x.data().begin() + start * d, x.data().begin() + (start + len) * d);
    return make_op_result({len, d}, std::move(out), {x}, [start, d](TensorImpl& self) {
        if (auto* g = parent_grad(self, 0))
            for (size_t i = 0; i < self.grad.size(); ++i)
                (*g)[static_cast<size_t>(start * d) + i] += self.grad[i];
    });
}

Tensor row(const Tensor& x, int64_t r) {
    require_2d(x, "row");
    if (r < 0 || r >= x.rows()) throw ContractError("row: index out of bounds");
    int64_t d = x.cols();
    std::vector<double> out(x.data().begin() + r * d, x.data().begin() + (r + 1) * d);
    return make_op_result({d}, std::move(out), {x}, [r, d](TensorImpl& self) {
        if (auto* g = parent_grad(self, 0))
            for (int64_t i = 0; i < d; ++i)
                (*g)[static_cast<size_t>(r * d + i)] += self.grad[static_cast<size_t>(i)];
    });
}

Tensor slice_cols(const Tensor& x, int64_t start, int64_t len) {
    require_2d(x, "slice_cols");
    if (start < 0 || len <= 0 || start + len > x.cols())
        throw ContractError("slice_cols: range out of bounds");
    int64_t n = x.rows(), d = x.cols();
    std::vector<double> out(static_cast<size_t>(n * len));
    for (int64_t r = 0; r < n; ++r)
        for (int64_t c = 0; c < len; ++c)
            out[static_cast<size_t>(r * len + c)] = x.data()[r * d + start + c];
    return make_op_result({n, len}, std::move(out), {x}, [start, n, d, len](TensorImpl& self) {
        if (auto* g = parent_grad(self, 0))
            for (int64_t r = 0; r < n; ++r)
                for (int64_t c = 0; c < len; ++c)
                    (*g)[static_cast<size_t>(r * d + start + c)] +=
                        self.grad[static_cast<size_t>(r * len + c)];
    });
}

// ---- reductions and losses ----

Tensor sum(const Tensor& x) {
    double s = std::accumulate(x.data().begin(), x.data().end(), 0.0);
    return make_op_result({1}, {s}, {x}, [](TensorImpl& self) {
        if (auto* g = parent_grad(self, 0))
            for (auto& v : *g) v += self.grad[0];
    });
}

Tensor mean(const Tensor& x) {
    double n = static_cast<double>(x.numel());
    double s = std::accumulate(x.data().begin(), x.data().end(), 0.0) / n;
    return make_op_result({1}, {s}, {x}, [n](TensorImpl& self) {
        if (auto* g = parent_grad(self, 0))
            for (auto& v : *g) v += self.grad[0] / n;
    });
}

namespace {

Tensor softmax_impl(const Tensor& x, const std::vector<double>* mask, bool per_row_mask) {
    if (x.ndim() != 1 && x.ndim() != 2) throw ContractError("softmax: expected 1-D or 2-D input");
    int64_t n_rows = x.ndim() == 2 ? x.shape()[0] : 1;
    int64_t n_cols = x.ndim() == 2 ? x.shape()[1] : x.numel();
    if (mask && static_cast<int64_t>(mask->size()) !=
                    (per_row_mask ? x.numel() : n_cols))
        throw ContractError("softmax: mask length mismatch");
    std::vector<double> out(static_cast<size_t>(x.numel()));
    for (int64_t r = 0; r < n_rows; ++r)
        softmax_row(x.data().data() + r * n_cols, out.data() + r * n_cols, n_cols,
                    mask ? mask->data() + (per_row_mask ? r * n_cols : 0) : nullptr);
    return make_op_result(x.shape(), std::move(out), {x}, [n_rows, n_cols](TensorImpl& self) {
        auto* g = parent_grad(self, 0);
        if (!g) return;
        for (int64_t r = 0; r < n_rows; ++r) {
            const double* p = self.data.data() + r * n_cols;
            const double* gy = self.grad.data() + r * n_cols;
            double dotv = 0.0;
            for (int64_t j = 0; j < n_cols; ++j) dotv += gy[j] * p[j];
            for (int64_t j = 0; j < n_cols; ++j)
                (*g)[static_cast<size_t>(r * n_cols + j)] += p[j] * (gy[j] - dotv);
        }
    });
}

}  // namespace

Tensor softmax(const Tensor& x) {
    require_finite(x, "softmax");
    return softmax_impl(x, nullptr, false);
}

Tensor softmax_masked(const Tensor& x, const std::vector<double>& mask) {
    return softmax_impl(x, &mask, false);
}

Tensor softmax_masked_rows(const Tensor& x, const std::vector<double>& mask) {
    return softmax_impl(x, &mask, true);
}

Tensor cross_entropy(const Tensor& logits, int64_t gold) {
    if (logits.ndim() != 1) throw ContractError("cross_entropy: logits must be 1-D");
    require_finite(logits, "cross_entropy");
    if (gold < 0 || gold >= logits.numel())
        throw IndexError("cross_entropy: gold class out of range");
    double loss = logsumexp(logits.data().data(), logits.numel()) - logits.data()[gold];
    return make_op_result({1}, {loss}, {logits}, [gold](TensorImpl& self) {
        auto* g = parent_grad(self, 0);
        if (!g) return;
        const auto& lv = self.parents[0]->data;
        std::vector<double> p(lv.size());
        softmax_row(lv.data(), p.data(), static_cast<int64_t>(lv.size()), nullptr);
        for (size_t j = 0; j < p.size(); ++j) {
            double delta = (static_cast<int64_t>(j) == gold) ? 1.0 : 0.0;
            (*g)[j] += self.grad[0] * (p[j] - delta);
        }
    });
}

Tensor sequence_cross_entropy(const Tensor& logits, const std::vector<int64_t>& targets,
                              const std::vector<double>& weights) {
    require_2d(logits, "sequence_cross_entropy");
    int64_t n = logits.rows(), v = logits.cols();
    if (static_cast<int64_t>(targets.size()) != n ||
        static_cast<int64_t>(weights.size()) != n)
        throw ContractError("sequence_cross_entropy: target/weight length mismatch");
    require_finite(logits, "sequence_cross_entropy");
    double wsum = std::accumulate(weights.begin(), weights.end(), 0.0);
    if (wsum <= 0.0) throw ContractError("sequence_cross_entropy: no loss-bearing positions");
    double loss = 0.0;
    for (int64_t r = 0; r < n; ++r) {
        if (weights[static_cast<size_t>(r)] == 0.0) continue;
        int64_t t = targets[static_cast<size_t>(r)];
        if (t < 0 || t >= v) throw IndexError("sequence_cross_entropy: target out of range");
        const double* base = logits.data().data() + r * v;
        loss += weights[static_cast<size_t>(r)] * (logsumexp(base, v) - base[t]);
    }
    loss /= wsum;
    return make_op_result({1}, {loss}, {logits},
                          [targets, weights, wsum, n, v](TensorImpl& self) {
                              auto* g = parent_grad(self, 0);
                              if (!g) return;
                              const auto& lv = self.parents[0]->data;
                              std::vector<double> p(static_cast<size_t>(v));
                              for (int64_t r = 0; r < n; ++r) {
                                  double w = weights[static_cast<size_t>(r)];
                                  if (w == 0.0) continue;
                                  softmax_row(lv.data() + r * v, p.data(), v, nullptr);
                                  int64_t t = targets[static_cast<size_t>(r)];
                                  for (int64_t j = 0; j < v; ++j) {
                                      double delta = (j == t) ? 1.0 : 0.0;
                                      (*g)[static_cast<size_t>(r * v + j)] +=
                                          self.grad[0] * w / wsum * (p[j] - delta);
                                  }
                              }
                          });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    if (x.ndim() != 1 && x.ndim() != 2) throw ContractError("layer_norm: expected 1-D or 2-D");
    int64_t n = x.ndim() == 2 ? x.shape()[0] : 1;
    int64_t d = x.ndim() == 2 ? x.shape()[1] : x.numel();
    if (gamma.numel() != d || beta.numel() != d)
        throw ContractError("layer_norm: gain/shift width mismatch");
    std::vector<double> out(static_cast<size_t>(x.numel()));
    std::vector<double> inv_sigma(static_cast<size_t>(n));
    for (int64_t r = 0; r < n; ++r) {
        const double* xr = x.data().data() + r * d;
        double mu = 0.0;
        for (int64_t j = 0; j < d; ++j) mu += xr[j];
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (int64_t j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
        var /= static_cast<double>(d);
        double is = 1.0 / std::sqrt(var + eps);
        inv_sigma[static_cast<size_t>(r)] = is;
        for (int64_t j = 0; j < d; ++j)
            out[static_cast<size_t>(r * d + j)] =
                gamma.data()[j] * (xr[j] - mu) * is + beta.data()[j];
    }
    return make_op_result(x.shape(), std::move(out), {x, gamma, beta},
                          [n, d, inv_sigma](TensorImpl& self) {
                              const auto& xv = self.parents[0]->data;
                              const auto& gv = self.parents[1]->data;
                              auto* gx = parent_grad(self, 0);
                              auto* gg = parent_grad(self, 1);
                              auto* gb = parent_grad(self, 2);
                              for (int64_t r = 0; r < n; ++r) {
                                  const double* xr = xv.data() + r * d;
                                  const double* gy = self.grad.data() + r * d;
                                  double mu = 0.0;
                                  for (int64_t j = 0; j < d; ++j) mu += xr[j];
                                  mu /= static_cast<double>(d);
                                  double is = inv_sigma[static_cast<size_t>(r)];
                                  double m1 = 0.0, m2 = 0.0;
                                  for (int64_t j = 0; j < d; ++j) {
                                      double xhat = (xr[j] - mu) * is;
                                      double dxhat = gy[j] * gv[static_cast<size_t>(j)];
                                      m1 += dxhat;
                                      m2 += dxhat * xhat;
                                      if (gg) (*gg)[static_cast<size_t>(j)] += gy[j] * xhat;
                                      if (gb) (*gb)[static_cast<size_t>(j)] += gy[j];
                                  }
                                  m1 /= static_cast<double>(d);
                                  m2 /= static_cast<double>(d);
                                  if (gx)
                                      for (int64_t j = 0; j < d; ++j) {
                                          double xhat = (xr[j] - mu) * is;
                                          double dxhat = gy[j] * gv[static_cast<size_t>(j)];
                                          (*gx)[static_cast<size_t>(r * d + j)] +=
                                              is * (dxhat - m1 - xhat * m2);
                                      }
                              }
                          });
}

Tensor dropout(const Tensor& x, double p, std::mt19937_64& rng, bool enabled) {
    if (p < 0.0 || p >= 1.0) throw ContractError("dropout: p must be in [0, 1)");
    if (!enabled || p == 0.0) return scale(x, 1.0);
    double keep = 1.0 - p;
    std::bernoulli_distribution dist(keep);
    std::vector<double> mask(static_cast<size_t>(x.numel()));
    for (auto& m : mask) m = dist(rng) ? 1.0 / keep : 0.0;
    std::vector<double> out(static_cast<size_t>(x.numel()));
    for (int64_t i = 0; i < x.numel(); ++i)
        out[static_cast<size_t>(i)] = x.data()[i] * mask[static_cast<size_t>(i)];
    return make_op_result(x.shape(), std::move(out), {x}, [mask](TensorImpl& self) {
        if (auto* g = parent_grad(self, 0))
            for (size_t i = 0; i < self.grad.size(); ++i) (*g)[i] += self.grad[i] * mask[i];
    });
}

Tensor embedding(const Tensor& table, const std::vector<int64_t>& ids) {
    require_2d(table, "embedding");
    if (ids.empty()) throw ContractError("embedding: empty id list");
    int64_t v = table.rows(), d = table.cols();
    std::vector<double> out;
    out.reserve(ids.size() * static_cast<size_t>(d));
    for (int64_t id : ids) {
        if (id < 0 || id >= v) throw IndexError("embedding: id out of range");
        out.insert(out.end(), table.data().begin() + id * d, table.data().begin() + (id + 1) * d);
    }
    int64_t n = static_cast<int64_t>(ids.size());
    return make_op_result({n, d}, std::move(out), {table}, [ids, d](TensorImpl& self) {
        if (auto* g = parent_grad(self, 0))
            for (size_t r = 0; r < ids.size(); ++r)
                for (int64_t j = 0; j < d; ++j)
                    (*g)[static_cast<size_t>(ids[r] * d + j)] +=
                        self.grad[r * static_cast<size_t>(d) + static_cast<size_t>(j)];
    });
}

}  // namespace mplp
