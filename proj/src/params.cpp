#include "mplp/params.hpp"

#include <algorithm>
#include <cmath>

namespace mplp {

Tensor ParameterStore::create(const std::string& name, std::vector<int64_t> shape, int64_t fan_in,
                              int64_t fan_out, std::mt19937_64& rng) {
    double s = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor t = Tensor::uniform(std::move(shape), s, rng, true);
    put(name, t);
    return t;
}

Tensor ParameterStore::create_zeros(const std::string& name, std::vector<int64_t> shape) {
    Tensor t = Tensor::zeros(std::move(shape), true);
    put(name, t);
    return t;
}

Tensor ParameterStore::create_ones(const std::string& name, std::vector<int64_t> shape) {
    Tensor t = Tensor::full(std::move(shape), 1.0, true);
    put(name, t);
    return t;
}

void ParameterStore::put(const std::string& name, Tensor t) {
    if (has(name)) throw ContractError("parameter store: duplicate name " + name);
    if (!t.requires_grad()) t.set_requires_grad(true);
    names_.push_back(name);
    tensors_.push_back(std::move(t));
}

bool ParameterStore::has(const std::string& name) const {
    return std::find(names_.begin(), names_.end(), name) != names_.end();
}

Tensor ParameterStore::get(const std::string& name) const {
    auto it = std::find(names_.begin(), names_.end(), name);
    if (it == names_.end()) throw ContractError("parameter store: missing parameter " + name);
    return tensors_[static_cast<size_t>(it - names_.begin())];
}

std::vector<Tensor> ParameterStore::all() const { return tensors_; }

int64_t ParameterStore::total_size() const {
    int64_t n = 0;
    for (const auto& t : tensors_) n += t.numel();
    return n;
}

void ParameterStore::zero_all_grads() const {
    for (auto t : tensors_) t.zero_grad();
}

}  // namespace mplp
