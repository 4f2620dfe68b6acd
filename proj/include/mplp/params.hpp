#pragma once

#include <random>
#include <string>
#include <vector>

#include "mplp/tensor.hpp"

namespace mplp {

/// Ordered registry of named trainable tensors. The registration order is
/// the canonical iteration order for the optimizer and for serialization.
class ParameterStore {
public:
    /// Glorot-uniform init: uniform(-s, s), s = sqrt(6 / (fan_in + fan_out)).
    Tensor create(const std::string& name, std::vector<int64_t> shape, int64_t fan_in,
                  int64_t fan_out, std::mt19937_64& rng);
    Tensor create_zeros(const std::string& name, std::vector<int64_t> shape);
    Tensor create_ones(const std::string& name, std::vector<int64_t> shape);
    /// Registers an externally built tensor (checkpoint loading).
    void put(const std::string& name, Tensor t);

    bool has(const std::string& name) const;
    Tensor get(const std::string& name) const;

    const std::vector<std::string>& names() const { return names_; }
    std::vector<Tensor> all() const;
    int64_t total_size() const;
    void zero_all_grads() const;

private:
    std::vector<std::string> names_;
    std::vector<Tensor> tensors_;
};

}  // namespace mplp
