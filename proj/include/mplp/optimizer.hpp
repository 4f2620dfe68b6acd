#pragma once

#include <cstdint>
#include <vector>

#include "mplp/tensor.hpp"

namespace mplp {

/// Adam with decoupled weight decay and a linear warmup / linear decay
/// learning-rate schedule over a known total step count.
class AdamW {
public:
    struct Options {
        double lr = 2e-5;
        double beta1 = 0.9;
        double beta2 = 0.999;
        double eps = 1e-8;
        double weight_decay = 0.01;
        double warmup_fraction = 0.1;
        int64_t total_steps = 0;  // 0 disables the schedule (constant lr)
    };

    AdamW(std::vector<Tensor> params, Options options);

    /// Applies one update from the accumulated grads, then zeroes them.
    void step();
    int64_t steps_taken() const { return step_count_; }
    double current_lr() const;

private:
    std::vector<Tensor> params_;
    Options opt_;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
    int64_t step_count_ = 0;
};

}  // namespace mplp
