#include "mplp/optimizer.hpp"

#include <cmath>

namespace mplp {

AdamW::AdamW(std::vector<Tensor> params, Options options)
    : params_(std::move(params)), opt_(options) {
    for (const auto& p : params_) {
        if (!p.requires_grad()) throw ContractError("AdamW: parameter without requires_grad");
        m_.emplace_back(static_cast<size_t>(p.numel()), 0.0);
        v_.emplace_back(static_cast<size_t>(p.numel()), 0.0);
    }
}

double AdamW::current_lr() const {
    if (opt_.total_steps <= 0) return opt_.lr;
    double warmup = opt_.warmup_fraction * static_cast<double>(opt_.total_steps);
    double t = static_cast<double>(step_count_) + 1.0;
    if (warmup >= 1.0 && t <= warmup) return opt_.lr * t / warmup;
    double total = static_cast<double>(opt_.total_steps);
    double remaining = (total - t) / std::max(1.0, total - warmup);
    return opt_.lr * std::max(0.0, remaining);
}

void AdamW::step() {
    double lr = current_lr();
    ++step_count_;
    double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(step_count_));
    double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(step_count_));
    for (size_t i = 0; i < params_.size(); ++i) {
        auto data = params_[i].mutable_data();
        auto grad = params_[i].grad();
        auto& m = m_[i];
        auto& v = v_[i];
        for (size_t j = 0; j < data.size(); ++j) {
            double g = grad[j];
            m[j] = opt_.beta1 * m[j] + (1.0 - opt_.beta1) * g;
            v[j] = opt_.beta2 * v[j] + (1.0 - opt_.beta2) * g * g;
            double mhat = m[j] / bc1;
            double vhat = v[j] / bc2;
            data[j] -= lr * (mhat / (std::sqrt(vhat) + opt_.eps) +
                             opt_.weight_decay * data[j]);
        }
        params_[i].zero_grad();
    }
}

}  // namespace mplp
