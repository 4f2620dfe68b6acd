#include "mplp/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace mplp {

double finite_difference_check(const std::function<Tensor()>& build_loss,
                               const std::vector<Tensor>& params, const GradCheckOptions& opts) {
    if (!(opts.eps > 0.0) || opts.eps > 1e-2)
        throw ContractError("finite_difference_check: eps must be in (0, 1e-2]");

    for (auto p : params) {
        if (!p.requires_grad())
            throw ContractError("finite_difference_check: parameter without requires_grad");
        p.zero_grad();
    }

    // analytic pass
    std::vector<std::vector<double>> analytic;
    {
        Tape tape;
        TapeScope scope(tape);
        Tensor loss = build_loss();
        tape.backward(loss);
        for (const auto& p : params)
            analytic.emplace_back(p.grad().begin(), p.grad().end());
    }
    for (auto p : params) p.zero_grad();

    std::mt19937_64 rng(opts.seed);
    double max_rel = 0.0;
    for (size_t pi = 0; pi < params.size(); ++pi) {
        Tensor p = params[pi];
        std::vector<int64_t> coords(static_cast<size_t>(p.numel()));
        std::iota(coords.begin(), coords.end(), 0);
        if (opts.max_coords_per_param > 0 && p.numel() > opts.max_coords_per_param) {
            // half by largest |analytic| (verifies the gradients that drive
            // training), half at random (catches missing backward paths)
            const auto& a = analytic[pi];
            std::vector<int64_t> by_mag = coords;
            std::sort(by_mag.begin(), by_mag.end(), [&](int64_t x, int64_t y) {
                double ax = std::abs(a[static_cast<size_t>(x)]);
                double ay = std::abs(a[static_cast<size_t>(y)]);
                if (ax != ay) return ax > ay;
                return x < y;
            });
            size_t half = static_cast<size_t>((opts.max_coords_per_param + 1) / 2);
            std::vector<int64_t> chosen(by_mag.begin(),
                                        by_mag.begin() + static_cast<long>(half));
            std::shuffle(coords.begin(), coords.end(), rng);
            for (int64_t c : coords) {
                if (static_cast<int64_t>(chosen.size()) >= opts.max_coords_per_param) break;
                if (std::find(chosen.begin(), chosen.end(), c) == chosen.end())
                    chosen.push_back(c);
            }
            coords = std::move(chosen);
        }
        auto data = p.mutable_data();
        for (int64_t c : coords) {
            double saved = data[static_cast<size_t>(c)];
            data[static_cast<size_t>(c)] = saved + opts.eps;
            double up = build_loss().value();
            data[static_cast<size_t>(c)] = saved - opts.eps;
            double down = build_loss().value();
            data[static_cast<size_t>(c)] = saved;
            double numeric = (up - down) / (2.0 * opts.eps);
            double a = analytic[pi][static_cast<size_t>(c)];
            if (std::abs(a) < opts.noise_floor && std::abs(numeric) < opts.noise_floor) continue;
            double rel = std::abs(a - numeric) / (std::abs(a) + std::abs(numeric) + 1e-12);
            max_rel = std::max(max_rel, rel);
        }
    }
    return max_rel;
}

}  // namespace mplp
