#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "sadp/common.hpp"

namespace sadp {

enum class LrSchedule { constant, cosine };

/// SGD with heavy-ball momentum and L2 weight decay.
struct OptimizerState {
    double learning_rate = 0.1;
    double base_lr = 0.1;
    double momentum = 0.0;
    double weight_decay = 0.0;
    LrSchedule schedule = LrSchedule::cosine;
    std::vector<std::vector<double>> momentum_buffers;

    void validate() const {
        if (!(base_lr > 0.0)) throw ConfigError("learning rate must be positive");
        if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
        if (!(weight_decay >= 0.0)) throw ConfigError("weight decay must be non-negative");
    }
};

/// buffer <- momentum * buffer + grad + decay * w;  w <- w - lr * buffer.
inline void sgd_step(std::vector<std::vector<double>>& weights, const std::vector<std::vector<double>>& grads,
                     OptimizerState& opt) {
    if (grads.size() != weights.size()) throw DimensionError("sgd_step: gradient count differs from weights");
    for (std::size_t l = 0; l < grads.size(); ++l) {
        if (grads[l].size() != weights[l].size()) throw DimensionError("sgd_step: gradient shape mismatch");
        if (!all_finite(grads[l])) throw NumericError("sgd_step: non-finite gradient in layer " + std::to_string(l));
    }
    if (opt.momentum_buffers.size() != weights.size()) {
        opt.momentum_buffers.clear();
        for (const auto& w : weights) opt.momentum_buffers.emplace_back(w.size(), 0.0);
    }
    for (std::size_t l = 0; l < weights.size(); ++l) {
        auto& w = weights[l];
        auto& buf = opt.momentum_buffers[l];
        for (std::size_t i = 0; i < w.size(); ++i) {
            buf[i] = opt.momentum * buf[i] + grads[l][i] + opt.weight_decay * w[i];
            w[i] -= opt.learning_rate * buf[i];
        }
    }
}

/// Half-cosine annealing: base_lr at k = 1, tending to 0 as k approaches K + 1.
inline double cosine_lr(std::size_t k, std::size_t epochs, double base_lr) {
    if (k < 1 || k > epochs) throw RangeError("cosine_lr: epoch outside [1, K]");
    const double phase = std::numbers::pi * static_cast<double>(k - 1) / static_cast<double>(epochs);
    return base_lr * (1.0 + std::cos(phase)) / 2.0;
}

}  // namespace sadp
