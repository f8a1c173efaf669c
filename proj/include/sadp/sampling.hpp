#pragma once

#include <random>
#include <vector>

#include "sadp/probability.hpp"

namespace sadp {

/// Which examples train in epoch k.
struct EpochPlan {
    std::size_t epoch = 0;
    double ratio = 0.0;
    std::size_t target_size = 0;
    std::vector<std::uint8_t> mask;
    std::vector<std::size_t> selected_indices;
};

/// Independent Bernoulli(p_i) draws, one per example, in index order.
template <class Rng>
EpochPlan sample_subset(const ProbabilityAssignment& pa, Rng& rng) {
    EpochPlan plan;
    plan.target_size = pa.target_size;
    plan.mask.resize(pa.size());
    for (std::size_t i = 0; i < pa.size(); ++i) {
        const double p = pa.probabilities[i];
        if (!(p >= 0.0 && p <= 1.0)) throw RangeError("selection probability outside [0, 1]");
        // Always consume one draw so the stream does not depend on p.
        const double u = uniform01(rng);
        plan.mask[i] = u < p ? 1 : 0;
        if (plan.mask[i]) plan.selected_indices.push_back(i);
    }
    return plan;
}

inline EpochPlan sample_subset(const ProbabilityAssignment& pa, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return sample_subset(pa, rng);
}

/// Loss multipliers S / (N p_i) for the selected examples, in selected_indices
/// order. With the batch loss (1/B) sum_i w_i l_i, the expected gradient per
/// selected example equals the full-data mean gradient.
inline std::vector<double> loss_weights(const ProbabilityAssignment& pa, const EpochPlan& plan, std::size_t n,
                                        std::size_t target_size) {
    std::vector<double> w;
    w.reserve(plan.selected_indices.size());
    const double scale = static_cast<double>(target_size) / static_cast<double>(n);
    for (auto i : plan.selected_indices) {
        const double p = pa.probabilities[i];
        if (!(p > 0.0)) throw InvariantViolation("example " + std::to_string(i) + " selected with probability 0");
        w.push_back(scale / p);
    }
    return w;
}

}  // namespace sadp
