#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>

#include "sadp/common.hpp"

namespace sadp {

enum class ScoreKind { spike_aware, loss, uniform };

struct PruneConfig {
    bool enabled = false;
    double ratio = 0.0;       // average pruning ratio r, [0, 1)
    double max_ratio = 0.0;   // final-epoch ratio r_max, [r, 1]
    std::size_t epochs = 1;   // K
    double smoothing = 0.0;   // beta, [0, 1)
    std::uint64_t seed = 0;
    ScoreKind score = ScoreKind::spike_aware;
    bool exact_average = false;

    void validate() const {
        if (!(ratio >= 0.0 && ratio < 1.0)) throw ConfigError("prune.ratio must lie in [0, 1)");
        if (!(max_ratio >= ratio && max_ratio <= 1.0)) throw ConfigError("prune.max_ratio must lie in [ratio, 1]");
        if (epochs < 1) throw ConfigError("epoch count must be positive");
        if (!(smoothing >= 0.0 && smoothing < 1.0)) throw ConfigError("prune.beta must lie in [0, 1)");
    }
};

/// Pruning ratio of epoch k (1-based): linear from 2r - r_max toward r_max,
/// reaching r_max at k = K. Written as r_max - (1 - k/K)(r_max - start) so the
/// endpoint and the constant case are exact in floating point.
///
/// The plain schedule averages r + (r_max - r)/K over the run; with
/// `exact_average` every epoch is lowered by (r_max - r)/K so the average is r.
/// Results are clamped to [0, 1).
inline double schedule_ratio(std::size_t k, const PruneConfig& cfg) {
    if (k < 1 || k > cfg.epochs)
        throw RangeError("epoch " + std::to_string(k) + " outside [1, " + std::to_string(cfg.epochs) + "]");
    const double start = 2.0 * cfg.ratio - cfg.max_ratio;
    const double end = cfg.max_ratio;
    const double frac = static_cast<double>(k) / static_cast<double>(cfg.epochs);
    double r = end - (1.0 - frac) * (end - start);
    if (cfg.exact_average) r -= (end - cfg.ratio) / static_cast<double>(cfg.epochs);
    const double clamped = std::clamp(r, 0.0, std::nextafter(1.0, 0.0));
    if (clamped != r) logger()->info("epoch {}: scheduled ratio {} clamped to {}", k, r, clamped);
    return clamped;
}

/// S_k = round((1 - r_k) N).
inline std::size_t target_size(double ratio, std::size_t n) {
    return static_cast<std::size_t>(std::llround((1.0 - ratio) * static_cast<double>(n)));
}

}  // namespace sadp
