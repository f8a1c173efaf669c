#pragma once

#include <algorithm>
#include <cmath>
#include <span>

#include "sadp/common.hpp"

namespace sadp {

/// How the firing nonlinearity is evaluated in the forward pass.
///
/// `hard` is the Heaviside step used for training. `smooth` replaces it with
/// the antiderivative of the triangular surrogate, which makes BPTT the exact
/// gradient of the forward pass so that finite differences can check it.
enum class SpikeMode { hard, smooth };

struct NeuronConfig {
    double decay = 0.1;            // membrane leak factor, (0, 1]
    double threshold = 1.0;        // firing threshold, > 0
    double surrogate_width = 1.0;  // half-width of the triangular surrogate, > 0
    bool reset_detached = true;    // treat the reset term as constant in BPTT
    std::size_t time_steps = 4;
    SpikeMode mode = SpikeMode::hard;

    void validate() const {
        if (!(decay > 0.0 && decay <= 1.0)) throw ConfigError("neuron decay must lie in (0, 1]");
        if (!(threshold > 0.0)) throw ConfigError("neuron threshold must be positive");
        if (!(surrogate_width > 0.0)) throw ConfigError("surrogate width must be positive");
        if (time_steps < 1) throw ConfigError("time_steps must be at least 1");
    }
};

/// Triangular pseudo-derivative max(0, 1 - |u - threshold| / a) / a.
inline double surrogate_grad(double u, const NeuronConfig& cfg) {
    const double a = cfg.surrogate_width;
    return std::max(0.0, 1.0 - std::abs(u - cfg.threshold) / a) / a;
}

/// Soft spike: the piecewise-quadratic antiderivative of surrogate_grad,
/// rising from 0 at threshold - a to 1 at threshold + a.
inline double soft_spike(double u, const NeuronConfig& cfg) {
    const double a = cfg.surrogate_width;
    const double x = u - cfg.threshold;
    if (x <= -a) return 0.0;
    if (x >= a) return 1.0;
    if (x <= 0.0) return (x + a) * (x + a) / (2.0 * a * a);
    return 1.0 - (a - x) * (a - x) / (2.0 * a * a);
}

/// Output of the firing nonlinearity for a pre-reset potential.
inline double fire(double u, const NeuronConfig& cfg) {
    if (cfg.mode == SpikeMode::smooth) return soft_spike(u, cfg);
    return u >= cfg.threshold ? 1.0 : 0.0;
}

/// One LIF update over a population, in place.
///
/// On entry `membrane` holds the post-reset potentials from the previous step;
/// on exit it holds the new post-reset potentials. `pre_reset` (optional,
/// same size) receives decay * u_prev + current, before the threshold test.
inline void lif_step(std::span<double> membrane, std::span<const double> input_current,
                     std::span<double> spikes, const NeuronConfig& cfg,
                     std::span<double> pre_reset = {}) {
    if (membrane.size() != input_current.size() || membrane.size() != spikes.size() ||
        (!pre_reset.empty() && pre_reset.size() != membrane.size()))
        throw DimensionError("lif_step: membrane, current and spike buffers differ in size");
    for (std::size_t j = 0; j < membrane.size(); ++j) {
        const double u = cfg.decay * membrane[j] + input_current[j];
        const double o = fire(u, cfg);
        if (!pre_reset.empty()) pre_reset[j] = u;
        spikes[j] = o;
        membrane[j] = u - cfg.threshold * o;
    }
}

struct LifResult {
    std::vector<double> membrane;
    std::vector<double> spikes;
};

inline LifResult lif_step(std::span<const double> u_prev, std::span<const double> input_current,
                          const NeuronConfig& cfg) {
    LifResult r{{u_prev.begin(), u_prev.end()}, std::vector<double>(u_prev.size())};
    lif_step(r.membrane, input_current, r.spikes, cfg);
    return r;
}

}  // namespace sadp
