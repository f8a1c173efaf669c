#pragma once

#include <algorithm>
#include <random>
#include <span>
#include <vector>

#include "sadp/network.hpp"

namespace sadp::testing {

inline std::vector<double> random_spikes(std::size_t n, double density, std::mt19937_64& rng) {
    std::vector<double> v(n);
    for (double& x : v) x = uniform01(rng) < density ? 1.0 : 0.0;
    return v;
}

inline std::vector<double> random_reals(std::size_t n, double lo, double hi, std::mt19937_64& rng) {
    std::vector<double> v(n);
    for (double& x : v) x = lo + (hi - lo) * uniform01(rng);
    return v;
}

/// Dense stack in -> hidden... -> out with seeded uniform weights.
inline Network dense_net(std::vector<std::size_t> sizes, std::uint64_t seed, double gain = 2.5) {
    std::vector<LayerSpec> layers;
    for (std::size_t i = 0; i + 1 < sizes.size(); ++i) layers.push_back(LayerSpec::dense(sizes[i], sizes[i + 1]));
    Network net = make_network(std::move(layers));
    init_weights(net, seed, gain);
    return net;
}

}  // namespace sadp::testing

namespace sadp::testing {

/// Projects q onto {sum p = s, floor <= p <= 1} by bisection on a shift tau
/// with p_i = clamp(q_i + tau, floor, 1).
inline std::vector<double> project_box_simplex(std::vector<double> q, double s, double floor) {
    auto total = [&](double tau) {
        double t = 0.0;
        for (double v : q) t += std::clamp(v + tau, floor, 1.0);
        return t;
    };
    double lo = -2.0, hi = 2.0;
    for (double v : q) {
        lo = std::min(lo, floor - v - 1.0);
        hi = std::max(hi, 1.0 - v + 1.0);
    }
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (total(mid) < s ? lo : hi) = mid;
    }
    for (double& v : q) v = std::clamp(v + 0.5 * (lo + hi), floor, 1.0);
    return q;
}

/// A random feasible probability vector for budget s.
inline std::vector<double> random_feasible(std::size_t n, double s, std::mt19937_64& rng) {
    std::vector<double> q(n);
    for (double& v : q) v = uniform01(rng) * 2.0 * s / static_cast<double>(n);
    return project_box_simplex(std::move(q), s, 1e-6);
}

/// Norms ~ |Normal| with occasional heavy-tailed outliers, so that some
/// instances clip at 1.
inline std::vector<double> random_norms(std::size_t n, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> g(n);
    for (double& v : g) {
        v = std::abs(normal(rng));
        if (uniform01(rng) < 0.1) v *= 5.0 + 20.0 * uniform01(rng);
        if (v == 0.0) v = 1e-3;
    }
    return g;
}

inline double objective(std::span<const double> g, std::span<const double> p) {
    double v = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) v += (1.0 - p[i]) * g[i] * g[i] / p[i];
    return v;
}

}  // namespace sadp::testing
