#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include "sadp/data.hpp"
#include "sadp/network.hpp"
#include "sadp/probability.hpp"
#include "sadp/score.hpp"

// Brute-force reference computations. Nothing here is on the training path;
// each routine recomputes its quantity by the most direct means available.

namespace sadp::oracle {

struct GradNormReport {
    std::vector<double> norms;             // ||grad l(x_i)|| over all layers
    std::vector<double> restricted_norms;  // ... over the score layers only
    std::vector<double> scores;            // spike-aware G_i on the score layers
    std::vector<double> losses;
    std::vector<double> ratios;            // G_i / restricted norm (inf when the norm is 0 and G_i > 0)
};

/// Flattened per-example weight gradient (all layers, layer-major).
inline std::vector<double> flatten(const std::vector<std::vector<double>>& grads) {
    std::vector<double> out;
    for (const auto& g : grads) out.insert(out.end(), g.begin(), g.end());
    return out;
}

/// Runs forward + backward one example at a time and takes Frobenius norms
/// of the resulting weight gradients.
inline GradNormReport exact_grad_norms(const Network& net, const Dataset& ds, std::span<const std::size_t> indices,
                                       const NeuronConfig& cfg, std::span<const std::size_t> score_layers,
                                       PatchScaling scaling = PatchScaling::when_mixed, std::size_t workers = 1) {
    const std::size_t m = indices.size();
    GradNormReport rep;
    rep.norms.resize(m);
    rep.restricted_norms.resize(m);
    rep.scores.resize(m);
    rep.losses.resize(m);
    rep.ratios.resize(m);
    parallel_for(m, workers, [&](std::size_t j) {
        const std::size_t i = indices[j];
        const auto ft = forward(net, ds.example(i), ds.labels[i], cfg);
        const auto bt = backward_bptt(net, ft, cfg);
        double all = 0.0;
        double restricted = 0.0;
        for (std::size_t l = 0; l < net.depth(); ++l) {
            const double sq = dot(bt.weight_grads[l], bt.weight_grads[l]);
            all += sq;
            if (std::find(score_layers.begin(), score_layers.end(), l) != score_layers.end()) restricted += sq;
        }
        rep.norms[j] = std::sqrt(all);
        rep.restricted_norms[j] = std::sqrt(restricted);
        rep.scores[j] = spike_aware_score(net, ft, bt, score_layers, scaling);
        rep.losses[j] = ft.loss;
        rep.ratios[j] = rep.restricted_norms[j] > 0.0 ? rep.scores[j] / rep.restricted_norms[j]
                        : rep.scores[j] > 0.0        ? std::numeric_limits<double>::infinity()
                                                     : 1.0;
    });
    return rep;
}

inline GradNormReport exact_grad_norms(const Network& net, const Dataset& ds, const NeuronConfig& cfg,
                                       std::span<const std::size_t> score_layers,
                                       PatchScaling scaling = PatchScaling::when_mixed, std::size_t workers = 1) {
    std::vector<std::size_t> all(ds.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    return exact_grad_norms(net, ds, all, cfg, score_layers, scaling, workers);
}

/// Per-example flattened gradients of the unscaled losses.
inline std::vector<std::vector<double>> per_example_gradients(const Network& net, const Dataset& ds,
                                                              const NeuronConfig& cfg, std::size_t workers = 1) {
    std::vector<std::vector<double>> g(ds.size());
    parallel_for(ds.size(), workers, [&](std::size_t i) {
        const auto ft = forward(net, ds.example(i), ds.labels[i], cfg);
        g[i] = flatten(backward_bptt(net, ft, cfg).weight_grads);
    });
    return g;
}

/// Closed-form minimizer of sum (1 - p_i) g_i^2 / p_i subject to sum p = S,
/// 0 <= p <= 1, by sorting.
///
/// With g sorted ascending, M is the number of clipped examples: the first M
/// in 0..S-1 for which alpha_M = (sum of the N - M smallest) / (S - M)
/// satisfies g_(N-M) < alpha_M <= g_(N-M+1). Then p_i = min(g_i, alpha) S /
/// sum_j min(g_j, alpha).
inline ProbabilityAssignment solve_probabilities_sorted(std::span<const double> scores, std::size_t target_size) {
    detail::check_scores(scores, target_size);
    const std::size_t n = scores.size();
    if (target_size == n) return detail::all_ones(n);
    std::vector<double> sorted(scores.begin(), scores.end());
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> prefix(n + 1, 0.0);
    for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + sorted[i];

    for (std::size_t m = 0; m < target_size; ++m) {
        const double alpha = prefix[n - m] / static_cast<double>(target_size - m);
        const bool below = sorted[n - m - 1] < alpha;
        const bool above = m == 0 || sorted[n - m] >= alpha;
        if (!(below && above)) continue;
        ProbabilityAssignment pa;
        pa.target_size = target_size;
        pa.alpha = alpha;
        pa.clipped = m;
        double denom = 0.0;
        for (double g : scores) denom += std::min(g, alpha);
        pa.probabilities.resize(n);
        for (std::size_t i = 0; i < n; ++i)
            pa.probabilities[i] = std::min(scores[i], alpha) * static_cast<double>(target_size) / denom;
        pa.expected_size = std::accumulate(pa.probabilities.begin(), pa.probabilities.end(), 0.0);
        return pa;
    }
    throw InvariantViolation("no clipping count satisfies the optimality conditions");
}

/// E||g_hat - g||^2 = (1/N^2) sum (1 - p_i) g_i^2 / p_i for the Bernoulli
/// estimator g_hat = (1/N) sum m_i grad_i / p_i. `norms` are ||grad_i||.
inline double variance_formula(std::span<const double> norms, std::span<const double> probabilities, std::size_t n) {
    if (norms.size() != probabilities.size()) throw DimensionError("variance_formula: length mismatch");
    double v = 0.0;
    for (std::size_t i = 0; i < norms.size(); ++i) {
        const double p = probabilities[i];
        const double g = norms[i];
        if (!(p >= 0.0 && p <= 1.0)) throw RangeError("variance_formula: probability outside [0, 1]");
        if (p == 0.0) {
            if (g > 0.0) throw NumericError("variance_formula: example with positive norm has probability 0");
            continue;
        }
        v += (1.0 - p) * g * g / p;
    }
    const double nn = static_cast<double>(n);
    return v / (nn * nn);
}

struct MCStats {
    std::size_t draws = 0;
    std::vector<double> full_gradient;
    std::vector<double> mean_estimate;
    std::vector<double> standard_errors;
    double mean_squared_error = 0.0;  // empirical E||g_hat - g||^2
    double max_z = 0.0;               // max_c |mean_c - g_c| / se_c over components with se_c > 0
    double max_abs_deviation_zero_se = 0.0;
};

/// Monte-Carlo behaviour of g_hat = (1/N) sum m_i grad_i / p_i with
/// m_i ~ Bernoulli(p_i). Draw d uses its own generator seeded from (seed, d);
/// draws are summed in blocks of fixed size, so the result does not depend
/// on `workers`.
inline MCStats estimator_stats(const std::vector<std::vector<double>>& grads, std::span<const double> probabilities,
                               std::size_t draws, std::uint64_t seed, std::size_t workers = 1) {
    const std::size_t n = grads.size();
    if (n == 0 || probabilities.size() != n) throw DimensionError("estimator_stats: length mismatch");
    if (draws < 1) throw ConfigError("estimator_stats: at least one draw required");
    const std::size_t dim = grads.front().size();
    const double nn = static_cast<double>(n);

    MCStats st;
    st.draws = draws;
    // Accumulated exactly like a draw that selects everyone with p = 1, so that
    // all-ones probabilities reproduce it bit for bit.
    st.full_gradient.assign(dim, 0.0);
    for (const auto& g : grads)
        for (std::size_t c = 0; c < dim; ++c) st.full_gradient[c] += (1.0 / nn) * g[c];

    constexpr std::size_t kBlocks = 16;
    struct Partial {
        std::vector<double> sum, sum_sq;
        double err = 0.0;
    };
    std::vector<Partial> parts(kBlocks);
    parallel_for(kBlocks, workers, [&](std::size_t b) {
        Partial& part = parts[b];
        part.sum.assign(dim, 0.0);
        part.sum_sq.assign(dim, 0.0);
        std::vector<double> est(dim);
        for (std::size_t d = b; d < draws; d += kBlocks) {
            std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                              static_cast<std::uint32_t>(d), static_cast<std::uint32_t>(d >> 32)};
            std::mt19937_64 rng(seq);
            std::fill(est.begin(), est.end(), 0.0);
            for (std::size_t i = 0; i < n; ++i) {
                if (!(uniform01(rng) < probabilities[i])) continue;
                const double scale = 1.0 / (nn * probabilities[i]);
                for (std::size_t c = 0; c < dim; ++c) est[c] += scale * grads[i][c];
            }
            double e = 0.0;
            for (std::size_t c = 0; c < dim; ++c) {
                part.sum[c] += est[c];
                part.sum_sq[c] += est[c] * est[c];
                const double diff = est[c] - st.full_gradient[c];
                e += diff * diff;
            }
            part.err += e;
        }
    });

    std::vector<double> sum(dim, 0.0), sum_sq(dim, 0.0);
    double err = 0.0;
    for (const auto& part : parts) {
        for (std::size_t c = 0; c < dim; ++c) {
            sum[c] += part.sum[c];
            sum_sq[c] += part.sum_sq[c];
        }
        err += part.err;
    }
    const double dn = static_cast<double>(draws);
    st.mean_squared_error = err / dn;
    st.mean_estimate.resize(dim);
    st.standard_errors.resize(dim);
    for (std::size_t c = 0; c < dim; ++c) {
        const double mean = sum[c] / dn;
        const double var = draws > 1 ? std::max(0.0, (sum_sq[c] - dn * mean * mean) / (dn - 1.0)) : 0.0;
        st.mean_estimate[c] = mean;
        st.standard_errors[c] = std::sqrt(var / dn);
        const double dev = std::abs(mean - st.full_gradient[c]);
        if (st.standard_errors[c] > 0.0)
            st.max_z = std::max(st.max_z, dev / st.standard_errors[c]);
        else
            st.max_abs_deviation_zero_se = std::max(st.max_abs_deviation_zero_se, dev);
    }
    return st;
}

inline MCStats estimator_stats(const Network& net, const Dataset& ds, const NeuronConfig& cfg,
                               std::span<const double> probabilities, std::size_t draws, std::uint64_t seed,
                               std::size_t workers = 1) {
    return estimator_stats(per_example_gradients(net, ds, cfg, workers), probabilities, draws, seed, workers);
}

/// Sample Pearson correlation coefficient.
inline double pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) throw DimensionError("pearson: need two equal-length samples of size >= 2");
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) throw RangeError("pearson: correlation undefined for a constant sample");
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

struct FdReport {
    std::size_t trials = 0;
    double max_relative_error = 0.0;
    double max_abs_fd_where_zero = 0.0;  // largest |finite difference| where BPTT gives exactly 0
    std::vector<double> analytic;
    std::vector<double> numeric;
};

/// Central differences of the loss against BPTT on `trials` randomly chosen
/// weights. Requires smooth mode; the reset path is kept attached so that
/// BPTT is the exact derivative of the forward pass. Relative error is
/// |fd - bptt| / max(|fd|, |bptt|, 1e-8).
inline FdReport fd_gradient_check(const Network& net, std::span<const double> input, std::uint32_t label,
                                  NeuronConfig cfg, double epsilon, std::size_t trials, std::uint64_t seed) {
    if (cfg.mode != SpikeMode::smooth) throw ConfigError("finite-difference checks need smooth spike mode");
    if (!(epsilon >= 1e-7 && epsilon <= 1e-3)) throw ConfigError("epsilon must lie in [1e-7, 1e-3]");
    cfg.reset_detached = false;
    const auto ft = forward(net, input, label, cfg);
    const auto bt = backward_bptt(net, ft, cfg);

    Network probe = net;
    std::mt19937_64 rng(seed);
    const std::size_t total = net.parameter_count();
    FdReport rep;
    rep.trials = trials;
    for (std::size_t k = 0; k < trials; ++k) {
        std::size_t flat = uniform_index(rng, total);
        std::size_t l = 0;
        while (flat >= probe.weights[l].size()) flat -= probe.weights[l].size(), ++l;
        double& w = probe.weights[l][flat];
        const double saved = w;
        w = saved + epsilon;
        const double up = forward(probe, input, label, cfg).loss;
        w = saved - epsilon;
        const double down = forward(probe, input, label, cfg).loss;
        w = saved;
        const double fd = (up - down) / (2.0 * epsilon);
        const double an = bt.weight_grads[l][flat];
        rep.numeric.push_back(fd);
        rep.analytic.push_back(an);
        if (an == 0.0) rep.max_abs_fd_where_zero = std::max(rep.max_abs_fd_where_zero, std::abs(fd));
        const double denom = std::max({std::abs(fd), std::abs(an), 1e-8});
        rep.max_relative_error = std::max(rep.max_relative_error, std::abs(fd - an) / denom);
    }
    return rep;
}

struct CorrelationReport {
    double score_vs_norm = 0.0;
    double loss_vs_norm = 0.0;
    std::size_t sample_size = 0;
};

inline CorrelationReport correlations(const GradNormReport& rep) {
    return {pearson(rep.scores, rep.norms), pearson(rep.losses, rep.norms), rep.norms.size()};
}

}  // namespace sadp::oracle
