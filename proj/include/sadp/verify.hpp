#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "sadp/oracle.hpp"
#include "sadp/trainer.hpp"

// Self-checks run by `sadp verify` and by the acceptance binary. Each check
// builds its own small problem from a seed, compares the production routine
// against the oracle, and reports the worst observed deviation.

namespace sadp::verify {

struct CheckResult {
    std::string name;
    bool passed = false;
    std::string detail;
    double seconds = 0.0;
};

namespace detail {

template <class F>
CheckResult timed(std::string name, F&& body) {
    const auto start = std::chrono::steady_clock::now();
    CheckResult r;
    try {
        r = body();
    } catch (const std::exception& e) {
        r.passed = false;
        r.detail = std::string("exception: ") + e.what();
    }
    r.name = std::move(name);
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return r;
}

/// |Normal| norms with roughly one in ten scaled up 5-25x.
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

/// Random point of {sum p = s, floor <= p <= 1}: uniform draws projected by
/// bisection on a common shift.
inline std::vector<double> random_feasible(std::size_t n, double s, std::mt19937_64& rng) {
    constexpr double floor = 1e-6;
    std::vector<double> q(n);
    for (double& v : q) v = uniform01(rng) * 2.0 * s / static_cast<double>(n);
    auto total = [&](double tau) {
        double t = 0.0;
        for (double v : q) t += std::clamp(v + tau, floor, 1.0);
        return t;
    };
    double lo = -3.0, hi = 3.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (total(mid) < s ? lo : hi) = mid;
    }
    for (double& v : q) v = std::clamp(v + 0.5 * (lo + hi), floor, 1.0);
    return q;
}

inline double objective(std::span<const double> g, std::span<const double> p) {
    double v = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) v += (1.0 - p[i]) * g[i] * g[i] / p[i];
    return v;
}

inline double sum(std::span<const double> v) { return std::accumulate(v.begin(), v.end(), 0.0); }

inline Network dense(std::vector<std::size_t> sizes, std::uint64_t seed, double gain) {
    std::vector<LayerSpec> layers;
    for (std::size_t i = 0; i + 1 < sizes.size(); ++i) layers.push_back(LayerSpec::dense(sizes[i], sizes[i + 1]));
    Network net = make_network(std::move(layers));
    init_weights(net, seed, gain);
    return net;
}

inline Dataset random_spike_data(std::size_t n, std::size_t t, std::size_t d, std::size_t classes,
                                 std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    Dataset ds{{d}, t, classes, std::vector<double>(n * t * d), {}};
    for (double& v : ds.values) v = uniform01(rng) < 0.5 ? 1.0 : 0.0;
    for (std::size_t i = 0; i < n; ++i) ds.labels.push_back(static_cast<std::uint32_t>(i % classes));
    return ds;
}

}  // namespace detail

/// Iterative solver against the sorted closed form on random instances.
inline CheckResult solver_equivalence(std::size_t instances = 1000, std::uint64_t seed = 1) {
    return detail::timed("solver equivalence", [&] {
        std::mt19937_64 rng(seed);
        double worst = 0.0, worst_sum = 0.0;
        bool in_range = true;
        for (std::size_t k = 0; k < instances; ++k) {
            const std::size_t n = 2 + uniform_index(rng, 255);
            const std::size_t s = 1 + uniform_index(rng, n);
            const auto g = detail::random_norms(n, rng);
            const auto a = solve_probabilities(g, s);
            const auto b = oracle::solve_probabilities_sorted(g, s);
            for (std::size_t i = 0; i < n; ++i) {
                worst = std::max(worst, std::abs(a.probabilities[i] - b.probabilities[i]));
                in_range = in_range && a.probabilities[i] >= 0.0 && a.probabilities[i] <= 1.0;
            }
            worst_sum = std::max(worst_sum, std::abs(detail::sum(a.probabilities) - static_cast<double>(s)));
        }
        const bool ok = worst <= 1e-9 && worst_sum <= 1e-9 && in_range;
        return CheckResult{{}, ok,
                           fmt::format("{} instances, max |dp| {:.3e}, max |sum p - S| {:.3e}, p in [0,1]: {}",
                                       instances, worst, worst_sum, in_range)};
    });
}

/// Solver objective against random feasible probability vectors.
inline CheckResult solver_optimality(std::size_t instances = 50, std::size_t n = 16, std::size_t points = 1000,
                                     std::uint64_t seed = 2) {
    return detail::timed("solver optimality", [&] {
        std::mt19937_64 rng(seed);
        std::size_t violations = 0;
        double min_gap = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < instances; ++k) {
            const auto g = detail::random_norms(n, rng);
            const std::size_t s = 1 + uniform_index(rng, n - 1);
            const double best = detail::objective(g, solve_probabilities(g, s).probabilities);
            for (std::size_t j = 0; j < points; ++j) {
                const double other = detail::objective(g, detail::random_feasible(n, static_cast<double>(s), rng));
                min_gap = std::min(min_gap, (other - best) / std::max(best, 1e-300));
                if (best > other * (1.0 + 1e-12)) ++violations;
            }
        }
        return CheckResult{{}, violations == 0,
                           fmt::format("{} instances x {} feasible points, {} violations, min relative margin {:.3e}",
                                       instances, points, violations, min_gap)};
    });
}

/// Shared setup for the estimator checks: a two-layer dense network with
/// T = 4 on 64 random spike examples, and its exact per-example gradients.
struct EstimatorSetup {
    std::vector<std::vector<double>> grads;
    std::vector<double> norms;
    std::vector<double> probabilities;
    std::size_t target = 0;
};

inline EstimatorSetup estimator_setup(std::uint64_t seed = 3) {
    NeuronConfig cfg;
    cfg.time_steps = 4;
    const Network net = detail::dense({16, 12, 4}, seed, 3.0);
    const Dataset ds = detail::random_spike_data(64, 4, 16, 4, seed + 1);
    EstimatorSetup s;
    s.grads = oracle::per_example_gradients(net, ds, cfg);
    for (const auto& g : s.grads) s.norms.push_back(l2_norm(g));
    s.target = 32;
    s.probabilities = smooth_probabilities(s.norms, s.target, 0.2).probabilities;
    return s;
}

/// Mean of the reweighted subset gradient against the full-data gradient.
inline CheckResult unbiasedness(const EstimatorSetup& s, std::size_t draws = 20000, std::uint64_t seed = 4,
                                std::size_t workers = 1) {
    return detail::timed("estimator unbiasedness", [&] {
        const auto st = oracle::estimator_stats(s.grads, s.probabilities, draws, seed, workers);
        const bool ok = st.max_z <= 4.0 && st.max_abs_deviation_zero_se <= 1e-12;
        return CheckResult{{}, ok,
                           fmt::format("{} draws, {} components, max |mean - g| / se = {:.3f}", draws,
                                       st.full_gradient.size(), st.max_z)};
    });
}

/// Monte-Carlo E||g_hat - g||^2 against the closed form, and the solver's
/// probabilities against uniform ones.
inline CheckResult variance_formula(const EstimatorSetup& s, std::size_t draws = 20000, std::uint64_t seed = 5,
                                    std::size_t workers = 1) {
    return detail::timed("variance formula", [&] {
        const auto st = oracle::estimator_stats(s.grads, s.probabilities, draws, seed, workers);
        const std::size_t n = s.norms.size();
        const double formula = oracle::variance_formula(s.norms, s.probabilities, n);
        const double rel = std::abs(st.mean_squared_error - formula) / formula;

        const auto optimal = solve_probabilities(s.norms, s.target);
        const std::vector<double> uniform(n, static_cast<double>(s.target) / static_cast<double>(n));
        const double v_opt = oracle::variance_formula(s.norms, optimal.probabilities, n);
        const double v_uni = oracle::variance_formula(s.norms, uniform, n);

        std::mt19937_64 rng(seed);
        bool lower_everywhere = v_opt < v_uni;
        for (int k = 0; k < 200; ++k) {
            const std::size_t m = 4 + uniform_index(rng, 60);
            const std::size_t t = 1 + uniform_index(rng, m - 1);
            const auto g = detail::random_norms(m, rng);
            const std::vector<double> u(m, static_cast<double>(t) / static_cast<double>(m));
            const double a = oracle::variance_formula(g, solve_probabilities(g, t).probabilities, m);
            lower_everywhere = lower_everywhere && a < oracle::variance_formula(g, u, m);
        }
        const bool ok = rel <= 0.05 && lower_everywhere;
        return CheckResult{{}, ok,
                           fmt::format("MC {:.6e} vs formula {:.6e} (rel {:.4f}); optimal {:.6e} < uniform {:.6e}; "
                                       "strictly lower on 200 random instances: {}",
                                       st.mean_squared_error, formula, rel, v_opt, v_uni, lower_everywhere)};
    });
}

/// Spike-aware score bounds the exact gradient norm.
inline CheckResult gradient_bound(std::uint64_t seed = 6) {
    return detail::timed("score bound", [&] {
        NeuronConfig cfg;
        cfg.time_steps = 4;
        const Network net = detail::dense({24, 16, 5}, seed, 3.0);
        const Dataset ds = detail::random_spike_data(256, 4, 24, 5, seed + 1);
        double worst_dense = std::numeric_limits<double>::infinity();
        for (const auto& layers : {std::vector<std::size_t>{1}, std::vector<std::size_t>{0, 1}}) {
            const auto rep = oracle::exact_grad_norms(net, ds, cfg, layers);
            for (double r : rep.ratios) worst_dense = std::min(worst_dense, r);
        }

        NeuronConfig one = cfg;
        one.time_steps = 1;
        const Network single = detail::dense({24, 5}, seed + 2, 4.0);
        const Dataset ds1 = detail::random_spike_data(64, 1, 24, 5, seed + 3);
        const std::vector<std::size_t> first{0};
        const auto eq = oracle::exact_grad_norms(single, ds1, one, first);
        double worst_eq = 0.0;
        for (std::size_t i = 0; i < ds1.size(); ++i)
            worst_eq = std::max(worst_eq, std::abs(eq.scores[i] - eq.restricted_norms[i]));

        NeuronConfig c3 = cfg;
        c3.time_steps = 3;
        const auto conv = LayerSpec::conv2d({1, 6, 6}, 4, 3, 1, 1);
        Network cnet = make_network({conv, LayerSpec::dense(conv.output_size(), 5)});
        init_weights(cnet, seed + 4, 3.0);
        const Dataset cds = detail::random_spike_data(64, 3, 36, 5, seed + 5);
        const auto crep = oracle::exact_grad_norms(cnet, cds, c3, first, PatchScaling::always);
        double worst_conv = std::numeric_limits<double>::infinity();
        for (double r : crep.ratios) worst_conv = std::min(worst_conv, r);

        const bool ok = worst_dense >= 1.0 - 1e-9 && worst_eq <= 1e-9 && worst_conv >= 1.0 - 1e-9;
        return CheckResult{{}, ok,
                           fmt::format("dense min G/norm {:.6f} (256 examples); T=1 single layer max |G - norm| "
                                       "{:.3e}; conv min G/norm {:.6f} (64 examples)",
                                       worst_dense, worst_eq, worst_conv)};
    });
}

/// Warm up on synthetic data, then correlate scores and losses with exact norms.
inline oracle::CorrelationReport correlation_after_warmup(std::uint64_t seed, std::size_t warmup = 5,
                                                          std::size_t workers = 1) {
    const Dataset all = gen_synthetic(10, 800, 8, 64, 0.2, seed);
    const Dataset train = slice(all, 0, 600);
    const Dataset probe = slice(all, 600, 800);
    NeuronConfig cfg;
    cfg.decay = 0.1;
    cfg.time_steps = 8;
    Network net = detail::dense({64, 64, 10}, seed + 10, 2.5);
    OptimizerState opt;
    opt.base_lr = opt.learning_rate = 0.5;
    opt.momentum = 0.9;
    opt.weight_decay = 5e-5;
    opt.schedule = LrSchedule::constant;
    TrainState st;
    st.batch_size = 32;
    st.init_seed = seed + 10;
    st.sample_seed = seed + 11;
    st.shuffle_seed = seed + 12;
    PruneConfig plain;
    plain.epochs = warmup;
    TrainOptions opts;
    opts.workers = workers;
    run_training(net, train, nullptr, cfg, plain, opt, st, opts);
    const std::vector<std::size_t> last{net.depth() - 1};
    return oracle::correlations(oracle::exact_grad_norms(net, probe, cfg, last, PatchScaling::when_mixed, workers));
}

inline CheckResult correlation_ordering(std::size_t seeds = 3, std::size_t workers = 1) {
    return detail::timed("correlation ordering", [&] {
        std::size_t wins = 0;
        std::string detail;
        for (std::size_t s = 0; s < seeds; ++s) {
            const auto c = correlation_after_warmup(100 + s, 5, workers);
            wins += c.score_vs_norm > c.loss_vs_norm;
            detail += fmt::format("{}seed {}: score {:.4f} vs loss {:.4f}", s ? "; " : "", 100 + s, c.score_vs_norm,
                                  c.loss_vs_norm);
        }
        return CheckResult{{}, wins == seeds, fmt::format("{}/{} seeds; {}", wins, seeds, detail)};
    });
}

/// Smoothing on random instances that trigger the floor, plus the worked case.
inline CheckResult smoothing(std::size_t instances = 500, std::uint64_t seed = 7) {
    return detail::timed("smoothing", [&] {
        std::mt19937_64 rng(seed);
        std::size_t triggered = 0, attempts = 0;
        double worst_floor = 0.0, worst_sum = 0.0;
        bool monotone = true;
        while (triggered < instances && attempts < 100 * instances) {
            ++attempts;
            const std::size_t n = 4 + uniform_index(rng, 120);
            const std::size_t s = 1 + uniform_index(rng, n - 1);
            const auto g = detail::random_norms(n, rng);
            const double beta = 0.9 * uniform01(rng) * static_cast<double>(s) / static_cast<double>(n);
            const auto base = solve_probabilities(g, s);
            double base_min = 1.0;
            for (double p : base.probabilities)
                if (p < 1.0) base_min = std::min(base_min, p);
            if (!(base_min < beta)) continue;
            ++triggered;
            const auto pa = smooth_probabilities(g, s, beta);
            double min_p = 1.0;
            for (double p : pa.probabilities)
                if (p < 1.0) min_p = std::min(min_p, p);
            worst_floor = std::max(worst_floor, std::abs(min_p - beta));
            worst_sum = std::max(worst_sum, std::abs(detail::sum(pa.probabilities) - static_cast<double>(s)));
            std::vector<std::size_t> order(n);
            std::iota(order.begin(), order.end(), std::size_t{0});
            std::sort(order.begin(), order.end(), [&](auto a, auto b) { return g[a] < g[b]; });
            for (std::size_t i = 1; i < n; ++i)
                monotone = monotone && pa.probabilities[order[i - 1]] <= pa.probabilities[order[i]] + 1e-15;
        }
        const auto worked = smooth_probabilities(std::vector<double>{1, 9}, 1, 0.3);
        const bool worked_ok = std::abs(worked.gamma - 5.0) <= 1e-12 &&
                               std::abs(worked.probabilities[0] - 0.3) <= 1e-15 &&
                               std::abs(worked.probabilities[1] - 0.7) <= 1e-15;
        const bool ok = triggered == instances && worst_floor <= 1e-9 && worst_sum <= 1e-9 && monotone && worked_ok;
        return CheckResult{{}, ok,
                           fmt::format("{} triggered instances, max |min p - beta| {:.3e}, max |sum p - S| {:.3e}, "
                                       "monotone: {}; [1,9] S=1 beta=0.3 -> gamma {}, p [{}, {}]",
                                       triggered, worst_floor, worst_sum, monotone, worked.gamma,
                                       worked.probabilities[0], worked.probabilities[1])};
    });
}

/// Endpoint, constant case and epoch means of the ratio schedule.
inline CheckResult schedule() {
    return detail::timed("ratio schedule", [] {
        bool endpoint = true, constant = true;
        double worst_mean = 0.0, worst_exact = 0.0;
        for (auto [r, r_max] : std::vector<std::pair<double, double>>{{0.3, 0.6}, {0.5, 0.7}, {0.7, 0.9}, {0.4, 0.75}})
            for (std::size_t k : {1, 10, 30, 200}) {
                PruneConfig p;
                p.enabled = true;
                p.ratio = r;
                p.max_ratio = r_max;
                p.epochs = k;
                endpoint = endpoint && schedule_ratio(k, p) == r_max;
                PruneConfig c = p;
                c.max_ratio = r;
                double mean = 0.0, exact = 0.0;
                for (std::size_t e = 1; e <= k; ++e) {
                    constant = constant && schedule_ratio(e, c) == r;
                    mean += schedule_ratio(e, p);
                }
                p.exact_average = true;
                for (std::size_t e = 1; e <= k; ++e) exact += schedule_ratio(e, p);
                const double kk = static_cast<double>(k);
                worst_mean = std::max(worst_mean, std::abs(mean / kk - (r + (r_max - r) / kk)));
                worst_exact = std::max(worst_exact, std::abs(exact / kk - r));
            }
        const bool ok = endpoint && constant && worst_mean <= 1e-14 && worst_exact <= 1e-14;
        return CheckResult{{}, ok,
                           fmt::format("r_K = r_max: {}; constant: {}; max mean error {:.3e}; exact-average error "
                                       "{:.3e}",
                                       endpoint, constant, worst_mean, worst_exact)};
    });
}

/// Finite differences against BPTT, and exact zeros behind silent layers.
inline CheckResult bptt(std::uint64_t seed = 8) {
    return detail::timed("BPTT gradients", [&] {
        NeuronConfig cfg;
        cfg.time_steps = 4;
        cfg.decay = 0.6;
        cfg.mode = SpikeMode::smooth;
        const Network net = detail::dense({16, 12, 4}, seed, 3.0);
        std::mt19937_64 rng(seed);
        std::vector<double> x(4 * 16);
        for (double& v : x) v = uniform01(rng) < 0.5 ? 1.0 : 0.0;
        const auto fd = oracle::fd_gradient_check(net, x, 1, cfg, 1e-6, 100, seed + 1);

        NeuronConfig hard;
        hard.time_steps = 4;
        Network silent = detail::dense({16, 12, 4}, seed + 2, 3.0);
        for (double& w : silent.weights[0]) w = -std::abs(w);
        const auto ft = forward(silent, x, 0, hard);
        const auto bt = backward_bptt(silent, ft, hard);
        double zero_max = 0.0;
        for (double g : bt.weight_grads[1]) zero_max = std::max(zero_max, std::abs(g));
        const auto ft0 = forward(silent, std::vector<double>(x.size(), 0.0), 0, hard);
        const auto bt0 = backward_bptt(silent, ft0, hard);
        for (double g : bt0.weight_grads[0]) zero_max = std::max(zero_max, std::abs(g));

        const bool ok = fd.max_relative_error <= 1e-4 && zero_max == 0.0;
        return CheckResult{{}, ok,
                           fmt::format("FD on {} parameters: max relative error {:.3e}; silent-layer gradients max "
                                       "|g| = {}",
                                       fd.trials, fd.max_relative_error, zero_max)};
    });
}

/// Pruning enabled with r = 0 against pruning disabled, same seeds.
inline CheckResult identity_at_zero(std::size_t workers = 1) {
    return detail::timed("identity at r = 0", [&] {
        const Dataset all = gen_synthetic(5, 300, 4, 20, 0.1, 9);
        const Dataset train = slice(all, 0, 200), test = slice(all, 200, 300);
        NeuronConfig cfg;
        cfg.time_steps = 4;
        auto run = [&](bool enabled, std::vector<MetricsRow>& rows) {
            Network net = detail::dense({20, 16, 5}, 4, 2.5);
            OptimizerState opt;
            opt.base_lr = opt.learning_rate = 0.5;
            opt.momentum = 0.9;
            opt.weight_decay = 5e-5;
            TrainState st;
            st.batch_size = 16;
            PruneConfig p;
            p.enabled = enabled;
            p.epochs = 4;
            p.smoothing = 0.3;
            TrainOptions o;
            o.workers = workers;
            rows = run_training(net, train, &test, cfg, p, opt, st, o);
            return net;
        };
        std::vector<MetricsRow> a, b;
        const Network na = run(true, a), nb = run(false, b);
        bool same = na.weights == nb.weights && a.size() == b.size();
        for (std::size_t k = 0; same && k < a.size(); ++k)
            same = a[k].ratio == b[k].ratio && a[k].processed == b[k].processed &&
                   a[k].train_loss == b[k].train_loss && a[k].test_accuracy == b[k].test_accuracy &&
                   a[k].gamma == b[k].gamma && a[k].solver_iterations == b[k].solver_iterations;
        return CheckResult{{}, same, same ? "weights and metrics bit-identical over 4 epochs" : "runs differ"};
    });
}

/// Every check above at its default size.
inline std::vector<CheckResult> run_all(std::size_t workers = 1) {
    std::vector<CheckResult> out;
    out.push_back(solver_equivalence());
    out.push_back(solver_optimality());
    const EstimatorSetup setup = estimator_setup();
    out.push_back(unbiasedness(setup, 20000, 4, workers));
    out.push_back(variance_formula(setup, 20000, 5, workers));
    out.push_back(gradient_bound());
    out.push_back(correlation_ordering(3, workers));
    out.push_back(smoothing());
    out.push_back(schedule());
    out.push_back(bptt());
    out.push_back(identity_at_zero(workers));
    return out;
}

inline std::string format_report(const std::vector<CheckResult>& results) {
    std::string out;
    std::size_t passed = 0;
    for (const auto& r : results) {
        passed += r.passed;
        out += fmt::format("{} {} ({:.2f}s): {}\n", r.passed ? "PASS" : "FAIL", r.name, r.seconds, r.detail);
    }
    out += fmt::format("{}/{} checks passed\n", passed, results.size());
    return out;
}

}  // namespace sadp::verify
