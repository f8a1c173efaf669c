#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "sadp/common.hpp"

namespace sadp {

/// Selection probabilities for one epoch, plus how they were obtained.
struct ProbabilityAssignment {
    std::vector<double> probabilities;
    std::size_t target_size = 0;  // S, the requested expected subset size
    double expected_size = 0.0;   // sum of probabilities
    double gamma = 0.0;           // smoothing offset added to every score
    double alpha = 0.0;           // clipping level: scores >= alpha get probability 1
    std::size_t clipped = 0;      // M, number of probabilities equal to 1
    std::size_t iterations = 0;   // solver rounds
    bool smoothing_fallback = false;

    std::size_t size() const { return probabilities.size(); }
};

namespace detail {

inline void check_scores(std::span<const double> scores, std::size_t target_size) {
    if (scores.empty()) throw ConfigError("no scores given");
    if (target_size == 0 || target_size > scores.size())
        throw ConfigError("target size must lie in [1, N]; got " + std::to_string(target_size));
    bool any_positive = false;
    for (double g : scores) {
        if (!std::isfinite(g) || g < 0.0) throw NumericError("scores must be finite and non-negative");
        any_positive |= g > 0.0;
    }
    if (!any_positive) throw DegenerateScoreError("all importance scores are zero");
}

inline ProbabilityAssignment all_ones(std::size_t n) {
    ProbabilityAssignment pa;
    pa.probabilities.assign(n, 1.0);
    pa.target_size = n;
    pa.expected_size = static_cast<double>(n);
    pa.alpha = 0.0;
    pa.clipped = n;
    return pa;
}

}  // namespace detail

/// Probabilities clamped to 1 once they reach 1 - kClampTolerance.
inline constexpr double kClampTolerance = 1e-12;

/// Variance-minimizing selection probabilities, sort-free.
///
/// Each round distributes the remaining budget S - (clamped count) over the
/// unclamped examples in proportion to their scores; anything that reaches 1
/// is fixed at 1 and leaves the pool. At most N rounds. Examples with zero
/// score get probability 0 unless only zero-score examples remain, in which
/// case the leftover budget is spread uniformly over them.
inline ProbabilityAssignment solve_probabilities(std::span<const double> scores, std::size_t target_size) {
    detail::check_scores(scores, target_size);
    const std::size_t n = scores.size();
    if (target_size == n) return detail::all_ones(n);

    ProbabilityAssignment pa;
    pa.target_size = target_size;
    pa.probabilities.assign(n, 0.0);
    std::vector<std::size_t> pool(n);
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    std::size_t clamped = 0;

    for (;;) {
        ++pa.iterations;
        const double budget = static_cast<double>(target_size - clamped);
        double mass = 0.0;
        for (auto i : pool) mass += scores[i];
        if (mass == 0.0) {
            for (auto i : pool) pa.probabilities[i] = budget / static_cast<double>(pool.size());
            pa.alpha = 0.0;
            break;
        }
        std::vector<std::size_t> keep;
        keep.reserve(pool.size());
        for (auto i : pool) {
            const double p = scores[i] * budget / mass;
            if (p >= 1.0 - kClampTolerance) {
                pa.probabilities[i] = 1.0;
                ++clamped;
            } else {
                pa.probabilities[i] = p;
                keep.push_back(i);
            }
        }
        pa.alpha = mass / budget;
        if (keep.size() == pool.size()) break;
        pool = std::move(keep);
        if (clamped == target_size) {
            for (auto i : pool) pa.probabilities[i] = 0.0;
            break;
        }
        if (pa.iterations > n) throw InvariantViolation("probability solver did not converge");
    }
    pa.clipped = clamped;
    pa.expected_size = std::accumulate(pa.probabilities.begin(), pa.probabilities.end(), 0.0);
    return pa;
}

/// Probabilities with a floor: if the smallest unclamped probability is below
/// `beta`, every score is shifted by an offset gamma chosen so that the
/// smallest unclamped probability equals `beta` exactly.
///
/// For the unclamped set R with budget c = S - N + |R|, gamma solves
///   (G_min + gamma) c / sum_{j in R} (G_j + gamma) = beta
/// in closed form. The shifted scores are re-solved (shifting can release
/// clamped examples, which changes R); this repeats until R is stable.
/// Zero-score examples belong to R and are lifted with everyone else.
/// If beta * |R| >= c no offset can reach the floor and R falls back to the
/// uniform value c / |R|.
inline ProbabilityAssignment smooth_probabilities(std::span<const double> scores, std::size_t target_size,
                                                  double beta) {
    if (!(beta >= 0.0 && beta < 1.0)) throw ConfigError("smoothing constant must lie in [0, 1)");
    ProbabilityAssignment base = solve_probabilities(scores, target_size);
    if (beta == 0.0) return base;

    const std::size_t n = scores.size();
    auto unclamped = [](const ProbabilityAssignment& pa) {
        std::vector<std::size_t> r;
        for (std::size_t i = 0; i < pa.size(); ++i)
            if (pa.probabilities[i] < 1.0) r.push_back(i);
        return r;
    };

    std::vector<std::size_t> pool = unclamped(base);
    if (pool.empty()) return base;
    double min_p = 1.0;
    for (auto i : pool) min_p = std::min(min_p, base.probabilities[i]);
    if (min_p >= beta) return base;

    std::size_t total_iterations = base.iterations;
    for (std::size_t round = 0; round <= n; ++round) {
        const double budget = static_cast<double>(target_size) - static_cast<double>(n - pool.size());
        const double size = static_cast<double>(pool.size());
        double mass = 0.0;
        double g_min = std::numeric_limits<double>::infinity();
        for (auto i : pool) {
            mass += scores[i];
            g_min = std::min(g_min, scores[i]);
        }
        const double denom = budget - beta * size;
        if (!(denom > 0.0) && pool.size() < n) {
            // The clamped set of the unshifted solution is too large; the shift
            // releases examples from it, so restart from the full set.
            pool.resize(n);
            std::iota(pool.begin(), pool.end(), std::size_t{0});
            continue;
        }
        if (!(denom > 0.0)) {
            logger()->warn("smoothing constant {} infeasible for {} unclamped examples with budget {}; "
                           "using uniform probabilities",
                           beta, pool.size(), budget);
            ProbabilityAssignment pa = base;
            pa.probabilities.assign(n, 1.0);
            for (auto i : pool) pa.probabilities[i] = budget / size;
            pa.gamma = std::numeric_limits<double>::infinity();
            pa.smoothing_fallback = true;
            pa.iterations = total_iterations;
            pa.expected_size = std::accumulate(pa.probabilities.begin(), pa.probabilities.end(), 0.0);
            return pa;
        }
        const double gamma = std::max(0.0, (beta * mass - budget * g_min) / denom);
        std::vector<double> shifted(scores.begin(), scores.end());
        for (double& g : shifted) g += gamma;
        ProbabilityAssignment pa = solve_probabilities(shifted, target_size);
        total_iterations += pa.iterations;
        auto next = unclamped(pa);
        if (next == pool) {
            pa.gamma = gamma;
            pa.iterations = total_iterations;
            return pa;
        }
        pool = std::move(next);
        if (pool.empty()) {
            pa.gamma = gamma;
            pa.iterations = total_iterations;
            return pa;
        }
    }
    // The fixed point cycled; bisect on the shift for min unclamped p == beta.
    auto floor_at = [&](double gamma) {
        std::vector<double> shifted(scores.begin(), scores.end());
        for (double& g : shifted) g += gamma;
        ProbabilityAssignment pa = solve_probabilities(shifted, target_size);
        double m = 1.0;
        for (double p : pa.probabilities)
            if (p < 1.0) m = std::min(m, p);
        pa.gamma = gamma;
        return std::pair{m, pa};
    };
    double lo = 0.0, hi = 1.0;
    for (double v : scores) hi = std::max(hi, v);
    int guard = 0;
    while (floor_at(hi).first < beta) {
        hi *= 2.0;
        if (++guard > 200) throw InvariantViolation("smoothing did not settle on a stable unclamped set");
    }
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (floor_at(mid).first < beta ? lo : hi) = mid;
    }
    ProbabilityAssignment pa = floor_at(hi).second;
    pa.iterations += total_iterations;
    return pa;
}

/// Probabilities S/N for everyone (random pruning, and the fallback for degenerate scores).
inline ProbabilityAssignment uniform_probabilities(std::size_t n, std::size_t target_size) {
    if (target_size == 0 || target_size > n) throw ConfigError("target size must lie in [1, N]");
    if (target_size == n) return detail::all_ones(n);
    ProbabilityAssignment pa;
    pa.probabilities.assign(n, static_cast<double>(target_size) / static_cast<double>(n));
    pa.target_size = target_size;
    pa.expected_size = std::accumulate(pa.probabilities.begin(), pa.probabilities.end(), 0.0);
    return pa;
}

}  // namespace sadp
