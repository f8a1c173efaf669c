#pragma once

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "sadp/network.hpp"

namespace sadp {

/// Per-example importance scores with the epoch each was last refreshed.
struct ScoreTable {
    std::vector<double> scores;
    std::vector<std::size_t> last_updated_epoch;
    std::vector<std::size_t> score_layers;

    /// All scores equal: the first epoch samples uniformly.
    static ScoreTable uniform(std::size_t n, std::vector<std::size_t> layers, double value = 1.0) {
        return ScoreTable{std::vector<double>(n, value), std::vector<std::size_t>(n, 0), std::move(layers)};
    }

    std::size_t size() const { return scores.size(); }

    void update(std::size_t i, double score, std::size_t epoch) {
        if (!std::isfinite(score) || score < 0.0)
            throw NumericError("importance score must be finite and non-negative");
        scores[i] = score;
        last_updated_epoch[i] = epoch;
    }
};

/// When the sqrt(N_patch) factor of convolutional layers is applied to a score.
enum class PatchScaling {
    when_mixed,  // only if the selected layers have different patch counts
    always,
    never,
};

/// Resolves "last" / "all" / "0,2" style layer selections.
inline std::vector<std::size_t> resolve_score_layers(const Network& net, const std::string& spec) {
    std::vector<std::size_t> out;
    if (spec.empty() || spec == "last") {
        out.push_back(net.depth() - 1);
    } else if (spec == "all") {
        for (std::size_t l = 0; l < net.depth(); ++l) out.push_back(l);
    } else {
        std::size_t pos = 0;
        while (pos <= spec.size()) {
            const std::size_t comma = std::min(spec.find(',', pos), spec.size());
            const std::string tok = spec.substr(pos, comma - pos);
            std::size_t used = 0;
            long v = -1;
            try {
                v = std::stol(tok, &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used != tok.size() || tok.empty() || v < 0 || static_cast<std::size_t>(v) >= net.depth())
                throw ConfigError("score.layers: bad layer index '" + tok + "'");
            out.push_back(static_cast<std::size_t>(v));
            pos = comma + 1;
        }
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

/// Per-layer multipliers used by spike_aware_score.
inline std::vector<double> patch_factors(const Network& net, std::span<const std::size_t> layers,
                                         PatchScaling scaling) {
    std::set<std::size_t> counts;
    for (auto l : layers) counts.insert(net.layers[l].patch_count);
    const bool apply = scaling == PatchScaling::always || (scaling == PatchScaling::when_mixed && counts.size() > 1);
    std::vector<double> f;
    for (auto l : layers) f.push_back(apply ? std::sqrt(static_cast<double>(net.layers[l].patch_count)) : 1.0);
    return f;
}

/// Spike-aware importance score of one example:
///   G = sum_{l in layers} c_l sum_t ||delta^l[t]|| * ||o^{l-1}[t]||.
/// It upper-bounds the gradient norm restricted to `layers` (for conv layers,
/// once the sqrt(N_patch) factor c_l is in place) without forming any outer product.
inline double spike_aware_score(const Network& net, const ForwardTrace& ft, const BackwardTrace& bt,
                                std::span<const std::size_t> layers,
                                PatchScaling scaling = PatchScaling::when_mixed) {
    if (layers.empty()) throw ConfigError("spike_aware_score: empty score layer set");
    const auto factors = patch_factors(net, layers, scaling);
    double g = 0.0;
    for (std::size_t k = 0; k < layers.size(); ++k) {
        const std::size_t l = layers[k];
        if (l >= net.depth()) throw ConfigError("spike_aware_score: layer index out of range");
        double layer_sum = 0.0;
        for (std::size_t t = 0; t < ft.time_steps; ++t) {
            const double in_norm = l2_norm(ft.spikes_at(l, t));
            if (in_norm == 0.0) continue;
            layer_sum += l2_norm(bt.error_at(l, t)) * in_norm;
        }
        g += factors[k] * layer_sum;
    }
    return g;
}

inline std::vector<double> spike_aware_score(const Network& net, std::span<const ForwardTrace> fts,
                                             std::span<const BackwardTrace> bts, std::span<const std::size_t> layers,
                                             PatchScaling scaling = PatchScaling::when_mixed) {
    if (fts.size() != bts.size()) throw DimensionError("spike_aware_score: trace counts differ");
    std::vector<double> g(fts.size());
    for (std::size_t i = 0; i < fts.size(); ++i) g[i] = spike_aware_score(net, fts[i], bts[i], layers, scaling);
    return g;
}

/// Loss-valued importance score (the baseline that ranks examples by loss).
inline std::vector<double> loss_score(const LossOutput& loss) { return loss.per_example_loss; }

}  // namespace sadp
