#pragma once

#include <chrono>
#include <functional>
#include <limits>
#include <random>
#include <vector>

#include "sadp/data.hpp"
#include "sadp/network.hpp"
#include "sadp/optimizer.hpp"
#include "sadp/probability.hpp"
#include "sadp/sampling.hpp"
#include "sadp/schedule.hpp"
#include "sadp/score.hpp"

namespace sadp {

struct TrainState {
    std::size_t epoch = 0;
    std::size_t batch_size = 32;
    std::uint64_t init_seed = 1;
    std::uint64_t sample_seed = 2;
    std::uint64_t shuffle_seed = 3;
    std::vector<MetricsRow> history;
};

struct TrainOptions {
    std::size_t workers = 1;
    std::vector<std::size_t> score_layers;  // empty: last layer
    std::function<void(const MetricsRow&, const Network&)> on_epoch;
    std::function<void(const ProbabilityAssignment&, const EpochPlan&)> on_plan;
};

/// Fraction of correctly classified examples.
inline double evaluate_accuracy(const Network& net, const Dataset& ds, const NeuronConfig& cfg,
                                std::size_t workers = 1) {
    std::vector<std::uint8_t> hit(ds.size(), 0);
    parallel_for(ds.size(), workers, [&](std::size_t i) {
        const auto tr = forward(net, ds.example(i), ds.labels[i], cfg);
        hit[i] = predict(tr) == ds.labels[i];
    });
    std::size_t correct = 0;
    for (auto h : hit) correct += h;
    return static_cast<double>(correct) / static_cast<double>(ds.size());
}

/// Selection probabilities for one epoch from the current score table.
inline ProbabilityAssignment epoch_probabilities(const ScoreTable& table, ScoreKind kind, std::size_t target,
                                                 double beta) {
    const std::size_t n = table.size();
    if (target == n || kind == ScoreKind::uniform) return uniform_probabilities(n, target);
    try {
        return smooth_probabilities(table.scores, target, beta);
    } catch (const DegenerateScoreError&) {
        logger()->warn("all importance scores are zero; sampling uniformly this epoch");
        return uniform_probabilities(n, target);
    }
}

/// In-place Fisher-Yates with a portable index draw.
template <class Rng>
void shuffle_indices(std::vector<std::size_t>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[uniform_index(rng, i)]);
}

/// The pruned training loop.
///
/// Per epoch k: schedule r_k, turn the score table into probabilities
/// (solver plus smoothing), draw a Bernoulli subset, and train on the
/// realized subset in shuffled mini-batches. Each selected example's loss is
/// weighted by S_k / (N p_i); its score is refreshed from the traces of the
/// same forward/backward pass. Unselected examples keep their last score.
/// With pruning disabled every p_i is 1 and this is ordinary SGD.
inline std::vector<MetricsRow> run_training(Network& net, const Dataset& train, const Dataset* test,
                                            const NeuronConfig& cfg, const PruneConfig& prune, OptimizerState& opt,
                                            TrainState& state, const TrainOptions& options = {}) {
    cfg.validate();
    prune.validate();
    opt.validate();
    net.validate();
    train.validate();
    if (train.time_steps != cfg.time_steps)
        throw ConfigError("training data has " + std::to_string(train.time_steps) + " time steps, neuron config " +
                          std::to_string(cfg.time_steps));
    if (state.batch_size < 1) throw ConfigError("batch size must be positive");
    const std::size_t n = train.size();
    const std::size_t epochs = prune.epochs;

    std::vector<std::size_t> layers = options.score_layers;
    if (layers.empty()) layers.push_back(net.depth() - 1);
    ScoreTable table = ScoreTable::uniform(n, layers);

    std::mt19937_64 sample_rng(state.sample_seed);
    std::mt19937_64 shuffle_rng(state.shuffle_seed);

    for (std::size_t k = state.epoch + 1; k <= epochs; ++k) {
        state.epoch = k;
        const auto start = std::chrono::steady_clock::now();
        opt.learning_rate = opt.schedule == LrSchedule::cosine ? cosine_lr(k, epochs, opt.base_lr) : opt.base_lr;

        MetricsRow row;
        row.epoch = k;
        row.ratio = prune.enabled ? schedule_ratio(k, prune) : 0.0;
        const std::size_t target = target_size(row.ratio, n);

        if (target == 0) {
            logger()->warn("epoch {}: target subset is empty; skipping", k);
            row.test_accuracy = test ? evaluate_accuracy(net, *test, cfg, options.workers)
                                     : std::numeric_limits<double>::quiet_NaN();
            state.history.push_back(row);
            if (options.on_epoch) options.on_epoch(row, net);
            continue;
        }

        const ProbabilityAssignment pa =
            prune.enabled ? epoch_probabilities(table, prune.score, target, prune.smoothing) : detail::all_ones(n);
        row.gamma = pa.gamma;
        row.solver_iterations = pa.iterations;

        EpochPlan plan = sample_subset(pa, sample_rng);
        plan.epoch = k;
        plan.ratio = row.ratio;
        if (options.on_plan) options.on_plan(pa, plan);
        if (plan.selected_indices.empty()) {
            logger()->warn("epoch {}: no example was selected; skipping", k);
            row.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            row.test_accuracy = test ? evaluate_accuracy(net, *test, cfg, options.workers)
                                     : std::numeric_limits<double>::quiet_NaN();
            state.history.push_back(row);
            if (options.on_epoch) options.on_epoch(row, net);
            continue;
        }
        const std::vector<double> weights = loss_weights(pa, plan, n, target);
        std::vector<double> weight_of(n, 0.0);
        for (std::size_t s = 0; s < plan.selected_indices.size(); ++s) weight_of[plan.selected_indices[s]] = weights[s];

        std::vector<std::size_t> order = plan.selected_indices;
        shuffle_indices(order, shuffle_rng);

        double loss_sum = 0.0;
        std::vector<std::vector<double>> grads(net.depth());
        for (std::size_t b = 0; b < order.size(); b += state.batch_size) {
            const std::size_t end = std::min(order.size(), b + state.batch_size);
            const std::size_t count = end - b;
            std::vector<ForwardTrace> fts(count);
            std::vector<BackwardTrace> bts(count);
            std::vector<double> scores(count, 0.0);
            parallel_for(count, options.workers, [&](std::size_t j) {
                const std::size_t i = order[b + j];
                fts[j] = forward(net, train.example(i), train.labels[i], cfg);
                bts[j] = backward_bptt(net, fts[j], cfg, weight_of[i] / static_cast<double>(count));
                if (prune.enabled && prune.score == ScoreKind::spike_aware)
                    scores[j] = spike_aware_score(net, fts[j], bts[j], layers);
            });
            for (std::size_t l = 0; l < net.depth(); ++l) grads[l].assign(net.weights[l].size(), 0.0);
            for (std::size_t j = 0; j < count; ++j) {
                const std::size_t i = order[b + j];
                if (!std::isfinite(fts[j].loss))
                    throw NumericError("non-finite loss at epoch " + std::to_string(k) + ", example " +
                                       std::to_string(i));
                loss_sum += fts[j].loss;
                for (std::size_t l = 0; l < net.depth(); ++l)
                    for (std::size_t w = 0; w < grads[l].size(); ++w) grads[l][w] += bts[j].weight_grads[l][w];
                if (prune.enabled && prune.score == ScoreKind::spike_aware) table.update(i, scores[j], k);
                if (prune.enabled && prune.score == ScoreKind::loss) table.update(i, fts[j].loss, k);
            }
            sgd_step(net.weights, grads, opt);
        }
        row.processed = order.size();
        row.train_loss = loss_sum / static_cast<double>(order.size());
        row.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        row.test_accuracy =
            test ? evaluate_accuracy(net, *test, cfg, options.workers) : std::numeric_limits<double>::quiet_NaN();
        logger()->info("epoch {}: ratio {:.4f} processed {} loss {:.5f} test_acc {:.4f} ({:.3f}s)", k, row.ratio,
                       row.processed, row.train_loss, row.test_accuracy, row.wall_seconds);
        state.history.push_back(row);
        if (options.on_epoch) options.on_epoch(row, net);
    }
    return state.history;
}

}  // namespace sadp
