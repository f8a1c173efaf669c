#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "sadp/trainer.hpp"
#include "test_util.hpp"

using namespace sadp;

namespace {

struct Fixture {
    Dataset all = gen_synthetic(4, 136, 4, 16, 0.1, 7);
    Dataset train = slice(all, 0, 96);
    Dataset test = slice(all, 96, 136);
    NeuronConfig cfg;
    OptimizerState opt;
    TrainState state;

    Fixture() {
        cfg.time_steps = 4;
        opt.learning_rate = opt.base_lr = 0.5;
        opt.momentum = 0.9;
        opt.weight_decay = 5e-5;
        state.batch_size = 16;
    }
};

Network fresh_net(std::uint64_t seed) { return sadp::testing::dense_net({16, 24, 4}, seed, 2.5); }

PruneConfig pruning(double r, double r_max, std::size_t epochs, double beta) {
    PruneConfig p;
    p.enabled = true;
    p.ratio = r;
    p.max_ratio = r_max;
    p.epochs = epochs;
    p.smoothing = beta;
    return p;
}

// Ordinary mini-batch SGD over the whole set, written independently of the
// trainer: shuffle, batch-mean gradient, optimizer step.
std::vector<double> plain_training(Network& net, const Dataset& ds, const NeuronConfig& cfg, OptimizerState opt,
                                   std::size_t epochs, std::size_t batch, std::uint64_t shuffle_seed) {
    std::mt19937_64 rng(shuffle_seed);
    std::vector<double> losses;
    for (std::size_t k = 1; k <= epochs; ++k) {
        opt.learning_rate = cosine_lr(k, epochs, opt.base_lr);
        std::vector<std::size_t> order(ds.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
        double loss = 0.0;
        for (std::size_t b = 0; b < order.size(); b += batch) {
            const std::size_t count = std::min(batch, order.size() - b);
            std::vector<std::vector<double>> grads;
            for (const auto& w : net.weights) grads.emplace_back(w.size(), 0.0);
            for (std::size_t j = 0; j < count; ++j) {
                const std::size_t i = order[b + j];
                const auto ft = forward(net, ds.example(i), ds.labels[i], cfg);
                const auto bt = backward_bptt(net, ft, cfg, 1.0 / static_cast<double>(count));
                loss += ft.loss;
                for (std::size_t l = 0; l < grads.size(); ++l)
                    for (std::size_t w = 0; w < grads[l].size(); ++w) grads[l][w] += bt.weight_grads[l][w];
            }
            sgd_step(net.weights, grads, opt);
        }
        losses.push_back(loss / static_cast<double>(ds.size()));
    }
    return losses;
}

}  // namespace

TEST(RunTraining, ZeroRatioIsPlainTraining) {
    Fixture s;
    Network reference = fresh_net(3);
    const auto losses = plain_training(reference, s.train, s.cfg, s.opt, 4, s.state.batch_size, s.state.shuffle_seed);

    for (auto kind : {ScoreKind::spike_aware, ScoreKind::loss}) {
        Fixture t;
        Network net = fresh_net(3);
        auto prune = pruning(0.0, 0.0, 4, 0.35);
        prune.score = kind;
        const auto rows = run_training(net, t.train, nullptr, t.cfg, prune, t.opt, t.state);
        ASSERT_EQ(rows.size(), 4u);
        EXPECT_EQ(net.weights, reference.weights);
        for (std::size_t k = 0; k < 4; ++k) {
            EXPECT_EQ(rows[k].train_loss, losses[k]);
            EXPECT_EQ(rows[k].processed, t.train.size());
            EXPECT_EQ(rows[k].ratio, 0.0);
        }
    }
}

TEST(RunTraining, DisabledPruningMatchesZeroRatio) {
    Fixture a, b;
    Network na = fresh_net(5), nb = fresh_net(5);
    PruneConfig off;
    off.epochs = 3;
    run_training(na, a.train, nullptr, a.cfg, off, a.opt, a.state);
    run_training(nb, b.train, nullptr, b.cfg, pruning(0.0, 0.0, 3, 0.2), b.opt, b.state);
    EXPECT_EQ(na.weights, nb.weights);
}

TEST(RunTraining, ProcessedCountMatchesExpectation) {
    const std::size_t epochs = 6;
    double total = 0.0;
    std::size_t samples = 0;
    for (std::uint64_t seed : {11, 12, 13}) {
        Fixture s;
        s.state.sample_seed = seed;
        s.state.shuffle_seed = seed + 100;
        Network net = fresh_net(seed);
        const auto rows = run_training(net, s.train, nullptr, s.cfg, pruning(0.5, 0.5, epochs, 0.3), s.opt, s.state);
        for (const auto& r : rows) {
            EXPECT_EQ(r.ratio, 0.5);
            total += static_cast<double>(r.processed);
            ++samples;
        }
    }
    const double n = 96.0;
    // sum p_i(1 - p_i) <= N/4 for any probabilities summing to N/2.
    const double sigma = std::sqrt(n / 4.0 / static_cast<double>(samples));
    EXPECT_LE(std::abs(total / static_cast<double>(samples) - n / 2.0), 4.0 * sigma);
}

TEST(RunTraining, DeterministicUnderFixedSeeds) {
    std::vector<MetricsRow> first;
    Network first_net;
    for (int run = 0; run < 2; ++run) {
        Fixture s;
        Network net = fresh_net(21);
        const auto rows = run_training(net, s.train, &s.test, s.cfg, pruning(0.5, 0.7, 5, 0.3), s.opt, s.state);
        if (run == 0) {
            first = rows;
            first_net = net;
            continue;
        }
        EXPECT_EQ(net.weights, first_net.weights);
        ASSERT_EQ(rows.size(), first.size());
        for (std::size_t k = 0; k < rows.size(); ++k) {
            EXPECT_EQ(rows[k].processed, first[k].processed);
            EXPECT_EQ(rows[k].train_loss, first[k].train_loss);
            EXPECT_EQ(rows[k].test_accuracy, first[k].test_accuracy);
            EXPECT_EQ(rows[k].gamma, first[k].gamma);
            EXPECT_EQ(rows[k].solver_iterations, first[k].solver_iterations);
        }
    }
}

TEST(RunTraining, WorkerCountDoesNotChangeResults) {
    Fixture a, b;
    Network na = fresh_net(4), nb = fresh_net(4);
    TrainOptions one, three;
    three.workers = 3;
    run_training(na, a.train, nullptr, a.cfg, pruning(0.5, 0.7, 3, 0.3), a.opt, a.state, one);
    run_training(nb, b.train, nullptr, b.cfg, pruning(0.5, 0.7, 3, 0.3), b.opt, b.state, three);
    EXPECT_EQ(na.weights, nb.weights);
}

TEST(RunTraining, FollowsScheduleAndLearns) {
    Fixture s;
    Network net = fresh_net(2);
    auto prune = pruning(0.5, 0.7, 20, 0.3);
    std::size_t callbacks = 0;
    TrainOptions opts;
    opts.on_epoch = [&](const MetricsRow&, const Network&) { ++callbacks; };
    const auto rows = run_training(net, s.train, &s.test, s.cfg, prune, s.opt, s.state, opts);
    ASSERT_EQ(rows.size(), 20u);
    EXPECT_EQ(callbacks, 20u);
    for (std::size_t k = 0; k < rows.size(); ++k) {
        EXPECT_EQ(rows[k].epoch, k + 1);
        EXPECT_EQ(rows[k].ratio, schedule_ratio(k + 1, prune));
        EXPECT_GT(rows[k].processed, 0u);
        EXPECT_LT(rows[k].processed, s.train.size());
    }
    EXPECT_GT(rows.back().test_accuracy, 0.9);
    EXPECT_LT(rows.back().train_loss, rows.front().train_loss);
}

TEST(RunTraining, UniformScoreKindNeverSmooths) {
    Fixture s;
    Network net = fresh_net(6);
    auto prune = pruning(0.5, 0.6, 4, 0.3);
    prune.score = ScoreKind::uniform;
    for (const auto& r : run_training(net, s.train, nullptr, s.cfg, prune, s.opt, s.state)) {
        EXPECT_EQ(r.gamma, 0.0);
        EXPECT_EQ(r.solver_iterations, 0u);
    }
}

TEST(RunTraining, EmptyTargetSkipsEpoch) {
    Fixture s;
    Network net = fresh_net(6);
    const auto before = net.weights;
    const auto rows = run_training(net, s.train, nullptr, s.cfg, pruning(0.9, 1.0, 1, 0.0), s.opt, s.state);
    ASSERT_EQ(rows.size(), 1u);
    EXPECT_EQ(rows[0].processed, 0u);
    EXPECT_EQ(net.weights, before);
}

TEST(RunTraining, Errors) {
    Fixture s;
    Network net = fresh_net(1);
    NeuronConfig wrong = s.cfg;
    wrong.time_steps = 5;
    EXPECT_THROW(run_training(net, s.train, nullptr, wrong, pruning(0.5, 0.5, 2, 0.0), s.opt, s.state), ConfigError);
    net.weights[0][0] = std::nan("");
    EXPECT_THROW(run_training(net, s.train, nullptr, s.cfg, pruning(0.5, 0.5, 2, 0.0), s.opt, s.state), NumericError);
}

TEST(EpochProbabilities, DegenerateScoresFallBackToUniform) {
    ScoreTable table = ScoreTable::uniform(10, {0}, 0.0);
    const auto pa = epoch_probabilities(table, ScoreKind::spike_aware, 4, 0.0);
    for (double p : pa.probabilities) EXPECT_DOUBLE_EQ(p, 0.4);
}

TEST(Evaluate, AccuracyOfConstantPredictor) {
    // Zero weights: all outputs silent, ties resolve to class 0.
    const Dataset ds = gen_synthetic(4, 40, 3, 5, 0.0, 2);
    NeuronConfig cfg;
    cfg.time_steps = 3;
    const Network net = make_network({LayerSpec::dense(5, 4)});
    EXPECT_DOUBLE_EQ(evaluate_accuracy(net, ds, cfg), 0.25);
}
