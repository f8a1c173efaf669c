#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "sadp/config.hpp"
#include "sadp/oracle.hpp"
#include "sadp/trainer.hpp"
#include "sadp/verify.hpp"

using namespace sadp;

namespace {

constexpr int kUsageError = 2;
constexpr int kNumericError = 3;

RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
    RunConfig rc = path.empty() ? RunConfig{} : RunConfig::load(path);
    for (const auto& o : overrides) rc.apply_override(o);
    return rc;
}

std::size_t workers_of(const RunConfig& rc) {
    const std::size_t w = rc.get_size("workers", 1);
    if (w < 1) throw ConfigError("config key 'workers' must be at least 1");
    return w;
}

int cmd_train(const RunConfig& rc) {
    const DataSplit data = load_data(rc);
    Network net = build_network(rc, data.train);
    const NeuronConfig cfg = neuron_config(rc, data.train.time_steps);
    const PruneConfig prune = prune_config(rc);
    OptimizerState opt = optimizer_config(rc);
    TrainState state = train_state(rc);
    TrainOptions options;
    options.workers = workers_of(rc);
    options.score_layers = resolve_score_layers(net, rc.get_string("score.layers", "last"));

    logger()->info("training {} examples ({} test), {} epochs, pruning {} (r {}, r_max {}, beta {})",
                   data.train.size(), data.test.size(), prune.epochs, prune.enabled, prune.ratio, prune.max_ratio,
                   prune.smoothing);
    const auto rows = run_training(net, data.train, data.test.size() ? &data.test : nullptr, cfg, prune, opt, state,
                                   options);
    const std::string metrics = rc.get_string("out.metrics", "metrics.csv");
    const std::string weights = rc.get_string("out.weights", "weights.bin");
    write_metrics_csv(rows, metrics);
    write_weights(net, weights);
    std::cout << fmt::format("{} epochs, final test accuracy {:.4f}; wrote {} and {}\n", rows.size(),
                             rows.empty() ? 0.0 : rows.back().test_accuracy, metrics, weights);
    return 0;
}

int cmd_verify(const RunConfig& rc) {
    const std::size_t workers = workers_of(rc);
    const auto results = verify::run_all(workers);
    const std::string report = verify::format_report(results);
    std::cout << report;
    if (rc.has("out.report")) write_file_atomic(rc.get_string("out.report"), report);
    if (rc.has("out.correlations")) {
        std::string csv = "seed,score_vs_norm,loss_vs_norm,sample_size\n";
        for (std::uint64_t s = 100; s < 103; ++s) {
            const auto c = verify::correlation_after_warmup(s, 5, workers);
            csv += fmt::format("{},{},{},{}\n", s, c.score_vs_norm, c.loss_vs_norm, c.sample_size);
        }
        write_file_atomic(rc.get_string("out.correlations"), csv);
    }
    for (const auto& r : results)
        if (!r.passed) return 1;
    return 0;
}

int cmd_analyze(const RunConfig& rc) {
    const DataSplit data = load_data(rc);
    Network net = build_network(rc, data.train);
    read_weights(net, rc.require("analyze.checkpoint"));
    const NeuronConfig cfg = neuron_config(rc, data.train.time_steps);
    const std::size_t workers = workers_of(rc);
    const auto layers = resolve_score_layers(net, rc.get_string("score.layers", "last"));

    const auto rep = oracle::exact_grad_norms(net, data.train, cfg, layers, PatchScaling::when_mixed, workers);
    const auto corr = oracle::correlations(rep);

    std::string csv = "index,score,loss,norm,restricted_norm\n";
    for (std::size_t i = 0; i < rep.norms.size(); ++i)
        csv += fmt::format("{},{},{},{},{}\n", i, rep.scores[i], rep.losses[i], rep.norms[i], rep.restricted_norms[i]);
    write_file_atomic(rc.get_string("out.correlations", "correlations.csv"), csv);

    const double ratio = rc.get_double("prune.ratio", 0.5);
    const double beta = rc.get_double("prune.beta", prune_defaults(ratio).beta);
    const std::size_t n = rep.norms.size();
    const std::size_t target = target_size(ratio, n);
    if (target == 0) throw ConfigError("config key 'prune.ratio' leaves an empty subset");

    auto probabilities = [&](const std::vector<double>& scores) {
        try {
            return smooth_probabilities(scores, target, beta).probabilities;
        } catch (const DegenerateScoreError&) {
            return uniform_probabilities(n, target).probabilities;
        }
    };
    const double v_sadp = oracle::variance_formula(rep.norms, probabilities(rep.scores), n);
    const double v_uniform = oracle::variance_formula(rep.norms, uniform_probabilities(n, target).probabilities, n);
    const double v_loss = oracle::variance_formula(rep.norms, probabilities(rep.losses), n);

    std::string out = fmt::format("examples {}\npearson(score, norm) {:.6f}\npearson(loss, norm) {:.6f}\n", n,
                                  corr.score_vs_norm, corr.loss_vs_norm);
    out += fmt::format("variance at r = {} (S = {}, beta = {}):\n  spike_aware {:.6e}\n  uniform     {:.6e}\n"
                       "  loss        {:.6e}\n",
                       ratio, target, beta, v_sadp, v_uniform, v_loss);
    std::cout << out;
    if (rc.has("out.report")) write_file_atomic(rc.get_string("out.report"), out);
    return 0;
}

int cmd_gen_data(const RunConfig& rc, const std::string& output) {
    if (output.empty()) throw ConfigError("gen-data needs an output path (-o)");
    const Dataset ds = synthetic_from_config(rc);
    write_spike_file(ds, output);
    std::cout << fmt::format("wrote {} examples ({} classes, T = {}, D = {}) to {}\n", ds.size(), ds.num_classes,
                             ds.time_steps, ds.frame_size(), output);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Spike-aware data pruning for spiking network training"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    std::vector<std::string> overrides;
    app.add_option("-c,--config", config_path, "config file (key=value per line)");
    app.add_option("--set", overrides, "override a config key, key=value (repeatable)");

    auto* train = app.add_subcommand("train", "train a network; writes metrics CSV and final weights");
    auto* verify_cmd = app.add_subcommand("verify", "run the oracle checks; exit 0 iff all pass");
    auto* analyze = app.add_subcommand("analyze", "score/norm correlations and variance comparison on a checkpoint");
    auto* gen = app.add_subcommand("gen-data", "write a synthetic dataset in SPKT format");
    std::string gen_output;
    gen->add_option("-o,--output", gen_output, "output path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kUsageError;
    }

    try {
        const RunConfig rc = load_config(config_path, overrides);
        if (train->parsed()) return cmd_train(rc);
        if (verify_cmd->parsed()) return cmd_verify(rc);
        if (analyze->parsed()) return cmd_analyze(rc);
        if (gen->parsed()) return cmd_gen_data(rc, gen_output);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsageError;
    } catch (const NumericError& e) {
        std::cerr << "numeric divergence: " << e.what() << "\n";
        return kNumericError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return kUsageError;
}
