#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <utility>

#include "sadp/data.hpp"
#include "sadp/network.hpp"
#include "sadp/optimizer.hpp"
#include "sadp/schedule.hpp"
#include "sadp/trainer.hpp"

namespace sadp {

inline const std::set<std::string>& known_config_keys() {
    static const std::set<std::string> keys{
        "dataset.path",
        "dataset.labels",
        "dataset.test_path",
        "dataset.test_labels",
        "dataset.test_fraction",
        "dataset.synthetic.classes",
        "dataset.synthetic.n",
        "dataset.synthetic.test_n",
        "dataset.synthetic.t",
        "dataset.synthetic.dim",
        "dataset.synthetic.noise",
        "dataset.synthetic.seed",
        "encode.mode",
        "encode.steps",
        "net.arch",
        "net.init_gain",
        "neuron.lambda",
        "neuron.threshold",
        "neuron.surrogate_width",
        "neuron.reset_detached",
        "train.epochs",
        "train.batch",
        "train.lr",
        "train.momentum",
        "train.weight_decay",
        "train.lr_schedule",
        "prune.enabled",
        "prune.ratio",
        "prune.max_ratio",
        "prune.beta",
        "prune.score",
        "prune.exact_average",
        "score.layers",
        "seed.init",
        "seed.sample",
        "seed.shuffle",
        "out.metrics",
        "out.weights",
        "out.report",
        "out.correlations",
        "analyze.checkpoint",
        "analyze.draws",
        "workers",
    };
    return keys;
}

/// Flat key=value configuration. Lines are `key = value`; `#` starts a comment.
class RunConfig {
public:
    static RunConfig parse(std::string_view text, std::string_view origin = "config") {
        RunConfig cfg;
        std::istringstream in{std::string(text)};
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
            const std::string body = trim(line);
            if (body.empty()) continue;
            const auto eq = body.find('=');
            if (eq == std::string::npos)
                throw ConfigError(fmt::format("{}:{}: expected key = value", origin, lineno));
            cfg.set(trim(body.substr(0, eq)), trim(body.substr(eq + 1)));
        }
        return cfg;
    }

    static RunConfig load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot read config file " + path);
        std::stringstream ss;
        ss << in.rdbuf();
        return parse(ss.str(), path);
    }

    /// Applies a `key=value` override.
    void apply_override(std::string_view assignment) {
        const auto eq = assignment.find('=');
        if (eq == std::string_view::npos) throw ConfigError("override '" + std::string(assignment) + "' lacks '='");
        set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
    }

    void set(const std::string& key, const std::string& value) {
        if (!known_config_keys().contains(key)) throw ConfigError("unknown config key '" + key + "'");
        values_[key] = value;
    }

    bool has(const std::string& key) const { return values_.contains(key); }

    const std::string& require(const std::string& key) const {
        const auto it = values_.find(key);
        if (it == values_.end() || it->second.empty()) throw ConfigError("missing required config key '" + key + "'");
        return it->second;
    }

    std::string get_string(const std::string& key, const std::string& fallback = {}) const {
        const auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

    double get_double(const std::string& key, double fallback) const {
        if (!has(key)) return fallback;
        const std::string& v = values_.at(key);
        double out = 0.0;
        const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
        if (ec != std::errc{} || ptr != v.data() + v.size() || !std::isfinite(out))
            throw ConfigError("config key '" + key + "' expects a number, got '" + v + "'");
        return out;
    }

    std::size_t get_size(const std::string& key, std::size_t fallback) const {
        if (!has(key)) return fallback;
        const std::string& v = values_.at(key);
        std::size_t out = 0;
        const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
        if (ec != std::errc{} || ptr != v.data() + v.size())
            throw ConfigError("config key '" + key + "' expects a non-negative integer, got '" + v + "'");
        return out;
    }

    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const {
        return static_cast<std::uint64_t>(get_size(key, static_cast<std::size_t>(fallback)));
    }

    bool get_bool(const std::string& key, bool fallback) const {
        if (!has(key)) return fallback;
        const std::string& v = values_.at(key);
        if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
        if (v == "false" || v == "0" || v == "no" || v == "off") return false;
        throw ConfigError("config key '" + key + "' expects true or false, got '" + v + "'");
    }

    const std::map<std::string, std::string>& values() const { return values_; }

private:
    static std::string trim(std::string_view s) {
        const auto b = s.find_first_not_of(" \t\r\n");
        if (b == std::string_view::npos) return {};
        const auto e = s.find_last_not_of(" \t\r\n");
        return std::string(s.substr(b, e - b + 1));
    }

    std::map<std::string, std::string> values_;
};

// ---------------------------------------------------------------------------
// Pruning defaults per average ratio

struct PruneDefaults {
    double beta;
    double max_ratio;
};

/// Smoothing constant and final ratio for an average ratio r. The anchors are
/// (0.3: 0.35, 0.60), (0.5: 0.30, 0.70), (0.7: 0.20, 0.90), (0.9: 0.05, 1.00);
/// between anchors both values interpolate linearly. Below 0.3, beta stays
/// 0.35 and r_max = 2r so the schedule starts at 0; above 0.9 the last anchor
/// holds. r = 0 gives r_max = 0, i.e. no pruning at all.
inline PruneDefaults prune_defaults(double r) {
    constexpr std::array<std::array<double, 3>, 4> anchors{{{0.3, 0.35, 0.60},
                                                            {0.5, 0.30, 0.70},
                                                            {0.7, 0.20, 0.90},
                                                            {0.9, 0.05, 1.00}}};
    if (r <= anchors.front()[0]) return {anchors.front()[1], 2.0 * r};
    if (r >= anchors.back()[0]) return {anchors.back()[1], anchors.back()[2]};
    for (std::size_t i = 1; i < anchors.size(); ++i) {
        if (r > anchors[i][0]) continue;
        const auto& lo = anchors[i - 1];
        const auto& hi = anchors[i];
        const double t = (r - lo[0]) / (hi[0] - lo[0]);
        return {lo[1] + t * (hi[1] - lo[1]), lo[2] + t * (hi[2] - lo[2])};
    }
    return {anchors.back()[1], anchors.back()[2]};
}

// ---------------------------------------------------------------------------
// Typed views

inline NeuronConfig neuron_config(const RunConfig& rc, std::size_t time_steps) {
    NeuronConfig cfg;
    cfg.decay = rc.get_double("neuron.lambda", 0.1);
    cfg.threshold = rc.get_double("neuron.threshold", 1.0);
    cfg.surrogate_width = rc.get_double("neuron.surrogate_width", 1.0);
    cfg.reset_detached = rc.get_bool("neuron.reset_detached", true);
    cfg.time_steps = time_steps;
    cfg.validate();
    return cfg;
}

inline ScoreKind parse_score_kind(const std::string& s) {
    if (s == "spike_aware") return ScoreKind::spike_aware;
    if (s == "loss") return ScoreKind::loss;
    if (s == "uniform") return ScoreKind::uniform;
    throw ConfigError("prune.score must be spike_aware, loss or uniform, got '" + s + "'");
}

inline PruneConfig prune_config(const RunConfig& rc) {
    PruneConfig p;
    p.enabled = rc.get_bool("prune.enabled", rc.has("prune.ratio"));
    p.ratio = rc.get_double("prune.ratio", 0.0);
    if (!(p.ratio >= 0.0 && p.ratio < 1.0)) throw ConfigError("prune.ratio must lie in [0, 1)");
    const PruneDefaults d = prune_defaults(p.ratio);
    p.max_ratio = rc.get_double("prune.max_ratio", d.max_ratio);
    p.smoothing = rc.get_double("prune.beta", d.beta);
    p.epochs = rc.get_size("train.epochs", 200);
    p.seed = rc.get_u64("seed.sample", 2);
    p.score = parse_score_kind(rc.get_string("prune.score", "spike_aware"));
    p.exact_average = rc.get_bool("prune.exact_average", false);
    p.validate();
    return p;
}

inline OptimizerState optimizer_config(const RunConfig& rc) {
    OptimizerState opt;
    opt.base_lr = opt.learning_rate = rc.get_double("train.lr", 0.2);
    opt.momentum = rc.get_double("train.momentum", 0.9);
    opt.weight_decay = rc.get_double("train.weight_decay", 5e-5);
    const std::string sched = rc.get_string("train.lr_schedule", "cosine");
    if (sched == "cosine")
        opt.schedule = LrSchedule::cosine;
    else if (sched == "constant")
        opt.schedule = LrSchedule::constant;
    else
        throw ConfigError("train.lr_schedule must be cosine or constant, got '" + sched + "'");
    opt.validate();
    return opt;
}

inline TrainState train_state(const RunConfig& rc) {
    TrainState st;
    st.batch_size = rc.get_size("train.batch", 128);
    if (st.batch_size == 0) throw ConfigError("train.batch must be positive");
    st.init_seed = rc.get_u64("seed.init", 1);
    st.sample_seed = rc.get_u64("seed.sample", 2);
    st.shuffle_seed = rc.get_u64("seed.shuffle", 3);
    return st;
}

// ---------------------------------------------------------------------------
// Architecture strings

/// Channel-major image shape for a convolution given a dataset sample shape:
/// (C, H, W) as is, (H, W) as one channel, and a flat square D as 1 x s x s.
inline Shape image_shape(const Shape& sample) {
    if (sample.size() == 3) return sample;
    if (sample.size() == 2) return {1, sample[0], sample[1]};
    if (sample.size() == 1) {
        const auto s = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(sample[0]))));
        if (s * s == sample[0]) return {1, s, s};
    }
    throw ConfigError("a convolution needs image-shaped input; sample shape has no square layout");
}

/// Parses e.g. "dense:64,dense:10" or "conv:8x3x3,dense:10". A convolution is
/// conv:OUTxKxK with optional sS (stride) and pP (padding) suffixes, e.g.
/// "conv:8x3x3s1p1". The final layer must produce `num_classes` outputs.
inline std::vector<LayerSpec> parse_arch(const std::string& arch, const Shape& sample_shape,
                                         std::size_t num_classes) {
    static const std::regex dense_re(R"(dense:(\d+))");
    static const std::regex conv_re(R"(conv:(\d+)x(\d+)x(\d+)(?:s(\d+))?(?:p(\d+))?)");
    if (arch.empty()) throw ConfigError("net.arch is empty");
    std::vector<LayerSpec> layers;
    Shape current = sample_shape;
    std::size_t start = 0;
    while (start <= arch.size()) {
        const auto comma = arch.find(',', start);
        const std::string tok = arch.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
        std::smatch m;
        if (std::regex_match(tok, m, dense_re)) {
            const std::size_t out = std::stoul(m[1]);
            if (out == 0) throw ConfigError("net.arch: dense layer with zero units");
            layers.push_back(LayerSpec::dense(numel(current), out));
            current = {out};
        } else if (std::regex_match(tok, m, conv_re)) {
            const std::size_t out = std::stoul(m[1]), kh = std::stoul(m[2]), kw = std::stoul(m[3]);
            if (kh != kw) throw ConfigError("net.arch: only square kernels are supported ('" + tok + "')");
            const std::size_t stride = m[4].matched ? std::stoul(m[4]) : 1;
            const std::size_t pad = m[5].matched ? std::stoul(m[5]) : 0;
            if (out == 0 || kh == 0 || stride == 0) throw ConfigError("net.arch: degenerate convolution '" + tok + "'");
            try {
                layers.push_back(LayerSpec::conv2d(image_shape(current), out, kh, stride, pad));
            } catch (const DimensionError& e) {
                throw ConfigError("net.arch: " + std::string(e.what()));
            }
            current = layers.back().output_shape;
        } else {
            throw ConfigError("net.arch: cannot parse layer '" + tok + "'");
        }
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    if (layers.back().output_size() != num_classes)
        throw ConfigError(fmt::format("net.arch: final layer has {} outputs but the dataset has {} classes",
                                      layers.back().output_size(), num_classes));
    return layers;
}

// ---------------------------------------------------------------------------
// Datasets

struct DataSplit {
    Dataset train;
    Dataset test;
};

inline EncodeMode parse_encode_mode(const std::string& s) {
    if (s == "direct") return EncodeMode::direct;
    if (s == "rate") return EncodeMode::rate;
    throw ConfigError("encode.mode must be direct or rate, got '" + s + "'");
}

/// Synthetic data as configured; train and test share one set of prototypes.
inline Dataset synthetic_from_config(const RunConfig& rc, std::size_t extra = 0) {
    return gen_synthetic(rc.get_size("dataset.synthetic.classes", 10), rc.get_size("dataset.synthetic.n", 2000) + extra,
                         rc.get_size("dataset.synthetic.t", 8), rc.get_size("dataset.synthetic.dim", 64),
                         rc.get_double("dataset.synthetic.noise", 0.1), rc.get_u64("dataset.synthetic.seed", 7));
}

inline bool uses_synthetic(const RunConfig& rc) {
    if (rc.has("dataset.path")) return false;
    for (const auto& [k, v] : rc.values())
        if (k.starts_with("dataset.synthetic.")) return true;
    return false;
}

/// Loads or generates the training and test sets. Static (IDX) data is
/// spike-encoded with encode.mode over encode.steps steps.
inline DataSplit load_data(const RunConfig& rc) {
    auto temporal = [&](Dataset ds, std::uint64_t seed) {
        if (ds.time_steps == 0)
            ds = encode_dataset(ds, parse_encode_mode(rc.get_string("encode.mode", "direct")),
                                rc.get_size("encode.steps", 4), seed);
        return ds;
    };
    auto split = [&](const Dataset& all) {
        const double frac = rc.get_double("dataset.test_fraction", 0.2);
        if (!(frac > 0.0 && frac < 1.0)) throw ConfigError("dataset.test_fraction must lie in (0, 1)");
        const auto n_test = static_cast<std::size_t>(std::llround(frac * static_cast<double>(all.size())));
        if (n_test == 0 || n_test >= all.size()) throw ConfigError("dataset too small for the requested test split");
        return DataSplit{slice(all, 0, all.size() - n_test), slice(all, all.size() - n_test, all.size())};
    };

    if (uses_synthetic(rc)) {
        const std::size_t n = rc.get_size("dataset.synthetic.n", 2000);
        const std::size_t test_n = rc.get_size("dataset.synthetic.test_n", n / 4);
        const Dataset all = synthetic_from_config(rc, test_n);
        if (test_n == 0) throw ConfigError("dataset.synthetic.test_n must be positive");
        return {slice(all, 0, n), slice(all, n, n + test_n)};
    }
    const std::string& path = rc.require("dataset.path");
    const std::uint64_t enc_seed = rc.get_u64("seed.sample", 2) ^ 0x5eedULL;
    Dataset train = temporal(load_dataset(path, rc.get_string("dataset.labels")), enc_seed);
    if (rc.has("dataset.test_path")) {
        Dataset test = temporal(load_dataset(rc.require("dataset.test_path"), rc.get_string("dataset.test_labels")),
                                enc_seed + 1);
        const std::size_t classes = std::max(train.num_classes, test.num_classes);
        train.num_classes = test.num_classes = classes;
        if (test.sample_shape != train.sample_shape || test.time_steps != train.time_steps)
            throw ConfigError("dataset.test_path: shape differs from the training set");
        return {std::move(train), std::move(test)};
    }
    return split(train);
}

/// Network described by net.arch for the given dataset, initialised from seed.init.
inline Network build_network(const RunConfig& rc, const Dataset& ds) {
    Network net = make_network(parse_arch(rc.require("net.arch"), ds.sample_shape, ds.num_classes));
    init_weights(net, rc.get_u64("seed.init", 1), rc.get_double("net.init_gain", 2.5));
    return net;
}

}  // namespace sadp
