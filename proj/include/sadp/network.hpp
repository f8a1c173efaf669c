#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <span>
#include <vector>

#include "sadp/common.hpp"
#include "sadp/layer.hpp"
#include "sadp/neuron.hpp"

namespace sadp {

/// A feed-forward stack of LIF layers. Every layer is trainable.
struct Network {
    std::vector<LayerSpec> layers;
    std::vector<std::vector<double>> weights;

    std::size_t depth() const { return layers.size(); }
    std::size_t input_size() const { return layers.front().input_size(); }
    std::size_t num_classes() const { return layers.back().output_size(); }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& w : weights) n += w.size();
        return n;
    }

    void validate() const {
        if (layers.empty()) throw ConfigError("network has no layers");
        if (weights.size() != layers.size()) throw DimensionError("one weight tensor per layer expected");
        for (std::size_t l = 0; l < layers.size(); ++l) {
            if (weights[l].size() != layers[l].weight_count())
                throw DimensionError("weight tensor " + std::to_string(l) + " does not match " +
                                     layers[l].describe());
            if (l > 0 && layers[l].input_size() != layers[l - 1].output_size())
                throw DimensionError("layer " + std::to_string(l) + " input does not match previous output");
            if (!all_finite(weights[l])) throw NumericError("non-finite weight in layer " + std::to_string(l));
        }
    }
};

/// Builds a network with zero weights; call init_weights to randomize.
inline Network make_network(std::vector<LayerSpec> layers) {
    Network net;
    net.layers = std::move(layers);
    for (const auto& spec : net.layers) net.weights.emplace_back(spec.weight_count(), 0.0);
    net.validate();
    return net;
}

/// Fan-in scaled uniform initialization U(-gain/sqrt(fan_in), gain/sqrt(fan_in)).
inline void init_weights(Network& net, std::uint64_t seed, double gain = 1.0) {
    std::mt19937_64 rng(seed);
    for (std::size_t l = 0; l < net.depth(); ++l) {
        const std::size_t fan_in = net.layers[l].patch_rows();
        const double bound = gain / std::sqrt(static_cast<double>(fan_in));
        for (double& w : net.weights[l]) w = (2.0 * uniform01(rng) - 1.0) * bound;
    }
}

/// Everything a forward pass produces for one example.
///
/// spikes[0] is the encoded input; spikes[l + 1] and membranes[l] belong to
/// layer l. Each buffer is T blocks of the layer size, time-major. Membranes
/// are the pre-reset potentials decay * u[t-1] + W o[t] that the threshold
/// (and the surrogate) sees; the post-reset value is membrane - threshold * spike.
struct ForwardTrace {
    std::size_t time_steps = 0;
    std::vector<std::vector<double>> spikes;
    std::vector<std::vector<double>> membranes;
    std::vector<double> logits;
    std::uint32_t label = 0;
    double loss = 0.0;

    bool empty() const { return time_steps == 0 || spikes.empty(); }

    std::span<const double> spikes_at(std::size_t level, std::size_t t) const {
        const std::size_t n = spikes[level].size() / time_steps;
        return std::span<const double>(spikes[level]).subspan(t * n, n);
    }
    std::span<const double> membrane_at(std::size_t layer, std::size_t t) const {
        const std::size_t n = membranes[layer].size() / time_steps;
        return std::span<const double>(membranes[layer]).subspan(t * n, n);
    }
};

/// Errors dloss/du (pre-reset) per layer and time, plus weight gradients, for one example.
struct BackwardTrace {
    std::size_t time_steps = 0;
    std::vector<std::vector<double>> errors;
    std::vector<std::vector<double>> weight_grads;

    std::span<const double> error_at(std::size_t layer, std::size_t t) const {
        const std::size_t n = errors[layer].size() / time_steps;
        return std::span<const double>(errors[layer]).subspan(t * n, n);
    }
};

struct LossOutput {
    std::vector<double> per_example_loss;
    std::vector<std::vector<double>> logits;

    double mean() const {
        if (per_example_loss.empty()) return 0.0;
        return std::accumulate(per_example_loss.begin(), per_example_loss.end(), 0.0) /
               static_cast<double>(per_example_loss.size());
    }
};

inline std::vector<double> softmax(std::span<const double> logits) {
    const double m = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double z = 0.0;
    for (std::size_t c = 0; c < logits.size(); ++c) z += (p[c] = std::exp(logits[c] - m));
    for (double& v : p) v /= z;
    return p;
}

inline double cross_entropy(std::span<const double> logits, std::uint32_t label) {
    if (label >= logits.size()) throw DimensionError("label outside the class range");
    const double m = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double v : logits) z += std::exp(v - m);
    return std::log(z) + m - logits[label];
}

/// Runs one example through the network for cfg.time_steps steps.
/// `input` holds T x input_size values, time-major.
inline ForwardTrace forward(const Network& net, std::span<const double> input, std::uint32_t label,
                            const NeuronConfig& cfg) {
    cfg.validate();
    const std::size_t steps = cfg.time_steps;
    if (input.size() != steps * net.input_size())
        throw DimensionError("forward: input holds " + std::to_string(input.size()) + " values, expected " +
                             std::to_string(steps * net.input_size()));
    for (const auto& w : net.weights)
        if (!all_finite(w)) throw NumericError("forward: non-finite weights");

    ForwardTrace tr;
    tr.time_steps = steps;
    tr.label = label;
    tr.spikes.resize(net.depth() + 1);
    tr.membranes.resize(net.depth());
    tr.spikes[0].assign(input.begin(), input.end());
    for (std::size_t l = 0; l < net.depth(); ++l) {
        const std::size_t n = net.layers[l].output_size();
        tr.spikes[l + 1].assign(steps * n, 0.0);
        tr.membranes[l].assign(steps * n, 0.0);
    }

    std::vector<std::vector<double>> state(net.depth());
    for (std::size_t l = 0; l < net.depth(); ++l) state[l].assign(net.layers[l].output_size(), 0.0);
    std::vector<double> current;
    for (std::size_t t = 0; t < steps; ++t) {
        for (std::size_t l = 0; l < net.depth(); ++l) {
            const std::size_t n = net.layers[l].output_size();
            current.resize(n);
            layer_forward(net.layers[l], net.weights[l], tr.spikes_at(l, t), current);
            std::span<double> out(tr.spikes[l + 1].data() + t * n, n);
            std::span<double> pre(tr.membranes[l].data() + t * n, n);
            lif_step(state[l], current, out, cfg, pre);
        }
    }

    const std::size_t classes = net.num_classes();
    tr.logits.assign(classes, 0.0);
    for (std::size_t t = 0; t < steps; ++t) {
        const auto o = tr.spikes_at(net.depth(), t);
        for (std::size_t c = 0; c < classes; ++c) tr.logits[c] += o[c];
    }
    for (double& v : tr.logits) v /= static_cast<double>(steps);
    tr.loss = cross_entropy(tr.logits, label);
    return tr;
}

/// Batched forward; examples are independent and may run on several workers.
inline std::pair<std::vector<ForwardTrace>, LossOutput> forward(const Network& net,
                                                                const std::vector<std::span<const double>>& inputs,
                                                                std::span<const std::uint32_t> labels,
                                                                const NeuronConfig& cfg, std::size_t workers = 1) {
    if (inputs.size() != labels.size()) throw DimensionError("forward: inputs and labels differ in count");
    std::vector<ForwardTrace> traces(inputs.size());
    parallel_for(inputs.size(), workers, [&](std::size_t i) { traces[i] = forward(net, inputs[i], labels[i], cfg); });
    LossOutput loss;
    for (const auto& tr : traces) {
        loss.per_example_loss.push_back(tr.loss);
        loss.logits.push_back(tr.logits);
    }
    return {std::move(traces), std::move(loss)};
}

/// Class prediction: highest spike count, ties broken by summed output
/// membrane potential, then by lowest index.
inline std::uint32_t predict(const ForwardTrace& tr) {
    const std::size_t last = tr.membranes.size() - 1;
    const std::size_t classes = tr.logits.size();
    std::vector<double> drive(classes, 0.0);
    for (std::size_t t = 0; t < tr.time_steps; ++t) {
        const auto u = tr.membrane_at(last, t);
        for (std::size_t c = 0; c < classes; ++c) drive[c] += u[c];
    }
    std::uint32_t best = 0;
    for (std::uint32_t c = 1; c < classes; ++c) {
        if (tr.logits[c] > tr.logits[best] || (tr.logits[c] == tr.logits[best] && drive[c] > drive[best]))
            best = c;
    }
    return best;
}

/// Backpropagation through time for one example.
///
/// With S the firing function and S' its pseudo-derivative (the triangular
/// surrogate), the error at the pre-reset potential obeys
///
///   delta[t] = decay * delta[t+1] * (1 - threshold * S'(u[t]))   (reset attached)
///            + S'(u[t]) * dL/do[t]
///
/// where dL/do[t] comes from the layer above at the same step (or from the
/// loss for the output layer). With a detached reset the threshold * S' factor
/// is dropped. Weight gradients are sum_t delta[t] * o_in[t]^T, scaled by
/// `loss_scale`; errors are always those of the unscaled loss.
inline BackwardTrace backward_bptt(const Network& net, const ForwardTrace& trace, const NeuronConfig& cfg,
                                   double loss_scale = 1.0) {
    if (trace.empty()) throw StateError("backward_bptt: no forward trace recorded");
    if (trace.time_steps != cfg.time_steps || trace.spikes.size() != net.depth() + 1 ||
        trace.membranes.size() != net.depth())
        throw StateError("backward_bptt: trace was not produced by this network and configuration");
    for (std::size_t l = 0; l < net.depth(); ++l)
        if (trace.membranes[l].size() != cfg.time_steps * net.layers[l].output_size())
            throw StateError("backward_bptt: trace shapes do not match the network");

    const std::size_t steps = trace.time_steps;
    const std::size_t depth = net.depth();
    BackwardTrace bt;
    bt.time_steps = steps;
    bt.errors.resize(depth);
    bt.weight_grads.resize(depth);
    for (std::size_t l = 0; l < depth; ++l) {
        bt.errors[l].assign(steps * net.layers[l].output_size(), 0.0);
        bt.weight_grads[l].assign(net.layers[l].weight_count(), 0.0);
    }

    // dL/do for the output layer is identical at every step: (softmax - onehot) / T.
    std::vector<double> out_grad = softmax(trace.logits);
    out_grad[trace.label] -= 1.0;
    for (double& g : out_grad) g /= static_cast<double>(steps);

    std::vector<double> grad_o;
    for (std::size_t li = depth; li-- > 0;) {
        const std::size_t n = net.layers[li].output_size();
        grad_o.resize(n);
        for (std::size_t t = steps; t-- > 0;) {
            if (li + 1 == depth) {
                std::copy(out_grad.begin(), out_grad.end(), grad_o.begin());
            } else {
                std::fill(grad_o.begin(), grad_o.end(), 0.0);
                layer_backward_input(net.layers[li + 1], net.weights[li + 1], bt.error_at(li + 1, t), grad_o);
            }
            const auto u = trace.membrane_at(li, t);
            double* delta = bt.errors[li].data() + t * n;
            const double* next = t + 1 < steps ? bt.errors[li].data() + (t + 1) * n : nullptr;
            for (std::size_t j = 0; j < n; ++j) {
                const double sg = surrogate_grad(u[j], cfg);
                double carry = next ? cfg.decay * next[j] : 0.0;
                double d = carry + sg * grad_o[j];
                if (!cfg.reset_detached) d -= carry * cfg.threshold * sg;
                delta[j] = d;
            }
            layer_accumulate_weight_grad(net.layers[li], std::span<const double>(delta, n),
                                         trace.spikes_at(li, t), bt.weight_grads[li], loss_scale);
        }
    }
    return bt;
}

}  // namespace sadp
