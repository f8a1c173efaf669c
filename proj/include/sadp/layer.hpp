#pragma once

#include <span>
#include <string>
#include <vector>

#include "sadp/common.hpp"

namespace sadp {

enum class LayerKind { dense, conv2d };

/// Shape and connectivity of one trainable layer.
///
/// Dense layers map a flat input of `input_shape` to `output_shape = {out}`;
/// weights are stored row-major as out x in. Conv2d layers map C x H x W to
/// C' x H' x W' with a square kernel, no bias; weights are C' x C x k x k.
struct LayerSpec {
    LayerKind kind = LayerKind::dense;
    Shape input_shape;
    Shape output_shape;
    std::size_t kernel_size = 0;
    std::size_t stride = 1;
    std::size_t padding = 0;
    std::size_t patch_count = 1;

    static LayerSpec dense(std::size_t in, std::size_t out) {
        if (in == 0 || out == 0) throw DimensionError("dense layer needs non-empty input and output");
        return LayerSpec{LayerKind::dense, {in}, {out}, 0, 1, 0, 1};
    }

    static LayerSpec conv2d(const Shape& input_chw, std::size_t out_channels, std::size_t kernel,
                            std::size_t stride = 1, std::size_t padding = 0) {
        if (input_chw.size() != 3) throw DimensionError("conv2d input must be C x H x W");
        if (out_channels == 0 || kernel == 0 || stride == 0)
            throw DimensionError("conv2d needs positive channels, kernel and stride");
        const std::size_t h = input_chw[1] + 2 * padding;
        const std::size_t w = input_chw[2] + 2 * padding;
        if (kernel > h || kernel > w) throw DimensionError("conv2d kernel larger than padded input");
        const std::size_t oh = (h - kernel) / stride + 1;
        const std::size_t ow = (w - kernel) / stride + 1;
        return LayerSpec{LayerKind::conv2d, input_chw, {out_channels, oh, ow}, kernel, stride, padding,
                         oh * ow};
    }

    std::size_t input_size() const { return numel(input_shape); }
    std::size_t output_size() const { return numel(output_shape); }

    std::size_t weight_count() const {
        if (kind == LayerKind::dense) return input_size() * output_size();
        return output_shape[0] * input_shape[0] * kernel_size * kernel_size;
    }

    /// Rows of the unfolded input: C x k x k for conv, the whole input for dense.
    std::size_t patch_rows() const {
        return kind == LayerKind::dense ? input_size() : input_shape[0] * kernel_size * kernel_size;
    }

    std::string describe() const {
        if (kind == LayerKind::dense)
            return "dense(" + std::to_string(input_size()) + "->" + std::to_string(output_size()) + ")";
        return "conv2d(" + std::to_string(input_shape[0]) + "x" + std::to_string(input_shape[1]) + "x" +
               std::to_string(input_shape[2]) + " -> " + std::to_string(output_shape[0]) + "x" +
               std::to_string(output_shape[1]) + "x" + std::to_string(output_shape[2]) + ", k" +
               std::to_string(kernel_size) + " s" + std::to_string(stride) + " p" +
               std::to_string(padding) + ")";
    }
};

/// Number of sliding-window positions of a conv2d layer.
inline std::size_t patch_count(const LayerSpec& spec) {
    if (spec.kind != LayerKind::conv2d) throw ConfigError("patch_count is defined for conv2d layers only");
    return spec.output_shape[1] * spec.output_shape[2];
}

namespace detail {

// Maps (row r = (c, ky, kx), patch p = (oy, ox)) to a flat input index, or -1
// when the window position falls into the zero padding.
inline long conv_input_index(const LayerSpec& s, std::size_t r, std::size_t p) {
    const std::size_t k = s.kernel_size;
    const std::size_t c = r / (k * k);
    const std::size_t ky = (r / k) % k;
    const std::size_t kx = r % k;
    const std::size_t oy = p / s.output_shape[2];
    const std::size_t ox = p % s.output_shape[2];
    const long iy = static_cast<long>(oy * s.stride + ky) - static_cast<long>(s.padding);
    const long ix = static_cast<long>(ox * s.stride + kx) - static_cast<long>(s.padding);
    const long h = static_cast<long>(s.input_shape[1]);
    const long w = static_cast<long>(s.input_shape[2]);
    if (iy < 0 || ix < 0 || iy >= h || ix >= w) return -1;
    return (static_cast<long>(c) * h + iy) * w + ix;
}

}  // namespace detail

/// Extracts sliding patches of a C x H x W input into a (C k k) x P matrix,
/// row-major. Padding positions contribute zeros.
inline std::vector<double> unfold(const LayerSpec& spec, std::span<const double> input) {
    if (spec.kind != LayerKind::conv2d) throw ConfigError("unfold is defined for conv2d layers only");
    if (input.size() != spec.input_size()) throw DimensionError("unfold: input size mismatch");
    const std::size_t rows = spec.patch_rows();
    const std::size_t patches = spec.patch_count;
    std::vector<double> cols(rows * patches, 0.0);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t p = 0; p < patches; ++p)
            if (const long idx = detail::conv_input_index(spec, r, p); idx >= 0)
                cols[r * patches + p] = input[static_cast<std::size_t>(idx)];
    return cols;
}

/// out = W * input (dense) or out = conv(W, input). `out` is overwritten.
inline void layer_forward(const LayerSpec& spec, std::span<const double> weights,
                          std::span<const double> input, std::span<double> out) {
    if (input.size() != spec.input_size() || out.size() != spec.output_size() ||
        weights.size() != spec.weight_count())
        throw DimensionError("layer_forward: buffer sizes do not match " + spec.describe());
    std::fill(out.begin(), out.end(), 0.0);
    if (spec.kind == LayerKind::dense) {
        const std::size_t in = spec.input_size();
        // Columns with zero input are skipped: spike inputs are mostly zero.
        for (std::size_t i = 0; i < in; ++i) {
            const double x = input[i];
            if (x == 0.0) continue;
            for (std::size_t j = 0; j < out.size(); ++j) out[j] += weights[j * in + i] * x;
        }
        return;
    }
    const std::size_t rows = spec.patch_rows();
    const std::size_t patches = spec.patch_count;
    const std::size_t channels = spec.output_shape[0];
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t p = 0; p < patches; ++p) {
            const long idx = detail::conv_input_index(spec, r, p);
            if (idx < 0) continue;
            const double x = input[static_cast<std::size_t>(idx)];
            if (x == 0.0) continue;
            for (std::size_t co = 0; co < channels; ++co) out[co * patches + p] += weights[co * rows + r] * x;
        }
    }
}

/// grad_input += W^T * delta (dense) or the transposed convolution of delta.
inline void layer_backward_input(const LayerSpec& spec, std::span<const double> weights,
                                 std::span<const double> delta, std::span<double> grad_input) {
    if (delta.size() != spec.output_size() || grad_input.size() != spec.input_size())
        throw DimensionError("layer_backward_input: buffer sizes do not match " + spec.describe());
    if (spec.kind == LayerKind::dense) {
        const std::size_t in = spec.input_size();
        for (std::size_t j = 0; j < delta.size(); ++j) {
            const double d = delta[j];
            if (d == 0.0) continue;
            const double* row = weights.data() + j * in;
            for (std::size_t i = 0; i < in; ++i) grad_input[i] += row[i] * d;
        }
        return;
    }
    const std::size_t rows = spec.patch_rows();
    const std::size_t patches = spec.patch_count;
    const std::size_t channels = spec.output_shape[0];
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t p = 0; p < patches; ++p) {
            const long idx = detail::conv_input_index(spec, r, p);
            if (idx < 0) continue;
            double acc = 0.0;
            for (std::size_t co = 0; co < channels; ++co) acc += weights[co * rows + r] * delta[co * patches + p];
            grad_input[static_cast<std::size_t>(idx)] += acc;
        }
    }
}

/// grad_w += scale * delta * unfold(input)^T; for dense layers unfold is the
/// identity and this is the rank-one outer product delta * input^T.
inline void layer_accumulate_weight_grad(const LayerSpec& spec, std::span<const double> delta,
                                         std::span<const double> input, std::span<double> grad_w,
                                         double scale = 1.0) {
    if (delta.size() != spec.output_size() || input.size() != spec.input_size() ||
        grad_w.size() != spec.weight_count())
        throw DimensionError("layer_accumulate_weight_grad: buffer sizes do not match " + spec.describe());
    if (spec.kind == LayerKind::dense) {
        const std::size_t in = spec.input_size();
        for (std::size_t i = 0; i < in; ++i) {
            const double x = input[i] * scale;
            if (x == 0.0) continue;
            for (std::size_t j = 0; j < delta.size(); ++j) grad_w[j * in + i] += delta[j] * x;
        }
        return;
    }
    const std::vector<double> cols = unfold(spec, input);
    const std::size_t rows = spec.patch_rows();
    const std::size_t patches = spec.patch_count;
    const std::size_t channels = spec.output_shape[0];
    for (std::size_t co = 0; co < channels; ++co) {
        const double* d = delta.data() + co * patches;
        for (std::size_t r = 0; r < rows; ++r) {
            const double* c = cols.data() + r * patches;
            double acc = 0.0;
            for (std::size_t p = 0; p < patches; ++p) acc += d[p] * c[p];
            grad_w[co * rows + r] += scale * acc;
        }
    }
}

}  // namespace sadp
