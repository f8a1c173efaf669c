#pragma once

#include <array>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "sadp/common.hpp"
#include "sadp/network.hpp"

namespace sadp {

/// An in-memory labelled dataset.
///
/// Temporal data (time_steps > 0) stores N x T x prod(sample_shape) values,
/// time-major within an example. Static data (time_steps == 0) stores one
/// frame per example and has to be encoded before it can drive a network.
struct Dataset {
    Shape sample_shape;
    std::size_t time_steps = 0;
    std::size_t num_classes = 0;
    std::vector<double> values;
    std::vector<std::uint32_t> labels;

    std::size_t size() const { return labels.size(); }
    std::size_t frame_size() const { return numel(sample_shape); }
    std::size_t example_size() const { return frame_size() * std::max<std::size_t>(time_steps, 1); }

    std::span<const double> example(std::size_t i) const {
        return std::span<const double>(values).subspan(i * example_size(), example_size());
    }

    void validate() const {
        if (labels.empty()) throw ConfigError("dataset is empty");
        if (values.size() != labels.size() * example_size()) throw DimensionError("dataset value count mismatch");
        for (auto y : labels)
            if (y >= num_classes) throw RangeError("label " + std::to_string(y) + " outside class range");
    }
};

/// Examples [begin, end) as a new dataset.
inline Dataset slice(const Dataset& ds, std::size_t begin, std::size_t end) {
    if (begin > end || end > ds.size()) throw RangeError("dataset slice out of range");
    Dataset out{ds.sample_shape, ds.time_steps, ds.num_classes, {}, {}};
    const std::size_t ex = ds.example_size();
    out.values.assign(ds.values.begin() + static_cast<std::ptrdiff_t>(begin * ex),
                      ds.values.begin() + static_cast<std::ptrdiff_t>(end * ex));
    out.labels.assign(ds.labels.begin() + static_cast<std::ptrdiff_t>(begin),
                      ds.labels.begin() + static_cast<std::ptrdiff_t>(end));
    return out;
}

// ---------------------------------------------------------------------------
// IDX (big-endian MNIST container)

struct IdxArray {
    std::vector<std::size_t> dims;
    std::vector<std::uint8_t> data;
};

inline std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open " + path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Parses an unsigned-byte IDX buffer (magic 00 00 08 rank).
inline IdxArray parse_idx(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 4) throw FormatError("IDX: file shorter than its magic number");
    if (bytes[0] != 0 || bytes[1] != 0 || bytes[2] != 0x08)
        throw FormatError(fmt::format("IDX: bad magic {:02x} {:02x} {:02x} {:02x}", bytes[0], bytes[1], bytes[2],
                                      bytes[3]));
    const std::size_t rank = bytes[3];
    if (rank != 1 && rank != 3) throw FormatError("IDX: only rank 1 (labels) and rank 3 (images) are supported");
    if (bytes.size() < 4 + 4 * rank) throw LengthError("IDX: header truncated");
    IdxArray arr;
    std::size_t count = 1;
    for (std::size_t d = 0; d < rank; ++d) {
        const auto* b = bytes.data() + 4 + 4 * d;
        const std::size_t v = (std::size_t{b[0]} << 24) | (std::size_t{b[1]} << 16) | (std::size_t{b[2]} << 8) | b[3];
        arr.dims.push_back(v);
        count *= v;
    }
    const std::size_t header = 4 + 4 * rank;
    if (bytes.size() - header != count)
        throw LengthError(fmt::format("IDX: header declares {} bytes of payload, file holds {}", count,
                                      bytes.size() - header));
    arr.data.assign(bytes.begin() + static_cast<std::ptrdiff_t>(header), bytes.end());
    return arr;
}

inline IdxArray read_idx(const std::string& path) { return parse_idx(read_file_bytes(path)); }

/// Loads an IDX image file (values scaled to [0, 1]) and an optional IDX label file.
inline Dataset load_idx(const std::string& images_path, const std::string& labels_path = {}) {
    const IdxArray img = read_idx(images_path);
    if (img.dims.size() != 3) throw FormatError("IDX: image file must have rank 3");
    Dataset ds;
    ds.sample_shape = {img.dims[1], img.dims[2]};
    ds.values.resize(img.data.size());
    for (std::size_t i = 0; i < img.data.size(); ++i) ds.values[i] = img.data[i] / 255.0;
    if (labels_path.empty()) {
        ds.labels.assign(img.dims[0], 0);
        ds.num_classes = 1;
    } else {
        const IdxArray lab = read_idx(labels_path);
        if (lab.dims.size() != 1 || lab.dims[0] != img.dims[0])
            throw FormatError("IDX: label file does not match the image count");
        ds.labels.assign(lab.data.begin(), lab.data.end());
        std::uint32_t mx = 0;
        for (auto y : ds.labels) mx = std::max(mx, y);
        ds.num_classes = mx + 1;
    }
    ds.validate();
    return ds;
}

// ---------------------------------------------------------------------------
// Input coding

enum class EncodeMode { direct, rate };

/// Turns a static frame with values in [0, 1] into T steps of network input:
/// `direct` repeats the analog frame as input current; `rate` draws a
/// Bernoulli(value) spike per entry and step.
template <class Rng>
std::vector<double> encode(std::span<const double> frame, EncodeMode mode, std::size_t steps, Rng& rng) {
    for (double v : frame)
        if (!(v >= 0.0 && v <= 1.0)) throw RangeError("encode: input values must lie in [0, 1]");
    std::vector<double> out(steps * frame.size());
    for (std::size_t t = 0; t < steps; ++t)
        for (std::size_t j = 0; j < frame.size(); ++j)
            out[t * frame.size() + j] = mode == EncodeMode::direct ? frame[j] : (uniform01(rng) < frame[j] ? 1.0 : 0.0);
    return out;
}

inline std::vector<double> encode(std::span<const double> frame, EncodeMode mode, std::size_t steps,
                                  std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return encode(frame, mode, steps, rng);
}

/// Encodes every example of a static dataset with one seeded stream, in order.
inline Dataset encode_dataset(const Dataset& ds, EncodeMode mode, std::size_t steps, std::uint64_t seed) {
    if (ds.time_steps != 0) throw ConfigError("dataset is already temporal");
    std::mt19937_64 rng(seed);
    Dataset out{ds.sample_shape, steps, ds.num_classes, {}, ds.labels};
    out.values.reserve(ds.size() * steps * ds.frame_size());
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto e = encode(ds.example(i), mode, steps, rng);
        out.values.insert(out.values.end(), e.begin(), e.end());
    }
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic spike-pattern classification

/// C random binary prototypes of T x D spikes; example i has label i mod C and
/// is its prototype with every bit flipped independently with probability `noise`.
inline Dataset gen_synthetic(std::size_t classes, std::size_t n, std::size_t steps, std::size_t dim, double noise,
                             std::uint64_t seed) {
    if (classes < 2) throw ConfigError("synthetic data needs at least two classes");
    if (n < classes) throw ConfigError("synthetic data needs at least one example per class");
    if (!(noise >= 0.0 && noise <= 1.0)) throw ConfigError("synthetic noise must lie in [0, 1]");
    std::mt19937_64 rng(seed);
    const std::size_t len = steps * dim;
    std::vector<std::vector<double>> prototypes(classes, std::vector<double>(len));
    for (auto& proto : prototypes)
        for (double& b : proto) b = uniform01(rng) < 0.5 ? 1.0 : 0.0;

    Dataset ds{{dim}, steps, classes, {}, {}};
    ds.values.reserve(n * len);
    ds.labels.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto y = static_cast<std::uint32_t>(i % classes);
        ds.labels.push_back(y);
        for (std::size_t j = 0; j < len; ++j) {
            const bool flip = uniform01(rng) < noise;
            const double b = prototypes[y][j];
            ds.values.push_back(flip ? 1.0 - b : b);
        }
    }
    return ds;
}

// ---------------------------------------------------------------------------
// Atomic file output

/// Writes via a sibling temporary file and renames it into place.
inline void write_file_atomic(const std::string& path, std::span<const std::uint8_t> bytes) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    if (target.has_parent_path() && !target.parent_path().empty()) fs::create_directories(target.parent_path());
    const fs::path tmp = fs::path(path + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ConfigError("cannot write " + tmp.string());
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw ConfigError("short write to " + tmp.string());
    }
    fs::rename(tmp, target);
}

inline void write_file_atomic(const std::string& path, const std::string& text) {
    write_file_atomic(path, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()),
                                                          text.size()));
}

namespace detail {

template <class T>
void put_le(std::vector<std::uint8_t>& out, T v) {
    for (std::size_t b = 0; b < sizeof(T); ++b) out.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
}

template <class T>
T get_le(std::span<const std::uint8_t> bytes, std::size_t& pos, const char* what) {
    if (bytes.size() - pos < sizeof(T)) throw LengthError(std::string("truncated ") + what);
    T v = 0;
    for (std::size_t b = 0; b < sizeof(T); ++b) v |= static_cast<T>(bytes[pos + b]) << (8 * b);
    pos += sizeof(T);
    return v;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// SPKT spike tensor files
//
//   "SPKT" | version u16 | dtype u8 (0: one byte per spike) | rank u8 |
//   rank x u64 dims (N, T, [C, H, W] or [D]) | payload bytes in {0,1} |
//   N x u32 labels. Integers little-endian.

inline constexpr std::uint16_t kSpikeFileVersion = 1;

inline std::vector<std::uint8_t> encode_spike_file(const Dataset& ds) {
    ds.validate();
    if (ds.time_steps == 0) throw FormatError("SPKT stores temporal spike data only");
    std::vector<std::uint8_t> out{'S', 'P', 'K', 'T'};
    detail::put_le<std::uint16_t>(out, kSpikeFileVersion);
    out.push_back(0);
    const std::uint8_t rank = static_cast<std::uint8_t>(2 + ds.sample_shape.size());
    out.push_back(rank);
    detail::put_le<std::uint64_t>(out, ds.size());
    detail::put_le<std::uint64_t>(out, ds.time_steps);
    for (auto d : ds.sample_shape) detail::put_le<std::uint64_t>(out, d);
    out.reserve(out.size() + ds.values.size() + 4 * ds.size());
    for (double v : ds.values) {
        if (v != 0.0 && v != 1.0) throw FormatError("SPKT payload must be binary");
        out.push_back(v == 1.0 ? 1 : 0);
    }
    for (auto y : ds.labels) detail::put_le<std::uint32_t>(out, y);
    return out;
}

/// `num_classes`, when zero, is inferred as max label + 1.
inline Dataset decode_spike_file(std::span<const std::uint8_t> bytes, std::size_t num_classes = 0) {
    if (bytes.size() < 8 || std::memcmp(bytes.data(), "SPKT", 4) != 0) throw FormatError("SPKT: bad magic");
    std::size_t pos = 4;
    const auto version = detail::get_le<std::uint16_t>(bytes, pos, "SPKT version");
    if (version != kSpikeFileVersion) throw FormatError("SPKT: unsupported version " + std::to_string(version));
    const auto dtype = detail::get_le<std::uint8_t>(bytes, pos, "SPKT dtype");
    if (dtype != 0) throw FormatError("SPKT: unsupported dtype " + std::to_string(dtype));
    const auto rank = detail::get_le<std::uint8_t>(bytes, pos, "SPKT rank");
    if (rank < 3) throw FormatError("SPKT: rank must be at least 3 (N, T, features)");
    std::vector<std::uint64_t> dims;
    for (std::size_t d = 0; d < rank; ++d) dims.push_back(detail::get_le<std::uint64_t>(bytes, pos, "SPKT dims"));
    std::uint64_t count = 1;
    for (auto d : dims) {
        if (d == 0 || count > (std::uint64_t{1} << 40) / d) throw FormatError("SPKT: implausible dimensions");
        count *= d;
    }
    const std::uint64_t n = dims[0];
    if (bytes.size() - pos != count + 4 * n)
        throw LengthError(fmt::format("SPKT: expected {} payload and label bytes, found {}", count + 4 * n,
                                      bytes.size() - pos));
    Dataset ds;
    ds.time_steps = dims[1];
    ds.sample_shape.assign(dims.begin() + 2, dims.end());
    ds.values.resize(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        const std::uint8_t b = bytes[pos + i];
        if (b > 1) throw FormatError("SPKT: payload byte outside {0,1}");
        ds.values[i] = b;
    }
    pos += count;
    std::uint32_t mx = 0;
    for (std::uint64_t i = 0; i < n; ++i) {
        ds.labels.push_back(detail::get_le<std::uint32_t>(bytes, pos, "SPKT labels"));
        mx = std::max(mx, ds.labels.back());
    }
    ds.num_classes = num_classes ? num_classes : mx + 1;
    ds.validate();
    return ds;
}

inline void write_spike_file(const Dataset& ds, const std::string& path) {
    write_file_atomic(path, encode_spike_file(ds));
}

inline Dataset read_spike_file(const std::string& path, std::size_t num_classes = 0) {
    return decode_spike_file(read_file_bytes(path), num_classes);
}

/// Reads SPKT or IDX depending on the file's leading bytes.
inline Dataset load_dataset(const std::string& path, const std::string& idx_labels = {}) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open " + path);
    char head[4] = {};
    in.read(head, 4);
    if (std::memcmp(head, "SPKT", 4) == 0) return read_spike_file(path);
    return load_idx(path, idx_labels);
}

// ---------------------------------------------------------------------------
// Metrics CSV

struct MetricsRow {
    std::size_t epoch = 0;
    double ratio = 0.0;
    std::size_t processed = 0;
    double train_loss = 0.0;
    double test_accuracy = 0.0;
    double wall_seconds = 0.0;
    double gamma = 0.0;
    std::size_t solver_iterations = 0;
};

inline constexpr const char* kMetricsHeader = "epoch,ratio,processed,train_loss,test_acc,wall_s,gamma,solver_iters";

inline std::string format_metrics(std::span<const MetricsRow> rows) {
    std::string out = std::string(kMetricsHeader) + "\n";
    for (const auto& r : rows)
        out += fmt::format("{},{},{},{},{},{},{},{}\n", r.epoch, r.ratio, r.processed, r.train_loss, r.test_accuracy,
                           r.wall_seconds, r.gamma, r.solver_iterations);
    return out;
}

inline void write_metrics_csv(std::span<const MetricsRow> rows, const std::string& path) {
    write_file_atomic(path, format_metrics(rows));
}

// ---------------------------------------------------------------------------
// Weight checkpoints: "SWGT" | version u16 | layer count u32 |
// per layer: u64 count, count x f64 (IEEE-754 bits, little-endian).

inline void write_weights(const Network& net, const std::string& path) {
    std::vector<std::uint8_t> out{'S', 'W', 'G', 'T'};
    detail::put_le<std::uint16_t>(out, 1);
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(net.depth()));
    for (const auto& w : net.weights) {
        detail::put_le<std::uint64_t>(out, w.size());
        for (double v : w) {
            std::uint64_t bits;
            std::memcpy(&bits, &v, sizeof bits);
            detail::put_le<std::uint64_t>(out, bits);
        }
    }
    write_file_atomic(path, out);
}

/// Loads weights into a network of matching architecture.
inline void read_weights(Network& net, const std::string& path) {
    const auto bytes = read_file_bytes(path);
    if (bytes.size() < 10 || std::memcmp(bytes.data(), "SWGT", 4) != 0) throw FormatError("weights: bad magic");
    std::size_t pos = 4;
    if (detail::get_le<std::uint16_t>(bytes, pos, "weights version") != 1) throw FormatError("weights: bad version");
    const auto layers = detail::get_le<std::uint32_t>(bytes, pos, "weights layer count");
    if (layers != net.depth()) throw FormatError("weights: layer count does not match the architecture");
    for (std::size_t l = 0; l < layers; ++l) {
        const auto count = detail::get_le<std::uint64_t>(bytes, pos, "weights tensor size");
        if (count != net.weights[l].size()) throw FormatError("weights: tensor size does not match the architecture");
        for (auto& v : net.weights[l]) {
            const auto bits = detail::get_le<std::uint64_t>(bytes, pos, "weights payload");
            std::memcpy(&v, &bits, sizeof v);
        }
    }
    if (pos != bytes.size()) throw LengthError("weights: trailing bytes");
    net.validate();
}

}  // namespace sadp
