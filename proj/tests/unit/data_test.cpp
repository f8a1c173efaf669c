#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "sadp/data.hpp"
#include "test_util.hpp"

using namespace sadp;
namespace fs = std::filesystem;

namespace {

std::vector<std::uint8_t> idx_bytes(std::uint8_t type, std::vector<std::uint32_t> dims, std::size_t payload) {
    std::vector<std::uint8_t> b{0, 0, type, static_cast<std::uint8_t>(dims.size())};
    for (auto d : dims)
        for (int s = 24; s >= 0; s -= 8) b.push_back(static_cast<std::uint8_t>(d >> s));
    for (std::size_t i = 0; i < payload; ++i) b.push_back(static_cast<std::uint8_t>(i % 256));
    return b;
}

class TempDir {
public:
    TempDir() {
        std::random_device rd;
        path_ = fs::temp_directory_path() / ("sadp_data_test_" + std::to_string(rd()));
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    std::string file(const std::string& name) const { return (path_ / name).string(); }

private:
    fs::path path_;
};

std::size_t hamming(std::span<const double> a, std::span<const double> b) {
    std::size_t d = 0;
    for (std::size_t i = 0; i < a.size(); ++i) d += a[i] != b[i];
    return d;
}

double nearest_prototype_accuracy(double noise) {
    const std::size_t c = 10, t = 8, d = 64;
    const Dataset protos = gen_synthetic(c, c, t, d, 0.0, 99);
    const Dataset ds = gen_synthetic(c, 1000, t, d, noise, 99);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        std::size_t best = 0, best_d = SIZE_MAX;
        for (std::size_t k = 0; k < c; ++k) {
            const std::size_t dist = hamming(ds.example(i), protos.example(k));
            if (dist < best_d) best_d = dist, best = k;
        }
        correct += best == ds.labels[i];
    }
    return static_cast<double>(correct) / static_cast<double>(ds.size());
}

}  // namespace

TEST(Idx, TwoImageFixture) {
    const auto bytes = idx_bytes(0x08, {2, 28, 28}, 2 * 28 * 28);
    const auto arr = parse_idx(bytes);
    EXPECT_EQ(arr.dims, (std::vector<std::size_t>{2, 28, 28}));
    EXPECT_EQ(arr.data.size(), 2u * 28 * 28);

    TempDir dir;
    write_file_atomic(dir.file("img.idx"), bytes);
    const auto lab = idx_bytes(0x08, {2}, 0);
    std::vector<std::uint8_t> labels = lab;
    labels.push_back(3);
    labels.push_back(7);
    write_file_atomic(dir.file("lab.idx"), labels);
    const Dataset ds = load_idx(dir.file("img.idx"), dir.file("lab.idx"));
    EXPECT_EQ(ds.size(), 2u);
    EXPECT_EQ(ds.sample_shape, (Shape{28, 28}));
    EXPECT_EQ(ds.labels, (std::vector<std::uint32_t>{3, 7}));
    EXPECT_EQ(ds.num_classes, 8u);
    EXPECT_DOUBLE_EQ(ds.values[255], 1.0);
    EXPECT_DOUBLE_EQ(ds.values[1], 1.0 / 255);
    for (double v : ds.values) ASSERT_TRUE(v >= 0.0 && v <= 1.0);
    EXPECT_EQ(load_dataset(dir.file("img.idx"), dir.file("lab.idx")).values, ds.values);
}

TEST(Idx, WrongTypeByteIsFormatError) {
    EXPECT_THROW(parse_idx(idx_bytes(0x07, {2, 28, 28}, 2 * 28 * 28)), FormatError);
    EXPECT_THROW(parse_idx(std::vector<std::uint8_t>{0, 0}), FormatError);
}

TEST(Idx, PayloadLengthMismatchIsLengthError) {
    EXPECT_THROW(parse_idx(idx_bytes(0x08, {2, 28, 28}, 2 * 28 * 28 - 1)), LengthError);
    EXPECT_THROW(parse_idx(idx_bytes(0x08, {2, 28, 28}, 2 * 28 * 28 + 5)), LengthError);
    // Truncated inside the dimension block.
    auto b = idx_bytes(0x08, {2, 28, 28}, 0);
    b.resize(9);
    EXPECT_THROW(parse_idx(b), FormatError);
}

TEST(Encode, RateModeZeroIntensityIsSilent) {
    const std::vector<double> frame(50, 0.0);
    for (double v : encode(frame, EncodeMode::rate, 20, 4)) EXPECT_EQ(v, 0.0);
}

TEST(Encode, DirectModeRepeatsTheFrame) {
    const std::vector<double> frame{0.1, 0.0, 0.9, 1.0};
    const auto a = encode(frame, EncodeMode::direct, 5, 1);
    const auto b = encode(frame, EncodeMode::direct, 5, 2);
    EXPECT_EQ(a, b);
    for (std::size_t t = 0; t < 5; ++t)
        for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(a[t * 4 + j], frame[j]);
}

TEST(Encode, RateMatchesIntensity) {
    const std::vector<double> frame{0.5};
    const auto s = encode(frame, EncodeMode::rate, 1000, 17);
    double mean = 0.0;
    for (double v : s) mean += v / 1000.0;
    EXPECT_LE(std::abs(mean - 0.5), 4.0 * std::sqrt(0.25 / 1000));
    EXPECT_EQ(s, encode(frame, EncodeMode::rate, 1000, 17));
}

TEST(Encode, RejectsOutOfRangeValues) {
    EXPECT_THROW(encode(std::vector<double>{0.5, 1.2}, EncodeMode::rate, 3, 1), RangeError);
    EXPECT_THROW(encode(std::vector<double>{-0.1}, EncodeMode::direct, 3, 1), RangeError);
}

TEST(Encode, DatasetKeepsLabels) {
    Dataset ds{{3}, 0, 2, {0.2, 0.4, 0.6, 1.0, 0.0, 0.5}, {1, 0}};
    const Dataset e = encode_dataset(ds, EncodeMode::rate, 6, 3);
    EXPECT_EQ(e.time_steps, 6u);
    EXPECT_EQ(e.labels, ds.labels);
    EXPECT_EQ(e.values.size(), 2u * 6 * 3);
    EXPECT_NO_THROW(e.validate());
}

TEST(Synthetic, NoiselessExamplesEqualPrototypes) {
    const Dataset protos = gen_synthetic(4, 4, 5, 7, 0.0, 8);
    const Dataset ds = gen_synthetic(4, 40, 5, 7, 0.0, 8);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto e = ds.example(i);
        const auto p = protos.example(ds.labels[i]);
        EXPECT_TRUE(std::equal(e.begin(), e.end(), p.begin()));
    }
}

TEST(Synthetic, DeterministicPerSeed) {
    const Dataset a = gen_synthetic(3, 30, 4, 6, 0.1, 5);
    const Dataset b = gen_synthetic(3, 30, 4, 6, 0.1, 5);
    const Dataset c = gen_synthetic(3, 30, 4, 6, 0.1, 6);
    EXPECT_EQ(a.values, b.values);
    EXPECT_EQ(a.labels, b.labels);
    EXPECT_NE(a.values, c.values);
}

TEST(Synthetic, NearestPrototypeAccuracy) { EXPECT_GT(nearest_prototype_accuracy(0.05), 0.9); }

TEST(Synthetic, AccuracyFallsWithNoise) {
    double prev = 1.0;
    for (double rho : {0.0, 0.3, 0.44, 0.47, 0.49, 0.5}) {
        const double acc = nearest_prototype_accuracy(rho);
        EXPECT_LE(acc, prev) << rho;
        prev = acc;
    }
    EXPECT_LT(nearest_prototype_accuracy(0.47), nearest_prototype_accuracy(0.44));
    EXPECT_LT(nearest_prototype_accuracy(0.5), 0.2);
}

TEST(Synthetic, RejectsBadArguments) {
    EXPECT_THROW(gen_synthetic(1, 10, 2, 2, 0.1, 1), ConfigError);
    EXPECT_THROW(gen_synthetic(3, 2, 2, 2, 0.1, 1), ConfigError);
    EXPECT_THROW(gen_synthetic(3, 10, 2, 2, 1.5, 1), ConfigError);
}

TEST(SpikeFile, RoundTrip) {
    const Dataset ds = gen_synthetic(5, 37, 6, 11, 0.2, 4);
    const Dataset back = decode_spike_file(encode_spike_file(ds), 5);
    EXPECT_EQ(back.values, ds.values);
    EXPECT_EQ(back.labels, ds.labels);
    EXPECT_EQ(back.sample_shape, ds.sample_shape);
    EXPECT_EQ(back.time_steps, ds.time_steps);
    EXPECT_EQ(back.num_classes, 5u);

    TempDir dir;
    write_spike_file(ds, dir.file("d.spkt"));
    EXPECT_EQ(load_dataset(dir.file("d.spkt")).values, ds.values);
}

TEST(SpikeFile, RankFiveShapes) {
    std::mt19937_64 rng(3);
    Dataset ds{{2, 3, 4}, 5, 3, sadp::testing::random_spikes(7 * 5 * 24, 0.3, rng), {}};
    for (std::uint32_t i = 0; i < 7; ++i) ds.labels.push_back(i % 3);
    const auto bytes = encode_spike_file(ds);
    EXPECT_EQ(bytes[7], 5);
    const Dataset back = decode_spike_file(bytes);
    EXPECT_EQ(back.sample_shape, (Shape{2, 3, 4}));
    EXPECT_EQ(back.time_steps, 5u);
    EXPECT_EQ(back.values, ds.values);
}

TEST(SpikeFile, CorruptionIsRejected) {
    const Dataset ds = gen_synthetic(2, 4, 2, 3, 0.0, 1);
    auto bytes = encode_spike_file(ds);
    auto bad_magic = bytes;
    bad_magic[0] = 'X';
    EXPECT_THROW(decode_spike_file(bad_magic), FormatError);
    auto bad_version = bytes;
    bad_version[4] = 9;
    EXPECT_THROW(decode_spike_file(bad_version), FormatError);
    auto short_file = bytes;
    short_file.pop_back();
    EXPECT_THROW(decode_spike_file(short_file), LengthError);
    auto bad_payload = bytes;
    bad_payload[8 + 4 * 8] = 2;
    EXPECT_THROW(decode_spike_file(bad_payload), FormatError);
    auto header_only = bytes;
    header_only.resize(12);
    EXPECT_THROW(decode_spike_file(header_only), FormatError);
}

TEST(Metrics, HeaderAndRows) {
    std::vector<MetricsRow> rows(2);
    rows[0] = {1, 0.5, 100, 1.25, 0.75, 0.5, 2.0, 3};
    rows[1] = {2, 0.6, 80, 0.5, 0.875, 0.25, 0.0, 1};
    const std::string text = format_metrics(rows);
    EXPECT_EQ(text, "epoch,ratio,processed,train_loss,test_acc,wall_s,gamma,solver_iters\n"
                    "1,0.5,100,1.25,0.75,0.5,2,3\n"
                    "2,0.6,80,0.5,0.875,0.25,0,1\n");
    TempDir dir;
    write_metrics_csv(rows, dir.file("sub/m.csv"));
    std::ifstream in(dir.file("sub/m.csv"));
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    EXPECT_EQ(content, text);
}

TEST(Weights, RoundTripIsBitExact) {
    TempDir dir;
    const Network net = sadp::testing::dense_net({7, 5, 3}, 12);
    write_weights(net, dir.file("w.bin"));
    Network other = sadp::testing::dense_net({7, 5, 3}, 13);
    read_weights(other, dir.file("w.bin"));
    EXPECT_EQ(other.weights, net.weights);
    Network wrong = sadp::testing::dense_net({7, 4, 3}, 1);
    EXPECT_THROW(read_weights(wrong, dir.file("w.bin")), FormatError);
}

TEST(Dataset, SliceAndValidate) {
    const Dataset ds = gen_synthetic(3, 12, 2, 4, 0.1, 2);
    const Dataset part = slice(ds, 3, 7);
    EXPECT_EQ(part.size(), 4u);
    const auto a = part.example(0), b = ds.example(3);
    EXPECT_TRUE(std::equal(a.begin(), a.end(), b.begin()));
    EXPECT_THROW(slice(ds, 5, 13), RangeError);
    Dataset broken = ds;
    broken.labels[0] = 3;
    EXPECT_THROW(broken.validate(), RangeError);
}
