#include <gtest/gtest.h>

#include <cmath>

#include "sadp/optimizer.hpp"

using namespace sadp;

namespace {

OptimizerState sgd(double lr, double momentum = 0.0, double decay = 0.0) {
    OptimizerState opt;
    opt.learning_rate = opt.base_lr = lr;
    opt.momentum = momentum;
    opt.weight_decay = decay;
    return opt;
}

}  // namespace

TEST(SgdStep, SinglePlainStep) {
    std::vector<std::vector<double>> w{{0.0}};
    auto opt = sgd(0.1);
    sgd_step(w, {{1.0}}, opt);
    EXPECT_DOUBLE_EQ(w[0][0], -0.1);
}

TEST(SgdStep, MomentumTwoSteps) {
    std::vector<std::vector<double>> w{{0.0}};
    auto opt = sgd(0.1, 0.9);
    sgd_step(w, {{1.0}}, opt);
    sgd_step(w, {{1.0}}, opt);
    EXPECT_NEAR(w[0][0], -0.29, 1e-15);
    EXPECT_NEAR(opt.momentum_buffers[0][0], 1.9, 1e-15);
}

TEST(SgdStep, ZeroGradientLeavesWeights) {
    std::vector<std::vector<double>> w{{0.3, -2.0}, {5.0}};
    const auto before = w;
    auto opt = sgd(0.5, 0.9);
    sgd_step(w, {{0.0, 0.0}, {0.0}}, opt);
    EXPECT_EQ(w, before);
}

TEST(SgdStep, WeightDecayPullsTowardZero) {
    std::vector<std::vector<double>> w{{2.0}};
    auto opt = sgd(0.1, 0.0, 0.5);
    sgd_step(w, {{0.0}}, opt);
    EXPECT_DOUBLE_EQ(w[0][0], 2.0 - 0.1 * 0.5 * 2.0);
}

TEST(SgdStep, Errors) {
    std::vector<std::vector<double>> w{{0.0, 1.0}};
    const auto before = w;
    auto opt = sgd(0.1);
    EXPECT_THROW(sgd_step(w, {{1.0, NAN}}, opt), NumericError);
    EXPECT_EQ(w, before);
    EXPECT_THROW(sgd_step(w, {{1.0}}, opt), DimensionError);
    EXPECT_THROW(sgd_step(w, {{1.0, 1.0}, {1.0}}, opt), DimensionError);
}

TEST(CosineLr, EndpointsAndMidpoint) {
    EXPECT_DOUBLE_EQ(cosine_lr(1, 10, 0.2), 0.2);
    EXPECT_NEAR(cosine_lr(6, 10, 0.2), 0.1, 1e-15);
    EXPECT_LT(cosine_lr(1000, 1000, 0.2), 1e-5);
    for (std::size_t k = 2; k <= 50; ++k) EXPECT_LT(cosine_lr(k, 50, 1.0), cosine_lr(k - 1, 50, 1.0));
    EXPECT_THROW(cosine_lr(0, 10, 0.2), RangeError);
    EXPECT_THROW(cosine_lr(11, 10, 0.2), RangeError);
}

TEST(OptimizerState, Validation) {
    EXPECT_THROW(sgd(0.0).validate(), ConfigError);
    EXPECT_THROW(sgd(0.1, 1.0).validate(), ConfigError);
    EXPECT_THROW(sgd(0.1, 0.0, -1.0).validate(), ConfigError);
    EXPECT_NO_THROW(sgd(0.1, 0.9, 5e-5).validate());
}
