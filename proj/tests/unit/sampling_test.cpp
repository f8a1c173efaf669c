#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "sadp/sampling.hpp"

using namespace sadp;

namespace {

ProbabilityAssignment assignment(std::vector<double> p, std::size_t s) {
    ProbabilityAssignment pa;
    pa.probabilities = std::move(p);
    pa.target_size = s;
    return pa;
}

}  // namespace

TEST(SampleSubset, CertainAndImpossibleExamples) {
    const auto pa = assignment({1, 0, 1, 0, 0.5}, 2);
    std::mt19937_64 rng(3);
    for (int d = 0; d < 1000; ++d) {
        const auto plan = sample_subset(pa, rng);
        ASSERT_EQ(plan.mask[0], 1);
        ASSERT_EQ(plan.mask[1], 0);
        ASSERT_EQ(plan.mask[2], 1);
        ASSERT_EQ(plan.mask[3], 0);
    }
}

TEST(SampleSubset, MaskAndIndicesAgree) {
    std::mt19937_64 rng(5);
    std::vector<double> p(200);
    for (double& v : p) v = uniform01(rng);
    const auto plan = sample_subset(assignment(p, 100), 77);
    std::vector<std::size_t> from_mask;
    for (std::size_t i = 0; i < plan.mask.size(); ++i)
        if (plan.mask[i]) from_mask.push_back(i);
    EXPECT_EQ(from_mask, plan.selected_indices);
}

TEST(SampleSubset, DeterministicGivenSeed) {
    const auto pa = assignment(std::vector<double>(500, 0.3), 150);
    EXPECT_EQ(sample_subset(pa, 9).mask, sample_subset(pa, 9).mask);
    EXPECT_NE(sample_subset(pa, 9).mask, sample_subset(pa, 10).mask);
}

TEST(SampleSubset, SubsetSizeMatchesBinomial) {
    std::mt19937_64 gen(11);
    std::vector<double> p(300);
    double mean = 0.0, var = 0.0;
    for (double& v : p) {
        v = uniform01(gen);
        mean += v;
        var += v * (1 - v);
    }
    const auto pa = assignment(p, 150);
    std::mt19937_64 rng(12);
    const int draws = 10000;
    double total = 0.0;
    for (int d = 0; d < draws; ++d) total += static_cast<double>(sample_subset(pa, rng).selected_indices.size());
    // Standard error of the average of 10,000 draws.
    EXPECT_LE(std::abs(total / draws - mean), 4.0 * std::sqrt(var / draws));
}

TEST(SampleSubset, RejectsInvalidProbability) {
    EXPECT_THROW(sample_subset(assignment({0.5, 1.5}, 1), 1), RangeError);
}

TEST(LossWeights, Examples) {
    const auto full = assignment({1, 1, 1, 1}, 4);
    const auto plan = sample_subset(full, 1);
    EXPECT_EQ(loss_weights(full, plan, 4, 4), (std::vector<double>{1, 1, 1, 1}));

    const auto half = assignment({0.5, 0.5, 0.5, 0.5}, 2);
    EpochPlan all;
    all.selected_indices = {0, 1, 2, 3};
    EXPECT_EQ(loss_weights(half, all, 4, 2), (std::vector<double>{1, 1, 1, 1}));

    const auto mixed = assignment({0.25, 1.0}, 1);
    EpochPlan both;
    both.selected_indices = {0, 1};
    EXPECT_EQ(loss_weights(mixed, both, 2, 1), (std::vector<double>{2.0, 0.5}));
}

TEST(LossWeights, SelectedWithZeroProbability) {
    const auto pa = assignment({0.0, 1.0}, 1);
    EpochPlan plan;
    plan.selected_indices = {0};
    EXPECT_THROW(loss_weights(pa, plan, 2, 1), InvariantViolation);
}
