#include <gtest/gtest.h>

#include "mentee/probe.hpp"
#include "test_util.hpp"

using namespace mentee;
using testutil::finite_diff;
using testutil::max_rel_err;
using testutil::random_tensor;

namespace {

// Independent scalar triple-loop oracle for Psi: batch x matched components,
// squared difference, mean, square root.
template <class T>
double psi_oracle(const Tensor<T>& mentor, const Tensor<T>& mentee) {
    const std::size_t batch = mentor.extent(0);
    const std::size_t dm = mentor.size() / batch;
    const std::size_t ds = mentee.size() / batch;
    std::size_t a = 0;
    if (mentor.rank() == 2) {
        a = std::min(mentor.extent(1), mentee.extent(1));
    } else {
        a = std::min(mentor.extent(1), mentee.extent(1)) * mentor.extent(2) * mentor.extent(3);
    }
    double acc = 0;
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t i = 0; i < a; ++i) {
            const double m = mentor[b * dm + i];
            const double s = mentee[b * ds + i];
            acc += (m - s) * (m - s);
        }
    return std::sqrt(acc / (double(a) * double(batch)));
}

} // namespace

TEST(MatchWidth, FlatMinimum) {
    TensorF mentor({3, 512}), mentee({3, 128});
    EXPECT_EQ(match_width(mentor, mentee), 128u);
    TensorF a({2, 10}), b({2, 10});
    EXPECT_EQ(match_width(a, b), 10u);
}

TEST(MatchWidth, ConvChannelsTimesSpatial) {
    TensorF mentor({2, 20, 12, 12}), mentee({2, 8, 12, 12});
    EXPECT_EQ(match_width(mentor, mentee), 8u * 144u);
}

TEST(MatchWidth, SpatialMismatchThrows) {
    TensorF mentor({2, 4, 12, 12}), mentee({2, 4, 10, 10});
    EXPECT_THROW(match_width(mentor, mentee), SpatialMismatch);
}

TEST(MatchWidth, RankMismatchThrows) {
    TensorF mentor({2, 4, 12, 12}), mentee({2, 64});
    EXPECT_THROW(match_width(mentor, mentee), SpatialMismatch);
}

TEST(MatchWidth, BatchMismatchThrows) {
    TensorF mentor({2, 16}), mentee({3, 16});
    EXPECT_THROW(match_width(mentor, mentee), BatchMismatch);
}

TEST(ProbeLoss, IdenticalActivationsZero) {
    SeededRng rng(3);
    auto x = random_tensor<float>({4, 9}, rng);
    EXPECT_EQ(probe_loss(x, x), 0.0);
}

TEST(ProbeLoss, HandComputedValue) {
    auto mentor = TensorF::from({1, 4}, {0, 0, 0, 0});
    auto mentee = TensorF::from({1, 2}, {3, 4});
    // a = 2, Psi = sqrt((9+16)/2) = sqrt(12.5)
    EXPECT_NEAR(probe_loss(mentor, mentee), std::sqrt(12.5), 1e-12);
}

TEST(ProbeLoss, ExtraMenteeUnitsIgnored) {
    auto mentor = TensorF::from({1, 3}, {1, 2, 2});
    auto mentee = TensorF::from({1, 4}, {1, 2, 2, 999});
    EXPECT_EQ(probe_loss(mentor, mentee), 0.0);
}

TEST(ProbeLoss, InvariantBeyondMatchedIndex) {
    SeededRng rng(5);
    auto mentor = random_tensor<double>({3, 10}, rng);
    auto mentee = random_tensor<double>({3, 6}, rng);
    const double base = probe_loss(mentor, mentee);
    for (std::size_t b = 0; b < 3; ++b)
        for (std::size_t i = 6; i < 10; ++i) mentor.at2(b, i) = 1e9 * rng.next_unit();
    EXPECT_EQ(probe_loss(mentor, mentee), base);
}

TEST(ProbeLoss, SymmetricInMatchedComponents) {
    SeededRng rng(7);
    auto a = random_tensor<double>({2, 5}, rng);
    auto b = random_tensor<double>({2, 5}, rng);
    EXPECT_DOUBLE_EQ(probe_loss(a, b), probe_loss(b, a));
}

TEST(ProbeLoss, MatchesTripleLoopOracle) {
    SeededRng rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t batch = 1 + rng.uniform_index(4);
        if (trial % 2 == 0) {
            const std::size_t dm = 1 + rng.uniform_index(12);
            const std::size_t ds = 1 + rng.uniform_index(12);
            auto m = random_tensor<double>({batch, dm}, rng, -3.0, 3.0);
            auto s = random_tensor<double>({batch, ds}, rng, -3.0, 3.0);
            EXPECT_NEAR(probe_loss(m, s), psi_oracle(m, s), 1e-12);
        } else {
            const std::size_t cm = 1 + rng.uniform_index(4);
            const std::size_t cs = 1 + rng.uniform_index(4);
            const std::size_t h = 1 + rng.uniform_index(4);
            const std::size_t w = 1 + rng.uniform_index(4);
            auto m = random_tensor<double>({batch, cm, h, w}, rng, -3.0, 3.0);
            auto s = random_tensor<double>({batch, cs, h, w}, rng, -3.0, 3.0);
            EXPECT_NEAR(probe_loss(m, s), psi_oracle(m, s), 1e-12);
        }
    }
}

TEST(ProbeGrad, IdenticalActivationsZeroGradient) {
    SeededRng rng(13);
    auto x = random_tensor<float>({2, 6}, rng);
    auto g = probe_grad(x, x);
    for (float v : g) EXPECT_EQ(v, 0.0f);
}

TEST(ProbeGrad, UnmatchedComponentsExactlyZero) {
    SeededRng rng(17);
    auto mentor = random_tensor<float>({2, 4}, rng);
    auto mentee = random_tensor<float>({2, 7}, rng);
    auto g = probe_grad(mentor, mentee);
    for (std::size_t b = 0; b < 2; ++b)
        for (std::size_t i = 4; i < 7; ++i) EXPECT_EQ(g.at2(b, i), 0.0f);
}

TEST(ProbeGrad, MatchesFiniteDifferences) {
    SeededRng rng(19);
    for (int trial = 0; trial < 10; ++trial) {
        auto mentor = random_tensor<double>({3, 6}, rng, -2.0, 2.0);
        auto mentee = random_tensor<double>({3, 8}, rng, -2.0, 2.0);
        if (probe_loss(mentor, mentee) <= 0.1) continue;
        auto g = probe_grad(mentor, mentee);
        auto loss = [&]() { return probe_loss(mentor, mentee); };
        auto num = finite_diff(mentee, loss, 1e-6);
        EXPECT_LE(max_rel_err(g, num), 1e-5);
    }
}

TEST(ProbeGrad, ConvCaseMatchesFiniteDifferences) {
    SeededRng rng(23);
    auto mentor = random_tensor<double>({2, 3, 3, 3}, rng, -2.0, 2.0);
    auto mentee = random_tensor<double>({2, 2, 3, 3}, rng, -2.0, 2.0);
    ASSERT_GT(probe_loss(mentor, mentee), 0.1);
    auto g = probe_grad(mentor, mentee);
    auto loss = [&]() { return probe_loss(mentor, mentee); };
    auto num = finite_diff(mentee, loss, 1e-6);
    EXPECT_LE(max_rel_err(g, num), 1e-5);
}

TEST(CombinedLoss, LinearCombination) {
    EXPECT_DOUBLE_EQ(combined_loss(2.0, {1.0}, {1.0}, 0.5, 1.0, 0.5, 0.25), 2.625);
}

TEST(CombinedLoss, IndependentDegeneratesToLabelLoss) {
    EXPECT_DOUBLE_EQ(combined_loss(2.0, {1.0, 3.0}, {1.0, 1.0}, 0.5, 1.0, 0.0, 0.0), 2.0);
}

TEST(CombinedLoss, GullibleIsProbeSumOnly) {
    EXPECT_DOUBLE_EQ(combined_loss(7.0, {1.0, 3.0}, {1.0, 1.0}, 0.5, 0.0, 1.0, 0.0), 4.0);
}

TEST(CombinedLoss, PerProbeMultipliers) {
    EXPECT_DOUBLE_EQ(combined_loss(0.0, {1.0, 2.0}, {2.0, 0.5}, 0.0, 0.0, 1.0, 0.0), 3.0);
}

TEST(CombinedLoss, NegativeWeightThrows) {
    EXPECT_THROW(combined_loss(1.0, {}, {}, 0.0, -0.1, 0.0, 0.0), NegativeWeight);
    EXPECT_THROW(combined_loss(1.0, {}, {}, 0.0, 0.0, -1.0, 0.0), NegativeWeight);
    EXPECT_THROW(combined_loss(1.0, {}, {}, 0.0, 0.0, 0.0, -1.0), NegativeWeight);
}

TEST(ProbeSet, DuplicatePairRejected) {
    ProbeSet set;
    set.body = {{2, 1, ProbeGroup::body, 1.0}, {2, 1, ProbeGroup::body, 0.5}};
    EXPECT_THROW(set.validate(), ProbeShapeError);
    set.body = {{2, 1, ProbeGroup::body, 1.0}, {3, 1, ProbeGroup::body, 0.5}};
    EXPECT_NO_THROW(set.validate());
}

TEST(SoftmaxProbe, GradientMatchesFiniteDifferences) {
    SeededRng rng(29);
    auto mentor_logits = random_tensor<double>({3, 5}, rng, -2.0, 2.0);
    auto mentee_logits = random_tensor<double>({3, 5}, rng, -2.0, 2.0);
    const double temp = 3.0;
    auto res = softmax_probe(mentor_logits, mentee_logits, temp);
    ASSERT_GT(res.psi, 0.0);
    auto loss = [&]() {
        return probe_loss(softmax_T(mentor_logits, temp), softmax_T(mentee_logits, temp));
    };
    auto num = finite_diff(mentee_logits, loss, 1e-6);
    EXPECT_LE(max_rel_err(res.d_mentee_logits, num, 1e-5), 1e-4);
}

TEST(SoftmaxProbe, ClassCountMismatchThrows) {
    TensorF a({2, 10}), b({2, 8});
    EXPECT_THROW(softmax_probe(a, b, 3.0), ProbeShapeError);
}
