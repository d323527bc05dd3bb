#include <cmath>
#include <limits>
#include <vector>

#include <gtest/gtest.h>

#include "celm/analysis.hpp"

using namespace celm;
using namespace celm::analysis;

namespace {
using V = std::vector<Real>;
constexpr Real kOracleTol = 1e-9;
}  // namespace

TEST(ZScore, FlagsOnlyTheLowOutlier) {
    const V c{0.3, 0.3, 0.3, 0.1};
    const auto z = zscores(c);
    EXPECT_NEAR(z[3], -std::sqrt(3.0), 1e-12);
    EXPECT_EQ(zscore_flags(c, -1.0), (std::vector<bool>{false, false, false, true}));
}

TEST(ZScore, UniformContributionsNeverFlagged) {
    const V c(5, 0.2);
    for (Real t : default_thresholds()) EXPECT_EQ(zscore_flags(c, t), std::vector<bool>(5, false));
}

TEST(ZScore, InfiniteThresholdFlagsEveryone) {
    EXPECT_EQ(zscore_flags(V{0.3, 0.3, 0.3, 0.1}, std::numeric_limits<Real>::infinity()), std::vector<bool>(4, true));
    EXPECT_THROW(zscores(V{1.0}), DomainError);
}

TEST(Auroc, Examples) {
    const V s{1, 2, 3, 4};
    EXPECT_NEAR(auroc(s, {true, false, false, false}), 1.0, kOracleTol);
    EXPECT_NEAR(auroc(s, {false, true, false, false}), 2.0 / 3.0, kOracleTol);
    EXPECT_NEAR(auroc(V(4, 0.25), {true, false, false, false}), 0.5, kOracleTol);
    EXPECT_NEAR(auroc(V{0.1, 0.1, 0.4, 0.4}, {true, true, false, false}), 1.0, kOracleTol);
    EXPECT_THROW(auroc(s, std::vector<bool>(4, false)), DomainError);
}

TEST(Auroc, InvariantUnderMonotoneTransform) {
    const V s{0.3, -1.2, 2.5, 0.7, 0.7, 1.9};
    const std::vector<bool> pos{false, true, false, true, false, false};
    V t;
    for (Real v : s) t.push_back(std::exp(3.0 * v) + 7.0);
    EXPECT_NEAR(auroc(s, pos), auroc(t, pos), 1e-15);
}

TEST(Fpr, NeverFlagsHonest) {
    const std::vector<V> trace{{0.3, 0.3, 0.3, 0.1}, {0.32, 0.3, 0.34, 0.04}};
    EXPECT_EQ(fpr_sweep(trace, default_thresholds(), {false, false, false, true}), 0.0);
}

TEST(Fpr, HandBuiltTwoRoundTrace) {
    // Round 1: only client 4 is below -1; everyone is below +1.
    // Round 2: client 1 (honest) is below -1; everyone is below +1.
    // (0 + 1 + 1/3 + 1) / 4 = 7/12.
    const std::vector<V> trace{{0.3, 0.3, 0.3, 0.1}, {0.1, 0.3, 0.3, 0.3}};
    const V thresholds{-1.0, 1.0};
    EXPECT_NEAR(fpr_sweep(trace, thresholds, {false, false, false, true}), 7.0 / 12.0, kOracleTol);
}

TEST(Fpr, ThresholdAboveAllIsOne) {
    const std::vector<V> trace{{0.3, 0.3, 0.3, 0.1}};
    const V above{10.0};
    EXPECT_EQ(fpr_sweep(trace, above, {false, false, false, true}), 1.0);
    EXPECT_THROW(fpr_sweep(trace, V{0.0, 0.0}, {false, false, false, true}), DomainError);
    EXPECT_THROW(fpr_sweep(trace, V{}, {false, false, false, true}), DomainError);
}

TEST(DefaultThresholds, Grid) {
    EXPECT_EQ(default_thresholds(), (V{-2.0, -1.75, -1.5, -1.25, -1.0, -0.75, -0.5}));
}

TEST(Jsd, Examples) {
    EXPECT_NEAR(jsd(V{0.2, 0.8}, V{0.2, 0.8}), 0.0, kOracleTol);
    // 0.5 * ln(4/3) + 0.25 * ln(2/3) + 0.25 * ln 2
    const Real want = 0.5 * std::log(4.0 / 3.0) + 0.25 * std::log(2.0 / 3.0) + 0.25 * std::log(2.0);
    EXPECT_NEAR(jsd(V{1, 0}, V{0.5, 0.5}), want, kOracleTol);
    EXPECT_NEAR(jsd(V{1, 0}, V{0.5, 0.5}), 0.2158, 5e-5);
    EXPECT_NEAR(jsd(V{1, 0, 0}, V{0, 0.5, 0.5}), std::log(2.0), kOracleTol);
}

TEST(Emd, Examples) {
    EXPECT_NEAR(emd_1d(V{0.5, 0.5}, V{0.5, 0.5}), 0.0, kOracleTol);
    EXPECT_NEAR(emd_1d(V{1, 0}, V{0, 1}), 0.5, kOracleTol);
    V p(10, 0.0), q(10, 0.0);
    p[3] = 1.0;
    q[4] = 1.0;
    EXPECT_NEAR(emd_1d(p, q), 0.1, kOracleTol);
}

TEST(Hellinger, Examples) {
    EXPECT_NEAR(hellinger(V{0.3, 0.7}, V{0.3, 0.7}), 0.0, kOracleTol);
    EXPECT_NEAR(hellinger(V{1, 0}, V{0, 1}), 1.0, kOracleTol);
    EXPECT_NEAR(hellinger(V{1, 0}, V{0.5, 0.5}), std::sqrt(1.0 - std::sqrt(0.5)), kOracleTol);
    EXPECT_NEAR(hellinger(V{1, 0}, V{0.5, 0.5}), 0.5412, 5e-5);
}

TEST(Distances, SymmetricAndBounded) {
    const std::vector<V> dists{{0.1, 0.2, 0.7}, {1, 0, 0}, {0.3, 0.3, 0.4}, {0, 0.5, 0.5}};
    for (const auto& p : dists) {
        for (const auto& q : dists) {
            const auto a = distances(p, q);
            const auto b = distances(q, p);
            EXPECT_NEAR(a.jsd, b.jsd, 1e-15);
            EXPECT_NEAR(a.emd, b.emd, 1e-15);
            EXPECT_NEAR(a.hellinger, b.hellinger, 1e-15);
            EXPECT_GE(a.jsd, 0.0);
            EXPECT_LE(a.jsd, std::log(2.0) + 1e-12);
            EXPECT_GE(a.hellinger, 0.0);
            EXPECT_LE(a.hellinger, 1.0);
            EXPECT_GE(a.emd, 0.0);
            if (p == q) {
                EXPECT_LT(a.jsd, 1e-12);
                EXPECT_LT(a.emd, 1e-12);
                EXPECT_LT(a.hellinger, 1e-12);
            } else {
                EXPECT_GT(a.jsd, 1e-12);
                EXPECT_GT(a.hellinger, 1e-12);
            }
        }
    }
}

TEST(Distances, RejectInvalidInput) {
    EXPECT_THROW(jsd(V{0.5, 0.6}, V{0.5, 0.5}), DomainError);
    EXPECT_THROW(jsd(V{1.0}, V{0.5, 0.5}), DimensionError);
}

TEST(Fidelity, ExactEstimateHasZeroDistance) {
    const Grid<std::size_t> truth = Grid<std::size_t>::from_rows({{30, 10}, {0, 20}});
    DistributionEstimate est;
    est.clients = Matrix::from_rows({{0.75, 0.25}, {0, 1}});
    est.global = {0.5, 0.5};
    const auto rep = fidelity(est, truth);
    EXPECT_LT(rep.estimated_global.jsd, 1e-12);
    EXPECT_LT(rep.estimated_clients.hellinger, 1e-12);
    EXPECT_NEAR(rep.uniform_clients.hellinger, 0.5 * (hellinger(V{0.5, 0.5}, V{0.75, 0.25}) + hellinger(V{0.5, 0.5}, V{0, 1})),
                1e-12);
}

TEST(Accuracy, PerfectClassifier) {
    const std::vector<std::size_t> y{0, 1, 2, 2};
    const std::size_t rare[] = {2};
    const auto a = accuracy_decomposition(y, y, 3, rare);
    EXPECT_EQ(a.accuracy, 1.0);
    EXPECT_EQ(a.balanced, 1.0);
    EXPECT_EQ(a.rare, 1.0);
}

TEST(Accuracy, ConfusionMatrixOracle) {
    // recalls: class 0 2/3, class 1 1/2, class 2 1
    const std::vector<std::size_t> y{0, 0, 0, 1, 1, 2};
    const std::vector<std::size_t> p{0, 1, 0, 1, 0, 2};
    const std::size_t rare[] = {1, 2};
    const auto a = accuracy_decomposition(p, y, 3, rare);
    EXPECT_NEAR(a.accuracy, 4.0 / 6.0, 1e-15);
    EXPECT_NEAR(a.balanced, (2.0 / 3.0 + 0.5 + 1.0) / 3.0, 1e-15);
    EXPECT_NEAR(a.rare, 0.75, 1e-15);
    EXPECT_NEAR(a.per_class[0], 2.0 / 3.0, 1e-15);
}

TEST(Accuracy, IgnoringRareClassScoresZero) {
    const std::vector<std::size_t> y{0, 1, 2, 2, 2};
    const std::vector<std::size_t> p{0, 1, 0, 1, 0};
    const std::size_t rare[] = {2};
    EXPECT_EQ(accuracy_decomposition(p, y, 3, rare).rare, 0.0);
}

TEST(Accuracy, AbsentClassSkippedInBalanced) {
    const std::vector<std::size_t> y{0, 0, 1};
    const auto a = accuracy_decomposition(y, y, 4);
    EXPECT_EQ(a.balanced, 1.0);
    EXPECT_TRUE(std::isnan(a.per_class[3]));
    EXPECT_TRUE(std::isnan(a.rare));
}
