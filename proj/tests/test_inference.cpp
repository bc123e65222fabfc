#include <gtest/gtest.h>

#include <cmath>

#include "byzrl/inference.hpp"
#include "oracles.hpp"

using namespace byzrl;

TEST(Detection, FaultlessIsEasy) {
    DetectionConfig c;
    c.M = 25;
    c.separation = 3.0;
    c.trials = 10000;
    EXPECT_LE(simulate_detection(c, 1).error, 0.01);
}

TEST(Detection, BlindedAtHalf) {
    DetectionConfig c;
    c.M = 25;
    c.alpha = 0.5;
    c.trials = 10000;
    const auto r = simulate_detection(c, 2);
    EXPECT_NEAR(r.error, 0.5, 3.0 * r.stderr_);
}

TEST(Detection, MatchesExhaustiveEnumeration) {
    for (std::size_t m = 1; m <= 10; ++m) {
        for (double alpha : {0.0, 0.2, 0.4}) {
            for (auto membership : {ByzantineMembership::bernoulli, ByzantineMembership::fixed_count}) {
                DetectionConfig c;
                c.M = m;
                c.alpha = alpha;
                c.separation = 1.5;
                c.trials = 20000;
                c.membership = membership;
                const double p = local_error_probability(c);
                const double exact = membership == ByzantineMembership::bernoulli
                                         ? oracle::exact_binary_fusion_error_bernoulli(m, alpha, p)
                                         : oracle::exact_binary_fusion_error(m, fixed_byzantine_count(alpha, m), p);
                const auto r = simulate_detection(c, 100 + m);
                EXPECT_NEAR(r.error, exact, 3.0 * r.stderr_ + 1e-3) << "M=" << m << " alpha=" << alpha;
            }
        }
    }
}

TEST(Detection, LocalErrorMatchesSimulation) {
    DetectionConfig c;
    c.M = 1;
    c.separation = 1.0;
    c.trials = 40000;
    const auto r = simulate_detection(c, 7);
    EXPECT_NEAR(r.error, local_error_probability(c), 3.0 * r.stderr_);
    c.framework = DetectionFramework::neyman_pearson_majority;
    const auto np = simulate_detection(c, 8);
    EXPECT_NEAR(np.error, local_error_probability(c), 3.0 * np.stderr_);
}

TEST(Detection, NonDecreasingInAlpha) {
    DetectionConfig c;
    c.M = 25;
    c.trials = 10000;
    const auto rows = sweep_alpha(c, {0.0, 0.1, 0.2, 0.3, 0.4, 0.45, 0.5}, 3);
    for (std::size_t i = 1; i < rows.size(); ++i)
        EXPECT_GE(rows[i].error + 3.0 * std::hypot(rows[i].stderr_, rows[i - 1].stderr_), rows[i - 1].error);
}

TEST(Detection, QaryBlinding) {
    DetectionConfig c;
    c.Q = 4;
    c.M = 25;
    c.trials = 10000;
    const auto rows = sweep_alpha(c, {0.75}, 4);
    ASSERT_EQ(rows.size(), 1u);
    EXPECT_NEAR(rows[0].error, 0.75, 0.1);
}

TEST(Detection, SweepShapes) {
    DetectionConfig c;
    c.trials = 2000;
    EXPECT_TRUE(sweep_alpha(c, {}, 5).empty());
    const auto rows = sweep_alpha(c, {0.0, 0.5}, 5);
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_LE(rows[0].error, 0.05);
    EXPECT_NEAR(rows[1].error, 0.5, 0.05);
    EXPECT_NE(rows[0].seed, rows[1].seed);
    EXPECT_EQ(rows[1].trials, 2000u);
    EXPECT_THROW(sweep_alpha(c, {0.5, 0.1}, 5), std::invalid_argument);
    EXPECT_THROW(sweep_alpha(c, {1.5}, 5), std::invalid_argument);
}

TEST(Detection, Deterministic) {
    DetectionConfig c;
    c.trials = 3000;
    c.alpha = 0.3;
    EXPECT_EQ(simulate_detection(c, 9).error, simulate_detection(c, 9).error);
}

TEST(Detection, Validation) {
    DetectionConfig c;
    c.Q = 1;
    EXPECT_THROW(simulate_detection(c, 1), std::invalid_argument);
    c = DetectionConfig{};
    c.separation = 0.0;
    EXPECT_THROW(simulate_detection(c, 1), std::invalid_argument);
    c = DetectionConfig{};
    c.Q = 3;
    c.framework = DetectionFramework::neyman_pearson_majority;
    EXPECT_THROW(simulate_detection(c, 1), std::invalid_argument);
}

TEST(Estimation, NoAttackMeansEqualMse) {
    EstimationConfig c;
    c.byz_count = 0;
    SeededRng rng(1);
    const auto r = simulate_estimation_breakdown(c, rng);
    EXPECT_EQ(r.clean_mse, r.attacked_mse);
    EXPECT_EQ(r.w_hat_clean, r.w_hat_attacked);
}

TEST(Estimation, NoiselessFitIsExact) {
    EstimationConfig c;
    c.noise_sigma = 0.0;
    SeededRng rng(2);
    const auto r = simulate_estimation_breakdown(c, rng);
    EXPECT_NEAR(r.w_hat_clean[0], 1.0, 1e-12);
    EXPECT_NEAR(r.w_hat_clean[1], 0.5, 1e-12);
    EXPECT_LE(r.clean_mse, 1e-24);
}

TEST(Estimation, BreakdownOverSeeds) {
    EstimationConfig c;
    c.outlier_magnitude = 50.0 * c.noise_sigma;
    for (std::uint64_t s = 0; s < 100; ++s) {
        SeededRng rng(s);
        const auto r = simulate_estimation_breakdown(c, rng);
        ASSERT_EQ(r.byzantine.size(), 2u);
        EXPECT_GE(r.attacked_mse, r.clean_mse) << "seed " << s;
        EXPECT_GE(r.attacked_mse, 10.0 * r.clean_mse) << "seed " << s;
    }
}

TEST(Estimation, Validation) {
    EstimationConfig c;
    c.byz_count = 8;
    SeededRng rng(3);
    EXPECT_THROW(simulate_estimation_breakdown(c, rng), std::invalid_argument);
    c = EstimationConfig{};
    c.w_star = ModelVector{1, 2, 3};
    EXPECT_THROW(simulate_estimation_breakdown(c, rng), DimensionError);
}
