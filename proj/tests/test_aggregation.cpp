#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "byzrl/aggregation.hpp"
#include "oracles.hpp"

using namespace byzrl;
using Vecs = std::vector<ModelVector>;

namespace {

Vecs random_vecs(SeededRng& rng, std::size_t n, std::size_t d, bool integers) {
    Vecs v;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> x(d);
        for (double& e : x) e = integers ? static_cast<double>(rng.below(4)) : rng.normal();
        v.emplace_back(std::move(x));
    }
    return v;
}

Vecs scalars(std::initializer_list<double> xs) {
    Vecs v;
    for (double x : xs) v.push_back(ModelVector{x});
    return v;
}

} // namespace

TEST(Mean, Examples) {
    EXPECT_EQ(agg_mean(Vecs{{1, 1}, {3, 3}}).aggregate, (ModelVector{2, 2}));
    EXPECT_EQ(agg_mean(Vecs{{4, -1}}).aggregate, (ModelVector{4, -1}));
    EXPECT_EQ(agg_mean(Vecs{{0, 0}, {0, 0}, {6, 3}}).aggregate, (ModelVector{2, 1}));
    EXPECT_THROW(agg_mean(Vecs{}), std::invalid_argument);
    EXPECT_THROW(agg_mean(Vecs{{1}, {1, 2}}), DimensionError);
}

TEST(CoordinateMedian, Examples) {
    EXPECT_EQ(agg_coordinate_median(Vecs{{1, 5}, {2, 4}, {9, 0}}).aggregate, (ModelVector{2, 4}));
    EXPECT_EQ(agg_coordinate_median(scalars({1, 2, 3, 4})).aggregate, (ModelVector{2.5}));
    SeededRng rng(1);
    const auto in = random_vecs(rng, 100, 3, false);
    EXPECT_EQ(agg_coordinate_median(in).aggregate, oracle::median(in));
}

TEST(TrimmedMean, Examples) {
    EXPECT_DOUBLE_EQ(agg_coordinate_trimmed_mean(scalars({1, 2, 3, 4, 100}), 1).aggregate[0], 3.0);
    SeededRng rng(2);
    const auto in = random_vecs(rng, 9, 4, false);
    EXPECT_EQ(agg_coordinate_trimmed_mean(in, 0).aggregate, agg_mean(in).aggregate);
    for (std::size_t b : {1, 2}) EXPECT_EQ(agg_coordinate_trimmed_mean(in, b).aggregate, oracle::trimmed(in, b));
    try {
        agg_coordinate_trimmed_mean(scalars({1, 2}), 1);
        FAIL();
    } catch (const WellPosednessError& e) {
        EXPECT_NE(std::string(e.what()).find("M>=2b+1"), std::string::npos);
    }
}

TEST(GeometricMedian, IdenticalInputs) {
    const Vecs in(5, ModelVector{1.5, -2});
    EXPECT_EQ(agg_geometric_median(in, 1e-3).aggregate, (ModelVector{1.5, -2}));
}

TEST(GeometricMedian, EquilateralTriangleCentroid) {
    const Vecs in{{0, 0}, {2, 0}, {1, std::sqrt(3.0)}};
    const auto y = agg_geometric_median(in, 1e-12).aggregate;
    EXPECT_NEAR(y[0], 1.0, 1e-6);
    EXPECT_NEAR(y[1], std::sqrt(3.0) / 3.0, 1e-6);
}

TEST(GeometricMedian, WithinGammaOfGridSearch) {
    SeededRng rng(3);
    const double gamma = 1e-3;
    for (int inst = 0; inst < 5; ++inst) {
        Vecs in;
        for (int i = 0; i < 5; ++i) in.push_back(ModelVector{rng.uniform(-1, 1), rng.uniform(-1, 1)});
        double best = INFINITY;
        for (int a = 0; a < 200; ++a)
            for (int c = 0; c < 200; ++c) {
                const ModelVector y{-1.0 + 2.0 * (a + 0.5) / 200.0, -1.0 + 2.0 * (c + 0.5) / 200.0};
                best = std::min(best, oracle::geomed_objective(in, y));
            }
        const auto got = agg_geometric_median(in, gamma).aggregate;
        EXPECT_LE(oracle::geomed_objective(in, got), (1.0 + gamma) * best) << "instance " << inst;
    }
}

TEST(GeometricMedian, ReportsNonConvergence) {
    const Vecs in{{0, 0}, {10, 0}, {0, 10}, {7, 7}};
    try {
        agg_geometric_median(in, 1e-14, 1);
        FAIL();
    } catch (const ConvergenceError& e) {
        EXPECT_GT(e.last_objective(), 0.0);
    }
}

TEST(Krum, Examples) {
    const auto out = krum_select(scalars({0, 1, 2, 10, 11}), 1);
    EXPECT_EQ(out.selected_index, 1u);
    EXPECT_EQ(out.aggregate, (ModelVector{1}));
    EXPECT_EQ(krum_select(Vecs(5, ModelVector{3, 3}), 1).selected_index, 0u);
    EXPECT_THROW(krum_select(scalars({0, 1, 2, 3}), 1), WellPosednessError);
}

TEST(Krum, MatchesBruteForceOnRandomM7) {
    SeededRng rng(4);
    for (int inst = 0; inst < 1000; ++inst) {
        const auto in = random_vecs(rng, 7, 1 + rng.below(3), inst % 2 == 0);
        ASSERT_EQ(*krum_select(in, 1).selected_index, oracle::krum_winner(in, oracle::iota(7), 1)) << inst;
    }
}

TEST(MultiKrum, Examples) {
    SeededRng rng(5);
    for (int inst = 0; inst < 100; ++inst) {
        const auto in = random_vecs(rng, 8, 2, inst % 3 == 0);
        EXPECT_EQ(multi_krum(in, 1, 1).aggregate, krum_select(in, 1).aggregate);
        EXPECT_EQ(multi_krum(in, 1, 2).aggregate, oracle::multi_krum(in, 1, 2));
    }
    EXPECT_EQ(multi_krum(Vecs(6, ModelVector{2, 1}), 1, 2).aggregate, (ModelVector{2, 1}));
    EXPECT_THROW(multi_krum(Vecs(5, ModelVector{1}), 1, 2), WellPosednessError);
}

TEST(Bulyan, Examples) {
    EXPECT_EQ(bulyan(Vecs(7, ModelVector{4, 4}), 1).aggregate, (ModelVector{4, 4}));
    SeededRng rng(6);
    for (int inst = 0; inst < 200; ++inst) {
        auto in = random_vecs(rng, 7, 3, inst % 2 == 0);
        EXPECT_EQ(bulyan(in, 1).aggregate, oracle::bulyan(in, 1)) << inst;
        const std::size_t bad = rng.below(7);
        in[bad] = ModelVector::filled(3, 1e6);
        const auto out = bulyan(in, 1);
        EXPECT_FALSE(std::binary_search(out.survivors.begin(), out.survivors.end(), bad)) << inst;
    }
}

TEST(Bulyan, WellPosedness) {
    const Vecs eighteen(18, ModelVector{1});
    const Vecs nineteen(19, ModelVector{1});
    EXPECT_THROW(bulyan(eighteen, 4), WellPosednessError);
    EXPECT_NO_THROW(bulyan(nineteen, 4));
    EXPECT_THROW(check_well_posed(Rule::bulyan, 18, 4), WellPosednessError);
}

TEST(Zeno, Examples) {
    const auto out = zeno_screen(Vecs{{0.1, 0}, {0, 0.1}, {5, 5}}, ModelVector{0, 0}, 1);
    EXPECT_DOUBLE_EQ(out.aggregate[0], 0.05);
    EXPECT_DOUBLE_EQ(out.aggregate[1], 0.05);
    SeededRng rng(7);
    const auto in = random_vecs(rng, 6, 3, false);
    EXPECT_EQ(zeno_screen(in, ModelVector{0, 0, 0}, 0).aggregate, agg_mean(in).aggregate);
    EXPECT_EQ(zeno_screen(Vecs(4, ModelVector{1, 2}), ModelVector{1, 2}, 2).aggregate, (ModelVector{1, 2}));
    EXPECT_THROW(zeno_screen(in, std::nullopt, 1), std::invalid_argument);
}

TEST(SignMajority, Examples) {
    EXPECT_EQ(sign_majority(Vecs{{1, -1}, {2, 3}, {-1, 0.5}}).aggregate, (ModelVector{1, 1}));
    EXPECT_EQ(sign_majority(Vecs{{1}, {-1}}).aggregate, (ModelVector{0}));
    SeededRng rng(8);
    for (int inst = 0; inst < 100; ++inst) {
        const auto in = random_vecs(rng, 1 + rng.below(8), 3, true);
        auto shifted = in;
        for (auto& v : shifted) v = subtract(v, ModelVector::filled(3, 1.5));
        EXPECT_EQ(sign_majority(shifted).aggregate, oracle::sign_majority(shifted));
    }
}

TEST(Properties, OracleEquivalenceSuite) {
    SeededRng rng(9);
    int cases = 0;
    for (int inst = 0; inst < 1200; ++inst) {
        const std::size_t n = 1 + rng.below(7);
        const std::size_t d = 1 + rng.below(3);
        const auto in = random_vecs(rng, n, d, inst % 2 == 0);
        const ModelVector zero = ModelVector::zeros(d);
        EXPECT_EQ(agg_mean(in).aggregate, oracle::mean(in));
        EXPECT_EQ(agg_coordinate_median(in).aggregate, oracle::median(in));
        EXPECT_EQ(sign_majority(in).aggregate, oracle::sign_majority(in));
        for (std::size_t b = 0; 2 * b + 1 <= n; ++b) EXPECT_EQ(agg_coordinate_trimmed_mean(in, b).aggregate, oracle::trimmed(in, b));
        for (std::size_t b = 0; 2 * b + 3 <= n; ++b) EXPECT_EQ(krum_select(in, b).aggregate, oracle::krum(in, b));
        for (std::size_t b = 0; 2 * b + 4 <= n; ++b)
            for (std::size_t m = 1; 2 * b + m + 2 <= n; ++m)
                EXPECT_EQ(multi_krum(in, b, m).aggregate, oracle::multi_krum(in, b, m));
        for (std::size_t b = 0; 4 * b + 3 <= n; ++b) EXPECT_EQ(bulyan(in, b).aggregate, oracle::bulyan(in, b));
        for (std::size_t b = 0; b + 1 <= n; ++b) EXPECT_EQ(zeno_screen(in, zero, b).aggregate, oracle::zeno(in, zero, b));
        ++cases;
    }
    EXPECT_GE(cases, 1000);
}

TEST(Properties, PermutationInvariance) {
    SeededRng rng(10);
    for (int inst = 0; inst < 300; ++inst) {
        const std::size_t n = 7;
        const auto in = random_vecs(rng, n, 2, inst % 2 == 0);
        auto perm = in;
        for (std::size_t i = n; i-- > 1;) std::swap(perm[i], perm[rng.below(i + 1)]);
        for (Rule r : kAllRules) {
            RuleConfig cfg{r, 1, 2, 1e-3, 10000, ModelVector{0.1, -0.2}};
            EXPECT_EQ(aggregate(in, cfg).aggregate, aggregate(perm, cfg).aggregate) << rule_name(r) << " " << inst;
        }
    }
}

TEST(Properties, ContainmentAndBreakdown) {
    SeededRng rng(11);
    for (int inst = 0; inst < 500; ++inst) {
        const std::size_t b = 1 + rng.below(2);
        const std::size_t n = 4 * b + 3 + rng.below(3);
        const std::size_t d = 1 + rng.below(3);
        auto in = random_vecs(rng, n, d, false);
        const auto bad = rng.choose(n, b);
        for (std::size_t i : bad) {
            std::vector<double> x(d);
            for (double& e : x) e = (rng.uniform01() < 0.5 ? -1e6 : 1e6) * (1.0 + rng.uniform01());
            in[i] = ModelVector(x);
        }
        auto honest = [&](std::size_t i) { return !std::binary_search(bad.begin(), bad.end(), i); };
        for (Rule r : {Rule::coordinate_median, Rule::trimmed_mean, Rule::bulyan}) {
            const auto out = aggregate(in, RuleConfig{r, b, 1, 1e-3, 10000, std::nullopt}).aggregate;
            for (std::size_t k = 0; k < d; ++k) {
                double lo = INFINITY, hi = -INFINITY;
                for (std::size_t i = 0; i < n; ++i)
                    if (honest(i)) {
                        lo = std::min(lo, in[i][k]);
                        hi = std::max(hi, in[i][k]);
                    }
                EXPECT_GE(out[k], lo - 1e-9) << rule_name(r);
                EXPECT_LE(out[k], hi + 1e-9) << rule_name(r);
            }
        }
        EXPECT_TRUE(honest(*krum_select(in, b).selected_index));
    }
}

TEST(Properties, WorkScaling) {
    SeededRng rng(12);
    auto work = [&](Rule r, std::size_t n) {
        const auto in = random_vecs(rng, n, 4, false);
        WorkCounter c;
        aggregate(in, RuleConfig{r, 1, 1, 1e-3, 10000, std::nullopt}, &c);
        return static_cast<double>(c.entry_ops);
    };
    for (Rule r : {Rule::mean, Rule::trimmed_mean, Rule::coordinate_median, Rule::sign_majority}) {
        const double ratio = work(r, 400) / work(r, 100);
        EXPECT_LT(ratio, 6.0) << rule_name(r);
        EXPECT_GT(ratio, 3.0) << rule_name(r);
    }
    for (Rule r : {Rule::krum, Rule::bulyan}) {
        const double ratio = work(r, 200) / work(r, 50);
        EXPECT_GT(ratio, 12.0) << rule_name(r);
    }
}

TEST(Dispatcher, NamesRoundTrip) {
    for (Rule r : kAllRules) EXPECT_EQ(parse_rule(rule_name(r)), r);
    EXPECT_FALSE(parse_rule("nope").has_value());
}
