#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "byzrl/distributed.hpp"
#include "byzrl/experiment.hpp"

using namespace byzrl;

namespace {

DistributedConfig quadratic_config(std::size_t d, std::size_t m) {
    DistributedConfig c;
    c.M = m;
    c.task.kind = TaskKind::quadratic;
    c.task.dim = d;
    std::vector<double> w(d);
    for (std::size_t k = 0; k < d; ++k) w[k] = 1.0 + static_cast<double>(k);
    c.task.w_star = ModelVector(w);
    c.samples_per_node = 50;
    c.holdout_size = 20;
    c.batch_size = 0;
    c.seed = 17;
    return c;
}

DistributedConfig fig4_config() {
    DistributedConfig c;
    c.M = 20;
    c.b = 4;
    c.byz_ids = {0, 1, 2, 3};
    c.task.kind = TaskKind::softmax_classification;
    c.task.dim = 50;
    c.task.class_count = 10;
    c.task.class_separation = 0.5;
    c.task.feature_scale = 0.165;
    c.samples_per_node = 200;
    c.holdout_size = 1000;
    c.batch_size = 32;
    c.iterations = 300;
    c.step.rho0 = 5.0;
    c.attack.kind = AttackKind::alternating_uniform;
    c.seed = 2024;
    return c;
}

} // namespace

TEST(DistributedSgd, FaultlessQuadraticConverges) {
    auto c = quadratic_config(10, 10);
    c.task.noise_sigma = 0.0;
    c.step.rho0 = 0.5;
    c.iterations = 500;
    const auto tr = run_distributed_sgd(c);
    ASSERT_EQ(tr.rows.size(), 500u);
    EXPECT_LE(*tr.rows.back().dist, 1e-6);
    for (std::size_t i = 0; i < tr.rows.size(); ++i) EXPECT_EQ(tr.rows[i].t, i + 1);
}

TEST(DistributedSgd, HijackIdentityEveryIteration) {
    auto c = quadratic_config(10, 10);
    c.byz_ids = {7};
    c.attack.kind = AttackKind::gradient_control;
    c.attack.target_model = ModelVector::filled(10, -3.0);
    c.step.rho0 = 0.1;
    c.iterations = 400;
    double worst = 0.0;
    const auto tr = run_distributed_sgd(c, [&](const RoundView& v) {
        const auto want = subtract(v.model, c.attack.target_model);
        for (std::size_t k = 0; k < 10; ++k) worst = std::max(worst, std::abs(v.outcome.aggregate[k] - want[k]));
    });
    EXPECT_LE(worst, 1e-12);
    EXPECT_LE(std::sqrt(squared_distance(tr.final_model, c.attack.target_model)), 1e-6);
}

TEST(DistributedSgd, TrimmedMeanWithinTenfoldOfFaultlessMean) {
    auto c = quadratic_config(10, 20);
    c.b = 4;
    c.step.rho0 = 0.1;
    c.iterations = 300;
    c.rule.rule = Rule::mean;
    const double clean = *run_distributed_sgd(c).rows.back().dist;
    c.byz_ids = {0, 1, 2, 3};
    c.rule.rule = Rule::trimmed_mean;
    c.attack.kind = AttackKind::alternating_uniform;
    const double attacked = *run_distributed_sgd(c).rows.back().dist;
    EXPECT_LE(attacked, 10.0 * clean) << "clean " << clean << " attacked " << attacked;
}

TEST(DistributedSgd, AggregateContainedInHonestRange) {
    for (Rule r : {Rule::coordinate_median, Rule::trimmed_mean}) {
        auto c = quadratic_config(4, 9);
        c.b = 2;
        c.byz_ids = {1, 5};
        c.rule.rule = r;
        c.batch_size = 8;
        c.attack.kind = AttackKind::coordinate_uniform;
        c.attack.coordinate_range = {-100.0, 100.0};
        c.iterations = 100;
        bool ok = true;
        run_distributed_sgd(c, [&](const RoundView& v) {
            for (std::size_t k = 0; k < 4; ++k) {
                double lo = INFINITY, hi = -INFINITY;
                for (const auto& h : v.honest_messages) {
                    lo = std::min(lo, h[k]);
                    hi = std::max(hi, h[k]);
                }
                ok = ok && v.outcome.aggregate[k] >= lo && v.outcome.aggregate[k] <= hi;
            }
        });
        EXPECT_TRUE(ok) << rule_name(r);
    }
}

TEST(DistributedSgd, WellPosednessCheckedBeforeStart) {
    auto c = quadratic_config(3, 18);
    c.b = 4;
    c.rule.rule = Rule::bulyan;
    bool called = false;
    EXPECT_THROW(run_distributed_sgd(c, [&](const RoundView&) { called = true; }), WellPosednessError);
    EXPECT_FALSE(called);
    c.M = 19;
    c.iterations = 3;
    EXPECT_NO_THROW(run_distributed_sgd(c));
}

TEST(DistributedSgd, DivergenceCarriesPrefix) {
    auto c = quadratic_config(3, 4);
    c.task.noise_sigma = 0.0;
    c.step.rho0 = 1e150;
    c.iterations = 50;
    try {
        run_distributed_sgd(c);
        FAIL() << "expected divergence";
    } catch (const DivergenceError& e) {
        EXPECT_LT(e.prefix().rows.size(), 50u);
        EXPECT_NE(std::string(e.what()).find("diverged"), std::string::npos);
    }
}

TEST(DistributedSgd, WarnsWhenByzantineExceedBound) {
    auto c = quadratic_config(3, 9);
    c.b = 1;
    c.byz_ids = {0, 1, 2};
    c.rule.rule = Rule::coordinate_median;
    c.attack.kind = AttackKind::coordinate_uniform;
    c.iterations = 5;
    const auto tr = run_distributed_sgd(c);
    ASSERT_FALSE(tr.warnings.empty());
    EXPECT_NE(tr.warnings.front().find("WARNING"), std::string::npos);
    c.byz_ids = {0, 9};
    EXPECT_THROW(run_distributed_sgd(c), std::invalid_argument);
}

TEST(DistributedSgd, Deterministic) {
    auto c = quadratic_config(5, 6);
    c.batch_size = 4;
    c.byz_ids = {2};
    c.b = 1;
    c.rule.rule = Rule::krum;
    c.attack.kind = AttackKind::alternating_uniform;
    c.iterations = 60;
    const auto a = run_distributed_sgd(c);
    const auto b = run_distributed_sgd(c);
    EXPECT_EQ(a.final_model, b.final_model);
    for (std::size_t i = 0; i < a.rows.size(); ++i) EXPECT_EQ(a.rows[i].risk, b.rows[i].risk);
}

TEST(SignSgd, FaultlessReachesSignFloor) {
    auto c = quadratic_config(6, 5);
    c.task.noise_sigma = 0.0;
    c.step.rho0 = 0.01;
    c.iterations = 2000;
    const auto tr = run_signsgd(c);
    ASSERT_EQ(tr.rows.size(), 2000u);
    EXPECT_LE(*tr.rows.back().dist, 0.01 * std::sqrt(6.0));
}

TEST(SignSgd, HonestMajorityWinsAgreedCoordinates) {
    auto c = quadratic_config(4, 5);
    c.b = 2;
    c.byz_ids = {0, 3};
    c.batch_size = 5;
    c.iterations = 50;
    c.attack.kind = AttackKind::custom;
    c.attack.custom = [](const AttackContext& ctx, std::size_t) { return scale(ctx.honest_messages.front(), -1.0); };
    bool ok = true;
    run_signsgd(c, [&](const RoundView& v) {
        for (std::size_t k = 0; k < 4; ++k) {
            const double s = v.honest_messages.front()[k];
            bool agree = true;
            for (const auto& h : v.honest_messages) agree = agree && h[k] == s;
            if (agree) ok = ok && v.outcome.aggregate[k] == s;
        }
    });
    EXPECT_TRUE(ok);
    c.M = 4;
    c.byz_ids = {0};
    EXPECT_THROW(run_signsgd(c), WellPosednessError);
}

TEST(CompareRules, ScreeningBeatsVanillaUnderAttack) {
    const std::vector<Rule> rules{Rule::mean, Rule::coordinate_median, Rule::trimmed_mean, Rule::krum, Rule::bulyan, Rule::zeno};
    const int trials = 3;
    std::vector<double> attacked_acc(rules.size(), 0.0);
    for (int k = 0; k < trials; ++k) {
        auto c = fig4_config();
        c.seed = trial_seed(c.seed, static_cast<std::size_t>(k));
        const auto runs = compare_rules(c, rules);
        ASSERT_EQ(runs.size(), 2 * rules.size());
        for (std::size_t i = 0; i < rules.size(); ++i) {
            EXPECT_EQ(runs[2 * i + 1].rule, rules[i]);
            attacked_acc[i] += *runs[2 * i + 1].trace.rows.back().acc / trials;
        }
    }
    EXPECT_LE(attacked_acc[0], 0.2);
    for (std::size_t i = 1; i < rules.size(); ++i) EXPECT_GE(attacked_acc[i], attacked_acc[0]) << rule_name(rules[i]);
}

TEST(CompareRules, DeterministicAndValidated) {
    auto c = quadratic_config(3, 7);
    c.b = 1;
    c.byz_ids = {4};
    c.attack.kind = AttackKind::coordinate_uniform;
    c.iterations = 20;
    const auto a = compare_rules(c, {Rule::mean, Rule::coordinate_median});
    const auto b = compare_rules(c, {Rule::mean, Rule::coordinate_median});
    ASSERT_EQ(a.size(), 4u);
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].rule, b[i].rule);
        EXPECT_EQ(a[i].attacked, b[i].attacked);
        EXPECT_EQ(a[i].trace.final_model, b[i].trace.final_model);
    }
    EXPECT_FALSE(a[0].attacked);
    EXPECT_TRUE(a[1].attacked);
    EXPECT_THROW(compare_rules(c, {}), std::invalid_argument);
}

TEST(StepSchedule, Values) {
    StepSchedule s;
    s.kind = StepSchedule::Kind::decaying;
    s.rho0 = 1.0;
    s.tau = 10.0;
    EXPECT_DOUBLE_EQ(s.at(0), 1.0);
    EXPECT_DOUBLE_EQ(s.at(10), 0.5);
    s.rho0 = 0.0;
    EXPECT_THROW(s.validate(), std::invalid_argument);
}
