#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "byzrl/aggregation.hpp"
#include "byzrl/decentralized.hpp"
#include "byzrl/distributed.hpp"
#include "byzrl/experiment.hpp"
#include "byzrl/network.hpp"

namespace byzrl {

struct CheckResult {
    std::string name;
    bool pass = false;
    std::string detail;
};

namespace detail {

inline std::vector<ModelVector> random_inputs(SeededRng& rng, std::size_t n, std::size_t d, double spread) {
    std::vector<ModelVector> v;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> x(d);
        for (double& e : x) e = spread * rng.normal();
        v.emplace_back(std::move(x));
    }
    return v;
}

inline CheckResult verify_containment(std::uint64_t seed) {
    SeededRng rng(seed);
    for (int inst = 0; inst < 300; ++inst) {
        const std::size_t b = 1 + rng.below(3);
        const std::size_t n = 2 * b + 1 + rng.below(6);
        const std::size_t d = 1 + rng.below(4);
        auto in = random_inputs(rng, n, d, 1.0);
        const auto bad = rng.choose(n, b);
        for (std::size_t i : bad) in[i] = ModelVector::filled(d, 1e6 * (rng.uniform01() - 0.5));
        for (Rule r : {Rule::coordinate_median, Rule::trimmed_mean}) {
            RuleConfig cfg{r, b, 1, 1e-3, 10000, std::nullopt};
            const auto out = aggregate(in, cfg);
            for (std::size_t k = 0; k < d; ++k) {
                double lo = INFINITY;
                double hi = -INFINITY;
                for (std::size_t i = 0; i < n; ++i) {
                    if (std::binary_search(bad.begin(), bad.end(), i)) continue;
                    lo = std::min(lo, in[i][k]);
                    hi = std::max(hi, in[i][k]);
                }
                if (out.aggregate[k] < lo || out.aggregate[k] > hi)
                    return {"aggregation containment", false,
                            std::string(rule_name(r)) + " left the honest range at instance " + std::to_string(inst)};
            }
        }
    }
    return {"aggregation containment", true, "300 instances"};
}

inline CheckResult verify_permutation(std::uint64_t seed) {
    SeededRng rng(seed);
    for (int inst = 0; inst < 200; ++inst) {
        const std::size_t b = rng.below(2);
        const std::size_t n = 4 * b + 3 + rng.below(3);
        const std::size_t d = 1 + rng.below(3);
        auto in = random_inputs(rng, n, d, 2.0);
        auto perm = in;
        for (std::size_t i = n; i-- > 1;) std::swap(perm[i], perm[rng.below(i + 1)]);
        for (Rule r : {Rule::mean, Rule::coordinate_median, Rule::trimmed_mean, Rule::krum, Rule::multi_krum,
                       Rule::bulyan, Rule::sign_majority}) {
            RuleConfig cfg{r, b, 1, 1e-3, 10000, std::nullopt};
            if (!(aggregate(in, cfg).aggregate == aggregate(perm, cfg).aggregate))
                return {"permutation invariance", false,
                        std::string(rule_name(r)) + " changed under permutation at instance " + std::to_string(inst)};
        }
    }
    return {"permutation invariance", true, "200 instances"};
}

inline CheckResult verify_weights(std::uint64_t seed) {
    SeededRng rng(seed);
    for (int g = 0; g < 100; ++g) {
        const std::size_t m = 2 + rng.below(20);
        const auto graph = random_graph(m, 0.2 + 0.8 * rng.uniform01(), rng);
        try {
            validate_weights(graph, metropolis_weights(graph));
        } catch (const std::exception& e) {
            return {"metropolis weights", false, e.what()};
        }
    }
    return {"metropolis weights", true, "100 random graphs"};
}

inline CheckResult verify_trimmed_safety(std::uint64_t seed) {
    SeededRng rng(seed);
    for (int run = 0; run < 30; ++run) {
        const std::size_t m = 10 + rng.below(6);
        const auto g = random_graph(m, 1.0, rng);
        const std::size_t b = 1;
        const auto byz = rng.choose(m, b);
        std::vector<ModelVector> init;
        for (std::size_t j = 0; j < m; ++j) init.push_back(ModelVector{rng.uniform(-1.0, 1.0)});
        AttackSpec atk;
        atk.kind = AttackKind::coordinate_uniform;
        atk.coordinate_range = {-50.0, 50.0};
        bool ok = true;
        const auto tr = run_trimmed_consensus(g, b, init, byz, atk, 30, rng.next_u64(), [&](const DecRoundView& v) {
            double lo = INFINITY;
            double hi = -INFINITY;
            for (std::size_t j = 0; j < m; ++j) {
                if (v.is_byzantine[j]) continue;
                lo = std::min(lo, v.broadcast[j][0]);
                hi = std::max(hi, v.broadcast[j][0]);
            }
            for (std::size_t j = 0; j < m; ++j)
                if (!v.is_byzantine[j] && (v.next[j][0] < lo || v.next[j][0] > hi)) ok = false;
        });
        if (!ok) return {"trimmed consensus safety", false, "honest value left the honest range in run " + std::to_string(run)};
    }
    return {"trimmed consensus safety", true, "30 runs"};
}

inline CheckResult verify_hijack(std::uint64_t seed) {
    DistributedConfig cfg;
    cfg.M = 6;
    cfg.byz_ids = {2};
    cfg.b = 1;
    cfg.task.kind = TaskKind::quadratic;
    cfg.task.dim = 4;
    cfg.task.w_star = ModelVector{1, 2, 3, 4};
    cfg.attack.kind = AttackKind::gradient_control;
    cfg.attack.target_model = ModelVector{-5, 0, 5, 9};
    cfg.iterations = 60;
    cfg.step.rho0 = 0.3;
    cfg.seed = seed;
    cfg.holdout_size = 10;
    double worst = 0.0;
    run_distributed_sgd(cfg, [&](const RoundView& v) {
        const ModelVector want = subtract(v.model, cfg.attack.target_model);
        for (std::size_t k = 0; k < want.size(); ++k) worst = std::max(worst, std::abs(v.outcome.aggregate[k] - want[k]));
    });
    return {"hijack identity", worst <= 1e-12, "max deviation " + format_double(worst)};
}

inline CheckResult verify_determinism(std::uint64_t seed) {
    const std::string text = "[experiment]\nscenario = detection\nseed = " + std::to_string(seed) +
                             "\nrepeat_count = 2\n[detection]\nM = 9\ntrials = 500\nalphas = 0,0.25,0.5\n";
    const auto cfg = parse_config_text(text);
    const auto a = run_scenario(cfg);
    const auto b = run_scenario(cfg);
    bool same = a.files.size() == b.files.size();
    for (std::size_t i = 0; same && i < a.files.size(); ++i) same = a.files[i].content == b.files[i].content;
    const bool round_trip = serialize_config(parse_config_text(serialize_config(cfg))) == serialize_config(cfg);
    return {"determinism and config round trip", same && round_trip,
            std::string(same ? "identical bytes" : "outputs differ") + (round_trip ? "" : ", round trip failed")};
}

} // namespace detail

/// Quick invariant suite behind the `verify` subcommand.
inline std::vector<CheckResult> run_verify_suite(std::uint64_t seed = 1) {
    std::vector<std::function<CheckResult()>> checks = {
        [&] { return detail::verify_containment(seed); },   [&] { return detail::verify_permutation(seed + 1); },
        [&] { return detail::verify_weights(seed + 2); },   [&] { return detail::verify_trimmed_safety(seed + 3); },
        [&] { return detail::verify_hijack(seed + 4); },    [&] { return detail::verify_determinism(seed + 5); },
    };
    std::vector<CheckResult> out;
    for (auto& c : checks) {
        try {
            out.push_back(c());
        } catch (const std::exception& e) {
            out.push_back({"(check raised)", false, e.what()});
        }
    }
    return out;
}

} // namespace byzrl
