#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "byzrl/aggregation.hpp"
#include "byzrl/attacks.hpp"
#include "byzrl/numeric.hpp"
#include "byzrl/tasks.hpp"

namespace byzrl {

/// rho(t) = rho0 (constant) or rho0 / (1 + t / tau) (decaying); t counts from 0.
struct StepSchedule {
    enum class Kind { constant, decaying };
    Kind kind = Kind::constant;
    double rho0 = 0.1;
    double tau = 100.0;

    double at(std::size_t t) const {
        if (kind == Kind::constant) return rho0;
        return rho0 / (1.0 + static_cast<double>(t) / tau);
    }
    void validate() const {
        if (!(rho0 > 0.0) || !std::isfinite(rho0)) throw std::invalid_argument("step size rho0 must be positive");
        if (kind == Kind::decaying && !(tau > 0.0)) throw std::invalid_argument("step size tau must be positive");
    }
};

/// Data shared by every run built from the same (task, M, seed): node shards, holdout and server oracle set.
struct Problem {
    TaskSpec spec;
    Dataset train;
    Dataset holdout;
    Dataset oracle;
    std::optional<ModelVector> reference;
};

/**
 * Streams: derive(seed, 0) draws class means and training shards,
 * derive(seed, 1) the holdout, derive(seed, 2) the server's oracle set.
 */
inline Problem build_problem(const TaskSpec& task, std::size_t nodes, std::size_t per_node, std::size_t holdout_size,
                             std::size_t oracle_size, std::uint64_t seed) {
    Problem p;
    SeededRng data_rng = SeededRng::derive(seed, 0);
    p.spec = resolve_class_means(task, data_rng);
    p.train = generate_data(p.spec, nodes, per_node, data_rng);
    SeededRng hold_rng = SeededRng::derive(seed, 1);
    if (holdout_size > 0) p.holdout = generate_data(p.spec, 1, holdout_size, hold_rng);
    SeededRng oracle_rng = SeededRng::derive(seed, 2);
    if (oracle_size > 0) p.oracle = generate_data(p.spec, 1, oracle_size, oracle_rng);
    p.reference = p.spec.w_star;
    return p;
}

struct DistributedConfig {
    std::size_t M = 10;
    std::size_t b = 0;
    std::vector<std::size_t> byz_ids;
    /// rule.b is replaced by `b` at run time.
    RuleConfig rule;
    AttackSpec attack;
    TaskSpec task;
    StepSchedule step;
    /// Minibatch size drawn with replacement from the node's shard; 0 means the full shard.
    std::size_t batch_size = 32;
    std::size_t iterations = 100;
    std::uint64_t seed = 0;
    std::size_t samples_per_node = 200;
    std::size_t holdout_size = 1000;
    /// Size of the server's clean sample set for Zeno scoring.
    std::size_t oracle_size = 200;
    std::optional<ModelVector> initial_model;
};

struct TraceRow {
    std::size_t t = 0;
    double risk = 0.0;
    std::optional<double> dist;
    std::optional<double> acc;
    double agg_norm = 0.0;
    std::size_t survivors = 0;
};

struct MetricsTrace {
    std::vector<TraceRow> rows;
    std::vector<std::string> warnings;
    ModelVector final_model;
};

/// Raised when the global model stops being finite; carries the rows recorded so far.
class DivergenceError : public std::runtime_error {
public:
    DivergenceError(const std::string& what, MetricsTrace prefix)
        : std::runtime_error(what), prefix_(std::move(prefix)) {}
    const MetricsTrace& prefix() const noexcept { return prefix_; }

private:
    MetricsTrace prefix_;
};

/// Everything the server sees in one round; handed to the observer before the update.
struct RoundView {
    std::size_t t = 0;
    const ModelVector& model;
    std::span<const ModelVector> messages;
    std::span<const ModelVector> honest_messages;
    const std::vector<bool>& is_byzantine;
    const AggregationOutcome& outcome;
};

using RoundObserver = std::function<void(const RoundView&)>;

namespace detail {

inline std::vector<bool> byzantine_mask(std::size_t m, const std::vector<std::size_t>& ids) {
    std::vector<bool> mask(m, false);
    for (std::size_t id : ids) {
        if (id >= m) throw std::invalid_argument("Byzantine id " + std::to_string(id) + " is not below M=" + std::to_string(m));
        if (mask[id]) throw std::invalid_argument("Byzantine id " + std::to_string(id) + " is listed twice");
        mask[id] = true;
    }
    return mask;
}

inline std::vector<std::size_t> draw_batch(const Dataset& data, std::size_t node, std::size_t batch, SeededRng& rng) {
    const IndexRange r = data.partition[node];
    const std::size_t n = r.end - r.begin;
    if (batch == 0) return data.node_indices(node);
    std::vector<std::size_t> idx(batch);
    for (auto& i : idx) i = r.begin + rng.below(n);
    return idx;
}

inline std::vector<std::size_t> draw_pool_batch(const Dataset& data, std::size_t batch, SeededRng& rng) {
    if (batch == 0 || batch >= data.size()) return data.all_indices();
    std::vector<std::size_t> idx(batch);
    for (auto& i : idx) i = rng.below(data.size());
    return idx;
}

inline std::size_t survivor_count(const AggregationOutcome& out, std::size_t m) {
    if (!out.survivors.empty()) return out.survivors.size();
    if (!out.coordinate_survivors.empty()) return out.coordinate_survivors.front().size();
    return m;
}

inline TraceRow make_row(std::size_t t, const Problem& p, const ModelVector& w, const ModelVector& agg,
                         std::size_t survivors) {
    TraceRow row;
    row.t = t;
    const Metrics met = evaluate(p.spec, w, p.holdout, p.reference);
    row.risk = met.risk;
    row.dist = met.distance;
    row.acc = met.accuracy;
    row.agg_norm = l2_norm(agg);
    row.survivors = survivors;
    return row;
}

inline void validate_distributed(const DistributedConfig& cfg, std::vector<std::string>& warnings) {
    if (cfg.M == 0) throw std::invalid_argument("M must be positive");
    if (cfg.iterations == 0) throw std::invalid_argument("iterations must be positive");
    if (cfg.samples_per_node == 0) throw std::invalid_argument("samples_per_node must be positive");
    cfg.step.validate();
    byzantine_mask(cfg.M, cfg.byz_ids);
    if (cfg.byz_ids.size() > cfg.b)
        warnings.push_back("WARNING: " + std::to_string(cfg.byz_ids.size()) + " Byzantine nodes exceed the assumed bound b=" +
                           std::to_string(cfg.b) + "; screening guarantees do not apply");
    if (cfg.attack.kind != AttackKind::none && cfg.byz_ids.empty())
        warnings.push_back("attack configured but no Byzantine ids are set");
    validate_attack(cfg.attack, cfg.task.dim);
    if (cfg.initial_model && cfg.initial_model->size() != cfg.task.dim)
        throw DimensionError("initial model dimension does not match the task");
}

} // namespace detail

/**
 * Synchronous master-worker SGD. Each round the server broadcasts w,
 * honest nodes return minibatch gradients from their shard, Byzantine
 * nodes return attack messages computed with full knowledge of the honest
 * ones, and the server applies w <- w - rho(t) * aggregate(messages).
 * Row t (1-based) holds the metrics after the t-th update.
 *
 * When the attack kind is none, nodes in byz_ids behave honestly.
 */
inline MetricsTrace run_distributed_sgd(const DistributedConfig& cfg, const Problem& problem,
                                        const RoundObserver& observer = {}) {
    MetricsTrace trace;
    detail::validate_distributed(cfg, trace.warnings);
    RuleConfig rule = cfg.rule;
    rule.b = cfg.b;
    check_well_posed(rule.rule, cfg.M, rule.b, rule.m);
    if (problem.train.partition.size() != cfg.M) throw std::invalid_argument("problem shard count differs from M");
    if (rule.rule == Rule::zeno && problem.oracle.size() == 0)
        throw std::invalid_argument("zeno screening requires a server oracle set (oracle_size > 0)");

    const auto mask = detail::byzantine_mask(cfg.M, cfg.byz_ids);
    const bool attacking = cfg.attack.kind != AttackKind::none;
    SeededRng batch_rng = SeededRng::derive(cfg.seed, 3);
    auto attack_rngs = attacker_streams(cfg.seed, cfg.M);
    SeededRng oracle_rng = SeededRng::derive(cfg.seed, 5);

    ModelVector w = cfg.initial_model ? *cfg.initial_model : ModelVector::zeros(cfg.task.dim);
    std::vector<ModelVector> messages(cfg.M);
    std::vector<ModelVector> honest;
    for (std::size_t t = 1; t <= cfg.iterations; ++t) {
        honest.clear();
        for (std::size_t j = 0; j < cfg.M; ++j) {
            if (attacking && mask[j]) continue;
            const auto idx = detail::draw_batch(problem.train, j, cfg.batch_size, batch_rng);
            messages[j] = loss_and_grad(problem.spec, problem.train, w, idx).grad;
            honest.push_back(messages[j]);
        }
        if (attacking) {
            std::size_t rank = 0;
            for (std::size_t j = 0; j < cfg.M; ++j) {
                if (!mask[j]) continue;
                const AttackContext ctx{t, honest, w, cfg.M, attack_rngs[j]};
                messages[j] = generate_attack(cfg.attack, ctx, rank++);
                if (messages[j].size() != w.size()) throw DimensionError("attack message dimension mismatch");
            }
        }
        if (rule.rule == Rule::zeno) {
            const auto idx = detail::draw_pool_batch(problem.oracle, cfg.batch_size, oracle_rng);
            rule.oracle_gradient = loss_and_grad(problem.spec, problem.oracle, w, idx).grad;
        }
        const AggregationOutcome out = aggregate(messages, rule);
        if (observer) observer(RoundView{t, w, messages, honest, mask, out});
        try {
            w = axpy(w, -cfg.step.at(t - 1), out.aggregate);
            trace.rows.push_back(detail::make_row(t, problem, w, out.aggregate, detail::survivor_count(out, cfg.M)));
        } catch (const NumericError& e) {
            throw DivergenceError("model diverged at iteration " + std::to_string(t) + ": " + e.what(), trace);
        }
    }
    trace.final_model = w;
    return trace;
}

inline Problem build_problem(const DistributedConfig& cfg) {
    return build_problem(cfg.task, cfg.M, cfg.samples_per_node, cfg.holdout_size,
                         cfg.rule.rule == Rule::zeno ? cfg.oracle_size : 0, cfg.seed);
}

inline MetricsTrace run_distributed_sgd(const DistributedConfig& cfg, const RoundObserver& observer = {}) {
    return run_distributed_sgd(cfg, build_problem(cfg), observer);
}

/**
 * signSGD with majority vote: honest nodes send sign(g_j), the server
 * steps along sign_majority(messages). Byzantine messages enter the vote
 * through the signs of their entries.
 */
inline MetricsTrace run_signsgd(const DistributedConfig& cfg, const Problem& problem,
                                const RoundObserver& observer = {}) {
    MetricsTrace trace;
    detail::validate_distributed(cfg, trace.warnings);
    check_well_posed(Rule::sign_majority, cfg.M, cfg.b);
    if (problem.train.partition.size() != cfg.M) throw std::invalid_argument("problem shard count differs from M");
    const auto mask = detail::byzantine_mask(cfg.M, cfg.byz_ids);
    const bool attacking = cfg.attack.kind != AttackKind::none;
    SeededRng batch_rng = SeededRng::derive(cfg.seed, 3);
    auto attack_rngs = attacker_streams(cfg.seed, cfg.M);

    ModelVector w = cfg.initial_model ? *cfg.initial_model : ModelVector::zeros(cfg.task.dim);
    std::vector<ModelVector> messages(cfg.M);
    std::vector<ModelVector> honest;
    for (std::size_t t = 1; t <= cfg.iterations; ++t) {
        honest.clear();
        for (std::size_t j = 0; j < cfg.M; ++j) {
            if (attacking && mask[j]) continue;
            const auto idx = detail::draw_batch(problem.train, j, cfg.batch_size, batch_rng);
            const ModelVector g = loss_and_grad(problem.spec, problem.train, w, idx).grad;
            std::vector<double> s(g.size());
            for (std::size_t k = 0; k < g.size(); ++k) s[k] = g[k] > 0 ? 1.0 : (g[k] < 0 ? -1.0 : 0.0);
            messages[j] = ModelVector(std::move(s));
            honest.push_back(messages[j]);
        }
        if (attacking) {
            std::size_t rank = 0;
            for (std::size_t j = 0; j < cfg.M; ++j) {
                if (!mask[j]) continue;
                const AttackContext ctx{t, honest, w, cfg.M, attack_rngs[j]};
                messages[j] = generate_attack(cfg.attack, ctx, rank++);
            }
        }
        const AggregationOutcome out = sign_majority(messages);
        if (observer) observer(RoundView{t, w, messages, honest, mask, out});
        try {
            w = axpy(w, -cfg.step.at(t - 1), out.aggregate);
            trace.rows.push_back(detail::make_row(t, problem, w, out.aggregate, cfg.M));
        } catch (const NumericError& e) {
            throw DivergenceError("model diverged at iteration " + std::to_string(t) + ": " + e.what(), trace);
        }
    }
    trace.final_model = w;
    return trace;
}

inline MetricsTrace run_signsgd(const DistributedConfig& cfg, const RoundObserver& observer = {}) {
    return run_signsgd(cfg, build_problem(cfg), observer);
}

struct RuleRun {
    Rule rule = Rule::mean;
    bool attacked = false;
    MetricsTrace trace;
};

/**
 * Runs every rule twice on the same data and seed: faultless (attack
 * disabled, all nodes honest) and attacked (cfg_base.attack on byz_ids).
 */
inline std::vector<RuleRun> compare_rules(const DistributedConfig& cfg_base, const std::vector<Rule>& rules) {
    if (rules.empty()) throw std::invalid_argument("compare_rules requires at least one rule");
    DistributedConfig probe = cfg_base;
    probe.rule.rule = Rule::zeno;
    const Problem problem = build_problem(probe);
    std::vector<RuleRun> runs;
    for (Rule r : rules) {
        for (bool attacked : {false, true}) {
            DistributedConfig cfg = cfg_base;
            cfg.rule.rule = r;
            if (!attacked) cfg.attack = AttackSpec{};
            runs.push_back({r, attacked, run_distributed_sgd(cfg, problem)});
        }
    }
    return runs;
}

} // namespace byzrl
