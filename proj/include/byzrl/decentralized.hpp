#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "byzrl/aggregation.hpp"
#include "byzrl/attacks.hpp"
#include "byzrl/distributed.hpp"
#include "byzrl/network.hpp"
#include "byzrl/numeric.hpp"
#include "byzrl/tasks.hpp"

namespace byzrl {

// ---------------------------------------------------------------------------
// Consensus

struct ConsensusTrace {
    /// states[t][j], t = 0..T (t = 0 is the initial state).
    std::vector<std::vector<ModelVector>> states;
    /// max_j |w_j - average of w^0| over honest nodes, per t.
    std::vector<double> disagreement;
};

namespace detail {

inline ModelVector weighted_sum(const WeightMatrix& w, std::size_t j, const std::vector<ModelVector>& x) {
    const std::size_t d = x.front().size();
    std::vector<double> acc(d, 0.0);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double a = w(j, i);
        if (a == 0.0) continue;
        for (std::size_t k = 0; k < d; ++k) acc[k] += a * x[i][k];
    }
    return ModelVector(std::move(acc));
}

inline double max_distance(const std::vector<ModelVector>& x, const std::vector<bool>& skip, const ModelVector& target) {
    double worst = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j)
        if (!skip[j]) worst = std::max(worst, std::sqrt(squared_distance(x[j], target)));
    return worst;
}

inline ModelVector plain_average(const std::vector<ModelVector>& x, const std::vector<bool>& skip) {
    std::vector<double> acc(x.front().size(), 0.0);
    std::size_t n = 0;
    for (std::size_t j = 0; j < x.size(); ++j) {
        if (skip[j]) continue;
        ++n;
        for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += x[j][k];
    }
    for (double& v : acc) v /= static_cast<double>(n);
    return ModelVector(std::move(acc));
}

inline void check_initial(const NetworkGraph& g, const std::vector<ModelVector>& initial) {
    if (initial.size() != g.size()) throw DimensionError("one initial value per node is required");
    if (initial.empty()) throw std::invalid_argument("consensus requires at least one node");
    for (const auto& v : initial)
        if (v.size() != initial.front().size()) throw DimensionError("initial values have mismatched dimensions");
}

} // namespace detail

/// w_j^{t+1} = sum_i alpha_ji w_i^t with a validated doubly stochastic W.
inline ConsensusTrace run_average_consensus(const NetworkGraph& g, const WeightMatrix& w,
                                            const std::vector<ModelVector>& initial, std::size_t iterations) {
    detail::check_initial(g, initial);
    validate_weights(g, w);
    const std::vector<bool> none(g.size(), false);
    const ModelVector avg = detail::plain_average(initial, none);
    ConsensusTrace tr;
    tr.states.push_back(initial);
    tr.disagreement.push_back(detail::max_distance(initial, none, avg));
    for (std::size_t t = 0; t < iterations; ++t) {
        const auto& x = tr.states.back();
        std::vector<ModelVector> next;
        next.reserve(x.size());
        for (std::size_t j = 0; j < x.size(); ++j) next.push_back(detail::weighted_sum(w, j, x));
        tr.disagreement.push_back(detail::max_distance(next, none, avg));
        tr.states.push_back(std::move(next));
    }
    return tr;
}

struct LazyConsensusTrace {
    std::vector<std::vector<ModelVector>> states;
    /// max over honest j of |w_j - w'| where w' is the first lazy constant.
    std::vector<double> distance_to_target;
    /// max over honest j of |w_j - honest average|.
    std::vector<double> honest_disagreement;
};

/**
 * Weighted-average consensus in which each node of `lazy_ids` keeps
 * broadcasting constants[rank % constants.size()] and never updates.
 */
inline LazyConsensusTrace run_lazy_attack_consensus(const NetworkGraph& g, const WeightMatrix& w,
                                                    const std::vector<ModelVector>& initial,
                                                    const std::vector<std::size_t>& lazy_ids,
                                                    const std::vector<ModelVector>& constants, std::size_t iterations) {
    detail::check_initial(g, initial);
    validate_weights(g, w);
    if (lazy_ids.empty()) throw std::invalid_argument("lazy attack requires at least one Byzantine node");
    if (constants.empty()) throw std::invalid_argument("lazy attack requires at least one constant");
    for (const auto& c : constants)
        if (c.size() != initial.front().size()) throw DimensionError("lazy constant dimension mismatch");
    const auto lazy = detail::byzantine_mask(g.size(), lazy_ids);
    LazyConsensusTrace tr;
    std::vector<ModelVector> x = initial;
    std::size_t rank = 0;
    for (std::size_t j = 0; j < x.size(); ++j)
        if (lazy[j]) x[j] = constants[rank++ % constants.size()];
    auto record = [&](const std::vector<ModelVector>& s) {
        tr.distance_to_target.push_back(detail::max_distance(s, lazy, constants.front()));
        tr.honest_disagreement.push_back(detail::max_distance(s, lazy, detail::plain_average(s, lazy)));
        tr.states.push_back(s);
    };
    record(x);
    for (std::size_t t = 0; t < iterations; ++t) {
        std::vector<ModelVector> next = x;
        for (std::size_t j = 0; j < x.size(); ++j)
            if (!lazy[j]) next[j] = detail::weighted_sum(w, j, x);
        x = std::move(next);
        record(x);
    }
    return tr;
}

/// Values kept by trimming b from each tail, in ascending order.
inline std::vector<double> trimmed_consensus_retained(std::span<const double> values, std::size_t b) {
    if (values.size() < 2 * b + 1)
        throw WellPosednessError("trimmed consensus needs at least 2b+1 values (got " + std::to_string(values.size()) +
                                 ", b=" + std::to_string(b) + ")");
    std::vector<double> v(values.begin(), values.end());
    for (double x : v)
        if (!std::isfinite(x)) throw NumericError("trimmed consensus input is not finite");
    std::sort(v.begin(), v.end());
    return {v.begin() + static_cast<std::ptrdiff_t>(b), v.end() - static_cast<std::ptrdiff_t>(b)};
}

/// Mean of the values left after removing the b largest and b smallest (summed in ascending order,
/// clamped to the retained range).
inline double trimmed_consensus_step(std::span<const double> values, std::size_t b) {
    const auto kept = trimmed_consensus_retained(values, b);
    double acc = 0.0;
    for (double v : kept) acc += v;
    return std::clamp(acc / static_cast<double>(kept.size()), kept.front(), kept.back());
}

// ---------------------------------------------------------------------------
// Decentralized learning

enum class DecAlgorithm { dgd, consensus_only, trimmed_consensus, bridge, byrdie, bridge_median, bridge_krum, bridge_bulyan };

inline constexpr DecAlgorithm kAllDecAlgorithms[] = {
    DecAlgorithm::dgd,    DecAlgorithm::consensus_only, DecAlgorithm::trimmed_consensus, DecAlgorithm::bridge,
    DecAlgorithm::byrdie, DecAlgorithm::bridge_median,  DecAlgorithm::bridge_krum,       DecAlgorithm::bridge_bulyan};

inline std::string_view dec_algorithm_name(DecAlgorithm a) {
    switch (a) {
    case DecAlgorithm::dgd: return "dgd";
    case DecAlgorithm::consensus_only: return "consensus_only";
    case DecAlgorithm::trimmed_consensus: return "trimmed_consensus";
    case DecAlgorithm::bridge: return "bridge";
    case DecAlgorithm::byrdie: return "byrdie";
    case DecAlgorithm::bridge_median: return "bridge_median";
    case DecAlgorithm::bridge_krum: return "bridge_krum";
    case DecAlgorithm::bridge_bulyan: return "bridge_bulyan";
    }
    return "?";
}

inline std::optional<DecAlgorithm> parse_dec_algorithm(std::string_view name) {
    for (DecAlgorithm a : kAllDecAlgorithms)
        if (dec_algorithm_name(a) == name) return a;
    return std::nullopt;
}

struct DecentralizedConfig {
    NetworkGraph graph;
    /// Consensus weights for dgd and consensus_only; Metropolis weights when empty.
    std::optional<WeightMatrix> weights;
    std::size_t b = 0;
    DecAlgorithm algorithm = DecAlgorithm::dgd;
    StepSchedule step{StepSchedule::Kind::decaying, 0.1, 100.0};
    std::size_t iterations = 100;
    std::uint64_t seed = 0;
    TaskSpec task;
    std::vector<std::size_t> byz_ids;
    AttackSpec attack;
    std::size_t samples_per_node = 200;
    std::size_t holdout_size = 1000;
    /// 0 uses the full local shard.
    std::size_t batch_size = 0;
    /// ByRDiE inner iterations per coordinate.
    std::size_t byrdie_inner = 1;
    /// Metrics are recorded every eval_every iterations and after the last one.
    std::size_t eval_every = 1;
    /// Per-node initial iterates; zeros when empty.
    std::vector<ModelVector> initial;
};

struct NodeRow {
    std::size_t t = 0;
    std::size_t node = 0;
    std::optional<double> acc;
    std::optional<double> dist;
    std::uint64_t scalars_broadcast = 0;
};

struct SummaryRow {
    std::size_t t = 0;
    std::uint64_t scalars_broadcast = 0;
    std::optional<double> acc_mean;
    std::optional<double> acc_std;
    std::optional<double> dist_mean;
    double risk_mean = 0.0;
    /// max over honest nodes of the distance to the honest average.
    double disagreement = 0.0;
};

struct DecentralizedTrace {
    std::vector<NodeRow> node_rows;
    std::vector<SummaryRow> summary;
    std::vector<ModelVector> final_states;
    std::vector<std::size_t> honest;
    std::vector<std::string> warnings;
};

/// One synchronous round as seen by every node. coordinate is set during ByRDiE inner steps.
struct DecRoundView {
    std::size_t t = 0;
    std::optional<std::size_t> coordinate;
    const std::vector<ModelVector>& broadcast;
    const std::vector<ModelVector>& next;
    const std::vector<bool>& is_byzantine;
};

using DecObserver = std::function<void(const DecRoundView&)>;

namespace detail {

inline std::vector<std::size_t> closed_neighborhood(const NetworkGraph& g, std::size_t j) {
    std::vector<std::size_t> nb = g.in_neighbors(j);
    nb.insert(std::lower_bound(nb.begin(), nb.end(), j), j);
    return nb;
}

/// Smallest closed neighborhood each screening rule accepts.
inline std::size_t local_minimum(DecAlgorithm a, std::size_t b) {
    switch (a) {
    case DecAlgorithm::bridge:
    case DecAlgorithm::byrdie:
    case DecAlgorithm::trimmed_consensus:
    case DecAlgorithm::bridge_median: return 2 * b + 1;
    case DecAlgorithm::bridge_krum: return 2 * b + 3;
    case DecAlgorithm::bridge_bulyan: return 4 * b + 2;
    default: return 1;
    }
}

inline std::string local_condition(DecAlgorithm a) {
    switch (a) {
    case DecAlgorithm::bridge_krum: return "|N_j|+1 >= 2b+3";
    case DecAlgorithm::bridge_bulyan: return "|N_j| >= 4b+1";
    default: return "|N_j|+1 >= 2b+1";
    }
}

inline void check_local_topology(const DecentralizedConfig& cfg, const std::vector<bool>& byz) {
    const std::size_t need = local_minimum(cfg.algorithm, cfg.b);
    for (std::size_t j = 0; j < cfg.graph.size(); ++j) {
        if (byz[j]) continue;
        const std::size_t have = cfg.graph.in_degree(j) + 1;
        if (have < need)
            throw WellPosednessError(std::string(dec_algorithm_name(cfg.algorithm)) + ": node " + std::to_string(j) +
                                     " has " + std::to_string(have) + " values in its closed neighborhood; requires " +
                                     local_condition(cfg.algorithm) + " with b=" + std::to_string(cfg.b));
    }
}

inline void warn_byzantine_neighbors(const DecentralizedConfig& cfg, const std::vector<bool>& byz,
                                     std::vector<std::string>& warnings) {
    for (std::size_t j = 0; j < cfg.graph.size(); ++j) {
        if (byz[j]) continue;
        std::size_t bad = 0;
        for (std::size_t i : cfg.graph.in_neighbors(j)) bad += byz[i] ? 1 : 0;
        if (bad > cfg.b)
            warnings.push_back("WARNING: node " + std::to_string(j) + " has " + std::to_string(bad) +
                               " Byzantine in-neighbors, more than b=" + std::to_string(cfg.b));
    }
}

inline ModelVector screen(const DecentralizedConfig& cfg, const WeightMatrix* w, std::size_t j,
                          const std::vector<std::size_t>& nb, const std::vector<ModelVector>& s) {
    if (cfg.algorithm == DecAlgorithm::dgd || cfg.algorithm == DecAlgorithm::consensus_only)
        return weighted_sum(*w, j, s);
    std::vector<ModelVector> local;
    local.reserve(nb.size());
    for (std::size_t i : nb) local.push_back(s[i]);
    switch (cfg.algorithm) {
    case DecAlgorithm::bridge:
    case DecAlgorithm::trimmed_consensus: return agg_coordinate_trimmed_mean(local, cfg.b).aggregate;
    case DecAlgorithm::bridge_median: return agg_coordinate_median(local).aggregate;
    case DecAlgorithm::bridge_krum: return krum_select(local, cfg.b).aggregate;
    case DecAlgorithm::bridge_bulyan: return bulyan_core(local, cfg.b, nullptr).aggregate;
    default: break;
    }
    throw std::logic_error("screen: unsupported algorithm");
}

} // namespace detail

/**
 * Synchronous decentralized engine.
 *
 * dgd:               w_j <- sum_i alpha_ji w_i - rho(t) g_j(w_j)
 * consensus_only:    w_j <- sum_i alpha_ji w_i
 * trimmed_consensus: per coordinate trimmed mean over N_j + {j}, no gradient
 * bridge*:           screened neighborhood value - rho(t) g_j(w_j)
 * byrdie:            cycles over coordinates; each inner step screens only
 *                    coordinate k and applies the k-th gradient entry
 *                    evaluated at the current full iterate
 *
 * A Byzantine node draws one attack vector per round (per inner step for
 * byrdie) and sends it to all its out-neighbors. Without an attack the
 * nodes in byz_ids behave honestly.
 */
inline DecentralizedTrace run_decentralized(const DecentralizedConfig& cfg, const Problem& problem,
                                            const DecObserver& observer = {}) {
    const std::size_t m = cfg.graph.size();
    const std::size_t d = cfg.task.dim;
    if (m == 0) throw std::invalid_argument("decentralized run requires a nonempty graph");
    if (cfg.iterations == 0) throw std::invalid_argument("iterations must be positive");
    if (cfg.eval_every == 0) throw std::invalid_argument("eval_every must be positive");
    if (cfg.byrdie_inner == 0) throw std::invalid_argument("byrdie_inner must be positive");
    cfg.step.validate();
    validate_attack(cfg.attack, d);
    const bool attacking = cfg.attack.kind != AttackKind::none;
    const auto listed = detail::byzantine_mask(m, cfg.byz_ids);
    const std::vector<bool> byz = attacking ? listed : std::vector<bool>(m, false);

    DecentralizedTrace tr;
    for (std::size_t j = 0; j < m; ++j)
        if (!byz[j]) tr.honest.push_back(j);
    if (tr.honest.empty()) throw std::invalid_argument("decentralized run requires at least one honest node");
    detail::check_local_topology(cfg, byz);
    detail::warn_byzantine_neighbors(cfg, byz, tr.warnings);

    const bool uses_weights = cfg.algorithm == DecAlgorithm::dgd || cfg.algorithm == DecAlgorithm::consensus_only;
    WeightMatrix weights;
    if (uses_weights) {
        weights = cfg.weights ? *cfg.weights : metropolis_weights(cfg.graph);
        validate_weights(cfg.graph, weights);
    }
    const bool has_gradient =
        cfg.algorithm != DecAlgorithm::consensus_only && cfg.algorithm != DecAlgorithm::trimmed_consensus;
    if (has_gradient && problem.train.partition.size() != m)
        throw std::invalid_argument("problem shard count differs from the graph size");

    std::vector<std::vector<std::size_t>> nbhd(m);
    for (std::size_t j = 0; j < m; ++j) nbhd[j] = detail::closed_neighborhood(cfg.graph, j);

    std::vector<ModelVector> x;
    if (cfg.initial.empty()) x.assign(m, ModelVector::zeros(d));
    else {
        if (cfg.initial.size() != m) throw DimensionError("one initial iterate per node is required");
        for (const auto& v : cfg.initial)
            if (v.size() != d) throw DimensionError("initial iterate dimension mismatch");
        x = cfg.initial;
    }

    SeededRng batch_rng = SeededRng::derive(cfg.seed, 3);
    auto attack_rngs = attacker_streams(cfg.seed, m);
    std::uint64_t scalars = 0;

    auto local_grad = [&](std::size_t j, const ModelVector& w) {
        const auto idx = detail::draw_batch(problem.train, j, cfg.batch_size, batch_rng);
        return loss_and_grad(problem.spec, problem.train, w, idx).grad;
    };
    auto broadcast_states = [&](std::size_t t) {
        std::vector<ModelVector> s = x;
        if (!attacking) return s;
        std::vector<ModelVector> honest_now;
        for (std::size_t j : tr.honest) honest_now.push_back(x[j]);
        std::size_t rank = 0;
        for (std::size_t j = 0; j < m; ++j) {
            if (!byz[j]) continue;
            const AttackContext ctx{t, honest_now, x[j], m, attack_rngs[j]};
            s[j] = generate_attack(cfg.attack, ctx, rank++);
            if (s[j].size() != d) throw DimensionError("attack message dimension mismatch");
        }
        return s;
    };
    auto record = [&](std::size_t t) {
        SummaryRow sum;
        sum.t = t;
        sum.scalars_broadcast = scalars;
        std::vector<double> accs;
        double dist_acc = 0.0;
        bool have_dist = false;
        const bool evaluate_holdout = problem.holdout.size() > 0;
        for (std::size_t j : tr.honest) {
            NodeRow row;
            row.t = t;
            row.node = j;
            row.scalars_broadcast = scalars;
            if (evaluate_holdout) {
                const Metrics met = evaluate(problem.spec, x[j], problem.holdout, problem.reference);
                row.acc = met.accuracy;
                row.dist = met.distance;
                sum.risk_mean += met.risk / static_cast<double>(tr.honest.size());
            } else if (problem.reference) {
                row.dist = std::sqrt(squared_distance(x[j], *problem.reference));
            }
            if (row.acc) accs.push_back(*row.acc);
            if (row.dist) {
                have_dist = true;
                dist_acc += *row.dist;
            }
            tr.node_rows.push_back(row);
        }
        if (!accs.empty()) {
            double mean = 0.0;
            for (double a : accs) mean += a;
            mean /= static_cast<double>(accs.size());
            double var = 0.0;
            for (double a : accs) var += (a - mean) * (a - mean);
            sum.acc_mean = mean;
            sum.acc_std = std::sqrt(var / static_cast<double>(accs.size()));
        }
        if (have_dist) sum.dist_mean = dist_acc / static_cast<double>(tr.honest.size());
        std::vector<bool> skip = byz;
        sum.disagreement = detail::max_distance(x, skip, detail::plain_average(x, skip));
        tr.summary.push_back(sum);
    };

    try {
        for (std::size_t t = 0; t < cfg.iterations; ++t) {
            const double rho = cfg.step.at(t);
            if (cfg.algorithm == DecAlgorithm::byrdie) {
                for (std::size_t k = 0; k < d; ++k) {
                    for (std::size_t inner = 0; inner < cfg.byrdie_inner; ++inner) {
                        const auto s = broadcast_states(t + 1);
                        std::vector<ModelVector> next = x;
                        std::vector<double> vals;
                        for (std::size_t j : tr.honest) {
                            vals.clear();
                            for (std::size_t i : nbhd[j]) vals.push_back(s[i][k]);
                            std::vector<double> w = x[j].data();
                            const double g = local_grad(j, x[j])[k];
                            w[k] = trimmed_consensus_step(vals, cfg.b) - rho * g;
                            next[j] = ModelVector(std::move(w));
                        }
                        scalars += 1;
                        if (observer) observer(DecRoundView{t + 1, k, s, next, byz});
                        x = std::move(next);
                    }
                }
            } else {
                const auto s = broadcast_states(t + 1);
                std::vector<ModelVector> next = x;
                for (std::size_t j : tr.honest) {
                    ModelVector v = detail::screen(cfg, &weights, j, nbhd[j], s);
                    if (has_gradient) v = axpy(v, -rho, local_grad(j, x[j]));
                    next[j] = std::move(v);
                }
                scalars += d;
                if (observer) observer(DecRoundView{t + 1, std::nullopt, s, next, byz});
                x = std::move(next);
            }
            if ((t + 1) % cfg.eval_every == 0 || t + 1 == cfg.iterations) record(t + 1);
        }
    } catch (const NumericError& e) {
        throw std::runtime_error(std::string(dec_algorithm_name(cfg.algorithm)) +
                                 ": honest iterate diverged after " + std::to_string(tr.summary.size()) +
                                 " recorded rows: " + e.what());
    }
    tr.final_states = x;
    return tr;
}

/// Problem for a decentralized run: node shards, holdout, and the pooled honest ERM minimizer as reference.
inline Problem build_decentralized_problem(const DecentralizedConfig& cfg) {
    Problem p = build_problem(cfg.task, cfg.graph.size(), cfg.samples_per_node, cfg.holdout_size, 0, cfg.seed);
    if (cfg.task.kind != TaskKind::softmax_classification) {
        std::vector<bool> byz = detail::byzantine_mask(cfg.graph.size(), cfg.byz_ids);
        std::vector<std::size_t> idx;
        for (std::size_t j = 0; j < cfg.graph.size(); ++j)
            if (!byz[j] || cfg.attack.kind == AttackKind::none)
                for (std::size_t i : p.train.node_indices(j)) idx.push_back(i);
        p.reference = erm_minimizer(p.spec, p.train, idx);
    }
    return p;
}

inline DecentralizedTrace run_decentralized(const DecentralizedConfig& cfg, const DecObserver& observer = {}) {
    return run_decentralized(cfg, build_decentralized_problem(cfg), observer);
}

inline DecentralizedTrace run_dgd(DecentralizedConfig cfg, const DecObserver& observer = {}) {
    cfg.algorithm = DecAlgorithm::dgd;
    return run_decentralized(cfg, observer);
}

inline DecentralizedTrace run_bridge(DecentralizedConfig cfg, const DecObserver& observer = {}) {
    cfg.algorithm = DecAlgorithm::bridge;
    return run_decentralized(cfg, observer);
}

inline DecentralizedTrace run_byrdie(DecentralizedConfig cfg, const DecObserver& observer = {}) {
    cfg.algorithm = DecAlgorithm::byrdie;
    return run_decentralized(cfg, observer);
}

enum class Screening { median, krum, bulyan };

inline DecentralizedTrace run_bridge_variant(DecentralizedConfig cfg, Screening screening,
                                             const DecObserver& observer = {}) {
    switch (screening) {
    case Screening::median: cfg.algorithm = DecAlgorithm::bridge_median; break;
    case Screening::krum: cfg.algorithm = DecAlgorithm::bridge_krum; break;
    case Screening::bulyan: cfg.algorithm = DecAlgorithm::bridge_bulyan; break;
    }
    return run_decentralized(cfg, observer);
}

/**
 * Pure trimmed-mean consensus on the given initial values (no task): every
 * honest node replaces each coordinate by the trimmed mean over N_j + {j}.
 * Byzantine nodes follow `attack`; states[t] is the state after round t.
 */
inline ConsensusTrace run_trimmed_consensus(const NetworkGraph& g, std::size_t b,
                                            const std::vector<ModelVector>& initial,
                                            const std::vector<std::size_t>& byz_ids, const AttackSpec& attack,
                                            std::size_t iterations, std::uint64_t seed,
                                            const DecObserver& observer = {}) {
    detail::check_initial(g, initial);
    const std::size_t m = g.size();
    const std::size_t d = initial.front().size();
    validate_attack(attack, d);
    const bool attacking = attack.kind != AttackKind::none;
    const auto listed = detail::byzantine_mask(m, byz_ids);
    const std::vector<bool> byz = attacking ? listed : std::vector<bool>(m, false);
    DecentralizedConfig shape;
    shape.graph = g;
    shape.b = b;
    shape.algorithm = DecAlgorithm::trimmed_consensus;
    detail::check_local_topology(shape, byz);

    std::vector<std::vector<std::size_t>> nbhd(m);
    for (std::size_t j = 0; j < m; ++j) nbhd[j] = detail::closed_neighborhood(g, j);
    auto attack_rngs = attacker_streams(seed, m);
    ConsensusTrace tr;
    tr.states.push_back(initial);
    tr.disagreement.push_back(detail::max_distance(initial, byz, detail::plain_average(initial, byz)));
    for (std::size_t t = 1; t <= iterations; ++t) {
        const auto& x = tr.states.back();
        std::vector<ModelVector> s = x;
        if (attacking) {
            std::vector<ModelVector> honest_now;
            for (std::size_t j = 0; j < m; ++j)
                if (!byz[j]) honest_now.push_back(x[j]);
            std::size_t rank = 0;
            for (std::size_t j = 0; j < m; ++j) {
                if (!byz[j]) continue;
                const AttackContext ctx{t, honest_now, x[j], m, attack_rngs[j]};
                s[j] = generate_attack(attack, ctx, rank++);
                if (s[j].size() != d) throw DimensionError("attack message dimension mismatch");
            }
        }
        std::vector<ModelVector> next = x;
        for (std::size_t j = 0; j < m; ++j) {
            if (byz[j]) continue;
            std::vector<ModelVector> local;
            for (std::size_t i : nbhd[j]) local.push_back(s[i]);
            next[j] = agg_coordinate_trimmed_mean(local, b).aggregate;
        }
        if (observer) observer(DecRoundView{t, std::nullopt, s, next, byz});
        tr.disagreement.push_back(detail::max_distance(next, byz, detail::plain_average(next, byz)));
        tr.states.push_back(std::move(next));
    }
    return tr;
}

} // namespace byzrl
