#pragma once

// Screening / aggregation rules for M received vectors.
//
// Every per-coordinate average sums the retained values in ascending order,
// and every vector-level tie is broken by canonical (lexicographic) order of
// the inputs, so each rule is a function of the input multiset and is
// bit-reproducible regardless of arrival order.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "byzrl/numeric.hpp"

namespace byzrl {

enum class Rule {
    mean,
    coordinate_median,
    trimmed_mean,
    geometric_median,
    krum,
    multi_krum,
    bulyan,
    zeno,
    sign_majority,
};

inline constexpr Rule kAllRules[] = {Rule::mean,  Rule::coordinate_median, Rule::trimmed_mean,
                                     Rule::geometric_median, Rule::krum, Rule::multi_krum,
                                     Rule::bulyan, Rule::zeno, Rule::sign_majority};

inline std::string_view rule_name(Rule r) {
    switch (r) {
    case Rule::mean: return "mean";
    case Rule::coordinate_median: return "median";
    case Rule::trimmed_mean: return "trimmed_mean";
    case Rule::geometric_median: return "geomed";
    case Rule::krum: return "krum";
    case Rule::multi_krum: return "multi_krum";
    case Rule::bulyan: return "bulyan";
    case Rule::zeno: return "zeno";
    case Rule::sign_majority: return "sign_majority";
    }
    return "?";
}

inline std::optional<Rule> parse_rule(std::string_view name) {
    if (name == "none" || name == "vanilla") return Rule::mean;
    for (Rule r : kAllRules)
        if (rule_name(r) == name) return r;
    if (name == "coordinate_median") return Rule::coordinate_median;
    if (name == "trimmed" || name == "coordinate_trimmed_mean") return Rule::trimmed_mean;
    if (name == "geometric_median") return Rule::geometric_median;
    return std::nullopt;
}

/// Raised when (M, b[, m]) violates a rule's well-posedness condition.
class WellPosednessError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class ConvergenceError : public std::runtime_error {
public:
    ConvergenceError(const std::string& what, double last_objective)
        : std::runtime_error(what), last_objective_(last_objective) {}
    double last_objective() const noexcept { return last_objective_; }

private:
    double last_objective_;
};

struct RuleConfig {
    Rule rule = Rule::mean;
    std::size_t b = 0;
    std::size_t m = 1;
    double gamma = 1e-3;
    std::size_t max_iters = 10000;
    std::optional<ModelVector> oracle_gradient;
};

struct AggregationOutcome {
    ModelVector aggregate;
    /// Input indices retained by vector-level screening (sorted). Empty for coordinate-wise rules.
    std::vector<std::size_t> survivors;
    std::optional<std::size_t> selected_index;
    /// Coordinate-wise rules: retained input indices per coordinate.
    std::vector<std::vector<std::size_t>> coordinate_survivors;
};

/**
 * Work meter for the screening kernels: counts arithmetic operations and
 * comparisons that touch vector entries. Scalar bookkeeping on scores is
 * not counted.
 */
struct WorkCounter {
    std::uint64_t entry_ops = 0;
};

/// Minimum number of inputs for which `rule` is well posed with bound b.
inline std::size_t min_inputs(Rule rule, std::size_t b, std::size_t m = 1) {
    switch (rule) {
    case Rule::mean: return 1;
    case Rule::coordinate_median:
    case Rule::trimmed_mean:
    case Rule::geometric_median:
    case Rule::sign_majority: return 2 * b + 1;
    case Rule::krum: return 2 * b + 3;
    case Rule::multi_krum: return 2 * b + m + 2;
    case Rule::bulyan: return 4 * b + 3;
    case Rule::zeno: return b + 1;
    }
    return 1;
}

inline std::string condition_text(Rule rule) {
    switch (rule) {
    case Rule::mean: return "M>=1";
    case Rule::coordinate_median:
    case Rule::trimmed_mean:
    case Rule::geometric_median:
    case Rule::sign_majority: return "M>=2b+1";
    case Rule::krum: return "M>=2b+3";
    case Rule::multi_krum: return "M>=2b+m+2";
    case Rule::bulyan: return "M>=4b+3";
    case Rule::zeno: return "M>=b+1";
    }
    return "";
}

inline void check_well_posed(Rule rule, std::size_t count, std::size_t b, std::size_t m = 1) {
    if (rule == Rule::multi_krum && m == 0) throw WellPosednessError("multi_krum requires m >= 1");
    const std::size_t need = min_inputs(rule, b, m);
    if (count < need)
        throw WellPosednessError(std::string(rule_name(rule)) + " is not well posed: requires " +
                                 condition_text(rule) + " (M=" + std::to_string(count) + ", b=" + std::to_string(b) +
                                 (rule == Rule::multi_krum ? ", m=" + std::to_string(m) : std::string()) + ")");
}

namespace detail {

inline std::size_t validate_inputs(std::span<const ModelVector> inputs) {
    if (inputs.empty()) throw std::invalid_argument("aggregation requires at least one input");
    const std::size_t d = inputs.front().size();
    for (const auto& v : inputs)
        if (v.size() != d) throw DimensionError("aggregation inputs have mismatched dimensions");
    return d;
}

inline void count(WorkCounter* c, std::uint64_t n) {
    if (c) c->entry_ops += n;
}

/// Indices of inputs sorted lexicographically by entries, ties by index.
inline std::vector<std::size_t> canonical_order(std::span<const ModelVector> inputs, WorkCounter* counter) {
    std::vector<std::size_t> order(inputs.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const auto& x = inputs[a];
        const auto& y = inputs[b];
        for (std::size_t k = 0; k < x.size(); ++k) {
            count(counter, 1);
            if (x[k] < y[k]) return true;
            if (y[k] < x[k]) return false;
        }
        return a < b;
    });
    return order;
}

struct Entry {
    double value;
    std::size_t index;
};

/// Coordinate k of the selected inputs, sorted by (value, index).
inline std::vector<Entry> sorted_column(std::span<const ModelVector> inputs, std::span<const std::size_t> select,
                                        std::size_t k, WorkCounter* counter) {
    std::vector<Entry> col;
    col.reserve(select.size());
    for (std::size_t i : select) col.push_back({inputs[i][k], i});
    count(counter, col.size());
    std::sort(col.begin(), col.end(), [&](const Entry& a, const Entry& b) {
        count(counter, 1);
        if (a.value != b.value) return a.value < b.value;
        return a.index < b.index;
    });
    return col;
}

/// Mean of values already in ascending order, summed left to right and clamped to [first, last]
/// so rounding never pushes it outside the averaged values.
inline double ascending_mean(std::span<const Entry> sorted) {
    double s = 0.0;
    for (const auto& e : sorted) s += e.value;
    return std::clamp(s / static_cast<double>(sorted.size()), sorted.front().value, sorted.back().value);
}

inline std::vector<std::size_t> all_indices(std::size_t n) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    return idx;
}

/// Coordinate-wise ascending-order mean over a subset of inputs.
inline ModelVector subset_mean(std::span<const ModelVector> inputs, std::span<const std::size_t> select,
                               WorkCounter* counter) {
    const std::size_t d = inputs.front().size();
    std::vector<double> out(d);
    for (std::size_t k = 0; k < d; ++k) {
        const auto col = sorted_column(inputs, select, k, counter);
        out[k] = ascending_mean(col);
    }
    return ModelVector(std::move(out));
}

/// Pairwise squared distances (symmetric, zero diagonal).
inline std::vector<double> pairwise_sq_distances(std::span<const ModelVector> inputs, WorkCounter* counter) {
    const std::size_t n = inputs.size();
    const std::size_t d = inputs.front().size();
    std::vector<double> dist(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < d; ++k) {
                const double diff = inputs[i][k] - inputs[j][k];
                acc += diff * diff;
            }
            dist[i * n + j] = acc;
            dist[j * n + i] = acc;
        }
    count(counter, static_cast<std::uint64_t>(n) * (n - 1) / 2 * d);
    return dist;
}

/**
 * One Krum selection among `active` (canonical order). The score of a
 * candidate is the ascending-order sum of its squared distances to the
 * max(0, n-b-2) nearest other active inputs. Returns the position in
 * `active` of the first minimal score.
 */
inline std::size_t krum_pick(const std::vector<double>& dist, std::size_t n_total, std::span<const std::size_t> active,
                             std::size_t b) {
    const std::size_t n = active.size();
    const std::size_t nearest = n >= b + 2 ? std::min(n - b - 2, n - 1) : 0;
    std::size_t best = 0;
    double best_score = 0.0;
    std::vector<double> row;
    row.reserve(n);
    for (std::size_t p = 0; p < n; ++p) {
        row.clear();
        for (std::size_t q = 0; q < n; ++q)
            if (q != p) row.push_back(dist[active[p] * n_total + active[q]]);
        std::sort(row.begin(), row.end());
        double score = 0.0;
        for (std::size_t r = 0; r < nearest; ++r) score += row[r];
        if (p == 0 || score < best_score) {
            best = p;
            best_score = score;
        }
    }
    return best;
}

/// Sequential Krum: select `rounds` inputs, removing each winner. Returns original indices in selection order.
inline std::vector<std::size_t> sequential_krum(std::span<const ModelVector> inputs, std::size_t b, std::size_t rounds,
                                                WorkCounter* counter) {
    const auto order = canonical_order(inputs, counter);
    const auto dist = pairwise_sq_distances(inputs, counter);
    std::vector<std::size_t> active(order.begin(), order.end());
    std::vector<std::size_t> winners;
    winners.reserve(rounds);
    for (std::size_t r = 0; r < rounds && !active.empty(); ++r) {
        const std::size_t pos = krum_pick(dist, inputs.size(), active, b);
        winners.push_back(active[pos]);
        active.erase(active.begin() + static_cast<std::ptrdiff_t>(pos));
    }
    return winners;
}

inline double coordinate_median_of(std::span<const Entry> sorted) {
    const std::size_t n = sorted.size();
    if (n % 2 == 1) return sorted[n / 2].value;
    return (sorted[n / 2 - 1].value + sorted[n / 2].value) / 2.0;
}

/// Bulyan with an explicit stage-1 size; shared by the distributed rule and the decentralized variant.
inline AggregationOutcome bulyan_core(std::span<const ModelVector> inputs, std::size_t b, WorkCounter* counter) {
    const std::size_t n = inputs.size();
    const std::size_t d = inputs.front().size();
    const std::size_t theta = n - 2 * b;
    const std::size_t beta = n - 4 * b;
    auto selected = sequential_krum(inputs, b, theta, counter);
    std::sort(selected.begin(), selected.end());

    AggregationOutcome out;
    std::vector<double> agg(d);
    out.coordinate_survivors.resize(d);
    for (std::size_t k = 0; k < d; ++k) {
        auto col = sorted_column(inputs, selected, k, counter);
        const double med = coordinate_median_of(col);
        std::vector<Entry> near = col;
        std::stable_sort(near.begin(), near.end(), [&](const Entry& x, const Entry& y) {
            count(counter, 1);
            const double dx = std::abs(x.value - med);
            const double dy = std::abs(y.value - med);
            if (dx != dy) return dx < dy;
            if (x.value != y.value) return x.value < y.value;
            return x.index < y.index;
        });
        near.resize(beta);
        std::sort(near.begin(), near.end(), [](const Entry& x, const Entry& y) {
            if (x.value != y.value) return x.value < y.value;
            return x.index < y.index;
        });
        agg[k] = ascending_mean(near);
        auto& keep = out.coordinate_survivors[k];
        for (const auto& e : near) keep.push_back(e.index);
        std::sort(keep.begin(), keep.end());
    }
    out.aggregate = ModelVector(std::move(agg));
    out.survivors = std::move(selected);
    return out;
}

} // namespace detail

inline AggregationOutcome agg_mean(std::span<const ModelVector> inputs, WorkCounter* counter = nullptr) {
    detail::validate_inputs(inputs);
    const auto all = detail::all_indices(inputs.size());
    return {detail::subset_mean(inputs, all, counter), all, std::nullopt, {}};
}

inline AggregationOutcome agg_coordinate_median(std::span<const ModelVector> inputs, WorkCounter* counter = nullptr) {
    const std::size_t d = detail::validate_inputs(inputs);
    const auto all = detail::all_indices(inputs.size());
    std::vector<double> out(d);
    AggregationOutcome res;
    res.coordinate_survivors.resize(d);
    for (std::size_t k = 0; k < d; ++k) {
        const auto col = detail::sorted_column(inputs, all, k, counter);
        out[k] = detail::coordinate_median_of(col);
        const std::size_t n = col.size();
        if (n % 2 == 1) {
            res.coordinate_survivors[k] = {col[n / 2].index};
        } else {
            res.coordinate_survivors[k] = {std::min(col[n / 2 - 1].index, col[n / 2].index),
                                           std::max(col[n / 2 - 1].index, col[n / 2].index)};
        }
    }
    res.aggregate = ModelVector(std::move(out));
    return res;
}

/// Per coordinate: drop the b largest and b smallest values, average the rest.
inline AggregationOutcome agg_coordinate_trimmed_mean(std::span<const ModelVector> inputs, std::size_t b,
                                                      WorkCounter* counter = nullptr) {
    const std::size_t d = detail::validate_inputs(inputs);
    check_well_posed(Rule::trimmed_mean, inputs.size(), b);
    const auto all = detail::all_indices(inputs.size());
    std::vector<double> out(d);
    AggregationOutcome res;
    res.coordinate_survivors.resize(d);
    for (std::size_t k = 0; k < d; ++k) {
        const auto col = detail::sorted_column(inputs, all, k, counter);
        const std::span<const detail::Entry> kept(col.data() + b, col.size() - 2 * b);
        out[k] = detail::ascending_mean(kept);
        auto& idx = res.coordinate_survivors[k];
        for (const auto& e : kept) idx.push_back(e.index);
        std::sort(idx.begin(), idx.end());
    }
    res.aggregate = ModelVector(std::move(out));
    return res;
}

/**
 * (1+gamma)-approximate geometric median by Weiszfeld iteration.
 *
 * Stops once the best objective found is within (1+gamma) of a certified
 * lower bound f(y) - |s(y)| * max_i |y - g_i|, where s(y) is the minimal-norm
 * subgradient at y. The nearest input point is also tried as a candidate
 * each round, which certifies medians that sit on an input.
 */
inline AggregationOutcome agg_geometric_median(std::span<const ModelVector> inputs, double gamma,
                                               std::size_t max_iters = 10000, WorkCounter* counter = nullptr) {
    const std::size_t d = detail::validate_inputs(inputs);
    if (!(gamma > 0.0)) throw std::invalid_argument("geometric median requires gamma > 0");
    const auto order = detail::canonical_order(inputs, counter);
    std::vector<const ModelVector*> pts;
    for (std::size_t i : order) pts.push_back(&inputs[i]);
    const std::size_t n = pts.size();

    auto distance = [&](const std::vector<double>& y, const ModelVector& p) {
        double acc = 0.0;
        for (std::size_t k = 0; k < d; ++k) {
            const double diff = y[k] - p[k];
            acc += diff * diff;
        }
        return std::sqrt(acc);
    };
    struct Eval {
        double objective;
        double lower;
    };
    auto evaluate = [&](const std::vector<double>& y) {
        std::vector<double> sub(d, 0.0);
        double f = 0.0, reach = 0.0;
        std::size_t coincident = 0;
        for (const auto* p : pts) {
            const double r = distance(y, *p);
            f += r;
            reach = std::max(reach, r);
            if (r == 0.0) {
                ++coincident;
                continue;
            }
            for (std::size_t k = 0; k < d; ++k) sub[k] += (y[k] - (*p)[k]) / r;
        }
        detail::count(counter, 2 * n * d);
        double s = 0.0;
        for (double v : sub) s += v * v;
        s = std::max(0.0, std::sqrt(s) - static_cast<double>(coincident));
        return Eval{f, std::max(0.0, f - s * reach)};
    };

    std::vector<double> y(d, 0.0);
    {
        const auto m = detail::subset_mean(inputs, detail::all_indices(n), counter);
        y = m.data();
    }
    auto cur = evaluate(y);
    std::vector<double> best_point = y;
    double best_f = cur.objective;
    double best_lower = cur.lower;
    auto certified = [&] { return best_f <= (1.0 + gamma) * best_lower; };

    std::vector<double> next(d);
    for (std::size_t it = 0; it < max_iters && !certified(); ++it) {
        // Step off an input point before the Weiszfeld map.
        for (const auto* p : pts) {
            if (distance(y, *p) == 0.0) {
                double scale_ref = 1.0;
                for (double v : y) scale_ref = std::max(scale_ref, std::abs(v));
                const double shift = 1e-12 * scale_ref / std::sqrt(static_cast<double>(d));
                for (double& v : y) v += shift;
                break;
            }
        }
        std::fill(next.begin(), next.end(), 0.0);
        double wsum = 0.0;
        for (const auto* p : pts) {
            const double r = distance(y, *p);
            const double w = r > 0.0 ? 1.0 / r : 0.0;
            wsum += w;
            for (std::size_t k = 0; k < d; ++k) next[k] += w * (*p)[k];
        }
        detail::count(counter, 2 * n * d);
        if (wsum == 0.0) break;
        for (double& v : next) v /= wsum;
        y = next;
        cur = evaluate(y);
        if (cur.objective < best_f) {
            best_f = cur.objective;
            best_point = y;
        }
        best_lower = std::max(best_lower, cur.lower);

        const ModelVector* nearest = pts.front();
        double nearest_r = distance(y, *nearest);
        for (const auto* p : pts) {
            const double r = distance(y, *p);
            if (r < nearest_r) {
                nearest_r = r;
                nearest = p;
            }
        }
        const auto anchor = nearest->data();
        const auto at_anchor = evaluate(anchor);
        if (at_anchor.objective < best_f) {
            best_f = at_anchor.objective;
            best_point = anchor;
        }
        best_lower = std::max(best_lower, at_anchor.lower);
    }
    if (!certified())
        throw ConvergenceError("geometric median: no (1+gamma) certificate after " + std::to_string(max_iters) +
                                   " iterations, last objective " + std::to_string(best_f),
                               best_f);
    AggregationOutcome out;
    out.aggregate = ModelVector(std::move(best_point));
    out.survivors = detail::all_indices(n);
    return out;
}

inline AggregationOutcome krum_select(std::span<const ModelVector> inputs, std::size_t b,
                                      WorkCounter* counter = nullptr) {
    detail::validate_inputs(inputs);
    check_well_posed(Rule::krum, inputs.size(), b);
    const auto winners = detail::sequential_krum(inputs, b, 1, counter);
    const std::size_t pick = winners.front();
    return {inputs[pick], {pick}, pick, {}};
}

/// m sequential Krum selections (scores recomputed on the shrinking set), averaged.
inline AggregationOutcome multi_krum(std::span<const ModelVector> inputs, std::size_t b, std::size_t m,
                                     WorkCounter* counter = nullptr) {
    detail::validate_inputs(inputs);
    check_well_posed(Rule::multi_krum, inputs.size(), b, m);
    auto winners = detail::sequential_krum(inputs, b, m, counter);
    std::sort(winners.begin(), winners.end());
    AggregationOutcome out;
    out.aggregate = detail::subset_mean(inputs, winners, counter);
    out.survivors = std::move(winners);
    return out;
}

/**
 * Stage 1 keeps M-2b inputs by sequential Krum (nearest count uses the
 * shrinking survivor count). Stage 2 keeps, per coordinate, the M-4b
 * selected values closest to the coordinate median and averages them.
 */
inline AggregationOutcome bulyan(std::span<const ModelVector> inputs, std::size_t b, WorkCounter* counter = nullptr) {
    detail::validate_inputs(inputs);
    check_well_posed(Rule::bulyan, inputs.size(), b);
    return detail::bulyan_core(inputs, b, counter);
}

/// Keep the M-b inputs closest to the oracle gradient (score -|g - oracle|^2) and average them.
inline AggregationOutcome zeno_screen(std::span<const ModelVector> inputs, const std::optional<ModelVector>& oracle,
                                      std::size_t b, WorkCounter* counter = nullptr) {
    const std::size_t d = detail::validate_inputs(inputs);
    if (!oracle) throw std::invalid_argument("zeno screening requires an oracle gradient");
    if (oracle->size() != d) throw DimensionError("oracle gradient dimension mismatch");
    check_well_posed(Rule::zeno, inputs.size(), b);
    const auto order = detail::canonical_order(inputs, counter);
    std::vector<double> score(inputs.size());
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        double acc = 0.0;
        for (std::size_t k = 0; k < d; ++k) {
            const double diff = inputs[i][k] - (*oracle)[k];
            acc += diff * diff;
        }
        score[i] = -acc;
    }
    detail::count(counter, inputs.size() * d);
    std::vector<std::size_t> ranked(order.begin(), order.end());
    std::stable_sort(ranked.begin(), ranked.end(), [&](std::size_t a, std::size_t c) { return score[a] > score[c]; });
    ranked.resize(inputs.size() - b);
    std::sort(ranked.begin(), ranked.end());
    AggregationOutcome out;
    out.aggregate = detail::subset_mean(inputs, ranked, counter);
    out.survivors = std::move(ranked);
    return out;
}

/// Per coordinate: sign(#positive - #negative), exact ties give 0.
inline AggregationOutcome sign_majority(std::span<const ModelVector> inputs, WorkCounter* counter = nullptr) {
    const std::size_t d = detail::validate_inputs(inputs);
    std::vector<double> out(d);
    for (std::size_t k = 0; k < d; ++k) {
        long balance = 0;
        for (const auto& v : inputs) {
            if (v[k] > 0) ++balance;
            else if (v[k] < 0) --balance;
        }
        out[k] = balance > 0 ? 1.0 : (balance < 0 ? -1.0 : 0.0);
    }
    detail::count(counter, inputs.size() * d);
    return {ModelVector(std::move(out)), detail::all_indices(inputs.size()), std::nullopt, {}};
}

/// Dispatch on cfg.rule after checking its (M, b) condition.
inline AggregationOutcome aggregate(std::span<const ModelVector> inputs, const RuleConfig& cfg,
                                    WorkCounter* counter = nullptr) {
    detail::validate_inputs(inputs);
    check_well_posed(cfg.rule, inputs.size(), cfg.b, cfg.m);
    switch (cfg.rule) {
    case Rule::mean: return agg_mean(inputs, counter);
    case Rule::coordinate_median: return agg_coordinate_median(inputs, counter);
    case Rule::trimmed_mean: return agg_coordinate_trimmed_mean(inputs, cfg.b, counter);
    case Rule::geometric_median: return agg_geometric_median(inputs, cfg.gamma, cfg.max_iters, counter);
    case Rule::krum: return krum_select(inputs, cfg.b, counter);
    case Rule::multi_krum: return multi_krum(inputs, cfg.b, cfg.m, counter);
    case Rule::bulyan: return bulyan(inputs, cfg.b, counter);
    case Rule::zeno: return zeno_screen(inputs, cfg.oracle_gradient, cfg.b, counter);
    case Rule::sign_majority: return sign_majority(inputs, counter);
    }
    throw std::invalid_argument("unknown aggregation rule");
}

} // namespace byzrl
