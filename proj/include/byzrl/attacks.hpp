#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "byzrl/numeric.hpp"

namespace byzrl {

/// What an omniscient Byzantine node sees when forming its message.
struct AttackContext {
    std::size_t iteration = 0;
    std::span<const ModelVector> honest_messages;
    const ModelVector& current_model;
    std::size_t total_nodes = 0;
    SeededRng& rng;
};

struct UniformRange {
    double lo = 0.0;
    double hi = 1.0;
};

inline void check_range(UniformRange r, std::string_view what) {
    if (!(r.lo < r.hi)) throw std::invalid_argument(std::string(what) + ": range requires lo < hi");
}

/// Returns M*target - sum(honest); with mean aggregation the server then steps along `target`.
inline ModelVector attack_gradient_control(const AttackContext& ctx, const ModelVector& target) {
    std::vector<double> out(target.size());
    for (std::size_t k = 0; k < target.size(); ++k) out[k] = static_cast<double>(ctx.total_nodes) * target[k];
    for (const auto& h : ctx.honest_messages) {
        if (h.size() != target.size()) throw DimensionError("gradient control: honest message dimension mismatch");
        for (std::size_t k = 0; k < target.size(); ++k) out[k] -= h[k];
    }
    return ModelVector(std::move(out));
}

/// i.i.d. uniform entries: odd iterations from `odd`, even iterations from `even`.
inline ModelVector attack_alternating_uniform(const AttackContext& ctx, UniformRange odd = {0.0, 1e-5},
                                              UniformRange even = {0.0, 20.0}) {
    check_range(odd, "alternating attack (odd)");
    check_range(even, "alternating attack (even)");
    const UniformRange r = ctx.iteration % 2 == 1 ? odd : even;
    std::vector<double> out(ctx.current_model.size());
    for (double& v : out) v = ctx.rng.uniform(r.lo, r.hi);
    return ModelVector(std::move(out));
}

inline ModelVector attack_lazy_constant(const AttackContext&, const ModelVector& w_prime) { return w_prime; }

inline ModelVector attack_coordinate_uniform(const AttackContext& ctx, double lo = -1.0, double hi = 0.0) {
    check_range({lo, hi}, "coordinate-uniform attack");
    std::vector<double> out(ctx.current_model.size());
    for (double& v : out) v = ctx.rng.uniform(lo, hi);
    return ModelVector(std::move(out));
}

enum class AttackKind { none, gradient_control, alternating_uniform, lazy_constant, coordinate_uniform, custom };

inline std::string_view attack_name(AttackKind k) {
    switch (k) {
    case AttackKind::none: return "none";
    case AttackKind::gradient_control: return "gradient_control";
    case AttackKind::alternating_uniform: return "alternating_uniform";
    case AttackKind::lazy_constant: return "lazy_constant";
    case AttackKind::coordinate_uniform: return "coordinate_uniform";
    case AttackKind::custom: return "custom";
    }
    return "?";
}

inline std::optional<AttackKind> parse_attack(std::string_view name) {
    for (auto k : {AttackKind::none, AttackKind::gradient_control, AttackKind::alternating_uniform,
                   AttackKind::lazy_constant, AttackKind::coordinate_uniform})
        if (attack_name(k) == name) return k;
    return std::nullopt;
}

/**
 * Attack selection used by the engines.
 *
 * gradient_control drives the model toward `target_model`: the attacker
 * asks the server to step along (w - target_model). lazy_constant cycles
 * through `constants` by attacker rank, so several lazy nodes may hold
 * different constants.
 */
struct AttackSpec {
    AttackKind kind = AttackKind::none;
    ModelVector target_model;
    UniformRange odd_range{0.0, 1e-5};
    UniformRange even_range{0.0, 20.0};
    std::vector<ModelVector> constants;
    UniformRange coordinate_range{-1.0, 0.0};
    std::function<ModelVector(const AttackContext&, std::size_t attacker_rank)> custom;
};

/// One attack stream per node, keyed by (seed, node id) under stream 4 of the run seed.
inline std::vector<SeededRng> attacker_streams(std::uint64_t seed, std::size_t nodes) {
    const SeededRng root = SeededRng::derive(seed, 4);
    std::vector<SeededRng> out;
    out.reserve(nodes);
    for (std::size_t j = 0; j < nodes; ++j) out.push_back(root.derive(j));
    return out;
}

/// Registration-time validation against the system dimension.
inline void validate_attack(const AttackSpec& spec, std::size_t dim) {
    switch (spec.kind) {
    case AttackKind::none: return;
    case AttackKind::gradient_control:
        if (spec.target_model.size() != dim)
            throw DimensionError("gradient_control target has dimension " + std::to_string(spec.target_model.size()) +
                                 ", system dimension is " + std::to_string(dim));
        return;
    case AttackKind::alternating_uniform:
        check_range(spec.odd_range, "alternating attack (odd)");
        check_range(spec.even_range, "alternating attack (even)");
        return;
    case AttackKind::lazy_constant:
        if (spec.constants.empty()) throw std::invalid_argument("lazy_constant attack requires at least one constant");
        for (const auto& c : spec.constants)
            if (c.size() != dim)
                throw DimensionError("lazy constant has dimension " + std::to_string(c.size()) +
                                     ", system dimension is " + std::to_string(dim));
        return;
    case AttackKind::coordinate_uniform: check_range(spec.coordinate_range, "coordinate-uniform attack"); return;
    case AttackKind::custom:
        if (!spec.custom) throw std::invalid_argument("custom attack requires a callable");
        return;
    }
}

inline ModelVector generate_attack(const AttackSpec& spec, const AttackContext& ctx, std::size_t attacker_rank) {
    switch (spec.kind) {
    case AttackKind::none: return ModelVector::zeros(ctx.current_model.size());
    case AttackKind::gradient_control:
        return attack_gradient_control(ctx, subtract(ctx.current_model, spec.target_model));
    case AttackKind::alternating_uniform: return attack_alternating_uniform(ctx, spec.odd_range, spec.even_range);
    case AttackKind::lazy_constant:
        return attack_lazy_constant(ctx, spec.constants[attacker_rank % spec.constants.size()]);
    case AttackKind::coordinate_uniform:
        return attack_coordinate_uniform(ctx, spec.coordinate_range.lo, spec.coordinate_range.hi);
    case AttackKind::custom: return spec.custom(ctx, attacker_rank);
    }
    throw std::invalid_argument("unknown attack kind");
}

} // namespace byzrl
