#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "byzrl/numeric.hpp"

namespace byzrl {

/**
 * Directed graph on nodes 0..M-1. An edge (u, v) means v receives from u,
 * so u is an in-neighbor of v. Undirected graphs store both directions.
 */
class NetworkGraph {
public:
    NetworkGraph() = default;
    explicit NetworkGraph(std::size_t m) : in_(m), out_(m) {}

    static NetworkGraph complete(std::size_t m) {
        NetworkGraph g(m);
        for (std::size_t u = 0; u < m; ++u)
            for (std::size_t v = 0; v < m; ++v)
                if (u != v) g.add_edge(u, v);
        return g;
    }

    std::size_t size() const noexcept { return in_.size(); }

    void add_edge(std::size_t u, std::size_t v) {
        if (u >= size() || v >= size())
            throw std::out_of_range("edge (" + std::to_string(u) + ", " + std::to_string(v) + ") is out of range for M=" +
                                    std::to_string(size()));
        if (u == v) throw std::invalid_argument("self-loop at node " + std::to_string(u) + " is not allowed");
        insert_sorted(in_[v], u);
        insert_sorted(out_[u], v);
    }
    void add_undirected(std::size_t u, std::size_t v) {
        add_edge(u, v);
        add_edge(v, u);
    }

    bool has_edge(std::size_t u, std::size_t v) const {
        return std::binary_search(in_.at(v).begin(), in_.at(v).end(), u);
    }
    const std::vector<std::size_t>& in_neighbors(std::size_t j) const { return in_.at(j); }
    const std::vector<std::size_t>& out_neighbors(std::size_t j) const { return out_.at(j); }
    std::size_t in_degree(std::size_t j) const { return in_.at(j).size(); }

    bool is_symmetric() const {
        for (std::size_t v = 0; v < size(); ++v)
            for (std::size_t u : in_[v])
                if (!has_edge(v, u)) return false;
        return true;
    }

    std::vector<std::pair<std::size_t, std::size_t>> edges() const {
        std::vector<std::pair<std::size_t, std::size_t>> e;
        for (std::size_t u = 0; u < size(); ++u)
            for (std::size_t v : out_[u]) e.emplace_back(u, v);
        return e;
    }

private:
    static void insert_sorted(std::vector<std::size_t>& v, std::size_t x) {
        auto it = std::lower_bound(v.begin(), v.end(), x);
        if (it == v.end() || *it != x) v.insert(it, x);
    }

    std::vector<std::vector<std::size_t>> in_;
    std::vector<std::vector<std::size_t>> out_;
};

/// Undirected coin-flip graph; resampled until every degree reaches min_in_degree.
inline NetworkGraph random_graph(std::size_t m, double p, SeededRng& rng, std::size_t min_in_degree = 0,
                                 std::size_t max_retries = 10000) {
    if (!(p > 0.0 && p <= 1.0)) throw std::invalid_argument("edge probability p must lie in (0, 1]");
    if (m == 0) throw std::invalid_argument("graph requires at least one node");
    if (min_in_degree > m - 1)
        throw std::invalid_argument("min_in_degree " + std::to_string(min_in_degree) + " exceeds M-1=" +
                                    std::to_string(m - 1));
    for (std::size_t attempt = 0; attempt < max_retries; ++attempt) {
        NetworkGraph g(m);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = i + 1; j < m; ++j)
                if (p >= 1.0 || rng.uniform01() < p) g.add_undirected(i, j);
        bool ok = true;
        for (std::size_t j = 0; j < m && ok; ++j) ok = g.in_degree(j) >= min_in_degree;
        if (ok) return g;
    }
    throw std::runtime_error("random_graph: no graph with minimum degree " + std::to_string(min_in_degree) + " after " +
                             std::to_string(max_retries) + " attempts; increase p");
}

/// Square weight matrix, entry (j, i) is alpha_ji, the weight node j puts on node i.
class WeightMatrix {
public:
    WeightMatrix() = default;
    explicit WeightMatrix(std::size_t m) : m_(m), a_(m * m, 0.0) {}
    std::size_t size() const noexcept { return m_; }
    double operator()(std::size_t j, std::size_t i) const { return a_[j * m_ + i]; }
    double& operator()(std::size_t j, std::size_t i) { return a_[j * m_ + i]; }

private:
    std::size_t m_ = 0;
    std::vector<double> a_;
};

/// Throws unless W is doubly stochastic, nonnegative, supported on N_j + {j}, with nonzero entries >= floor.
inline void validate_weights(const NetworkGraph& g, const WeightMatrix& w, double floor = 0.0, double tol = 1e-12) {
    const std::size_t m = g.size();
    if (w.size() != m) throw DimensionError("weight matrix size differs from the graph");
    for (std::size_t j = 0; j < m; ++j) {
        double row = 0.0;
        double col = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            const double a = w(j, i);
            if (!std::isfinite(a) || a < 0.0) throw std::invalid_argument("weight matrix has a negative or non-finite entry");
            if (a > 0.0 && i != j && !g.has_edge(i, j))
                throw std::invalid_argument("weight (" + std::to_string(j) + ", " + std::to_string(i) +
                                            ") is positive but " + std::to_string(i) + " is not an in-neighbor");
            if (a > 0.0 && a < floor) throw std::invalid_argument("weight matrix entry below the configured floor");
            row += a;
            col += w(i, j);
        }
        if (std::abs(row - 1.0) > tol) throw std::invalid_argument("weight matrix row " + std::to_string(j) + " does not sum to 1");
        if (std::abs(col - 1.0) > tol) throw std::invalid_argument("weight matrix column " + std::to_string(j) + " does not sum to 1");
    }
}

/// alpha_ji = 1 / (1 + max(deg_j, deg_i)) on edges, alpha_jj = 1 - sum of the row.
inline WeightMatrix metropolis_weights(const NetworkGraph& g) {
    if (!g.is_symmetric()) throw std::invalid_argument("metropolis weights require an undirected (symmetric) graph");
    const std::size_t m = g.size();
    WeightMatrix w(m);
    for (std::size_t j = 0; j < m; ++j) {
        double off = 0.0;
        for (std::size_t i : g.in_neighbors(j)) {
            w(j, i) = 1.0 / (1.0 + static_cast<double>(std::max(g.in_degree(j), g.in_degree(i))));
            off += w(j, i);
        }
        w(j, j) = 1.0 - off;
    }
    return w;
}

inline bool check_in_degree(const NetworkGraph& g, std::size_t threshold) {
    for (std::size_t j = 0; j < g.size(); ++j)
        if (g.in_degree(j) < threshold) return false;
    return true;
}

// ---------------------------------------------------------------------------
// Source-component certifier

enum class Verdict { certified, falsified, unknown };

inline std::string_view verdict_name(Verdict v) {
    switch (v) {
    case Verdict::certified: return "certified";
    case Verdict::falsified: return "falsified";
    case Verdict::unknown: return "unknown";
    }
    return "?";
}

struct SourceWitness {
    std::vector<std::size_t> removed_nodes;
    /// Removed incoming edges (u, v) of the surviving nodes.
    std::vector<std::pair<std::size_t, std::size_t>> removed_edges;
};

struct SourceComponentResult {
    Verdict verdict = Verdict::unknown;
    std::optional<SourceWitness> witness;
    std::uint64_t reductions_checked = 0;
};

struct SourceCheckMode {
    bool exhaustive = true;
    std::size_t samples = 0;
    std::uint64_t seed = 0;
    std::uint64_t bound = 10'000'000;
};

namespace detail {

using Mask = std::uint64_t;

inline Mask bit(std::size_t i) { return Mask{1} << i; }

inline std::uint64_t binomial(std::size_t n, std::size_t k) {
    if (k > n) return 0;
    k = std::min(k, n - k);
    long double r = 1;
    for (std::size_t i = 1; i <= k; ++i) r = r * static_cast<long double>(n - k + i) / static_cast<long double>(i);
    const long double cap = 1e18L;
    return r > cap ? static_cast<std::uint64_t>(cap) : static_cast<std::uint64_t>(std::llround(r));
}

/// Nodes of `alive` that reach every node of `alive` along edges u -> v with u in in_mask[v].
inline Mask universal_sources(const std::vector<Mask>& in_mask, Mask alive) {
    const std::size_t m = in_mask.size();
    std::vector<Mask> out_mask(m, 0);
    for (std::size_t v = 0; v < m; ++v) {
        if (!(alive & bit(v))) continue;
        Mask from = in_mask[v] & alive;
        while (from) {
            const std::size_t u = static_cast<std::size_t>(std::countr_zero(from));
            from &= from - 1;
            out_mask[u] |= bit(v);
        }
    }
    Mask result = 0;
    for (std::size_t s = 0; s < m; ++s) {
        if (!(alive & bit(s))) continue;
        Mask seen = bit(s);
        Mask frontier = seen;
        while (frontier) {
            Mask next = 0;
            Mask f = frontier;
            while (f) {
                const std::size_t u = static_cast<std::size_t>(std::countr_zero(f));
                f &= f - 1;
                next |= out_mask[u];
            }
            frontier = next & ~seen;
            seen |= next;
        }
        if ((seen & alive) == alive) result |= bit(s);
    }
    return result;
}

/// Lexicographic next k-combination of [0, n) in `c`; false after the last.
inline bool next_combination(std::vector<std::size_t>& c, std::size_t n) {
    const std::size_t k = c.size();
    for (std::size_t i = k; i-- > 0;) {
        if (c[i] < n - k + i) {
            ++c[i];
            for (std::size_t j = i + 1; j < k; ++j) c[j] = c[j - 1] + 1;
            return true;
        }
    }
    return false;
}

inline std::vector<std::size_t> first_combination(std::size_t k) {
    std::vector<std::size_t> c(k);
    for (std::size_t i = 0; i < k; ++i) c[i] = i;
    return c;
}

struct Reduction {
    Mask alive = 0;
    std::vector<std::size_t> nodes;
    /// Per surviving node: its remaining in-neighbors and the chosen removal combination.
    std::vector<std::vector<std::size_t>> candidates;
    std::vector<std::vector<std::size_t>> combos;
};

inline bool reduced_graph_passes(const Reduction& r, std::size_t m, std::size_t b, std::vector<Mask>& in_mask) {
    in_mask.assign(m, 0);
    for (std::size_t idx = 0; idx < r.nodes.size(); ++idx) {
        Mask keep = 0;
        for (std::size_t u : r.candidates[idx]) keep |= bit(u);
        for (std::size_t pos : r.combos[idx]) keep &= ~bit(r.candidates[idx][pos]);
        in_mask[r.nodes[idx]] = keep;
    }
    const Mask src = universal_sources(in_mask, r.alive);
    return static_cast<std::size_t>(std::popcount(src)) >= b + 1;
}

inline SourceWitness make_witness(const std::vector<std::size_t>& removed, const Reduction& r) {
    SourceWitness w;
    w.removed_nodes = removed;
    for (std::size_t idx = 0; idx < r.nodes.size(); ++idx)
        for (std::size_t pos : r.combos[idx]) w.removed_edges.emplace_back(r.candidates[idx][pos], r.nodes[idx]);
    return w;
}

inline Reduction prepare_reduction(const NetworkGraph& g, const std::vector<std::size_t>& removed) {
    Reduction r;
    Mask dead = 0;
    for (std::size_t f : removed) dead |= bit(f);
    for (std::size_t v = 0; v < g.size(); ++v) {
        if (dead & bit(v)) continue;
        r.alive |= bit(v);
        r.nodes.push_back(v);
        std::vector<std::size_t> cand;
        for (std::size_t u : g.in_neighbors(v))
            if (!(dead & bit(u))) cand.push_back(u);
        r.candidates.push_back(std::move(cand));
    }
    return r;
}

} // namespace detail

/// Number of reduced graphs the exhaustive check visits.
inline std::uint64_t source_component_workload(const NetworkGraph& g, std::size_t b) {
    const std::size_t m = g.size();
    if (b >= m) return 0;
    std::uint64_t total = 0;
    auto removed = detail::first_combination(b);
    do {
        const auto r = detail::prepare_reduction(g, removed);
        long double prod = 1;
        for (const auto& c : r.candidates) prod *= static_cast<long double>(detail::binomial(c.size(), std::min(b, c.size())));
        const long double sum = static_cast<long double>(total) + prod;
        total = sum > 1e18L ? static_cast<std::uint64_t>(1e18L) : static_cast<std::uint64_t>(sum);
    } while (detail::next_combination(removed, m));
    return total;
}

/**
 * Source-component condition: for every set of b removed nodes and every
 * choice of b incoming edges removed at each surviving node (all of them
 * when fewer than b remain), the reduced graph has a source component of
 * at least b+1 nodes with directed paths to every surviving node.
 *
 * Exhaustive mode visits removals in lexicographic order, so the witness
 * is the lexicographically smallest violating removal. Sampling mode only
 * ever answers falsified or unknown.
 */
inline SourceComponentResult check_source_component(const NetworkGraph& g, std::size_t b, SourceCheckMode mode = {}) {
    const std::size_t m = g.size();
    if (m > 64) throw std::invalid_argument("source-component check supports at most 64 nodes");
    SourceComponentResult res;
    if (b + 1 > m || 2 * b + 1 > m) {
        res.verdict = Verdict::falsified;
        res.witness = SourceWitness{};
        for (std::size_t i = 0; i < std::min(b, m); ++i) res.witness->removed_nodes.push_back(i);
        return res;
    }
    std::vector<detail::Mask> scratch;
    if (mode.exhaustive) {
        const std::uint64_t work = source_component_workload(g, b);
        if (work > mode.bound)
            throw std::invalid_argument("exhaustive source-component check needs " + std::to_string(work) +
                                        " reductions (bound " + std::to_string(mode.bound) +
                                        "); use the sampling mode instead");
        auto removed = detail::first_combination(b);
        do {
            auto r = detail::prepare_reduction(g, removed);
            for (const auto& c : r.candidates) r.combos.push_back(detail::first_combination(std::min(b, c.size())));
            while (true) {
                ++res.reductions_checked;
                if (!detail::reduced_graph_passes(r, m, b, scratch)) {
                    res.verdict = Verdict::falsified;
                    res.witness = detail::make_witness(removed, r);
                    return res;
                }
                // odometer over per-node combinations, last node fastest
                std::size_t idx = r.nodes.size();
                bool advanced = false;
                while (idx-- > 0) {
                    if (detail::next_combination(r.combos[idx], r.candidates[idx].size())) {
                        advanced = true;
                        break;
                    }
                    r.combos[idx] = detail::first_combination(r.combos[idx].size());
                }
                if (!advanced) break;
            }
        } while (detail::next_combination(removed, m));
        res.verdict = Verdict::certified;
        return res;
    }
    if (mode.samples == 0) throw std::invalid_argument("sampling mode requires samples > 0");
    SeededRng rng(mode.seed);
    for (std::size_t s = 0; s < mode.samples; ++s) {
        const auto removed = rng.choose(m, b);
        auto r = detail::prepare_reduction(g, removed);
        for (const auto& c : r.candidates) r.combos.push_back(rng.choose(c.size(), std::min(b, c.size())));
        ++res.reductions_checked;
        if (!detail::reduced_graph_passes(r, m, b, scratch)) {
            res.verdict = Verdict::falsified;
            res.witness = detail::make_witness(removed, r);
            return res;
        }
    }
    res.verdict = Verdict::unknown;
    return res;
}

// ---------------------------------------------------------------------------
// Partition condition

struct PartitionResult {
    bool pass = true;
    /// Failing bipartition (side containing node 0 first).
    std::optional<std::pair<std::vector<std::size_t>, std::vector<std::size_t>>> witness;
};

/// True when some node of `side` or of its complement has >= 2b+1 in-neighbors on the other side.
inline bool evaluate_partition(const NetworkGraph& g, const std::vector<std::size_t>& side, std::size_t b) {
    std::vector<bool> in_side(g.size(), false);
    for (std::size_t v : side) in_side.at(v) = true;
    bool left_ok = false;
    bool right_ok = false;
    for (std::size_t v = 0; v < g.size(); ++v) {
        std::size_t across = 0;
        for (std::size_t u : g.in_neighbors(v))
            if (in_side[u] != in_side[v]) ++across;
        if (across >= 2 * b + 1) (in_side[v] ? left_ok : right_ok) = true;
    }
    return left_ok || right_ok;
}

/**
 * Enumerates every bipartition {S, V\S} once (S holds node 0) and passes
 * iff each has, on at least one side, a node with 2b+1 or more
 * in-neighbors on the other side. The witness is the failing S with the
 * smallest bitmask.
 */
inline PartitionResult check_partition_condition(const NetworkGraph& g, std::size_t b) {
    const std::size_t m = g.size();
    if (m > 24) throw std::invalid_argument("partition check enumerates 2^M splits and supports M <= 24");
    PartitionResult res;
    if (m < 2) return res;
    std::vector<detail::Mask> in_mask(m, 0);
    for (std::size_t v = 0; v < m; ++v)
        for (std::size_t u : g.in_neighbors(v)) in_mask[v] |= detail::bit(u);
    const detail::Mask all = (detail::Mask{1} << m) - 1;
    const int need = static_cast<int>(2 * b + 1);
    for (detail::Mask s = 1; s < all; s += 2) {
        const detail::Mask other = all & ~s;
        bool ok = false;
        for (std::size_t v = 0; v < m && !ok; ++v) {
            const detail::Mask across = (s & detail::bit(v)) ? other : s;
            ok = std::popcount(in_mask[v] & across) >= need;
        }
        if (!ok) {
            res.pass = false;
            std::vector<std::size_t> left;
            std::vector<std::size_t> right;
            for (std::size_t v = 0; v < m; ++v) ((s & detail::bit(v)) ? left : right).push_back(v);
            res.witness.emplace(std::move(left), std::move(right));
            return res;
        }
    }
    return res;
}

// ---------------------------------------------------------------------------
// Graph files

/// First non-comment line is M, then one directed edge "u v" per line; '#' starts a comment.
inline NetworkGraph parse_graph(std::istream& in, const std::string& origin = "<graph>") {
    std::optional<NetworkGraph> g;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        long long a = 0;
        if (!(ls >> a)) {
            std::string rest;
            ls.clear();
            if (ls >> rest) throw std::invalid_argument(origin + ":" + std::to_string(lineno) + ": expected integers");
            continue;
        }
        if (!g) {
            std::string extra;
            if (a <= 0 || a > 4096 || (ls >> extra))
                throw std::invalid_argument(origin + ":" + std::to_string(lineno) + ": first line must be the node count M");
            g.emplace(static_cast<std::size_t>(a));
            continue;
        }
        long long c = 0;
        std::string extra;
        if (!(ls >> c) || (ls >> extra) || a < 0 || c < 0)
            throw std::invalid_argument(origin + ":" + std::to_string(lineno) + ": expected an edge 'u v'");
        try {
            g->add_edge(static_cast<std::size_t>(a), static_cast<std::size_t>(c));
        } catch (const std::exception& e) {
            throw std::invalid_argument(origin + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    if (!g) throw std::invalid_argument(origin + ": missing node count");
    return *g;
}

inline NetworkGraph load_graph(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open graph file " + path);
    return parse_graph(in, path);
}

inline std::string format_graph(const NetworkGraph& g) {
    std::string out = std::to_string(g.size()) + "\n";
    for (auto [u, v] : g.edges()) out += std::to_string(u) + " " + std::to_string(v) + "\n";
    return out;
}

} // namespace byzrl
