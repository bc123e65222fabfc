#pragma once

// Brute-force reference implementations used only by the tests. They share
// no code with the library beyond ModelVector and SeededRng.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <tuple>
#include <vector>

#include "byzrl/numeric.hpp"

namespace oracle {

using byzrl::ModelVector;
using Vecs = std::vector<ModelVector>;

/// Average summed in ascending order; the result is kept inside [min, max] of the values.
inline double avg_sorted(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    double s = 0.0;
    for (double x : v) s += x;
    const double a = s / static_cast<double>(v.size());
    return a < v.front() ? v.front() : (a > v.back() ? v.back() : a);
}

inline std::vector<double> column(const Vecs& in, const std::vector<std::size_t>& idx, std::size_t k) {
    std::vector<double> c;
    for (std::size_t i : idx) c.push_back(in[i][k]);
    return c;
}

inline std::vector<std::size_t> iota(std::size_t n) {
    std::vector<std::size_t> v(n);
    std::iota(v.begin(), v.end(), std::size_t{0});
    return v;
}

inline ModelVector mean_of(const Vecs& in, const std::vector<std::size_t>& idx) {
    std::vector<double> out(in.front().size());
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = avg_sorted(column(in, idx, k));
    return ModelVector(out);
}

inline ModelVector mean(const Vecs& in) { return mean_of(in, iota(in.size())); }

inline ModelVector median(const Vecs& in) {
    std::vector<double> out(in.front().size());
    for (std::size_t k = 0; k < out.size(); ++k) {
        auto c = column(in, iota(in.size()), k);
        std::sort(c.begin(), c.end());
        const std::size_t n = c.size();
        out[k] = n % 2 ? c[n / 2] : (c[n / 2 - 1] + c[n / 2]) / 2.0;
    }
    return ModelVector(out);
}

inline ModelVector trimmed(const Vecs& in, std::size_t b) {
    std::vector<double> out(in.front().size());
    for (std::size_t k = 0; k < out.size(); ++k) {
        auto c = column(in, iota(in.size()), k);
        std::sort(c.begin(), c.end());
        std::vector<double> kept(c.begin() + static_cast<long>(b), c.end() - static_cast<long>(b));
        out[k] = avg_sorted(kept);
    }
    return ModelVector(out);
}

/// true when a precedes c in (lexicographic entries, index) order
inline bool canonical_less(const Vecs& in, std::size_t a, std::size_t c) {
    const auto& x = in[a].data();
    const auto& y = in[c].data();
    if (x != y) return std::lexicographical_compare(x.begin(), x.end(), y.begin(), y.end());
    return a < c;
}

inline double sqdist(const ModelVector& a, const ModelVector& b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
    return s;
}

/// Krum winner among `active`: minimal score, ties to the canonically smallest input.
inline std::size_t krum_winner(const Vecs& in, const std::vector<std::size_t>& active, std::size_t b) {
    const std::size_t n = active.size();
    const long near = std::clamp<long>(static_cast<long>(n) - static_cast<long>(b) - 2, 0, static_cast<long>(n) - 1);
    std::size_t best = active.front();
    double best_score = INFINITY;
    for (std::size_t i : active) {
        std::vector<double> d;
        for (std::size_t j : active)
            if (j != i) d.push_back(sqdist(in[std::min(i, j)], in[std::max(i, j)]));
        std::sort(d.begin(), d.end());
        double s = 0.0;
        for (long r = 0; r < near; ++r) s += d[static_cast<std::size_t>(r)];
        if (s < best_score || (s == best_score && canonical_less(in, i, best))) {
            best = i;
            best_score = s;
        }
    }
    return best;
}

inline std::vector<std::size_t> sequential_krum(const Vecs& in, std::size_t b, std::size_t rounds) {
    std::vector<std::size_t> active = iota(in.size());
    std::vector<std::size_t> chosen;
    for (std::size_t r = 0; r < rounds; ++r) {
        const std::size_t w = krum_winner(in, active, b);
        chosen.push_back(w);
        active.erase(std::find(active.begin(), active.end(), w));
    }
    std::sort(chosen.begin(), chosen.end());
    return chosen;
}

inline ModelVector krum(const Vecs& in, std::size_t b) { return in[krum_winner(in, iota(in.size()), b)]; }

inline ModelVector multi_krum(const Vecs& in, std::size_t b, std::size_t m) {
    return mean_of(in, sequential_krum(in, b, m));
}

inline ModelVector bulyan(const Vecs& in, std::size_t b) {
    const std::size_t n = in.size();
    const auto sel = sequential_krum(in, b, n - 2 * b);
    const std::size_t beta = n - 4 * b;
    std::vector<double> out(in.front().size());
    for (std::size_t k = 0; k < out.size(); ++k) {
        std::vector<std::pair<double, std::size_t>> c;
        for (std::size_t i : sel) c.emplace_back(in[i][k], i);
        std::sort(c.begin(), c.end());
        const std::size_t m = c.size();
        const double med = m % 2 ? c[m / 2].first : (c[m / 2 - 1].first + c[m / 2].first) / 2.0;
        std::sort(c.begin(), c.end(), [&](const auto& x, const auto& y) {
            return std::make_tuple(std::abs(x.first - med), x.first, x.second) <
                   std::make_tuple(std::abs(y.first - med), y.first, y.second);
        });
        std::vector<double> kept;
        for (std::size_t r = 0; r < beta; ++r) kept.push_back(c[r].first);
        out[k] = avg_sorted(kept);
    }
    return ModelVector(out);
}

inline ModelVector zeno(const Vecs& in, const ModelVector& oracle_grad, std::size_t b) {
    std::vector<std::size_t> idx = iota(in.size());
    std::vector<double> score(in.size());
    for (std::size_t i = 0; i < in.size(); ++i) score[i] = -sqdist(in[i], oracle_grad);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t c) {
        if (score[a] != score[c]) return score[a] > score[c];
        return canonical_less(in, a, c);
    });
    idx.resize(in.size() - b);
    return mean_of(in, idx);
}

inline ModelVector sign_majority(const Vecs& in) {
    std::vector<double> out(in.front().size());
    for (std::size_t k = 0; k < out.size(); ++k) {
        int pos = 0;
        int neg = 0;
        for (const auto& v : in) {
            pos += v[k] > 0;
            neg += v[k] < 0;
        }
        out[k] = pos > neg ? 1.0 : (neg > pos ? -1.0 : 0.0);
    }
    return ModelVector(out);
}

inline double geomed_objective(const Vecs& in, const ModelVector& y) {
    double f = 0.0;
    for (const auto& p : in) f += std::sqrt(sqdist(p, y));
    return f;
}

/// Approximate geometric median minimum: many Weiszfeld steps from the mean, best of iterates and input points.
inline double geomed_min(const Vecs& in) {
    double best = INFINITY;
    for (const auto& p : in) best = std::min(best, geomed_objective(in, p));
    std::vector<double> y = mean(in).data();
    for (int it = 0; it < 20000; ++it) {
        std::vector<double> num(y.size(), 0.0);
        double den = 0.0;
        bool hit = false;
        for (const auto& p : in) {
            double r = 0.0;
            for (std::size_t k = 0; k < y.size(); ++k) r += (y[k] - p[k]) * (y[k] - p[k]);
            r = std::sqrt(r);
            if (r < 1e-300) {
                hit = true;
                break;
            }
            for (std::size_t k = 0; k < y.size(); ++k) num[k] += p[k] / r;
            den += 1.0 / r;
        }
        if (hit) break;
        for (std::size_t k = 0; k < y.size(); ++k) y[k] = num[k] / den;
        best = std::min(best, geomed_objective(in, ModelVector(y)));
    }
    return best;
}

/// Sort-slice trimmed consensus.
inline double trimmed_scalar(std::vector<double> v, std::size_t b) {
    std::sort(v.begin(), v.end());
    return avg_sorted(std::vector<double>(v.begin() + static_cast<long>(b), v.end() - static_cast<long>(b)));
}

/// x^{t} = W^t x^0 for scalar node values, by explicit repeated matrix-vector products.
inline std::vector<double> matrix_power_apply(const std::vector<std::vector<double>>& w, std::vector<double> x,
                                              std::size_t t) {
    for (std::size_t s = 0; s < t; ++s) {
        std::vector<double> y(x.size(), 0.0);
        for (std::size_t j = 0; j < x.size(); ++j)
            for (std::size_t i = 0; i < x.size(); ++i) y[j] += w[j][i] * x[i];
        x = y;
    }
    return x;
}

/// Exact fusion error for binary detection with fixed Byzantine set size, by enumeration of all report patterns.
/// p = local error probability of one node; byz nodes flip their local decision; tie broken uniformly.
inline double exact_binary_fusion_error(std::size_t m, std::size_t byz, double p) {
    double err = 0.0;
    const std::size_t patterns = std::size_t{1} << m;
    for (std::size_t mask = 0; mask < patterns; ++mask) {
        // bit i set: node i's local decision is wrong
        double prob = 1.0;
        std::size_t wrong_votes = 0;
        for (std::size_t i = 0; i < m; ++i) {
            const bool local_wrong = (mask >> i) & 1U;
            prob *= local_wrong ? p : 1.0 - p;
            const bool reports_wrong = i < byz ? !local_wrong : local_wrong;
            wrong_votes += reports_wrong;
        }
        const std::size_t right_votes = m - wrong_votes;
        if (wrong_votes > right_votes) err += prob;
        else if (wrong_votes == right_votes) err += 0.5 * prob;
    }
    return err;
}

/// Same, Byzantine membership i.i.d. Bernoulli(alpha) per node, by enumeration over (local error, membership).
inline double exact_binary_fusion_error_bernoulli(std::size_t m, double alpha, double p) {
    // each node reports wrong with probability q = (1-alpha) p + alpha (1-p), independently
    const double q = (1.0 - alpha) * p + alpha * (1.0 - p);
    double err = 0.0;
    const std::size_t patterns = std::size_t{1} << m;
    for (std::size_t mask = 0; mask < patterns; ++mask) {
        double prob = 1.0;
        std::size_t wrong = 0;
        for (std::size_t i = 0; i < m; ++i) {
            const bool w = (mask >> i) & 1U;
            prob *= w ? q : 1.0 - q;
            wrong += w;
        }
        if (2 * wrong > m) err += prob;
        else if (2 * wrong == m) err += 0.5 * prob;
    }
    return err;
}

} // namespace oracle
