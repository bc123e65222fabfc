#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace byzrl {

/// Raised when an arithmetic result leaves the finite doubles.
class NumericError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class RankDeficientError : public std::runtime_error {
public:
    RankDeficientError(std::size_t rank, std::size_t cols)
        : std::runtime_error("least-squares system is rank deficient: numerical rank " + std::to_string(rank) +
                             " < " + std::to_string(cols) + " columns"),
          rank_(rank) {}
    std::size_t rank() const noexcept { return rank_; }

private:
    std::size_t rank_;
};

/**
 * Dense real vector used for models, gradients and messages.
 *
 * Entries are immutable after construction and always finite; every
 * arithmetic helper below re-validates its result.
 */
class ModelVector {
public:
    ModelVector() = default;
    explicit ModelVector(std::vector<double> entries) : entries_(std::move(entries)) { validate(); }
    ModelVector(std::initializer_list<double> entries) : entries_(entries) { validate(); }

    static ModelVector zeros(std::size_t dim) { return ModelVector(std::vector<double>(dim, 0.0)); }
    static ModelVector filled(std::size_t dim, double value) { return ModelVector(std::vector<double>(dim, value)); }

    std::size_t size() const noexcept { return entries_.size(); }
    bool empty() const noexcept { return entries_.empty(); }
    double operator[](std::size_t i) const { return entries_[i]; }
    std::span<const double> values() const noexcept { return entries_; }
    const std::vector<double>& data() const noexcept { return entries_; }
    auto begin() const noexcept { return entries_.begin(); }
    auto end() const noexcept { return entries_.end(); }

    friend bool operator==(const ModelVector&, const ModelVector&) = default;

private:
    void validate() const {
        for (double v : entries_)
            if (!std::isfinite(v)) throw NumericError("ModelVector entry is not finite");
    }

    std::vector<double> entries_;
};

namespace detail {
inline void require_same_dim(const ModelVector& a, const ModelVector& b) {
    if (a.size() != b.size())
        throw DimensionError("dimension mismatch: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
}
inline double checked(double v) {
    if (!std::isfinite(v)) throw NumericError("non-finite scalar result");
    return v;
}
} // namespace detail

inline ModelVector add(const ModelVector& a, const ModelVector& b) {
    detail::require_same_dim(a, b);
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
    return ModelVector(std::move(out));
}

inline ModelVector subtract(const ModelVector& a, const ModelVector& b) {
    detail::require_same_dim(a, b);
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
    return ModelVector(std::move(out));
}

inline ModelVector scale(const ModelVector& a, double s) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = s * a[i];
    return ModelVector(std::move(out));
}

/// a + s * b
inline ModelVector axpy(const ModelVector& a, double s, const ModelVector& b) {
    detail::require_same_dim(a, b);
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + s * b[i];
    return ModelVector(std::move(out));
}

inline double dot(const ModelVector& a, const ModelVector& b) {
    detail::require_same_dim(a, b);
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return detail::checked(acc);
}

inline double squared_distance(const ModelVector& a, const ModelVector& b) {
    detail::require_same_dim(a, b);
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double diff = a[i] - b[i];
        acc += diff * diff;
    }
    return detail::checked(acc);
}

inline double l2_norm(const ModelVector& a) {
    double acc = 0.0;
    for (double v : a) acc += v * v;
    return detail::checked(std::sqrt(acc));
}

inline ModelVector operator+(const ModelVector& a, const ModelVector& b) { return add(a, b); }
inline ModelVector operator-(const ModelVector& a, const ModelVector& b) { return subtract(a, b); }
inline ModelVector operator*(double s, const ModelVector& a) { return scale(a, s); }

/// Row-major dense matrix with finite entries.
class DenseMatrix {
public:
    DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> entries)
        : rows_(rows), cols_(cols), entries_(std::move(entries)) {
        if (rows_ == 0 || cols_ == 0) throw DimensionError("matrix dimensions must be positive");
        if (entries_.size() != rows_ * cols_) throw DimensionError("matrix entry count does not match rows*cols");
        for (double v : entries_)
            if (!std::isfinite(v)) throw NumericError("matrix entry is not finite");
    }
    DenseMatrix(std::initializer_list<std::initializer_list<double>> rows)
        : DenseMatrix(rows.size(), rows.size() ? rows.begin()->size() : 0, flatten(rows)) {}

    static DenseMatrix identity(std::size_t n) {
        std::vector<double> e(n * n, 0.0);
        for (std::size_t i = 0; i < n; ++i) e[i * n + i] = 1.0;
        return DenseMatrix(n, n, std::move(e));
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    double operator()(std::size_t r, std::size_t c) const { return entries_[r * cols_ + c]; }
    std::span<const double> row(std::size_t r) const { return {entries_.data() + r * cols_, cols_}; }
    const std::vector<double>& data() const noexcept { return entries_; }

private:
    static std::vector<double> flatten(std::initializer_list<std::initializer_list<double>> rows) {
        std::vector<double> out;
        const std::size_t cols = rows.size() ? rows.begin()->size() : 0;
        for (const auto& r : rows) {
            if (r.size() != cols) throw DimensionError("ragged matrix initializer");
            out.insert(out.end(), r.begin(), r.end());
        }
        return out;
    }

    std::size_t rows_;
    std::size_t cols_;
    std::vector<double> entries_;
};

inline ModelVector multiply(const DenseMatrix& a, const ModelVector& x) {
    if (a.cols() != x.size()) throw DimensionError("matrix-vector dimension mismatch");
    std::vector<double> out(a.rows(), 0.0);
    for (std::size_t r = 0; r < a.rows(); ++r) {
        double acc = 0.0;
        for (std::size_t c = 0; c < a.cols(); ++c) acc += a(r, c) * x[c];
        out[r] = acc;
    }
    return ModelVector(std::move(out));
}

inline ModelVector multiply_transposed(const DenseMatrix& a, const ModelVector& y) {
    if (a.rows() != y.size()) throw DimensionError("transposed matrix-vector dimension mismatch");
    std::vector<double> out(a.cols(), 0.0);
    for (std::size_t r = 0; r < a.rows(); ++r)
        for (std::size_t c = 0; c < a.cols(); ++c) out[c] += a(r, c) * y[r];
    return ModelVector(std::move(out));
}

/**
 * SplitMix64 generator.
 *
 * state_{k+1} = state_k + 0x9e3779b97f4a7c15 and the output is the
 * standard SplitMix64 finalizer applied to state_{k+1}. Floating-point
 * draws use the top 53 bits; normals use Box-Muller (cosine branch only,
 * two raw draws per normal). The stream is therefore reproducible in any
 * language with 64-bit unsigned arithmetic.
 */
class SeededRng {
public:
    explicit SeededRng(std::uint64_t seed = 0) noexcept : seed_(seed), state_(seed) {}

    static constexpr std::uint64_t mix(std::uint64_t z) noexcept {
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// Independent stream keyed by (seed, stream id).
    static SeededRng derive(std::uint64_t seed, std::uint64_t stream) noexcept {
        return SeededRng(mix(seed ^ mix(stream + 0x9e3779b97f4a7c15ULL)));
    }
    SeededRng derive(std::uint64_t stream) const noexcept { return derive(seed_, stream); }

    std::uint64_t seed() const noexcept { return seed_; }

    std::uint64_t next_u64() noexcept {
        state_ += 0x9e3779b97f4a7c15ULL;
        return mix(state_);
    }

    /// Uniform on the open interval (0, 1).
    double uniform01() noexcept { return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53; }

    /// Uniform on the open interval (lo, hi); requires lo < hi.
    double uniform(double lo, double hi) noexcept {
        double v = lo + (hi - lo) * uniform01();
        if (v >= hi) v = std::nextafter(hi, lo);
        if (v <= lo) v = std::nextafter(lo, hi);
        return v;
    }

    /// Uniform integer in [0, n); n > 0.
    std::uint64_t below(std::uint64_t n) noexcept {
        return static_cast<std::uint64_t>((static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    double normal() noexcept {
        const double u1 = uniform01();
        const double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    /// k distinct indices from [0, n) in ascending order (partial Fisher-Yates).
    std::vector<std::size_t> choose(std::size_t n, std::size_t k) {
        std::vector<std::size_t> pool(n);
        for (std::size_t i = 0; i < n; ++i) pool[i] = i;
        k = std::min(k, n);
        for (std::size_t i = 0; i < k; ++i) std::swap(pool[i], pool[i + below(n - i)]);
        pool.resize(k);
        std::sort(pool.begin(), pool.end());
        return pool;
    }

private:
    std::uint64_t seed_;
    std::uint64_t state_;
};

/**
 * argmin_w ||y - H w||_2 by Householder QR.
 *
 * Throws RankDeficientError when a diagonal entry of R falls below
 * 1e-10 times the largest column norm of H.
 */
inline ModelVector solve_least_squares(const DenseMatrix& h, const ModelVector& y) {
    const std::size_t m = h.rows();
    const std::size_t n = h.cols();
    if (y.size() != m) throw DimensionError("least squares: y has " + std::to_string(y.size()) + " rows, H has " +
                                            std::to_string(m));
    if (m < n) throw DimensionError("least squares requires rows >= cols");

    std::vector<double> a = h.data();
    std::vector<double> rhs = y.data();
    auto at = [&](std::size_t r, std::size_t c) -> double& { return a[r * n + c]; };

    double max_col_norm = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
        double s = 0.0;
        for (std::size_t r = 0; r < m; ++r) s += at(r, c) * at(r, c);
        max_col_norm = std::max(max_col_norm, std::sqrt(s));
    }
    const double tol = 1e-10 * max_col_norm;

    std::vector<double> v(m);
    std::size_t rank = 0;
    bool deficient = false;
    for (std::size_t k = 0; k < n; ++k) {
        double norm = 0.0;
        for (std::size_t r = k; r < m; ++r) norm += at(r, k) * at(r, k);
        norm = std::sqrt(norm);
        if (norm <= tol) {
            deficient = true;
            continue;
        }
        ++rank;
        const double alpha = at(k, k) > 0 ? -norm : norm;
        for (std::size_t r = k; r < m; ++r) v[r] = at(r, k);
        v[k] -= alpha;
        double vnorm2 = 0.0;
        for (std::size_t r = k; r < m; ++r) vnorm2 += v[r] * v[r];
        if (vnorm2 == 0.0) continue;
        for (std::size_t c = k; c < n; ++c) {
            double s = 0.0;
            for (std::size_t r = k; r < m; ++r) s += v[r] * at(r, c);
            s = 2.0 * s / vnorm2;
            for (std::size_t r = k; r < m; ++r) at(r, c) -= s * v[r];
        }
        double s = 0.0;
        for (std::size_t r = k; r < m; ++r) s += v[r] * rhs[r];
        s = 2.0 * s / vnorm2;
        for (std::size_t r = k; r < m; ++r) rhs[r] -= s * v[r];
    }
    if (deficient) throw RankDeficientError(rank, n);

    std::vector<double> w(n);
    for (std::size_t kk = n; kk-- > 0;) {
        double s = rhs[kk];
        for (std::size_t c = kk + 1; c < n; ++c) s -= at(kk, c) * w[c];
        w[kk] = s / at(kk, kk);
    }
    return ModelVector(std::move(w));
}

/**
 * Compare an analytic gradient against central differences.
 *
 * Returns max_k |fd_k - g_k| / (|g_k| + eps) with fd_k the central
 * difference of step eps along coordinate k.
 */
template <class Loss, class Grad>
double finite_difference_check(Loss&& loss, Grad&& grad, const ModelVector& w, double eps) {
    if (!(eps > 0.0 && eps <= 1e-2)) throw std::invalid_argument("finite difference step must lie in (0, 1e-2]");
    const ModelVector g = grad(w);
    if (g.size() != w.size()) throw DimensionError("gradient dimension differs from the point");
    std::vector<double> probe = w.data();
    double worst = 0.0;
    for (std::size_t k = 0; k < w.size(); ++k) {
        const double saved = probe[k];
        probe[k] = saved + eps;
        const double up = loss(ModelVector(probe));
        probe[k] = saved - eps;
        const double down = loss(ModelVector(probe));
        probe[k] = saved;
        if (!std::isfinite(up) || !std::isfinite(down))
            throw NumericError("loss is not finite at a finite-difference probe");
        const double fd = (up - down) / (2.0 * eps);
        worst = std::max(worst, std::abs(fd - g[k]) / (std::abs(g[k]) + eps));
    }
    return worst;
}

} // namespace byzrl
