#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <boost/math/distributions/normal.hpp>

#include "byzrl/numeric.hpp"

namespace byzrl {

enum class DetectionFramework { bayesian_majority, neyman_pearson_majority };

/// How the Byzantine fraction alpha turns into Byzantine nodes in a trial.
enum class ByzantineMembership {
    /// Every node is Byzantine independently with probability alpha (per trial).
    bernoulli,
    /// Exactly floor(alpha*M) nodes are Byzantine.
    fixed_count,
};

/**
 * Q-ary detection over a star topology.
 *
 * Hypothesis q places the observation mean at (separation/sqrt 2) e_q in
 * R^Q, so any two hypotheses are `separation` apart and local decision
 * errors are symmetric across wrong labels.
 */
struct DetectionConfig {
    std::size_t Q = 2;
    std::size_t M = 25;
    double alpha = 0.0;
    std::size_t samples_per_node = 1;
    double separation = 2.0;
    std::size_t trials = 10000;
    DetectionFramework framework = DetectionFramework::bayesian_majority;
    ByzantineMembership membership = ByzantineMembership::bernoulli;
    /// Local false-alarm rate for the Neyman-Pearson framework (binary only).
    double local_false_alarm = 0.1;
};

struct DetectionResult {
    double alpha = 0.0;
    double error = 0.0;
    double stderr_ = 0.0;
    std::size_t trials = 0;
    std::uint64_t seed = 0;
};

inline void validate_detection(const DetectionConfig& cfg) {
    if (cfg.Q < 2) throw std::invalid_argument("detection requires Q >= 2");
    if (cfg.M == 0) throw std::invalid_argument("detection requires M >= 1");
    if (!(cfg.alpha >= 0.0 && cfg.alpha <= 1.0)) throw std::invalid_argument("alpha must lie in [0, 1]");
    if (!(cfg.separation > 0.0)) throw std::invalid_argument("separation must be positive");
    if (cfg.samples_per_node == 0) throw std::invalid_argument("samples_per_node must be positive");
    if (cfg.trials == 0) throw std::invalid_argument("trials must be positive");
    if (cfg.framework == DetectionFramework::neyman_pearson_majority && cfg.Q != 2)
        throw std::invalid_argument("the Neyman-Pearson framework is binary (Q = 2)");
    if (!(cfg.local_false_alarm > 0.0 && cfg.local_false_alarm < 1.0))
        throw std::invalid_argument("local_false_alarm must lie in (0, 1)");
}

inline std::size_t fixed_byzantine_count(double alpha, std::size_t m) {
    return static_cast<std::size_t>(std::floor(alpha * static_cast<double>(m) + 1e-9));
}

/// Probability that a single honest node decides wrongly.
inline double local_error_probability(const DetectionConfig& cfg) {
    const boost::math::normal_distribution<double> unit;
    const double spread = std::sqrt(2.0 / static_cast<double>(cfg.samples_per_node));
    const double a = cfg.separation / std::sqrt(2.0);
    if (cfg.Q == 2) {
        if (cfg.framework == DetectionFramework::neyman_pearson_majority) {
            const double tau = -a + spread * boost::math::quantile(boost::math::complement(unit, cfg.local_false_alarm));
            const double miss = boost::math::cdf(unit, (tau - a) / spread);
            return 0.5 * (cfg.local_false_alarm + miss);
        }
        return boost::math::cdf(unit, -cfg.separation / (2.0 * std::sqrt(1.0 / cfg.samples_per_node)));
    }
    return std::numeric_limits<double>::quiet_NaN();
}

namespace detail {

/// Local decision of one node from its averaged observation.
inline std::size_t local_decision(const DetectionConfig& cfg, std::size_t truth, SeededRng& rng, double np_threshold) {
    const double a = cfg.separation / std::sqrt(2.0);
    const double sd = 1.0 / std::sqrt(static_cast<double>(cfg.samples_per_node));
    if (cfg.Q == 2 && cfg.framework == DetectionFramework::neyman_pearson_majority) {
        const double x0 = (truth == 0 ? a : 0.0) + sd * rng.normal();
        const double x1 = (truth == 1 ? a : 0.0) + sd * rng.normal();
        return x1 - x0 > np_threshold ? 1 : 0;
    }
    std::size_t best = 0;
    double best_x = -std::numeric_limits<double>::infinity();
    for (std::size_t q = 0; q < cfg.Q; ++q) {
        const double x = (q == truth ? a : 0.0) + sd * rng.normal();
        if (x > best_x) {
            best_x = x;
            best = q;
        }
    }
    return best;
}

} // namespace detail

/**
 * Monte-Carlo error probability of plurality fusion under Byzantine
 * reports. Honest nodes send their local decision; Byzantine nodes send a
 * label drawn uniformly from the Q-1 labels other than their own local
 * decision (a deterministic flip when Q = 2). Trial k uses the stream
 * derived from (seed, k).
 */
inline DetectionResult simulate_detection(const DetectionConfig& cfg, std::uint64_t seed) {
    validate_detection(cfg);
    double np_threshold = 0.0;
    if (cfg.framework == DetectionFramework::neyman_pearson_majority) {
        const boost::math::normal_distribution<double> unit;
        const double spread = std::sqrt(2.0 / static_cast<double>(cfg.samples_per_node));
        np_threshold = -cfg.separation / std::sqrt(2.0) +
                       spread * boost::math::quantile(boost::math::complement(unit, cfg.local_false_alarm));
    }
    const std::size_t fixed = fixed_byzantine_count(cfg.alpha, cfg.M);
    std::size_t errors = 0;
    std::vector<std::size_t> votes(cfg.Q);
    std::vector<std::size_t> leaders;
    for (std::size_t trial = 0; trial < cfg.trials; ++trial) {
        SeededRng rng = SeededRng::derive(seed, trial);
        const std::size_t truth = rng.below(cfg.Q);
        std::fill(votes.begin(), votes.end(), 0);
        for (std::size_t node = 0; node < cfg.M; ++node) {
            const bool byzantine = cfg.membership == ByzantineMembership::bernoulli ? rng.uniform01() < cfg.alpha
                                                                                   : node < fixed;
            std::size_t report = detail::local_decision(cfg, truth, rng, np_threshold);
            if (byzantine) {
                std::size_t wrong = rng.below(cfg.Q - 1);
                if (wrong >= report) ++wrong;
                report = wrong;
            }
            ++votes[report];
        }
        const std::size_t top = *std::max_element(votes.begin(), votes.end());
        leaders.clear();
        for (std::size_t q = 0; q < cfg.Q; ++q)
            if (votes[q] == top) leaders.push_back(q);
        const std::size_t fused = leaders.size() == 1 ? leaders.front() : leaders[rng.below(leaders.size())];
        if (fused != truth) ++errors;
    }
    DetectionResult res;
    res.alpha = cfg.alpha;
    res.trials = cfg.trials;
    res.seed = seed;
    res.error = static_cast<double>(errors) / static_cast<double>(cfg.trials);
    res.stderr_ = std::sqrt(std::max(res.error * (1.0 - res.error), 1.0 / cfg.trials) / static_cast<double>(cfg.trials));
    return res;
}

/// One simulate_detection per alpha, seeded by (seed, position in the list).
inline std::vector<DetectionResult> sweep_alpha(DetectionConfig cfg, const std::vector<double>& alphas,
                                                std::uint64_t seed) {
    for (std::size_t i = 0; i < alphas.size(); ++i) {
        if (!(alphas[i] >= 0.0 && alphas[i] <= 1.0)) throw std::invalid_argument("alphas must lie in [0, 1]");
        if (i > 0 && alphas[i] < alphas[i - 1]) throw std::invalid_argument("alphas must be sorted");
    }
    std::vector<DetectionResult> rows;
    for (std::size_t i = 0; i < alphas.size(); ++i) {
        cfg.alpha = alphas[i];
        rows.push_back(simulate_detection(cfg, SeededRng::mix(seed ^ SeededRng::mix(i + 1))));
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Least-squares estimation breakdown

struct EstimationConfig {
    std::size_t M = 8;
    std::size_t byz_count = 2;
    double outlier_magnitude = 50.0;
    double noise_sigma = 1.0;
    ModelVector w_star{1.0, 0.5};
};

struct EstimationResult {
    double clean_mse = 0.0;
    double attacked_mse = 0.0;
    ModelVector w_hat_clean;
    ModelVector w_hat_attacked;
    std::vector<double> x;
    std::vector<double> y_clean;
    std::vector<double> y_attacked;
    std::vector<std::size_t> byzantine;
};

/**
 * Line fit with h_j = [x_j, 1], x_j equally spaced in [-1, 1]. The
 * Byzantine nodes report h_j.w_star + outlier_magnitude instead of their
 * observation; both fits are ordinary least squares.
 */
inline EstimationResult simulate_estimation_breakdown(const EstimationConfig& cfg, SeededRng& rng) {
    if (cfg.M < 2) throw std::invalid_argument("estimation requires at least two nodes");
    if (cfg.byz_count >= cfg.M) throw std::invalid_argument("estimation requires byz_count < M");
    if (cfg.w_star.size() != 2) throw DimensionError("line-fit estimation uses a two-dimensional model");
    EstimationResult res;
    std::vector<double> h;
    for (std::size_t j = 0; j < cfg.M; ++j) {
        const double x = -1.0 + 2.0 * static_cast<double>(j) / static_cast<double>(cfg.M - 1);
        res.x.push_back(x);
        h.push_back(x);
        h.push_back(1.0);
        const double clean = x * cfg.w_star[0] + cfg.w_star[1];
        res.y_clean.push_back(clean + (cfg.noise_sigma > 0 ? cfg.noise_sigma * rng.normal() : 0.0));
    }
    res.byzantine = rng.choose(cfg.M, cfg.byz_count);
    res.y_attacked = res.y_clean;
    for (std::size_t j : res.byzantine)
        res.y_attacked[j] = res.x[j] * cfg.w_star[0] + cfg.w_star[1] + cfg.outlier_magnitude;
    const DenseMatrix design(cfg.M, 2, h);
    res.w_hat_clean = solve_least_squares(design, ModelVector(res.y_clean));
    res.w_hat_attacked = solve_least_squares(design, ModelVector(res.y_attacked));
    res.clean_mse = squared_distance(res.w_hat_clean, cfg.w_star);
    res.attacked_mse = squared_distance(res.w_hat_attacked, cfg.w_star);
    return res;
}

} // namespace byzrl
