#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "byzrl/numeric.hpp"

namespace byzrl {

enum class TaskKind { quadratic, linear_regression, softmax_classification, estimation_fig3 };

inline std::string_view task_name(TaskKind k) {
    switch (k) {
    case TaskKind::quadratic: return "quadratic";
    case TaskKind::linear_regression: return "linear_regression";
    case TaskKind::softmax_classification: return "softmax";
    case TaskKind::estimation_fig3: return "estimation_fig3";
    }
    return "?";
}

inline std::optional<TaskKind> parse_task(std::string_view name) {
    for (auto k : {TaskKind::quadratic, TaskKind::linear_regression, TaskKind::softmax_classification,
                   TaskKind::estimation_fig3})
        if (task_name(k) == name) return k;
    if (name == "softmax_classification") return TaskKind::softmax_classification;
    return std::nullopt;
}

/**
 * Learning task description.
 *
 * quadratic:  f(w, z) = 1/2 |w - z|^2 with z ~ N(w_star, noise_sigma^2 I)
 * linear:     f(w, (h, y)) = 1/2 (h.w - y)^2, h ~ N(0, I), y = h.w_star + noise
 * softmax:    cross entropy of a linear model (class-major weights,
 *             d = class_count * features) plus lambda/2 |w|^2; features are
 *             drawn around class means on a sphere of radius class_separation
 *             with isotropic spread feature_scale.
 * estimation_fig3: linear with d = 2, h = [x, 1], x equally spaced in [-1, 1].
 */
struct TaskSpec {
    TaskKind kind = TaskKind::quadratic;
    std::size_t dim = 2;
    double noise_sigma = 1.0;
    double lambda = 1e-2;
    std::optional<ModelVector> w_star;
    std::size_t class_count = 10;
    double class_separation = 3.0;
    double feature_scale = 1.0;
    std::vector<ModelVector> class_means;

    std::size_t feature_dim() const {
        if (kind == TaskKind::softmax_classification) return dim / class_count;
        return dim;
    }
};

struct IndexRange {
    std::size_t begin = 0;
    std::size_t end = 0;
    std::size_t size() const { return end - begin; }
};

/// Flat sample store; node j owns samples [partition[j].begin, partition[j].end).
struct Dataset {
    std::size_t feature_dim = 0;
    std::vector<double> features;
    std::vector<double> labels;
    std::vector<IndexRange> partition;
    std::vector<std::string> warnings;

    std::size_t size() const { return labels.size(); }
    std::span<const double> x(std::size_t i) const { return {features.data() + i * feature_dim, feature_dim}; }
    double label(std::size_t i) const { return labels[i]; }
    std::vector<std::size_t> node_indices(std::size_t node) const {
        std::vector<std::size_t> idx;
        for (std::size_t i = partition[node].begin; i < partition[node].end; ++i) idx.push_back(i);
        return idx;
    }
    std::vector<std::size_t> all_indices() const {
        std::vector<std::size_t> idx(size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        return idx;
    }
};

namespace detail {

inline void uniform_partition(Dataset& data, std::size_t nodes, std::size_t per_node) {
    data.partition.clear();
    for (std::size_t j = 0; j < nodes; ++j) data.partition.push_back({j * per_node, (j + 1) * per_node});
}

inline void validate_spec(const TaskSpec& spec) {
    if (spec.dim == 0) throw std::invalid_argument("task dimension must be positive");
    if (spec.noise_sigma < 0.0) throw std::invalid_argument("noise_sigma must be non-negative");
    if (spec.lambda < 0.0) throw std::invalid_argument("lambda must be non-negative");
    if (spec.kind == TaskKind::softmax_classification) {
        if (spec.class_count < 2) throw std::invalid_argument("softmax task requires class_count >= 2");
        if (spec.dim % spec.class_count != 0)
            throw std::invalid_argument("softmax task dimension must be a multiple of class_count");
        if (!(spec.lambda > 0.0)) throw std::invalid_argument("softmax task requires lambda > 0");
    }
    if (spec.kind == TaskKind::estimation_fig3 && spec.dim != 2)
        throw std::invalid_argument("estimation_fig3 task is two dimensional");
    if (spec.w_star && spec.w_star->size() != spec.dim)
        throw DimensionError("w_star dimension does not match the task dimension");
}

} // namespace detail

/// Fills class_means (if empty) with random directions scaled to class_separation.
inline TaskSpec resolve_class_means(TaskSpec spec, SeededRng& rng) {
    if (spec.kind != TaskKind::softmax_classification || !spec.class_means.empty()) return spec;
    detail::validate_spec(spec);
    const std::size_t p = spec.feature_dim();
    for (std::size_t c = 0; c < spec.class_count; ++c) {
        std::vector<double> m(p);
        double norm = 0.0;
        while (norm == 0.0) {
            norm = 0.0;
            for (double& v : m) {
                v = rng.normal();
                norm += v * v;
            }
            norm = std::sqrt(norm);
        }
        for (double& v : m) v = spec.class_separation * v / norm;
        spec.class_means.emplace_back(std::move(m));
    }
    return spec;
}

inline Dataset generate_linear_data(const TaskSpec& spec, std::size_t nodes, std::size_t per_node, SeededRng& rng) {
    detail::validate_spec(spec);
    if (spec.kind != TaskKind::linear_regression && spec.kind != TaskKind::estimation_fig3)
        throw std::invalid_argument("generate_linear_data requires a linear_regression or estimation_fig3 task");
    if (!spec.w_star) throw std::invalid_argument("linear data generation requires w_star");
    if (nodes == 0 || per_node == 0) throw std::invalid_argument("linear data generation requires samples");
    const std::size_t d = spec.dim;
    const std::size_t total = nodes * per_node;
    Dataset data;
    data.feature_dim = d;
    data.features.reserve(total * d);
    for (std::size_t i = 0; i < total; ++i) {
        double y = 0.0;
        for (std::size_t k = 0; k < d; ++k) {
            double h;
            if (spec.kind == TaskKind::estimation_fig3)
                h = k == 0 ? (total == 1 ? 0.0 : -1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(total - 1))
                           : 1.0;
            else
                h = rng.normal();
            data.features.push_back(h);
            y += h * (*spec.w_star)[k];
        }
        if (spec.noise_sigma > 0.0) y += spec.noise_sigma * rng.normal();
        data.labels.push_back(y);
    }
    detail::uniform_partition(data, nodes, per_node);
    return data;
}

/// Samples z ~ N(w_star, sigma^2 I) for the quadratic task.
inline Dataset generate_quadratic_data(const TaskSpec& spec, std::size_t nodes, std::size_t per_node,
                                       SeededRng& rng) {
    detail::validate_spec(spec);
    if (spec.kind != TaskKind::quadratic) throw std::invalid_argument("generate_quadratic_data requires a quadratic task");
    if (!spec.w_star) throw std::invalid_argument("quadratic data generation requires w_star");
    const std::size_t d = spec.dim;
    Dataset data;
    data.feature_dim = d;
    for (std::size_t i = 0; i < nodes * per_node; ++i) {
        for (std::size_t k = 0; k < d; ++k)
            data.features.push_back((*spec.w_star)[k] + (spec.noise_sigma > 0 ? spec.noise_sigma * rng.normal() : 0.0));
        data.labels.push_back(0.0);
    }
    detail::uniform_partition(data, nodes, per_node);
    return data;
}

/// Gaussian class clusters; labels uniform at random, so contiguous node blocks are uniform random splits.
inline Dataset generate_classification_data(const TaskSpec& spec, std::size_t nodes, std::size_t per_node,
                                            SeededRng& rng) {
    detail::validate_spec(spec);
    if (spec.kind != TaskKind::softmax_classification)
        throw std::invalid_argument("generate_classification_data requires a softmax task");
    if (spec.class_means.size() != spec.class_count)
        throw std::invalid_argument("class means are unresolved; call resolve_class_means first");
    const std::size_t p = spec.feature_dim();
    Dataset data;
    data.feature_dim = p;
    bool degenerate = true;
    for (const auto& m : spec.class_means) {
        if (m.size() != p) throw DimensionError("class mean dimension mismatch");
        if (!(m == spec.class_means.front())) degenerate = false;
    }
    if (degenerate) data.warnings.push_back("all class means are equal; labels are not learnable");
    for (std::size_t i = 0; i < nodes * per_node; ++i) {
        const std::size_t c = rng.below(spec.class_count);
        for (std::size_t k = 0; k < p; ++k)
            data.features.push_back(spec.class_means[c][k] + spec.feature_scale * rng.normal());
        data.labels.push_back(static_cast<double>(c));
    }
    detail::uniform_partition(data, nodes, per_node);
    return data;
}

inline Dataset generate_data(const TaskSpec& spec, std::size_t nodes, std::size_t per_node, SeededRng& rng) {
    switch (spec.kind) {
    case TaskKind::quadratic: return generate_quadratic_data(spec, nodes, per_node, rng);
    case TaskKind::linear_regression:
    case TaskKind::estimation_fig3: return generate_linear_data(spec, nodes, per_node, rng);
    case TaskKind::softmax_classification: return generate_classification_data(spec, nodes, per_node, rng);
    }
    throw std::invalid_argument("unknown task kind");
}

struct LossGrad {
    double loss = 0.0;
    ModelVector grad;
};

namespace detail {

/// Softmax probabilities for one sample; returns log-sum-exp.
inline double softmax_probs(std::span<const double> w, std::span<const double> x, std::size_t classes,
                            std::vector<double>& probs) {
    const std::size_t p = x.size();
    probs.assign(classes, 0.0);
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < classes; ++c) {
        double z = 0.0;
        for (std::size_t k = 0; k < p; ++k) z += w[c * p + k] * x[k];
        probs[c] = z;
        top = std::max(top, z);
    }
    double total = 0.0;
    for (double& z : probs) {
        z = std::exp(z - top);
        total += z;
    }
    for (double& z : probs) z /= total;
    return top + std::log(total);
}

} // namespace detail

/// Empirical loss (1/|S|) sum f(w, z_i) over `indices` and its exact gradient.
inline LossGrad loss_and_grad(const TaskSpec& spec, const Dataset& data, const ModelVector& w,
                              std::span<const std::size_t> indices) {
    if (w.size() != spec.dim) throw DimensionError("model dimension does not match the task");
    const std::size_t d = spec.dim;
    std::vector<double> g(d, 0.0);
    double loss = 0.0;
    const double inv = indices.empty() ? 0.0 : 1.0 / static_cast<double>(indices.size());
    for (std::size_t i : indices)
        if (i >= data.size()) throw std::out_of_range("sample index out of range");
    switch (spec.kind) {
    case TaskKind::quadratic:
        for (std::size_t i : indices) {
            const auto z = data.x(i);
            for (std::size_t k = 0; k < d; ++k) {
                const double r = w[k] - z[k];
                loss += 0.5 * r * r;
                g[k] += r;
            }
        }
        break;
    case TaskKind::linear_regression:
    case TaskKind::estimation_fig3:
        for (std::size_t i : indices) {
            const auto h = data.x(i);
            double r = -data.label(i);
            for (std::size_t k = 0; k < d; ++k) r += h[k] * w[k];
            loss += 0.5 * r * r;
            for (std::size_t k = 0; k < d; ++k) g[k] += r * h[k];
        }
        break;
    case TaskKind::softmax_classification: {
        const std::size_t classes = spec.class_count;
        const std::size_t p = d / classes;
        std::vector<double> probs;
        for (std::size_t i : indices) {
            const auto x = data.x(i);
            const auto y = static_cast<std::size_t>(data.label(i));
            const double lse = detail::softmax_probs(w.values(), x, classes, probs);
            double zy = 0.0;
            for (std::size_t k = 0; k < p; ++k) zy += w[y * p + k] * x[k];
            loss += lse - zy;
            probs[y] -= 1.0;
            for (std::size_t c = 0; c < classes; ++c)
                for (std::size_t k = 0; k < p; ++k) g[c * p + k] += probs[c] * x[k];
        }
        break;
    }
    }
    loss *= inv;
    for (double& v : g) v *= inv;
    if (spec.kind == TaskKind::softmax_classification) {
        double reg = 0.0;
        for (std::size_t k = 0; k < d; ++k) {
            reg += w[k] * w[k];
            g[k] += spec.lambda * w[k];
        }
        loss += 0.5 * spec.lambda * reg;
    }
    if (!std::isfinite(loss)) throw NumericError("task loss is not finite");
    return {loss, ModelVector(std::move(g))};
}

inline std::size_t predict_class(const TaskSpec& spec, std::span<const double> w, std::span<const double> x) {
    const std::size_t p = x.size();
    std::size_t best = 0;
    double best_z = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < spec.class_count; ++c) {
        double z = 0.0;
        for (std::size_t k = 0; k < p; ++k) z += w[c * p + k] * x[k];
        if (z > best_z) {
            best_z = z;
            best = c;
        }
    }
    return best;
}

struct Metrics {
    double risk = 0.0;
    std::optional<double> accuracy;
    std::optional<double> distance;
};

/// Holdout risk, accuracy (classification) and |w - reference| (reference defaults to w_star).
inline Metrics evaluate(const TaskSpec& spec, const ModelVector& w, const Dataset& holdout,
                        const std::optional<ModelVector>& reference = std::nullopt) {
    Metrics m;
    if (holdout.size() > 0) m.risk = loss_and_grad(spec, holdout, w, holdout.all_indices()).loss;
    if (spec.kind == TaskKind::softmax_classification) {
        if (holdout.size() == 0) throw std::invalid_argument("accuracy requires a nonempty holdout");
        std::size_t hits = 0;
        for (std::size_t i = 0; i < holdout.size(); ++i)
            if (predict_class(spec, w.values(), holdout.x(i)) == static_cast<std::size_t>(holdout.label(i))) ++hits;
        m.accuracy = static_cast<double>(hits) / static_cast<double>(holdout.size());
    }
    const auto& ref = reference ? reference : spec.w_star;
    if (ref) m.distance = std::sqrt(squared_distance(w, *ref));
    return m;
}

/**
 * Minimizer of the pooled empirical risk over `indices`: closed form for
 * quadratic and linear tasks, full-batch gradient descent for softmax.
 */
inline ModelVector erm_minimizer(const TaskSpec& spec, const Dataset& data, std::span<const std::size_t> indices,
                                 std::size_t softmax_iterations = 500) {
    const std::size_t d = spec.dim;
    if (indices.empty()) throw std::invalid_argument("erm_minimizer requires samples");
    switch (spec.kind) {
    case TaskKind::quadratic: {
        std::vector<double> mean(d, 0.0);
        for (std::size_t i : indices)
            for (std::size_t k = 0; k < d; ++k) mean[k] += data.x(i)[k];
        for (double& v : mean) v /= static_cast<double>(indices.size());
        return ModelVector(std::move(mean));
    }
    case TaskKind::linear_regression:
    case TaskKind::estimation_fig3: {
        std::vector<double> h;
        std::vector<double> y;
        for (std::size_t i : indices) {
            const auto row = data.x(i);
            h.insert(h.end(), row.begin(), row.end());
            y.push_back(data.label(i));
        }
        return solve_least_squares(DenseMatrix(indices.size(), d, std::move(h)), ModelVector(std::move(y)));
    }
    case TaskKind::softmax_classification: {
        double max_sq = 0.0;
        for (std::size_t i : indices) {
            double s = 0.0;
            for (double v : data.x(i)) s += v * v;
            max_sq = std::max(max_sq, s);
        }
        const double step = 1.0 / (0.5 * max_sq + spec.lambda);
        ModelVector w = ModelVector::zeros(d);
        for (std::size_t it = 0; it < softmax_iterations; ++it) w = axpy(w, -step, loss_and_grad(spec, data, w, indices).grad);
        return w;
    }
    }
    throw std::invalid_argument("unknown task kind");
}

// ---------------------------------------------------------------------------
// IDX (MNIST-format) ingestion

struct IdxArray {
    std::vector<std::size_t> dims;
    std::vector<std::uint8_t> bytes;
};

/// Reads an unsigned-byte IDX file: magic 0x00000800 | rank, big-endian dims, raw bytes.
inline IdxArray read_idx(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open IDX file " + path);
    auto be32 = [&]() {
        unsigned char b[4];
        if (!in.read(reinterpret_cast<char*>(b), 4)) throw std::runtime_error("truncated IDX header in " + path);
        return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) | b[3];
    };
    const std::uint32_t magic = be32();
    if ((magic >> 8) != 0x08) throw std::runtime_error("IDX file " + path + " is not unsigned-byte typed");
    const std::size_t rank = magic & 0xff;
    if (rank == 0) throw std::runtime_error("IDX file " + path + " has rank 0");
    IdxArray arr;
    std::size_t total = 1;
    for (std::size_t r = 0; r < rank; ++r) {
        arr.dims.push_back(be32());
        total *= arr.dims.back();
    }
    arr.bytes.resize(total);
    if (!in.read(reinterpret_cast<char*>(arr.bytes.data()), static_cast<std::streamsize>(total)))
        throw std::runtime_error("truncated IDX payload in " + path);
    return arr;
}

/// Images scaled to [0, 1]; the first nodes*per_node samples are split into contiguous node blocks.
inline Dataset load_idx_dataset(const std::string& images, const std::string& labels, std::size_t nodes,
                                std::size_t per_node) {
    const auto img = read_idx(images);
    const auto lab = read_idx(labels);
    if (img.dims.empty() || lab.dims.size() != 1 || img.dims[0] != lab.dims[0])
        throw std::runtime_error("IDX image and label counts disagree");
    const std::size_t count = img.dims[0];
    if (nodes * per_node > count) throw std::runtime_error("IDX files hold fewer samples than requested");
    std::size_t p = 1;
    for (std::size_t r = 1; r < img.dims.size(); ++r) p *= img.dims[r];
    Dataset data;
    data.feature_dim = p;
    const std::size_t used = nodes * per_node;
    data.features.reserve(used * p);
    for (std::size_t i = 0; i < used * p; ++i) data.features.push_back(img.bytes[i] / 255.0);
    for (std::size_t i = 0; i < used; ++i) data.labels.push_back(lab.bytes[i]);
    detail::uniform_partition(data, nodes, per_node);
    return data;
}

} // namespace byzrl
