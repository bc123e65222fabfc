#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "byzrl/aggregation.hpp"
#include "byzrl/attacks.hpp"
#include "byzrl/decentralized.hpp"
#include "byzrl/distributed.hpp"
#include "byzrl/inference.hpp"
#include "byzrl/network.hpp"
#include "byzrl/numeric.hpp"
#include "byzrl/tasks.hpp"

namespace byzrl {

inline constexpr std::string_view kVersion = "1.0.0";
inline constexpr const char* kSeedEnv = "BYZRL_SEED";

/// Every problem found while reading a configuration, one "section.key: message" per entry.
class ConfigError : public std::invalid_argument {
public:
    explicit ConfigError(std::vector<std::string> problems)
        : std::invalid_argument(join(problems)), problems_(std::move(problems)) {}
    const std::vector<std::string>& problems() const noexcept { return problems_; }

private:
    static std::string join(const std::vector<std::string>& p) {
        std::string out = "invalid configuration:";
        for (const auto& s : p) out += "\n  " + s;
        return out;
    }
    std::vector<std::string> problems_;
};

// ---------------------------------------------------------------------------
// Text helpers

/// Shortest round-trip decimal form.
inline std::string format_double(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    if (ec != std::errc{}) throw std::runtime_error("cannot format number");
    return std::string(buf, end);
}

inline std::string format_optional(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    if (trim(s).empty()) return out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = s.find(sep, start);
        out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

inline double parse_double(std::string_view s) {
    s = trim(s);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v))
        throw std::invalid_argument("expected a finite number, got '" + std::string(s) + "'");
    return v;
}

inline std::uint64_t parse_uint(std::string_view s) {
    s = trim(s);
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty())
        throw std::invalid_argument("expected a non-negative integer, got '" + std::string(s) + "'");
    return v;
}

inline bool parse_bool(std::string_view s) {
    s = trim(s);
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw std::invalid_argument("expected true or false, got '" + std::string(s) + "'");
}

inline std::vector<double> parse_doubles(std::string_view s) {
    std::vector<double> out;
    for (auto part : split(s, ',')) out.push_back(parse_double(part));
    return out;
}

inline std::vector<std::size_t> parse_uints(std::string_view s) {
    std::vector<std::size_t> out;
    for (auto part : split(s, ',')) out.push_back(parse_uint(part));
    return out;
}

template <class T, class F>
std::string join_values(const std::vector<T>& v, F&& fmt, std::string_view sep = ",") {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += sep;
        out += fmt(v[i]);
    }
    return out;
}

inline std::string fmt_doubles(const std::vector<double>& v) { return join_values(v, format_double); }
inline std::string fmt_uints(const std::vector<std::size_t>& v) {
    return join_values(v, [](std::size_t x) { return std::to_string(x); });
}
inline std::string fmt_vector(const ModelVector& v) { return fmt_doubles(v.data()); }

} // namespace detail

// ---------------------------------------------------------------------------
// Configuration

enum class Scenario { distributed, decentralized, consensus, detection, estimation, topology };

inline std::string_view scenario_name(Scenario s) {
    switch (s) {
    case Scenario::distributed: return "distributed";
    case Scenario::decentralized: return "decentralized";
    case Scenario::consensus: return "consensus";
    case Scenario::detection: return "detection";
    case Scenario::estimation: return "estimation";
    case Scenario::topology: return "topology";
    }
    return "?";
}

enum class RunModes { faultless, attacked, both };

inline std::string_view modes_name(RunModes m) {
    switch (m) {
    case RunModes::faultless: return "faultless";
    case RunModes::attacked: return "attacked";
    case RunModes::both: return "both";
    }
    return "?";
}

inline std::vector<bool> mode_list(RunModes m) {
    if (m == RunModes::faultless) return {false};
    if (m == RunModes::attacked) return {true};
    return {false, true};
}

enum class ConsensusMode { average, lazy, trimmed };

struct ExperimentConfig {
    Scenario scenario = Scenario::distributed;
    std::uint64_t seed = 1;
    std::size_t repeat_count = 1;
    std::string output_path = "results";

    TaskSpec task;
    std::size_t samples_per_node = 200;
    std::size_t holdout_size = 1000;

    struct Distributed {
        std::size_t M = 10;
        std::size_t b = 0;
        std::vector<std::size_t> byz_ids;
        std::size_t batch_size = 32;
        std::size_t iterations = 100;
        StepSchedule step;
        std::size_t oracle_size = 200;
        bool signsgd = false;
        std::vector<Rule> rules;
        RunModes modes = RunModes::attacked;
    } distributed;

    RuleConfig rule;

    struct Attack {
        AttackKind kind = AttackKind::none;
        std::vector<double> target;
        UniformRange odd{0.0, 1e-5};
        UniformRange even{0.0, 20.0};
        std::vector<std::vector<double>> constants;
        UniformRange coordinate{-1.0, 0.0};
    } attack;

    struct Decentralized {
        std::vector<DecAlgorithm> algorithms{DecAlgorithm::bridge};
        std::size_t b = 0;
        std::vector<std::size_t> byz_ids;
        std::size_t byz_count = 0;
        std::size_t iterations = 100;
        StepSchedule step{StepSchedule::Kind::decaying, 0.1, 100.0};
        std::size_t batch_size = 0;
        std::size_t byrdie_inner = 1;
        std::size_t eval_every = 10;
        RunModes modes = RunModes::attacked;
    } decentralized;

    struct Graph {
        std::string file;
        std::size_t M = 20;
        double p = 0.5;
        std::size_t min_degree = 0;
    } graph;

    struct Consensus {
        ConsensusMode mode = ConsensusMode::average;
        std::size_t iterations = 200;
        std::size_t dim = 1;
        std::size_t b = 0;
        std::vector<std::size_t> byz_ids;
    } consensus;

    DetectionConfig detection;
    std::vector<double> alphas{0.0, 0.5};

    EstimationConfig estimation;

    struct Topology {
        std::string file;
        std::size_t b = 1;
        bool exhaustive = true;
        std::size_t samples = 10000;
    } topology;
};

namespace detail {

struct Field {
    std::string section;
    std::string key;
    std::function<void(ExperimentConfig&, std::string_view)> set;
    std::function<std::string(const ExperimentConfig&)> get;
};

template <class E, class Parse, class Name>
E parse_enum(std::string_view s, Parse&& parse, Name&& names, std::string_view what) {
    if (auto v = parse(trim(s))) return *v;
    throw std::invalid_argument("unknown " + std::string(what) + " '" + std::string(trim(s)) + "' (expected one of " +
                                names + ")");
}

inline std::optional<Scenario> parse_scenario(std::string_view s) {
    for (auto v : {Scenario::distributed, Scenario::decentralized, Scenario::consensus, Scenario::detection,
                   Scenario::estimation, Scenario::topology})
        if (scenario_name(v) == s) return v;
    return std::nullopt;
}

inline std::optional<RunModes> parse_modes(std::string_view s) {
    for (auto v : {RunModes::faultless, RunModes::attacked, RunModes::both})
        if (modes_name(v) == s) return v;
    return std::nullopt;
}

inline std::string_view consensus_mode_name(ConsensusMode m) {
    switch (m) {
    case ConsensusMode::average: return "average";
    case ConsensusMode::lazy: return "lazy";
    case ConsensusMode::trimmed: return "trimmed";
    }
    return "?";
}

inline std::optional<ConsensusMode> parse_consensus_mode(std::string_view s) {
    for (auto v : {ConsensusMode::average, ConsensusMode::lazy, ConsensusMode::trimmed})
        if (consensus_mode_name(v) == s) return v;
    return std::nullopt;
}

inline StepSchedule::Kind parse_step_kind(std::string_view s) {
    s = trim(s);
    if (s == "constant") return StepSchedule::Kind::constant;
    if (s == "decaying") return StepSchedule::Kind::decaying;
    throw std::invalid_argument("step must be constant or decaying, got '" + std::string(s) + "'");
}

inline std::string_view step_kind_name(StepSchedule::Kind k) {
    return k == StepSchedule::Kind::constant ? "constant" : "decaying";
}

inline std::string_view framework_name(DetectionFramework f) {
    return f == DetectionFramework::bayesian_majority ? "bayesian_majority" : "neyman_pearson_majority";
}

inline std::string_view membership_name(ByzantineMembership m) {
    return m == ByzantineMembership::bernoulli ? "bernoulli" : "fixed_count";
}

template <class T>
Field make_field(std::string section, std::string key, T ExperimentConfig::*member) {
    Field f{section, key, {}, {}};
    if constexpr (std::is_same_v<T, std::size_t>) {
        f.set = [member](ExperimentConfig& c, std::string_view v) { c.*member = parse_uint(v); };
        f.get = [member](const ExperimentConfig& c) { return std::to_string(c.*member); };
    } else if constexpr (std::is_same_v<T, double>) {
        f.set = [member](ExperimentConfig& c, std::string_view v) { c.*member = parse_double(v); };
        f.get = [member](const ExperimentConfig& c) { return format_double(c.*member); };
    }
    return f;
}

#define BYZRL_FIELD(SEC, KEY, EXPR_SET, EXPR_GET)                                                                      \
    Field {                                                                                                             \
        SEC, KEY, [](ExperimentConfig& c, std::string_view v) { EXPR_SET; },                                           \
            [](const ExperimentConfig& c) -> std::string { return EXPR_GET; }                                          \
    }

inline const std::vector<Field>& schema() {
    static const std::vector<Field> fields = [] {
        std::vector<Field> f;
        const std::string all_rules = [] {
            std::string s;
            for (Rule r : kAllRules) s += (s.empty() ? "" : ", ") + std::string(rule_name(r));
            return s;
        }();
        // experiment
        f.push_back(BYZRL_FIELD("experiment", "scenario",
                                c.scenario = parse_enum<Scenario>(v, parse_scenario,
                                                                  std::string("distributed, decentralized, consensus, "
                                                                              "detection, estimation, topology"),
                                                                  "scenario"),
                                std::string(scenario_name(c.scenario))));
        f.push_back(BYZRL_FIELD("experiment", "seed", c.seed = parse_uint(v), std::to_string(c.seed)));
        f.push_back(BYZRL_FIELD("experiment", "repeat_count", c.repeat_count = parse_uint(v),
                                std::to_string(c.repeat_count)));
        f.push_back(BYZRL_FIELD("experiment", "output_path", c.output_path = std::string(trim(v)), c.output_path));
        // task
        f.push_back(BYZRL_FIELD("task", "kind",
                                c.task.kind = parse_enum<TaskKind>(
                                    v, parse_task,
                                    std::string("quadratic, linear_regression, softmax, estimation_fig3"), "task"),
                                std::string(task_name(c.task.kind))));
        f.push_back(BYZRL_FIELD("task", "dim", c.task.dim = parse_uint(v), std::to_string(c.task.dim)));
        f.push_back(BYZRL_FIELD("task", "noise_sigma", c.task.noise_sigma = parse_double(v),
                                format_double(c.task.noise_sigma)));
        f.push_back(BYZRL_FIELD("task", "lambda", c.task.lambda = parse_double(v), format_double(c.task.lambda)));
        f.push_back(BYZRL_FIELD(
            "task", "w_star",
            {
                auto vals = parse_doubles(v);
                if (vals.empty()) c.task.w_star.reset();
                else c.task.w_star = ModelVector(std::move(vals));
            },
            c.task.w_star ? fmt_vector(*c.task.w_star) : std::string()));
        f.push_back(BYZRL_FIELD("task", "class_count", c.task.class_count = parse_uint(v),
                                std::to_string(c.task.class_count)));
        f.push_back(BYZRL_FIELD("task", "class_separation", c.task.class_separation = parse_double(v),
                                format_double(c.task.class_separation)));
        f.push_back(BYZRL_FIELD("task", "feature_scale", c.task.feature_scale = parse_double(v),
                                format_double(c.task.feature_scale)));
        f.push_back(BYZRL_FIELD("task", "samples_per_node", c.samples_per_node = parse_uint(v),
                                std::to_string(c.samples_per_node)));
        f.push_back(BYZRL_FIELD("task", "holdout_size", c.holdout_size = parse_uint(v),
                                std::to_string(c.holdout_size)));
        // distributed
        f.push_back(BYZRL_FIELD("distributed", "M", c.distributed.M = parse_uint(v), std::to_string(c.distributed.M)));
        f.push_back(BYZRL_FIELD("distributed", "b", c.distributed.b = parse_uint(v), std::to_string(c.distributed.b)));
        f.push_back(BYZRL_FIELD("distributed", "byz_ids", c.distributed.byz_ids = parse_uints(v),
                                fmt_uints(c.distributed.byz_ids)));
        f.push_back(BYZRL_FIELD("distributed", "batch_size", c.distributed.batch_size = parse_uint(v),
                                std::to_string(c.distributed.batch_size)));
        f.push_back(BYZRL_FIELD("distributed", "iterations", c.distributed.iterations = parse_uint(v),
                                std::to_string(c.distributed.iterations)));
        f.push_back(BYZRL_FIELD("distributed", "step", c.distributed.step.kind = parse_step_kind(v),
                                std::string(step_kind_name(c.distributed.step.kind))));
        f.push_back(BYZRL_FIELD("distributed", "rho0", c.distributed.step.rho0 = parse_double(v),
                                format_double(c.distributed.step.rho0)));
        f.push_back(BYZRL_FIELD("distributed", "tau", c.distributed.step.tau = parse_double(v),
                                format_double(c.distributed.step.tau)));
        f.push_back(BYZRL_FIELD("distributed", "oracle_size", c.distributed.oracle_size = parse_uint(v),
                                std::to_string(c.distributed.oracle_size)));
        f.push_back(BYZRL_FIELD("distributed", "update",
                                {
                                    const auto s = trim(v);
                                    if (s == "sgd") c.distributed.signsgd = false;
                                    else if (s == "signsgd") c.distributed.signsgd = true;
                                    else throw std::invalid_argument("update must be sgd or signsgd");
                                },
                                std::string(c.distributed.signsgd ? "signsgd" : "sgd")));
        f.push_back(Field{"distributed", "rules",
                          [all_rules](ExperimentConfig& c, std::string_view v) {
                              c.distributed.rules.clear();
                              for (auto part : split(v, ','))
                                  c.distributed.rules.push_back(parse_enum<Rule>(part, parse_rule, all_rules, "rule"));
                          },
                          [](const ExperimentConfig& c) {
                              return join_values(c.distributed.rules,
                                                 [](Rule r) { return std::string(rule_name(r)); });
                          }});
        f.push_back(BYZRL_FIELD("distributed", "modes",
                                c.distributed.modes = parse_enum<RunModes>(v, parse_modes,
                                                                           std::string("faultless, attacked, both"),
                                                                           "modes"),
                                std::string(modes_name(c.distributed.modes))));
        // rule
        f.push_back(Field{"rule", "name",
                          [all_rules](ExperimentConfig& c, std::string_view v) {
                              c.rule.rule = parse_enum<Rule>(v, parse_rule, all_rules, "rule");
                          },
                          [](const ExperimentConfig& c) { return std::string(rule_name(c.rule.rule)); }});
        f.push_back(BYZRL_FIELD("rule", "m", c.rule.m = parse_uint(v), std::to_string(c.rule.m)));
        f.push_back(BYZRL_FIELD("rule", "gamma", c.rule.gamma = parse_double(v), format_double(c.rule.gamma)));
        f.push_back(BYZRL_FIELD("rule", "max_iters", c.rule.max_iters = parse_uint(v), std::to_string(c.rule.max_iters)));
        // attack
        f.push_back(BYZRL_FIELD("attack", "kind",
                                c.attack.kind = parse_enum<AttackKind>(
                                    v, parse_attack,
                                    std::string("none, gradient_control, alternating_uniform, lazy_constant, "
                                                "coordinate_uniform"),
                                    "attack"),
                                std::string(attack_name(c.attack.kind))));
        f.push_back(BYZRL_FIELD("attack", "target", c.attack.target = parse_doubles(v), fmt_doubles(c.attack.target)));
        f.push_back(BYZRL_FIELD("attack", "odd_lo", c.attack.odd.lo = parse_double(v), format_double(c.attack.odd.lo)));
        f.push_back(BYZRL_FIELD("attack", "odd_hi", c.attack.odd.hi = parse_double(v), format_double(c.attack.odd.hi)));
        f.push_back(BYZRL_FIELD("attack", "even_lo", c.attack.even.lo = parse_double(v),
                                format_double(c.attack.even.lo)));
        f.push_back(BYZRL_FIELD("attack", "even_hi", c.attack.even.hi = parse_double(v),
                                format_double(c.attack.even.hi)));
        f.push_back(BYZRL_FIELD(
            "attack", "constants",
            {
                c.attack.constants.clear();
                for (auto group : split(v, ';')) c.attack.constants.push_back(parse_doubles(group));
            },
            join_values(c.attack.constants, fmt_doubles, ";")));
        f.push_back(BYZRL_FIELD("attack", "coord_lo", c.attack.coordinate.lo = parse_double(v),
                                format_double(c.attack.coordinate.lo)));
        f.push_back(BYZRL_FIELD("attack", "coord_hi", c.attack.coordinate.hi = parse_double(v),
                                format_double(c.attack.coordinate.hi)));
        // decentralized
        f.push_back(BYZRL_FIELD(
            "decentralized", "algorithms",
            {
                c.decentralized.algorithms.clear();
                for (auto part : split(v, ','))
                    c.decentralized.algorithms.push_back(parse_enum<DecAlgorithm>(
                        part, parse_dec_algorithm,
                        std::string("dgd, consensus_only, trimmed_consensus, bridge, byrdie, bridge_median, "
                                    "bridge_krum, bridge_bulyan"),
                        "algorithm"));
            },
            join_values(c.decentralized.algorithms,
                        [](DecAlgorithm a) { return std::string(dec_algorithm_name(a)); })));
        f.push_back(BYZRL_FIELD("decentralized", "b", c.decentralized.b = parse_uint(v),
                                std::to_string(c.decentralized.b)));
        f.push_back(BYZRL_FIELD("decentralized", "byz_ids", c.decentralized.byz_ids = parse_uints(v),
                                fmt_uints(c.decentralized.byz_ids)));
        f.push_back(BYZRL_FIELD("decentralized", "byz_count", c.decentralized.byz_count = parse_uint(v),
                                std::to_string(c.decentralized.byz_count)));
        f.push_back(BYZRL_FIELD("decentralized", "iterations", c.decentralized.iterations = parse_uint(v),
                                std::to_string(c.decentralized.iterations)));
        f.push_back(BYZRL_FIELD("decentralized", "step", c.decentralized.step.kind = parse_step_kind(v),
                                std::string(step_kind_name(c.decentralized.step.kind))));
        f.push_back(BYZRL_FIELD("decentralized", "rho0", c.decentralized.step.rho0 = parse_double(v),
                                format_double(c.decentralized.step.rho0)));
        f.push_back(BYZRL_FIELD("decentralized", "tau", c.decentralized.step.tau = parse_double(v),
                                format_double(c.decentralized.step.tau)));
        f.push_back(BYZRL_FIELD("decentralized", "batch_size", c.decentralized.batch_size = parse_uint(v),
                                std::to_string(c.decentralized.batch_size)));
        f.push_back(BYZRL_FIELD("decentralized", "byrdie_inner", c.decentralized.byrdie_inner = parse_uint(v),
                                std::to_string(c.decentralized.byrdie_inner)));
        f.push_back(BYZRL_FIELD("decentralized", "eval_every", c.decentralized.eval_every = parse_uint(v),
                                std::to_string(c.decentralized.eval_every)));
        f.push_back(BYZRL_FIELD("decentralized", "modes",
                                c.decentralized.modes = parse_enum<RunModes>(
                                    v, parse_modes, std::string("faultless, attacked, both"), "modes"),
                                std::string(modes_name(c.decentralized.modes))));
        // graph
        f.push_back(BYZRL_FIELD("graph", "file", c.graph.file = std::string(trim(v)), c.graph.file));
        f.push_back(BYZRL_FIELD("graph", "M", c.graph.M = parse_uint(v), std::to_string(c.graph.M)));
        f.push_back(BYZRL_FIELD("graph", "p", c.graph.p = parse_double(v), format_double(c.graph.p)));
        f.push_back(BYZRL_FIELD("graph", "min_degree", c.graph.min_degree = parse_uint(v),
                                std::to_string(c.graph.min_degree)));
        // consensus
        f.push_back(BYZRL_FIELD("consensus", "mode",
                                c.consensus.mode = parse_enum<ConsensusMode>(
                                    v, parse_consensus_mode, std::string("average, lazy, trimmed"), "consensus mode"),
                                std::string(consensus_mode_name(c.consensus.mode))));
        f.push_back(BYZRL_FIELD("consensus", "iterations", c.consensus.iterations = parse_uint(v),
                                std::to_string(c.consensus.iterations)));
        f.push_back(BYZRL_FIELD("consensus", "dim", c.consensus.dim = parse_uint(v), std::to_string(c.consensus.dim)));
        f.push_back(BYZRL_FIELD("consensus", "b", c.consensus.b = parse_uint(v), std::to_string(c.consensus.b)));
        f.push_back(BYZRL_FIELD("consensus", "byz_ids", c.consensus.byz_ids = parse_uints(v),
                                fmt_uints(c.consensus.byz_ids)));
        // detection
        f.push_back(BYZRL_FIELD("detection", "Q", c.detection.Q = parse_uint(v), std::to_string(c.detection.Q)));
        f.push_back(BYZRL_FIELD("detection", "M", c.detection.M = parse_uint(v), std::to_string(c.detection.M)));
        f.push_back(BYZRL_FIELD("detection", "alphas", c.alphas = parse_doubles(v), fmt_doubles(c.alphas)));
        f.push_back(BYZRL_FIELD("detection", "samples_per_node", c.detection.samples_per_node = parse_uint(v),
                                std::to_string(c.detection.samples_per_node)));
        f.push_back(BYZRL_FIELD("detection", "separation", c.detection.separation = parse_double(v),
                                format_double(c.detection.separation)));
        f.push_back(BYZRL_FIELD("detection", "trials", c.detection.trials = parse_uint(v),
                                std::to_string(c.detection.trials)));
        f.push_back(BYZRL_FIELD(
            "detection", "framework",
            {
                const auto s = trim(v);
                if (s == "bayesian_majority") c.detection.framework = DetectionFramework::bayesian_majority;
                else if (s == "neyman_pearson_majority")
                    c.detection.framework = DetectionFramework::neyman_pearson_majority;
                else throw std::invalid_argument("framework must be bayesian_majority or neyman_pearson_majority");
            },
            std::string(framework_name(c.detection.framework))));
        f.push_back(BYZRL_FIELD(
            "detection", "membership",
            {
                const auto s = trim(v);
                if (s == "bernoulli") c.detection.membership = ByzantineMembership::bernoulli;
                else if (s == "fixed_count") c.detection.membership = ByzantineMembership::fixed_count;
                else throw std::invalid_argument("membership must be bernoulli or fixed_count");
            },
            std::string(membership_name(c.detection.membership))));
        f.push_back(BYZRL_FIELD("detection", "local_false_alarm", c.detection.local_false_alarm = parse_double(v),
                                format_double(c.detection.local_false_alarm)));
        // estimation
        f.push_back(BYZRL_FIELD("estimation", "M", c.estimation.M = parse_uint(v), std::to_string(c.estimation.M)));
        f.push_back(BYZRL_FIELD("estimation", "byz_count", c.estimation.byz_count = parse_uint(v),
                                std::to_string(c.estimation.byz_count)));
        f.push_back(BYZRL_FIELD("estimation", "outlier_magnitude", c.estimation.outlier_magnitude = parse_double(v),
                                format_double(c.estimation.outlier_magnitude)));
        f.push_back(BYZRL_FIELD("estimation", "noise_sigma", c.estimation.noise_sigma = parse_double(v),
                                format_double(c.estimation.noise_sigma)));
        f.push_back(BYZRL_FIELD("estimation", "w_star", c.estimation.w_star = ModelVector(parse_doubles(v)),
                                fmt_vector(c.estimation.w_star)));
        // topology
        f.push_back(BYZRL_FIELD("topology", "file", c.topology.file = std::string(trim(v)), c.topology.file));
        f.push_back(BYZRL_FIELD("topology", "b", c.topology.b = parse_uint(v), std::to_string(c.topology.b)));
        f.push_back(BYZRL_FIELD(
            "topology", "mode",
            {
                const auto s = trim(v);
                if (s == "exhaustive") c.topology.exhaustive = true;
                else if (s == "monte_carlo") c.topology.exhaustive = false;
                else throw std::invalid_argument("mode must be exhaustive or monte_carlo");
            },
            std::string(c.topology.exhaustive ? "exhaustive" : "monte_carlo")));
        f.push_back(BYZRL_FIELD("topology", "samples", c.topology.samples = parse_uint(v),
                                std::to_string(c.topology.samples)));
        return f;
    }();
    return fields;
}

#undef BYZRL_FIELD

inline const Field* find_field(std::string_view section, std::string_view key) {
    for (const auto& f : schema())
        if (f.section == section && f.key == key) return &f;
    return nullptr;
}

inline bool known_section(std::string_view section) {
    for (const auto& f : schema())
        if (f.section == section) return true;
    return false;
}

inline std::optional<std::uint64_t> env_seed() {
    const char* s = std::getenv(kSeedEnv);
    if (!s || !*s) return std::nullopt;
    return parse_uint(s);
}

inline ModelVector attack_vector(const std::vector<double>& v) { return ModelVector(v); }

/// Cross-field checks; appends "section.key: message" problems.
inline void validate_config(const ExperimentConfig& c, std::vector<std::string>& problems) {
    auto problem = [&](const std::string& where, const std::string& what) { problems.push_back(where + ": " + what); };
    if (c.repeat_count == 0) problem("experiment.repeat_count", "must be at least 1");
    const bool uses_task = c.scenario == Scenario::distributed || c.scenario == Scenario::decentralized;
    if (uses_task) {
        if (c.task.dim == 0) problem("task.dim", "must be positive");
        if (c.task.kind == TaskKind::softmax_classification) {
            if (c.task.class_count < 2) problem("task.class_count", "must be at least 2");
            else if (c.task.dim % c.task.class_count != 0)
                problem("task.dim", "must be a multiple of task.class_count for the softmax task");
            if (!(c.task.lambda > 0.0)) problem("task.lambda", "must be positive for the softmax task");
        }
        if (c.task.kind == TaskKind::estimation_fig3 && c.task.dim != 2) problem("task.dim", "estimation_fig3 is two dimensional");
        if (c.task.w_star && c.task.w_star->size() != c.task.dim)
            problem("task.w_star", "has " + std::to_string(c.task.w_star->size()) + " entries, task.dim is " +
                                       std::to_string(c.task.dim));
        if (c.task.noise_sigma < 0.0) problem("task.noise_sigma", "must be non-negative");
        if (c.samples_per_node == 0) problem("task.samples_per_node", "must be positive");
        const std::size_t dim = c.task.dim;
        switch (c.attack.kind) {
        case AttackKind::gradient_control:
            if (c.attack.target.size() != dim)
                problem("attack.target", "has " + std::to_string(c.attack.target.size()) + " entries, task.dim is " +
                                             std::to_string(dim));
            break;
        case AttackKind::lazy_constant:
            if (c.attack.constants.empty()) problem("attack.constants", "lazy_constant requires at least one constant");
            for (const auto& k : c.attack.constants)
                if (k.size() != dim) problem("attack.constants", "each constant needs task.dim entries");
            break;
        case AttackKind::alternating_uniform:
            if (!(c.attack.odd.lo < c.attack.odd.hi)) problem("attack.odd_lo", "requires odd_lo < odd_hi");
            if (!(c.attack.even.lo < c.attack.even.hi)) problem("attack.even_lo", "requires even_lo < even_hi");
            break;
        case AttackKind::coordinate_uniform:
            if (!(c.attack.coordinate.lo < c.attack.coordinate.hi)) problem("attack.coord_lo", "requires coord_lo < coord_hi");
            break;
        default: break;
        }
    }
    if (c.scenario == Scenario::distributed) {
        const auto& d = c.distributed;
        if (d.M == 0) problem("distributed.M", "must be positive");
        if (d.iterations == 0) problem("distributed.iterations", "must be positive");
        if (!(d.step.rho0 > 0.0)) problem("distributed.rho0", "must be positive");
        for (std::size_t id : d.byz_ids)
            if (id >= d.M) problem("distributed.byz_ids", "id " + std::to_string(id) + " is not below M");
        if (c.attack.kind != AttackKind::none && d.byz_ids.empty() && d.modes != RunModes::faultless)
            problem("distributed.byz_ids", "an attack is configured but no Byzantine ids are listed");
        std::vector<Rule> rules = d.rules.empty() ? std::vector<Rule>{c.rule.rule} : d.rules;
        if (d.signsgd) rules = {Rule::sign_majority};
        for (Rule r : rules) {
            try {
                check_well_posed(r, d.M, d.b, c.rule.m);
            } catch (const WellPosednessError& e) {
                problem(d.rules.empty() ? "rule.name" : "distributed.rules", e.what());
            }
        }
    }
    if (c.scenario == Scenario::decentralized) {
        const auto& d = c.decentralized;
        if (d.algorithms.empty()) problem("decentralized.algorithms", "must list at least one algorithm");
        if (d.iterations == 0) problem("decentralized.iterations", "must be positive");
        if (d.eval_every == 0) problem("decentralized.eval_every", "must be positive");
        if (!(d.step.rho0 > 0.0)) problem("decentralized.rho0", "must be positive");
        if (c.graph.file.empty()) {
            if (!(c.graph.p > 0.0 && c.graph.p <= 1.0)) problem("graph.p", "must lie in (0, 1]");
            if (c.graph.M == 0) problem("graph.M", "must be positive");
            if (c.graph.M > 0 && c.graph.min_degree > c.graph.M - 1) problem("graph.min_degree", "exceeds M-1");
            for (std::size_t id : d.byz_ids)
                if (id >= c.graph.M) problem("decentralized.byz_ids", "id " + std::to_string(id) + " is not below graph.M");
            if (d.byz_count >= c.graph.M && c.graph.M > 0) problem("decentralized.byz_count", "must be below graph.M");
            for (DecAlgorithm a : d.algorithms) {
                const std::size_t need = local_minimum(a, d.b);
                if (c.graph.min_degree + 1 < need)
                    problem("graph.min_degree", std::string(dec_algorithm_name(a)) + " requires " + local_condition(a) +
                                                    " at every node; min_degree " + std::to_string(c.graph.min_degree) +
                                                    " is too small for b=" + std::to_string(d.b));
            }
        }
        if (!d.byz_ids.empty() && d.byz_count != 0 && d.byz_count != d.byz_ids.size())
            problem("decentralized.byz_count", "conflicts with decentralized.byz_ids");
        if (c.attack.kind != AttackKind::none && d.byz_ids.empty() && d.byz_count == 0 && d.modes != RunModes::faultless)
            problem("decentralized.byz_count", "an attack is configured but no Byzantine nodes are selected");
    }
    if (c.scenario == Scenario::consensus) {
        const auto& s = c.consensus;
        if (s.dim == 0) problem("consensus.dim", "must be positive");
        if (c.graph.file.empty() && !(c.graph.p > 0.0 && c.graph.p <= 1.0)) problem("graph.p", "must lie in (0, 1]");
        if (s.mode == ConsensusMode::lazy) {
            if (s.byz_ids.empty()) problem("consensus.byz_ids", "lazy mode requires at least one lazy node");
            if (c.attack.constants.empty()) problem("attack.constants", "lazy mode requires at least one constant");
            for (const auto& k : c.attack.constants)
                if (k.size() != s.dim) problem("attack.constants", "each constant needs consensus.dim entries");
        }
    }
    if (c.scenario == Scenario::detection) {
        try {
            DetectionConfig probe = c.detection;
            probe.alpha = 0.0;
            validate_detection(probe);
        } catch (const std::exception& e) {
            problem("detection", e.what());
        }
        for (std::size_t i = 0; i < c.alphas.size(); ++i) {
            if (!(c.alphas[i] >= 0.0 && c.alphas[i] <= 1.0)) problem("detection.alphas", "values must lie in [0, 1]");
            if (i > 0 && c.alphas[i] < c.alphas[i - 1]) problem("detection.alphas", "values must be sorted ascending");
        }
    }
    if (c.scenario == Scenario::estimation) {
        if (c.estimation.M < 2) problem("estimation.M", "must be at least 2");
        if (c.estimation.byz_count >= c.estimation.M) problem("estimation.byz_count", "must be below estimation.M");
        if (c.estimation.w_star.size() != 2) problem("estimation.w_star", "needs exactly two entries");
        if (c.estimation.noise_sigma < 0.0) problem("estimation.noise_sigma", "must be non-negative");
    }
    if (c.scenario == Scenario::topology) {
        if (c.topology.file.empty()) problem("topology.file", "is required for the topology scenario");
        if (!c.topology.exhaustive && c.topology.samples == 0) problem("topology.samples", "must be positive");
    }
}

} // namespace detail

/**
 * INI-style configuration: "[section]" headers, "key = value" lines, '#'
 * or ';' comments. Lists are comma separated; attack.constants separates
 * vectors with ';'. `overrides` maps "section.key" to a replacement value.
 */
inline ExperimentConfig parse_config_text(std::string_view text,
                                          const std::map<std::string, std::string>& overrides = {}) {
    ExperimentConfig cfg;
    if (auto s = detail::env_seed()) cfg.seed = *s;
    std::vector<std::string> problems;
    std::map<std::string, std::pair<std::string, std::size_t>> values;
    std::string section;
    std::size_t lineno = 0;
    for (auto raw : detail::split(text, '\n')) {
        ++lineno;
        std::string_view line = detail::trim(raw);
        if (line.empty() || line.front() == '#' || line.front() == ';') continue;
        if (line.front() == '[') {
            if (line.back() != ']') {
                problems.push_back("line " + std::to_string(lineno) + ": malformed section header");
                continue;
            }
            section = std::string(detail::trim(line.substr(1, line.size() - 2)));
            if (!detail::known_section(section)) problems.push_back(section + ": unknown section");
            continue;
        }
        const std::size_t eq = line.find('=');
        if (eq == std::string_view::npos) {
            problems.push_back("line " + std::to_string(lineno) + ": expected 'key = value'");
            continue;
        }
        if (section.empty()) {
            problems.push_back("line " + std::to_string(lineno) + ": key outside of any section");
            continue;
        }
        const std::string key = std::string(detail::trim(line.substr(0, eq)));
        const std::string path = section + "." + key;
        if (values.count(path)) problems.push_back(path + ": given more than once");
        values[path] = {std::string(detail::trim(line.substr(eq + 1))), lineno};
    }
    for (const auto& [path, value] : overrides) values[path] = {value, 0};
    if (!values.count("experiment.scenario")) problems.push_back("experiment.scenario: missing required key");
    for (const auto& [path, entry] : values) {
        const std::size_t dot = path.find('.');
        const std::string sec = path.substr(0, dot);
        const std::string key = dot == std::string::npos ? std::string() : path.substr(dot + 1);
        const detail::Field* f = detail::find_field(sec, key);
        if (!f) {
            if (detail::known_section(sec)) problems.push_back(path + ": unknown key");
            else if (entry.second == 0) problems.push_back(path + ": unknown key");
            continue;
        }
        try {
            f->set(cfg, entry.first);
        } catch (const std::exception& e) {
            problems.push_back(path + ": " + e.what());
        }
    }
    if (problems.empty()) detail::validate_config(cfg, problems);
    if (!problems.empty()) throw ConfigError(std::move(problems));
    return cfg;
}

inline ExperimentConfig parse_config(const std::string& path, const std::map<std::string, std::string>& overrides = {}) {
    std::ifstream in(path);
    if (!in) throw ConfigError({"cannot open configuration file " + path});
    std::stringstream ss;
    ss << in.rdbuf();
    ExperimentConfig cfg = parse_config_text(ss.str(), overrides);
    // Graph paths written in the file are relative to the file; --set values stay relative to the cwd.
    const std::filesystem::path base = std::filesystem::path(path).parent_path();
    auto resolve = [&](std::string& file, const char* key) {
        if (file.empty() || overrides.count(key) || std::filesystem::path(file).is_absolute()) return;
        file = (base / file).lexically_normal().string();
    };
    resolve(cfg.graph.file, "graph.file");
    resolve(cfg.topology.file, "topology.file");
    return cfg;
}

/// Canonical text form: every section and key in schema order.
inline std::string serialize_config(const ExperimentConfig& cfg) {
    std::string out;
    std::string section;
    for (const auto& f : detail::schema()) {
        if (f.section != section) {
            if (!section.empty()) out += "\n";
            section = f.section;
            out += "[" + section + "]\n";
        }
        out += f.key + " = " + f.get(cfg) + "\n";
    }
    return out;
}

/// 64-bit FNV-1a of the canonical serialization.
inline std::uint64_t config_hash(const ExperimentConfig& cfg) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : serialize_config(cfg)) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

/// seed XOR hash(trial index)
inline std::uint64_t trial_seed(std::uint64_t seed, std::size_t trial) { return seed ^ SeededRng::mix(trial + 1); }

// ---------------------------------------------------------------------------
// Results

struct OutputFile {
    std::string name;
    std::string content;
};

struct DecRun {
    DecAlgorithm algorithm = DecAlgorithm::bridge;
    bool attacked = false;
    DecentralizedTrace trace;
};

struct ResultBundle {
    Scenario scenario = Scenario::distributed;
    std::uint64_t config_hash = 0;
    std::uint64_t seed = 0;
    std::vector<std::vector<RuleRun>> distributed;
    std::vector<std::vector<DecRun>> decentralized;
    std::vector<std::vector<DetectionResult>> detection;
    std::vector<EstimationResult> estimation;
    std::vector<OutputFile> files;
    std::vector<std::string> messages;
    bool topology_falsified = false;
};

namespace detail {

inline std::string provenance(const ResultBundle& b, std::optional<std::size_t> trial) {
    std::string s = "# byzrl " + std::string(kVersion) + " config_hash=" + hex64(b.config_hash) +
                    " seed=" + std::to_string(b.seed);
    if (trial) s += " trial=" + std::to_string(*trial);
    return s + "\n";
}

inline std::string trial_name(std::size_t k) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "trial_%03zu.csv", k);
    return buf;
}

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;
};

inline MeanStd mean_std(const std::vector<double>& v) {
    MeanStd r;
    if (v.empty()) return r;
    for (double x : v) r.mean += x;
    r.mean /= static_cast<double>(v.size());
    for (double x : v) r.std += (x - r.mean) * (x - r.mean);
    r.std = std::sqrt(r.std / static_cast<double>(v.size()));
    return r;
}

inline std::string fmt_opt_stat(const std::vector<double>& v, bool want_std) {
    if (v.empty()) return "";
    const auto ms = mean_std(v);
    return format_double(want_std ? ms.std : ms.mean);
}

inline AttackSpec make_attack(const ExperimentConfig& c) {
    AttackSpec a;
    a.kind = c.attack.kind;
    if (!c.attack.target.empty()) a.target_model = ModelVector(c.attack.target);
    a.odd_range = c.attack.odd;
    a.even_range = c.attack.even;
    for (const auto& k : c.attack.constants) a.constants.emplace_back(k);
    a.coordinate_range = c.attack.coordinate;
    return a;
}

inline TaskSpec make_task(const ExperimentConfig& c) {
    TaskSpec t = c.task;
    if (!t.w_star && t.kind != TaskKind::softmax_classification) t.w_star = ModelVector::filled(t.dim, 1.0);
    return t;
}

inline NetworkGraph make_graph(const ExperimentConfig& c, SeededRng& rng) {
    if (!c.graph.file.empty()) return load_graph(c.graph.file);
    return random_graph(c.graph.M, c.graph.p, rng, c.graph.min_degree);
}

inline void run_distributed_scenario(const ExperimentConfig& c, ResultBundle& out) {
    const auto& d = c.distributed;
    std::vector<Rule> rules = d.rules.empty() ? std::vector<Rule>{c.rule.rule} : d.rules;
    if (d.signsgd) rules = {Rule::sign_majority};
    std::vector<std::string> summary_lines;
    for (std::size_t k = 0; k < c.repeat_count; ++k) {
        DistributedConfig cfg;
        cfg.M = d.M;
        cfg.b = d.b;
        cfg.byz_ids = d.byz_ids;
        cfg.rule = c.rule;
        cfg.attack = make_attack(c);
        cfg.task = make_task(c);
        cfg.step = d.step;
        cfg.batch_size = d.batch_size;
        cfg.iterations = d.iterations;
        cfg.seed = trial_seed(c.seed, k);
        cfg.samples_per_node = c.samples_per_node;
        cfg.holdout_size = c.holdout_size;
        cfg.oracle_size = d.oracle_size;
        DistributedConfig probe = cfg;
        probe.rule.rule = Rule::zeno;
        const Problem problem = build_problem(probe);
        std::vector<RuleRun> runs;
        for (Rule r : rules) {
            for (bool attacked : mode_list(d.modes)) {
                DistributedConfig run = cfg;
                run.rule.rule = r;
                if (!attacked) run.attack = AttackSpec{};
                MetricsTrace tr = d.signsgd ? run_signsgd(run, problem) : run_distributed_sgd(run, problem);
                for (const auto& w : tr.warnings)
                    if (std::find(out.messages.begin(), out.messages.end(), w) == out.messages.end()) out.messages.push_back(w);
                runs.push_back({r, attacked, std::move(tr)});
            }
        }
        std::string csv = provenance(out, k) + "rule,mode,t,risk,dist,acc,agg_norm,survivors\n";
        for (const auto& run : runs)
            for (const auto& row : run.trace.rows)
                csv += std::string(rule_name(run.rule)) + "," + (run.attacked ? "attacked" : "faultless") + "," +
                       std::to_string(row.t) + "," + format_double(row.risk) + "," + format_optional(row.dist) + "," +
                       format_optional(row.acc) + "," + format_double(row.agg_norm) + "," +
                       std::to_string(row.survivors) + "\n";
        out.files.push_back({trial_name(k), std::move(csv)});
        out.distributed.push_back(std::move(runs));
    }
    std::string summary = provenance(out, std::nullopt) +
                          "rule,mode,trials,acc_mean,acc_std,dist_mean,dist_std,risk_mean,risk_std\n";
    for (std::size_t i = 0; i < out.distributed.front().size(); ++i) {
        std::vector<double> acc;
        std::vector<double> dist;
        std::vector<double> risk;
        for (const auto& trial : out.distributed) {
            const auto& last = trial[i].trace.rows.back();
            if (last.acc) acc.push_back(*last.acc);
            if (last.dist) dist.push_back(*last.dist);
            risk.push_back(last.risk);
        }
        const auto& ref = out.distributed.front()[i];
        summary += std::string(rule_name(ref.rule)) + "," + (ref.attacked ? "attacked" : "faultless") + "," +
                   std::to_string(out.distributed.size()) + "," + fmt_opt_stat(acc, false) + "," + fmt_opt_stat(acc, true) +
                   "," + fmt_opt_stat(dist, false) + "," + fmt_opt_stat(dist, true) + "," + fmt_opt_stat(risk, false) +
                   "," + fmt_opt_stat(risk, true) + "\n";
    }
    out.files.push_back({"summary.csv", std::move(summary)});
}

inline void run_decentralized_scenario(const ExperimentConfig& c, ResultBundle& out) {
    const auto& d = c.decentralized;
    for (std::size_t k = 0; k < c.repeat_count; ++k) {
        const std::uint64_t seed = trial_seed(c.seed, k);
        SeededRng graph_rng = SeededRng::derive(seed, 6);
        DecentralizedConfig cfg;
        cfg.graph = make_graph(c, graph_rng);
        cfg.b = d.b;
        cfg.step = d.step;
        cfg.iterations = d.iterations;
        cfg.seed = seed;
        cfg.task = make_task(c);
        cfg.byz_ids = d.byz_ids;
        if (cfg.byz_ids.empty() && d.byz_count > 0) cfg.byz_ids = graph_rng.choose(cfg.graph.size(), d.byz_count);
        cfg.attack = make_attack(c);
        cfg.samples_per_node = c.samples_per_node;
        cfg.holdout_size = c.holdout_size;
        cfg.batch_size = d.batch_size;
        cfg.byrdie_inner = d.byrdie_inner;
        cfg.eval_every = d.eval_every;
        const Problem problem = build_decentralized_problem(cfg);
        std::vector<DecRun> runs;
        for (DecAlgorithm a : d.algorithms) {
            for (bool attacked : mode_list(d.modes)) {
                DecentralizedConfig run = cfg;
                run.algorithm = a;
                if (!attacked) run.attack = AttackSpec{};
                auto tr = run_decentralized(run, problem);
                for (const auto& w : tr.warnings)
                    if (std::find(out.messages.begin(), out.messages.end(), w) == out.messages.end()) out.messages.push_back(w);
                runs.push_back({a, attacked, std::move(tr)});
            }
        }
        std::string csv = provenance(out, k) + "algorithm,mode,t,node,acc,dist,scalars_broadcast\n";
        for (const auto& run : runs)
            for (const auto& row : run.trace.node_rows)
                csv += std::string(dec_algorithm_name(run.algorithm)) + "," + (run.attacked ? "attacked" : "faultless") +
                       "," + std::to_string(row.t) + "," + std::to_string(row.node) + "," + format_optional(row.acc) +
                       "," + format_optional(row.dist) + "," + std::to_string(row.scalars_broadcast) + "\n";
        out.files.push_back({trial_name(k), std::move(csv)});
        out.decentralized.push_back(std::move(runs));
    }
    std::string summary = provenance(out, std::nullopt) + "algorithm,mode,trials,acc_mean,acc_std,dist_mean,dist_std\n";
    for (std::size_t i = 0; i < out.decentralized.front().size(); ++i) {
        std::vector<double> acc;
        std::vector<double> dist;
        for (const auto& trial : out.decentralized) {
            const auto& last = trial[i].trace.summary.back();
            if (last.acc_mean) acc.push_back(*last.acc_mean);
            if (last.dist_mean) dist.push_back(*last.dist_mean);
        }
        const auto& ref = out.decentralized.front()[i];
        summary += std::string(dec_algorithm_name(ref.algorithm)) + "," + (ref.attacked ? "attacked" : "faultless") +
                   "," + std::to_string(out.decentralized.size()) + "," + fmt_opt_stat(acc, false) + "," +
                   fmt_opt_stat(acc, true) + "," + fmt_opt_stat(dist, false) + "," + fmt_opt_stat(dist, true) + "\n";
    }
    out.files.push_back({"summary.csv", std::move(summary)});
}

inline void run_consensus_scenario(const ExperimentConfig& c, ResultBundle& out) {
    std::vector<double> final_dis;
    for (std::size_t k = 0; k < c.repeat_count; ++k) {
        const std::uint64_t seed = trial_seed(c.seed, k);
        SeededRng rng = SeededRng::derive(seed, 6);
        const NetworkGraph g = make_graph(c, rng);
        std::vector<ModelVector> init;
        for (std::size_t j = 0; j < g.size(); ++j) {
            std::vector<double> v(c.consensus.dim);
            for (double& x : v) x = rng.uniform(0.0, 1.0);
            init.emplace_back(std::move(v));
        }
        std::string csv = provenance(out, k);
        double last = 0.0;
        if (c.consensus.mode == ConsensusMode::average) {
            const auto tr = run_average_consensus(g, metropolis_weights(g), init, c.consensus.iterations);
            csv += "t,disagreement\n";
            for (std::size_t t = 0; t < tr.disagreement.size(); ++t)
                csv += std::to_string(t) + "," + format_double(tr.disagreement[t]) + "\n";
            last = tr.disagreement.back();
        } else if (c.consensus.mode == ConsensusMode::lazy) {
            std::vector<ModelVector> constants;
            for (const auto& v : c.attack.constants) constants.emplace_back(v);
            const auto tr = run_lazy_attack_consensus(g, metropolis_weights(g), init, c.consensus.byz_ids, constants,
                                                      c.consensus.iterations);
            csv += "t,disagreement,distance_to_target\n";
            for (std::size_t t = 0; t < tr.states.size(); ++t)
                csv += std::to_string(t) + "," + format_double(tr.honest_disagreement[t]) + "," +
                       format_double(tr.distance_to_target[t]) + "\n";
            last = tr.honest_disagreement.back();
        } else {
            const auto tr = run_trimmed_consensus(g, c.consensus.b, init, c.consensus.byz_ids, make_attack(c),
                                                  c.consensus.iterations, seed);
            csv += "t,disagreement\n";
            for (std::size_t t = 0; t < tr.disagreement.size(); ++t)
                csv += std::to_string(t) + "," + format_double(tr.disagreement[t]) + "\n";
            last = tr.disagreement.back();
        }
        final_dis.push_back(last);
        out.files.push_back({trial_name(k), std::move(csv)});
    }
    const auto ms = mean_std(final_dis);
    out.files.push_back({"summary.csv", provenance(out, std::nullopt) + "trials,disagreement_mean,disagreement_std\n" +
                                            std::to_string(final_dis.size()) + "," + format_double(ms.mean) + "," +
                                            format_double(ms.std) + "\n"});
}

inline void run_detection_scenario(const ExperimentConfig& c, ResultBundle& out) {
    for (std::size_t k = 0; k < c.repeat_count; ++k) {
        auto rows = sweep_alpha(c.detection, c.alphas, trial_seed(c.seed, k));
        std::string csv = provenance(out, k) + "alpha,error,stderr,trials,seed\n";
        for (const auto& r : rows)
            csv += format_double(r.alpha) + "," + format_double(r.error) + "," + format_double(r.stderr_) + "," +
                   std::to_string(r.trials) + "," + std::to_string(r.seed) + "\n";
        out.files.push_back({trial_name(k), std::move(csv)});
        out.detection.push_back(std::move(rows));
    }
    std::string summary = provenance(out, std::nullopt) + "alpha,trials,error_mean,error_std\n";
    for (std::size_t i = 0; i < c.alphas.size(); ++i) {
        std::vector<double> e;
        for (const auto& t : out.detection) e.push_back(t[i].error);
        const auto ms = mean_std(e);
        summary += format_double(c.alphas[i]) + "," + std::to_string(e.size()) + "," + format_double(ms.mean) + "," +
                   format_double(ms.std) + "\n";
    }
    out.files.push_back({"summary.csv", std::move(summary)});
}

inline void run_estimation_scenario(const ExperimentConfig& c, ResultBundle& out) {
    std::vector<double> clean;
    std::vector<double> attacked;
    for (std::size_t k = 0; k < c.repeat_count; ++k) {
        SeededRng rng(trial_seed(c.seed, k));
        auto r = simulate_estimation_breakdown(c.estimation, rng);
        std::string csv = provenance(out, k) + "clean_mse,attacked_mse,w_clean_0,w_clean_1,w_attacked_0,w_attacked_1\n" +
                          format_double(r.clean_mse) + "," + format_double(r.attacked_mse) + "," +
                          format_double(r.w_hat_clean[0]) + "," + format_double(r.w_hat_clean[1]) + "," +
                          format_double(r.w_hat_attacked[0]) + "," + format_double(r.w_hat_attacked[1]) + "\n";
        clean.push_back(r.clean_mse);
        attacked.push_back(r.attacked_mse);
        out.files.push_back({trial_name(k), std::move(csv)});
        out.estimation.push_back(std::move(r));
    }
    const auto a = mean_std(clean);
    const auto b = mean_std(attacked);
    out.files.push_back({"summary.csv", provenance(out, std::nullopt) +
                                            "trials,clean_mse_mean,clean_mse_std,attacked_mse_mean,attacked_mse_std\n" +
                                            std::to_string(clean.size()) + "," + format_double(a.mean) + "," +
                                            format_double(a.std) + "," + format_double(b.mean) + "," +
                                            format_double(b.std) + "\n"});
}

inline std::string describe_witness(const SourceWitness& w) {
    std::string s = "removed nodes {" + fmt_uints(w.removed_nodes) + "}";
    if (!w.removed_edges.empty()) {
        s += " removed edges {";
        for (std::size_t i = 0; i < w.removed_edges.size(); ++i)
            s += (i ? " " : "") + std::to_string(w.removed_edges[i].first) + "->" + std::to_string(w.removed_edges[i].second);
        s += "}";
    }
    return s;
}

inline void run_topology_scenario(const ExperimentConfig& c, ResultBundle& out) {
    const NetworkGraph g = load_graph(c.topology.file);
    const std::size_t b = c.topology.b;
    std::string csv = provenance(out, std::nullopt) + "check,verdict,witness\n";
    const bool deg = check_in_degree(g, 2 * b + 1);
    out.messages.push_back("in-degree >= " + std::to_string(2 * b + 1) + ": " + (deg ? "pass" : "fail"));
    csv += "in_degree," + std::string(deg ? "pass" : "fail") + ",\n";
    SourceCheckMode mode;
    mode.exhaustive = c.topology.exhaustive;
    mode.samples = c.topology.samples;
    mode.seed = c.seed;
    const auto src = check_source_component(g, b, mode);
    std::string line = "source component (b=" + std::to_string(b) + "): " + std::string(verdict_name(src.verdict));
    if (src.witness) line += " witness: " + describe_witness(*src.witness);
    out.messages.push_back(line);
    csv += "source_component," + std::string(verdict_name(src.verdict)) + "," +
           (src.witness ? describe_witness(*src.witness) : std::string()) + "\n";
    if (src.verdict == Verdict::falsified) out.topology_falsified = true;
    if (g.size() <= 24) {
        const auto part = check_partition_condition(g, b);
        std::string pl = "partition condition (b=" + std::to_string(b) + "): " + (part.pass ? "pass" : "fail");
        std::string wit;
        if (part.witness) wit = "{" + fmt_uints(part.witness->first) + "} | {" + fmt_uints(part.witness->second) + "}";
        if (!wit.empty()) pl += " witness: " + wit;
        out.messages.push_back(pl);
        csv += "partition," + std::string(part.pass ? "pass" : "fail") + "," + wit + "\n";
        if (!part.pass) out.topology_falsified = true;
    }
    out.files.push_back({"topology.csv", std::move(csv)});
}

} // namespace detail

/// Runs every trial of the scenario in memory; nothing is written to disk.
inline ResultBundle run_scenario(const ExperimentConfig& cfg) {
    ResultBundle out;
    out.scenario = cfg.scenario;
    out.config_hash = config_hash(cfg);
    out.seed = cfg.seed;
    try {
        switch (cfg.scenario) {
        case Scenario::distributed: detail::run_distributed_scenario(cfg, out); break;
        case Scenario::decentralized: detail::run_decentralized_scenario(cfg, out); break;
        case Scenario::consensus: detail::run_consensus_scenario(cfg, out); break;
        case Scenario::detection: detail::run_detection_scenario(cfg, out); break;
        case Scenario::estimation: detail::run_estimation_scenario(cfg, out); break;
        case Scenario::topology: detail::run_topology_scenario(cfg, out); break;
        }
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw std::runtime_error(std::string(scenario_name(cfg.scenario)) + " scenario: " + e.what());
    }
    return out;
}

enum class FigureStyle { fig3, fig4, fig5, table1 };

inline std::optional<FigureStyle> parse_figure_style(std::string_view s) {
    if (s == "fig3") return FigureStyle::fig3;
    if (s == "fig4") return FigureStyle::fig4;
    if (s == "fig5") return FigureStyle::fig5;
    if (s == "table1") return FigureStyle::table1;
    return std::nullopt;
}

/**
 * Reshapes a bundle to a figure's axes.
 *
 * fig3:   x,y_clean,y_attacked,fit_clean,fit_attacked,byzantine (first trial)
 * fig4:   rule,mode,t,acc_mean,acc_std (over trials)
 * fig5:   scalars,acc_mean,acc_std,algorithm (honest nodes, over trials)
 * table1: alpha,error,stderr (mean over trials)
 */
inline OutputFile emit_figure_csv(const ResultBundle& b, FigureStyle style) {
    auto mismatch = [](std::string_view what) {
        return std::invalid_argument(std::string("bundle does not match figure style ") + std::string(what));
    };
    std::string csv = detail::provenance(b, std::nullopt);
    switch (style) {
    case FigureStyle::fig3: {
        if (b.estimation.empty()) throw mismatch("fig3 (needs an estimation bundle)");
        const auto& r = b.estimation.front();
        csv += "x,y_clean,y_attacked,fit_clean,fit_attacked,byzantine\n";
        for (std::size_t j = 0; j < r.x.size(); ++j) {
            const bool byz = std::binary_search(r.byzantine.begin(), r.byzantine.end(), j);
            csv += format_double(r.x[j]) + "," + format_double(r.y_clean[j]) + "," + format_double(r.y_attacked[j]) +
                   "," + format_double(r.x[j] * r.w_hat_clean[0] + r.w_hat_clean[1]) + "," +
                   format_double(r.x[j] * r.w_hat_attacked[0] + r.w_hat_attacked[1]) + "," + (byz ? "1" : "0") + "\n";
        }
        return {"fig3.csv", csv};
    }
    case FigureStyle::fig4: {
        if (b.distributed.empty()) throw mismatch("fig4 (needs a distributed bundle)");
        csv += "rule,mode,t,acc_mean,acc_std\n";
        for (std::size_t i = 0; i < b.distributed.front().size(); ++i) {
            const auto& ref = b.distributed.front()[i];
            for (std::size_t r = 0; r < ref.trace.rows.size(); ++r) {
                std::vector<double> acc;
                for (const auto& trial : b.distributed)
                    if (trial[i].trace.rows[r].acc) acc.push_back(*trial[i].trace.rows[r].acc);
                csv += std::string(rule_name(ref.rule)) + "," + (ref.attacked ? "attacked" : "faultless") + "," +
                       std::to_string(ref.trace.rows[r].t) + "," + detail::fmt_opt_stat(acc, false) + "," +
                       detail::fmt_opt_stat(acc, true) + "\n";
            }
        }
        return {"fig4.csv", csv};
    }
    case FigureStyle::fig5: {
        if (b.decentralized.empty()) throw mismatch("fig5 (needs a decentralized bundle)");
        csv += "scalars,acc_mean,acc_std,algorithm\n";
        bool both = false;
        for (const auto& run : b.decentralized.front())
            both = both || run.attacked != b.decentralized.front().front().attacked;
        for (std::size_t i = 0; i < b.decentralized.front().size(); ++i) {
            const auto& ref = b.decentralized.front()[i];
            std::string label(dec_algorithm_name(ref.algorithm));
            if (both) label += ref.attacked ? ":attacked" : ":faultless";
            for (std::size_t r = 0; r < ref.trace.summary.size(); ++r) {
                std::vector<double> acc;
                for (const auto& trial : b.decentralized)
                    for (const auto& row : trial[i].trace.node_rows)
                        if (row.t == ref.trace.summary[r].t && row.acc) acc.push_back(*row.acc);
                csv += std::to_string(ref.trace.summary[r].scalars_broadcast) + "," + detail::fmt_opt_stat(acc, false) +
                       "," + detail::fmt_opt_stat(acc, true) + "," + label + "\n";
            }
        }
        return {"fig5.csv", csv};
    }
    case FigureStyle::table1: {
        if (b.detection.empty()) throw mismatch("table1 (needs a detection bundle)");
        csv += "alpha,error,stderr\n";
        for (std::size_t i = 0; i < b.detection.front().size(); ++i) {
            std::vector<double> e;
            double se = 0.0;
            for (const auto& t : b.detection) {
                e.push_back(t[i].error);
                se += t[i].stderr_ * t[i].stderr_;
            }
            const double n = static_cast<double>(e.size());
            csv += format_double(b.detection.front()[i].alpha) + "," + format_double(detail::mean_std(e).mean) + "," +
                   format_double(std::sqrt(se) / n) + "\n";
        }
        return {"table1.csv", csv};
    }
    }
    throw std::invalid_argument("unknown figure style");
}

/// Writes every file of the bundle under `dir`, creating it if needed.
inline void write_bundle(const ResultBundle& b, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    for (const auto& f : b.files) {
        std::ofstream out(dir / f.name, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + (dir / f.name).string());
        out << f.content;
    }
}

} // namespace byzrl
