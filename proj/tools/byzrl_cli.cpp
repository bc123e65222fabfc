// byzrl command line: run, check-topology, sweep, verify.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "byzrl/byzrl.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kRuntimeError = 2;
constexpr int kFalsified = 3;

std::map<std::string, std::string> parse_sets(const std::vector<std::string>& sets) {
    std::map<std::string, std::string> out;
    for (const auto& s : sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw byzrl::ConfigError({"--set expects section.key=value, got '" + s + "'"});
        out[s.substr(0, eq)] = s.substr(eq + 1);
    }
    return out;
}

int finish_run(const byzrl::ExperimentConfig& cfg, const byzrl::ResultBundle& bundle, const std::string& figure,
               const std::filesystem::path& dir) {
    for (const auto& m : bundle.messages) std::cout << m << "\n";
    byzrl::ResultBundle written = bundle;
    if (!figure.empty()) {
        const auto style = byzrl::parse_figure_style(figure);
        if (!style) throw byzrl::ConfigError({"--figure must be one of fig3, fig4, fig5, table1"});
        written.files.push_back(byzrl::emit_figure_csv(bundle, *style));
    }
    byzrl::write_bundle(written, dir);
    std::cout << "wrote " << written.files.size() << " files to " << dir.string() << " (config "
              << byzrl::hex64(bundle.config_hash) << ", seed " << cfg.seed << ")\n";
    if (cfg.scenario == byzrl::Scenario::topology && bundle.topology_falsified) return kFalsified;
    return kOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Byzantine-resilient distributed and decentralized learning simulator"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(byzrl::kVersion));

    std::string config_path;
    std::vector<std::string> sets;
    std::string figure;
    std::string out_dir;
    auto* run = app.add_subcommand("run", "run the scenario described by a configuration file");
    run->add_option("config", config_path, "configuration file")->required();
    run->add_option("--set", sets, "override a key, e.g. --set distributed.M=20");
    run->add_option("--figure", figure, "also emit a figure-shaped CSV: fig3, fig4, fig5 or table1");
    run->add_option("--out", out_dir, "output directory (defaults to experiment.output_path)");

    std::string graph_path;
    std::size_t b = 1;
    bool exhaustive = false;
    std::size_t samples = 0;
    std::uint64_t topo_seed = 1;
    auto* topo = app.add_subcommand("check-topology", "certify a graph file against the resilience conditions");
    topo->add_option("graph", graph_path, "graph file (first line M, then 'u v' edges)")->required();
    topo->add_option("--b", b, "Byzantine bound")->required();
    auto* ex_flag = topo->add_flag("--exhaustive", exhaustive, "exhaustive source-component enumeration (default)");
    auto* samp_opt = topo->add_option("--samples", samples, "randomized falsification with N samples");
    ex_flag->excludes(samp_opt);
    topo->add_option("--seed", topo_seed, "seed for the sampling mode");

    std::string sweep_config;
    std::string param;
    std::string values;
    std::vector<std::string> sweep_sets;
    auto* sweep = app.add_subcommand("sweep", "run a configuration once per value of one key");
    sweep->add_option("config", sweep_config, "configuration file")->required();
    sweep->add_option("--param", param, "section.key to vary")->required();
    sweep->add_option("--values", values, "comma separated values")->required();
    sweep->add_option("--set", sweep_sets, "additional overrides");

    std::uint64_t verify_seed = 1;
    auto* verify = app.add_subcommand("verify", "run the built-in invariant suite");
    verify->add_option("--seed", verify_seed, "seed for the randomized checks");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfigError;
    }

    try {
        if (*run) {
            const auto cfg = byzrl::parse_config(config_path, parse_sets(sets));
            const auto bundle = byzrl::run_scenario(cfg);
            return finish_run(cfg, bundle, figure, out_dir.empty() ? cfg.output_path : out_dir);
        }
        if (*topo) {
            const auto g = byzrl::load_graph(graph_path);
            byzrl::SourceCheckMode mode;
            mode.exhaustive = samples == 0;
            mode.samples = samples;
            mode.seed = topo_seed;
            bool falsified = false;
            std::cout << "nodes: " << g.size() << ", edges: " << g.edges().size() << "\n";
            std::cout << "in-degree >= " << 2 * b + 1 << ": " << (byzrl::check_in_degree(g, 2 * b + 1) ? "pass" : "fail")
                      << "\n";
            const auto src = byzrl::check_source_component(g, b, mode);
            std::cout << "source component (b=" << b << "): " << byzrl::verdict_name(src.verdict);
            if (src.witness) std::cout << " witness: " << byzrl::detail::describe_witness(*src.witness);
            std::cout << "\n";
            falsified = src.verdict == byzrl::Verdict::falsified;
            if (g.size() <= 24) {
                const auto part = byzrl::check_partition_condition(g, b);
                std::cout << "partition condition (b=" << b << "): " << (part.pass ? "pass" : "fail");
                if (part.witness)
                    std::cout << " witness: {" << byzrl::detail::fmt_uints(part.witness->first) << "} | {"
                              << byzrl::detail::fmt_uints(part.witness->second) << "}";
                std::cout << "\n";
                falsified = falsified || !part.pass;
            } else {
                std::cout << "partition condition: skipped (M > 24)\n";
            }
            return falsified ? kFalsified : kOk;
        }
        if (*sweep) {
            int worst = kOk;
            for (auto v : byzrl::detail::split(values, ',')) {
                auto overrides = parse_sets(sweep_sets);
                overrides[param] = std::string(v);
                auto cfg = byzrl::parse_config(sweep_config, overrides);
                const auto bundle = byzrl::run_scenario(cfg);
                std::string leaf = param + "=" + std::string(v);
                const int code = finish_run(cfg, bundle, "", std::filesystem::path(cfg.output_path) / leaf);
                worst = std::max(worst, code);
            }
            return worst;
        }
        if (*verify) {
            bool ok = true;
            for (const auto& r : byzrl::run_verify_suite(verify_seed)) {
                std::cout << (r.pass ? "PASS " : "FAIL ") << r.name << " (" << r.detail << ")\n";
                ok = ok && r.pass;
            }
            return ok ? kOk : kRuntimeError;
        }
    } catch (const byzrl::ConfigError& e) {
        std::cerr << e.what() << "\n";
        return kConfigError;
    } catch (const byzrl::WellPosednessError& e) {
        std::cerr << "invalid configuration: " << e.what() << "\n";
        return kConfigError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kRuntimeError;
    }
    return kOk;
}
