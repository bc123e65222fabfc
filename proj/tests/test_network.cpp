#include <gtest/gtest.h>

#include <sstream>

#include "byzrl/network.hpp"

using namespace byzrl;

namespace {

NetworkGraph path_graph(std::size_t m) {
    NetworkGraph g(m);
    for (std::size_t i = 0; i + 1 < m; ++i) g.add_undirected(i, i + 1);
    return g;
}

NetworkGraph two_cliques() {
    NetworkGraph g(8);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = i + 1; j < 4; ++j) {
            g.add_undirected(i, j);
            g.add_undirected(i + 4, j + 4);
        }
    g.add_undirected(3, 4);
    return g;
}

} // namespace

TEST(RandomGraph, CompleteAtProbabilityOne) {
    SeededRng rng(1);
    const auto g = random_graph(7, 1.0, rng);
    for (std::size_t u = 0; u < 7; ++u)
        for (std::size_t v = 0; v < 7; ++v) EXPECT_EQ(g.has_edge(u, v), u != v);
    EXPECT_TRUE(g.is_symmetric());
}

TEST(RandomGraph, DegreeBoundAndReproducible) {
    SeededRng a(5), b(5);
    const auto g = random_graph(20, 0.5, a, 9);
    const auto h = random_graph(20, 0.5, b, 9);
    EXPECT_TRUE(check_in_degree(g, 9));
    EXPECT_TRUE(g.is_symmetric());
    EXPECT_EQ(g.edges(), h.edges());
}

TEST(RandomGraph, Errors) {
    SeededRng rng(2);
    EXPECT_THROW(random_graph(5, 0.0, rng), std::invalid_argument);
    EXPECT_THROW(random_graph(5, 1.5, rng), std::invalid_argument);
    EXPECT_THROW(random_graph(5, 0.5, rng, 5), std::invalid_argument);
    EXPECT_THROW(random_graph(30, 0.01, rng, 20, 5), std::runtime_error);
}

TEST(Metropolis, PathOfThree) {
    const auto w = metropolis_weights(path_graph(3));
    const double want[3][3] = {{2.0 / 3, 1.0 / 3, 0}, {1.0 / 3, 1.0 / 3, 1.0 / 3}, {0, 1.0 / 3, 2.0 / 3}};
    for (std::size_t j = 0; j < 3; ++j)
        for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(w(j, i), want[j][i], 1e-15);
}

TEST(Metropolis, CompleteGraphIsUniform) {
    for (std::size_t n : {2u, 5u, 9u}) {
        const auto w = metropolis_weights(NetworkGraph::complete(n));
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(w(j, i), 1.0 / static_cast<double>(n), 1e-15);
    }
}

TEST(Metropolis, RejectsDirected) {
    NetworkGraph g(3);
    g.add_edge(0, 1);
    EXPECT_THROW(metropolis_weights(g), std::invalid_argument);
}

TEST(Metropolis, RandomGraphsValidate) {
    SeededRng rng(3);
    for (int k = 0; k < 100; ++k) {
        const auto g = random_graph(3 + rng.below(15), 0.2 + 0.6 * rng.uniform01(), rng);
        EXPECT_NO_THROW(validate_weights(g, metropolis_weights(g)));
    }
}

TEST(ValidateWeights, RejectsBadMatrices) {
    const auto g = path_graph(3);
    auto w = metropolis_weights(g);
    auto off_support = w;
    off_support(0, 2) = 0.1;
    off_support(0, 0) -= 0.1;
    EXPECT_THROW(validate_weights(g, off_support), std::invalid_argument);
    auto not_stochastic = w;
    not_stochastic(1, 1) += 0.1;
    EXPECT_THROW(validate_weights(g, not_stochastic), std::invalid_argument);
    auto negative = w;
    negative(0, 0) = -0.1;
    EXPECT_THROW(validate_weights(g, negative), std::invalid_argument);
    EXPECT_THROW(validate_weights(g, w, 0.5), std::invalid_argument);
    EXPECT_THROW(validate_weights(g, WeightMatrix(4)), DimensionError);
}

TEST(InDegree, Checks) {
    EXPECT_TRUE(check_in_degree(NetworkGraph::complete(6), 5));
    EXPECT_FALSE(check_in_degree(NetworkGraph::complete(6), 6));
    NetworkGraph star(5);
    for (std::size_t i = 1; i < 5; ++i) star.add_undirected(0, i);
    EXPECT_FALSE(check_in_degree(star, 2));
    EXPECT_TRUE(check_in_degree(star, 1));
    SeededRng rng(4);
    for (int k = 0; k < 50; ++k) {
        const auto g = random_graph(12, 0.4, rng);
        std::size_t lo = 12;
        for (std::size_t v = 0; v < 12; ++v) {
            std::size_t c = 0;
            for (std::size_t u = 0; u < 12; ++u) c += g.has_edge(u, v);
            lo = std::min(lo, c);
        }
        EXPECT_TRUE(check_in_degree(g, lo));
        EXPECT_FALSE(check_in_degree(g, lo + 1));
    }
}

TEST(SourceComponent, CompleteGraphCertified) {
    const auto r = check_source_component(NetworkGraph::complete(8), 1);
    EXPECT_EQ(r.verdict, Verdict::certified);
    EXPECT_FALSE(r.witness.has_value());
    EXPECT_GT(r.reductions_checked, 0u);
}

TEST(SourceComponent, DirectedPathFalsified) {
    NetworkGraph g(5);
    for (std::size_t i = 0; i + 1 < 5; ++i) g.add_edge(i, i + 1);
    const auto r = check_source_component(g, 1);
    EXPECT_EQ(r.verdict, Verdict::falsified);
    ASSERT_TRUE(r.witness.has_value());
    EXPECT_LE(r.witness->removed_nodes.size(), 1u);
    for (const auto& [u, v] : r.witness->removed_edges) EXPECT_TRUE(g.has_edge(u, v));
}

TEST(SourceComponent, NoFaultsOnConnectedGraph) {
    EXPECT_EQ(check_source_component(path_graph(6), 0).verdict, Verdict::certified);
    NetworkGraph split(4);
    split.add_undirected(0, 1);
    split.add_undirected(2, 3);
    EXPECT_EQ(check_source_component(split, 0).verdict, Verdict::falsified);
}

TEST(SourceComponent, SamplingNeverCertifies) {
    SourceCheckMode mode;
    mode.exhaustive = false;
    mode.samples = 200;
    mode.seed = 11;
    EXPECT_EQ(check_source_component(NetworkGraph::complete(8), 1, mode).verdict, Verdict::unknown);
    NetworkGraph g(5);
    for (std::size_t i = 0; i + 1 < 5; ++i) g.add_edge(i, i + 1);
    EXPECT_NE(check_source_component(g, 1, mode).verdict, Verdict::certified);
    mode.samples = 0;
    EXPECT_THROW(check_source_component(g, 1, mode), std::invalid_argument);
}

TEST(SourceComponent, BoundAndSmallGraphs) {
    SourceCheckMode mode;
    mode.bound = 10;
    EXPECT_THROW(check_source_component(NetworkGraph::complete(10), 2, mode), std::invalid_argument);
    EXPECT_EQ(check_source_component(NetworkGraph::complete(2), 1).verdict, Verdict::falsified);
    EXPECT_THROW(check_source_component(NetworkGraph(65), 0), std::invalid_argument);
}

TEST(Partition, CompleteGraphPasses) {
    const auto r = check_partition_condition(NetworkGraph::complete(6), 1);
    EXPECT_TRUE(r.pass);
    EXPECT_FALSE(r.witness.has_value());
}

TEST(Partition, BridgedCliquesFail) {
    const auto g = two_cliques();
    const auto r = check_partition_condition(g, 1);
    EXPECT_FALSE(r.pass);
    ASSERT_TRUE(r.witness.has_value());
    EXPECT_EQ(r.witness->first.front(), 0u);
    EXPECT_FALSE(evaluate_partition(g, r.witness->first, 1));
    EXPECT_FALSE(evaluate_partition(g, {0, 1, 2, 3}, 1));
    EXPECT_TRUE(check_partition_condition(g, 0).pass);
}

TEST(Partition, EdgeCases) {
    EXPECT_TRUE(check_partition_condition(NetworkGraph(1), 3).pass);
    EXPECT_THROW(check_partition_condition(NetworkGraph(25), 0), std::invalid_argument);
}

TEST(Partition, PassImpliesMinimumInDegree) {
    SeededRng rng(6);
    for (int k = 0; k < 60; ++k) {
        const auto g = random_graph(10, 0.3 + 0.6 * rng.uniform01(), rng);
        // Only the singleton {v} itself can reach 2b+1 across, so a pass at b=1 forces in-degree >= 3.
        const bool pass = check_partition_condition(g, 1).pass;
        EXPECT_TRUE(!pass || check_in_degree(g, 3));
    }
}

TEST(GraphFile, RoundTrip) {
    SeededRng rng(7);
    const auto g = random_graph(9, 0.4, rng);
    std::istringstream in(format_graph(g));
    const auto h = parse_graph(in);
    EXPECT_EQ(h.size(), 9u);
    EXPECT_EQ(h.edges(), g.edges());
}

TEST(GraphFile, CommentsAndErrors) {
    std::istringstream ok("# triangle\n3\n0 1 # first\n1 2\n\n2 0\n");
    const auto g = parse_graph(ok);
    EXPECT_TRUE(g.has_edge(0, 1));
    EXPECT_TRUE(g.has_edge(2, 0));
    EXPECT_FALSE(g.has_edge(1, 0));
    for (const char* bad : {"", "# only comment\n", "3\n0 x\n", "3\n0 1 2\n", "3\n0 5\n", "0\n", "3 4\n0 1\n"}) {
        std::istringstream in(bad);
        EXPECT_ANY_THROW(parse_graph(in)) << '"' << bad << '"';
    }
    EXPECT_THROW(load_graph("/nonexistent/graph.txt"), std::runtime_error);
}
