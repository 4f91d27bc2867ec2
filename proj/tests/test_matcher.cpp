#include <gtest/gtest.h>

#include <random>
#include <set>

#include "grape/matcher.hpp"
#include "grape/synthetic.hpp"
#include "oracles.hpp"

using namespace grape;

namespace {

Graph undirected(std::size_t n, std::vector<Edge> e) { return Graph::from_edges(n, e, false); }

Graph complete(std::size_t n) {
    std::vector<Edge> e;
    for (NodeId u = 0; u < n; ++u)
        for (NodeId v = u + 1; v < n; ++v) e.push_back({u, v});
    return undirected(n, e);
}

Graph star(std::size_t leaves) {
    std::vector<Edge> e;
    for (NodeId i = 1; i <= leaves; ++i) e.push_back({0, i});
    return undirected(leaves + 1, e);
}

// Graph consistent with the incremental-matching walkthrough: v_i is node i.
Graph walkthrough_graph() {
    return undirected(9, {{1, 2}, {1, 3}, {3, 4}, {1, 7}, {7, 6}, {2, 3}, {4, 8}});
}

AnchoredTemplate walkthrough_parent() { return AnchoredTemplate(4, {{0, 1}, {0, 2}, {2, 3}}, false); }

bool contains(const std::vector<Match>& ms, const Match& m) {
    return std::find(ms.begin(), ms.end(), m) != ms.end();
}

}  // namespace

TEST(MatchTemplate, TriangleInTriangle) {
    auto g = undirected(3, {{0, 1}, {1, 2}, {2, 0}});
    auto ms = match_template(g, named_template("S3"), 0);
    EXPECT_EQ(ms, (std::vector<Match>{{0, 1, 2}, {0, 2, 1}}));
}

TEST(MatchTemplate, NoTriangleInHexagon) {
    auto g = synthetic::hexagon();
    for (NodeId v = 0; v < 6; ++v) EXPECT_TRUE(match_template(g, named_template("S3"), v).empty());
}

TEST(MatchTemplate, SixTrianglesAtK4Vertex) {
    // Ordered pairs from the three other vertices: 3 * 2.
    auto ms = match_template(complete(4), named_template("S3"), 0);
    EXPECT_EQ(ms.size(), 3u * 2u);
    EXPECT_EQ(ms, oracle::naive_matches(complete(4), named_template("S3"), 0));
}

TEST(MatchTemplate, OutputIsLexicographic) {
    auto g = complete(5);
    auto ms = match_template(g, named_template("S4"), 2);
    EXPECT_TRUE(std::is_sorted(ms.begin(), ms.end()));
    EXPECT_EQ(ms.size(), 4u * 3u * 2u);
}

TEST(MatchTemplate, NonInducedSemantics) {
    // The 3-path matches inside a triangle even though the closing edge exists.
    auto g = undirected(3, {{0, 1}, {1, 2}, {2, 0}});
    EXPECT_EQ(match_template(g, named_template("S2"), 0).size(), 2u);
}

TEST(MatchTemplate, EgoOutOfRange) {
    EXPECT_THROW(match_template(complete(3), named_template("S1"), 3), InputError);
}

TEST(MatchTemplate, DirectedTemplates) {
    auto g = Graph::from_edges(3, std::vector<Edge>{{1, 0}, {0, 2}}, true);
    EXPECT_EQ(match_template(g, named_template("S7"), 0), (std::vector<Match>{{0, 1}}));
    EXPECT_EQ(match_template(g, named_template("S8"), 0), (std::vector<Match>{{0, 2}}));
    EXPECT_TRUE(match_template(g, named_template("S9"), 0).empty());
    EXPECT_EQ(match_template(g, named_template("S10"), 0), (std::vector<Match>{{0, 1, 2}}));
}

TEST(MatchTemplate, UndirectedTemplateOnDirectedGraphNeedsFlag) {
    auto g = Graph::from_edges(3, std::vector<Edge>{{1, 0}, {0, 2}}, true);
    EXPECT_THROW(match_template(g, named_template("S1"), 0), InputError);
    MatchOptions opt;
    opt.ignore_direction = true;
    EXPECT_EQ(match_template(g, named_template("S1"), 0, opt), (std::vector<Match>{{0, 1}, {0, 2}}));
    EXPECT_EQ(match_template(g, named_template("S2"), 1, opt), (std::vector<Match>{{1, 0, 2}}));
}

TEST(MatchTemplate, DirectedTemplateOnUndirectedGraphSeesBothArcs) {
    auto g = undirected(2, {{0, 1}});
    EXPECT_EQ(match_template(g, named_template("S9"), 0), (std::vector<Match>{{0, 1}}));
}

TEST(MatchTemplate, CapTruncatesAndCounts) {
    MatchOptions opt;
    opt.max_matches_per_ego = 5;
    MatchCounters c;
    auto ms = match_template(complete(6), named_template("S3"), 0, opt, &c);
    EXPECT_EQ(ms.size(), 5u);
    EXPECT_EQ(c.truncated_egos, 1u);
    auto idx = build_index(complete(6), named_template("S3"), opt);
    EXPECT_EQ(idx.counters().truncated_egos, 6u);
}

TEST(BuildIndex, StarWithEdgeTemplate) {
    auto idx = build_index(star(3), named_template("S1"));
    EXPECT_EQ(idx.ae_sets(0), (std::vector<std::vector<NodeId>>{{0}, {1, 2, 3}}));
    EXPECT_EQ(idx.ae_sets(2), (std::vector<std::vector<NodeId>>{{2}, {0}}));
}

TEST(BuildIndex, FourCliqueCollapsesToOneOrbitSet) {
    auto idx = build_index(complete(4), named_template("S5"));
    EXPECT_EQ(idx.match_count(0), 6u);
    EXPECT_EQ(idx.ae_sets(0), (std::vector<std::vector<NodeId>>{{0}, {1, 2, 3}}));
    auto oracle_sets = oracle::naive_ae_sets(complete(4), named_template("S5"), 0,
                                             orbit_partition(named_template("S5")).orbits());
    EXPECT_EQ(idx.ae_sets(0), oracle_sets);
}

TEST(BuildIndex, FallbackForUnmatchedEgo) {
    auto idx = build_index(undirected(2, {{0, 1}}), named_template("S3"));
    EXPECT_EQ(idx.match_count(0), 0u);
    EXPECT_EQ(idx.ae_sets(0), (std::vector<std::vector<NodeId>>{{0}, {}}));
    EXPECT_EQ(idx.ae_sets(1), (std::vector<std::vector<NodeId>>{{1}, {}}));
}

TEST(BuildIndex, ThreadCountDoesNotChangeResult) {
    std::mt19937_64 rng(8);
    auto g = oracle::random_graph(80, 0.08, false, rng);
    for (const auto& name : {"S2", "S3", "S6"}) {
        MatchOptions one, many;
        many.threads = 4;
        auto a = build_index(g, named_template(name), one);
        auto b = build_index(g, named_template(name), many);
        EXPECT_EQ(a, b);
        EXPECT_EQ(a.counters().candidate_expansions, b.counters().candidate_expansions);
    }
}

TEST(MatcherProperty, OracleEquivalenceSmall) {
    std::mt19937_64 rng(99);
    for (int gi = 0; gi < 8; ++gi) {
        const bool directed = gi % 2 == 1;
        std::uniform_real_distribution<double> pd(0.1, 0.3);
        auto g = oracle::random_graph(12 + static_cast<std::size_t>(gi) * 3, pd(rng), directed, rng);
        for (int ti = 0; ti < 6; ++ti) {
            auto t = oracle::random_template(2 + static_cast<std::size_t>(ti % 4), directed, rng);
            MatchOptions opt;
            opt.max_matches_per_ego = std::numeric_limits<std::size_t>::max();
            for (NodeId v = 0; v < g.num_nodes(); ++v)
                ASSERT_EQ(match_template(g, t, v, opt), oracle::naive_matches(g, t, v));
        }
    }
}

TEST(MatcherProperty, AeSetsMatchOracleAndAnchorInvariant) {
    std::mt19937_64 rng(4);
    auto g = oracle::random_graph(25, 0.2, false, rng);
    for (const auto& name : {"S1", "S2", "S3", "S4", "S5", "S6"}) {
        auto t = named_template(name);
        auto idx = build_index(g, t);
        auto orbs = orbit_partition(t).orbits();
        for (NodeId v = 0; v < g.num_nodes(); ++v) {
            EXPECT_EQ(idx.ae_sets(v), oracle::naive_ae_sets(g, t, v, orbs)) << name << " ego " << v;
            EXPECT_EQ(idx.ae_sets(v)[0], std::vector<NodeId>{v});
            for (const auto& s : idx.ae_sets(v)) EXPECT_TRUE(std::is_sorted(s.begin(), s.end()));
        }
    }
}

TEST(MatcherProperty, ClosedUnderOrbitSymmetry) {
    std::mt19937_64 rng(12);
    auto g = oracle::random_graph(30, 0.2, false, rng);
    for (const auto& name : {"S3", "S5", "S6"}) {
        auto t = named_template(name);
        auto autos = ego_automorphisms(t);
        auto idx = build_index(g, t);
        for (NodeId v = 0; v < g.num_nodes(); ++v) {
            auto ms = idx.matches(v);
            std::set<Match> all(ms.begin(), ms.end());
            for (const auto& m : ms)
                for (const auto& a : autos) {
                    Match p(m.size());
                    for (std::size_t i = 0; i < m.size(); ++i) p[static_cast<std::size_t>(a[i])] = m[i];
                    EXPECT_TRUE(all.count(p));
                }
        }
    }
}

TEST(Incremental, WalkthroughNodeMutation) {
    auto g = walkthrough_graph();
    auto parent = build_index(g, walkthrough_parent());
    auto pm = parent.matches(1);
    EXPECT_TRUE(contains(pm, {1, 2, 3, 4}));
    EXPECT_TRUE(contains(pm, {1, 3, 7, 6}));
    auto child_t = walkthrough_parent().with_node(3);
    auto child = extend_node_mutation(g, parent, child_t, 3);
    auto cm = child.matches(1);
    EXPECT_TRUE(contains(cm, {1, 2, 3, 4, 8}));
    for (const auto& m : cm) EXPECT_FALSE(std::equal(m.begin(), m.begin() + 4, Match{1, 3, 7, 6}.begin()));
    EXPECT_EQ(child, build_index(g, child_t));
}

TEST(Incremental, WalkthroughEdgeMutation) {
    auto g = walkthrough_graph();
    auto parent = build_index(g, walkthrough_parent());
    auto child_t = walkthrough_parent().with_edge(1, 2);
    auto child = filter_edge_mutation(g, parent, child_t, {1, 2});
    auto cm = child.matches(1);
    EXPECT_TRUE(contains(cm, {1, 2, 3, 4}));
    EXPECT_FALSE(contains(cm, {1, 3, 7, 6}));
    EXPECT_EQ(child, build_index(g, child_t));
}

TEST(Incremental, EdgeToThreePathOnStarIsEmptyAtCenter) {
    auto g = star(3);
    auto parent = build_index(g, named_template("S1"));
    auto child_t = named_template("S1").with_node(1);
    auto child = extend_node_mutation(g, parent, child_t, 1);
    EXPECT_EQ(child.match_count(0), 0u);
    for (NodeId leaf = 1; leaf <= 3; ++leaf) EXPECT_EQ(child.match_count(leaf), 2u);
    EXPECT_EQ(child, build_index(g, child_t));
}

TEST(Incremental, EmptyParentGivesEmptyChild) {
    auto g = synthetic::hexagon();
    auto parent = build_index(g, named_template("S3"));
    auto child_t = named_template("S3").with_node(0);
    auto child = extend_node_mutation(g, parent, child_t, 0);
    EXPECT_EQ(child.total_matches(), 0u);
    EXPECT_EQ(child, build_index(g, child_t));
}

TEST(Incremental, ThreePathToTriangleOnTriangleKeepsAll) {
    auto g = undirected(3, {{0, 1}, {1, 2}, {2, 0}});
    auto parent = build_index(g, named_template("S2"));
    auto child = filter_edge_mutation(g, parent, named_template("S3"), {0, 2});
    EXPECT_EQ(child.total_matches(), parent.total_matches());
    EXPECT_EQ(child.total_matches(), 6u);
}

TEST(Incremental, NeverAdjacentEndpointsGiveEmpty) {
    // Bipartite graph: no triangle can close.
    auto g = undirected(6, {{0, 3}, {0, 4}, {1, 3}, {1, 5}, {2, 4}, {2, 5}});
    auto parent = build_index(g, named_template("S2"));
    auto child = filter_edge_mutation(g, parent, named_template("S3"), {0, 2});
    EXPECT_EQ(child.total_matches(), 0u);
}

TEST(Incremental, ShapeMismatchThrows) {
    auto g = star(3);
    auto parent = build_index(g, named_template("S1"));
    EXPECT_THROW(extend_node_mutation(g, parent, named_template("S3"), 0), InputError);
    EXPECT_THROW(extend_node_mutation(g, parent, named_template("S2"), 0), InputError);
    auto s2 = build_index(g, named_template("S2"));
    EXPECT_THROW(filter_edge_mutation(g, s2, named_template("S3"), {0, 1}), InputError);
    EXPECT_THROW(filter_edge_mutation(g, s2, named_template("S2"), {0, 2}), InputError);
}

TEST(IncrementalProperty, RandomChainsMatchScratch) {
    std::mt19937_64 rng(31);
    for (int chain = 0; chain < 10; ++chain) {
        const bool directed = chain % 3 == 2;
        auto g = oracle::random_graph(40, 0.12, directed, rng);
        AnchoredTemplate t = directed ? named_template("S8") : named_template("S1");
        auto idx = build_index(g, t);
        for (int depth = 0; depth < 4; ++depth) {
            auto missing = t.missing_edges();
            std::bernoulli_distribution coin(0.5);
            if (!missing.empty() && coin(rng)) {
                auto e = missing[std::uniform_int_distribution<std::size_t>(0, missing.size() - 1)(rng)];
                auto child = t.with_edge(e.first, e.second);
                auto inc = filter_edge_mutation(g, idx, child, e);
                // Monotone: child matches are a subset of parent matches.
                for (NodeId v = 0; v < g.num_nodes(); ++v) {
                    auto pm = idx.matches(v);
                    for (const auto& m : inc.matches(v)) EXPECT_TRUE(contains(pm, m));
                }
                idx = std::move(inc);
                t = child;
            } else {
                const int at = std::uniform_int_distribution<int>(0, static_cast<int>(t.num_nodes()) - 1)(rng);
                auto child = t.with_node(at, coin(rng));
                idx = extend_node_mutation(g, idx, child, at);
                t = child;
            }
            ASSERT_EQ(idx, build_index(g, t)) << "chain " << chain << " depth " << depth;
        }
    }
}

TEST(IncrementalProperty, FewerExpansionsThanScratch) {
    std::mt19937_64 rng(77);
    auto g = oracle::random_graph(300, 0.03, false, rng);
    auto s1 = build_index(g, named_template("S1"));
    auto s2t = named_template("S1").with_node(1);
    auto s2 = extend_node_mutation(g, s1, s2t, 1);
    auto scratch = build_index(g, s2t);
    EXPECT_LT(s2.counters().candidate_expansions, scratch.counters().candidate_expansions);
    auto s3 = filter_edge_mutation(g, s2, named_template("S3"), {0, 2});
    auto scratch3 = build_index(g, named_template("S3"));
    EXPECT_LT(s3.counters().candidate_expansions, scratch3.counters().candidate_expansions);
}

TEST(MatchStats, CliqueAndCycle) {
    auto k4 = match_stats(build_index(complete(4), named_template("S3")));
    EXPECT_EQ(k4.total_matches, 24u);
    EXPECT_EQ(k4.max_matches_per_ego, 6u);
    EXPECT_EQ(k4.egos_with_matches, 4u);
    EXPECT_EQ(k4.num_orbits, 2u);
    EXPECT_GT(k4.candidate_expansions, 0u);
    auto c6 = match_stats(build_index(synthetic::hexagon(), named_template("S3")));
    EXPECT_EQ(c6.total_matches, 0u);
    auto j = to_json(k4);
    EXPECT_EQ(j["total_matches"], 24);
}

TEST(MatchStats, SetSizeBoundedByNodeCount) {
    std::mt19937_64 rng(6);
    for (int i = 0; i < 5; ++i) {
        auto g = oracle::random_graph(30, 0.2, false, rng);
        for (const auto& name : {"S1", "S4", "S6"}) {
            auto s = match_stats(build_index(g, named_template(name)));
            EXPECT_LE(s.max_ae_set_size, g.num_nodes());
            EXPECT_LE(s.mean_ae_set_size, static_cast<double>(s.max_ae_set_size));
        }
    }
}
