#pragma once

#include <algorithm>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "grape/graph.hpp"

namespace grape::synthetic {

struct Dataset {
    std::string name;
    Graph graph;
    Matrix features;
    LabelVector labels;
};

inline void append_cycle(std::vector<Edge>& e, std::size_t n, NodeId offset) {
    for (std::size_t i = 0; i < n; ++i)
        e.push_back({static_cast<NodeId>(offset + i), static_cast<NodeId>(offset + (i + 1) % n)});
}

inline Graph cycle(std::size_t n) {
    std::vector<Edge> e;
    append_cycle(e, n, 0);
    return Graph::from_edges(n, e, false);
}

// The 2-regular pair used by the MPNN limitation demo.
inline Graph hexagon() { return cycle(6); }

inline Graph two_triangles() {
    std::vector<Edge> e{{0, 1}, {1, 2}, {2, 0}, {3, 4}, {4, 5}, {5, 3}};
    return Graph::from_edges(6, e, false);
}

// Nodes that lie on at least one triangle, by direct common-neighbor test.
inline std::vector<bool> triangle_members(const Graph& g) {
    std::vector<bool> in(g.num_nodes(), false);
    for (const Edge& e : g.edges()) {
        auto a = g.neighbors(e.src);
        auto b = g.neighbors(e.dst);
        std::vector<NodeId> common;
        std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(common));
        if (common.empty()) continue;
        in[e.src] = in[e.dst] = true;
        for (NodeId w : common) in[w] = true;
    }
    return in;
}

// Two stars with `leaves` leaves each; every node of star c carries the
// one-hot feature e_c and label c.
inline Dataset two_stars(std::size_t leaves = 10) {
    Dataset d;
    d.name = "two-stars";
    const std::size_t n = 2 * (leaves + 1);
    std::vector<Edge> e;
    for (std::size_t s = 0; s < 2; ++s) {
        const NodeId center = static_cast<NodeId>(s * (leaves + 1));
        for (std::size_t i = 1; i <= leaves; ++i) e.push_back({center, static_cast<NodeId>(center + i)});
    }
    d.graph = Graph::from_edges(n, e, false);
    d.features = Matrix(n, 2);
    d.labels.labels.resize(n);
    d.labels.num_classes = 2;
    for (std::size_t v = 0; v < n; ++v) {
        const int star = v < leaves + 1 ? 0 : 1;
        d.features(v, static_cast<std::size_t>(star)) = 1.0;
        d.labels.labels[v] = star;
    }
    return d;
}

// Disjoint triangles and hexagons with all-ones features; label 1 marks
// triangle nodes. Every node has degree 2, so 1-WL sees one color class.
inline Dataset cycle_vs_triangle(std::size_t triangles = 20, std::size_t hexagons = 10) {
    Dataset d;
    d.name = "cycle-vs-triangle";
    std::vector<Edge> e;
    NodeId next = 0;
    std::vector<int> labels;
    for (std::size_t t = 0; t < triangles; ++t, next += 3) {
        append_cycle(e, 3, next);
        labels.insert(labels.end(), 3, 1);
    }
    for (std::size_t h = 0; h < hexagons; ++h, next += 6) {
        append_cycle(e, 6, next);
        labels.insert(labels.end(), 6, 0);
    }
    d.graph = Graph::from_edges(next, e, false);
    d.features = Matrix(next, 1, 1.0);
    d.labels.labels = std::move(labels);
    d.labels.num_classes = 2;
    return d;
}

// Random graph with planted disjoint triangles. Non-planted nodes are
// threaded onto one long cycle so both groups gain two edges, then sparse
// G(n, p) noise is added on top. Labels mark actual triangle membership.
inline Dataset planted_triangles(std::size_t n = 180, std::size_t triangles = 20,
                                 double noise_degree = 1.0, std::uint64_t seed = 1) {
    if (3 * triangles + 4 > n) throw InputError("planted_triangles: too many triangles for n");
    // Own stream, so a split drawn with the same seed is not the same shuffle.
    std::seed_seq seq{seed, std::uint64_t{0x706c616e74}};
    std::mt19937_64 rng(seq);
    std::vector<NodeId> perm(n);
    std::iota(perm.begin(), perm.end(), NodeId{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<Edge> e;
    for (std::size_t t = 0; t < triangles; ++t) {
        NodeId a = perm[3 * t], b = perm[3 * t + 1], c = perm[3 * t + 2];
        e.push_back({a, b});
        e.push_back({b, c});
        e.push_back({c, a});
    }
    const std::size_t rest = n - 3 * triangles;
    for (std::size_t i = 0; i < rest; ++i)
        e.push_back({perm[3 * triangles + i], perm[3 * triangles + (i + 1) % rest]});
    const double p = noise_degree / static_cast<double>(n);
    std::bernoulli_distribution coin(p);
    for (NodeId u = 0; u < n; ++u)
        for (NodeId v = u + 1; v < n; ++v)
            if (coin(rng)) e.push_back({u, v});

    Dataset d;
    d.name = "planted-triangles";
    d.graph = Graph::from_edges(n, e, false);
    d.features = Matrix(n, 1, 1.0);
    auto in = triangle_members(d.graph);
    d.labels.labels.resize(n);
    for (std::size_t v = 0; v < n; ++v) d.labels.labels[v] = in[v] ? 1 : 0;
    d.labels.num_classes = 2;
    return d;
}

inline Dataset by_name(const std::string& name, std::uint64_t seed = 1) {
    if (name == "two-stars") return two_stars();
    if (name == "cycle-vs-triangle") return cycle_vs_triangle();
    if (name == "planted-triangles") return planted_triangles(180, 20, 1.0, seed);
    throw InputError("unknown synthetic dataset '" + name +
                     "' (expected two-stars|cycle-vs-triangle|planted-triangles)");
}

}  // namespace grape::synthetic
