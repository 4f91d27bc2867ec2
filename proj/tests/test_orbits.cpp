#include <gtest/gtest.h>

#include <map>
#include <random>
#include <set>

#include "grape/orbits.hpp"
#include "oracles.hpp"

using namespace grape;

namespace {

using Orbits = std::vector<std::vector<int>>;

Permutation compose(const Permutation& a, const Permutation& b) {
    Permutation c(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) c[i] = a[static_cast<std::size_t>(b[i])];
    return c;
}

Permutation inverse(const Permutation& a) {
    Permutation inv(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) inv[static_cast<std::size_t>(a[i])] = static_cast<int>(i);
    return inv;
}

std::set<std::pair<int, int>> mapped_edges(const AnchoredTemplate& t, const Permutation& p) {
    std::set<std::pair<int, int>> out;
    for (auto [a, b] : t.edges()) {
        int x = p[static_cast<std::size_t>(a)], y = p[static_cast<std::size_t>(b)];
        if (!t.directed() && x > y) std::swap(x, y);
        out.emplace(x, y);
    }
    return out;
}

}  // namespace

TEST(EgoAutomorphisms, Triangle) {
    auto autos = ego_automorphisms(named_template("S3"));
    EXPECT_EQ(autos, (std::vector<Permutation>{{0, 1, 2}, {0, 2, 1}}));
}

TEST(EgoAutomorphisms, PathAnchoredAtEnd) {
    auto autos = ego_automorphisms(named_template("S2"));
    EXPECT_EQ(autos, (std::vector<Permutation>{{0, 1, 2}}));
}

TEST(EgoAutomorphisms, FourCliqueHasSix) {
    // Oracle: every permutation of {1,2,3} preserves the complete edge set.
    auto autos = ego_automorphisms(named_template("S5"));
    EXPECT_EQ(autos.size(), 6u);
    std::set<Permutation> got(autos.begin(), autos.end());
    Permutation p{0, 1, 2, 3};
    std::set<Permutation> expect;
    do expect.insert(p);
    while (std::next_permutation(p.begin() + 1, p.end()));
    EXPECT_EQ(got, expect);
}

TEST(OrbitPartition, Triangle) {
    auto p = orbit_partition(named_template("S3"));
    EXPECT_EQ(p.orbits(), (Orbits{{0}, {1, 2}}));
    EXPECT_EQ(p.num_orbits, 2u);
    EXPECT_EQ(p.group_size, 2u);
}

TEST(OrbitPartition, FourClique) {
    EXPECT_EQ(orbit_partition(named_template("S5")).orbits(), (Orbits{{0}, {1, 2, 3}}));
}

TEST(OrbitPartition, TailedTriangle) {
    EXPECT_EQ(orbit_partition(named_template("S6")).orbits(), (Orbits{{0}, {1, 2}, {3}}));
}

TEST(OrbitPartition, FromTo) {
    EXPECT_EQ(orbit_partition(named_template("S10")).orbits(), (Orbits{{0}, {1}, {2}}));
}

TEST(OrbitPartition, CatalogueCounts) {
    const std::map<std::string, std::size_t> expect{{"S1", 2}, {"S2", 3}, {"S3", 2}, {"S4", 4},
                                                    {"S5", 2}, {"S6", 3}, {"S7", 2}, {"S8", 2},
                                                    {"S9", 2}, {"S10", 3}, {"S11", 2}, {"S11c", 3}};
    for (const auto& [name, m] : expect)
        EXPECT_EQ(orbit_partition(named_template(name)).num_orbits, m) << name;
    EXPECT_EQ(orbit_partition(named_template("S11")).orbits(), (Orbits{{0}, {1, 2}}));
    EXPECT_EQ(orbit_partition(named_template("S11c")).group_size, 1u);
}

TEST(OrbitPartition, Json) {
    auto j = to_json(orbit_partition(named_template("S3")));
    EXPECT_EQ(j.dump(), R"({"group_size":2,"orbits":[[0],[1,2]]})");
}

TEST(OrbitProperty, AutomorphismsPreserveEdgesAndFormAGroup) {
    std::mt19937_64 rng(17);
    std::vector<AnchoredTemplate> ts;
    for (const auto& n : all_template_names()) ts.push_back(named_template(n));
    // Exhaustive at cap size: star and complete graphs on 6 nodes plus randoms.
    ts.emplace_back(6, AnchoredTemplate::EdgeList{{0, 1}, {0, 2}, {0, 3}, {0, 4}, {0, 5}}, false);
    AnchoredTemplate::EdgeList k6;
    for (int a = 0; a < 6; ++a)
        for (int b = a + 1; b < 6; ++b) k6.emplace_back(a, b);
    ts.emplace_back(6, k6, false);
    for (int i = 0; i < 60; ++i) ts.push_back(oracle::random_template(2 + static_cast<std::size_t>(i % 5), i % 3 == 0, rng, 0.4));

    for (const auto& t : ts) {
        auto autos = ego_automorphisms(t);
        ASSERT_FALSE(autos.empty());
        Permutation id(t.num_nodes());
        std::iota(id.begin(), id.end(), 0);
        EXPECT_EQ(autos.front(), id);
        std::set<Permutation> group(autos.begin(), autos.end());
        EXPECT_EQ(group.size(), autos.size());
        const auto edges = mapped_edges(t, id);
        for (const auto& a : autos) {
            EXPECT_EQ(a[0], 0);
            EXPECT_EQ(mapped_edges(t, a), edges);
            EXPECT_TRUE(group.count(inverse(a)));
            for (const auto& b : autos) EXPECT_TRUE(group.count(compose(a, b)));
        }
        // Partition: anchor alone, smallest-member numbering, i~j iff some automorphism maps i to j.
        auto p = orbit_partition(t);
        EXPECT_EQ(p.orbit_of[0], 0);
        auto orbs = p.orbits();
        EXPECT_EQ(orbs[0], std::vector<int>{0});
        for (std::size_t j = 1; j < orbs.size(); ++j) EXPECT_LT(orbs[j - 1].front(), orbs[j].front());
        for (std::size_t i = 0; i < t.num_nodes(); ++i)
            for (std::size_t j = 0; j < t.num_nodes(); ++j) {
                bool reach = false;
                for (const auto& a : autos) reach |= a[i] == static_cast<int>(j);
                EXPECT_EQ(reach, p.orbit_of[i] == p.orbit_of[j]);
            }
    }
}

TEST(OrbitProperty, CapSizeStarHasFullSymmetricGroup) {
    AnchoredTemplate star(6, {{0, 1}, {0, 2}, {0, 3}, {0, 4}, {0, 5}}, false);
    auto p = orbit_partition(star);
    EXPECT_EQ(p.group_size, 120u);
    EXPECT_EQ(p.num_orbits, 2u);
}
