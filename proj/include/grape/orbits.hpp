#pragma once

#include <algorithm>
#include <numeric>
#include <vector>

#include <json.hpp>

#include "grape/templates.hpp"

namespace grape {

// perm[i] = image of template node i.
using Permutation = std::vector<int>;

// Every relabeling that fixes the anchor and maps the arc set onto itself.
// Brute force over (n-1)! candidates; identity comes first.
inline std::vector<Permutation> ego_automorphisms(const AnchoredTemplate& t) {
    const int n = static_cast<int>(t.num_nodes());
    Permutation perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    std::vector<Permutation> out;
    do {
        bool ok = true;
        for (auto [a, b] : t.edges()) {
            if (!t.has_arc(perm[a], perm[b])) {
                ok = false;
                break;
            }
        }
        // Edge counts match, so preserving every arc makes the map onto.
        if (ok) out.push_back(perm);
    } while (std::next_permutation(perm.begin() + 1, perm.end()));
    return out;
}

// Ego-AE orbits of a template. Orbit 0 is always {anchor}; orbits are
// numbered by ascending smallest member.
struct OrbitPartition {
    std::vector<int> orbit_of;
    std::size_t num_orbits = 0;
    std::size_t group_size = 0;

    std::vector<std::vector<int>> orbits() const {
        std::vector<std::vector<int>> out(num_orbits);
        for (std::size_t i = 0; i < orbit_of.size(); ++i)
            out[static_cast<std::size_t>(orbit_of[i])].push_back(static_cast<int>(i));
        return out;
    }

    friend bool operator==(const OrbitPartition&, const OrbitPartition&) = default;
};

inline OrbitPartition orbit_partition(const AnchoredTemplate& t) {
    const auto autos = ego_automorphisms(t);
    const std::size_t n = t.num_nodes();
    OrbitPartition p;
    p.group_size = autos.size();
    p.orbit_of.assign(n, -1);
    int next = 0;
    // Visiting nodes in ascending order gives the smallest-member numbering.
    for (std::size_t i = 0; i < n; ++i) {
        if (p.orbit_of[i] != -1) continue;
        for (const auto& a : autos) p.orbit_of[static_cast<std::size_t>(a[i])] = next;
        ++next;
    }
    p.num_orbits = static_cast<std::size_t>(next);
    return p;
}

inline nlohmann::json to_json(const OrbitPartition& p) {
    return nlohmann::json{{"orbits", p.orbits()}, {"group_size", p.group_size}};
}

}  // namespace grape
