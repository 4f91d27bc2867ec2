#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include <json.hpp>

#include "grape/model.hpp"
#include "grape/synthetic.hpp"

namespace grape {

// MPNN vs GRAPE on two 2-regular graphs with uniform features: a 6-cycle
// and two disjoint triangles.
struct LimitationReport {
    // Max pairwise embedding distance over all 12 nodes and all layers, per MPNN depth.
    std::vector<double> mpnn_distance_by_depth;
    // Triangle-node vs cycle-node distance per GRAPE seed.
    std::vector<double> grape_distances;
    std::size_t grape_layers = 0;
    double threshold = 1e-6;

    double mpnn_max_distance() const {
        double m = 0.0;
        for (double d : mpnn_distance_by_depth) m = std::max(m, d);
        return m;
    }
    std::size_t separated() const {
        std::size_t s = 0;
        for (double d : grape_distances) s += d > threshold ? 1 : 0;
        return s;
    }
    bool passed() const {
        return mpnn_max_distance() == 0.0 && separated() == grape_distances.size();
    }
};

namespace detail {
inline double row_distance(const Matrix& a, std::size_t i, const Matrix& b, std::size_t j) {
    double s = 0.0;
    for (std::size_t c = 0; c < a.cols(); ++c) s += (a(i, c) - b(j, c)) * (a(i, c) - b(j, c));
    return std::sqrt(s);
}
}  // namespace detail

inline LimitationReport limitation_demo(std::size_t max_depth = 5, std::size_t seeds = 20,
                                        std::uint64_t base_seed = 0, std::size_t grape_layers = 2) {
    const Graph c6 = synthetic::hexagon();
    const Graph tt = synthetic::two_triangles();
    const Matrix x(6, 1, 1.0);
    LimitationReport rep;
    rep.grape_layers = grape_layers;

    for (std::size_t depth = 1; depth <= max_depth; ++depth) {
        auto a = mpnn_forward(c6, x, depth, base_seed);
        auto b = mpnn_forward(tt, x, depth, base_seed);
        double worst = 0.0;
        for (std::size_t k = 0; k < depth; ++k) {
            const Matrix* hs[2] = {&a[k], &b[k]};
            for (int p = 0; p < 2; ++p)
                for (int q = 0; q < 2; ++q)
                    for (std::size_t i = 0; i < 6; ++i)
                        for (std::size_t j = 0; j < 6; ++j)
                            worst = std::max(worst, detail::row_distance(*hs[p], i, *hs[q], j));
        }
        rep.mpnn_distance_by_depth.push_back(worst);
    }

    const auto s3 = named_template("S3");
    const auto i6 = build_index(c6, s3);
    const auto it = build_index(tt, s3);
    for (std::size_t s = 0; s < seeds; ++s) {
        ModelConfig cfg;
        cfg.layers = grape_layers;
        cfg.seed = base_seed + s;
        GrapeModel model(cfg, {i6.num_orbits()}, 1, 2);
        auto cyc = forward(model, {&i6}, x).embeddings();
        auto tri = forward(model, {&it}, x).embeddings();
        rep.grape_distances.push_back(detail::row_distance(tri, 0, cyc, 0));
    }
    return rep;
}

inline nlohmann::json to_json(const LimitationReport& r) {
    return nlohmann::json{{"mpnn_distance_by_depth", r.mpnn_distance_by_depth},
                          {"mpnn_max_distance", r.mpnn_max_distance()},
                          {"grape_layers", r.grape_layers},
                          {"grape_distances", r.grape_distances},
                          {"grape_separated", r.separated()},
                          {"grape_seeds", r.grape_distances.size()},
                          {"threshold", r.threshold},
                          {"passed", r.passed()}};
}

}  // namespace grape
