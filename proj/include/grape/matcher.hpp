#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <span>
#include <thread>
#include <vector>

#include "grape/error.hpp"
#include "grape/graph.hpp"
#include "grape/orbits.hpp"
#include "grape/templates.hpp"

namespace grape {

// mapping[i] = graph node playing template node i; mapping[0] is the ego.
using Match = std::vector<NodeId>;

struct MatchOptions {
    // Lets undirected templates match directed graphs, reading each template
    // edge as "adjacent in either direction".
    bool ignore_direction = false;
    std::size_t max_matches_per_ego = 10'000;
    unsigned threads = 1;
};

struct MatchCounters {
    // Candidate graph nodes examined: backtracking visits for scratch
    // matching, neighbor probes for node extension, arc checks for filtering.
    std::uint64_t candidate_expansions = 0;
    std::uint64_t truncated_egos = 0;

    MatchCounters& operator+=(const MatchCounters& o) {
        candidate_expansions += o.candidate_expansions;
        truncated_egos += o.truncated_egos;
        return *this;
    }
};

namespace detail {

enum class ArcMode { Directed, Undirected, EitherDirection };

inline ArcMode arc_mode(const Graph& g, const AnchoredTemplate& t, const MatchOptions& opt) {
    if (t.directed()) return ArcMode::Directed;
    if (!g.directed()) return ArcMode::Undirected;
    if (!opt.ignore_direction)
        throw InputError("undirected template on a directed graph needs ignore_direction");
    return ArcMode::EitherDirection;
}

// Does the graph realize template arc a->b under images x, y?
inline bool realizes(const Graph& g, ArcMode mode, NodeId x, NodeId y) {
    if (mode == ArcMode::EitherDirection) return g.has_arc(x, y) || g.has_arc(y, x);
    return g.has_arc(x, y);
}

// Graph nodes that may play `child` given `anchor_img` plays `parent` in the
// template; `buf` backs the merged list in EitherDirection mode.
inline std::span<const NodeId> candidates(const Graph& g, const AnchoredTemplate& t, ArcMode mode,
                                          int parent, int child, NodeId anchor_img,
                                          std::vector<NodeId>& buf) {
    if (mode == ArcMode::EitherDirection) {
        auto out = g.out_neighbors(anchor_img);
        auto in = g.in_neighbors(anchor_img);
        buf.clear();
        std::set_union(out.begin(), out.end(), in.begin(), in.end(), std::back_inserter(buf));
        return buf;
    }
    if (t.has_arc(parent, child)) return g.out_neighbors(anchor_img);
    return g.in_neighbors(anchor_img);
}

struct SearchPlan {
    std::vector<int> order;   // template nodes in visiting order, order[0] = 0
    std::vector<int> parent;  // parent[k] = earlier template node adjacent to order[k]
};

// Greedy most-connected-first order over the template skeleton.
inline SearchPlan plan_search(const AnchoredTemplate& t) {
    const int n = static_cast<int>(t.num_nodes());
    SearchPlan p;
    std::vector<bool> placed(static_cast<std::size_t>(n), false);
    p.order.push_back(0);
    p.parent.push_back(-1);
    placed[0] = true;
    while (static_cast<int>(p.order.size()) < n) {
        int best = -1, best_links = -1;
        for (int v = 1; v < n; ++v) {
            if (placed[static_cast<std::size_t>(v)]) continue;
            int links = 0;
            for (int u : p.order) links += t.adjacent(u, v) ? 1 : 0;
            if (links > best_links) {
                best = v;
                best_links = links;
            }
        }
        int par = -1;
        for (int u : p.order)
            if (t.adjacent(u, best)) {
                par = u;
                break;
            }
        p.order.push_back(best);
        p.parent.push_back(par);
        placed[static_cast<std::size_t>(best)] = true;
    }
    return p;
}

class Backtracker {
public:
    Backtracker(const Graph& g, const AnchoredTemplate& t, ArcMode mode, std::size_t cap)
        : g_(g), t_(t), mode_(mode), cap_(cap), plan_(plan_search(t)),
          mapping_(t.num_nodes(), 0), bufs_(t.num_nodes()) {}

    std::vector<Match> run(NodeId ego, MatchCounters& counters) {
        out_.clear();
        truncated_ = false;
        mapping_[0] = ego;
        ++counters.candidate_expansions;
        extend(1, counters);
        if (truncated_) ++counters.truncated_egos;
        std::sort(out_.begin(), out_.end());
        return std::move(out_);
    }

private:
    void extend(std::size_t depth, MatchCounters& counters) {
        if (out_.size() >= cap_) {
            truncated_ = true;
            return;
        }
        if (depth == plan_.order.size()) {
            out_.push_back(mapping_);
            return;
        }
        const int tnode = plan_.order[depth];
        const int par = plan_.parent[depth];
        auto cands = candidates(g_, t_, mode_, par, tnode,
                                mapping_[static_cast<std::size_t>(par)], bufs_[depth]);
        for (NodeId w : cands) {
            ++counters.candidate_expansions;
            if (!feasible(depth, tnode, w)) continue;
            mapping_[static_cast<std::size_t>(tnode)] = w;
            extend(depth + 1, counters);
            if (truncated_) return;
        }
    }

    bool feasible(std::size_t depth, int tnode, NodeId w) const {
        for (std::size_t k = 0; k < depth; ++k) {
            const int u = plan_.order[k];
            const NodeId x = mapping_[static_cast<std::size_t>(u)];
            if (x == w) return false;
            if (t_.has_arc(u, tnode) && !realizes(g_, mode_, x, w)) return false;
            if (t_.directed() && t_.has_arc(tnode, u) && !realizes(g_, mode_, w, x)) return false;
        }
        return true;
    }

    const Graph& g_;
    const AnchoredTemplate& t_;
    ArcMode mode_;
    std::size_t cap_;
    SearchPlan plan_;
    Match mapping_;
    std::vector<std::vector<NodeId>> bufs_;
    std::vector<Match> out_;
    bool truncated_ = false;
};

}  // namespace detail

// All anchor-fixed monomorphisms of `t` into `g` with node 0 on `ego`,
// sorted lexicographically by mapping.
inline std::vector<Match> match_template(const Graph& g, const AnchoredTemplate& t, NodeId ego,
                                         const MatchOptions& opt = {},
                                         MatchCounters* counters = nullptr) {
    if (ego >= g.num_nodes()) throw InputError("ego node out of range");
    MatchCounters local;
    detail::Backtracker bt(g, t, detail::arc_mode(g, t, opt), opt.max_matches_per_ego);
    auto out = bt.run(ego, local);
    if (counters) *counters += local;
    return out;
}

// Per-ego matches of one template plus the Ego-AE node sets they induce.
class EgoAeIndex {
public:
    using NodeSet = std::vector<NodeId>;

    EgoAeIndex() = default;
    EgoAeIndex(AnchoredTemplate t, std::size_t num_egos)
        : tmpl_(std::move(t)), orbits_(orbit_partition(tmpl_)), flat_(num_egos), ae_(num_egos) {}

    const AnchoredTemplate& tmpl() const noexcept { return tmpl_; }
    const OrbitPartition& orbits() const noexcept { return orbits_; }
    std::size_t num_egos() const noexcept { return flat_.size(); }
    std::size_t num_orbits() const noexcept { return orbits_.num_orbits; }

    std::size_t match_count(NodeId v) const noexcept { return flat_[v].size() / tmpl_.num_nodes(); }
    std::span<const NodeId> match(NodeId v, std::size_t i) const noexcept {
        const auto k = tmpl_.num_nodes();
        return {flat_[v].data() + i * k, k};
    }
    std::vector<Match> matches(NodeId v) const {
        std::vector<Match> out;
        for (std::size_t i = 0; i < match_count(v); ++i) {
            auto m = match(v, i);
            out.emplace_back(m.begin(), m.end());
        }
        return out;
    }
    std::size_t total_matches() const noexcept {
        std::size_t s = 0;
        for (const auto& f : flat_) s += f.size();
        return s / tmpl_.num_nodes();
    }

    // ae_sets(v)[j] = sorted node set of orbit j around ego v.
    const std::vector<NodeSet>& ae_sets(NodeId v) const noexcept { return ae_[v]; }

    const MatchCounters& counters() const noexcept { return counters_; }
    MatchCounters& counters() noexcept { return counters_; }

    // Replaces ego v's matches (sorted) and recomputes its Ego-AE sets.
    void set_matches(NodeId v, std::vector<NodeId> flat) {
        flat_[v] = std::move(flat);
        const auto k = tmpl_.num_nodes();
        auto& sets = ae_[v];
        sets.assign(orbits_.num_orbits, {});
        if (flat_[v].empty()) {
            sets[0].push_back(v);
            return;
        }
        for (std::size_t pos = 0; pos < flat_[v].size(); ++pos)
            sets[static_cast<std::size_t>(orbits_.orbit_of[pos % k])].push_back(flat_[v][pos]);
        for (auto& s : sets) {
            std::sort(s.begin(), s.end());
            s.erase(std::unique(s.begin(), s.end()), s.end());
        }
    }

    // Same template labeling, matches and Ego-AE sets (counters ignored).
    friend bool operator==(const EgoAeIndex& a, const EgoAeIndex& b) {
        return a.tmpl_ == b.tmpl_ && a.flat_ == b.flat_ && a.ae_ == b.ae_;
    }

private:
    AnchoredTemplate tmpl_;
    OrbitPartition orbits_;
    std::vector<std::vector<NodeId>> flat_;
    std::vector<std::vector<NodeSet>> ae_;
    MatchCounters counters_;
};

namespace detail {

// Runs fn(v, counters) for every ego, split into contiguous chunks across
// threads; counters are summed in chunk order.
template <typename Fn>
MatchCounters for_each_ego(std::size_t n, unsigned threads, Fn&& fn) {
    threads = std::max(1U, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
    std::vector<MatchCounters> parts(threads);
    auto work = [&](unsigned t) {
        const std::size_t lo = n * t / threads, hi = n * (t + 1) / threads;
        for (std::size_t v = lo; v < hi; ++v) fn(static_cast<NodeId>(v), parts[t]);
    };
    if (threads == 1) {
        work(0);
    } else {
        std::vector<std::jthread> pool;
        for (unsigned t = 0; t < threads; ++t) pool.emplace_back(work, t);
    }
    MatchCounters total;
    for (const auto& p : parts) total += p;
    return total;
}

inline std::vector<NodeId> flatten(const std::vector<Match>& ms) {
    std::vector<NodeId> flat;
    for (const auto& m : ms) flat.insert(flat.end(), m.begin(), m.end());
    return flat;
}

}  // namespace detail

inline EgoAeIndex build_index(const Graph& g, const AnchoredTemplate& t,
                              const MatchOptions& opt = {}) {
    const auto mode = detail::arc_mode(g, t, opt);
    EgoAeIndex idx(t, g.num_nodes());
    idx.counters() = detail::for_each_ego(g.num_nodes(), opt.threads, [&](NodeId v, MatchCounters& c) {
        detail::Backtracker bt(g, idx.tmpl(), mode, opt.max_matches_per_ego);
        idx.set_matches(v, detail::flatten(bt.run(v, c)));
    });
    return idx;
}

// Child = parent plus one node attached to `attach_at`: every child match
// is a parent match extended by one neighbor of the attach point's image.
inline EgoAeIndex extend_node_mutation(const Graph& g, const EgoAeIndex& parent,
                                       const AnchoredTemplate& child, int attach_at,
                                       const MatchOptions& opt = {}) {
    const auto& pt = parent.tmpl();
    const int fresh = static_cast<int>(pt.num_nodes());
    if (child.num_nodes() != pt.num_nodes() + 1 || child.directed() != pt.directed() ||
        attach_at < 0 || attach_at >= fresh)
        throw InputError("extend_node_mutation: child is not parent plus one node");
    {
        auto expect = child.edges();
        auto drop = std::find_if(expect.begin(), expect.end(), [&](auto e) {
            return e.first == fresh || e.second == fresh;
        });
        if (drop == expect.end() ||
            (drop->first != attach_at && drop->second != attach_at))
            throw InputError("extend_node_mutation: new node is not attached at attach_at");
        expect.erase(drop);
        if (expect != pt.edges())
            throw InputError("extend_node_mutation: child edges do not extend parent edges");
    }
    const auto mode = detail::arc_mode(g, child, opt);
    const std::size_t k = pt.num_nodes();
    EgoAeIndex idx(child, g.num_nodes());
    idx.counters() = detail::for_each_ego(g.num_nodes(), opt.threads, [&](NodeId v, MatchCounters& c) {
        std::vector<NodeId> flat;
        std::vector<NodeId> buf;
        bool truncated = false;
        for (std::size_t i = 0; i < parent.match_count(v) && !truncated; ++i) {
            auto m = parent.match(v, i);
            auto cands = detail::candidates(g, child, mode, attach_at, fresh,
                                            m[static_cast<std::size_t>(attach_at)], buf);
            for (NodeId w : cands) {
                ++c.candidate_expansions;
                if (std::find(m.begin(), m.end(), w) != m.end()) continue;
                if (flat.size() / (k + 1) >= opt.max_matches_per_ego) {
                    truncated = true;
                    break;
                }
                flat.insert(flat.end(), m.begin(), m.end());
                flat.push_back(w);
            }
        }
        if (truncated) ++c.truncated_egos;
        idx.set_matches(v, std::move(flat));
    });
    return idx;
}

// Child = parent plus one arc between existing nodes: keep the parent
// matches whose images realize it.
inline EgoAeIndex filter_edge_mutation(const Graph& g, const EgoAeIndex& parent,
                                       const AnchoredTemplate& child, std::pair<int, int> new_edge,
                                       const MatchOptions& opt = {}) {
    const auto& pt = parent.tmpl();
    auto [a, b] = new_edge;
    const int n = static_cast<int>(pt.num_nodes());
    if (child.num_nodes() != pt.num_nodes() || child.directed() != pt.directed() || a < 0 ||
        b < 0 || a >= n || b >= n || a == b || pt.has_arc(a, b) || !(child == pt.with_edge(a, b, AnchoredTemplate::kHardMaxNodes)))
        throw InputError("filter_edge_mutation: child is not parent plus the given edge");
    const auto mode = detail::arc_mode(g, child, opt);
    EgoAeIndex idx(child, g.num_nodes());
    idx.counters() = detail::for_each_ego(g.num_nodes(), opt.threads, [&](NodeId v, MatchCounters& c) {
        std::vector<NodeId> flat;
        for (std::size_t i = 0; i < parent.match_count(v); ++i) {
            auto m = parent.match(v, i);
            ++c.candidate_expansions;
            if (detail::realizes(g, mode, m[static_cast<std::size_t>(a)], m[static_cast<std::size_t>(b)]))
                flat.insert(flat.end(), m.begin(), m.end());
        }
        idx.set_matches(v, std::move(flat));
    });
    return idx;
}

struct MatchStats {
    std::size_t total_matches = 0;
    std::size_t egos_with_matches = 0;
    std::size_t max_matches_per_ego = 0;
    std::size_t num_orbits = 0;         // M
    double mean_ae_set_size = 0.0;      // Q, over all (ego, orbit) pairs
    std::size_t max_ae_set_size = 0;
    std::uint64_t candidate_expansions = 0;
    std::uint64_t truncated_egos = 0;
};

inline MatchStats match_stats(const EgoAeIndex& idx) {
    MatchStats s;
    s.num_orbits = idx.num_orbits();
    std::size_t set_total = 0, set_count = 0;
    for (NodeId v = 0; v < idx.num_egos(); ++v) {
        const auto c = idx.match_count(v);
        s.total_matches += c;
        s.egos_with_matches += c > 0 ? 1 : 0;
        s.max_matches_per_ego = std::max(s.max_matches_per_ego, c);
        for (const auto& set : idx.ae_sets(v)) {
            set_total += set.size();
            ++set_count;
            s.max_ae_set_size = std::max(s.max_ae_set_size, set.size());
        }
    }
    s.mean_ae_set_size = set_count ? static_cast<double>(set_total) / static_cast<double>(set_count) : 0.0;
    s.candidate_expansions = idx.counters().candidate_expansions;
    s.truncated_egos = idx.counters().truncated_egos;
    return s;
}

inline nlohmann::json to_json(const MatchStats& s) {
    return nlohmann::json{{"total_matches", s.total_matches},
                          {"egos_with_matches", s.egos_with_matches},
                          {"max_matches_per_ego", s.max_matches_per_ego},
                          {"num_orbits", s.num_orbits},
                          {"mean_ae_set_size", s.mean_ae_set_size},
                          {"max_ae_set_size", s.max_ae_set_size},
                          {"candidate_expansions", s.candidate_expansions},
                          {"truncated_egos", s.truncated_egos}};
}

}  // namespace grape
