#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "grape/error.hpp"
#include "grape/matrix.hpp"

namespace grape {

using NodeId = std::uint32_t;

struct Edge {
    NodeId src = 0;
    NodeId dst = 0;
    friend auto operator<=>(const Edge&, const Edge&) = default;
};

struct GraphBuildReport {
    std::size_t dropped_self_loops = 0;
    std::size_t dropped_duplicates = 0;
};

// Immutable graph in CSR form. Undirected graphs store each edge in both
// directions; in-neighbors alias out-neighbors.
class Graph {
public:
    Graph() = default;

    static Graph from_edges(std::size_t num_nodes, std::span<const Edge> edges, bool directed,
                            GraphBuildReport* report = nullptr) {
        Graph g;
        g.num_nodes_ = num_nodes;
        g.directed_ = directed;
        GraphBuildReport rep;

        std::vector<Edge> norm;
        norm.reserve(edges.size());
        for (const Edge& e : edges) {
            if (e.src >= num_nodes || e.dst >= num_nodes)
                throw InputError("edge (" + std::to_string(e.src) + "," + std::to_string(e.dst) +
                                 ") out of range for " + std::to_string(num_nodes) + " nodes");
            if (e.src == e.dst) {
                ++rep.dropped_self_loops;
                continue;
            }
            if (!directed && e.src > e.dst)
                norm.push_back({e.dst, e.src});
            else
                norm.push_back(e);
        }
        std::sort(norm.begin(), norm.end());
        auto last = std::unique(norm.begin(), norm.end());
        rep.dropped_duplicates = static_cast<std::size_t>(norm.end() - last);
        norm.erase(last, norm.end());
        g.edges_ = std::move(norm);

        std::vector<Edge> arcs;
        arcs.reserve(g.edges_.size() * (directed ? 1 : 2));
        for (const Edge& e : g.edges_) {
            arcs.push_back(e);
            if (!directed) arcs.push_back({e.dst, e.src});
        }
        build_csr(num_nodes, arcs, false, g.out_offsets_, g.out_targets_);
        if (directed) build_csr(num_nodes, arcs, true, g.in_offsets_, g.in_targets_);

        if (report) *report = rep;
        return g;
    }

    std::size_t num_nodes() const noexcept { return num_nodes_; }
    // Undirected: number of unordered edges. Directed: number of arcs.
    std::size_t num_edges() const noexcept { return edges_.size(); }
    bool directed() const noexcept { return directed_; }
    std::span<const Edge> edges() const noexcept { return edges_; }

    std::span<const NodeId> out_neighbors(NodeId v) const noexcept {
        return {out_targets_.data() + out_offsets_[v], out_offsets_[v + 1] - out_offsets_[v]};
    }
    std::span<const NodeId> in_neighbors(NodeId v) const noexcept {
        if (!directed_) return out_neighbors(v);
        return {in_targets_.data() + in_offsets_[v], in_offsets_[v + 1] - in_offsets_[v]};
    }
    // Undirected neighbors; for directed graphs this is the out-neighborhood.
    std::span<const NodeId> neighbors(NodeId v) const noexcept { return out_neighbors(v); }

    std::size_t degree(NodeId v) const noexcept { return out_neighbors(v).size(); }

    // Arc u -> v exists (symmetric for undirected graphs).
    bool has_arc(NodeId u, NodeId v) const noexcept {
        auto nb = out_neighbors(u);
        return std::binary_search(nb.begin(), nb.end(), v);
    }

    friend bool operator==(const Graph& a, const Graph& b) {
        return a.num_nodes_ == b.num_nodes_ && a.directed_ == b.directed_ && a.edges_ == b.edges_;
    }

private:
    static void build_csr(std::size_t n, const std::vector<Edge>& arcs, bool reverse,
                          std::vector<std::size_t>& offsets, std::vector<NodeId>& targets) {
        offsets.assign(n + 1, 0);
        for (const Edge& a : arcs) ++offsets[(reverse ? a.dst : a.src) + 1];
        std::partial_sum(offsets.begin(), offsets.end(), offsets.begin());
        targets.assign(arcs.size(), 0);
        std::vector<std::size_t> cursor(offsets.begin(), offsets.end() - 1);
        for (const Edge& a : arcs) {
            NodeId from = reverse ? a.dst : a.src;
            targets[cursor[from]++] = reverse ? a.src : a.dst;
        }
        for (std::size_t v = 0; v < n; ++v)
            std::sort(targets.begin() + static_cast<std::ptrdiff_t>(offsets[v]),
                      targets.begin() + static_cast<std::ptrdiff_t>(offsets[v + 1]));
    }

    std::size_t num_nodes_ = 0;
    bool directed_ = false;
    std::vector<Edge> edges_;
    std::vector<std::size_t> out_offsets_{0};
    std::vector<NodeId> out_targets_;
    std::vector<std::size_t> in_offsets_;
    std::vector<NodeId> in_targets_;
};

// ---------------------------------------------------------------------------
// Edge-list I/O

struct LoadedGraph {
    Graph graph;
    // original_ids[dense] = id as written in the input file
    std::vector<long long> original_ids;
    bool remapped = false;
    GraphBuildReport report;

    // Dense id of an original id, or -1.
    long long dense_id(long long original) const {
        auto it = std::lower_bound(original_ids.begin(), original_ids.end(), original);
        if (it == original_ids.end() || *it != original) return -1;
        return it - original_ids.begin();
    }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    const char* ws = " \t\r\n";
    auto b = s.find_first_not_of(ws);
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(ws);
    return s.substr(b, e - b + 1);
}

template <typename T>
bool parse_number(std::string_view tok, T& out) {
    tok = trim(tok);
    if (tok.empty()) return false;
    if (tok.front() == '+') tok.remove_prefix(1);
    auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), out);
    return ec == std::errc() && p == tok.data() + tok.size();
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        auto pos = s.find(sep, start);
        out.push_back(s.substr(start, pos == std::string_view::npos ? pos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

inline std::ifstream open_or_throw(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open " + path);
    return in;
}

}  // namespace detail

// Reads "src dst" pairs; '#' lines and blank lines are ignored. Ids are
// densely remapped in ascending order of their original value, so inputs that
// already use 0..n-1 keep their ids. A "# nodes N" header (as written by
// write_edge_list) fixes the node set to 0..N-1, keeping isolated nodes.
inline LoadedGraph read_edge_list(std::istream& in, bool directed) {
    std::vector<std::pair<long long, long long>> raw;
    std::string line;
    std::size_t lineno = 0;
    long long declared = -1;
    while (std::getline(in, line)) {
        ++lineno;
        auto t = detail::trim(line);
        if (t.starts_with("# nodes ")) {
            std::istringstream hs{std::string(t.substr(8))};
            std::string count;
            if (hs >> count && detail::parse_number(count, declared) && declared > 0) continue;
            throw ParseError("bad '# nodes' header", lineno);
        }
        if (t.empty() || t.front() == '#') continue;
        std::istringstream ss{std::string(t)};
        std::string a, b, extra;
        long long u = 0, v = 0;
        if (!(ss >> a >> b) || (ss >> extra) || !detail::parse_number(a, u) ||
            !detail::parse_number(b, v))
            throw ParseError("expected two integer node ids, got '" + std::string(t) + "'", lineno);
        if (u < 0 || v < 0) throw ParseError("negative node id", lineno);
        if (declared > 0 && (u >= declared || v >= declared))
            throw ParseError("node id exceeds declared node count", lineno);
        raw.emplace_back(u, v);
    }
    if (raw.empty()) throw InputError("edge list contains no edges");

    LoadedGraph out;
    for (auto [u, v] : raw) {
        out.original_ids.push_back(u);
        out.original_ids.push_back(v);
    }
    for (long long i = 0; i < declared; ++i) out.original_ids.push_back(i);
    std::sort(out.original_ids.begin(), out.original_ids.end());
    out.original_ids.erase(std::unique(out.original_ids.begin(), out.original_ids.end()),
                           out.original_ids.end());
    out.remapped = out.original_ids.back() != static_cast<long long>(out.original_ids.size()) - 1;

    std::vector<Edge> edges;
    edges.reserve(raw.size());
    for (auto [u, v] : raw)
        edges.push_back({static_cast<NodeId>(out.dense_id(u)), static_cast<NodeId>(out.dense_id(v))});
    out.graph = Graph::from_edges(out.original_ids.size(), edges, directed, &out.report);
    return out;
}

inline LoadedGraph load_edge_list(const std::string& path, bool directed) {
    auto in = detail::open_or_throw(path);
    return read_edge_list(in, directed);
}

inline void write_edge_list(const Graph& g, std::ostream& out) {
    out << "# nodes " << g.num_nodes() << (g.directed() ? " directed" : " undirected") << '\n';
    for (const Edge& e : g.edges()) out << e.src << ' ' << e.dst << '\n';
}

// Sidecar emitted when ids were remapped: {"dense_to_original": [...]}.
inline nlohmann::json id_map_json(const LoadedGraph& lg) {
    return nlohmann::json{{"dense_to_original", lg.original_ids}};
}

// ---------------------------------------------------------------------------
// Features and labels

using FeatureMatrix = Matrix;

inline FeatureMatrix read_features(std::istream& in, std::size_t n) {
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t lineno = 0;
    std::size_t cols = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto t = detail::trim(line);
        if (t.empty()) continue;
        std::vector<double> row;
        for (auto cell : detail::split(t, ',')) {
            double v = 0.0;
            if (!detail::parse_number(cell, v) || !std::isfinite(v))
                throw ParseError("non-numeric feature cell '" + std::string(detail::trim(cell)) + "'",
                                 lineno);
            row.push_back(v);
        }
        if (rows.empty())
            cols = row.size();
        else if (row.size() != cols)
            throw ParseError("expected " + std::to_string(cols) + " columns, got " +
                                 std::to_string(row.size()),
                             lineno);
        rows.push_back(std::move(row));
    }
    if (rows.size() != n)
        throw InputError("feature file has " + std::to_string(rows.size()) + " rows, graph has " +
                         std::to_string(n) + " nodes");
    FeatureMatrix x(n, cols);
    for (std::size_t i = 0; i < n; ++i) std::copy(rows[i].begin(), rows[i].end(), x.row(i).begin());
    return x;
}

inline FeatureMatrix load_features(const std::string& path, std::size_t n) {
    auto in = detail::open_or_throw(path);
    return read_features(in, n);
}

inline FeatureMatrix dummy_features(std::size_t n) { return FeatureMatrix(n, 1, 1.0); }

inline FeatureMatrix random_features(std::size_t n, std::size_t dim, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    FeatureMatrix x(n, dim);
    for (double& v : x.values()) v = u(rng);
    return x;
}

// Each row scaled to sum 1 (rows summing to 0 are left alone).
inline void row_normalize(FeatureMatrix& x) {
    for (std::size_t i = 0; i < x.rows(); ++i) {
        auto r = x.row(i);
        double s = 0.0;
        for (double v : r) s += v;
        if (s != 0.0)
            for (double& v : r) v /= s;
    }
}

struct LabelVector {
    static constexpr int kUnlabeled = -1;
    std::vector<int> labels;
    int num_classes = 0;

    std::vector<NodeId> labeled_nodes() const {
        std::vector<NodeId> out;
        for (std::size_t i = 0; i < labels.size(); ++i)
            if (labels[i] != kUnlabeled) out.push_back(static_cast<NodeId>(i));
        return out;
    }
};

// "node_id,label" per line; node ids are original ids resolved through `lg`.
inline LabelVector read_labels(std::istream& in, const LoadedGraph& lg) {
    LabelVector out;
    out.labels.assign(lg.graph.num_nodes(), LabelVector::kUnlabeled);
    std::string line;
    std::size_t lineno = 0;
    int max_label = -1;
    while (std::getline(in, line)) {
        ++lineno;
        auto t = detail::trim(line);
        if (t.empty() || t.front() == '#') continue;
        auto cells = detail::split(t, ',');
        long long node = 0;
        int label = 0;
        if (cells.size() != 2 || !detail::parse_number(cells[0], node) ||
            !detail::parse_number(cells[1], label) || label < 0)
            throw ParseError("expected 'node_id,label'", lineno);
        long long dense = lg.dense_id(node);
        if (dense < 0) throw ParseError("unknown node id " + std::to_string(node), lineno);
        out.labels[static_cast<std::size_t>(dense)] = label;
        max_label = std::max(max_label, label);
    }
    out.num_classes = max_label + 1;
    if (out.num_classes == 0) throw InputError("label file contains no labels");
    return out;
}

inline LabelVector load_labels(const std::string& path, const LoadedGraph& lg) {
    auto in = detail::open_or_throw(path);
    return read_labels(in, lg);
}

// ---------------------------------------------------------------------------
// Splits

struct Split {
    std::vector<NodeId> train;
    std::vector<NodeId> val;
    std::vector<NodeId> test;
    std::uint64_t seed = 0;
};

// Seeded 60/20/20 partition of `nodes`.
inline Split make_split(std::span<const NodeId> nodes, std::uint64_t seed) {
    if (nodes.size() < 5) throw InputError("split needs at least 5 labeled nodes");
    std::vector<NodeId> perm(nodes.begin(), nodes.end());
    std::mt19937_64 rng(seed);
    std::shuffle(perm.begin(), perm.end(), rng);
    const auto n = perm.size();
    const auto n_train = static_cast<std::size_t>(std::llround(0.6 * static_cast<double>(n)));
    const auto n_val = static_cast<std::size_t>(std::llround(0.2 * static_cast<double>(n)));
    Split s;
    s.seed = seed;
    s.train.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
    s.val.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train),
                 perm.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
    s.test.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), perm.end());
    for (auto* part : {&s.train, &s.val, &s.test}) std::sort(part->begin(), part->end());
    return s;
}

inline Split make_split(std::size_t n, std::uint64_t seed) {
    std::vector<NodeId> all(n);
    std::iota(all.begin(), all.end(), NodeId{0});
    return make_split(all, seed);
}

inline nlohmann::json to_json(const Split& s) {
    return nlohmann::json{{"seed", s.seed}, {"train", s.train}, {"val", s.val}, {"test", s.test}};
}

inline Split split_from_json(const nlohmann::json& j) {
    Split s;
    s.seed = j.at("seed").get<std::uint64_t>();
    s.train = j.at("train").get<std::vector<NodeId>>();
    s.val = j.at("val").get<std::vector<NodeId>>();
    s.test = j.at("test").get<std::vector<NodeId>>();
    return s;
}

}  // namespace grape
