#pragma once

#include <algorithm>
#include <array>
#include <compare>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "grape/error.hpp"

namespace grape {

// A small connected graphlet whose node 0 (the anchor) always maps onto the
// ego node. Edges are arcs for directed templates; undirected edges are
// stored as (min, max).
class AnchoredTemplate {
public:
    static constexpr std::size_t kDefaultSizeCap = 6;
    static constexpr std::size_t kHardMaxNodes = 8;

    using EdgeList = std::vector<std::pair<int, int>>;

    AnchoredTemplate() = default;

    AnchoredTemplate(std::size_t num_nodes, const EdgeList& edges, bool directed,
                     std::string name = {}, std::size_t size_cap = kDefaultSizeCap)
        : n_(num_nodes), directed_(directed), name_(std::move(name)) {
        if (size_cap > kHardMaxNodes)
            throw InputError("template size cap exceeds " + std::to_string(kHardMaxNodes));
        if (num_nodes < 2) throw InputError("template needs at least 2 nodes");
        if (num_nodes > size_cap)
            throw InputError("template has " + std::to_string(num_nodes) +
                             " nodes, size cap is " + std::to_string(size_cap));
        adj_.fill(0);
        for (auto [a, b] : edges) {
            if (a < 0 || b < 0 || static_cast<std::size_t>(a) >= n_ ||
                static_cast<std::size_t>(b) >= n_)
                throw InputError("template edge (" + std::to_string(a) + "," + std::to_string(b) +
                                 ") out of range");
            if (a == b) throw InputError("template self-loop on node " + std::to_string(a));
            if (!directed_ && a > b) std::swap(a, b);
            if (has_arc(a, b)) throw InputError("duplicate template edge");
            set_arc(a, b);
            edges_.emplace_back(a, b);
        }
        std::sort(edges_.begin(), edges_.end());
        if (!connected()) throw InputError("template skeleton is disconnected");
    }

    std::size_t num_nodes() const noexcept { return n_; }
    bool directed() const noexcept { return directed_; }
    const EdgeList& edges() const noexcept { return edges_; }
    const std::string& name() const noexcept { return name_; }
    void set_name(std::string name) { name_ = std::move(name); }

    // Arc a -> b (symmetric for undirected templates).
    bool has_arc(int a, int b) const noexcept { return (adj_[a] >> b) & 1U; }
    // Adjacent in the undirected skeleton.
    bool adjacent(int a, int b) const noexcept { return has_arc(a, b) || has_arc(b, a); }

    // Same template plus node n attached to `attach_at`; for directed
    // templates `outward` picks attach_at -> n over n -> attach_at.
    AnchoredTemplate with_node(int attach_at, bool outward = true,
                               std::size_t size_cap = kDefaultSizeCap) const {
        EdgeList e = edges_;
        const int fresh = static_cast<int>(n_);
        if (!directed_ || outward)
            e.emplace_back(attach_at, fresh);
        else
            e.emplace_back(fresh, attach_at);
        return AnchoredTemplate(n_ + 1, e, directed_, {}, size_cap);
    }

    AnchoredTemplate with_edge(int a, int b, std::size_t size_cap = kDefaultSizeCap) const {
        EdgeList e = edges_;
        e.emplace_back(a, b);
        return AnchoredTemplate(n_, e, directed_, {}, size_cap);
    }

    // Node pairs an edge mutation may connect: ordered pairs without an arc
    // for directed templates, unordered non-adjacent pairs otherwise.
    std::vector<std::pair<int, int>> missing_edges() const {
        std::vector<std::pair<int, int>> out;
        const int n = static_cast<int>(n_);
        for (int a = 0; a < n; ++a)
            for (int b = directed_ ? 0 : a + 1; b < n; ++b)
                if (a != b && !has_arc(a, b)) out.emplace_back(a, b);
        return out;
    }

    // Structural equality (same labeling); names are ignored.
    friend bool operator==(const AnchoredTemplate& x, const AnchoredTemplate& y) {
        return x.n_ == y.n_ && x.directed_ == y.directed_ && x.edges_ == y.edges_;
    }

private:
    void set_arc(int a, int b) {
        adj_[a] |= static_cast<std::uint16_t>(1U << b);
        if (!directed_) adj_[b] |= static_cast<std::uint16_t>(1U << a);
    }

    bool connected() const {
        std::uint32_t seen = 1, frontier = 1;
        while (frontier) {
            std::uint32_t next = 0;
            for (std::size_t v = 0; v < n_; ++v)
                if ((frontier >> v) & 1U)
                    for (std::size_t u = 0; u < n_; ++u)
                        if (adjacent(static_cast<int>(v), static_cast<int>(u)) && !((seen >> u) & 1U))
                            next |= 1U << u;
            seen |= next;
            frontier = next;
        }
        return seen == (1U << n_) - 1;
    }

    std::size_t n_ = 0;
    bool directed_ = false;
    std::string name_;
    EdgeList edges_;
    std::array<std::uint16_t, kHardMaxNodes> adj_{};
};

// ---------------------------------------------------------------------------
// JSON

inline AnchoredTemplate parse_template(const nlohmann::json& j,
                                       std::size_t size_cap = AnchoredTemplate::kDefaultSizeCap) {
    try {
        if (!j.is_object()) throw InputError("template must be a JSON object");
        const auto n = j.at("num_nodes").get<std::size_t>();
        const bool directed = j.value("directed", false);
        AnchoredTemplate::EdgeList edges;
        for (const auto& e : j.at("edges")) {
            if (!e.is_array() || e.size() != 2) throw InputError("template edge must be [i, j]");
            edges.emplace_back(e[0].get<int>(), e[1].get<int>());
        }
        return AnchoredTemplate(n, edges, directed, j.value("name", std::string{}), size_cap);
    } catch (const nlohmann::json::exception& ex) {
        throw ParseError(std::string("bad template JSON: ") + ex.what());
    }
}

// Accepts a single template object or an array of them.
inline std::vector<AnchoredTemplate> parse_templates(
    const std::string& text, std::size_t size_cap = AnchoredTemplate::kDefaultSizeCap) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& ex) {
        // nlohmann reports a byte offset; turn it into a line number.
        std::size_t line = 1 + static_cast<std::size_t>(std::count(
                                   text.begin(),
                                   text.begin() + static_cast<std::ptrdiff_t>(
                                                      std::min(ex.byte, text.size())),
                                   '\n'));
        throw ParseError(std::string("invalid JSON: ") + ex.what(), line);
    }
    std::vector<AnchoredTemplate> out;
    if (j.is_array()) {
        for (std::size_t i = 0; i < j.size(); ++i) {
            try {
                out.push_back(parse_template(j[i], size_cap));
            } catch (const InputError& ex) {
                throw InputError("template #" + std::to_string(i) + ": " + ex.what());
            }
        }
    } else {
        out.push_back(parse_template(j, size_cap));
    }
    return out;
}

inline nlohmann::json to_json(const AnchoredTemplate& t) {
    nlohmann::json edges = nlohmann::json::array();
    for (auto [a, b] : t.edges()) edges.push_back({a, b});
    return nlohmann::json{{"name", t.name()},
                          {"directed", t.directed()},
                          {"num_nodes", t.num_nodes()},
                          {"edges", edges}};
}

// ---------------------------------------------------------------------------
// Catalogue

namespace catalogue_detail {
inline AnchoredTemplate make(const char* name, std::size_t n, AnchoredTemplate::EdgeList e,
                             bool directed = false) {
    return AnchoredTemplate(n, e, directed, name);
}
}  // namespace catalogue_detail

// Named templates S1..S11. S11 is the two-orbit directed triangle (both
// partners point at the ego and at each other); "S11c" is the cyclic
// orientation 0->1->2->0, which has three orbits.
inline AnchoredTemplate named_template(const std::string& name) {
    using catalogue_detail::make;
    if (name == "S1") return make("S1", 2, {{0, 1}});
    if (name == "S2") return make("S2", 3, {{0, 1}, {1, 2}});
    if (name == "S3") return make("S3", 3, {{0, 1}, {0, 2}, {1, 2}});
    if (name == "S4") return make("S4", 4, {{0, 1}, {1, 2}, {2, 3}});
    if (name == "S5") return make("S5", 4, {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}});
    if (name == "S6") return make("S6", 4, {{0, 1}, {0, 2}, {1, 2}, {0, 3}});
    if (name == "S7") return make("S7", 2, {{1, 0}}, true);
    if (name == "S8") return make("S8", 2, {{0, 1}}, true);
    if (name == "S9") return make("S9", 2, {{0, 1}, {1, 0}}, true);
    if (name == "S10") return make("S10", 3, {{1, 0}, {0, 2}}, true);
    if (name == "S11") return make("S11", 3, {{1, 0}, {2, 0}, {1, 2}, {2, 1}}, true);
    if (name == "S11c") return make("S11c", 3, {{0, 1}, {1, 2}, {2, 0}}, true);
    throw InputError("unknown template name '" + name + "'");
}

inline std::vector<std::string> all_template_names() {
    return {"S1", "S2", "S3", "S4", "S5", "S6", "S7", "S8", "S9", "S10", "S11", "S11c"};
}

inline std::vector<AnchoredTemplate> catalogue(const std::string& domain) {
    std::vector<std::string> names;
    if (domain == "citation")
        names = {"S1", "S2", "S3", "S4", "S6"};
    else if (domain == "social")
        names = {"S1", "S2", "S3", "S5", "S6"};
    else if (domain == "ecommerce")
        names = {"S7", "S8", "S9", "S10", "S11"};
    else
        throw InputError("unknown domain '" + domain + "' (expected citation|social|ecommerce)");
    std::vector<AnchoredTemplate> out;
    for (const auto& n : names) out.push_back(named_template(n));
    return out;
}

// ---------------------------------------------------------------------------
// Canonical form

// Encoding of a template that is equal for two templates iff some
// anchor-fixing relabeling maps one onto the other.
struct CanonicalForm {
    std::string bytes;

    std::string hex() const {
        static constexpr char digits[] = "0123456789abcdef";
        std::string out;
        for (unsigned char c : bytes) {
            out.push_back(digits[c >> 4]);
            out.push_back(digits[c & 15]);
        }
        return out;
    }
    friend auto operator<=>(const CanonicalForm&, const CanonicalForm&) = default;
};

namespace detail {
inline std::string encode_relabeled(const AnchoredTemplate& t, const std::vector<int>& perm) {
    // perm[new] = old
    const int n = static_cast<int>(t.num_nodes());
    std::string s;
    s.push_back(static_cast<char>(n));
    s.push_back(t.directed() ? 1 : 0);
    for (int a = 0; a < n; ++a)
        for (int b = t.directed() ? 0 : a + 1; b < n; ++b)
            if (a != b) s.push_back(t.has_arc(perm[a], perm[b]) ? 1 : 0);
    return s;
}
}  // namespace detail

inline CanonicalForm canonical_form(const AnchoredTemplate& t) {
    std::vector<int> perm(t.num_nodes());
    std::iota(perm.begin(), perm.end(), 0);
    std::string best = detail::encode_relabeled(t, perm);
    while (std::next_permutation(perm.begin() + 1, perm.end())) {
        std::string cand = detail::encode_relabeled(t, perm);
        if (cand < best) best = std::move(cand);
    }
    return {best};
}

}  // namespace grape
