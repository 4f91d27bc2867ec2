#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "grape/graph.hpp"
#include "grape/matcher.hpp"
#include "grape/model.hpp"
#include "grape/templates.hpp"

namespace grape {

// How a template slot was derived from its parent in the last mutation.
struct MutationRecord {
    enum class Kind { None, Node, Edge };
    Kind kind = Kind::None;
    CanonicalForm parent;
    int attach_at = -1;
    std::pair<int, int> edge{-1, -1};
};

struct Gene {
    std::vector<AnchoredTemplate> templates;
    std::vector<MutationRecord> lineage;
    std::optional<double> fitness;
    // The retained best gene; mutate and crossover leave it alone.
    bool elite = false;

    // Sorted canonical forms: the gene's identity for fitness caching.
    std::vector<CanonicalForm> key() const {
        std::vector<CanonicalForm> k;
        for (const auto& t : templates) k.push_back(canonical_form(t));
        std::sort(k.begin(), k.end());
        return k;
    }
};

struct GenePool {
    std::vector<Gene> genes;
    std::size_t generation = 0;
    std::mt19937_64 rng;
};

struct SearchConfig {
    std::size_t pool_size = 16;          // B
    std::size_t templates_per_gene = 3;  // L
    std::size_t eliminate = 4;           // Z
    double p_node = 0.3;
    double p_edge = 0.3;
    double p_cross = 0.5;
    std::size_t generations = 20;  // K2
    double budget_seconds = 3000.0;
    std::size_t size_cap = AnchoredTemplate::kDefaultSizeCap;
    std::uint64_t seed = 0;
    MatchOptions match;
    ModelConfig eval_model = [] {
        ModelConfig c;
        c.max_epochs = 100;
        c.patience = 20;
        // The faster grid rate; at 0.01 the first validation gain can land
        // after the 20-epoch window.
        c.learning_rate = 0.03;
        return c;
    }();
    // Cached indices re-derived from scratch at the end of a run.
    std::size_t audit_samples = 1;
};

inline AnchoredTemplate edge_template() { return AnchoredTemplate(2, {{0, 1}}, false, "S1"); }

// B genes of L edge templates; directed graphs draw each slot from the
// to/from edge templates.
inline GenePool init_pool(std::size_t pool_size, std::size_t per_gene, bool directed,
                          std::uint64_t seed) {
    if (pool_size < 2) throw InputError("gene pool needs B >= 2");
    if (per_gene < 1) throw InputError("genes need L >= 1 templates");
    GenePool pool;
    pool.rng.seed(seed);
    std::bernoulli_distribution coin(0.5);
    for (std::size_t b = 0; b < pool_size; ++b) {
        Gene g;
        for (std::size_t l = 0; l < per_gene; ++l) {
            if (directed)
                g.templates.push_back(named_template(coin(pool.rng) ? "S7" : "S8"));
            else
                g.templates.push_back(edge_template());
            g.lineage.emplace_back();
        }
        pool.genes.push_back(std::move(g));
    }
    return pool;
}

namespace detail {
inline constexpr int kMutationTries = 10;

inline std::optional<std::pair<AnchoredTemplate, MutationRecord>> node_mutation(
    const AnchoredTemplate& t, std::size_t cap, std::mt19937_64& rng) {
    if (t.num_nodes() + 1 > cap) return std::nullopt;
    std::uniform_int_distribution<int> pick(0, static_cast<int>(t.num_nodes()) - 1);
    std::bernoulli_distribution coin(0.5);
    for (int attempt = 0; attempt < kMutationTries; ++attempt) {
        const int at = pick(rng);
        const bool outward = t.directed() ? coin(rng) : true;
        try {
            MutationRecord rec{MutationRecord::Kind::Node, canonical_form(t), at, {-1, -1}};
            return std::make_pair(t.with_node(at, outward, cap), rec);
        } catch (const InputError&) {
        }
    }
    return std::nullopt;
}

inline std::optional<std::pair<AnchoredTemplate, MutationRecord>> edge_mutation(
    const AnchoredTemplate& t, std::size_t cap, std::mt19937_64& rng) {
    auto missing = t.missing_edges();
    if (missing.empty()) return std::nullopt;
    std::uniform_int_distribution<std::size_t> pick(0, missing.size() - 1);
    for (int attempt = 0; attempt < kMutationTries; ++attempt) {
        auto e = missing[pick(rng)];
        try {
            MutationRecord rec{MutationRecord::Kind::Edge, canonical_form(t), -1, e};
            return std::make_pair(t.with_edge(e.first, e.second, cap), rec);
        } catch (const InputError&) {
        }
    }
    return std::nullopt;
}
}  // namespace detail

// Each template slot of every non-elite gene: node mutation with
// probability p_node, otherwise edge mutation with probability p_edge.
// Mutated children replace their parents.
inline void mutate(GenePool& pool, double p_edge, double p_node,
                   std::size_t size_cap = AnchoredTemplate::kDefaultSizeCap) {
    if (p_edge < 0 || p_edge > 1 || p_node < 0 || p_node > 1)
        throw InputError("mutation probabilities must be in [0, 1]");
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (auto& g : pool.genes) {
        if (g.elite) continue;
        for (std::size_t l = 0; l < g.templates.size(); ++l) {
            std::optional<std::pair<AnchoredTemplate, MutationRecord>> child;
            if (u(pool.rng) < p_node)
                child = detail::node_mutation(g.templates[l], size_cap, pool.rng);
            else if (u(pool.rng) < p_edge)
                child = detail::edge_mutation(g.templates[l], size_cap, pool.rng);
            if (!child) continue;
            g.templates[l] = std::move(child->first);
            g.lineage[l] = std::move(child->second);
            g.fitness.reset();
        }
    }
}

// Random pairing of non-elite genes; aligned slots swap with probability
// p_cross. With an odd number of participants the last one sits out.
inline void crossover(GenePool& pool, double p_cross) {
    if (p_cross < 0 || p_cross > 1) throw InputError("crossover probability must be in [0, 1]");
    std::vector<std::size_t> who;
    for (std::size_t i = 0; i < pool.genes.size(); ++i)
        if (!pool.genes[i].elite) who.push_back(i);
    std::shuffle(who.begin(), who.end(), pool.rng);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (std::size_t p = 0; p + 1 < who.size(); p += 2) {
        Gene& a = pool.genes[who[p]];
        Gene& b = pool.genes[who[p + 1]];
        const std::size_t slots = std::min(a.templates.size(), b.templates.size());
        bool changed = false;
        for (std::size_t l = 0; l < slots; ++l) {
            if (u(pool.rng) >= p_cross) continue;
            std::swap(a.templates[l], b.templates[l]);
            std::swap(a.lineage[l], b.lineage[l]);
            changed = true;
        }
        if (changed) {
            a.fitness.reset();
            b.fitness.reset();
        }
    }
}

// Drops the Z worst genes (ties: lower index first), refills by cloning the
// ranked survivors round-robin over the top Z, and marks the best survivor
// as elite.
inline void select(GenePool& pool, const std::vector<double>& metrics, std::size_t eliminate) {
    const std::size_t B = pool.genes.size();
    if (metrics.size() != B) throw InputError("select: one metric per gene required");
    if (eliminate >= B) throw InputError("select: Z must be smaller than B");
    std::vector<std::size_t> worst(B);
    std::iota(worst.begin(), worst.end(), std::size_t{0});
    std::stable_sort(worst.begin(), worst.end(),
                     [&](std::size_t a, std::size_t b) { return metrics[a] < metrics[b]; });
    std::vector<bool> removed(B, false);
    for (std::size_t i = 0; i < eliminate; ++i) removed[worst[i]] = true;

    std::vector<std::size_t> ranked;
    for (std::size_t i = 0; i < B; ++i)
        if (!removed[i]) ranked.push_back(i);
    std::stable_sort(ranked.begin(), ranked.end(),
                     [&](std::size_t a, std::size_t b) { return metrics[a] > metrics[b]; });

    std::vector<Gene> next;
    for (std::size_t i = 0; i < B; ++i) {
        if (removed[i]) continue;
        Gene g = pool.genes[i];
        g.fitness = metrics[i];
        g.elite = (i == ranked.front());
        next.push_back(std::move(g));
    }
    const std::size_t top = std::max<std::size_t>(1, std::min(eliminate, ranked.size()));
    for (std::size_t c = 0; next.size() < B; ++c) {
        Gene clone = pool.genes[ranked[c % top]];
        clone.fitness = metrics[ranked[c % top]];
        clone.elite = false;
        next.push_back(std::move(clone));
    }
    pool.genes = std::move(next);
}

// ---------------------------------------------------------------------------
// Evaluation with match reuse

struct MatchTimes {
    double scratch_s = 0.0;
    double incremental_s = 0.0;
    double eval_s = 0.0;
    std::uint64_t scratch_expansions = 0;
    std::uint64_t incremental_expansions = 0;
    std::size_t index_cache_hits = 0;
    std::size_t fitness_cache_hits = 0;
    std::size_t scratch_builds = 0;
    std::size_t incremental_builds = 0;
    std::size_t trainings = 0;
};

// Dataset plus caches shared by every gene of one search run.
class GeneEvaluator {
public:
    GeneEvaluator(const Graph& g, const Matrix& x, const LabelVector& labels, const Split& split,
                  const SearchConfig& cfg)
        : g_(g), x_(x), labels_(labels), split_(split), cfg_(cfg) {}

    // Index for slot l, reusing the cache or the parent's index when
    // possible. Replaces the slot's template with the cached representative
    // so later mutations stay label-compatible with the cache.
    std::shared_ptr<const EgoAeIndex> index_for(Gene& gene, std::size_t l) {
        using clock = std::chrono::steady_clock;
        const auto key = canonical_form(gene.templates[l]);
        if (auto it = cache_.find(key); it != cache_.end()) {
            ++times_.index_cache_hits;
            gene.templates[l] = it->second->tmpl();
            return it->second;
        }
        const auto& t = gene.templates[l];
        const auto& rec = gene.lineage[l];
        std::shared_ptr<const EgoAeIndex> idx;
        if (rec.kind != MutationRecord::Kind::None) {
            if (auto pit = cache_.find(rec.parent); pit != cache_.end()) {
                const EgoAeIndex& parent = *pit->second;
                const auto t0 = clock::now();
                try {
                    if (rec.kind == MutationRecord::Kind::Node &&
                        t.num_nodes() == parent.tmpl().num_nodes() + 1)
                        idx = std::make_shared<const EgoAeIndex>(
                            extend_node_mutation(g_, parent, t, rec.attach_at, cfg_.match));
                    else if (rec.kind == MutationRecord::Kind::Edge)
                        idx = std::make_shared<const EgoAeIndex>(
                            filter_edge_mutation(g_, parent, t, rec.edge, cfg_.match));
                } catch (const InputError&) {
                    idx.reset();  // parent labeling differs; fall back to scratch
                }
                if (idx) {
                    times_.incremental_s += seconds_since(t0);
                    times_.incremental_expansions += idx->counters().candidate_expansions;
                    ++times_.incremental_builds;
                }
            }
        }
        if (!idx) {
            const auto t0 = clock::now();
            idx = std::make_shared<const EgoAeIndex>(build_index(g_, t, cfg_.match));
            times_.scratch_s += seconds_since(t0);
            times_.scratch_expansions += idx->counters().candidate_expansions;
            ++times_.scratch_builds;
        }
        cache_.emplace(key, idx);
        return idx;
    }

    // Best validation accuracy of a reduced-budget GRAPE trained on the
    // gene's templates. Failures score 0.
    double evaluate(Gene& gene) {
        try {
            std::vector<std::shared_ptr<const EgoAeIndex>> held;
            IndexList indices;
            for (std::size_t l = 0; l < gene.templates.size(); ++l) {
                held.push_back(index_for(gene, l));
                indices.push_back(held.back().get());
            }
            const auto key = gene.key();
            if (auto it = fitness_.find(key); it != fitness_.end()) {
                ++times_.fitness_cache_hits;
                gene.fitness = it->second;
                return it->second;
            }
            const auto t0 = std::chrono::steady_clock::now();
            ModelConfig mc = cfg_.eval_model;
            mc.seed = cfg_.seed ^ hash_key(key);
            std::vector<std::size_t> orbits;
            for (auto* i : indices) orbits.push_back(i->num_orbits());
            GrapeModel model(mc, orbits, x_.cols(), static_cast<std::size_t>(labels_.num_classes));
            auto rep = train(model, indices, x_, labels_, split_);
            times_.eval_s += seconds_since(t0);
            ++times_.trainings;
            const double fit = std::max(0.0, rep.best_val_acc);
            fitness_.emplace(key, fit);
            gene.fitness = fit;
            return fit;
        } catch (const std::exception&) {
            gene.fitness = 0.0;
            return 0.0;
        }
    }

    // Rebuilds up to `samples` cached indices from scratch; returns how
    // many differ from the cached copy.
    std::size_t audit(std::size_t samples, std::mt19937_64& rng) const {
        std::vector<const EgoAeIndex*> all;
        for (const auto& [k, v] : cache_) all.push_back(v.get());
        std::shuffle(all.begin(), all.end(), rng);
        std::size_t bad = 0;
        for (std::size_t i = 0; i < std::min(samples, all.size()); ++i)
            if (!(build_index(g_, all[i]->tmpl(), cfg_.match) == *all[i])) ++bad;
        return bad;
    }

    const MatchTimes& times() const noexcept { return times_; }
    std::size_t cached_indices() const noexcept { return cache_.size(); }

private:
    static double seconds_since(std::chrono::steady_clock::time_point t0) {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }

    // FNV-1a over the canonical bytes; stable across runs and platforms.
    static std::uint64_t hash_key(const std::vector<CanonicalForm>& key) {
        std::uint64_t h = 1469598103934665603ULL;
        for (const auto& cf : key) {
            for (unsigned char c : cf.bytes) {
                h ^= c;
                h *= 1099511628211ULL;
            }
            h ^= 0xff;
            h *= 1099511628211ULL;
        }
        return h;
    }

    const Graph& g_;
    const Matrix& x_;
    const LabelVector& labels_;
    const Split& split_;
    const SearchConfig& cfg_;
    std::map<CanonicalForm, std::shared_ptr<const EgoAeIndex>> cache_;
    std::map<std::vector<CanonicalForm>, double> fitness_;
    MatchTimes times_;
};

// ---------------------------------------------------------------------------
// Search loop

struct GenerationRecord {
    std::size_t generation = 0;
    double best_fitness = 0.0;
    double mean_fitness = 0.0;
    double best_so_far = 0.0;
    MatchTimes delta;  // this generation's share of the evaluator counters
};

struct SearchResult {
    Gene best;
    std::vector<GenerationRecord> history;
    MatchTimes totals;
    std::size_t audit_mismatches = 0;
    std::size_t audited = 0;
    double wall_seconds = 0.0;
};

namespace detail {
inline MatchTimes diff(const MatchTimes& a, const MatchTimes& b) {
    MatchTimes d;
    d.scratch_s = a.scratch_s - b.scratch_s;
    d.incremental_s = a.incremental_s - b.incremental_s;
    d.eval_s = a.eval_s - b.eval_s;
    d.scratch_expansions = a.scratch_expansions - b.scratch_expansions;
    d.incremental_expansions = a.incremental_expansions - b.incremental_expansions;
    d.index_cache_hits = a.index_cache_hits - b.index_cache_hits;
    d.fitness_cache_hits = a.fitness_cache_hits - b.fitness_cache_hits;
    d.scratch_builds = a.scratch_builds - b.scratch_builds;
    d.incremental_builds = a.incremental_builds - b.incremental_builds;
    d.trainings = a.trainings - b.trainings;
    return d;
}
}  // namespace detail

// Generation 0 evaluates the initial edge pool; each later generation runs
// mutate -> crossover -> evaluate -> select until K2 generations or the
// wall-clock budget is used up.
inline SearchResult search(const Graph& g, const Matrix& x, const LabelVector& labels,
                           const Split& split, const SearchConfig& cfg) {
    if (cfg.eliminate >= cfg.pool_size) throw InputError("search: Z must be smaller than B");
    const auto t_start = std::chrono::steady_clock::now();
    auto elapsed = [&] {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    };
    GeneEvaluator evaluator(g, x, labels, split, cfg);
    GenePool pool = init_pool(cfg.pool_size, cfg.templates_per_gene, g.directed(), cfg.seed);
    SearchResult res;
    double best_so_far = -1.0;

    for (std::size_t gen = 0; gen <= cfg.generations; ++gen) {
        if (gen > 0) {
            if (elapsed() >= cfg.budget_seconds) break;
            mutate(pool, cfg.p_edge, cfg.p_node, cfg.size_cap);
            crossover(pool, cfg.p_cross);
        }
        pool.generation = gen;
        const MatchTimes before = evaluator.times();
        std::vector<double> metrics;
        for (auto& gene : pool.genes) {
            if (!gene.fitness) evaluator.evaluate(gene);
            metrics.push_back(*gene.fitness);
        }
        GenerationRecord rec;
        rec.generation = gen;
        const auto best_it = std::max_element(metrics.begin(), metrics.end());
        rec.best_fitness = *best_it;
        rec.mean_fitness = std::accumulate(metrics.begin(), metrics.end(), 0.0) /
                           static_cast<double>(metrics.size());
        if (rec.best_fitness > best_so_far) {
            best_so_far = rec.best_fitness;
            res.best = pool.genes[static_cast<std::size_t>(best_it - metrics.begin())];
        }
        rec.best_so_far = best_so_far;
        rec.delta = detail::diff(evaluator.times(), before);
        res.history.push_back(rec);
        select(pool, metrics, cfg.eliminate);
    }
    std::mt19937_64 audit_rng(cfg.seed + 17);
    res.audited = std::min(cfg.audit_samples, evaluator.cached_indices());
    res.audit_mismatches = evaluator.audit(cfg.audit_samples, audit_rng);
    res.totals = evaluator.times();
    res.best.elite = false;
    res.wall_seconds = elapsed();
    return res;
}

// ---------------------------------------------------------------------------
// Reporting

// Catalogue name when the template is a relabeling of one, else "T<hex>".
inline std::string describe_template(const AnchoredTemplate& t) {
    const auto cf = canonical_form(t);
    for (const auto& name : all_template_names())
        if (canonical_form(named_template(name)) == cf) return name;
    return "T" + cf.hex();
}

inline nlohmann::json gene_json(const Gene& gene) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& t : gene.templates) {
        auto j = to_json(t);
        j["name"] = t.name().empty() ? describe_template(t) : t.name();
        arr.push_back(j);
    }
    return arr;
}

inline std::string history_csv(const SearchResult& r) {
    std::ostringstream os;
    os << "generation,best_fitness,mean_fitness,scratch_match_s,incremental_match_s,eval_s\n";
    for (const auto& h : r.history)
        os << h.generation << ',' << h.best_fitness << ',' << h.mean_fitness << ','
           << h.delta.scratch_s << ',' << h.delta.incremental_s << ',' << h.delta.eval_s << '\n';
    return os.str();
}

}  // namespace grape
