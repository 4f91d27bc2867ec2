// egoae: orbits, matching, training, template search and the MPNN
// limitation demo from the command line.
//
// Exit codes: 0 success, 1 failed check or numeric failure, 2 bad input.

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "grape/demo.hpp"
#include "grape/genetic.hpp"
#include "grape/synthetic.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace grape;

namespace {

struct Globals {
    std::uint64_t seed = 0;
    unsigned threads = std::max(1u, std::thread::hardware_concurrency());
    std::string out_dir = ".";
    bool directed = false;
    bool ignore_direction = false;
    bool dummy_features = false;
    std::size_t random_features = 0;
    std::string synthetic;
};

struct DataArgs {
    std::string edges, features, labels, split;
    bool normalize = false;
};

struct TemplateArgs {
    std::string file;
    std::string domain;
    std::vector<std::string> names;
};

struct Dataset {
    std::string name;
    Graph graph;
    std::optional<Matrix> features;
    std::optional<LabelVector> labels;
    std::optional<LoadedGraph> loaded;

    long long original(NodeId v) const { return loaded ? loaded->original_ids[v] : static_cast<long long>(v); }
    NodeId dense(long long id) const {
        long long d = loaded ? loaded->dense_id(id) : id;
        if (d < 0 || d >= static_cast<long long>(graph.num_nodes()))
            throw InputError("unknown node id " + std::to_string(id));
        return static_cast<NodeId>(d);
    }
};

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<AnchoredTemplate> load_template_file(const std::string& path) {
    try {
        return parse_templates(read_file(path));
    } catch (const InputError& e) {
        throw InputError(path + ": " + e.what());
    }
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write '" + path.string() + "'");
    out << text;
}

fs::path out_path(const Globals& g, const std::string& file) {
    fs::create_directories(g.out_dir);
    return fs::path(g.out_dir) / file;
}

MatchOptions match_options(const Globals& g) {
    MatchOptions o;
    o.ignore_direction = g.ignore_direction;
    o.threads = g.threads;
    return o;
}

Dataset load_dataset(const Globals& g, const DataArgs& a, bool need_features, bool need_labels) {
    Dataset d;
    if (!g.synthetic.empty()) {
        if (!a.edges.empty()) throw InputError("pass either --synthetic or --edges, not both");
        auto s = synthetic::by_name(g.synthetic, g.seed);
        d.name = s.name;
        d.graph = std::move(s.graph);
        d.features = std::move(s.features);
        d.labels = std::move(s.labels);
    } else {
        if (a.edges.empty()) throw InputError("no graph given: pass --edges FILE or --synthetic NAME");
        d.loaded = load_edge_list(a.edges, g.directed);
        d.graph = d.loaded->graph;
        const fs::path ep(a.edges);
        d.name = ep.stem() == "edges" && ep.has_parent_path() ? ep.parent_path().filename().string() : ep.stem().string();
        const auto& rep = d.loaded->report;
        if (rep.dropped_self_loops || rep.dropped_duplicates)
            spdlog::warn("dropped {} self-loops and {} duplicate edges", rep.dropped_self_loops,
                         rep.dropped_duplicates);
        if (!a.labels.empty()) d.labels = load_labels(a.labels, *d.loaded);
    }
    const std::size_t n = d.graph.num_nodes();
    if (!a.features.empty())
        d.features = load_features(a.features, n);
    else if (g.dummy_features)
        d.features = dummy_features(n);
    else if (g.random_features > 0)
        d.features = random_features(n, g.random_features, g.seed);
    if (need_features && !d.features)
        throw InputError("no node features: pass --features FILE, --dummy-features or --random-features DIM");
    if (d.features && a.normalize) row_normalize(*d.features);
    if (need_labels && !d.labels) throw InputError("no labels: pass --labels FILE");
    spdlog::info("graph {}: {} nodes, {} edges{}", d.name, n, d.graph.num_edges(),
                 d.graph.directed() ? " (directed)" : "");
    return d;
}

std::vector<AnchoredTemplate> load_templates(const TemplateArgs& t) {
    const int sources = !t.file.empty() + !t.domain.empty() + !t.names.empty();
    if (sources != 1)
        throw InputError("give exactly one template source: --templates FILE, --catalogue DOMAIN or --template NAME");
    if (!t.file.empty()) return load_template_file(t.file);
    if (!t.domain.empty()) return catalogue(t.domain);
    std::vector<AnchoredTemplate> out;
    for (const auto& n : t.names) out.push_back(named_template(n));
    return out;
}

std::string template_label(const AnchoredTemplate& t) {
    return t.name().empty() ? describe_template(t) : t.name();
}

void add_template_options(CLI::App* cmd, TemplateArgs& t) {
    cmd->add_option("--templates", t.file, "Template JSON file (object or array)");
    cmd->add_option("--catalogue", t.domain, "Built-in catalogue: citation|social|ecommerce");
    cmd->add_option("--template", t.names, "Built-in template by name (repeatable)");
}

void add_data_options(CLI::App* cmd, DataArgs& a, bool with_labels) {
    cmd->add_option("--edges", a.edges, "Edge list file");
    cmd->add_option("--features", a.features, "Feature CSV, one row per dense node id");
    cmd->add_flag("--normalize-features", a.normalize, "Row-normalize features");
    if (with_labels) {
        cmd->add_option("--labels", a.labels, "Label CSV: node_id,label");
        cmd->add_option("--split", a.split, "Split JSON to reuse instead of a seeded split");
    }
}

Split split_for(const Dataset& d, const DataArgs& a, std::uint64_t seed) {
    if (!a.split.empty()) {
        Split s;
        try {
            s = split_from_json(json::parse(read_file(a.split)));
        } catch (const json::exception& e) {
            throw InputError(a.split + ": " + e.what());
        }
        // Split files carry original ids, as written by train.
        for (auto* part : {&s.train, &s.val, &s.test}) {
            for (auto& v : *part) v = d.dense(v);
            std::sort(part->begin(), part->end());
        }
        return s;
    }
    return make_split(d.labels->labeled_nodes(), seed);
}

json ids_json(const Dataset& d, std::span<const NodeId> vs) {
    json a = json::array();
    for (NodeId v : vs) a.push_back(d.original(v));
    return a;
}

// ---------------------------------------------------------------------------

int cmd_orbits(const std::vector<std::string>& files, const std::vector<std::string>& names) {
    std::vector<AnchoredTemplate> ts;
    for (const auto& f : files)
        for (auto& t : load_template_file(f)) ts.push_back(std::move(t));
    for (const auto& n : names) ts.push_back(named_template(n));
    if (ts.empty()) throw InputError("no templates given");
    for (const auto& t : ts) {
        auto j = to_json(orbit_partition(t));
        if (!t.name().empty()) j["name"] = t.name();
        std::cout << j.dump() << '\n';
    }
    return 0;
}

int cmd_match(const Globals& g, const DataArgs& a, const TemplateArgs& ta, const std::vector<long long>& egos,
              std::size_t max_matches) {
    auto d = load_dataset(g, a, false, false);
    auto ts = load_templates(ta);
    auto opt = match_options(g);
    opt.max_matches_per_ego = max_matches;
    std::vector<NodeId> which;
    for (long long id : egos) which.push_back(d.dense(id));
    if (which.empty())
        for (NodeId v = 0; v < d.graph.num_nodes(); ++v) which.push_back(v);
    for (const auto& t : ts) {
        auto idx = build_index(d.graph, t, opt);
        const auto label = template_label(t);
        for (NodeId v : which) {
            json ms = json::array();
            for (std::size_t i = 0; i < idx.match_count(v); ++i) ms.push_back(ids_json(d, idx.match(v, i)));
            json sets = json::array();
            for (const auto& s : idx.ae_sets(v)) sets.push_back(ids_json(d, s));
            std::cout << json{{"type", "ego"}, {"template", label}, {"ego", d.original(v)},
                              {"matches", ms}, {"ae_sets", sets}}
                             .dump()
                      << '\n';
        }
        auto stats = to_json(match_stats(idx));
        stats["type"] = "stats";
        stats["template"] = label;
        std::cout << stats.dump() << '\n';
        if (idx.counters().truncated_egos)
            spdlog::warn("{}: {} egos hit the {}-match cap", label, idx.counters().truncated_egos, max_matches);
    }
    return 0;
}

struct TrainArgs {
    ModelConfig model;
    std::size_t runs = 1;
    bool mpnn = false;
};

int cmd_train(const Globals& g, const DataArgs& a, const TemplateArgs& ta, TrainArgs opts) {
    auto d = load_dataset(g, a, true, true);
    auto ts = load_templates(ta);
    if (opts.runs < 1) throw InputError("--runs must be >= 1");
    ModelConfig base = opts.mpnn ? mpnn_config(opts.model) : opts.model;
    base.validate();
    if (opts.mpnn && ts.size() != 1) throw InputError("--mpnn expects a single edge template");

    std::vector<EgoAeIndex> held;
    std::vector<std::size_t> orbits;
    for (const auto& t : ts) {
        held.push_back(build_index(d.graph, t, match_options(g)));
        orbits.push_back(held.back().num_orbits());
    }
    IndexList indices;
    for (const auto& i : held) indices.push_back(&i);

    std::ostringstream log;
    log << "run,epoch,train_loss,val_acc,lr\n";
    log.precision(17);
    json runs = json::array(), splits = json::array();
    std::vector<double> test_acc;
    std::optional<GrapeModel> best_model;
    double best_val = -1.0;
    for (std::size_t r = 0; r < opts.runs; ++r) {
        ModelConfig cfg = base;
        cfg.seed = g.seed + r;
        const Split split = split_for(d, a, cfg.seed);
        GrapeModel model(cfg, orbits, d.features->cols(), static_cast<std::size_t>(d.labels->num_classes));
        auto rep = train(model, indices, *d.features, *d.labels, split);
        spdlog::info("run {}: test {:.4f}, val {:.4f}, {} epochs", r, rep.test_acc, rep.best_val_acc,
                     rep.epochs_run);
        for (const auto& e : rep.log)
            log << r << ',' << e.epoch << ',' << e.train_loss << ',' << e.val_acc << ',' << e.lr << '\n';
        json beta = json::array();
        for (const auto& lp : model.params().layers) {
            json layer = json::array();
            for (const auto& c : lp.channels)
                layer.push_back(std::vector<double>(c.beta.values().begin(), c.beta.values().end()));
            beta.push_back(layer);
        }
        runs.push_back({{"seed", cfg.seed},
                        {"test_acc", rep.test_acc},
                        {"val_acc", rep.best_val_acc},
                        {"train_acc", rep.train_acc},
                        {"epochs_run", rep.epochs_run},
                        {"best_epoch", rep.best_epoch},
                        {"early_stopped", rep.early_stopped},
                        {"alpha", rep.alphas},
                        {"beta", beta}});
        json sj = to_json(split);
        for (const char* part : {"train", "val", "test"}) {
            std::vector<NodeId> vs = sj[part];
            sj[part] = ids_json(d, vs);
        }
        splits.push_back(sj);
        test_acc.push_back(rep.test_acc);
        if (rep.best_val_acc > best_val) {
            best_val = rep.best_val_acc;
            best_model = model;
        }
    }
    const double n = static_cast<double>(test_acc.size());
    double mean = 0.0, var = 0.0;
    for (double x : test_acc) mean += x / n;
    for (double x : test_acc) var += (x - mean) * (x - mean) / n;
    json tj = json::array();
    for (const auto& t : ts) tj.push_back(template_label(t));
    json metrics{{"dataset", d.name},
                 {"model", opts.mpnn ? "mpnn" : "grape"},
                 {"templates", tj},
                 {"config", to_json(base)},
                 {"runs", runs},
                 {"test_acc", test_acc},
                 {"mean", mean},
                 {"std", std::sqrt(var)}};
    write_file(out_path(g, "metrics.json"), metrics.dump(2) + "\n");
    write_file(out_path(g, "train_log.csv"), log.str());
    write_file(out_path(g, "checkpoint.json"), checkpoint_json(*best_model, ts).dump() + "\n");
    write_file(out_path(g, "split.json"), (opts.runs == 1 ? splits[0] : splits).dump() + "\n");
    if (d.loaded && d.loaded->remapped) write_file(out_path(g, "id_map.json"), id_map_json(*d.loaded).dump() + "\n");
    std::cout << json{{"mean", mean}, {"std", std::sqrt(var)}, {"test_acc", test_acc}}.dump() << '\n';
    return 0;
}

int cmd_search(const Globals& g, const DataArgs& a, SearchConfig cfg) {
    auto d = load_dataset(g, a, true, true);
    cfg.seed = g.seed;
    cfg.match = match_options(g);
    const Split split = split_for(d, a, g.seed);
    auto r = search(d.graph, *d.features, *d.labels, split, cfg);
    const auto& t = r.totals;
    json best{{"fitness", r.best.fitness.value_or(0.0)},
              {"templates", gene_json(r.best)},
              {"generations_run", r.history.empty() ? 0 : r.history.back().generation},
              {"seed", cfg.seed},
              {"audit", {{"checked", r.audited}, {"mismatches", r.audit_mismatches}}}};
    write_file(out_path(g, "best_gene.json"), best.dump(2) + "\n");
    write_file(out_path(g, "history.csv"), history_csv(r));
    json summary{{"best_fitness", best["fitness"]},
                 {"scratch_match_s", t.scratch_s},
                 {"incremental_match_s", t.incremental_s},
                 {"eval_s", t.eval_s},
                 {"wall_s", r.wall_seconds},
                 {"scratch_builds", t.scratch_builds},
                 {"incremental_builds", t.incremental_builds},
                 {"scratch_expansions", t.scratch_expansions},
                 {"incremental_expansions", t.incremental_expansions},
                 {"index_cache_hits", t.index_cache_hits},
                 {"fitness_cache_hits", t.fitness_cache_hits},
                 {"trainings", t.trainings}};
    std::cout << summary.dump() << '\n';
    if (r.audit_mismatches) {
        spdlog::error("{} cached indices differ from a scratch rebuild", r.audit_mismatches);
        return 1;
    }
    return 0;
}

int cmd_demo(const Globals& g, std::size_t layers, std::size_t seeds) {
    if (layers < 1) throw InputError("--layers must be >= 1");
    auto rep = limitation_demo(layers, seeds, g.seed);
    std::cout << to_json(rep).dump() << '\n';
    if (!rep.passed()) spdlog::error("limitation demo failed");
    return rep.passed() ? 0 : 1;
}

json describe(const AnchoredTemplate& t) {
    auto j = to_json(t);
    auto p = orbit_partition(t);
    j["orbits"] = p.orbits();
    j["group_size"] = p.group_size;
    j["canonical_form"] = canonical_form(t).hex();
    return j;
}

int cmd_templates_list(const std::string& domain) {
    if (domain.empty()) {
        for (const auto& n : all_template_names()) std::cout << describe(named_template(n)).dump() << '\n';
    } else {
        for (const auto& t : catalogue(domain)) std::cout << describe(t).dump() << '\n';
    }
    return 0;
}

int cmd_templates_show(const std::string& what) {
    if (fs::exists(what)) {
        for (const auto& t : load_template_file(what)) std::cout << describe(t).dump(2) << '\n';
    } else {
        std::cout << describe(named_template(what)).dump(2) << '\n';
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    auto logger = spdlog::stderr_color_mt("egoae");
    spdlog::set_default_logger(logger);
    spdlog::set_pattern("[%l] %v");
    spdlog::set_level(spdlog::level::info);
    if (const char* lvl = std::getenv("EGOAE_LOG")) spdlog::set_level(spdlog::level::from_str(lvl));

    CLI::App app{"Ego-AE template tools: orbits, matching, GRAPE training and template search"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("--seed", g.seed, "Random seed");
    app.add_option("--threads", g.threads, "Matching threads")->check(CLI::PositiveNumber);
    app.add_option("--out-dir", g.out_dir, "Directory for output files");
    app.add_flag("--directed", g.directed, "Read the edge list as directed");
    app.add_flag("--ignore-direction", g.ignore_direction,
                 "Match undirected templates on directed graphs, either direction");
    app.add_flag("--dummy-features", g.dummy_features, "Use a constant 1 feature per node");
    app.add_option("--random-features", g.random_features, "Use seeded Gaussian features of this width");
    app.add_option("--synthetic", g.synthetic, "Built-in dataset: two-stars|cycle-vs-triangle|planted-triangles");

    std::vector<std::string> orbit_files, orbit_names;
    auto* orbits = app.add_subcommand("orbits", "Print the Ego-AE orbit partition of templates");
    orbits->add_option("files", orbit_files, "Template JSON files");
    orbits->add_option("--template", orbit_names, "Built-in template by name (repeatable)");

    DataArgs data;
    TemplateArgs tmpl;
    std::vector<long long> egos;
    std::size_t max_matches = MatchOptions{}.max_matches_per_ego;
    auto* match = app.add_subcommand("match", "Enumerate matches and Ego-AE sets as JSON lines");
    add_data_options(match, data, false);
    add_template_options(match, tmpl);
    match->add_option("--ego", egos, "Only these ego nodes (original ids)");
    match->add_option("--max-matches", max_matches, "Per-ego match cap");

    TrainArgs targs;
    auto* trainc = app.add_subcommand("train", "Train GRAPE and report test accuracy");
    add_data_options(trainc, data, true);
    add_template_options(trainc, tmpl);
    trainc->add_option("--runs", targs.runs, "Independent runs (seeds seed..seed+runs-1)");
    trainc->add_option("--layers", targs.model.layers, "Aggregation layers");
    trainc->add_option("--hidden", targs.model.hidden, "Embedding size");
    trainc->add_option("--dropout", targs.model.dropout, "Dropout rate");
    trainc->add_option("--weight-decay", targs.model.weight_decay, "L2 coefficient");
    trainc->add_option("--lr", targs.model.learning_rate, "Learning rate");
    trainc->add_option("--epochs", targs.model.max_epochs, "Maximum epochs");
    trainc->add_option("--patience", targs.model.patience, "Early-stop window");
    trainc->add_flag("--per-channel-history", targs.model.per_channel_history,
                     "Feed each template channel its own previous output");
    trainc->add_flag("--mpnn", targs.mpnn, "Sum-aggregation MPNN baseline (no SE, fixed orbit weights)");

    SearchConfig scfg;
    auto* searchc = app.add_subcommand("search", "Genetic search for template sets");
    add_data_options(searchc, data, true);
    searchc->add_option("--pool", scfg.pool_size, "Genes per generation");
    searchc->add_option("--per-gene", scfg.templates_per_gene, "Templates per gene");
    searchc->add_option("--eliminate", scfg.eliminate, "Genes replaced per generation");
    searchc->add_option("--generations", scfg.generations, "Generations after the initial one");
    searchc->add_option("--budget", scfg.budget_seconds, "Wall-clock budget in seconds");
    searchc->add_option("--p-node", scfg.p_node, "Node mutation probability");
    searchc->add_option("--p-edge", scfg.p_edge, "Edge mutation probability");
    searchc->add_option("--p-cross", scfg.p_cross, "Crossover probability");
    searchc->add_option("--size-cap", scfg.size_cap, "Maximum template size");
    searchc->add_option("--eval-epochs", scfg.eval_model.max_epochs, "Epochs per fitness evaluation");
    searchc->add_option("--eval-patience", scfg.eval_model.patience, "Early-stop window per evaluation");

    std::size_t demo_layers = 5, demo_seeds = 20;
    auto* demo = app.add_subcommand("demo-limitation", "MPNN vs GRAPE on a 6-cycle and two triangles");
    demo->add_option("--layers", demo_layers, "Largest MPNN depth to check");
    demo->add_option("--seeds", demo_seeds, "GRAPE initializations to check");

    auto* templates = app.add_subcommand("templates", "Built-in template catalogue");
    templates->require_subcommand(1);
    std::string domain, show_what;
    auto* tlist = templates->add_subcommand("list", "List built-in templates");
    tlist->add_option("--domain", domain, "Only the catalogue of this domain");
    auto* tshow = templates->add_subcommand("show", "Show one template by name or file");
    tshow->add_option("template", show_what, "Template name or JSON file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*orbits) return cmd_orbits(orbit_files, orbit_names);
        if (*match) return cmd_match(g, data, tmpl, egos, max_matches);
        if (*trainc) return cmd_train(g, data, tmpl, targs);
        if (*searchc) return cmd_search(g, data, scfg);
        if (*demo) return cmd_demo(g, demo_layers, demo_seeds);
        if (*tlist) return cmd_templates_list(domain);
        if (*tshow) return cmd_templates_show(show_what);
    } catch (const InputError& e) {
        spdlog::error("{}", e.what());
        return 2;
    } catch (const NumericError& e) {
        spdlog::error("{}", e.what());
        return 1;
    } catch (const fs::filesystem_error& e) {
        spdlog::error("{}", e.what());
        return 2;
    }
    return 2;
}
