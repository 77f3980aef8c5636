// Command-line front end: extraction, indexing, filtering, graph building,
// evaluation and synthetic corpus generation.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "provenance/provenance.hpp"

namespace fs = std::filesystem;
using namespace provenance;
using json = nlohmann::ordered_json;

namespace {

enum ExitCode : int {
    kOk = 0,
    kFailure = 1,
    kUsage = 2,
    kBadConfig = 3,
    kMissingInput = 4,
    kBadFormat = 5,
    kOutputError = 6,
};

struct MissingInput : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct OutputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void require_file(const fs::path& p, const std::string& what) {
    if (p.empty()) throw MissingInput(what + " not specified");
    if (!fs::is_regular_file(p)) throw MissingInput(what + " not found: " + p.string());
}

void require_dir(const fs::path& p, const std::string& what) {
    if (p.empty()) throw MissingInput(what + " not specified");
    if (!fs::is_directory(p)) throw MissingInput(what + " not found: " + p.string());
}

void make_dir(const fs::path& p) {
    std::error_code ec;
    fs::create_directories(p, ec);
    if (ec) throw OutputError("cannot create " + p.string() + ": " + ec.message());
}

template <typename Fn>
void write_file(const fs::path& p, Fn&& body) {
    if (p.has_parent_path()) make_dir(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out) throw OutputError("cannot write " + p.string());
    body(out);
    if (!out) throw OutputError("failed writing " + p.string());
}

std::string utc_timestamp() {
    const std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

/// Collects timings and counts for the run manifest.
class Run {
public:
    explicit Run(std::string command) : command_(std::move(command)), start_(clock::now()) {}

    template <typename Fn>
    auto stage(const std::string& name, Fn&& fn) {
        const auto t0 = clock::now();
        if constexpr (std::is_void_v<decltype(fn())>) {
            fn();
            timings_[name] = seconds(t0);
        } else {
            auto r = fn();
            timings_[name] = seconds(t0);
            return r;
        }
    }

    void count(const std::string& key, std::uint64_t v) { counts_[key] = v; }
    void output(const fs::path& p) { outputs_.push_back(p.string()); }

    void write_manifest(const fs::path& path, const PipelineConfig& cfg, const std::vector<std::string>& argv) {
        json j;
        j["command"] = command_;
        j["argv"] = argv;
        j["cwd"] = fs::current_path().string();
        j["timestamp"] = utc_timestamp();
        j["config_hash"] = fingerprint(cfg.canonical());
        j["config"] = cfg.canonical();
        j["timings_s"] = timings_;
        j["timings_s"]["total"] = seconds(start_);
        j["counts"] = counts_;
        j["outputs"] = outputs_;
        write_file(path, [&](std::ostream& out) { out << j.dump(2) << '\n'; });
    }

private:
    using clock = std::chrono::steady_clock;
    static double seconds(clock::time_point t0) { return std::chrono::duration<double>(clock::now() - t0).count(); }

    std::string command_;
    clock::time_point start_;
    json timings_ = json::object();
    json counts_ = json::object();
    std::vector<std::string> outputs_;
};

/// Lazily loaded, thread-safe caches with stable references.
class FeatureStore {
public:
    explicit FeatureStore(fs::path dir) : dir_(std::move(dir)) {}

    const FeatureSet& operator()(ImageId id) {
        std::lock_guard lock(mutex_);
        auto& slot = cache_[id];
        if (!slot) {
            const auto p = feature_path(dir_, id);
            if (!fs::exists(p)) throw MissingInput("feature file not found for image " + std::to_string(id) + ": " + p.string());
            slot = std::make_unique<FeatureSet>(load_features(p));
        }
        return *slot;
    }

private:
    fs::path dir_;
    std::mutex mutex_;
    std::map<ImageId, std::unique_ptr<FeatureSet>> cache_;
};

class ImageStore {
public:
    ImageStore(fs::path dir, const std::vector<CorpusEntry>& listing) : dir_(std::move(dir)) {
        for (const auto& e : listing) files_[e.id] = e.file;
    }

    const GrayImage& operator()(ImageId id) {
        std::lock_guard lock(mutex_);
        auto& slot = cache_[id];
        if (!slot) slot = std::make_unique<GrayImage>(read_image(dir_ / file(id)));
        return *slot;
    }

    const std::string& file(ImageId id) const {
        auto it = files_.find(id);
        if (it == files_.end()) throw MissingInput("image id " + std::to_string(id) + " not in corpus listing");
        return it->second;
    }

    void label(ProvenanceGraph& g) const {
        for (auto& n : g.nodes) n.file = file(n.id);
    }

private:
    fs::path dir_;
    std::map<ImageId, std::string> files_;
    std::mutex mutex_;
    std::map<ImageId, std::unique_ptr<GrayImage>> cache_;
};

std::vector<GroundTruthCase> load_cases(const fs::path& dir) {
    require_dir(dir, "cases directory");
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
    if (files.empty()) throw MissingInput("no case files in " + dir.string());
    // Natural order so case_2 precedes case_10.
    std::sort(files.begin(), files.end(), [](const fs::path& a, const fs::path& b) {
        const auto sa = a.stem().string(), sb = b.stem().string();
        return sa.size() != sb.size() ? sa.size() < sb.size() : sa < sb;
    });
    std::vector<GroundTruthCase> out;
    for (const auto& f : files) out.push_back(load_case(f));
    return out;
}

// ---------------------------------------------------------------------------
// Options shared by every command
// ---------------------------------------------------------------------------

struct Common {
    std::string config_file;
    std::string preset;
    std::optional<std::size_t> rank_k;
    std::optional<std::size_t> workers;
    std::optional<std::uint64_t> seed;
    std::string manifest;
    std::vector<std::string> argv;

    PipelineConfig resolve() const {
        PipelineConfig c = preset_config(preset.empty() ? "dsurf" : preset);
        if (!config_file.empty()) {
            if (!fs::exists(config_file)) throw MissingInput("config file not found: " + config_file);
            auto pt = detail::parse_ini(config_file);
            // An explicit --preset wins over the file's preset key.
            if (!preset.empty()) {
                if (auto run = pt.get_child_optional("run")) run->erase("preset");
            }
            c = apply_ini(pt, c);
        }
        if (rank_k) c.filter.rank_k = *rank_k;
        if (workers) c.workers = *workers;
        if (seed) {
            c.index.seed = *seed;
            c.match.seed = *seed;
        }
        try {
            c.validate();
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
        return c;
    }

    fs::path manifest_path(const fs::path& fallback_dir, const std::string& cmd) const {
        return manifest.empty() ? fallback_dir / ("manifest_" + cmd + ".json") : fs::path(manifest);
    }
};

fs::path dir_of(const fs::path& file) { return file.has_parent_path() ? file.parent_path() : fs::path("."); }

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

int cmd_synth(const Common& common, const std::string& spec_file, const fs::path& out, std::optional<std::size_t> graphs,
              std::optional<std::size_t> distractors) {
    PipelineConfig cfg = common.resolve();
    SynthSpec spec;
    if (!spec_file.empty()) {
        if (!fs::exists(spec_file)) throw MissingInput("synth spec not found: " + spec_file);
        spec = load_synth_spec(spec_file);
    }
    if (graphs) spec.graphs = *graphs;
    if (distractors) spec.distractors = *distractors;
    if (common.seed) spec.seed = *common.seed;
    try {
        spec.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    Run run("synth");
    auto corpus = run.stage("synthesize", [&] { return synthesize(spec, cfg.workers); });
    run.stage("write", [&] {
        try {
            write_corpus(corpus, out, cfg.workers);
        } catch (const std::exception& e) {
            throw OutputError(e.what());
        }
    });
    run.count("images", corpus.images.size());
    run.count("cases", corpus.cases.size());
    run.count("distractors", corpus.distractors.size());
    run.output(out);
    run.write_manifest(common.manifest_path(out, "synth"), cfg, common.argv);
    std::cout << "synth: " << corpus.cases.size() << " graphs, " << corpus.images.size() << " images -> " << out.string()
              << '\n';
    return kOk;
}

int cmd_extract(const Common& common, const fs::path& corpus_dir, const fs::path& feature_dir) {
    PipelineConfig cfg = common.resolve();
    require_dir(corpus_dir, "corpus directory");
    const auto listing = read_corpus(corpus_dir);
    if (listing.empty()) throw MissingInput("corpus has no images: " + corpus_dir.string());
    make_dir(feature_dir);
    Run run("extract");
    std::vector<std::size_t> sizes(listing.size());
    run.stage("extract", [&] {
        parallel_for(listing.size(), cfg.workers, [&](std::size_t i) {
            const auto& e = listing[i];
            const auto path = corpus_dir / e.file;
            if (!fs::exists(path)) throw MissingInput("image not found: " + path.string());
            const FeatureSet f = extract_features(read_image(path), cfg.detector, e.id);
            sizes[i] = f.size();
            save_features(feature_path(feature_dir, e.id), f);
        });
    });
    write_listing(feature_dir / kListingName, listing);
    std::uint64_t total = 0;
    for (auto s : sizes) total += s;
    run.count("images", listing.size());
    run.count("features", total);
    run.output(feature_dir);
    run.write_manifest(common.manifest_path(feature_dir, "extract"), cfg, common.argv);
    std::cout << "extract: " << listing.size() << " images, " << total << " features\n";
    return kOk;
}

std::vector<CorpusEntry> feature_listing(const fs::path& feature_dir) {
    require_dir(feature_dir, "feature directory");
    require_file(feature_dir / kListingName, "feature listing");
    return read_listing_file(feature_dir / kListingName);
}

int cmd_index_train(const Common& common, const fs::path& feature_dir, const fs::path& index_file, std::size_t train_limit) {
    PipelineConfig cfg = common.resolve();
    const auto listing = feature_listing(feature_dir);
    Run run("index-train");
    std::vector<FeatureSet> sets(listing.size());
    run.stage("load", [&] {
        parallel_for(listing.size(), cfg.workers,
                     [&](std::size_t i) { sets[i] = load_features(feature_path(feature_dir, listing[i].id)); });
    });
    auto sample = run.stage("sample", [&] { return sample_descriptors(sets, train_limit, cfg.index.seed); });
    if (sample.size() < cfg.index.coarse_k) {
        throw ConfigError("index-train: " + std::to_string(sample.size()) + " descriptors cannot train " +
                          std::to_string(cfg.index.coarse_k) + " coarse centroids");
    }
    auto index = run.stage("train", [&] { return IvfadcIndex::train(sample, cfg.index); });
    run.stage("save", [&] {
        if (dir_of(index_file) != ".") make_dir(dir_of(index_file));
        try {
            index.save(index_file);
        } catch (const std::runtime_error& e) {
            throw OutputError(e.what());
        }
    });
    run.count("training_descriptors", sample.size());
    run.output(index_file);
    run.write_manifest(common.manifest_path(dir_of(index_file), "index-train"), cfg, common.argv);
    std::cout << "index-train: trained on " << sample.size() << " descriptors -> " << index_file.string() << '\n';
    return kOk;
}

int cmd_index_add(const Common& common, const fs::path& feature_dir, const fs::path& index_file) {
    PipelineConfig cfg = common.resolve();
    const auto listing = feature_listing(feature_dir);
    require_file(index_file, "index file");
    Run run("index-add");
    auto index = run.stage("load", [&] { return IvfadcIndex::load(index_file); });
    std::vector<fs::path> files;
    for (const auto& e : listing) {
        files.push_back(feature_path(feature_dir, e.id));
        require_file(files.back(), "feature file");
    }
    IngestOptions opts;
    opts.encode_workers = cfg.workers;
    const auto report = run.stage("ingest", [&] { return ingest_feature_files(index, files, opts); });
    run.stage("save", [&] {
        try {
            index.save(index_file);
        } catch (const std::runtime_error& e) {
            throw OutputError(e.what());
        }
    });
    run.count("images", files.size());
    run.count("features", report.added);
    run.count("batches", report.batch_sizes.size());
    run.count("index_features", index.n_features());
    run.output(index_file);
    run.write_manifest(common.manifest_path(dir_of(index_file), "index-add"), cfg, common.argv);
    std::cout << "index-add: " << report.added << " features from " << files.size() << " images\n";
    return kOk;
}

int cmd_query(const Common& common, const fs::path& feature_dir, const fs::path& index_file, std::optional<ImageId> id,
              const std::string& image, const fs::path& out) {
    PipelineConfig cfg = common.resolve();
    require_dir(feature_dir, "feature directory");
    require_file(index_file, "index file");
    if (!id && image.empty()) throw MissingInput("query: give --id or --image");
    Run run("query");
    const auto index = run.stage("load", [&] { return IvfadcIndex::load(index_file); });
    FeatureStore features(feature_dir);
    FeatureSet query;
    std::optional<ImageId> self;
    if (id) {
        query = features(*id);
        self = id;
    } else {
        require_file(image, "query image");
        query = run.stage("extract", [&] { return extract_features(read_image(image), cfg.detector); });
    }
    const auto rank = run.stage("filter", [&] { return retrieve(query, index, features, cfg.filter, cfg.iterative, self); });
    write_file(out, [&](std::ostream& s) { write_rank_csv(s, rank); });
    run.count("query_features", query.size());
    run.count("ranked", rank.size());
    run.output(out);
    run.write_manifest(common.manifest_path(dir_of(out), "query"), cfg, common.argv);
    std::cout << "query: " << rank.size() << " images ranked -> " << out.string() << '\n';
    return kOk;
}

ProvenanceGraph graph_for(ImageId query, const std::vector<ImageId>& others, ImageStore& images, FeatureStore& features,
                          const PipelineConfig& cfg, Builder builder, const fs::path& dump_dir, std::size_t workers,
                          std::size_t* pairs = nullptr) {
    auto cands = make_candidates(query, others, images, features);
    const auto a = build_matrices(0, cands, cfg.match, workers);
    if (!dump_dir.empty()) {
        try {
            dump_matrices(a, dump_dir);
        } catch (const std::runtime_error& e) {
            throw OutputError(e.what());
        }
    }
    if (pairs) *pairs = a.pair_computations;
    auto g = build_graph(a, builder, cfg.expansion);
    images.label(g);
    return g;
}

int cmd_graph(const Common& common, const fs::path& corpus_dir, const fs::path& feature_dir, const std::string& builder_name,
              bool oracle, const std::string& case_file, const std::string& cases_dir, const std::string& rank_file,
              std::optional<ImageId> query_id, const std::string& dump, const fs::path& out) {
    PipelineConfig cfg = common.resolve();
    const Builder builder = parse_builder(builder_name);
    require_dir(corpus_dir, "corpus directory");
    require_dir(feature_dir, "feature directory");
    ImageStore images(corpus_dir, read_corpus(corpus_dir));
    FeatureStore features(feature_dir);
    Run run("graph");

    if (oracle && !cases_dir.empty()) {
        // Every case in a directory; `out` is an output directory.
        const auto cases = load_cases(cases_dir);
        std::vector<ProvenanceGraph> graphs(cases.size());
        std::vector<std::size_t> pairs(cases.size());
        run.stage("graphs", [&] {
            parallel_for(cases.size(), cfg.workers, [&](std::size_t i) {
                const auto& c = cases[i];
                const fs::path d = dump.empty() ? fs::path{} : fs::path(dump) / c.name;
                graphs[i] = graph_for(c.query, {c.relevant.begin(), c.relevant.end()}, images, features, cfg, builder, d, 1,
                                      &pairs[i]);
            });
        });
        std::uint64_t total_pairs = 0;
        for (std::size_t i = 0; i < cases.size(); ++i) {
            const auto p = out / (cases[i].name + ".json");
            write_file(p, [&](std::ostream& s) { s << to_json(graphs[i]).dump(2) << '\n'; });
            total_pairs += pairs[i];
        }
        run.count("cases", cases.size());
        run.count("pair_computations", total_pairs);
        run.output(out);
        run.write_manifest(common.manifest_path(out, "graph"), cfg, common.argv);
        std::cout << "graph: " << cases.size() << " oracle graphs -> " << out.string() << '\n';
        return kOk;
    }

    ImageId query = 0;
    std::vector<ImageId> others;
    if (oracle) {
        require_file(case_file, "case file");
        const auto c = load_case(case_file);
        query = c.query;
        others.assign(c.relevant.begin(), c.relevant.end());
    } else {
        require_file(rank_file, "rank file");
        if (!query_id) throw MissingInput("graph: --query is required with --rank");
        std::ifstream in(rank_file);
        const auto rank = read_rank_csv(in);
        query = *query_id;
        std::size_t limit = std::min(rank.size(), cfg.filter.rank_k);
        for (std::size_t i = 0; i < limit; ++i) others.push_back(rank[i].image_id);
    }
    std::size_t pairs = 0;
    const auto g = run.stage("graph", [&] {
        return graph_for(query, others, images, features, cfg, builder, dump, cfg.workers, &pairs);
    });
    write_file(out, [&](std::ostream& s) { s << to_json(g).dump(2) << '\n'; });
    run.count("candidates", others.size() + 1);
    run.count("nodes", g.nodes.size());
    run.count("edges", g.edges.size());
    run.count("pair_computations", pairs);
    run.output(out);
    run.write_manifest(common.manifest_path(dir_of(out), "graph"), cfg, common.argv);
    std::cout << "graph: " << g.nodes.size() << " nodes, " << g.edges.size() << " edges -> " << out.string() << '\n';
    return kOk;
}

int cmd_end_to_end(const Common& common, const fs::path& corpus_dir, const fs::path& feature_dir, const fs::path& index_file,
                   const fs::path& cases_dir, const std::string& builder_name, const fs::path& out) {
    PipelineConfig cfg = common.resolve();
    const Builder builder = parse_builder(builder_name);
    require_dir(corpus_dir, "corpus directory");
    require_dir(feature_dir, "feature directory");
    require_file(index_file, "index file");
    const auto cases = load_cases(cases_dir);
    ImageStore images(corpus_dir, read_corpus(corpus_dir));
    FeatureStore features(feature_dir);
    Run run("end-to-end");
    const auto index = run.stage("load", [&] { return IvfadcIndex::load(index_file); });

    std::vector<RankedList> ranks(cases.size());
    std::vector<ProvenanceGraph> graphs(cases.size());
    run.stage("cases", [&] {
        parallel_for(cases.size(), cfg.workers, [&](std::size_t i) {
            const auto& c = cases[i];
            ranks[i] = retrieve(features(c.query), index, features, cfg.filter, cfg.iterative, c.query);
            std::vector<ImageId> others;
            for (const auto& e : ranks[i]) others.push_back(e.image_id);
            graphs[i] = graph_for(c.query, others, images, features, cfg, builder, {}, 1);
        });
    });
    for (std::size_t i = 0; i < cases.size(); ++i) {
        write_file(out / "ranks" / (cases[i].name + ".csv"), [&](std::ostream& s) { write_rank_csv(s, ranks[i]); });
        write_file(out / "graphs" / (cases[i].name + ".json"), [&](std::ostream& s) { s << to_json(graphs[i]).dump(2) << '\n'; });
    }
    run.count("cases", cases.size());
    run.output(out / "ranks");
    run.output(out / "graphs");
    run.write_manifest(common.manifest_path(out, "end-to-end"), cfg, common.argv);
    std::cout << "end-to-end: " << cases.size() << " cases -> " << out.string() << '\n';
    return kOk;
}

int cmd_eval(const Common& common, const fs::path& cases_dir, const fs::path& results, const fs::path& out) {
    PipelineConfig cfg = common.resolve();
    const auto cases = load_cases(cases_dir);
    require_dir(results, "results directory");
    Run run("eval");
    std::vector<CaseResult> res(cases.size());
    std::uint64_t missing = 0;
    for (std::size_t i = 0; i < cases.size(); ++i) {
        const auto rank = results / "ranks" / (cases[i].name + ".csv");
        const auto graph = results / "graphs" / (cases[i].name + ".json");
        if (fs::exists(rank)) {
            std::ifstream in(rank);
            res[i].rank = read_rank_csv(in);
        }
        if (fs::exists(graph)) res[i].graph = load_graph(graph);
        if (!res[i].rank && !res[i].graph) ++missing;
    }
    const auto rep = run.stage("evaluate", [&] { return evaluate_suite(cases, res); });
    write_file(out / "report.csv", [&](std::ostream& s) { write_report_csv(s, rep); });
    write_file(out / "report.json", [&](std::ostream& s) { s << to_json(rep).dump(2) << '\n'; });
    run.count("cases", cases.size());
    run.count("missing", missing);
    run.output(out / "report.csv");
    run.output(out / "report.json");
    run.write_manifest(common.manifest_path(out, "eval"), cfg, common.argv);
    write_report_csv(std::cout, rep);
    if (missing) std::cerr << "eval: " << missing << " case(s) had no results\n";
    return kOk;
}

int dispatch(std::vector<std::string> args);

/// Replays the argv recorded in a manifest from its working directory.
int cmd_rerun(const fs::path& manifest) {
    require_file(manifest, "manifest");
    std::ifstream in(manifest);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(std::string("manifest: ") + e.what());
    }
    if (!j.contains("argv") || !j.contains("cwd")) throw FormatError("manifest: missing argv or cwd");
    const auto argv = j["argv"].get<std::vector<std::string>>();
    fs::current_path(j["cwd"].get<std::string>());
    return dispatch(argv);
}

// ---------------------------------------------------------------------------

int dispatch(std::vector<std::string> args) {
    CLI::App app{"Image provenance analysis: filtering, graph construction, evaluation"};
    app.require_subcommand(1);
    app.fallthrough();

    Common common;
    common.argv = args;
    app.add_option("--config", common.config_file, "INI config file ([detector], [index], [match], [filter], [graph], [run])");
    app.add_option("--preset", common.preset, "surf2k | surf5k | dsurf | dsurf-if")
        ->check(CLI::IsMember({"surf2k", "surf5k", "dsurf", "dsurf-if"}));
    app.add_option("--rank-k", common.rank_k, "Rank cutoff")->check(CLI::PositiveNumber);
    app.add_option("--workers", common.workers, "Worker threads")->check(CLI::PositiveNumber);
    app.add_option("--seed", common.seed, "Seed for index training, RANSAC sampling and synthesis");
    app.add_option("--manifest", common.manifest, "Run manifest path (default: next to the outputs)");

    std::string spec_file, corpus, feature_dir, index_file, out, builder = "clustered", case_file, cases_dir, rank_file,
                                                                  image, dump, results, manifest_in;
    std::optional<std::size_t> graphs, distractors;
    std::optional<ImageId> id;
    std::size_t train_limit = 200000;
    bool oracle = false;
    const auto builders = CLI::IsMember({"kruskal", "clustered"});

    auto* synth = app.add_subcommand("synth", "Generate a synthetic provenance corpus");
    synth->add_option("--spec", spec_file, "Synthesis spec (key = value)");
    synth->add_option("--out", out, "Output corpus directory")->required();
    synth->add_option("--graphs", graphs, "Number of provenance graphs");
    synth->add_option("--distractors", distractors, "Number of distractor images");

    auto* extract = app.add_subcommand("extract", "Detect and describe interest points for every corpus image");
    extract->add_option("--corpus", corpus, "Corpus directory")->required();
    extract->add_option("--features", feature_dir, "Feature output directory")->required();

    auto* train = app.add_subcommand("index-train", "Train the OPQ + IVFADC index on a descriptor sample");
    train->add_option("--features", feature_dir, "Feature directory")->required();
    train->add_option("--index", index_file, "Index file to write")->required();
    train->add_option("--train-limit", train_limit, "Training sample size")->check(CLI::PositiveNumber);

    auto* add = app.add_subcommand("index-add", "Add every feature file to a trained index");
    add->add_option("--features", feature_dir, "Feature directory")->required();
    add->add_option("--index", index_file, "Index file (updated in place)")->required();

    auto* query = app.add_subcommand("query", "Rank corpus images related to a query");
    query->add_option("--features", feature_dir, "Feature directory")->required();
    query->add_option("--index", index_file, "Index file")->required();
    auto* qid = query->add_option("--id", id, "Query by corpus image id");
    query->add_option("--image", image, "Query by image file")->excludes(qid);
    query->add_option("--out", out, "Rank CSV to write")->required();

    auto* graph = app.add_subcommand("graph", "Build a provenance graph");
    graph->add_option("--corpus", corpus, "Corpus directory")->required();
    graph->add_option("--features", feature_dir, "Feature directory")->required();
    graph->add_option("--builder", builder, "kruskal (undirected) or clustered (directed)")->check(builders);
    auto* oracle_flag = graph->add_flag("--oracle", oracle, "Use a ground-truth relevant set instead of a rank");
    graph->add_option("--case", case_file, "Ground-truth case (with --oracle)")->needs(oracle_flag);
    graph->add_option("--cases", cases_dir, "Directory of cases (with --oracle); --out is then a directory")->needs(oracle_flag);
    graph->add_option("--rank", rank_file, "Rank CSV from `query`")->excludes(oracle_flag);
    graph->add_option("--query", id, "Query image id (with --rank)");
    graph->add_option("--dump-matrices", dump, "Write M, D_gcm and D_mi as CSV here");
    graph->add_option("--out", out, "Graph JSON (or directory with --cases)")->required();

    auto* e2e = app.add_subcommand("end-to-end", "Rank and build a graph for every case");
    e2e->add_option("--corpus", corpus, "Corpus directory")->required();
    e2e->add_option("--features", feature_dir, "Feature directory")->required();
    e2e->add_option("--index", index_file, "Index file")->required();
    e2e->add_option("--cases", cases_dir, "Directory of ground-truth cases")->required();
    e2e->add_option("--builder", builder, "kruskal or clustered")->check(builders);
    e2e->add_option("--out", out, "Output directory (ranks/, graphs/)")->required();

    auto* eval = app.add_subcommand("eval", "Score ranks and graphs against ground truth");
    eval->add_option("--cases", cases_dir, "Directory of ground-truth cases")->required();
    eval->add_option("--results", results, "Directory holding ranks/ and graphs/")->required();
    eval->add_option("--out", out, "Report directory")->required();

    auto* rerun = app.add_subcommand("rerun", "Repeat the run recorded in a manifest");
    rerun->add_option("manifest", manifest_in, "Manifest JSON")->required();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    if (synth->parsed()) return cmd_synth(common, spec_file, out, graphs, distractors);
    if (extract->parsed()) return cmd_extract(common, corpus, feature_dir);
    if (train->parsed()) return cmd_index_train(common, feature_dir, index_file, train_limit);
    if (add->parsed()) return cmd_index_add(common, feature_dir, index_file);
    if (query->parsed()) return cmd_query(common, feature_dir, index_file, id, image, out);
    if (graph->parsed()) {
        if (oracle && case_file.empty() && cases_dir.empty()) throw MissingInput("graph --oracle needs --case or --cases");
        if (!oracle && rank_file.empty()) throw MissingInput("graph needs --oracle or --rank");
        return cmd_graph(common, corpus, feature_dir, builder, oracle, case_file, cases_dir, rank_file, id, dump, out);
    }
    if (e2e->parsed()) return cmd_end_to_end(common, corpus, feature_dir, index_file, cases_dir, builder, out);
    if (eval->parsed()) return cmd_eval(common, cases_dir, results, out);
    if (rerun->parsed()) return cmd_rerun(manifest_in);
    return kUsage;
}

}  // namespace

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    try {
        return dispatch(args);
    } catch (const ConfigError& e) {
        std::cerr << "error: config: " << e.what() << '\n';
        return kBadConfig;
    } catch (const MissingInput& e) {
        std::cerr << "error: missing input: " << e.what() << '\n';
        return kMissingInput;
    } catch (const FormatError& e) {
        std::cerr << "error: bad file format: " << e.what() << '\n';
        return kBadFormat;
    } catch (const ImageIoError& e) {
        std::cerr << "error: image: " << e.what() << '\n';
        return kBadFormat;
    } catch (const OutputError& e) {
        std::cerr << "error: output: " << e.what() << '\n';
        return kOutputError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kFailure;
    }
}
