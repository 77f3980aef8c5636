#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "provenance/eval.hpp"
#include "provenance/image_io.hpp"
#include "provenance/imaging.hpp"

namespace provenance {

struct SynthSpec {
    std::filesystem::path seed_dir;  // optional photos; procedural scenes when empty
    std::size_t graphs = 20;
    std::size_t min_nodes = 6;
    std::size_t max_nodes = 12;
    std::size_t min_depth = 1;
    std::size_t max_depth = 6;
    std::size_t max_branching = 3;
    double splice_probability = 0.7;
    std::size_t distractors = 5000;
    int image_size = 256;
    std::uint64_t seed = 2024;

    void validate() const {
        if (graphs < 1) throw std::invalid_argument("SynthSpec: graphs must be >= 1");
        if (min_depth < 1 || max_depth < min_depth) throw std::invalid_argument("SynthSpec: bad depth range");
        if (max_branching < 1) throw std::invalid_argument("SynthSpec: max_branching must be >= 1");
        if (min_nodes < 2 || max_nodes < min_nodes) throw std::invalid_argument("SynthSpec: bad node range");
        if (image_size < 64) throw std::invalid_argument("SynthSpec: image_size must be >= 64");
    }
};

/// One applied transformation, i.e. one ground-truth edge.
struct SynthEdge {
    ImageId from = 0;
    ImageId to = 0;
    std::string transform;
    bool irreversible = false;
};

struct SynthImage {
    ImageId id = 0;
    std::string file;
    GrayImage image;
};

struct SynthCase {
    GroundTruthCase truth;
    std::vector<SynthEdge> edges;
};

struct SynthCorpus {
    std::vector<SynthImage> images;  // indexed by image id
    std::vector<SynthCase> cases;
    std::vector<ImageId> distractors;
};

namespace synth_detail {

using Rng = std::mt19937_64;

inline double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
inline int uniform_int(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

inline std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t x = seed ^ (stream * 0x9e3779b97f4a7c15ULL);
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Random textured scene: gradient and waves underneath, filled shapes and
/// strokes on top, light pixel noise.
inline GrayImage procedural_scene(int size, Rng& rng) {
    std::vector<double> px(static_cast<std::size_t>(size) * size);
    const double base = uniform(rng, 60, 190), gx = uniform(rng, -0.3, 0.3), gy = uniform(rng, -0.3, 0.3);
    struct Wave {
        double fx, fy, phase, amp;
    };
    std::vector<Wave> waves(3);
    for (auto& w : waves) w = {uniform(rng, -0.08, 0.08), uniform(rng, -0.08, 0.08), uniform(rng, 0, 6.28), uniform(rng, 5, 20)};
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            double v = base + gx * (x - size / 2) + gy * (y - size / 2);
            for (const auto& w : waves) v += w.amp * std::sin(w.fx * x + w.fy * y + w.phase);
            px[static_cast<std::size_t>(y) * size + x] = v;
        }
    const int shapes = uniform_int(rng, 25, 45);
    for (int s = 0; s < shapes; ++s) {
        const int kind = uniform_int(rng, 0, 3);
        const double cx = uniform(rng, 0, size), cy = uniform(rng, 0, size);
        const double rx = uniform(rng, 4, size / 7.0), ry = uniform(rng, 4, size / 7.0);
        const double ang = uniform(rng, 0, std::numbers::pi), ca = std::cos(ang), sa = std::sin(ang);
        const double level = uniform(rng, 0, 255);
        const double stripe = uniform_int(rng, 0, 2) == 0 ? uniform(rng, 0.3, 1.2) : 0.0;
        const int x0 = std::max(0, static_cast<int>(cx - rx - ry)), x1 = std::min(size - 1, static_cast<int>(cx + rx + ry));
        const int y0 = std::max(0, static_cast<int>(cy - rx - ry)), y1 = std::min(size - 1, static_cast<int>(cy + rx + ry));
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) {
                const double u = (x - cx) * ca + (y - cy) * sa, v = -(x - cx) * sa + (y - cy) * ca;
                bool inside = false;
                switch (kind) {
                    case 0: inside = std::abs(u) <= rx && std::abs(v) <= ry; break;
                    case 1: inside = (u * u) / (rx * rx) + (v * v) / (ry * ry) <= 1.0; break;
                    case 2: inside = v >= -ry && v <= ry && std::abs(u) <= rx * (ry - v) / (2 * ry); break;
                    default: inside = std::abs(v) <= 1.5 && std::abs(u) <= rx + ry; break;  // stroke
                }
                if (!inside) continue;
                double val = level;
                if (stripe > 0) val += 40.0 * std::sin(stripe * u);
                px[static_cast<std::size_t>(y) * size + x] = val;
            }
    }
    GrayImage img(size, size);
    std::normal_distribution<double> noise(0.0, 3.0);
    for (std::size_t i = 0; i < px.size(); ++i) img.data[i] = clamp_to_u8(px[i] + noise(rng));
    return img;
}

/// Square crop of a photo, resampled to `size`.
inline GrayImage photo_scene(const std::vector<GrayImage>& photos, int size, Rng& rng) {
    const GrayImage& src = photos[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(photos.size()) - 1))];
    const int side = std::min(src.width, src.height);
    const int c = uniform_int(rng, std::max(16, side / 2), side);
    const int x = uniform_int(rng, 0, src.width - c), y = uniform_int(rng, 0, src.height - c);
    const GrayImage region = crop(src, x, y, c, c);
    const double s = static_cast<double>(size) / c;
    return warp(region, Homography::translation(0.5 * s - 0.5, 0.5 * s - 0.5) * Homography::scaling(s, s), size, size);
}

inline GrayImage gaussian_blur(const GrayImage& img, double sigma) {
    const int r = std::max(1, static_cast<int>(std::ceil(3 * sigma)));
    std::vector<double> k(static_cast<std::size_t>(2 * r + 1));
    double sum = 0;
    for (int i = -r; i <= r; ++i) sum += k[static_cast<std::size_t>(i + r)] = std::exp(-0.5 * i * i / (sigma * sigma));
    for (auto& v : k) v /= sum;
    std::vector<double> tmp(img.data.size());
    const int w = img.width, h = img.height;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0;
            for (int i = -r; i <= r; ++i) acc += k[static_cast<std::size_t>(i + r)] * img.at(std::clamp(x + i, 0, w - 1), y);
            tmp[static_cast<std::size_t>(y) * w + x] = acc;
        }
    GrayImage out(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0;
            for (int i = -r; i <= r; ++i)
                acc += k[static_cast<std::size_t>(i + r)] * tmp[static_cast<std::size_t>(std::clamp(y + i, 0, h - 1)) * w + x];
            out.at(x, y) = clamp_to_u8(acc);
        }
    return out;
}

struct Applied {
    GrayImage image;
    std::string name;
    bool irreversible = false;
};

inline const std::vector<std::string>& palette() {
    static const std::vector<std::string> names{"crop", "scale", "rotate", "brightness", "clip", "blur", "quantize"};
    return names;
}

inline Applied apply_transform(const GrayImage& img, const std::string& name, Rng& rng) {
    const int w = img.width, h = img.height;
    if (name == "crop") {
        const int cw = std::max(48, static_cast<int>(w * uniform(rng, 0.7, 0.9)));
        const int ch = std::max(48, static_cast<int>(h * uniform(rng, 0.7, 0.9)));
        const int x = uniform_int(rng, 0, std::max(0, w - cw)), y = uniform_int(rng, 0, std::max(0, h - ch));
        return {crop(img, x, y, std::min(cw, w), std::min(ch, h)), name, false};
    }
    if (name == "scale") {
        const bool down = uniform_int(rng, 0, 1) == 0;
        const double s = down ? uniform(rng, 0.65, 0.85) : uniform(rng, 1.1, 1.3);
        const int ow = std::max(48, static_cast<int>(std::lround(w * s))), oh = std::max(48, static_cast<int>(std::lround(h * s)));
        const GrayImage src = down ? gaussian_blur(img, 0.5 / s) : img;
        const Homography H = Homography::translation(0.5 * s - 0.5, 0.5 * s - 0.5) * Homography::scaling(s, s);
        return {warp(src, H, ow, oh), down ? "downscale" : "upscale", down};
    }
    if (name == "rotate") {
        const double deg = uniform(rng, 3.0, 10.0) * (uniform_int(rng, 0, 1) ? 1 : -1);
        const double cx = (w - 1) / 2.0, cy = (h - 1) / 2.0;
        const Homography H = Homography::translation(cx, cy) * Homography::similarity(1.0, deg * std::numbers::pi / 180.0, 0, 0) *
                             Homography::translation(-cx, -cy);
        return {warp(img, H, w, h), name, false};
    }
    if (name == "brightness") {
        const double a = uniform(rng, 0.85, 1.15), b = uniform(rng, -20, 20);
        GrayImage out = img;
        for (auto& v : out.data) v = clamp_to_u8(a * v + b);
        return {out, name, false};
    }
    if (name == "clip") {
        const int lo = uniform_int(rng, 30, 60), hi = uniform_int(rng, 180, 215);
        GrayImage out = img;
        for (auto& v : out.data) v = static_cast<std::uint8_t>(std::clamp<int>(v, lo, hi));
        return {out, name, true};
    }
    if (name == "blur") return {gaussian_blur(img, uniform(rng, 0.8, 1.6)), name, true};
    if (name == "quantize") {
        const int q = uniform_int(rng, 0, 1) ? 16 : 24;
        GrayImage out = img;
        for (auto& v : out.data) v = static_cast<std::uint8_t>(std::min(255, (v / q) * q + q / 2));
        return {out, name, true};
    }
    throw std::invalid_argument("unknown transform: " + name);
}

/// Pastes a rectangle of `donor` into a copy of `host`.
inline GrayImage splice(const GrayImage& host, const GrayImage& donor, Rng& rng) {
    const int pw = std::min(donor.width, std::max(32, static_cast<int>(host.width * uniform(rng, 0.35, 0.5))));
    const int ph = std::min(donor.height, std::max(32, static_cast<int>(host.height * uniform(rng, 0.35, 0.5))));
    const int sx = uniform_int(rng, 0, donor.width - pw), sy = uniform_int(rng, 0, donor.height - ph);
    const int dx = uniform_int(rng, 0, std::max(0, host.width - pw)), dy = uniform_int(rng, 0, std::max(0, host.height - ph));
    GrayImage out = host;
    for (int y = 0; y < std::min(ph, host.height - dy); ++y)
        for (int x = 0; x < std::min(pw, host.width - dx); ++x) out.at(dx + x, dy + y) = donor.at(sx + x, sy + y);
    return out;
}

struct LocalNode {
    GrayImage image;
    std::size_t depth = 0;
    std::size_t children = 0;
};

struct LocalEdge {
    std::size_t from, to;
    std::string transform;
    bool irreversible;
};

struct LocalGraph {
    std::vector<LocalNode> nodes;
    std::vector<LocalEdge> edges;
    std::size_t query = 0;
};

/// One provenance case. A host tree grows from a root by single transforms;
/// optionally a donor chain (donor root -> donor) is spliced into a host
/// node, producing a composite with one host edge and one donor edge.
template <typename SceneFn>
LocalGraph make_graph(const SynthSpec& spec, Rng& rng, SceneFn&& scene, std::size_t graph_index) {
    LocalGraph g;
    const auto target = static_cast<std::size_t>(uniform_int(rng, static_cast<int>(spec.min_nodes), static_cast<int>(spec.max_nodes)));
    const bool composite = target >= 4 && uniform(rng, 0, 1) < spec.splice_probability;
    const std::size_t host_nodes = composite ? target - 3 : target;
    const auto& pal = palette();

    auto add_child = [&](std::size_t parent, const std::string& t) {
        Applied a = apply_transform(g.nodes[parent].image, t, rng);
        g.nodes.push_back({std::move(a.image), g.nodes[parent].depth + 1, 0});
        ++g.nodes[parent].children;
        g.edges.push_back({parent, g.nodes.size() - 1, a.name, a.irreversible});
    };

    g.nodes.push_back({scene(rng), 0, 0});
    // Chain down to the depth floor first, then branch at random. The
    // palette is cycled so every transform is exercised.
    std::size_t step = graph_index;
    for (std::size_t d = 0; d < spec.min_depth && g.nodes.size() < host_nodes; ++d) {
        add_child(g.nodes.size() - 1, pal[step++ % pal.size()]);
    }
    while (g.nodes.size() < host_nodes) {
        std::vector<std::size_t> open;
        for (std::size_t i = 0; i < g.nodes.size(); ++i)
            if (g.nodes[i].depth < spec.max_depth && g.nodes[i].children < spec.max_branching) open.push_back(i);
        if (open.empty()) break;
        add_child(open[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(open.size()) - 1))],
                  pal[step++ % pal.size()]);
    }

    if (composite) {
        std::vector<std::size_t> hosts;
        for (std::size_t i = 0; i < g.nodes.size(); ++i)
            if (g.nodes[i].depth < spec.max_depth && g.nodes[i].children < spec.max_branching) hosts.push_back(i);
        const std::size_t host = hosts.empty() ? 0 : hosts[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(hosts.size()) - 1))];
        g.nodes.push_back({scene(rng), 0, 0});
        const std::size_t donor_root = g.nodes.size() - 1;
        add_child(donor_root, pal[step++ % pal.size()]);
        const std::size_t donor = g.nodes.size() - 1;
        GrayImage comp = splice(g.nodes[host].image, g.nodes[donor].image, rng);
        g.nodes.push_back({std::move(comp), std::max(g.nodes[host].depth, g.nodes[donor].depth) + 1, 0});
        const std::size_t c = g.nodes.size() - 1;
        ++g.nodes[host].children;
        ++g.nodes[donor].children;
        g.edges.push_back({host, c, "splice_host", false});
        g.edges.push_back({donor, c, "splice_donor", false});
        g.query = c;
    } else {
        g.query = 0;
        for (std::size_t i = 0; i < g.nodes.size(); ++i)
            if (g.nodes[i].depth > g.nodes[g.query].depth) g.query = i;
    }
    return g;
}

inline std::string image_file(ImageId id) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "img_%06llu.png", static_cast<unsigned long long>(id));
    return buf;
}

}  // namespace synth_detail

inline std::vector<GrayImage> load_seed_photos(const std::filesystem::path& dir) {
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        const auto ext = e.path().extension().string();
        if (ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".PNG" || ext == ".JPG") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<GrayImage> photos;
    for (const auto& f : files) photos.push_back(read_image(f));
    if (photos.size() < 2) throw std::runtime_error("synth: need at least 2 seed images in " + dir.string());
    return photos;
}

/// Builds the corpus in memory. Graph images get ids first, distractors
/// follow. Every case and distractor draws from its own seeded stream, so
/// the result does not depend on `workers`.
inline SynthCorpus synthesize(const SynthSpec& spec, std::size_t workers = 1) {
    spec.validate();
    std::vector<GrayImage> photos;
    if (!spec.seed_dir.empty()) photos = load_seed_photos(spec.seed_dir);
    auto scene = [&](synth_detail::Rng& rng) {
        return photos.empty() ? synth_detail::procedural_scene(spec.image_size, rng)
                              : synth_detail::photo_scene(photos, spec.image_size, rng);
    };

    std::vector<synth_detail::LocalGraph> graphs(spec.graphs);
    parallel_for(spec.graphs, workers, [&](std::size_t g) {
        synth_detail::Rng rng(synth_detail::stream_seed(spec.seed, g + 1));
        graphs[g] = synth_detail::make_graph(spec, rng, scene, g);
    });

    SynthCorpus corpus;
    for (std::size_t g = 0; g < graphs.size(); ++g) {
        const ImageId base = corpus.images.size();
        SynthCase c;
        c.truth.name = "case_" + std::to_string(g);
        c.truth.query = base + graphs[g].query;
        c.truth.graph.query = c.truth.query;
        for (std::size_t i = 0; i < graphs[g].nodes.size(); ++i) {
            const ImageId id = base + i;
            corpus.images.push_back({id, synth_detail::image_file(id), std::move(graphs[g].nodes[i].image)});
            c.truth.relevant.insert(id);
            c.truth.graph.nodes.push_back({id, synth_detail::image_file(id)});
        }
        for (const auto& e : graphs[g].edges) {
            c.truth.graph.edges.push_back({base + e.from, base + e.to, true, 1.0});
            c.edges.push_back({base + e.from, base + e.to, e.transform, e.irreversible});
        }
        corpus.cases.push_back(std::move(c));
    }

    const ImageId first = corpus.images.size();
    corpus.images.resize(first + spec.distractors);
    // Distractor scenes use streams disjoint from the graph streams.
    parallel_for(spec.distractors, workers, [&](std::size_t d) {
        synth_detail::Rng rng(synth_detail::stream_seed(spec.seed ^ 0xd157ac7011ULL, d + 1));
        const ImageId id = first + d;
        corpus.images[id] = {id, synth_detail::image_file(id), synth_detail::procedural_scene(spec.image_size, rng)};
    });
    for (std::size_t d = 0; d < spec.distractors; ++d) corpus.distractors.push_back(first + d);
    return corpus;
}

inline nlohmann::ordered_json to_json(const SynthCase& c) {
    nlohmann::ordered_json j = to_json(c.truth);
    j["edge_info"] = nlohmann::ordered_json::array();
    for (const auto& e : c.edges) {
        j["edge_info"].push_back({{"from", e.from}, {"to", e.to}, {"transform", e.transform}, {"irreversible", e.irreversible}});
    }
    return j;
}

inline std::vector<SynthEdge> edge_info_from_json(const nlohmann::json& j) {
    std::vector<SynthEdge> out;
    if (!j.contains("edge_info")) return out;
    for (const auto& e : j.at("edge_info")) {
        out.push_back({e.at("from").get<ImageId>(), e.at("to").get<ImageId>(), e.at("transform").get<std::string>(),
                       e.at("irreversible").get<bool>()});
    }
    return out;
}

/// Layout: images/<file>.png, cases/case_N.json, images.txt ("id file" per line),
/// distractors.txt (one id per line).
inline void write_corpus(const SynthCorpus& corpus, const std::filesystem::path& out_dir, std::size_t workers = 1) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir / "images");
    fs::create_directories(out_dir / "cases");
    parallel_for(corpus.images.size(), workers,
                 [&](std::size_t i) { write_png(out_dir / "images" / corpus.images[i].file, corpus.images[i].image); });
    for (const auto& c : corpus.cases) {
        std::ofstream out(out_dir / "cases" / (c.truth.name + ".json"));
        if (!out) throw std::runtime_error("synth: cannot write case file");
        out << to_json(c).dump(2) << '\n';
    }
    std::ofstream list(out_dir / "images.txt");
    for (const auto& im : corpus.images) list << im.id << ' ' << "images/" << im.file << '\n';
    std::ofstream dis(out_dir / "distractors.txt");
    for (auto id : corpus.distractors) dis << id << '\n';
    if (!list || !dis) throw std::runtime_error("synth: cannot write listings");
}

inline std::vector<GroundTruthCase> generate(const SynthSpec& spec, const std::filesystem::path& out_dir,
                                             std::size_t workers = 1) {
    SynthCorpus corpus = synthesize(spec, workers);
    write_corpus(corpus, out_dir, workers);
    std::vector<GroundTruthCase> cases;
    for (auto& c : corpus.cases) cases.push_back(std::move(c.truth));
    return cases;
}

}  // namespace provenance
