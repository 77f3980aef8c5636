#pragma once

#include <cstdio>
#include <filesystem>
#include <sstream>
#include <stdexcept>
#include <string>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "provenance/detector.hpp"
#include "provenance/filtering.hpp"
#include "provenance/graphs.hpp"
#include "provenance/index.hpp"
#include "provenance/pairwise.hpp"
#include "provenance/synth.hpp"

namespace provenance {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct PipelineConfig {
    std::string preset = "dsurf";
    DetectorConfig detector = DetectorConfig::dsurf();
    IndexConfig index;
    MatchConfig match;
    FilterConfig filter;
    ExpansionConfig expansion;
    bool iterative = false;
    std::filesystem::path corpus_dir, feature_dir, index_file, output_dir;
    std::size_t workers = 1;

    void validate() const {
        detector.validate();
        index.validate();
        match.validate();
        filter.validate();
        if (workers < 1) throw ConfigError("workers must be >= 1");
    }

    /// Canonical key = value text of every setting; hashed into run manifests.
    std::string canonical() const {
        std::ostringstream s;
        s.precision(17);
        s << "preset=" << preset << "\ndetector.p=" << detector.p << "\ndetector.m=" << detector.m
          << "\ndetector.octaves=" << detector.octaves << "\ndetector.layers=" << detector.layers
          << "\ndetector.init_step=" << detector.init_step << "\ndetector.hessian_threshold=" << detector.hessian_threshold
          << "\ndetector.overlap_factor=" << detector.overlap_factor << "\nindex.coarse_k=" << index.coarse_k
          << "\nindex.subq_m=" << index.subq_m << "\nindex.subq_k=" << index.subq_k << "\nindex.nprobe=" << index.nprobe
          << "\nindex.knn_K=" << index.knn_K << "\nindex.batch_B=" << index.batch_B << "\nindex.opq_iters=" << index.opq_iters
          << "\nindex.kmeans_iters=" << index.kmeans_iters << "\nindex.seed=" << index.seed << "\nmatch.nndr_t=" << match.nndr_t
          << "\nmatch.gc_epsilon=" << match.gc_epsilon << "\nmatch.gc_trials=" << match.gc_trials
          << "\nmatch.min_matches_for_homography=" << match.min_matches_for_homography
          << "\nmatch.connect_threshold=" << match.connect_threshold << "\nmatch.ransac_trials=" << match.ransac_trials
          << "\nmatch.seed=" << match.seed << "\nmatch.mi_score=" << to_string(match.mi_score) << "\nfilter.rank_k=" << filter.rank_k << "\nfilter.if_iterations=" << filter.if_iterations
          << "\nfilter.rcmm_nd_threshold=" << filter.rcmm_nd_threshold << "\nfilter.max_seeds_per_iter=" << filter.max_seeds_per_iter
          << "\nfilter.rcmm_nndr=" << filter.rcmm_nndr << "\nfilter.iterative=" << iterative
          << "\ngraph.sigma_floor=" << expansion.sigma_floor << '\n';
        return s.str();
    }
};

/// 64-bit FNV-1a, printed as 16 hex digits.
inline std::string fingerprint(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

/// Named variants: surf2k, surf5k, dsurf and dsurf-if (dsurf with iterative filtering).
inline PipelineConfig preset_config(const std::string& name) {
    PipelineConfig c;
    c.preset = name;
    if (name == "surf2k") c.detector = DetectorConfig::surf2k();
    else if (name == "surf5k") c.detector = DetectorConfig::surf5k();
    else if (name == "dsurf") c.detector = DetectorConfig::dsurf();
    else if (name == "dsurf-if") {
        c.detector = DetectorConfig::dsurf();
        c.iterative = true;
    } else {
        throw ConfigError("unknown preset: " + name);
    }
    return c;
}

namespace detail {

template <typename T>
void read_key(const boost::property_tree::ptree& pt, const std::string& key, T& out) {
    if (auto v = pt.get_optional<std::string>(key)) {
        std::istringstream s(*v);
        T parsed{};
        if constexpr (std::is_same_v<T, bool>) {
            std::string b;
            s >> b;
            if (b == "true" || b == "1" || b == "yes" || b == "on") parsed = true;
            else if (b == "false" || b == "0" || b == "no" || b == "off") parsed = false;
            else throw ConfigError("config: bad boolean for " + key + ": " + *v);
        } else {
            if (!(s >> parsed) || !(s >> std::ws).eof()) throw ConfigError("config: bad value for " + key + ": " + *v);
        }
        out = parsed;
    }
}

inline void read_path(const boost::property_tree::ptree& pt, const std::string& key, std::filesystem::path& out) {
    if (auto v = pt.get_optional<std::string>(key)) out = *v;
}

inline boost::property_tree::ptree parse_ini(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw ConfigError("config file not found: " + path.string());
    boost::property_tree::ptree pt;
    try {
        boost::property_tree::read_ini(path.string(), pt);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw ConfigError(std::string("malformed config: ") + e.what());
    }
    return pt;
}

}  // namespace detail

/// Applies `[section] key = value` overrides on top of `base`. A
/// `[run] preset` key swaps the base preset before other keys apply.
inline PipelineConfig apply_ini(const boost::property_tree::ptree& pt, PipelineConfig c) {
    using detail::read_key;
    if (auto p = pt.get_optional<std::string>("run.preset")) {
        const auto keep = c;
        c = preset_config(*p);
        c.corpus_dir = keep.corpus_dir;
        c.feature_dir = keep.feature_dir;
        c.index_file = keep.index_file;
        c.output_dir = keep.output_dir;
        c.workers = keep.workers;
    }
    read_key(pt, "detector.p", c.detector.p);
    read_key(pt, "detector.m", c.detector.m);
    read_key(pt, "detector.octaves", c.detector.octaves);
    read_key(pt, "detector.layers", c.detector.layers);
    read_key(pt, "detector.init_step", c.detector.init_step);
    read_key(pt, "detector.hessian_threshold", c.detector.hessian_threshold);
    read_key(pt, "detector.overlap_factor", c.detector.overlap_factor);
    read_key(pt, "index.coarse_k", c.index.coarse_k);
    read_key(pt, "index.subq_m", c.index.subq_m);
    read_key(pt, "index.subq_k", c.index.subq_k);
    read_key(pt, "index.nprobe", c.index.nprobe);
    read_key(pt, "index.knn_K", c.index.knn_K);
    read_key(pt, "index.batch_B", c.index.batch_B);
    read_key(pt, "index.opq_iters", c.index.opq_iters);
    read_key(pt, "index.kmeans_iters", c.index.kmeans_iters);
    read_key(pt, "index.seed", c.index.seed);
    read_key(pt, "match.nndr_t", c.match.nndr_t);
    read_key(pt, "match.gc_epsilon", c.match.gc_epsilon);
    read_key(pt, "match.gc_trials", c.match.gc_trials);
    read_key(pt, "match.min_matches_for_homography", c.match.min_matches_for_homography);
    read_key(pt, "match.connect_threshold", c.match.connect_threshold);
    read_key(pt, "match.ransac_trials", c.match.ransac_trials);
    read_key(pt, "match.seed", c.match.seed);
    if (auto v = pt.get_optional<std::string>("match.mi_score")) {
        try {
            c.match.mi_score = parse_mi_score(*v);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
    }
    read_key(pt, "filter.rank_k", c.filter.rank_k);
    read_key(pt, "filter.if_iterations", c.filter.if_iterations);
    read_key(pt, "filter.rcmm_nd_threshold", c.filter.rcmm_nd_threshold);
    read_key(pt, "filter.max_seeds_per_iter", c.filter.max_seeds_per_iter);
    read_key(pt, "filter.rcmm_nndr", c.filter.rcmm_nndr);
    read_key(pt, "filter.iterative", c.iterative);
    read_key(pt, "graph.sigma_floor", c.expansion.sigma_floor);
    detail::read_path(pt, "paths.corpus_dir", c.corpus_dir);
    detail::read_path(pt, "paths.feature_dir", c.feature_dir);
    detail::read_path(pt, "paths.index_file", c.index_file);
    detail::read_path(pt, "paths.output_dir", c.output_dir);
    read_key(pt, "run.workers", c.workers);
    return c;
}

inline PipelineConfig load_config(const std::filesystem::path& path, PipelineConfig base = {}) {
    PipelineConfig c = apply_ini(detail::parse_ini(path), std::move(base));
    try {
        c.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    return c;
}

/// Synth spec file: plain key = value lines (an optional [synth] section is accepted).
inline SynthSpec load_synth_spec(const std::filesystem::path& path, SynthSpec s = {}) {
    const auto root = detail::parse_ini(path);
    const auto& pt = root.get_child_optional("synth") ? root.get_child("synth") : root;
    using detail::read_key;
    detail::read_path(pt, "seed_dir", s.seed_dir);
    read_key(pt, "graphs", s.graphs);
    read_key(pt, "min_nodes", s.min_nodes);
    read_key(pt, "max_nodes", s.max_nodes);
    read_key(pt, "min_depth", s.min_depth);
    read_key(pt, "max_depth", s.max_depth);
    read_key(pt, "max_branching", s.max_branching);
    read_key(pt, "splice_probability", s.splice_probability);
    read_key(pt, "distractors", s.distractors);
    read_key(pt, "image_size", s.image_size);
    read_key(pt, "seed", s.seed);
    if (!s.seed_dir.empty() && s.seed_dir.is_relative()) s.seed_dir = path.parent_path() / s.seed_dir;
    try {
        s.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    return s;
}

}  // namespace provenance
