#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "provenance/filtering.hpp"
#include "provenance/graphs.hpp"

namespace provenance {

/// |top-k of rank intersected with relevant| / |relevant|.
inline double recall_at_k(const RankedList& rank, const std::set<ImageId>& relevant, std::size_t k) {
    if (k < 1) throw std::invalid_argument("recall_at_k: k must be >= 1");
    if (relevant.empty()) throw std::invalid_argument("recall_at_k: empty relevant set");
    std::size_t hit = 0;
    for (std::size_t i = 0; i < std::min(k, rank.size()); ++i) hit += relevant.contains(rank[i].image_id) ? 1 : 0;
    return static_cast<double>(hit) / static_cast<double>(relevant.size());
}

struct Overlap {
    double vo = 0.0;
    double eo = 0.0;
    double veo = 0.0;
};

namespace detail {

// Comparable edge keys plus the number of edges that can never match
// (undirected edges carry no orientation in directed mode).
struct EdgeKeys {
    std::set<std::pair<ImageId, ImageId>> keys;
    std::size_t unmatched = 0;
    std::size_t size() const { return keys.size() + unmatched; }
};

inline EdgeKeys edge_keys(const ProvenanceGraph& g, bool directed) {
    EdgeKeys k;
    for (const auto& e : g.edges) {
        if (!directed) k.keys.emplace(std::min(e.from, e.to), std::max(e.from, e.to));
        else if (e.directed) k.keys.emplace(e.from, e.to);
        else ++k.unmatched;
    }
    return k;
}

}  // namespace detail

/// F1-style vertex, edge and combined overlap. Two empty edge sets agree (EO = 1).
inline Overlap graph_overlap(const ProvenanceGraph& g, const ProvenanceGraph& truth, bool directed) {
    std::set<ImageId> v1, v2;
    for (const auto& n : g.nodes) v1.insert(n.id);
    for (const auto& n : truth.nodes) v2.insert(n.id);
    const auto e1 = detail::edge_keys(g, directed);
    const auto e2 = detail::edge_keys(truth, directed);
    std::size_t vi = 0, ei = 0;
    for (auto v : v1) vi += v2.contains(v) ? 1 : 0;
    for (const auto& e : e1.keys) ei += e2.keys.contains(e) ? 1 : 0;
    Overlap o;
    const double vs = static_cast<double>(v1.size() + v2.size());
    const double es = static_cast<double>(e1.size() + e2.size());
    o.vo = vs > 0 ? 2.0 * static_cast<double>(vi) / vs : 1.0;
    o.eo = es > 0 ? 2.0 * static_cast<double>(ei) / es : 1.0;
    o.veo = (vs + es) > 0 ? 2.0 * static_cast<double>(vi + ei) / (vs + es) : 1.0;
    return o;
}

struct GroundTruthCase {
    std::string name;
    ImageId query = 0;
    std::set<ImageId> relevant;
    ProvenanceGraph graph;
};

inline nlohmann::ordered_json to_json(const GroundTruthCase& c) {
    nlohmann::ordered_json j;
    j["query"] = c.query;
    j["relevant"] = std::vector<ImageId>(c.relevant.begin(), c.relevant.end());
    j["graph"] = to_json(c.graph);
    return j;
}

inline GroundTruthCase case_from_json(const nlohmann::json& j, std::string name = {}) {
    GroundTruthCase c;
    c.name = std::move(name);
    try {
        c.query = j.at("query").get<ImageId>();
        for (const auto& id : j.at("relevant")) c.relevant.insert(id.get<ImageId>());
        c.graph = graph_from_json(j.at("graph"));
    } catch (const nlohmann::json::exception& ex) {
        throw FormatError(std::string("ground truth json: ") + ex.what());
    }
    return c;
}

inline GroundTruthCase load_case(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    try {
        return case_from_json(nlohmann::json::parse(in), path.stem().string());
    } catch (const nlohmann::json::parse_error& ex) {
        throw FormatError(std::string("ground truth json: ") + ex.what());
    }
}

inline void save_case(const std::filesystem::path& path, const GroundTruthCase& c) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << to_json(c).dump(2) << '\n';
}

struct CaseResult {
    std::optional<RankedList> rank;
    std::optional<ProvenanceGraph> graph;
};

struct CaseMetrics {
    std::string name;
    bool missing = false;
    double vo = 0, eo_directed = 0, eo_undirected = 0, veo_directed = 0, veo_undirected = 0;
    double r50 = 0, r100 = 0, r200 = 0;
};

struct SuiteReport {
    std::vector<CaseMetrics> cases;
    CaseMetrics mean;
};

/// Per-case metrics and unweighted means. Recall is measured against the
/// relevant set minus the query, since the query never appears in its own
/// rank. Missing results score zero and are flagged.
inline SuiteReport evaluate_suite(const std::vector<GroundTruthCase>& cases, const std::vector<CaseResult>& results) {
    if (results.size() != cases.size()) throw std::invalid_argument("evaluate_suite: one result per case required");
    SuiteReport rep;
    rep.mean.name = "mean";
    for (std::size_t i = 0; i < cases.size(); ++i) {
        const auto& c = cases[i];
        const auto& r = results[i];
        CaseMetrics m;
        m.name = c.name.empty() ? std::to_string(i) : c.name;
        m.missing = !r.rank && !r.graph;
        if (r.graph) {
            const Overlap d = graph_overlap(*r.graph, c.graph, true);
            const Overlap u = graph_overlap(*r.graph, c.graph, false);
            m.vo = d.vo;
            m.eo_directed = d.eo;
            m.eo_undirected = u.eo;
            m.veo_directed = d.veo;
            m.veo_undirected = u.veo;
        }
        if (r.rank) {
            std::set<ImageId> rel = c.relevant;
            rel.erase(c.query);
            if (!rel.empty()) {
                m.r50 = recall_at_k(*r.rank, rel, 50);
                m.r100 = recall_at_k(*r.rank, rel, 100);
                m.r200 = recall_at_k(*r.rank, rel, 200);
            }
        }
        rep.cases.push_back(m);
    }
    if (!rep.cases.empty()) {
        const double n = static_cast<double>(rep.cases.size());
        for (const auto& m : rep.cases) {
            rep.mean.vo += m.vo / n;
            rep.mean.eo_directed += m.eo_directed / n;
            rep.mean.eo_undirected += m.eo_undirected / n;
            rep.mean.veo_directed += m.veo_directed / n;
            rep.mean.veo_undirected += m.veo_undirected / n;
            rep.mean.r50 += m.r50 / n;
            rep.mean.r100 += m.r100 / n;
            rep.mean.r200 += m.r200 / n;
            rep.mean.missing = rep.mean.missing || m.missing;
        }
    }
    return rep;
}

inline void write_report_csv(std::ostream& out, const SuiteReport& rep) {
    out << "case,VO,EO_directed,EO_undirected,VEO_directed,VEO_undirected,R@50,R@100,R@200\n";
    out << std::fixed << std::setprecision(6);
    auto row = [&](const CaseMetrics& m) {
        out << m.name << ',' << m.vo << ',' << m.eo_directed << ',' << m.eo_undirected << ',' << m.veo_directed << ','
            << m.veo_undirected << ',' << m.r50 << ',' << m.r100 << ',' << m.r200 << '\n';
    };
    for (const auto& m : rep.cases) row(m);
    row(rep.mean);
}

inline nlohmann::ordered_json to_json(const SuiteReport& rep) {
    auto one = [](const CaseMetrics& m) {
        return nlohmann::ordered_json{{"case", m.name},           {"missing", m.missing},
                                      {"VO", m.vo},               {"EO_directed", m.eo_directed},
                                      {"EO_undirected", m.eo_undirected}, {"VEO_directed", m.veo_directed},
                                      {"VEO_undirected", m.veo_undirected}, {"R@50", m.r50},
                                      {"R@100", m.r100},          {"R@200", m.r200}};
    };
    nlohmann::ordered_json j;
    j["cases"] = nlohmann::ordered_json::array();
    for (const auto& m : rep.cases) j["cases"].push_back(one(m));
    j["mean"] = one(rep.mean);
    return j;
}

}  // namespace provenance
