#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <ostream>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "provenance/pairwise.hpp"

namespace provenance {

struct GraphNode {
    ImageId id = 0;
    std::string file;

    bool operator==(const GraphNode&) const = default;
};

struct GraphEdge {
    ImageId from = 0;
    ImageId to = 0;
    bool directed = true;
    double weight = 0.0;

    bool operator==(const GraphEdge&) const = default;
};

struct ProvenanceGraph {
    ImageId query = 0;
    std::vector<GraphNode> nodes;
    std::vector<GraphEdge> edges;

    bool has_node(ImageId id) const {
        return std::any_of(nodes.begin(), nodes.end(), [&](const GraphNode& n) { return n.id == id; });
    }

    /// Sorts nodes by id and edges by endpoints so output is canonical.
    void canonicalize() {
        std::sort(nodes.begin(), nodes.end(), [](const GraphNode& a, const GraphNode& b) { return a.id < b.id; });
        std::sort(edges.begin(), edges.end(), [](const GraphEdge& a, const GraphEdge& b) {
            return std::tie(a.from, a.to) < std::tie(b.from, b.to);
        });
    }

    bool operator==(const ProvenanceGraph&) const = default;
};

// ---------------------------------------------------------------------------
// JSON and DOT
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json to_json(const ProvenanceGraph& g) {
    nlohmann::ordered_json j;
    j["query"] = g.query;
    j["nodes"] = nlohmann::ordered_json::array();
    for (const auto& n : g.nodes) j["nodes"].push_back({{"id", n.id}, {"file", n.file}});
    j["edges"] = nlohmann::ordered_json::array();
    for (const auto& e : g.edges) {
        j["edges"].push_back({{"from", e.from}, {"to", e.to}, {"directed", e.directed}, {"weight", e.weight}});
    }
    return j;
}

inline ProvenanceGraph graph_from_json(const nlohmann::json& j) {
    ProvenanceGraph g;
    try {
        g.query = j.at("query").get<ImageId>();
        for (const auto& n : j.at("nodes")) g.nodes.push_back({n.at("id").get<ImageId>(), n.value("file", std::string{})});
        for (const auto& e : j.at("edges")) {
            g.edges.push_back({e.at("from").get<ImageId>(), e.at("to").get<ImageId>(), e.value("directed", true),
                               e.value("weight", 0.0)});
        }
    } catch (const nlohmann::json::exception& ex) {
        throw FormatError(std::string("graph json: ") + ex.what());
    }
    return g;
}

inline void save_graph(const std::filesystem::path& path, const ProvenanceGraph& g) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << to_json(g).dump(2) << '\n';
}

inline ProvenanceGraph load_graph(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    try {
        return graph_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& ex) {
        throw FormatError(std::string("graph json: ") + ex.what());
    }
}

inline void write_dot(std::ostream& out, const ProvenanceGraph& g) {
    const bool any_directed = std::any_of(g.edges.begin(), g.edges.end(), [](const GraphEdge& e) { return e.directed; });
    out << (any_directed ? "digraph" : "graph") << " provenance {\n";
    for (const auto& n : g.nodes) {
        out << "  n" << n.id << " [label=\"" << (n.file.empty() ? std::to_string(n.id) : n.file) << '"';
        if (n.id == g.query) out << ", shape=doublecircle";
        out << "];\n";
    }
    for (const auto& e : g.edges) {
        out << "  n" << e.from << (any_directed ? " -> " : " -- ") << 'n' << e.to;
        if (any_directed && !e.directed) out << " [dir=none]";
        out << ";\n";
    }
    out << "}\n";
}

// ---------------------------------------------------------------------------
// Undirected construction
// ---------------------------------------------------------------------------

class UnionFind {
public:
    explicit UnionFind(std::size_t n) : parent_(n), rank_(n, 0) { std::iota(parent_.begin(), parent_.end(), 0); }
    std::size_t find(std::size_t x) {
        while (parent_[x] != x) x = parent_[x] = parent_[parent_[x]];
        return x;
    }
    bool unite(std::size_t a, std::size_t b) {
        a = find(a);
        b = find(b);
        if (a == b) return false;
        if (rank_[a] < rank_[b]) std::swap(a, b);
        parent_[b] = a;
        if (rank_[a] == rank_[b]) ++rank_[a];
        return true;
    }

private:
    std::vector<std::size_t> parent_;
    std::vector<std::size_t> rank_;
};

struct IndexEdge {
    std::size_t i = 0, j = 0;
    double weight = 0.0;
};

/// Minimum spanning forest over finite weights w(i, j), i < j, among `nodes`.
/// Ties go to the lexicographically smaller (i, j).
template <typename WeightFn>
std::vector<IndexEdge> minimum_spanning_forest(const std::vector<std::size_t>& nodes, std::size_t n, WeightFn&& w) {
    std::vector<IndexEdge> cand;
    for (std::size_t a = 0; a < nodes.size(); ++a)
        for (std::size_t b = a + 1; b < nodes.size(); ++b) {
            const std::size_t i = std::min(nodes[a], nodes[b]), j = std::max(nodes[a], nodes[b]);
            const double d = w(i, j);
            if (std::isfinite(d)) cand.push_back({i, j, d});
        }
    std::sort(cand.begin(), cand.end(), [](const IndexEdge& a, const IndexEdge& b) {
        return std::tie(a.weight, a.i, a.j) < std::tie(b.weight, b.i, b.j);
    });
    UnionFind uf(n);
    std::vector<IndexEdge> out;
    for (const auto& e : cand)
        if (uf.unite(e.i, e.j)) out.push_back(e);
    return out;
}

inline std::vector<std::size_t> active_nodes(const PairwiseAnalysis& a) {
    std::vector<std::size_t> v;
    for (std::size_t i = 0; i < a.n; ++i)
        if (a.is_active(i)) v.push_back(i);
    return v;
}

/// Undirected graph: Kruskal over D_gcm. Nodes without any finite edge are
/// dropped, except the query.
inline ProvenanceGraph kruskal_build(const PairwiseAnalysis& a) {
    ProvenanceGraph g;
    g.query = a.ids.at(a.query);
    const auto edges = minimum_spanning_forest(active_nodes(a), a.n, [&](std::size_t i, std::size_t j) { return a.gcm(i, j); });
    std::set<std::size_t> used{a.query};
    for (const auto& e : edges) {
        g.edges.push_back({a.ids[e.i], a.ids[e.j], false, e.weight});
        used.insert(e.i);
        used.insert(e.j);
    }
    for (auto i : used) g.nodes.push_back({a.ids[i], {}});
    g.canonicalize();
    return g;
}

// ---------------------------------------------------------------------------
// Directed construction
// ---------------------------------------------------------------------------

enum class Direction { Forward, Backward, Tie };

/// Forward (i -> j) when i registered onto j carries more MI than the
/// reverse. Values within a relative 1e-9 are a tie; callers resolve ties.
inline Direction edge_direction(double mi_ij, double mi_ji) {
    const double tol = 1e-9 * std::max({1.0, std::abs(mi_ij), std::abs(mi_ji)});
    if (mi_ij > mi_ji + tol) return Direction::Forward;
    if (mi_ji > mi_ij + tol) return Direction::Backward;
    return Direction::Tie;
}

/// Running cluster statistics recomputed from the stored match counts.
struct ClusterState {
    std::vector<std::size_t> members;
    std::vector<double> counts;

    double mean() const { return std::accumulate(counts.begin(), counts.end(), 0.0) / static_cast<double>(counts.size()); }
    double stddev() const {
        const double mu = mean();
        double s = 0.0;
        for (double c : counts) s += (c - mu) * (c - mu);
        return std::sqrt(s / static_cast<double>(counts.size()));
    }
    /// Acceptance band half-width with a floor of alpha * mean.
    bool accepts(double m, double alpha) const {
        const double mu = mean();
        return std::abs(m - mu) <= std::max(stddev(), alpha * mu);
    }
};

struct ExpansionConfig {
    double sigma_floor = 0.5;
};

/// Directed graph by clustered expansion: grows single paths from a seed
/// while each new link's match count stays within the cluster's band,
/// orients each path by its dominant MI direction, then re-seeds at the
/// connected node with the strongest link to what is left.
inline ProvenanceGraph clustered_expansion(const PairwiseAnalysis& a, const ExpansionConfig& cfg = {}) {
    if (!a.is_active(a.query)) throw std::invalid_argument("clustered_expansion: query is not active");
    const std::size_t n = a.n;
    std::vector<std::uint8_t> connected(n, 0), pending(n, 0);
    std::vector<std::size_t> hops(n, 0);
    for (std::size_t i = 0; i < n; ++i) pending[i] = a.is_active(i) && i != a.query;
    connected[a.query] = 1;

    ProvenanceGraph g;
    g.query = a.ids[a.query];
    std::vector<std::size_t> kept{a.query};
    std::size_t seed = a.query;

    auto remaining = [&] { return std::any_of(pending.begin(), pending.end(), [](std::uint8_t p) { return p != 0; }); };
    while (remaining()) {
        std::vector<std::size_t> order;
        for (std::size_t u = 0; u < n; ++u)
            if (pending[u]) order.push_back(u);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
            if (a.m(seed, x) != a.m(seed, y)) return a.m(seed, x) > a.m(seed, y);
            return a.ids[x] < a.ids[y];
        });
        if (a.m(seed, order.front()) == 0) break;

        ClusterState cluster;
        cluster.members = {seed, order.front()};
        cluster.counts = {static_cast<double>(a.m(seed, order.front()))};
        for (std::size_t k = 1; k < order.size(); ++k) {
            const double m = a.m(cluster.members.back(), order[k]);
            if (!cluster.accepts(m, cfg.sigma_floor)) break;
            cluster.members.push_back(order[k]);
            cluster.counts.push_back(m);
        }

        // Orient the path: ties point away from the seed, then the majority wins.
        const auto& path = cluster.members;
        std::vector<bool> forward(path.size() - 1);
        std::size_t fwd = 0;
        for (std::size_t k = 0; k + 1 < path.size(); ++k) {
            const Direction d = edge_direction(a.mi(path[k], path[k + 1]), a.mi(path[k + 1], path[k]));
            forward[k] = d != Direction::Backward;
            fwd += forward[k] ? 1 : 0;
        }
        const std::size_t bwd = forward.size() - fwd;
        if (fwd != bwd) std::fill(forward.begin(), forward.end(), fwd > bwd);
        for (std::size_t k = 0; k + 1 < path.size(); ++k) {
            std::size_t from = path[k], to = path[k + 1];
            if (!forward[k]) std::swap(from, to);
            g.edges.push_back({a.ids[from], a.ids[to], true, a.gcm(from, to)});
        }
        for (std::size_t k = 1; k < path.size(); ++k) {
            connected[path[k]] = 1;
            pending[path[k]] = 0;
            hops[path[k]] = hops[seed] + k;
            kept.push_back(path[k]);
        }

        // Next seed: strongest single link to the pending set, then total, then id.
        std::size_t best = n;
        std::uint32_t best_max = 0;
        std::uint64_t best_sum = 0;
        for (std::size_t c = 0; c < n; ++c) {
            if (!connected[c]) continue;
            std::uint32_t mx = 0;
            std::uint64_t sum = 0;
            for (std::size_t u = 0; u < n; ++u) {
                if (!pending[u]) continue;
                mx = std::max(mx, a.m(c, u));
                sum += a.m(c, u);
            }
            const bool better = best == n || mx > best_max || (mx == best_max && sum > best_sum) ||
                                (mx == best_max && sum == best_sum && a.ids[c] < a.ids[best]);
            if (better) {
                best = c;
                best_max = mx;
                best_sum = sum;
            }
        }
        if (best == n || best_max == 0) break;
        seed = best;
    }

    for (auto i : kept) g.nodes.push_back({a.ids[i], {}});
    g.canonicalize();
    return g;
}

}  // namespace provenance
