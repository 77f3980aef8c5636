#pragma once

#include <algorithm>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "provenance/detector.hpp"
#include "provenance/index.hpp"
#include "provenance/matching.hpp"

namespace provenance {

struct RankedEntry {
    ImageId image_id = 0;
    std::uint64_t votes = 0;
    double score = 0.0;  // best RCMM after iterative re-ranking, 0 otherwise

    bool operator==(const RankedEntry&) const = default;
};

using RankedList = std::vector<RankedEntry>;

struct FilterConfig {
    std::size_t rank_k = 100;
    std::size_t if_iterations = 2;
    double rcmm_nd_threshold = 0.3;
    std::size_t max_seeds_per_iter = 5;
    double rcmm_nndr = 0.8;

    void validate() const {
        if (rank_k < 1) throw std::invalid_argument("FilterConfig: rank_k must be >= 1");
        if (max_seeds_per_iter < 1) throw std::invalid_argument("FilterConfig: max_seeds_per_iter must be >= 1");
        if (!(rcmm_nndr > 0.0 && rcmm_nndr < 1.0)) throw std::invalid_argument("FilterConfig: rcmm_nndr must be in (0,1)");
    }
};

/// Tallies one vote per non-sentinel cell for the cell's image, then sorts by
/// votes descending with ascending image id on ties.
inline RankedList aggregate_votes(const SearchResult& r) {
    std::unordered_map<ImageId, std::uint64_t> votes;
    for (const auto& cell : r.cells) {
        if (!cell.is_sentinel()) ++votes[cell.image_id];
    }
    RankedList out;
    out.reserve(votes.size());
    for (const auto& [id, v] : votes) out.push_back({id, v, 0.0});
    std::sort(out.begin(), out.end(), [](const RankedEntry& a, const RankedEntry& b) {
        return a.votes != b.votes ? a.votes > b.votes : a.image_id < b.image_id;
    });
    return out;
}

/// Fraction of reciprocal NNDR matches, normalised by the smaller set.
inline double rcmm(const FeatureSet& a, const FeatureSet& b, double t = 0.8) {
    if (a.descriptors.empty() || b.descriptors.empty()) throw std::invalid_argument("rcmm: empty feature set");
    const auto nn = two_nearest_both(a.descriptors, b.descriptors);
    std::size_t reciprocal = 0;
    for (std::size_t i = 0; i < nn.a_to_b.size(); ++i) {
        const auto& f = nn.a_to_b[i];
        if (!passes_ratio(f, t)) continue;
        const auto& g = nn.b_to_a[f.best];
        if (g.best == i && passes_ratio(g, t)) ++reciprocal;
    }
    return static_cast<double>(reciprocal) / static_cast<double>(std::min(a.size(), b.size()));
}

/// Searches the index with precomputed query features and ranks images by votes.
/// `self`, when given, is removed before truncation.
inline RankedList filter_features(const FeatureSet& query, const IvfadcIndex& index, const FilterConfig& cfg,
                                  std::optional<ImageId> self = std::nullopt) {
    RankedList list = aggregate_votes(index.search_knn(query.descriptors));
    if (self) std::erase_if(list, [&](const RankedEntry& e) { return e.image_id == *self; });
    if (list.size() > cfg.rank_k) list.resize(cfg.rank_k);
    return list;
}

inline RankedList filter_query(const GrayImage& query, const IvfadcIndex& index, const DetectorConfig& det,
                               const FilterConfig& cfg, std::optional<ImageId> self = std::nullopt) {
    return filter_features(extract_features(query, det), index, cfg, self);
}

/// Re-queries the index with non-near-duplicate results and re-ranks the
/// union by RCMM against everything used as a query so far.
/// `features(id)` must return the stored FeatureSet of an indexed image.
template <typename FeatureSource>
RankedList iterative_filter(const FeatureSet& query, const IvfadcIndex& index, FeatureSource&& features,
                            const FilterConfig& cfg, std::optional<ImageId> self = std::nullopt) {
    cfg.validate();
    const RankedList round0 = filter_features(query, index, cfg, self);
    if (cfg.if_iterations == 0) return round0;

    // Query-set members: index 0 is the query itself, then seed image ids.
    std::vector<const FeatureSet*> members{&query};
    std::vector<std::optional<ImageId>> member_ids{self};
    std::map<std::pair<std::size_t, ImageId>, double> cache;
    auto score_vs = [&](std::size_t member, ImageId id) {
        auto key = std::make_pair(member, id);
        if (auto it = cache.find(key); it != cache.end()) return it->second;
        const FeatureSet& other = features(id);
        double s = (members[member]->empty() || other.empty()) ? 0.0 : rcmm(*members[member], other, cfg.rcmm_nndr);
        cache.emplace(key, s);
        return s;
    };
    auto best_score = [&](ImageId id) {
        double best = 0.0;
        for (std::size_t m = 0; m < members.size(); ++m) {
            if (member_ids[m] == id) continue;
            best = std::max(best, score_vs(m, id));
        }
        return best;
    };

    std::map<ImageId, std::uint64_t> votes;
    // Candidates in discovery order: the query's list, then each seed's list.
    std::vector<ImageId> queue;
    std::set<ImageId> queued;
    auto absorb = [&](const RankedList& list, std::optional<ImageId> skip) {
        for (const auto& e : list) {
            if (e.image_id == skip) continue;
            votes[e.image_id] += e.votes;
            if (queued.insert(e.image_id).second) queue.push_back(e.image_id);
        }
    };
    absorb(round0, std::nullopt);
    std::size_t cursor = 0;
    bool any_seed = false;

    for (std::size_t it = 0; it < cfg.if_iterations; ++it) {
        std::vector<ImageId> seeds;
        while (cursor < queue.size() && seeds.size() < cfg.max_seeds_per_iter) {
            const ImageId id = queue[cursor++];
            if (best_score(id) < cfg.rcmm_nd_threshold) seeds.push_back(id);
        }
        if (seeds.empty()) break;
        any_seed = true;
        for (ImageId s : seeds) absorb(filter_features(features(s), index, cfg, self), s);
        for (ImageId s : seeds) {
            members.push_back(&features(s));
            member_ids.emplace_back(s);
        }
    }
    if (!any_seed) return round0;

    RankedList out;
    out.reserve(votes.size());
    for (const auto& [id, v] : votes) out.push_back({id, v, best_score(id)});
    std::sort(out.begin(), out.end(), [](const RankedEntry& a, const RankedEntry& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.votes != b.votes) return a.votes > b.votes;
        return a.image_id < b.image_id;
    });
    if (out.size() > cfg.rank_k) out.resize(cfg.rank_k);
    return out;
}

/// CSV with header `rank,image_id,votes,rcmm_score`; ranks start at 1.
inline void write_rank_csv(std::ostream& out, const RankedList& list) {
    out << "rank,image_id,votes,rcmm_score\n";
    std::size_t rank = 1;
    for (const auto& e : list) {
        out << rank++ << ',' << e.image_id << ',' << e.votes << ',' << std::fixed << std::setprecision(6) << e.score
            << '\n';
    }
}

inline RankedList read_rank_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != "rank,image_id,votes,rcmm_score") {
        throw FormatError("rank csv: missing header");
    }
    RankedList out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string f;
        std::vector<std::string> cols;
        while (std::getline(ss, f, ',')) cols.push_back(f);
        if (cols.size() != 4) throw FormatError("rank csv: expected 4 columns");
        out.push_back({std::stoull(cols[1]), std::stoull(cols[2]), std::stod(cols[3])});
    }
    return out;
}

}  // namespace provenance
