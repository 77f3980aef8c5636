#pragma once

#include <algorithm>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "provenance/config.hpp"
#include "provenance/detector.hpp"
#include "provenance/eval.hpp"
#include "provenance/filtering.hpp"
#include "provenance/graphs.hpp"
#include "provenance/index.hpp"
#include "provenance/pairwise.hpp"

namespace provenance {

/// Feature extraction over a list of images, one task per image.
inline std::vector<FeatureSet> extract_all(std::span<const GrayImage> images, std::span<const ImageId> ids,
                                           const DetectorConfig& det, std::size_t workers = 1) {
    std::vector<FeatureSet> out(images.size());
    parallel_for(images.size(), workers, [&](std::size_t i) { out[i] = extract_features(images[i], det, ids[i]); });
    return out;
}

/// Deterministic uniform sample of at most `limit` descriptors (without
/// replacement), taken in corpus order.
inline std::vector<Descriptor64> sample_descriptors(std::span<const FeatureSet> sets, std::size_t limit, std::uint64_t seed) {
    std::size_t total = 0;
    for (const auto& s : sets) total += s.size();
    std::vector<std::size_t> picks(total);
    std::iota(picks.begin(), picks.end(), std::size_t{0});
    if (total > limit) {
        std::mt19937_64 rng(seed);
        for (std::size_t i = 0; i < limit; ++i) {
            std::uniform_int_distribution<std::size_t> d(i, total - 1);
            std::swap(picks[i], picks[d(rng)]);
        }
        picks.resize(limit);
        std::sort(picks.begin(), picks.end());
    }
    std::vector<Descriptor64> out;
    out.reserve(picks.size());
    std::size_t base = 0, k = 0;
    for (const auto& s : sets) {
        while (k < picks.size() && picks[k] < base + s.size()) out.push_back(s.descriptors[picks[k++] - base]);
        base += s.size();
    }
    return out;
}

/// Trains on a descriptor sample and adds every feature set in order.
inline IvfadcIndex build_index(std::span<const FeatureSet> sets, const IndexConfig& cfg, std::size_t train_limit = 200000) {
    IvfadcIndex index = IvfadcIndex::train(sample_descriptors(sets, train_limit, cfg.seed), cfg);
    std::vector<LabeledFeature> batch;
    batch.reserve(cfg.batch_B);
    for (const auto& s : sets) {
        for (const auto& d : s.descriptors) {
            batch.push_back({s.image_id, d});
            if (batch.size() == cfg.batch_B) {
                index.add_batch(batch);
                batch.clear();
            }
        }
    }
    if (!batch.empty()) index.add_batch(batch);
    return index;
}

/// Plain or iterative filtering depending on `iterative`.
template <typename FeatureSource>
RankedList retrieve(const FeatureSet& query, const IvfadcIndex& index, FeatureSource&& features, const FilterConfig& cfg,
                    bool iterative, std::optional<ImageId> self) {
    if (!iterative) return filter_features(query, index, cfg, self);
    return iterative_filter(query, index, features, cfg, self);
}

enum class Builder { Kruskal, Clustered };

inline Builder parse_builder(const std::string& s) {
    if (s == "kruskal") return Builder::Kruskal;
    if (s == "clustered") return Builder::Clustered;
    throw ConfigError("unknown builder: " + s + " (expected kruskal or clustered)");
}

inline ProvenanceGraph build_graph(const PairwiseAnalysis& a, Builder builder, const ExpansionConfig& exp) {
    return builder == Builder::Kruskal ? kruskal_build(a) : clustered_expansion(a, exp);
}

/// Candidate list for graph construction: the query first, then `others`
/// in the given order (duplicates and the query itself skipped).
/// `image(id)` and `features(id)` must return stable references.
template <typename ImageSource, typename FeatureSource>
std::vector<Candidate> make_candidates(ImageId query, const std::vector<ImageId>& others, ImageSource&& image,
                                       FeatureSource&& features) {
    std::vector<Candidate> c{{query, &image(query), &features(query)}};
    std::set<ImageId> seen{query};
    for (auto id : others)
        if (seen.insert(id).second) c.push_back({id, &image(id), &features(id)});
    return c;
}

}  // namespace provenance
