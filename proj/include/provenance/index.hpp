#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <queue>
#include <random>
#include <span>
#include <stdexcept>
#include <tuple>
#include <unordered_set>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SVD>

#include "provenance/common.hpp"
#include "provenance/features.hpp"
#include "provenance/kmeans.hpp"

namespace provenance {

struct IndexConfig {
    std::uint32_t coarse_k = 32;
    std::uint32_t subq_m = 8;
    std::uint32_t subq_k = 96;
    std::uint32_t nprobe = 4;
    std::uint32_t knn_K = 20;
    std::uint64_t batch_B = 65536;
    std::uint32_t opq_iters = 10;
    std::uint32_t kmeans_iters = 15;
    std::uint64_t seed = 1234;

    std::uint32_t sub_dim() const { return static_cast<std::uint32_t>(kDescriptorDim) / subq_m; }

    void validate() const {
        if (subq_m == 0 || kDescriptorDim % subq_m != 0) throw std::invalid_argument("IndexConfig: 64 must be divisible by subq_m");
        if (coarse_k == 0 || subq_k == 0 || subq_k > 256) throw std::invalid_argument("IndexConfig: need coarse_k >= 1, 1 <= subq_k <= 256");
        if (nprobe < 1 || nprobe > coarse_k) throw std::invalid_argument("IndexConfig: need 1 <= nprobe <= coarse_k");
        if (knn_K < 1) throw std::invalid_argument("IndexConfig: knn_K must be >= 1");
        if (batch_B < 1) throw std::invalid_argument("IndexConfig: batch_B must be >= 1");
    }

    bool operator==(const IndexConfig&) const = default;
};

struct LabeledFeature {
    ImageId image_id = 0;
    Descriptor64 descriptor{};
};

/// One ADC neighbour. Padding cells carry kSentinelFeature and +inf.
struct Neighbor {
    FeatureId feature_id = kSentinelFeature;
    ImageId image_id = kSentinelImage;
    float distance = std::numeric_limits<float>::infinity();

    bool is_sentinel() const { return feature_id == kSentinelFeature; }
    bool operator==(const Neighbor&) const = default;
};

/// |queries| x K neighbour matrix, row-major.
struct SearchResult {
    std::size_t rows = 0;
    std::size_t k = 0;
    std::vector<Neighbor> cells;

    std::span<const Neighbor> row(std::size_t i) const { return {cells.data() + i * k, k}; }
    bool operator==(const SearchResult&) const = default;
};

struct IngestionReport {
    std::size_t added = 0;
    std::vector<std::size_t> batch_sizes;
};

/// Sizes of consecutive batches of at most `batch` items covering `total`.
inline std::vector<std::size_t> partition_batches(std::size_t total, std::size_t batch) {
    if (batch == 0) throw std::invalid_argument("partition_batches: batch size must be >= 1");
    std::vector<std::size_t> sizes;
    for (std::size_t done = 0; done < total; done += batch) sizes.push_back(std::min(batch, total - done));
    return sizes;
}

struct InvertedList {
    std::vector<FeatureId> feature_ids;
    std::vector<ImageId> image_ids;
    std::vector<std::uint8_t> codes;  // subq_m bytes per entry

    std::size_t size() const { return feature_ids.size(); }
    bool operator==(const InvertedList&) const = default;
};

/// OPQ-rotated inverted file with product-quantized residuals, searched by
/// asymmetric distance computation.
class IvfadcIndex {
public:
    IvfadcIndex() = default;

    /// Learns rotation, coarse codebook and residual sub-codebooks.
    static IvfadcIndex train(std::span<const Descriptor64> sample, const IndexConfig& cfg) {
        cfg.validate();
        const std::size_t min_sample = 10 * static_cast<std::size_t>(std::max(cfg.coarse_k, cfg.subq_k));
        if (sample.size() < min_sample) {
            throw std::invalid_argument("train: need at least " + std::to_string(min_sample) + " sample vectors, got " +
                                        std::to_string(sample.size()));
        }
        IvfadcIndex idx;
        idx.cfg_ = cfg;
        const auto n = static_cast<Eigen::Index>(sample.size());
        const Eigen::Index d = kDescriptorDim;
        RowMatrixF x(n, d);
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = 0; j < d; ++j) x(i, j) = sample[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];

        std::mt19937_64 rng(cfg.seed);
        RowMatrixF rotation = RowMatrixF::Identity(d, d);
        RowMatrixF coarse;
        std::vector<RowMatrixF> subs;
        bool warm = false;

        auto fit_codebooks = [&](const RowMatrixF& y, int iters) {
            KMeansResult cr = kmeans(y, static_cast<int>(cfg.coarse_k), iters, rng, warm ? &coarse : nullptr);
            coarse = std::move(cr.centroids);
            RowMatrixF residual = y;
            for (Eigen::Index i = 0; i < n; ++i) residual.row(i) -= coarse.row(cr.assign[static_cast<std::size_t>(i)]);
            const Eigen::Index ds = cfg.sub_dim();
            RowMatrixF recon(n, d);
            subs.resize(cfg.subq_m);
            for (std::uint32_t m = 0; m < cfg.subq_m; ++m) {
                RowMatrixF part = residual.middleCols(m * ds, ds);
                KMeansResult sr = kmeans(part, static_cast<int>(cfg.subq_k), iters, rng, warm ? &subs[m] : nullptr);
                subs[m] = std::move(sr.centroids);
                for (Eigen::Index i = 0; i < n; ++i) {
                    recon.row(i).segment(m * ds, ds) = subs[m].row(sr.assign[static_cast<std::size_t>(i)]);
                }
            }
            for (Eigen::Index i = 0; i < n; ++i) recon.row(i) += coarse.row(cr.assign[static_cast<std::size_t>(i)]);
            warm = true;
            return recon;
        };

        // Alternate codebook fitting with the orthogonal Procrustes update
        // R = argmin ||X R^T - Recon||, i.e. R^T = U V^T for X^T Recon = U S V^T.
        const int inner = std::max<int>(1, static_cast<int>(cfg.kmeans_iters) / 3);
        for (std::uint32_t it = 0; it < cfg.opq_iters; ++it) {
            RowMatrixF y = x * rotation.transpose();
            RowMatrixF recon = fit_codebooks(y, inner);
            Eigen::MatrixXd cross = x.cast<double>().transpose() * recon.cast<double>();
            Eigen::JacobiSVD<Eigen::MatrixXd> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
            Eigen::MatrixXd rt = svd.matrixU() * svd.matrixV().transpose();
            rotation = rt.transpose().cast<float>();
        }
        RowMatrixF y = x * rotation.transpose();
        fit_codebooks(y, static_cast<int>(cfg.kmeans_iters));

        idx.rotation_.assign(rotation.data(), rotation.data() + rotation.size());
        idx.coarse_.assign(coarse.data(), coarse.data() + coarse.size());
        idx.subcodebooks_.clear();
        for (const auto& s : subs) idx.subcodebooks_.insert(idx.subcodebooks_.end(), s.data(), s.data() + s.size());
        idx.lists_.assign(cfg.coarse_k, InvertedList{});
        idx.trained_ = true;
        return idx;
    }

    bool trained() const { return trained_; }
    const IndexConfig& config() const { return cfg_; }
    std::size_t n_features() const { return n_features_; }
    std::size_t n_images() const { return images_.size(); }
    const std::vector<InvertedList>& lists() const { return lists_; }
    std::span<const float> rotation() const { return rotation_; }
    std::span<const float> coarse_centroids() const { return coarse_; }
    std::span<const float> subcodebooks() const { return subcodebooks_; }

    /// Allows query-time overrides of nprobe / K without retraining.
    void set_search_params(std::uint32_t nprobe, std::uint32_t knn_K) {
        IndexConfig c = cfg_;
        c.nprobe = nprobe;
        c.knn_K = knn_K;
        c.validate();
        cfg_ = c;
    }

    Descriptor64 rotate(const Descriptor64& v) const {
        Descriptor64 out{};
        for (std::size_t i = 0; i < kDescriptorDim; ++i) {
            float acc = 0.f;
            const float* r = rotation_.data() + i * kDescriptorDim;
            for (std::size_t j = 0; j < kDescriptorDim; ++j) acc += r[j] * v[j];
            out[i] = acc;
        }
        return out;
    }

    struct Encoded {
        std::uint32_t list = 0;
        std::array<std::uint8_t, kDescriptorDim> codes{};
    };

    /// Coarse assignment and residual PQ codes of one (unrotated) descriptor.
    Encoded encode(const Descriptor64& v) const {
        require_trained();
        const Descriptor64 y = rotate(v);
        Encoded e;
        e.list = nearest_coarse(y);
        const float* c = coarse_.data() + static_cast<std::size_t>(e.list) * kDescriptorDim;
        const std::uint32_t ds = cfg_.sub_dim();
        for (std::uint32_t m = 0; m < cfg_.subq_m; ++m) {
            float best = std::numeric_limits<float>::infinity();
            std::uint32_t arg = 0;
            for (std::uint32_t k = 0; k < cfg_.subq_k; ++k) {
                const float* s = sub_centroid(m, k);
                float d = 0.f;
                for (std::uint32_t j = 0; j < ds; ++j) {
                    const float diff = y[m * ds + j] - c[m * ds + j] - s[j];
                    d += diff * diff;
                }
                if (d < best) {
                    best = d;
                    arg = k;
                }
            }
            e.codes[m] = static_cast<std::uint8_t>(arg);
        }
        return e;
    }

    /// Reconstruction in the rotated space: coarse centroid + sub-centroids.
    Descriptor64 decode(std::uint32_t list, std::span<const std::uint8_t> codes) const {
        Descriptor64 out{};
        const float* c = coarse_.data() + static_cast<std::size_t>(list) * kDescriptorDim;
        const std::uint32_t ds = cfg_.sub_dim();
        for (std::uint32_t m = 0; m < cfg_.subq_m; ++m) {
            const float* s = sub_centroid(m, codes[m]);
            for (std::uint32_t j = 0; j < ds; ++j) out[m * ds + j] = c[m * ds + j] + s[j];
        }
        return out;
    }

    /// Rotates, encodes and appends features; ids are assigned in arrival order.
    IngestionReport add_batch(std::span<const LabeledFeature> features) {
        require_trained();
        IngestionReport report;
        report.batch_sizes = partition_batches(features.size(), cfg_.batch_B);
        std::vector<Encoded> encoded(features.size());
        for (std::size_t i = 0; i < features.size(); ++i) encoded[i] = encode(features[i].descriptor);
        append_encoded(features, encoded);
        report.added = features.size();
        return report;
    }

    /// Appends pre-encoded features (see encode); used by the ingestion pipeline.
    void append_encoded(std::span<const LabeledFeature> features, std::span<const Encoded> encoded) {
        for (std::size_t i = 0; i < features.size(); ++i) {
            auto& list = lists_[encoded[i].list];
            list.feature_ids.push_back(n_features_++);
            list.image_ids.push_back(features[i].image_id);
            list.codes.insert(list.codes.end(), encoded[i].codes.begin(), encoded[i].codes.begin() + cfg_.subq_m);
            images_.insert(features[i].image_id);
        }
    }

    /// K approximate neighbours per query, ascending ADC distance, ties by feature id.
    SearchResult search_knn(std::span<const Descriptor64> queries) const {
        require_trained();
        if (n_features_ == 0) throw std::logic_error("search_knn: index is empty");
        SearchResult res;
        res.rows = queries.size();
        res.k = cfg_.knn_K;
        res.cells.resize(res.rows * res.k);
        std::vector<float> table(static_cast<std::size_t>(cfg_.subq_m) * cfg_.subq_k);
        for (std::size_t q = 0; q < queries.size(); ++q) search_one(queries[q], table, res.cells.data() + q * res.k);
        return res;
    }

    bool operator==(const IvfadcIndex& o) const {
        return cfg_ == o.cfg_ && trained_ == o.trained_ && rotation_ == o.rotation_ && coarse_ == o.coarse_ &&
               subcodebooks_ == o.subcodebooks_ && lists_ == o.lists_ && n_features_ == o.n_features_ &&
               images_ == o.images_;
    }

    // Index file: "PVIX", u32 version, config block, u8 trained, rotation,
    // coarse centroids, sub-codebooks (f32), then per list u64 length and
    // entries of (u64 feature id, u64 image id, subq_m x u8 codes).
    static constexpr std::uint32_t kFileVersion = 1;

    void save(std::ostream& out) const {
        BinaryWriter w(out);
        w.put_magic("PVIX");
        w.put(kFileVersion);
        w.put(cfg_.coarse_k);
        w.put(cfg_.subq_m);
        w.put(cfg_.subq_k);
        w.put(cfg_.nprobe);
        w.put(cfg_.knn_K);
        w.put(cfg_.batch_B);
        w.put(cfg_.opq_iters);
        w.put(cfg_.kmeans_iters);
        w.put(cfg_.seed);
        w.put(static_cast<std::uint8_t>(trained_ ? 1 : 0));
        w.put_floats(rotation_);
        w.put_floats(coarse_);
        w.put_floats(subcodebooks_);
        for (const auto& list : lists_) {
            w.put(static_cast<std::uint64_t>(list.size()));
            for (std::size_t i = 0; i < list.size(); ++i) {
                w.put(list.feature_ids[i]);
                w.put(list.image_ids[i]);
                w.put_bytes(std::span(list.codes).subspan(i * cfg_.subq_m, cfg_.subq_m));
            }
        }
    }

    static IvfadcIndex load(std::istream& in) {
        BinaryReader r(in);
        r.expect_magic("PVIX", "index file");
        const auto version = r.get<std::uint32_t>();
        if (version != kFileVersion) throw FormatError("index file: unsupported version " + std::to_string(version));
        IvfadcIndex idx;
        auto& c = idx.cfg_;
        c.coarse_k = r.get<std::uint32_t>();
        c.subq_m = r.get<std::uint32_t>();
        c.subq_k = r.get<std::uint32_t>();
        c.nprobe = r.get<std::uint32_t>();
        c.knn_K = r.get<std::uint32_t>();
        c.batch_B = r.get<std::uint64_t>();
        c.opq_iters = r.get<std::uint32_t>();
        c.kmeans_iters = r.get<std::uint32_t>();
        c.seed = r.get<std::uint64_t>();
        try {
            c.validate();
        } catch (const std::invalid_argument& e) {
            throw FormatError(std::string("index file: invalid config: ") + e.what());
        }
        idx.trained_ = r.get<std::uint8_t>() != 0;
        if (idx.trained_) {
            idx.rotation_.resize(kDescriptorDim * kDescriptorDim);
            idx.coarse_.resize(static_cast<std::size_t>(c.coarse_k) * kDescriptorDim);
            idx.subcodebooks_.resize(static_cast<std::size_t>(c.subq_k) * kDescriptorDim);
            r.get_floats(idx.rotation_);
            r.get_floats(idx.coarse_);
            r.get_floats(idx.subcodebooks_);
            idx.lists_.assign(c.coarse_k, InvertedList{});
            for (auto& list : idx.lists_) {
                const auto len = r.get<std::uint64_t>();
                list.feature_ids.resize(len);
                list.image_ids.resize(len);
                list.codes.resize(len * c.subq_m);
                for (std::uint64_t i = 0; i < len; ++i) {
                    list.feature_ids[i] = r.get<std::uint64_t>();
                    list.image_ids[i] = r.get<std::uint64_t>();
                    r.get_bytes(std::span(list.codes).subspan(i * c.subq_m, c.subq_m));
                    idx.images_.insert(list.image_ids[i]);
                }
                idx.n_features_ += len;
            }
        }
        return idx;
    }

    void save(const std::filesystem::path& path) const {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + path.string());
        save(out);
        if (!out) throw std::runtime_error("failed writing " + path.string());
    }

    static IvfadcIndex load(const std::filesystem::path& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw std::runtime_error("cannot open " + path.string());
        return load(in);
    }

private:
    void require_trained() const {
        if (!trained_) throw std::logic_error("index is not trained");
    }

    const float* sub_centroid(std::uint32_t m, std::uint32_t k) const {
        return subcodebooks_.data() + (static_cast<std::size_t>(m) * cfg_.subq_k + k) * cfg_.sub_dim();
    }

    std::uint32_t nearest_coarse(const Descriptor64& y) const {
        float best = std::numeric_limits<float>::infinity();
        std::uint32_t arg = 0;
        for (std::uint32_t l = 0; l < cfg_.coarse_k; ++l) {
            const float d = coarse_distance(y, l);
            if (d < best) {
                best = d;
                arg = l;
            }
        }
        return arg;
    }

    float coarse_distance(const Descriptor64& y, std::uint32_t l) const {
        const float* c = coarse_.data() + static_cast<std::size_t>(l) * kDescriptorDim;
        float d = 0.f;
        for (std::size_t j = 0; j < kDescriptorDim; ++j) {
            const float diff = y[j] - c[j];
            d += diff * diff;
        }
        return d;
    }

    void search_one(const Descriptor64& query, std::vector<float>& table, Neighbor* out) const {
        const Descriptor64 y = rotate(query);
        std::vector<std::pair<float, std::uint32_t>> coarse_d(cfg_.coarse_k);
        for (std::uint32_t l = 0; l < cfg_.coarse_k; ++l) coarse_d[l] = {coarse_distance(y, l), l};
        std::partial_sort(coarse_d.begin(), coarse_d.begin() + cfg_.nprobe, coarse_d.end());

        const std::uint32_t ds = cfg_.sub_dim(), ks = cfg_.subq_k, msub = cfg_.subq_m;
        using Entry = std::tuple<float, FeatureId, ImageId>;  // max-heap on (distance, feature id)
        std::priority_queue<Entry> heap;
        for (std::uint32_t p = 0; p < cfg_.nprobe; ++p) {
            const std::uint32_t l = coarse_d[p].second;
            const auto& list = lists_[l];
            if (list.size() == 0) continue;
            const float* c = coarse_.data() + static_cast<std::size_t>(l) * kDescriptorDim;
            for (std::uint32_t m = 0; m < msub; ++m) {
                for (std::uint32_t k = 0; k < ks; ++k) {
                    const float* s = sub_centroid(m, k);
                    float d = 0.f;
                    for (std::uint32_t j = 0; j < ds; ++j) {
                        const float diff = y[m * ds + j] - c[m * ds + j] - s[j];
                        d += diff * diff;
                    }
                    table[static_cast<std::size_t>(m) * ks + k] = d;
                }
            }
            const std::uint8_t* code = list.codes.data();
            for (std::size_t i = 0; i < list.size(); ++i, code += msub) {
                float d = 0.f;
                for (std::uint32_t m = 0; m < msub; ++m) d += table[static_cast<std::size_t>(m) * ks + code[m]];
                const Entry e{d, list.feature_ids[i], list.image_ids[i]};
                if (heap.size() < cfg_.knn_K) {
                    heap.push(e);
                } else if (e < heap.top()) {
                    heap.pop();
                    heap.push(e);
                }
            }
        }
        std::vector<Entry> best;
        best.reserve(heap.size());
        while (!heap.empty()) {
            best.push_back(heap.top());
            heap.pop();
        }
        std::reverse(best.begin(), best.end());
        for (std::size_t i = 0; i < best.size(); ++i) {
            out[i].distance = std::get<0>(best[i]);
            out[i].feature_id = std::get<1>(best[i]);
            out[i].image_id = std::get<2>(best[i]);
        }
    }

    IndexConfig cfg_{};
    bool trained_ = false;
    std::vector<float> rotation_;      // 64 x 64 row-major, y = R x
    std::vector<float> coarse_;        // coarse_k x 64
    std::vector<float> subcodebooks_;  // subq_m x subq_k x sub_dim
    std::vector<InvertedList> lists_;
    std::size_t n_features_ = 0;
    std::unordered_set<ImageId> images_;
};

}  // namespace provenance
