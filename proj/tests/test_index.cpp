#include <gtest/gtest.h>

#include <map>
#include <sstream>

#include "test_util.hpp"

using namespace provenance;
using namespace testutil;

namespace {

std::vector<Descriptor64> random_set(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<Descriptor64> v(n);
    for (auto& d : v) d = random_descriptor(rng);
    return v;
}

/// Mixture of tight clusters, closer to real descriptor statistics than iid noise.
std::vector<Descriptor64> clustered_set(std::size_t n, std::size_t clusters, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::mt19937_64 crng(99);
    std::vector<Descriptor64> centres(clusters);
    for (auto& c : centres) c = random_descriptor(crng);
    std::normal_distribution<float> noise(0.f, 0.15f);
    std::uniform_int_distribution<std::size_t> pick(0, clusters - 1);
    std::vector<Descriptor64> v(n);
    for (auto& d : v) {
        d = centres[pick(rng)];
        for (auto& x : d) x += noise(rng);
    }
    return v;
}

std::vector<LabeledFeature> label(const std::vector<Descriptor64>& v, ImageId per_image = 1) {
    std::vector<LabeledFeature> out;
    for (std::size_t i = 0; i < v.size(); ++i) out.push_back({i / per_image, v[i]});
    return out;
}

double sq(const Descriptor64& a, const Descriptor64& b) {
    double s = 0;
    for (std::size_t i = 0; i < kDescriptorDim; ++i) s += double(a[i] - b[i]) * (a[i] - b[i]);
    return s;
}

IndexConfig small_config() {
    IndexConfig c;
    c.opq_iters = 4;
    c.kmeans_iters = 8;
    return c;
}

double reconstruction_mse(const IvfadcIndex& idx, const std::vector<Descriptor64>& data) {
    double total = 0;
    for (const auto& v : data) {
        auto e = idx.encode(v);
        total += sq(idx.rotate(v), idx.decode(e.list, e.codes));
    }
    return total / data.size();
}

}  // namespace

TEST(Train, RotationIsOrthonormal) {
    auto idx = IvfadcIndex::train(random_set(2000, 1), small_config());
    auto r = idx.rotation();
    for (std::size_t i = 0; i < kDescriptorDim; ++i)
        for (std::size_t j = 0; j < kDescriptorDim; ++j) {
            double dot = 0;
            for (std::size_t k = 0; k < kDescriptorDim; ++k) dot += double(r[i * 64 + k]) * r[j * 64 + k];
            EXPECT_NEAR(dot, i == j ? 1.0 : 0.0, 1e-5);
        }
}

TEST(Train, OpqNoWorseThanPlainPq) {
    // Correlated data, where a learned rotation has something to gain.
    auto base = clustered_set(3000, 40, 2);
    std::mt19937_64 rng(3);
    std::normal_distribution<float> g(0, 1);
    for (auto& d : base) {
        const float shared = g(rng);
        for (std::size_t i = 0; i < 8; ++i) d[i * 8] += 2.0f * shared;
    }
    auto cfg = small_config();
    auto opq = IvfadcIndex::train(base, cfg);
    cfg.opq_iters = 0;
    auto pq = IvfadcIndex::train(base, cfg);
    EXPECT_LE(reconstruction_mse(opq, base), reconstruction_mse(pq, base));
}

TEST(Train, DefaultCodebookSizes) {
    auto idx = IvfadcIndex::train(random_set(1000, 4), small_config());
    EXPECT_EQ(idx.lists().size(), 32u);
    EXPECT_EQ(idx.coarse_centroids().size(), 32u * 64u);
    EXPECT_EQ(idx.subcodebooks().size(), 8u * 96u * 8u);
}

TEST(Train, SampleTooSmallThrows) {
    EXPECT_THROW(IvfadcIndex::train(random_set(959, 5), small_config()), std::invalid_argument);
}

TEST(Train, ConfigValidation) {
    IndexConfig c;
    c.subq_m = 7;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = IndexConfig{};
    c.nprobe = 33;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = IndexConfig{};
    c.knn_K = 0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(AddBatch, EmptyAddLeavesIndexUnchanged) {
    auto idx = IvfadcIndex::train(random_set(1000, 6), small_config());
    auto before = idx;
    auto rep = idx.add_batch({});
    EXPECT_EQ(rep.added, 0u);
    EXPECT_EQ(idx, before);
}

TEST(AddBatch, PartitionArithmetic) {
    EXPECT_EQ(partition_batches(10 * 1000, 4096), (std::vector<std::size_t>{4096, 4096, 1808}));
    EXPECT_TRUE(partition_batches(0, 4096).empty());
    EXPECT_EQ(partition_batches(4096, 4096), (std::vector<std::size_t>{4096}));
}

TEST(AddBatch, ConservationAndContiguousIds) {
    auto data = random_set(1500, 7);
    auto idx = IvfadcIndex::train(data, small_config());
    idx.add_batch(label(data, 100));
    std::size_t total = 0;
    std::vector<FeatureId> ids;
    for (const auto& l : idx.lists()) {
        total += l.size();
        ids.insert(ids.end(), l.feature_ids.begin(), l.feature_ids.end());
    }
    EXPECT_EQ(total, 1500u);
    EXPECT_EQ(idx.n_features(), 1500u);
    EXPECT_EQ(idx.n_images(), 15u);
    std::sort(ids.begin(), ids.end());
    for (std::size_t i = 0; i < ids.size(); ++i) EXPECT_EQ(ids[i], i);
}

TEST(AddBatch, UntrainedIndexThrows) {
    IvfadcIndex idx;
    auto data = random_set(3, 8);
    EXPECT_THROW(idx.add_batch(label(data)), std::logic_error);
}

TEST(Search, SelfRetrievalUnderFullProbe) {
    auto data = random_set(1200, 9);
    auto cfg = small_config();
    cfg.nprobe = cfg.coarse_k;
    auto idx = IvfadcIndex::train(data, cfg);
    idx.add_batch(label(data));
    std::vector<Descriptor64> q(data.begin(), data.begin() + 50);
    auto res = idx.search_knn(q);
    for (std::size_t i = 0; i < q.size(); ++i) {
        auto row = res.row(i);
        bool found = false;
        for (const auto& c : row)
            if (c.feature_id == i) {
                found = true;
                EXPECT_EQ(c.distance, row[0].distance);
            }
        EXPECT_TRUE(found) << i;
    }
}

TEST(Search, RowsSortedAndPaddedWithSentinels) {
    auto data = random_set(1000, 10);
    auto cfg = small_config();
    auto idx = IvfadcIndex::train(data, cfg);
    std::vector<Descriptor64> few(data.begin(), data.begin() + 5);
    idx.add_batch(label(few));
    idx.set_search_params(cfg.coarse_k, 8);
    auto res = idx.search_knn(few);
    for (std::size_t i = 0; i < few.size(); ++i) {
        auto row = res.row(i);
        for (std::size_t k = 0; k < 5; ++k) EXPECT_FALSE(row[k].is_sentinel());
        for (std::size_t k = 5; k < 8; ++k) {
            EXPECT_TRUE(row[k].is_sentinel());
            EXPECT_TRUE(std::isinf(row[k].distance));
        }
        for (std::size_t k = 1; k < 5; ++k) EXPECT_LE(row[k - 1].distance, row[k].distance);
    }
}

TEST(Search, EmptyIndexThrows) {
    auto idx = IvfadcIndex::train(random_set(1000, 11), small_config());
    auto q = random_set(1, 12);
    EXPECT_THROW(idx.search_knn(q), std::logic_error);
}

TEST(Search, RecallOfTrueNearestNeighbourOnClusteredData) {
    auto data = clustered_set(1000, 50, 13);
    auto queries = clustered_set(200, 50, 14);
    auto cfg = small_config();
    cfg.nprobe = cfg.coarse_k;
    cfg.knn_K = 10;
    auto idx = IvfadcIndex::train(data, cfg);
    idx.add_batch(label(data));
    auto res = idx.search_knn(queries);
    std::size_t hits = 0;
    for (std::size_t q = 0; q < queries.size(); ++q) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < data.size(); ++i)
            if (sq(queries[q], data[i]) < sq(queries[q], data[best])) best = i;
        for (const auto& c : res.row(q)) hits += c.feature_id == best;
    }
    EXPECT_GE(hits / double(queries.size()), 0.8);
}

TEST(Search, AdcSelfDistanceEqualsReconstructionDistance) {
    auto data = random_set(1500, 15);
    auto cfg = small_config();
    cfg.nprobe = cfg.coarse_k;
    auto idx = IvfadcIndex::train(data, cfg);
    idx.add_batch(label(data));
    // Locate each feature's stored code.
    std::map<FeatureId, std::pair<std::uint32_t, std::size_t>> where;
    for (std::uint32_t l = 0; l < idx.lists().size(); ++l)
        for (std::size_t i = 0; i < idx.lists()[l].size(); ++i) where[idx.lists()[l].feature_ids[i]] = {l, i};
    std::vector<Descriptor64> q(data.begin(), data.begin() + 100);
    auto res = idx.search_knn(q);
    for (std::size_t i = 0; i < q.size(); ++i) {
        const auto [l, pos] = where.at(i);
        std::span<const std::uint8_t> codes(idx.lists()[l].codes.data() + pos * cfg.subq_m, cfg.subq_m);
        const double truth = sq(idx.rotate(q[i]), idx.decode(l, codes));
        for (const auto& c : res.row(i))
            if (c.feature_id == i) EXPECT_NEAR(c.distance, truth, 1e-4 * std::max(truth, 1e-12) + 1e-6);
    }
}

TEST(Search, IngestionOrderInvariance) {
    auto data = random_set(1000, 16);
    auto idx_a = IvfadcIndex::train(data, small_config());
    auto idx_b = idx_a;
    auto fwd = label(data);
    auto rev = fwd;
    std::reverse(rev.begin(), rev.end());
    idx_a.add_batch(fwd);
    idx_b.add_batch(rev);
    std::vector<Descriptor64> q(data.begin(), data.begin() + 20);
    auto ra = idx_a.search_knn(q), rb = idx_b.search_knn(q);
    for (std::size_t i = 0; i < q.size(); ++i) {
        std::multiset<std::pair<ImageId, float>> sa, sb;
        for (const auto& c : ra.row(i)) sa.insert({c.image_id, c.distance});
        for (const auto& c : rb.row(i)) sb.insert({c.image_id, c.distance});
        EXPECT_EQ(sa, sb);
    }
}

TEST(Search, MoreProbesNeverWorsenKthDistance) {
    auto data = random_set(2000, 17);
    auto idx = IvfadcIndex::train(data, small_config());
    idx.add_batch(label(data));
    auto q = random_set(30, 18);
    for (std::uint32_t p : {1u, 2u, 4u, 8u, 16u}) {
        idx.set_search_params(p, 10);
        auto narrow = idx.search_knn(q);
        idx.set_search_params(2 * p, 10);
        auto wide = idx.search_knn(q);
        for (std::size_t i = 0; i < q.size(); ++i) EXPECT_LE(wide.row(i)[9].distance, narrow.row(i)[9].distance);
    }
}

TEST(Persistence, EmptyTrainedIndexRoundTrips) {
    auto idx = IvfadcIndex::train(random_set(1000, 19), small_config());
    std::stringstream buf;
    idx.save(buf);
    EXPECT_EQ(IvfadcIndex::load(buf), idx);
}

TEST(Persistence, PopulatedIndexSearchesIdentically) {
    auto data = random_set(1000, 20);
    auto idx = IvfadcIndex::train(data, small_config());
    idx.add_batch(label(std::vector<Descriptor64>(data.begin(), data.begin() + 300), 100));
    auto dir = scratch("index_io");
    idx.save(dir / "x.pvix");
    auto back = IvfadcIndex::load(dir / "x.pvix");
    EXPECT_EQ(back, idx);
    EXPECT_EQ(back.n_images(), 3u);
    auto q = random_set(10, 21);
    EXPECT_EQ(back.search_knn(q), idx.search_knn(q));
}

TEST(Persistence, CorruptedMagicOrVersionRejected) {
    auto idx = IvfadcIndex::train(random_set(1000, 22), small_config());
    std::stringstream buf;
    idx.save(buf);
    std::string bytes = buf.str();
    std::string bad_magic = bytes;
    bad_magic[0] = 'Q';
    std::stringstream in1(bad_magic);
    EXPECT_THROW(IvfadcIndex::load(in1), FormatError);
    std::string bad_version = bytes;
    bad_version[4] = 9;
    std::stringstream in2(bad_version);
    EXPECT_THROW(IvfadcIndex::load(in2), FormatError);
    std::stringstream truncated(bytes.substr(0, bytes.size() / 2));
    EXPECT_ANY_THROW(IvfadcIndex::load(truncated));
}

TEST(Ingest, PipelineMatchesSequentialAdd) {
    auto dir = scratch("ingest");
    std::vector<std::filesystem::path> files;
    std::vector<LabeledFeature> all;
    std::mt19937_64 rng(23);
    for (ImageId id = 0; id < 10; ++id) {
        FeatureSet fs;
        fs.image_id = id;
        for (int k = 0; k < 150; ++k) {
            fs.points.push_back({});
            fs.descriptors.push_back(random_descriptor(rng));
            all.push_back({id, fs.descriptors.back()});
        }
        files.push_back(dir / ("f" + std::to_string(id) + ".pvf"));
        save_features(files.back(), fs);
    }
    auto cfg = small_config();
    cfg.batch_B = 400;
    std::vector<Descriptor64> sample;
    for (const auto& f : all) sample.push_back(f.descriptor);
    auto seq = IvfadcIndex::train(sample, cfg);
    auto piped = seq;
    seq.add_batch(all);
    IngestOptions opts;
    opts.queue_capacity = 2;
    opts.encode_workers = 3;
    auto rep = ingest_feature_files(piped, files, opts);
    EXPECT_EQ(rep.added, 1500u);
    EXPECT_EQ(rep.batch_sizes, (std::vector<std::size_t>{400, 400, 400, 300}));
    EXPECT_EQ(piped, seq);
}

TEST(Ingest, MissingFileSurfacesError) {
    auto idx = IvfadcIndex::train(random_set(1000, 24), small_config());
    EXPECT_ANY_THROW(ingest_feature_files(idx, {"/nonexistent/a.pvf"}));
}
