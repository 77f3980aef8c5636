#include <gtest/gtest.h>

#include <fstream>

#include "test_util.hpp"

using namespace provenance;
using namespace testutil;

namespace {

std::filesystem::path write_text(const std::string& name, const std::string& text) {
    static const auto dir = scratch("config");
    const auto p = dir / name;
    std::ofstream(p) << text;
    return p;
}

}  // namespace

TEST(Presets, DetectorBudgets) {
    EXPECT_EQ(preset_config("surf2k").detector.p, 2000u);
    EXPECT_EQ(preset_config("surf5k").detector.p, 5000u);
    EXPECT_FALSE(preset_config("surf5k").detector.distributed());
    auto d = preset_config("dsurf");
    EXPECT_EQ(d.detector.p, 5000u);
    EXPECT_EQ(d.detector.m, 2500u);
    EXPECT_FALSE(d.iterative);
    auto dif = preset_config("dsurf-if");
    EXPECT_EQ(dif.detector.p, 5000u);
    EXPECT_EQ(dif.detector.m, 2500u);
    EXPECT_TRUE(dif.iterative);
    EXPECT_THROW(preset_config("sift"), ConfigError);
}

TEST(Presets, IndexDefaults) {
    const auto c = preset_config("dsurf");
    EXPECT_EQ(c.index.coarse_k, 32u);
    EXPECT_EQ(c.index.subq_k, 96u);
    EXPECT_EQ(c.index.subq_m, 8u);
}

TEST(ConfigFile, SectionsOverrideDefaults) {
    auto p = write_text("ok.ini",
                        "[detector]\np = 3000\nm = 1000\n"
                        "[index]\nnprobe = 8\nknn_K = 12\n"
                        "[match]\nnndr_t = 0.7\nmi_score = raw\n"
                        "[filter]\nrank_k = 50\niterative = yes\n"
                        "[paths]\ncorpus_dir = /data/corpus\n"
                        "[run]\nworkers = 3\n");
    auto c = load_config(p);
    EXPECT_EQ(c.detector.p, 3000u);
    EXPECT_EQ(c.detector.m, 1000u);
    EXPECT_EQ(c.index.nprobe, 8u);
    EXPECT_EQ(c.index.knn_K, 12u);
    EXPECT_DOUBLE_EQ(c.match.nndr_t, 0.7);
    EXPECT_EQ(c.match.mi_score, MatchConfig::MiScore::Raw);
    EXPECT_EQ(c.filter.rank_k, 50u);
    EXPECT_TRUE(c.iterative);
    EXPECT_EQ(c.corpus_dir, "/data/corpus");
    EXPECT_EQ(c.workers, 3u);
}

TEST(ConfigFile, PresetKeyAppliesBeforeOtherKeys) {
    auto p = write_text("preset.ini", "[run]\npreset = surf2k\n[detector]\nhessian_threshold = 250\n");
    auto c = load_config(p);
    EXPECT_EQ(c.preset, "surf2k");
    EXPECT_EQ(c.detector.p, 2000u);
    EXPECT_DOUBLE_EQ(c.detector.hessian_threshold, 250.0);
}

TEST(ConfigFile, Errors) {
    EXPECT_THROW(load_config("/nonexistent/config.ini"), ConfigError);
    EXPECT_THROW(load_config(write_text("bad_num.ini", "[index]\nnprobe = many\n")), ConfigError);
    EXPECT_THROW(load_config(write_text("bad_bool.ini", "[filter]\niterative = maybe\n")), ConfigError);
    EXPECT_THROW(load_config(write_text("bad_range.ini", "[index]\nnprobe = 64\n")), ConfigError);
    EXPECT_THROW(load_config(write_text("bad_mi.ini", "[match]\nmi_score = nats\n")), ConfigError);
    EXPECT_THROW(load_config(write_text("bad_preset.ini", "[run]\npreset = orb\n")), ConfigError);
    EXPECT_THROW(load_config(write_text("malformed.ini", "[index\nnprobe = 2\n")), ConfigError);
}

TEST(Canonical, CoversEverySettingAndFingerprintsDiffer) {
    auto a = preset_config("dsurf");
    auto b = a;
    b.match.mi_score = MatchConfig::MiScore::Raw;
    EXPECT_NE(a.canonical(), b.canonical());
    EXPECT_NE(fingerprint(a.canonical()), fingerprint(b.canonical()));
    EXPECT_EQ(fingerprint(a.canonical()), fingerprint(preset_config("dsurf").canonical()));
    EXPECT_EQ(fingerprint("").size(), 16u);
    EXPECT_EQ(fingerprint(""), "cbf29ce484222325");
    for (const char* key : {"detector.p=", "index.coarse_k=", "match.mi_score=", "filter.rank_k=", "graph.sigma_floor="})
        EXPECT_NE(a.canonical().find(key), std::string::npos) << key;
}

TEST(Corpus, ListingFileSortedById) {
    auto p = write_text("images.txt", "# comment\n3 c.png\n1 a dir/a b.png\n2 b.png\n");
    auto entries = read_listing_file(p);
    ASSERT_EQ(entries.size(), 3u);
    EXPECT_EQ(entries[0], (CorpusEntry{1, "a dir/a b.png"}));
    EXPECT_EQ(entries[2].id, 3u);
    EXPECT_THROW(read_listing_file(write_text("dup.txt", "1 a.png\n1 b.png\n")), FormatError);
    EXPECT_THROW(read_listing_file(write_text("junk.txt", "x.png\n")), FormatError);
}

TEST(Corpus, DirectoryScanWithoutListing) {
    auto dir = scratch("corpus_scan");
    std::filesystem::create_directories(dir / "sub");
    write_png(dir / "b.png", GrayImage(4, 4));
    write_png(dir / "sub" / "a.png", GrayImage(4, 4));
    std::ofstream(dir / "notes.txt") << "ignored";
    auto entries = read_corpus(dir);
    ASSERT_EQ(entries.size(), 2u);
    EXPECT_EQ(entries[0], (CorpusEntry{0, "b.png"}));
    EXPECT_EQ(entries[1], (CorpusEntry{1, "sub/a.png"}));
    write_listing(dir / kListingName, {{7, "sub/a.png"}});
    EXPECT_EQ(read_corpus(dir), (std::vector<CorpusEntry>{{7, "sub/a.png"}}));
    EXPECT_THROW(read_corpus(dir / "missing"), std::runtime_error);
    EXPECT_EQ(feature_path("f", 42).filename(), "00000042.pvf");
}

TEST(Pipeline, CandidatesPutQueryFirstAndSkipDuplicates) {
    std::vector<GrayImage> imgs(5, GrayImage(2, 2));
    std::vector<FeatureSet> fs(5);
    auto c = make_candidates(
        2, {4, 2, 1, 4}, [&](ImageId id) -> const GrayImage& { return imgs[id]; },
        [&](ImageId id) -> const FeatureSet& { return fs[id]; });
    ASSERT_EQ(c.size(), 3u);
    EXPECT_EQ(c[0].id, 2u);
    EXPECT_EQ(c[1].id, 4u);
    EXPECT_EQ(c[2].id, 1u);
    EXPECT_EQ(c[1].image, &imgs[4]);
    EXPECT_EQ(parse_builder("kruskal"), Builder::Kruskal);
    EXPECT_EQ(parse_builder("clustered"), Builder::Clustered);
    EXPECT_ANY_THROW(parse_builder("edmonds"));
}

TEST(Pipeline, SampleDescriptorsDeterministicAndBounded) {
    std::mt19937_64 rng(1);
    std::vector<FeatureSet> sets(3);
    for (auto& s : sets)
        for (int i = 0; i < 100; ++i) {
            s.points.push_back({});
            s.descriptors.push_back(random_descriptor(rng));
        }
    auto a = sample_descriptors(sets, 50, 9), b = sample_descriptors(sets, 50, 9);
    EXPECT_EQ(a.size(), 50u);
    EXPECT_EQ(a, b);
    EXPECT_EQ(sample_descriptors(sets, 1000, 9).size(), 300u);
}
