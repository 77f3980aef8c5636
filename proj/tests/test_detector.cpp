#include <gtest/gtest.h>

#include <sstream>

#include "test_util.hpp"

using namespace provenance;
using namespace testutil;

namespace {

GrayImage rotate90(const GrayImage& img) {
    // (x, y) -> (y, W - 1 - x): counter-clockwise quarter turn.
    GrayImage out(img.height, img.width);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) out.at(y, img.width - 1 - x) = img.at(x, y);
    return out;
}

InterestPoint pt(float response, float x, float y, float scale) {
    InterestPoint p;
    p.x = x;
    p.y = y;
    p.scale = scale;
    p.response = response;
    return p;
}

double norm(const Descriptor64& d) {
    double s = 0;
    for (float v : d) s += double(v) * v;
    return std::sqrt(s);
}

}  // namespace

TEST(Detect, ConstantImageHasNoPoints) {
    EXPECT_TRUE(detect(GrayImage(128, 128, 90), DetectorConfig::dsurf()).empty());
}

TEST(Detect, TinyImageGivesEmptyList) {
    EXPECT_TRUE(detect(random_image(8, 8, 1), DetectorConfig::dsurf()).empty());
}

TEST(Detect, GaussianBlobLocalisedAtCentre) {
    auto img = blob_image(128, 128, 64, 64, 4.0);
    auto pts = detect(img, DetectorConfig::dsurf());
    ASSERT_FALSE(pts.empty());
    const auto& best = pts.front();
    EXPECT_LE(std::hypot(best.x - 64.0, best.y - 64.0), 2.0);
    const double target = 4.0 * 1.2;
    EXPECT_NEAR(best.scale, target, 0.5 * target);
}

TEST(Detect, SortedByResponseAboveThreshold) {
    auto cfg = DetectorConfig::dsurf();
    auto pts = detect(textured_scene(256, 3), cfg);
    ASSERT_GT(pts.size(), 10u);
    for (std::size_t i = 1; i < pts.size(); ++i) EXPECT_GE(pts[i - 1].response, pts[i].response);
    for (const auto& p : pts) {
        EXPECT_GE(p.response, cfg.hessian_threshold);
        EXPECT_GE(p.x, 0.f);
        EXPECT_LT(p.x, 256.f);
        EXPECT_GE(p.y, 0.f);
        EXPECT_LT(p.y, 256.f);
        EXPECT_GT(p.scale, 0.f);
    }
}

TEST(Detect, QuarterTurnConsistency) {
    auto img = textured_scene(257, 21);
    auto cfg = DetectorConfig::dsurf();
    auto a = detect(img, cfg);
    auto b = detect(rotate90(img), cfg);
    ASSERT_FALSE(a.empty());
    EXPECT_EQ(a.size(), b.size());
    std::size_t matched = 0;
    for (const auto& p : a) {
        const double ex = p.y, ey = img.width - 1 - p.x;
        for (const auto& q : b)
            if (std::hypot(q.x - ex, q.y - ey) <= 1.0) {
                ++matched;
                break;
            }
    }
    EXPECT_EQ(matched, a.size());
}

TEST(Detect, Deterministic) {
    auto img = textured_scene(200, 5);
    EXPECT_EQ(detect(img, DetectorConfig::dsurf()), detect(img, DetectorConfig::dsurf()));
}

TEST(Describe, ConstantRegionGivesZeroDescriptor) {
    GrayImage img(100, 100, 120);
    auto fs = describe(img, {pt(1, 50, 50, 2)});
    ASSERT_EQ(fs.size(), 1u);
    for (float v : fs.descriptors[0]) EXPECT_EQ(v, 0.f);
}

TEST(Describe, UnitNormForStructuredRegions) {
    auto img = textured_scene(256, 8);
    auto pts = detect(img, DetectorConfig::dsurf());
    auto fs = describe(img, pts);
    ASSERT_EQ(fs.size(), pts.size());
    for (const auto& d : fs.descriptors) {
        const double n = norm(d);
        if (n > 0) EXPECT_NEAR(n, 1.0, 1e-6);
    }
}

TEST(Describe, WindowOutsideImageGivesZerosAndKeepsPoint) {
    auto img = textured_scene(64, 9);
    auto fs = describe(img, {pt(1, -200, -200, 1.0), pt(1, 32, 32, 1.5)});
    ASSERT_EQ(fs.size(), 2u);
    for (float v : fs.descriptors[0]) EXPECT_EQ(v, 0.f);
    EXPECT_GT(norm(fs.descriptors[1]), 0.5);
}

TEST(Describe, TranslationEquivariance) {
    auto a = blob_image(128, 128, 50, 50, 5.0);
    auto b = blob_image(128, 128, 67, 59, 5.0);
    auto da = describe(a, {pt(1, 50, 50, 2.0)});
    auto db = describe(b, {pt(1, 67, 59, 2.0)});
    double d2 = 0;
    for (std::size_t i = 0; i < kDescriptorDim; ++i) d2 += std::pow(da.descriptors[0][i] - db.descriptors[0][i], 2);
    EXPECT_LT(std::sqrt(d2), 1e-3);
    EXPECT_GT(norm(da.descriptors[0]), 0.5);
}

TEST(SelectDistributed, CapacityNotBinding) {
    auto cfg = DetectorConfig::with_budget(10, 5);
    std::vector<InterestPoint> pts{pt(5, 0, 0, 1), pt(4, 50, 0, 1), pt(3, 100, 0, 1), pt(2, 150, 0, 1)};
    EXPECT_EQ(select_distributed(pts, cfg), pts);
}

TEST(SelectDistributed, GreedyPassThenFill) {
    auto cfg = DetectorConfig::with_budget(5, 2);
    cfg.overlap_factor = 3.0;  // radius 3 with scale 1
    auto A = pt(10, 0, 0, 1), B = pt(9, 100, 100, 1), C = pt(8, 1, 1, 1), D = pt(7, 50, 50, 1), E = pt(6, 52, 50, 1),
         F = pt(5, 200, 200, 1);
    // Shuffled input: the selection re-sorts by response.
    auto out = select_distributed({E, C, F, A, D, B}, cfg);
    EXPECT_EQ(out, (std::vector<InterestPoint>{A, B, D, F, C}));
}

TEST(SelectDistributed, CoLocatedPointsNeverDuplicate) {
    auto cfg = DetectorConfig::with_budget(6, 2);
    std::vector<InterestPoint> pts;
    for (int i = 0; i < 10; ++i) pts.push_back(pt(100.f - i, 10, 10, 1));
    auto out = select_distributed(pts, cfg);
    ASSERT_EQ(out.size(), 6u);
    for (std::size_t i = 0; i < out.size(); ++i) EXPECT_EQ(out[i].response, 100.f - i);
}

TEST(SelectDistributed, SizeTopMAndDisjointDisks) {
    auto cfg = DetectorConfig::with_budget(200, 80);
    auto pts = detect(textured_scene(256, 12), DetectorConfig::dsurf());
    ASSERT_GT(pts.size(), 200u);
    auto out = select_distributed(pts, cfg);
    ASSERT_EQ(out.size(), 200u);
    for (std::size_t i = 0; i < cfg.m; ++i) EXPECT_EQ(out[i], pts[i]);
    // Count the greedy (non-fill) points: they come before any fill point and
    // have pairwise disjoint disks and none overlaps the top-m set.
    std::vector<InterestPoint> chosen(out.begin(), out.begin() + cfg.m);
    auto overlaps = [&](const InterestPoint& a, const InterestPoint& b) {
        return std::hypot(a.x - b.x, a.y - b.y) < cfg.overlap_factor * (a.scale + b.scale);
    };
    for (std::size_t i = cfg.m; i < out.size(); ++i) {
        bool any = false;
        for (const auto& c : chosen) any = any || overlaps(out[i], c);
        if (any) break;  // first fill point
        chosen.push_back(out[i]);
    }
    for (std::size_t i = cfg.m; i < chosen.size(); ++i)
        for (std::size_t j = cfg.m; j < i; ++j) EXPECT_FALSE(overlaps(chosen[i], chosen[j]));
}

TEST(Presets, NamedVariants) {
    EXPECT_EQ(DetectorConfig::surf2k().p, 2000u);
    EXPECT_EQ(DetectorConfig::surf2k().m, 2000u);
    EXPECT_EQ(DetectorConfig::surf5k().p, 5000u);
    EXPECT_EQ(DetectorConfig::surf5k().m, 5000u);
    EXPECT_EQ(DetectorConfig::dsurf().p, 5000u);
    EXPECT_EQ(DetectorConfig::dsurf().m, 2500u);
    auto bad = DetectorConfig::with_budget(10, 20);
    EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TEST(FeatureFile, RoundTripAndLayout) {
    auto img = textured_scene(128, 13);
    auto fs = extract_features(img, DetectorConfig::dsurf(), 42);
    std::stringstream buf;
    write_features(buf, fs);
    const std::string bytes = buf.str();
    EXPECT_EQ(bytes.substr(0, 4), "PVF1");
    EXPECT_EQ(bytes.size(), 4 + 4 + 8 + 4 + fs.size() * (4 * 4 + 64 * 4));
    std::stringstream in(bytes);
    EXPECT_EQ(read_features(in), fs);
}

TEST(FeatureFile, BadMagicAndVersionRejected) {
    std::stringstream bad("XXXX\x01\x00\x00\x00");
    EXPECT_THROW(read_features(bad), FormatError);
    std::string v2("PVF1\x02\x00\x00\x00", 8);
    std::stringstream wrong(v2);
    EXPECT_THROW(read_features(wrong), FormatError);
}
