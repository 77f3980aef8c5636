#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace provenance;
using namespace testutil;

namespace {

std::int64_t direct_sum(const GrayImage& img, int x, int y, int w, int h) {
    std::int64_t s = 0;
    for (int r = y; r < y + h; ++r)
        for (int c = x; c < x + w; ++c) s += img.at(c, r);
    return s;
}

}  // namespace

TEST(Integral, SinglePixelTable) {
    GrayImage img(1, 1, std::vector<std::uint8_t>{7});
    auto ii = integral_build(img);
    EXPECT_EQ(ii.at(0, 0), 0);
    EXPECT_EQ(ii.at(0, 1), 0);
    EXPECT_EQ(ii.at(1, 0), 0);
    EXPECT_EQ(ii.at(1, 1), 7);
}

TEST(Integral, AllOnesRectangle) {
    auto ii = integral_build(GrayImage(4, 4, 1));
    EXPECT_EQ(box_sum(ii, 0, 0, 2, 3), 6.0);
    auto ii8 = integral_build(GrayImage(8, 8, 1));
    EXPECT_EQ(box_sum(ii8, 2, 2, 3, 3), 9.0);
}

TEST(Integral, ZeroImage) {
    auto ii = integral_build(GrayImage(9, 5, 0));
    EXPECT_EQ(box_sum(ii, 1, 1, 4, 3), 0.0);
}

TEST(Integral, WholeImageMatchesDirectSum) {
    auto img = random_image(16, 16, 3);
    auto ii = integral_build(img);
    EXPECT_EQ(box_sum(ii, 0, 0, 16, 16), static_cast<double>(direct_sum(img, 0, 0, 16, 16)));
}

TEST(Integral, FirstRowAndColumnZeroAndMonotone) {
    auto img = random_image(13, 9, 4);
    auto ii = integral_build(img);
    for (int c = 0; c <= 13; ++c) EXPECT_EQ(ii.at(0, c), 0);
    for (int r = 0; r <= 9; ++r) EXPECT_EQ(ii.at(r, 0), 0);
    for (int r = 1; r <= 9; ++r)
        for (int c = 1; c <= 13; ++c) {
            EXPECT_GE(ii.at(r, c), ii.at(r - 1, c));
            EXPECT_GE(ii.at(r, c), ii.at(r, c - 1));
        }
}

TEST(Integral, EveryRectangleUpTo32Exhaustive) {
    for (int size : {8, 32}) {
        auto img = random_image(size, size, 11 + size);
        auto ii = integral_build(img);
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x)
                for (int h = 1; y + h <= size; ++h)
                    for (int w = 1; x + w <= size; ++w)
                        ASSERT_EQ(box_sum(ii, x, y, w, h), static_cast<double>(direct_sum(img, x, y, w, h)))
                            << x << ',' << y << ',' << w << ',' << h;
    }
}

TEST(Integral, OutOfBoundsRectangleThrows) {
    auto ii = integral_build(GrayImage(8, 8, 1));
    EXPECT_THROW(box_sum(ii, 6, 0, 3, 1), std::out_of_range);
    EXPECT_THROW(box_sum(ii, -1, 0, 2, 2), std::out_of_range);
    EXPECT_THROW(box_sum(ii, 0, 7, 1, 2), std::out_of_range);
}

TEST(Warp, IdentityIsPixelIdentical) {
    auto img = random_image(23, 17, 5);
    EXPECT_EQ(warp(img, Homography::identity(), 23, 17), img);
}

TEST(Warp, IntegerTranslationShiftsColumns) {
    auto img = random_image(12, 6, 6);
    auto out = warp(img, Homography::translation(3, 0), 12, 6);
    for (int y = 0; y < 6; ++y)
        for (int x = 0; x < 12; ++x) EXPECT_EQ(out.at(x, y), x < 3 ? 0 : img.at(x - 3, y)) << x << ',' << y;
}

TEST(Warp, DoubleScaleKeepsCornerPixels) {
    GrayImage checker(2, 2, std::vector<std::uint8_t>{0, 255, 255, 0});
    auto out = warp(checker, Homography::scaling(2, 2), 4, 4);
    ASSERT_EQ(out.width, 4);
    ASSERT_EQ(out.height, 4);
    EXPECT_EQ(out.at(0, 0), checker.at(0, 0));
    // (3,3) maps back to (1.5,1.5): clamped to the last source pixel.
    EXPECT_EQ(out.at(3, 3), checker.at(1, 1));
    EXPECT_EQ(out.at(2, 0), checker.at(1, 0));
    EXPECT_EQ(out.at(0, 2), checker.at(0, 1));
}

TEST(Warp, OutputHasRequestedDimensions) {
    auto img = random_image(10, 10, 7);
    auto out = warp(img, Homography::similarity(1.3, 0.2, 4, -2), 31, 7);
    EXPECT_EQ(out.width, 31);
    EXPECT_EQ(out.height, 7);
}

TEST(Warp, SingularHomographyThrows) {
    auto img = random_image(4, 4, 8);
    EXPECT_THROW(warp(img, Homography({1, 2, 0, 2, 4, 0, 0, 0, 1}), 4, 4), std::domain_error);
}

TEST(Warp, TranslationCompositionWithinOneLevel) {
    // Bilinear sampling reproduces linear content exactly, so only the
    // intermediate rounding separates two warps from one.
    GrayImage ramp(40, 40);
    for (int y = 0; y < 40; ++y)
        for (int x = 0; x < 40; ++x) ramp.at(x, y) = static_cast<std::uint8_t>(3 * x + 2 * y + 10);
    const auto h1 = Homography::translation(2.5, -1.25), h2 = Homography::translation(-0.75, 3.5);
    auto twice = warp(warp(ramp, h1, 40, 40), h2, 40, 40);
    auto once = warp(ramp, h2 * h1, 40, 40);
    // Compare away from the borders, where fill values differ.
    for (int y = 6; y < 34; ++y)
        for (int x = 6; x < 34; ++x) EXPECT_LE(std::abs(int(twice.at(x, y)) - int(once.at(x, y))), 1) << x << ',' << y;
}

TEST(Warp, IntegerTranslationsComposeExactlyOnNoise) {
    auto img = random_image(40, 40, 9);
    const auto h1 = Homography::translation(2, -1), h2 = Homography::translation(-3, 4);
    auto twice = warp(warp(img, h1, 40, 40), h2, 40, 40);
    auto once = warp(img, h2 * h1, 40, 40);
    for (int y = 6; y < 34; ++y)
        for (int x = 6; x < 34; ++x) EXPECT_EQ(twice.at(x, y), once.at(x, y));
}

TEST(HistogramMatch, ConstantReference) {
    auto src = random_image(10, 10, 10);
    auto out = match_histograms(src, GrayImage(5, 5, 100));
    for (auto v : out.data) EXPECT_EQ(v, 100);
}

TEST(HistogramMatch, SelfIsFixedPoint) {
    auto src = random_image(20, 20, 11);
    EXPECT_EQ(match_histograms(src, src), src);
}

TEST(HistogramMatch, TwoValuedMapping) {
    GrayImage src(4, 2, std::vector<std::uint8_t>{0, 255, 0, 255, 255, 0, 255, 0});
    GrayImage ref(2, 2, std::vector<std::uint8_t>{10, 20, 20, 10});
    auto out = match_histograms(src, ref);
    ASSERT_EQ(out.width, 4);
    for (std::size_t i = 0; i < src.data.size(); ++i) EXPECT_EQ(out.data[i], src.data[i] == 0 ? 10 : 20);
}

TEST(HistogramMatch, Idempotent) {
    auto src = random_image(30, 20, 12), ref = random_image(15, 15, 13, 16);
    auto once = match_histograms(src, ref);
    EXPECT_EQ(match_histograms(once, ref), once);
}

TEST(HistogramMatch, EmptyPatchThrows) {
    EXPECT_THROW(match_histograms(GrayImage{}, GrayImage(2, 2)), std::invalid_argument);
}

TEST(Luma, Bt601RoundHalfUp) {
    EXPECT_EQ(luma601(255, 255, 255), 255);
    EXPECT_EQ(luma601(0, 0, 0), 0);
    EXPECT_EQ(luma601(255, 0, 0), 76);   // 76.245
    EXPECT_EQ(luma601(0, 255, 0), 150);  // 149.685
    EXPECT_EQ(luma601(0, 0, 255), 29);   // 29.07
}

TEST(ImageIo, PngRoundTrip) {
    auto dir = scratch("png");
    auto img = random_image(33, 21, 14);
    write_png(dir / "a.png", img);
    EXPECT_EQ(read_image(dir / "a.png"), img);
}

TEST(ImageIo, ReadsJpegAndPngFixtures) {
    auto jpg = read_image(data_dir() / "flower_small.jpg");
    EXPECT_EQ(jpg.width, 160);
    EXPECT_EQ(jpg.height, 120);
    auto png = read_image(data_dir() / "photos" / "camera.png");
    EXPECT_EQ(png.width, 512);
}

TEST(ImageIo, MissingFileThrows) {
    EXPECT_THROW(read_image("/nonexistent/none.png"), std::exception);
}

TEST(GrayImageType, RejectsBadDimensions) {
    EXPECT_THROW(GrayImage(0, 3), std::invalid_argument);
    EXPECT_THROW(GrayImage(2, 2, std::vector<std::uint8_t>{1, 2, 3}), std::invalid_argument);
}
