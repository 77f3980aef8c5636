#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "provenance/common.hpp"

namespace provenance {

/// 8-bit single-channel image, row-major.
struct GrayImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> data;

    GrayImage() = default;

    GrayImage(int w, int h, std::uint8_t fill = 0) : width(w), height(h) {
        if (w < 1 || h < 1) throw std::invalid_argument("GrayImage: dimensions must be >= 1");
        data.assign(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill);
    }

    GrayImage(int w, int h, std::vector<std::uint8_t> pixels) : width(w), height(h), data(std::move(pixels)) {
        if (w < 1 || h < 1) throw std::invalid_argument("GrayImage: dimensions must be >= 1");
        if (data.size() != static_cast<std::size_t>(w) * static_cast<std::size_t>(h)) {
            throw std::invalid_argument("GrayImage: pixel count does not match dimensions");
        }
    }

    bool empty() const { return data.empty(); }
    std::size_t size() const { return data.size(); }

    std::uint8_t at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
    std::uint8_t& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }

    bool operator==(const GrayImage&) const = default;
};

/// BT.601 luma with round-half-up.
inline std::uint8_t luma601(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    return static_cast<std::uint8_t>((299u * r + 587u * g + 114u * b + 500u) / 1000u);
}

inline std::uint8_t clamp_to_u8(double v) {
    if (!(v > 0.0)) return 0;
    if (v >= 255.0) return 255;
    return static_cast<std::uint8_t>(std::floor(v + 0.5));
}

/// Extracts the rectangle [x, x+w) x [y, y+h); throws if it leaves the image.
inline GrayImage crop(const GrayImage& img, int x, int y, int w, int h) {
    if (x < 0 || y < 0 || w < 1 || h < 1 || x + w > img.width || y + h > img.height) {
        throw std::out_of_range("crop: rectangle outside image");
    }
    GrayImage out(w, h);
    for (int r = 0; r < h; ++r) {
        std::copy_n(img.data.begin() + static_cast<std::ptrdiff_t>((y + r) * img.width + x), w,
                    out.data.begin() + static_cast<std::ptrdiff_t>(r * w));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Integral image
// ---------------------------------------------------------------------------

/// (width+1) x (height+1) table; entry (i, j) is the sum of pixels with
/// row < i and col < j.
struct IntegralImage {
    int width = 0;   // of the source image
    int height = 0;
    std::vector<std::int64_t> table;

    std::int64_t at(int row, int col) const {
        return table[static_cast<std::size_t>(row) * (width + 1) + col];
    }
};

inline IntegralImage integral_build(const GrayImage& img) {
    IntegralImage ii;
    ii.width = img.width;
    ii.height = img.height;
    const std::size_t stride = static_cast<std::size_t>(img.width) + 1;
    ii.table.assign(stride * (static_cast<std::size_t>(img.height) + 1), 0);
    for (int r = 0; r < img.height; ++r) {
        std::int64_t row_sum = 0;
        for (int c = 0; c < img.width; ++c) {
            row_sum += img.at(c, r);
            ii.table[(r + 1) * stride + c + 1] = ii.table[r * stride + c + 1] + row_sum;
        }
    }
    return ii;
}

/// Exact pixel sum of the w x h rectangle whose top-left corner is (x, y).
inline double box_sum(const IntegralImage& ii, int x, int y, int w, int h) {
    if (x < 0 || y < 0 || w < 0 || h < 0 || x + w > ii.width || y + h > ii.height) {
        throw std::out_of_range("box_sum: rectangle outside image");
    }
    return static_cast<double>(ii.at(y + h, x + w) - ii.at(y, x + w) - ii.at(y + h, x) + ii.at(y, x));
}

/// Box sum with the rectangle clipped to the image; area outside counts as 0.
inline double box_sum_clipped(const IntegralImage& ii, int x, int y, int w, int h) {
    int x0 = std::max(x, 0), y0 = std::max(y, 0);
    int x1 = std::min(x + w, ii.width), y1 = std::min(y + h, ii.height);
    if (x1 <= x0 || y1 <= y0) return 0.0;
    return static_cast<double>(ii.at(y1, x1) - ii.at(y0, x1) - ii.at(y1, x0) + ii.at(y0, x0));
}

// ---------------------------------------------------------------------------
// Homography
// ---------------------------------------------------------------------------

/// Row-major 3x3 projective transform acting on column vectors (x, y, 1).
class Homography {
public:
    Homography() : m_{1, 0, 0, 0, 1, 0, 0, 0, 1} {}
    explicit Homography(const std::array<double, 9>& m) : m_(m) { normalize(); }

    static Homography identity() { return Homography(); }
    static Homography translation(double tx, double ty) { return Homography({1, 0, tx, 0, 1, ty, 0, 0, 1}); }
    static Homography scaling(double sx, double sy) { return Homography({sx, 0, 0, 0, sy, 0, 0, 0, 1}); }
    /// Similarity: rotate by `angle` (radians) and scale by `s` about the origin, then translate.
    static Homography similarity(double s, double angle, double tx, double ty) {
        double c = s * std::cos(angle), n = s * std::sin(angle);
        return Homography({c, -n, tx, n, c, ty, 0, 0, 1});
    }

    double operator()(int r, int c) const { return m_[static_cast<std::size_t>(r * 3 + c)]; }
    const std::array<double, 9>& matrix() const { return m_; }

    double determinant() const {
        const auto& a = m_;
        return a[0] * (a[4] * a[8] - a[5] * a[7]) - a[1] * (a[3] * a[8] - a[5] * a[6]) +
               a[2] * (a[3] * a[7] - a[4] * a[6]);
    }

    bool invertible() const { return std::abs(determinant()) > 1e-12; }

    Homography inverse() const {
        double det = determinant();
        if (std::abs(det) <= 1e-12) throw std::domain_error("Homography: singular matrix");
        const auto& a = m_;
        std::array<double, 9> inv{
            (a[4] * a[8] - a[5] * a[7]) / det, (a[2] * a[7] - a[1] * a[8]) / det, (a[1] * a[5] - a[2] * a[4]) / det,
            (a[5] * a[6] - a[3] * a[8]) / det, (a[0] * a[8] - a[2] * a[6]) / det, (a[2] * a[3] - a[0] * a[5]) / det,
            (a[3] * a[7] - a[4] * a[6]) / det, (a[1] * a[6] - a[0] * a[7]) / det, (a[0] * a[4] - a[1] * a[3]) / det};
        return Homography(inv);
    }

    /// this * other (apply `other` first).
    Homography operator*(const Homography& other) const {
        std::array<double, 9> r{};
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                for (int k = 0; k < 3; ++k) r[i * 3 + j] += (*this)(i, k) * other(k, j);
        return Homography(r);
    }

    std::array<double, 2> apply(double x, double y) const {
        const auto& a = m_;
        double w = a[6] * x + a[7] * y + a[8];
        return {(a[0] * x + a[1] * y + a[2]) / w, (a[3] * x + a[4] * y + a[5]) / w};
    }

private:
    void normalize() {
        if (m_[8] != 0.0) {
            double s = m_[8];
            for (double& v : m_) v /= s;
        }
    }

    std::array<double, 9> m_;
};

// ---------------------------------------------------------------------------
// Warping and histogram matching
// ---------------------------------------------------------------------------

/// Inverse-mapped bilinear warp of `img` by `H` into an out_w x out_h frame.
/// Coordinates are pixel indices. A sample lands inside the source when it
/// falls on a source pixel's footprint [-0.5, w-0.5] x [-0.5, h-0.5];
/// neighbours beyond the last row/column are clamped. Other samples are 0.
inline GrayImage warp(const GrayImage& img, const Homography& H, int out_w, int out_h) {
    if (!H.invertible()) throw std::domain_error("warp: singular homography");
    const Homography inv = H.inverse();
    const auto& m = inv.matrix();
    GrayImage out(out_w, out_h);
    const double max_x = img.width - 0.5, max_y = img.height - 0.5;
    for (int v = 0; v < out_h; ++v) {
        for (int u = 0; u < out_w; ++u) {
            double w = m[6] * u + m[7] * v + m[8];
            if (w == 0.0) continue;
            double sx = (m[0] * u + m[1] * v + m[2]) / w;
            double sy = (m[3] * u + m[4] * v + m[5]) / w;
            if (!(sx >= -0.5 && sx <= max_x && sy >= -0.5 && sy <= max_y)) continue;
            sx = std::clamp(sx, 0.0, static_cast<double>(img.width - 1));
            sy = std::clamp(sy, 0.0, static_cast<double>(img.height - 1));
            int x0 = static_cast<int>(std::floor(sx)), y0 = static_cast<int>(std::floor(sy));
            int x1 = std::min(x0 + 1, img.width - 1), y1 = std::min(y0 + 1, img.height - 1);
            double fx = sx - x0, fy = sy - y0;
            double top = img.at(x0, y0) * (1.0 - fx) + img.at(x1, y0) * fx;
            double bottom = img.at(x0, y1) * (1.0 - fx) + img.at(x1, y1) * fx;
            out.at(u, v) = clamp_to_u8(top * (1.0 - fy) + bottom * fy);
        }
    }
    return out;
}

/// Histogram specification: maps each source level v to the smallest
/// reference level r whose CDF reaches the source CDF at v.
inline GrayImage match_histograms(const GrayImage& src, const GrayImage& ref) {
    if (src.empty() || ref.empty()) throw std::invalid_argument("match_histograms: empty patch");
    std::array<std::uint64_t, 256> hs{}, hr{};
    for (auto v : src.data) ++hs[v];
    for (auto v : ref.data) ++hr[v];
    std::array<std::uint64_t, 256> cs{}, cr{};
    std::uint64_t as = 0, ar = 0;
    for (int i = 0; i < 256; ++i) {
        as += hs[i];
        ar += hr[i];
        cs[i] = as;
        cr[i] = ar;
    }
    const std::uint64_t ns = as, nr = ar;
    // cs[v]/ns <= cr[r]/nr  <=>  cs[v]*nr <= cr[r]*ns (exact in 64 bits for < 2^31 pixels)
    std::array<std::uint8_t, 256> lut{};
    int r = 0;
    for (int v = 0; v < 256; ++v) {
        while (r < 255 && cr[r] * ns < cs[v] * nr) ++r;
        lut[v] = static_cast<std::uint8_t>(r);
    }
    GrayImage out = src;
    for (auto& v : out.data) v = lut[v];
    return out;
}

}  // namespace provenance
