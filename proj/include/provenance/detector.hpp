#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "provenance/features.hpp"
#include "provenance/imaging.hpp"

namespace provenance {

struct DetectorConfig {
    std::size_t p = 5000;  // points kept per image
    std::size_t m = 2500;  // kept purely by response; the rest are spread out
    int octaves = 4;
    int layers = 4;
    int init_step = 1;  // sampling step of the first octave
    double hessian_threshold = 100.0;
    double overlap_factor = 3.0;  // disk radius = overlap_factor * scale

    void validate() const {
        if (p == 0 || m == 0 || m > p) throw std::invalid_argument("DetectorConfig: need 0 < m <= p");
        if (octaves < 1 || layers < 3) throw std::invalid_argument("DetectorConfig: need octaves >= 1, layers >= 3");
        if (init_step < 1) throw std::invalid_argument("DetectorConfig: init_step must be >= 1");
        if (!(overlap_factor > 0)) throw std::invalid_argument("DetectorConfig: overlap factor must be > 0");
    }

    bool distributed() const { return m < p; }

    static DetectorConfig surf2k() { return with_budget(2000, 2000); }
    static DetectorConfig surf5k() { return with_budget(5000, 5000); }
    static DetectorConfig dsurf() { return with_budget(5000, 2500); }

    static DetectorConfig with_budget(std::size_t p, std::size_t m) {
        DetectorConfig c;
        c.p = p;
        c.m = m;
        return c;
    }
};

namespace detail {

// Box-filter approximation of second-order Gaussian derivatives, one layer
// of the scale space sampled every `step` pixels.
struct ResponseLayer {
    int width = 0;
    int height = 0;
    int step = 1;
    int filter = 9;
    std::vector<float> det;  // 0 where the filter does not fit
    std::vector<std::uint8_t> valid;

    float at(int r, int c) const { return det[static_cast<std::size_t>(r) * width + c]; }
};

inline ResponseLayer build_response_layer(const IntegralImage& ii, int step, int filter) {
    ResponseLayer layer;
    layer.step = step;
    layer.filter = filter;
    layer.width = (ii.width + step - 1) / step;
    layer.height = (ii.height + step - 1) / step;
    layer.det.assign(static_cast<std::size_t>(layer.width) * layer.height, 0.f);
    layer.valid.assign(layer.det.size(), 0);

    const int b = (filter - 1) / 2;
    const int l = filter / 3;
    // Each lobe is normalised by its own area, so responses are in squared
    // grey-level units and a threshold of ~100 is the customary default.
    const double inv_lobe = 1.0 / (static_cast<double>(l) * (2 * l - 1));
    const double inv_quad = 1.0 / (static_cast<double>(l) * l);
    for (int ar = 0; ar < layer.height; ++ar) {
        const int r = ar * step;
        if (r - b < 0 || r + b >= ii.height) continue;
        for (int ac = 0; ac < layer.width; ++ac) {
            const int c = ac * step;
            if (c - b < 0 || c + b >= ii.width) continue;
            double dxx = box_sum(ii, c - b, r - l + 1, filter, 2 * l - 1) -
                         3.0 * box_sum(ii, c - l / 2, r - l + 1, l, 2 * l - 1);
            double dyy = box_sum(ii, c - l + 1, r - b, 2 * l - 1, filter) -
                         3.0 * box_sum(ii, c - l + 1, r - l / 2, 2 * l - 1, l);
            double dxy = box_sum(ii, c + 1, r - l, l, l) + box_sum(ii, c - l, r + 1, l, l) -
                         box_sum(ii, c - l, r - l, l, l) - box_sum(ii, c + 1, r + 1, l, l);
            dxx *= inv_lobe;
            dyy *= inv_lobe;
            dxy *= inv_quad;
            const std::size_t idx = static_cast<std::size_t>(ar) * layer.width + ac;
            layer.det[idx] = static_cast<float>(dxx * dyy - 0.81 * dxy * dxy);
            layer.valid[idx] = 1;
        }
    }
    return layer;
}

inline int filter_size(int octave, int layer) { return 3 * ((1 << (octave + 1)) * (layer + 1) + 1); }

inline bool is_local_max(const ResponseLayer& t, const ResponseLayer& m, const ResponseLayer& b, int r, int c) {
    const float v = m.at(r, c);
    for (int dr = -1; dr <= 1; ++dr) {
        for (int dc = -1; dc <= 1; ++dc) {
            if (t.at(r + dr, c + dc) >= v || b.at(r + dr, c + dc) >= v) return false;
            if ((dr != 0 || dc != 0) && m.at(r + dr, c + dc) >= v) return false;
        }
    }
    return true;
}

/// Quadratic fit of the response around (r, c) in (x, y, layer); false when
/// the extremum lies more than half a sample away.
inline bool interpolate_extremum(const ResponseLayer& t, const ResponseLayer& m, const ResponseLayer& b, int r, int c,
                                 InterestPoint& out) {
    const double v = m.at(r, c);
    const double dx = (m.at(r, c + 1) - m.at(r, c - 1)) / 2.0;
    const double dy = (m.at(r + 1, c) - m.at(r - 1, c)) / 2.0;
    const double ds = (t.at(r, c) - b.at(r, c)) / 2.0;
    const double dxx = m.at(r, c + 1) + m.at(r, c - 1) - 2 * v;
    const double dyy = m.at(r + 1, c) + m.at(r - 1, c) - 2 * v;
    const double dss = t.at(r, c) + b.at(r, c) - 2 * v;
    const double dxy = (m.at(r + 1, c + 1) - m.at(r + 1, c - 1) - m.at(r - 1, c + 1) + m.at(r - 1, c - 1)) / 4.0;
    const double dxs = (t.at(r, c + 1) - t.at(r, c - 1) - b.at(r, c + 1) + b.at(r, c - 1)) / 4.0;
    const double dys = (t.at(r + 1, c) - t.at(r - 1, c) - b.at(r + 1, c) + b.at(r - 1, c)) / 4.0;

    // Solve H * offset = -g by Cramer's rule (3x3, symmetric).
    const double det = dxx * (dyy * dss - dys * dys) - dxy * (dxy * dss - dys * dxs) + dxs * (dxy * dys - dyy * dxs);
    if (std::abs(det) < 1e-30) return false;
    const double gx = -dx, gy = -dy, gs = -ds;
    const double ox = (gx * (dyy * dss - dys * dys) - dxy * (gy * dss - dys * gs) + dxs * (gy * dys - dyy * gs)) / det;
    const double oy = (dxx * (gy * dss - dys * gs) - gx * (dxy * dss - dys * dxs) + dxs * (dxy * gs - gy * dxs)) / det;
    const double os = (dxx * (dyy * gs - gy * dys) - dxy * (dxy * gs - gy * dxs) + gx * (dxy * dys - dyy * dxs)) / det;
    if (std::abs(ox) >= 0.5 || std::abs(oy) >= 0.5 || std::abs(os) >= 0.5) return false;

    const int filter_step = m.filter - b.filter;
    out.x = static_cast<float>((c + ox) * m.step);
    out.y = static_cast<float>((r + oy) * m.step);
    out.scale = static_cast<float>(1.2 / 9.0 * (m.filter + os * filter_step));
    out.response = static_cast<float>(v);
    return true;
}

inline bool response_order(const InterestPoint& a, const InterestPoint& b) {
    if (a.response != b.response) return a.response > b.response;
    if (a.y != b.y) return a.y < b.y;
    if (a.x != b.x) return a.x < b.x;
    return a.scale < b.scale;
}

}  // namespace detail

/// Fast-Hessian detection: 3x3x3 scale-space maxima of the box-filter Hessian
/// determinant above the threshold, refined to sub-pixel/sub-scale accuracy.
/// Returned strongest first; not truncated (see select_distributed).
inline std::vector<InterestPoint> detect(const GrayImage& img, const DetectorConfig& cfg) {
    cfg.validate();
    std::vector<InterestPoint> points;
    const IntegralImage ii = integral_build(img);

    for (int o = 0; o < cfg.octaves; ++o) {
        const int step = cfg.init_step << o;
        if (detail::filter_size(o, cfg.layers - 1) > std::min(img.width, img.height)) break;
        std::vector<detail::ResponseLayer> layers;
        layers.reserve(static_cast<std::size_t>(cfg.layers));
        for (int l = 0; l < cfg.layers; ++l) layers.push_back(detail::build_response_layer(ii, step, detail::filter_size(o, l)));

        for (int l = 1; l + 1 < cfg.layers; ++l) {
            const auto& b = layers[l - 1];
            const auto& m = layers[l];
            const auto& t = layers[l + 1];
            for (int r = 1; r + 1 < m.height; ++r) {
                for (int c = 1; c + 1 < m.width; ++c) {
                    // The whole 3x3 neighbourhood must be covered by the largest filter.
                    if (!t.valid[static_cast<std::size_t>(r - 1) * t.width + c - 1] ||
                        !t.valid[static_cast<std::size_t>(r + 1) * t.width + c + 1])
                        continue;
                    const float v = m.at(r, c);
                    if (v < cfg.hessian_threshold) continue;
                    if (!detail::is_local_max(t, m, b, r, c)) continue;
                    InterestPoint p;
                    if (!detail::interpolate_extremum(t, m, b, r, c, p)) continue;
                    p.x = std::clamp(p.x, 0.f, std::nextafter(static_cast<float>(img.width), 0.f));
                    p.y = std::clamp(p.y, 0.f, std::nextafter(static_cast<float>(img.height), 0.f));
                    points.push_back(p);
                }
            }
        }
    }
    std::sort(points.begin(), points.end(), detail::response_order);
    return points;
}

namespace detail {

inline double gaussian(double dx, double dy, double sigma) {
    return std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma)) / (2.0 * std::numbers::pi * sigma * sigma);
}

inline int round_half_up(double v) { return static_cast<int>(std::floor(v + 0.5)); }

inline Descriptor64 describe_point(const IntegralImage& ii, const InterestPoint& p) {
    Descriptor64 desc{};
    const double s = p.scale;
    const int haar = std::max(2, 2 * round_half_up(s));
    const int half = haar / 2;
    const double sigma = 3.3 * s;
    std::size_t idx = 0;
    double norm2 = 0.0;
    for (int sub_y = 0; sub_y < 4; ++sub_y) {
        for (int sub_x = 0; sub_x < 4; ++sub_x) {
            double sdx = 0, sadx = 0, sdy = 0, sady = 0;
            for (int k = 0; k < 5; ++k) {
                for (int j = 0; j < 5; ++j) {
                    const double off_x = (sub_x * 5 + j - 9.5) * s;
                    const double off_y = (sub_y * 5 + k - 9.5) * s;
                    const int sx = round_half_up(p.x + off_x);
                    const int sy = round_half_up(p.y + off_y);
                    const double w = gaussian(off_x, off_y, sigma);
                    const double rx = box_sum_clipped(ii, sx, sy - half, half, haar) -
                                      box_sum_clipped(ii, sx - half, sy - half, half, haar);
                    const double ry = box_sum_clipped(ii, sx - half, sy, haar, half) -
                                      box_sum_clipped(ii, sx - half, sy - half, haar, half);
                    sdx += w * rx;
                    sdy += w * ry;
                    sadx += std::abs(w * rx);
                    sady += std::abs(w * ry);
                }
            }
            for (double v : {sdx, sadx, sdy, sady}) {
                desc[idx++] = static_cast<float>(v);
                norm2 += v * v;
            }
        }
    }
    const double norm = std::sqrt(norm2);
    if (norm < 1e-12) return Descriptor64{};
    for (float& v : desc) v = static_cast<float>(v / norm);
    return desc;
}

}  // namespace detail

/// Upright 64-d descriptors over a 20*scale window (4x4 subregions of 5x5
/// Haar samples). Points with no image support get an all-zero descriptor.
inline FeatureSet describe(const GrayImage& img, const std::vector<InterestPoint>& pts, ImageId image_id = 0) {
    FeatureSet fs;
    fs.image_id = image_id;
    fs.points = pts;
    fs.descriptors.reserve(pts.size());
    const IntegralImage ii = integral_build(img);
    for (const auto& p : pts) fs.descriptors.push_back(detail::describe_point(ii, p));
    return fs;
}

/// Distributed interest point selection. Keeps the m strongest points, then
/// adds lower-response points whose disks (radius overlap_factor * scale)
/// touch no already selected disk, until p points are chosen. If that pass
/// runs dry, the best skipped points fill the remaining slots.
inline std::vector<InterestPoint> select_distributed(std::vector<InterestPoint> pts, const DetectorConfig& cfg) {
    cfg.validate();
    std::stable_sort(pts.begin(), pts.end(), detail::response_order);
    if (pts.size() <= cfg.m || cfg.m == cfg.p) {
        pts.resize(std::min(pts.size(), cfg.p));
        return pts;
    }

    std::vector<InterestPoint> selected(pts.begin(), pts.begin() + static_cast<std::ptrdiff_t>(cfg.m));
    selected.reserve(cfg.p);

    // Uniform grid over disk bounding boxes.
    constexpr double kCell = 32.0;
    std::unordered_map<std::int64_t, std::vector<std::size_t>> grid;
    auto cell_key = [](int cx, int cy) { return (static_cast<std::int64_t>(cx) << 32) ^ static_cast<std::uint32_t>(cy); };
    auto cell_range = [&](const InterestPoint& p, double r) {
        return std::array<int, 4>{static_cast<int>(std::floor((p.x - r) / kCell)), static_cast<int>(std::floor((p.y - r) / kCell)),
                                  static_cast<int>(std::floor((p.x + r) / kCell)), static_cast<int>(std::floor((p.y + r) / kCell))};
    };
    auto insert = [&](std::size_t idx) {
        const auto& p = selected[idx];
        auto rg = cell_range(p, cfg.overlap_factor * p.scale);
        for (int cy = rg[1]; cy <= rg[3]; ++cy)
            for (int cx = rg[0]; cx <= rg[2]; ++cx) grid[cell_key(cx, cy)].push_back(idx);
    };
    auto overlaps = [&](const InterestPoint& p) {
        const double r = cfg.overlap_factor * p.scale;
        auto rg = cell_range(p, r);
        for (int cy = rg[1]; cy <= rg[3]; ++cy) {
            for (int cx = rg[0]; cx <= rg[2]; ++cx) {
                auto it = grid.find(cell_key(cx, cy));
                if (it == grid.end()) continue;
                for (std::size_t idx : it->second) {
                    const auto& q = selected[idx];
                    const double reach = r + cfg.overlap_factor * q.scale;
                    const double dx = p.x - q.x, dy = p.y - q.y;
                    if (dx * dx + dy * dy < reach * reach) return true;
                }
            }
        }
        return false;
    };
    for (std::size_t i = 0; i < selected.size(); ++i) insert(i);

    std::vector<std::size_t> skipped;
    std::size_t next = cfg.m;
    for (; next < pts.size() && selected.size() < cfg.p; ++next) {
        if (overlaps(pts[next])) {
            skipped.push_back(next);
            continue;
        }
        selected.push_back(pts[next]);
        insert(selected.size() - 1);
    }
    // Fill: skipped points in response order (they precede any unscanned ones).
    for (std::size_t k = 0; k < skipped.size() && selected.size() < cfg.p; ++k) selected.push_back(pts[skipped[k]]);
    return selected;
}

/// detect -> select_distributed -> describe.
inline FeatureSet extract_features(const GrayImage& img, const DetectorConfig& cfg, ImageId image_id = 0) {
    return describe(img, select_distributed(detect(img, cfg), cfg), image_id);
}

}  // namespace provenance
