#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <numbers>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "provenance/common.hpp"
#include "provenance/features.hpp"
#include "provenance/imaging.hpp"
#include "provenance/matching.hpp"

namespace provenance {

struct Match {
    std::uint32_t a = 0;  // index into A's points
    std::uint32_t b = 0;  // index into B's points
    float distance = 0.f;

    bool operator==(const Match&) const = default;
};

struct MatchConfig {
    double nndr_t = 0.8;
    double gc_epsilon = 5.0;
    std::size_t gc_trials = 512;
    std::size_t min_matches_for_homography = 4;
    std::uint32_t connect_threshold = 4;  // consistent matches that link a node during distractor avoidance
    std::size_t ransac_trials = 1000;
    std::uint64_t seed = 7;
    // Direction score: Normalized divides MI by the reference patch entropy,
    // Raw keeps plain MI in bits.
    enum class MiScore { Normalized, Raw } mi_score = MiScore::Normalized;

    void validate() const {
        if (!(nndr_t > 0.0 && nndr_t < 1.0)) throw std::invalid_argument("MatchConfig: nndr_t must be in (0,1)");
        if (!(gc_epsilon > 0.0)) throw std::invalid_argument("MatchConfig: gc_epsilon must be > 0");
        if (gc_trials < 1 || ransac_trials < 1) throw std::invalid_argument("MatchConfig: trial counts must be >= 1");
        if (min_matches_for_homography < 4) throw std::invalid_argument("MatchConfig: homography needs >= 4 matches");
        if (connect_threshold < 1) throw std::invalid_argument("MatchConfig: connect_threshold must be >= 1");
    }
};

/// Nearest B-descriptor for each A-descriptor, kept when d1 <= t * d2.
/// With a single B-descriptor every A-point keeps it.
inline std::vector<Match> nndr_match(const FeatureSet& a, const FeatureSet& b, const MatchConfig& cfg = {}) {
    std::vector<Match> out;
    const auto nn = two_nearest(a.descriptors, b.descriptors);
    for (std::size_t i = 0; i < nn.size(); ++i) {
        if (passes_ratio(nn[i], cfg.nndr_t)) out.push_back({static_cast<std::uint32_t>(i), nn[i].best, nn[i].d1});
    }
    return out;
}

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Visits index pairs (i < j) of n items: all of them when they fit in
/// `budget`, else `budget` random draws.
template <typename Fn>
void visit_pairs(std::size_t n, std::size_t budget, std::mt19937_64& rng, Fn&& fn) {
    const std::size_t total = n * (n - 1) / 2;
    if (total <= budget) {
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) fn(i, j);
        return;
    }
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    for (std::size_t t = 0; t < budget; ++t) {
        std::size_t i = pick(rng), j = pick(rng);
        while (j == i) j = pick(rng);
        fn(std::min(i, j), std::max(i, j));
    }
}

}  // namespace detail

/// Keeps the matches agreeing with the best similarity transform proposed by
/// a pair of matches: the segment p1p2 in A mapped onto q1q2 in B fixes
/// scale, rotation and translation. The best model has the most points
/// within gc_epsilon, ties going to the smaller mean residual.
inline std::vector<Match> geometric_consistency(const std::vector<Match>& matches, std::span<const InterestPoint> pa,
                                                std::span<const InterestPoint> pb, const MatchConfig& cfg = {},
                                                std::uint64_t seed_salt = 0) {
    if (matches.size() < 2) return matches;
    const std::size_t n = matches.size();
    std::vector<double> ax(n), ay(n), bx(n), by(n);
    for (std::size_t k = 0; k < n; ++k) {
        ax[k] = pa[matches[k].a].x;
        ay[k] = pa[matches[k].a].y;
        bx[k] = pb[matches[k].b].x;
        by[k] = pb[matches[k].b].y;
    }
    const double eps2 = cfg.gc_epsilon * cfg.gc_epsilon;
    std::size_t best_count = 0;
    double best_residual = kInf;
    std::array<double, 4> best_model{};  // c, s, tx, ty with x' = c*x - s*y + tx
    std::mt19937_64 rng(detail::splitmix64(cfg.seed ^ seed_salt));

    detail::visit_pairs(n, cfg.gc_trials, rng, [&](std::size_t i, std::size_t j) {
        const double vpx = ax[j] - ax[i], vpy = ay[j] - ay[i];
        const double vqx = bx[j] - bx[i], vqy = by[j] - by[i];
        const double lp2 = vpx * vpx + vpy * vpy;
        if (lp2 < 1e-12) return;
        // (c + i s) = vq / vp in complex form: scale l_q / l_p, angle alpha_q - alpha_p.
        const double c = (vqx * vpx + vqy * vpy) / lp2;
        const double s = (vqy * vpx - vqx * vpy) / lp2;
        if (c * c + s * s < 1e-12) return;
        const double tx = bx[i] - (c * ax[i] - s * ay[i]);
        const double ty = by[i] - (s * ax[i] + c * ay[i]);
        std::size_t count = 0;
        double residual = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            const double dx = c * ax[k] - s * ay[k] + tx - bx[k];
            const double dy = s * ax[k] + c * ay[k] + ty - by[k];
            const double d2 = dx * dx + dy * dy;
            if (d2 <= eps2) {
                ++count;
                residual += std::sqrt(d2);
            }
        }
        residual /= static_cast<double>(std::max<std::size_t>(count, 1));
        if (count > best_count || (count == best_count && residual < best_residual)) {
            best_count = count;
            best_residual = residual;
            best_model = {c, s, tx, ty};
        }
    });

    std::vector<Match> out;
    if (best_count == 0) return out;
    const auto [c, s, tx, ty] = best_model;
    for (std::size_t k = 0; k < n; ++k) {
        const double dx = c * ax[k] - s * ay[k] + tx - bx[k];
        const double dy = s * ax[k] + c * ay[k] + ty - by[k];
        if (dx * dx + dy * dy <= eps2) out.push_back(matches[k]);
    }
    return out;
}

struct GcmResult {
    std::uint32_t count = 0;
    double d = kInf;  // 1 / count, +inf when nothing matched
    std::vector<Match> matches;
};

inline GcmResult gcm_pair(const FeatureSet& a, const FeatureSet& b, const MatchConfig& cfg = {},
                          std::uint64_t seed_salt = 0) {
    GcmResult r;
    r.matches = geometric_consistency(nndr_match(a, b, cfg), a.points, b.points, cfg, seed_salt);
    r.count = static_cast<std::uint32_t>(r.matches.size());
    if (r.count > 0) r.d = 1.0 / r.count;
    return r;
}

// ---------------------------------------------------------------------------
// Homography estimation
// ---------------------------------------------------------------------------

class NoHomography : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct HomographyFit {
    Homography H;
    std::vector<std::size_t> inliers;  // indices into the input matches
    double rms = 0.0;                  // inlier reprojection RMS in pixels
};

namespace detail {

using Point2 = std::array<double, 2>;

// Translates the centroid to the origin and scales the mean distance to sqrt(2).
inline Eigen::Matrix3d normalizing_transform(std::span<const Point2> pts) {
    double mx = 0, my = 0;
    for (const auto& p : pts) {
        mx += p[0];
        my += p[1];
    }
    mx /= static_cast<double>(pts.size());
    my /= static_cast<double>(pts.size());
    double mean = 0;
    for (const auto& p : pts) mean += std::hypot(p[0] - mx, p[1] - my);
    mean /= static_cast<double>(pts.size());
    const double s = mean > 1e-12 ? std::numbers::sqrt2 / mean : 1.0;
    Eigen::Matrix3d t;
    t << s, 0, -s * mx, 0, s, -s * my, 0, 0, 1;
    return t;
}

inline bool to_homography(const Eigen::Matrix3d& full, Homography& out) {
    if (!full.allFinite() || std::abs(full(2, 2)) < 1e-12) return false;
    std::array<double, 9> m{};
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) m[static_cast<std::size_t>(r * 3 + c)] = full(r, c);
    out = Homography(m);
    return out.invertible();
}

/// Exact homography through 4 correspondences (h33 = 1), solved as an 8x8
/// system in normalized coordinates. False on degenerate samples.
inline bool dlt4(std::span<const Point2, 4> src, std::span<const Point2, 4> dst, Homography& out) {
    const Eigen::Matrix3d ts = normalizing_transform(src), td = normalizing_transform(dst);
    Eigen::Matrix<double, 8, 8> a;
    Eigen::Matrix<double, 8, 1> rhs;
    for (int k = 0; k < 4; ++k) {
        const Eigen::Vector3d p = ts * Eigen::Vector3d(src[k][0], src[k][1], 1.0);
        const Eigen::Vector3d q = td * Eigen::Vector3d(dst[k][0], dst[k][1], 1.0);
        const double x = p.x(), y = p.y(), u = q.x(), v = q.y();
        a.row(2 * k) << x, y, 1, 0, 0, 0, -u * x, -u * y;
        a.row(2 * k + 1) << 0, 0, 0, x, y, 1, -v * x, -v * y;
        rhs(2 * k) = u;
        rhs(2 * k + 1) = v;
    }
    Eigen::FullPivLU<Eigen::Matrix<double, 8, 8>> lu(a);
    if (lu.rank() < 8) return false;
    const Eigen::Matrix<double, 8, 1> h = lu.solve(rhs);
    Eigen::Matrix3d hn;
    hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), 1.0;
    return to_homography(td.inverse() * hn * ts, out);
}

/// Normalized direct linear transform, least squares over all points: the
/// smallest eigenvector of the 9x9 normal matrix.
inline bool dlt(std::span<const Point2> src, std::span<const Point2> dst, Homography& out) {
    const std::size_t n = src.size();
    if (n < 4) return false;
    const Eigen::Matrix3d ts = normalizing_transform(src), td = normalizing_transform(dst);
    Eigen::Matrix<double, 9, 9> ata = Eigen::Matrix<double, 9, 9>::Zero();
    Eigen::Matrix<double, 9, 1> r1, r2;
    for (std::size_t k = 0; k < n; ++k) {
        const Eigen::Vector3d p = ts * Eigen::Vector3d(src[k][0], src[k][1], 1.0);
        const Eigen::Vector3d q = td * Eigen::Vector3d(dst[k][0], dst[k][1], 1.0);
        const double x = p.x(), y = p.y(), u = q.x(), v = q.y();
        r1 << -x, -y, -1, 0, 0, 0, u * x, u * y, u;
        r2 << 0, 0, 0, -x, -y, -1, v * x, v * y, v;
        ata.noalias() += r1 * r1.transpose() + r2 * r2.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 9, 9>> eig(ata);
    if (eig.info() != Eigen::Success) return false;
    const Eigen::Matrix<double, 9, 1> h = eig.eigenvectors().col(0);
    Eigen::Matrix3d hn;
    hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
    return to_homography(td.inverse() * hn * ts, out);
}

inline double reprojection_error2(const Homography& h, const Point2& s, const Point2& d) {
    const auto p = h.apply(s[0], s[1]);
    const double dx = p[0] - d[0], dy = p[1] - d[1];
    const double e = dx * dx + dy * dy;
    return std::isfinite(e) ? e : kInf;
}

}  // namespace detail

/// Homography taking A-points onto B-points: RANSAC over 4-point DLT samples
/// with inlier radius gc_epsilon, then a least-squares refit on the inliers.
inline HomographyFit estimate_homography(const std::vector<Match>& matches, std::span<const InterestPoint> pa,
                                         std::span<const InterestPoint> pb, const MatchConfig& cfg = {},
                                         std::uint64_t seed_salt = 0) {
    const std::size_t n = matches.size();
    if (n < std::max<std::size_t>(4, cfg.min_matches_for_homography)) {
        throw NoHomography("estimate_homography: fewer than 4 matches");
    }
    std::vector<detail::Point2> src(n), dst(n);
    for (std::size_t k = 0; k < n; ++k) {
        src[k] = {pa[matches[k].a].x, pa[matches[k].a].y};
        dst[k] = {pb[matches[k].b].x, pb[matches[k].b].y};
    }
    const double eps2 = cfg.gc_epsilon * cfg.gc_epsilon;

    auto score = [&](const Homography& h, std::vector<std::size_t>& inl, double& sse) {
        inl.clear();
        sse = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            const double e = detail::reprojection_error2(h, src[k], dst[k]);
            if (e <= eps2) {
                inl.push_back(k);
                sse += e;
            }
        }
    };

    std::mt19937_64 rng(detail::splitmix64(cfg.seed ^ seed_salt ^ 0x5a5a5a5aULL));
    Homography best;
    std::vector<std::size_t> best_inl, inl;
    double best_sse = kInf, sse = 0.0;
    std::array<std::size_t, 4> idx{};
    std::array<detail::Point2, 4> s4{}, d4{};
    const std::size_t trials = n == 4 ? 1 : cfg.ransac_trials;
    std::size_t needed = trials;
    for (std::size_t t = 0; t < trials; ++t) {
        if (n == 4) {
            idx = {0, 1, 2, 3};
        } else {
            for (std::size_t k = 0; k < 4; ++k) {
                bool fresh;
                do {
                    idx[k] = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
                    fresh = std::find(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx[k]) ==
                            idx.begin() + static_cast<std::ptrdiff_t>(k);
                } while (!fresh);
            }
        }
        for (std::size_t k = 0; k < 4; ++k) {
            s4[k] = src[idx[k]];
            d4[k] = dst[idx[k]];
        }
        Homography h;
        if (!detail::dlt4(s4, d4, h)) continue;
        score(h, inl, sse);
        if (inl.size() > best_inl.size() || (inl.size() == best_inl.size() && sse < best_sse)) {
            best = h;
            best_inl = inl;
            best_sse = sse;
            // Stop once an all-inlier sample would have been drawn with 99.9% confidence.
            const double w = static_cast<double>(best_inl.size()) / static_cast<double>(n);
            const double miss = 1.0 - w * w * w * w;
            needed = miss <= 0.0 ? 0 : static_cast<std::size_t>(std::ceil(std::log(1e-3) / std::log(miss)));
        }
        if (t + 1 >= needed) break;
    }
    if (best_inl.size() < 4) throw NoHomography("estimate_homography: no model with 4 inliers");

    // Refit on the consensus set until it stops growing.
    for (int round = 0; round < 3; ++round) {
        std::vector<detail::Point2> si, di;
        for (auto k : best_inl) {
            si.push_back(src[k]);
            di.push_back(dst[k]);
        }
        Homography h;
        if (!detail::dlt(si, di, h)) break;
        score(h, inl, sse);
        if (inl.size() < best_inl.size() || (inl.size() == best_inl.size() && sse >= best_sse)) break;
        best = h;
        best_inl = inl;
        best_sse = sse;
    }
    HomographyFit fit;
    fit.H = best;
    fit.inliers = best_inl;
    fit.rms = std::sqrt(best_sse / static_cast<double>(best_inl.size()));
    return fit;
}

// ---------------------------------------------------------------------------
// Mutual information
// ---------------------------------------------------------------------------

/// Plug-in mutual information in bits from the 256x256 joint histogram of
/// corresponding pixels.
inline double mutual_information(const GrayImage& r1, const GrayImage& r2) {
    if (r1.width != r2.width || r1.height != r2.height) throw std::invalid_argument("mutual_information: size mismatch");
    if (r1.empty()) throw std::invalid_argument("mutual_information: empty patch");
    std::vector<std::uint32_t> joint(256 * 256, 0);
    std::array<std::uint64_t, 256> hx{}, hy{};
    for (std::size_t i = 0; i < r1.data.size(); ++i) {
        ++joint[static_cast<std::size_t>(r1.data[i]) * 256 + r2.data[i]];
        ++hx[r1.data[i]];
        ++hy[r2.data[i]];
    }
    const double n = static_cast<double>(r1.data.size());
    double mi = 0.0;
    for (std::size_t x = 0; x < 256; ++x) {
        if (hx[x] == 0) continue;
        for (std::size_t y = 0; y < 256; ++y) {
            const std::uint32_t h = joint[x * 256 + y];
            if (h == 0) continue;
            mi += (h / n) * std::log2(h * n / (static_cast<double>(hx[x]) * static_cast<double>(hy[y])));
        }
    }
    return std::max(mi, 0.0);
}

/// Shannon entropy of the grey-level histogram, in bits.
inline double entropy(const GrayImage& img) {
    std::array<std::uint64_t, 256> h{};
    for (auto v : img.data) ++h[v];
    const double n = static_cast<double>(img.data.size());
    double e = 0.0;
    for (auto c : h)
        if (c > 0) e -= (c / n) * std::log2(c / n);
    return e;
}

/// Registers Ii onto Ij with a homography from the consistent matches (A =
/// Ii's points, B = Ij's points), crops both to the bounding box of the
/// inlier points in Ij's frame, matches the warped patch's histogram to
/// Ij's patch and returns their MI. No homography means no evidence: 0.
inline double mi_pair(const GrayImage& ii, std::span<const InterestPoint> pi, const GrayImage& ij,
                      std::span<const InterestPoint> pj, const std::vector<Match>& matches, const MatchConfig& cfg = {},
                      std::uint64_t seed_salt = 0) {
    HomographyFit fit;
    try {
        fit = estimate_homography(matches, pi, pj, cfg, seed_salt);
    } catch (const NoHomography&) {
        return 0.0;
    }
    double x0 = kInf, y0 = kInf, x1 = -kInf, y1 = -kInf;
    for (auto k : fit.inliers) {
        const auto& p = pj[matches[k].b];
        x0 = std::min<double>(x0, p.x);
        y0 = std::min<double>(y0, p.y);
        x1 = std::max<double>(x1, p.x);
        y1 = std::max<double>(y1, p.y);
    }
    const int bx0 = std::clamp(static_cast<int>(std::floor(x0)), 0, ij.width - 1);
    const int by0 = std::clamp(static_cast<int>(std::floor(y0)), 0, ij.height - 1);
    const int bx1 = std::clamp(static_cast<int>(std::ceil(x1)), 0, ij.width - 1);
    const int by1 = std::clamp(static_cast<int>(std::ceil(y1)), 0, ij.height - 1);
    const int w = bx1 - bx0 + 1, h = by1 - by0 + 1;
    if (w < 2 || h < 2) return 0.0;
    GrayImage warped;
    try {
        warped = warp(ii, fit.H, ij.width, ij.height);
    } catch (const std::domain_error&) {
        return 0.0;
    }
    const GrayImage r1 = crop(warped, bx0, by0, w, h);
    const GrayImage r2 = crop(ij, bx0, by0, w, h);
    const double mi = mutual_information(match_histograms(r1, r2), r2);
    if (cfg.mi_score == MatchConfig::MiScore::Raw) return mi;
    const double ent = entropy(r2);
    return ent > 0.0 ? mi / ent : 0.0;
}

inline MatchConfig::MiScore parse_mi_score(const std::string& s) {
    if (s == "normalized") return MatchConfig::MiScore::Normalized;
    if (s == "raw") return MatchConfig::MiScore::Raw;
    throw std::invalid_argument("unknown mi_score: " + s + " (expected normalized or raw)");
}

inline const char* to_string(MatchConfig::MiScore m) {
    return m == MatchConfig::MiScore::Raw ? "raw" : "normalized";
}

// ---------------------------------------------------------------------------
// Pairwise matrices with distractor avoidance
// ---------------------------------------------------------------------------

struct PairwiseAnalysis {
    std::vector<ImageId> ids;  // node index -> image id
    std::size_t n = 0;
    std::size_t query = 0;
    std::vector<std::uint32_t> M;    // consistent match counts, symmetric
    std::vector<double> D_gcm;       // 1 / M, +inf where M = 0
    std::vector<double> D_mi;        // MI of i registered onto j (larger = more related)
    std::vector<std::uint8_t> active;
    std::size_t pair_computations = 0;

    std::uint32_t m(std::size_t i, std::size_t j) const { return M[i * n + j]; }
    double gcm(std::size_t i, std::size_t j) const { return D_gcm[i * n + j]; }
    double mi(std::size_t i, std::size_t j) const { return D_mi[i * n + j]; }
    bool is_active(std::size_t i) const { return active[i] != 0; }

    static PairwiseAnalysis empty(std::size_t n, std::size_t query) {
        PairwiseAnalysis a;
        a.n = n;
        a.query = query;
        a.ids.resize(n);
        for (std::size_t i = 0; i < n; ++i) a.ids[i] = i;
        a.M.assign(n * n, 0);
        a.D_gcm.assign(n * n, kInf);
        a.D_mi.assign(n * n, 0.0);
        a.active.assign(n, 0);
        return a;
    }

    void set_count(std::size_t i, std::size_t j, std::uint32_t c) {
        M[i * n + j] = M[j * n + i] = c;
        D_gcm[i * n + j] = D_gcm[j * n + i] = c > 0 ? 1.0 / c : kInf;
    }
};

/// Frontier expansion from the query. Each round evaluates frontier x
/// unconnected pairs; nodes reaching `threshold` matches join and form the
/// next frontier. Remaining active-active pairs are then filled in. Pairs
/// between two never-connected nodes are never evaluated.
/// `count(i, j)` is called with i < j, possibly concurrently.
template <typename CountFn>
PairwiseAnalysis expand_frontier(std::size_t n, std::size_t query, CountFn&& count, std::uint32_t threshold,
                                 std::size_t workers = 1) {
    if (query >= n) throw std::out_of_range("expand_frontier: query index out of range");
    PairwiseAnalysis a = PairwiseAnalysis::empty(n, query);
    std::vector<std::uint8_t> done(n * n, 0);
    auto run = [&](const std::vector<std::pair<std::size_t, std::size_t>>& pairs) {
        std::vector<std::uint32_t> counts(pairs.size());
        parallel_for(pairs.size(), workers, [&](std::size_t k) { counts[k] = count(pairs[k].first, pairs[k].second); });
        for (std::size_t k = 0; k < pairs.size(); ++k) {
            const auto [i, j] = pairs[k];
            a.set_count(i, j, counts[k]);
            done[i * n + j] = done[j * n + i] = 1;
        }
        a.pair_computations += pairs.size();
    };

    a.active[query] = 1;
    std::vector<std::size_t> frontier{query};
    while (!frontier.empty()) {
        std::vector<std::pair<std::size_t, std::size_t>> pairs;
        for (auto f : frontier)
            for (std::size_t u = 0; u < n; ++u)
                if (!a.active[u] && !done[f * n + u]) pairs.emplace_back(std::min(f, u), std::max(f, u));
        run(pairs);
        std::vector<std::size_t> next;
        for (std::size_t u = 0; u < n; ++u) {
            if (a.active[u]) continue;
            for (auto f : frontier) {
                if (a.m(f, u) >= threshold) {
                    next.push_back(u);
                    break;
                }
            }
        }
        for (auto u : next) a.active[u] = 1;
        frontier = std::move(next);
    }

    std::vector<std::pair<std::size_t, std::size_t>> rest;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (a.active[i] && a.active[j] && !done[i * n + j]) rest.emplace_back(i, j);
    run(rest);
    return a;
}

struct Candidate {
    ImageId id = 0;
    const GrayImage* image = nullptr;
    const FeatureSet* features = nullptr;
};

namespace detail {
inline std::uint64_t pair_salt(ImageId a, ImageId b) { return splitmix64(a * 0x100000001b3ULL ^ splitmix64(b)); }
}  // namespace detail

/// GCM counts with distractor avoidance, then MI in both directions for
/// every active pair with enough consistent matches for a homography.
inline PairwiseAnalysis build_matrices(std::size_t query, std::span<const Candidate> cands, const MatchConfig& cfg = {},
                                       std::size_t workers = 1) {
    cfg.validate();
    const std::size_t n = cands.size();
    std::vector<std::vector<Match>> kept(n * n);
    std::mutex kept_mutex;
    auto count = [&](std::size_t i, std::size_t j) {
        GcmResult r = gcm_pair(*cands[i].features, *cands[j].features, cfg, detail::pair_salt(cands[i].id, cands[j].id));
        std::lock_guard lock(kept_mutex);
        kept[i * n + j] = std::move(r.matches);
        return r.count;
    };
    PairwiseAnalysis a = expand_frontier(n, query, count, cfg.connect_threshold, workers);
    for (std::size_t i = 0; i < n; ++i) a.ids[i] = cands[i].id;

    std::vector<std::pair<std::size_t, std::size_t>> directed;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (a.active[i] && a.active[j] && a.m(i, j) >= cfg.min_matches_for_homography) {
                directed.emplace_back(i, j);
                directed.emplace_back(j, i);
            }
    std::vector<double> values(directed.size());
    parallel_for(directed.size(), workers, [&](std::size_t k) {
        const auto [from, to] = directed[k];
        std::vector<Match> ms = kept[std::min(from, to) * n + std::max(from, to)];
        if (from > to) {
            for (auto& m : ms) std::swap(m.a, m.b);
        }
        values[k] = mi_pair(*cands[from].image, cands[from].features->points, *cands[to].image,
                            cands[to].features->points, ms, cfg, detail::pair_salt(cands[from].id, cands[to].id));
    });
    for (std::size_t k = 0; k < directed.size(); ++k) a.D_mi[directed[k].first * n + directed[k].second] = values[k];
    return a;
}

/// Writes M.csv, D_gcm.csv and D_mi.csv (header row and column of image ids).
inline void dump_matrices(const PairwiseAnalysis& a, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    auto dump = [&](const char* name, auto&& value) {
        std::ofstream out(dir / name);
        if (!out) throw std::runtime_error("dump_matrices: cannot write " + (dir / name).string());
        out << "id";
        for (auto id : a.ids) out << ',' << id;
        out << '\n' << std::setprecision(9);
        for (std::size_t i = 0; i < a.n; ++i) {
            out << a.ids[i];
            for (std::size_t j = 0; j < a.n; ++j) out << ',' << value(i, j);
            out << '\n';
        }
    };
    dump("M.csv", [&](std::size_t i, std::size_t j) { return a.m(i, j); });
    dump("D_gcm.csv", [&](std::size_t i, std::size_t j) { return a.gcm(i, j); });
    dump("D_mi.csv", [&](std::size_t i, std::size_t j) { return a.mi(i, j); });
}

}  // namespace provenance
