#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

namespace provenance {

using RowMatrixF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct KMeansResult {
    RowMatrixF centroids;                // k x d
    std::vector<std::uint32_t> assign;   // per point
    double inertia = 0.0;                // sum of squared distances
};

/// Nearest centroid per row (ties to the lower index), with squared distances.
inline void assign_nearest(const RowMatrixF& x, const RowMatrixF& c, std::vector<std::uint32_t>& assign,
                           std::vector<float>& dist2) {
    const Eigen::Index n = x.rows(), k = c.rows();
    assign.assign(static_cast<std::size_t>(n), 0);
    dist2.assign(static_cast<std::size_t>(n), 0.f);
    const Eigen::VectorXf cn = c.rowwise().squaredNorm();
    constexpr Eigen::Index kBlock = 4096;
    RowMatrixF dots;
    for (Eigen::Index start = 0; start < n; start += kBlock) {
        const Eigen::Index rows = std::min(kBlock, n - start);
        dots.noalias() = x.middleRows(start, rows) * c.transpose();
        for (Eigen::Index i = 0; i < rows; ++i) {
            const float xn = x.row(start + i).squaredNorm();
            float best = std::numeric_limits<float>::infinity();
            std::uint32_t arg = 0;
            for (Eigen::Index j = 0; j < k; ++j) {
                const float d = xn - 2.f * dots(i, j) + cn(j);
                if (d < best) {
                    best = d;
                    arg = static_cast<std::uint32_t>(j);
                }
            }
            assign[static_cast<std::size_t>(start + i)] = arg;
            dist2[static_cast<std::size_t>(start + i)] = std::max(best, 0.f);
        }
    }
}

/// Lloyd's k-means. Initial centroids are `init` when given, otherwise k
/// distinct rows drawn with `rng`. An empty cluster is re-seeded from the
/// point currently farthest from its centroid.
inline KMeansResult kmeans(const RowMatrixF& x, int k, int iters, std::mt19937_64& rng, const RowMatrixF* init = nullptr) {
    const Eigen::Index n = x.rows();
    if (k < 1 || n < k) throw std::invalid_argument("kmeans: need at least k points");
    KMeansResult res;
    if (init != nullptr) {
        res.centroids = *init;
    } else {
        std::vector<std::uint32_t> order(static_cast<std::size_t>(n));
        std::iota(order.begin(), order.end(), 0u);
        for (int i = 0; i < k; ++i) {
            std::uniform_int_distribution<std::size_t> pick(static_cast<std::size_t>(i), order.size() - 1);
            std::swap(order[static_cast<std::size_t>(i)], order[pick(rng)]);
        }
        res.centroids.resize(k, x.cols());
        for (int i = 0; i < k; ++i) res.centroids.row(i) = x.row(order[static_cast<std::size_t>(i)]);
    }

    std::vector<float> dist2;
    for (int it = 0; it < std::max(iters, 1); ++it) {
        assign_nearest(x, res.centroids, res.assign, dist2);
        RowMatrixF sums = RowMatrixF::Zero(k, x.cols());
        std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
        for (Eigen::Index i = 0; i < n; ++i) {
            sums.row(res.assign[static_cast<std::size_t>(i)]) += x.row(i);
            ++counts[res.assign[static_cast<std::size_t>(i)]];
        }
        for (int j = 0; j < k; ++j) {
            if (counts[static_cast<std::size_t>(j)] > 0) {
                res.centroids.row(j) = sums.row(j) / static_cast<float>(counts[static_cast<std::size_t>(j)]);
                continue;
            }
            auto far = std::max_element(dist2.begin(), dist2.end()) - dist2.begin();
            res.centroids.row(j) = x.row(far);
            dist2[static_cast<std::size_t>(far)] = 0.f;
        }
    }
    assign_nearest(x, res.centroids, res.assign, dist2);
    res.inertia = std::accumulate(dist2.begin(), dist2.end(), 0.0);
    return res;
}

}  // namespace provenance
