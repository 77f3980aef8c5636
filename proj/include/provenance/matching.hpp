#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "provenance/features.hpp"
#include "provenance/kmeans.hpp"

namespace provenance {

/// Best and second-best neighbour of one query descriptor.
struct TwoNearest {
    std::uint32_t best = 0;
    float d1 = std::numeric_limits<float>::infinity();
    float d2 = std::numeric_limits<float>::infinity();
};

/// Lowe ratio test: keep iff d1 / d2 <= t. A missing second neighbour
/// (d2 = +inf) always passes; d1 = d2 = 0 is ambiguous and fails.
inline bool passes_ratio(const TwoNearest& nn, double t) {
    if (std::isinf(nn.d1)) return false;
    if (std::isinf(nn.d2)) return true;
    if (nn.d2 <= 0.f) return false;
    return static_cast<double>(nn.d1) <= t * static_cast<double>(nn.d2);
}

namespace detail {

inline RowMatrixF to_matrix(std::span<const Descriptor64> d) {
    RowMatrixF m(static_cast<Eigen::Index>(d.size()), static_cast<Eigen::Index>(kDescriptorDim));
    for (std::size_t i = 0; i < d.size(); ++i)
        for (std::size_t j = 0; j < kDescriptorDim; ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = d[i][j];
    return m;
}

inline void update(TwoNearest& nn, std::uint32_t idx, float d) {
    if (d < nn.d1) {
        nn.d2 = nn.d1;
        nn.d1 = d;
        nn.best = idx;
    } else if (d < nn.d2) {
        nn.d2 = d;
    }
}

}  // namespace detail

/// Two nearest neighbours (Euclidean) in both directions between A and B,
/// from one blocked distance-matrix pass. Ties resolve to the lower index.
struct BidirectionalNearest {
    std::vector<TwoNearest> a_to_b;
    std::vector<TwoNearest> b_to_a;
};

inline BidirectionalNearest two_nearest_both(std::span<const Descriptor64> a, std::span<const Descriptor64> b) {
    BidirectionalNearest out;
    out.a_to_b.resize(a.size());
    out.b_to_a.resize(b.size());
    if (a.empty() || b.empty()) return out;
    const RowMatrixF ma = detail::to_matrix(a);
    const RowMatrixF mb = detail::to_matrix(b);
    const Eigen::VectorXf na = ma.rowwise().squaredNorm();
    const Eigen::VectorXf nb = mb.rowwise().squaredNorm();
    constexpr Eigen::Index kBlock = 1024;
    RowMatrixF dots;
    for (Eigen::Index start = 0; start < ma.rows(); start += kBlock) {
        const Eigen::Index rows = std::min(kBlock, ma.rows() - start);
        dots.noalias() = ma.middleRows(start, rows) * mb.transpose();
        for (Eigen::Index i = 0; i < rows; ++i) {
            auto& row_nn = out.a_to_b[static_cast<std::size_t>(start + i)];
            const float ni = na(start + i);
            for (Eigen::Index j = 0; j < mb.rows(); ++j) {
                const float d = std::sqrt(std::max(0.f, ni + nb(j) - 2.f * dots(i, j)));
                detail::update(row_nn, static_cast<std::uint32_t>(j), d);
                detail::update(out.b_to_a[static_cast<std::size_t>(j)], static_cast<std::uint32_t>(start + i), d);
            }
        }
    }
    return out;
}

inline std::vector<TwoNearest> two_nearest(std::span<const Descriptor64> a, std::span<const Descriptor64> b) {
    return two_nearest_both(a, b).a_to_b;
}

}  // namespace provenance
