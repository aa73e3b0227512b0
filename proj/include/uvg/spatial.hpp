// Copyright Contributors to the uvg Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "uvg/core.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

namespace uvg {

struct Neighbor {
    int index      = -1;
    double dist_sq = std::numeric_limits<double>::infinity();
};

namespace detail {

inline bool neighbor_less(const Neighbor &a, const Neighbor &b) {
    return a.dist_sq < b.dist_sq || (a.dist_sq == b.dist_sq && a.index < b.index);
}

/// Squared distance between a query expressed as origin + offset and a center.
/// Every KNN path and the renderer use this exact expression so that results
/// do not depend on where the world origin sits.
inline double relative_dist_sq(const Vec3 &origin, const Vec3 &offset, const Vec3 &center) {
    return (offset - (center - origin)).squaredNorm();
}

/// Inserts into a list kept sorted by (distance, index), truncated to `k`.
inline void push_candidate(std::span<Neighbor> best, int &count, int k, Neighbor n) {
    if (count == k && !neighbor_less(n, best[k - 1])) {
        return;
    }
    int pos = count < k ? count++ : k - 1;
    while (pos > 0 && neighbor_less(n, best[pos - 1])) {
        best[pos] = best[pos - 1];
        --pos;
    }
    best[pos] = n;
}

} // namespace detail

/// Uniform grid over the Gaussian centers. Cells are stored densely over the
/// bounding box of the centers; each cell lists texel indices in ascending order.
class UniformGridIndex {
  public:
    UniformGridIndex() = default;

    UniformGridIndex(std::span<const Vec3> centers, double cell_size) : cell_size_(cell_size) {
        detail::require(std::isfinite(cell_size) && cell_size > 0.0,
                        "build_index: cell size must be positive");
        detail::require(!centers.empty(), "build_index: no centers");
        centers_.assign(centers.begin(), centers.end());
        lo_ = Vec3::Constant(std::numeric_limits<double>::infinity());
        hi_ = -lo_;
        for (std::size_t i = 0; i < centers_.size(); ++i) {
            detail::require(centers_[i].allFinite(),
                            "build_index: non-finite center at texel " + std::to_string(i));
            lo_ = lo_.cwiseMin(centers_[i]);
            hi_ = hi_.cwiseMax(centers_[i]);
        }
        for (int a = 0; a < 3; ++a) {
            dims_[a] = static_cast<int>(std::floor((hi_[a] - lo_[a]) / cell_size_)) + 1;
        }
        const std::size_t ncells = static_cast<std::size_t>(dims_[0]) * dims_[1] * dims_[2];
        detail::require(ncells <= (std::size_t{1} << 26), "build_index: cell size too small for scene");

        cell_of_.resize(centers_.size());
        std::vector<std::uint32_t> counts(ncells + 1, 0);
        for (std::size_t i = 0; i < centers_.size(); ++i) {
            cell_of_[i] = flat(cell_coord(centers_[i]));
            ++counts[cell_of_[i] + 1];
        }
        for (std::size_t c = 0; c < ncells; ++c) {
            counts[c + 1] += counts[c];
        }
        start_ = counts;
        items_.resize(centers_.size());
        std::vector<std::uint32_t> fill(start_.begin(), start_.end() - 1);
        for (std::size_t i = 0; i < centers_.size(); ++i) {
            items_[fill[cell_of_[i]]++] = static_cast<int>(i);
        }
    }

    std::size_t size() const { return centers_.size(); }
    double cell_size() const { return cell_size_; }
    const Vec3 &lower() const { return lo_; }
    const Vec3 &upper() const { return hi_; }
    const std::vector<Vec3> &centers() const { return centers_; }

    std::size_t occupied_cells() const {
        std::size_t n = 0;
        for (std::size_t c = 0; c + 1 < start_.size(); ++c) {
            n += start_[c + 1] > start_[c];
        }
        return n;
    }

    /// Flat cell id holding texel `i`.
    std::size_t cell_of(std::size_t i) const { return cell_of_[i]; }

    std::span<const int> cell_items(std::size_t cell) const {
        return std::span<const int>(items_).subspan(start_[cell], start_[cell + 1] - start_[cell]);
    }

    /// K nearest centers to the point origin + offset, written to `out` sorted
    /// by ascending distance with ties broken by ascending texel index.
    /// Returns the number written (min(K, N)).
    int query_into(const Vec3 &origin, const Vec3 &offset, int k, std::span<Neighbor> out) const {
        k = std::min<int>(k, static_cast<int>(centers_.size()));
        const Vec3 q = origin + offset;
        std::array<long, 3> qc{};
        long r0 = 0;
        for (int a = 0; a < 3; ++a) {
            const double c = std::floor((q[a] - lo_[a]) / cell_size_);
            qc[a]          = static_cast<long>(std::clamp(c, -1e9, 1e9));
            r0 = std::max(r0, std::max(-qc[a], qc[a] - (dims_[a] - 1)));
        }
        // The query position used for cell bookkeeping may differ from the
        // relative-frame point by rounding; keep the termination bound conservative.
        const double slack = 1e-9 * (q.cwiseAbs().maxCoeff() + origin.cwiseAbs().maxCoeff() + cell_size_);

        int count = 0;
        for (long r = r0;; ++r) {
            visit_shell(qc, r, [&](std::size_t cell) {
                for (int idx : cell_items(cell)) {
                    detail::push_candidate(
                        out, count, k,
                        {idx, detail::relative_dist_sq(origin, offset, centers_[idx])});
                }
            });
            bool covers = true;
            double bound = std::numeric_limits<double>::infinity();
            for (int a = 0; a < 3; ++a) {
                covers = covers && qc[a] - r <= 0 && qc[a] + r >= dims_[a] - 1;
                const double lo_face = lo_[a] + static_cast<double>(qc[a] - r) * cell_size_;
                const double hi_face = lo_[a] + static_cast<double>(qc[a] + r + 1) * cell_size_;
                bound = std::min(bound, std::min(q[a] - lo_face, hi_face - q[a]));
            }
            if (covers) {
                break;
            }
            if (count == k) {
                const double b = bound - slack;
                if (b > 0.0 && b * b > out[k - 1].dist_sq) {
                    break;
                }
            }
        }
        return count;
    }

    std::vector<Neighbor> query(const Vec3 &origin, const Vec3 &offset, int k) const {
        detail::require(k >= 1 && static_cast<std::size_t>(k) <= centers_.size(),
                        "knn_query: K must be in [1, N]");
        std::vector<Neighbor> out(k);
        out.resize(query_into(origin, offset, k, out));
        return out;
    }

  private:
    std::array<long, 3> cell_coord(const Vec3 &p) const {
        std::array<long, 3> c{};
        for (int a = 0; a < 3; ++a) {
            c[a] = std::clamp(static_cast<long>(std::floor((p[a] - lo_[a]) / cell_size_)), 0L,
                              static_cast<long>(dims_[a] - 1));
        }
        return c;
    }

    std::size_t flat(const std::array<long, 3> &c) const {
        return (static_cast<std::size_t>(c[2]) * dims_[1] + c[1]) * dims_[0] + c[0];
    }

    /// Calls fn for every in-grid cell at Chebyshev distance exactly r from qc.
    template <typename Fn>
    void visit_shell(const std::array<long, 3> &qc, long r, Fn &&fn) const {
        auto lo = [&](int a) { return std::max(qc[a] - r, 0L); };
        auto hi = [&](int a) { return std::min(qc[a] + r, static_cast<long>(dims_[a] - 1)); };
        for (long z = lo(2); z <= hi(2); ++z) {
            const bool zedge = std::abs(z - qc[2]) == r;
            for (long y = lo(1); y <= hi(1); ++y) {
                const bool yedge = zedge || std::abs(y - qc[1]) == r;
                if (yedge) {
                    for (long x = lo(0); x <= hi(0); ++x) {
                        fn(flat({x, y, z}));
                    }
                } else {
                    for (long x : {qc[0] - r, qc[0] + r}) {
                        if (x >= 0 && x < dims_[0]) {
                            fn(flat({x, y, z}));
                        }
                        if (r == 0) {
                            break;
                        }
                    }
                }
            }
        }
    }

    double cell_size_ = 1.0;
    Vec3 lo_          = Vec3::Zero();
    Vec3 hi_          = Vec3::Zero();
    std::array<int, 3> dims_{1, 1, 1};
    std::vector<Vec3> centers_;
    std::vector<std::size_t> cell_of_;
    std::vector<std::uint32_t> start_;
    std::vector<int> items_;
};

inline UniformGridIndex build_index(const UVAvatar &avatar, double cell_size) {
    return UniformGridIndex(avatar.centers, cell_size);
}

/// Twice the median nearest-neighbor spacing of the centers (brute force).
inline double suggested_cell_size(std::span<const Vec3> centers) {
    if (centers.size() < 2) {
        return 1.0;
    }
    std::vector<double> nn(centers.size(), std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < centers.size(); ++i) {
        for (std::size_t j = 0; j < centers.size(); ++j) {
            if (i != j) {
                nn[i] = std::min(nn[i], (centers[i] - centers[j]).squaredNorm());
            }
        }
    }
    auto mid = nn.begin() + static_cast<std::ptrdiff_t>(nn.size() / 2);
    std::nth_element(nn.begin(), mid, nn.end());
    const double spacing = std::sqrt(*mid);
    return spacing > 0.0 ? 2.0 * spacing : 1.0;
}

inline UniformGridIndex build_index(const UVAvatar &avatar) {
    return build_index(avatar, suggested_cell_size(avatar.centers));
}

inline std::vector<Neighbor> knn_query(const UniformGridIndex &index, const Vec3 &x, int k) {
    return index.query(Vec3::Zero(), x, k);
}

/// Exhaustive K-nearest scan; the reference the grid index is tested against.
inline std::vector<Neighbor> brute_force_knn(std::span<const Vec3> centers, const Vec3 &origin,
                                             const Vec3 &offset, int k) {
    detail::require(k >= 1 && static_cast<std::size_t>(k) <= centers.size(),
                    "brute_force_knn: K must be in [1, N]");
    std::vector<Neighbor> all(centers.size());
    for (std::size_t i = 0; i < centers.size(); ++i) {
        all[i] = {static_cast<int>(i), detail::relative_dist_sq(origin, offset, centers[i])};
    }
    std::partial_sort(all.begin(), all.begin() + k, all.end(), detail::neighbor_less);
    all.resize(k);
    return all;
}

inline std::vector<Neighbor> brute_force_knn(const UVAvatar &avatar, const Vec3 &x, int k) {
    return brute_force_knn(avatar.centers, Vec3::Zero(), x, k);
}

} // namespace uvg
