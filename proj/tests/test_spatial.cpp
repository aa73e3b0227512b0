// Copyright Contributors to the uvg Project
// SPDX-License-Identifier: Apache-2.0

#include "uvg/spatial.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <random>

using namespace uvg;

namespace {

UVAvatar line_avatar(std::vector<Vec3> centers) {
    UVAvatar av(1, int(centers.size()), 1, 8);
    av.centers = centers;
    av.anchors = centers;
    return av;
}

// Full sort by (distance, index): the tie rule written out independently.
std::vector<int> oracle_knn(const std::vector<Vec3> &c, const Vec3 &x, int k) {
    std::vector<std::pair<double, int>> d;
    for (std::size_t i = 0; i < c.size(); ++i) {
        const Vec3 diff = x - c[i];
        d.push_back({diff.dot(diff), int(i)});
    }
    std::sort(d.begin(), d.end());
    std::vector<int> out;
    for (int i = 0; i < k; ++i) out.push_back(d[i].second);
    return out;
}

std::vector<int> indices(const std::vector<Neighbor> &n) {
    std::vector<int> out;
    for (const auto &x : n) out.push_back(x.index);
    return out;
}

} // namespace

TEST(Index, SingleGaussianOneCell) {
    const UVAvatar av = line_avatar({Vec3(0.3, 0.2, 0.1)});
    const auto idx    = build_index(av, 0.5);
    EXPECT_EQ(idx.occupied_cells(), 1u);
    EXPECT_EQ(idx.size(), 1u);
    EXPECT_EQ(indices(knn_query(idx, Vec3(4, 4, 4), 1)), std::vector<int>{0});
}

TEST(Index, IndexesAll1024) {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-1, 1);
    UVAvatar av(32, 32, 1, 8);
    for (auto &c : av.centers) c = Vec3(u(rng), u(rng), u(rng));
    const auto idx = build_index(av);
    EXPECT_EQ(idx.size(), 1024u);
    std::vector<int> seen(1024, 0);
    for (const auto &n : knn_query(idx, Vec3::Zero(), 1024)) ++seen[n.index];
    for (int s : seen) EXPECT_EQ(s, 1);
}

TEST(Index, RebuildAfterMove) {
    std::vector<Vec3> c = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(2, 0, 0)};
    UVAvatar av         = line_avatar(c);
    const auto before   = build_index(av, 0.5);
    av.centers[1]       = Vec3(5, 0, 0);
    const auto after    = build_index(av, 0.5);
    EXPECT_EQ(indices(knn_query(before, Vec3(1, 0, 0), 1)), std::vector<int>{1});
    EXPECT_EQ(indices(knn_query(after, Vec3(5, 0, 0), 1)), std::vector<int>{1});
    EXPECT_EQ(indices(knn_query(after, Vec3(1, 0, 0), 1)), std::vector<int>{0}); // tie 0 vs 2 -> lower index
}

TEST(Index, NonFiniteCenterRejected) {
    UVAvatar av   = line_avatar({Vec3(0, 0, 0), Vec3(1, 0, 0)});
    av.centers[1] = Vec3(std::nan(""), 0, 0);
    EXPECT_THROW(build_index(av, 0.5), std::invalid_argument);
    EXPECT_THROW(build_index(line_avatar({Vec3(0, 0, 0)}), 0.0), std::invalid_argument);
}

TEST(Knn, LineExample) {
    const UVAvatar av = line_avatar({Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(2, 0, 0)});
    const auto idx    = build_index(av, 0.7);
    EXPECT_EQ(indices(knn_query(idx, Vec3(0.1, 0, 0), 2)), (std::vector<int>{0, 1}));
}

TEST(Knn, KEqualsNSortedByDistance) {
    const UVAvatar av = line_avatar({Vec3(2, 0, 0), Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(-3, 0, 0)});
    const auto idx    = build_index(av, 1.0);
    EXPECT_EQ(indices(knn_query(idx, Vec3(0.4, 0, 0), 4)), (std::vector<int>{1, 2, 0, 3}));
    EXPECT_THROW(knn_query(idx, Vec3::Zero(), 5), std::invalid_argument);
    EXPECT_THROW(brute_force_knn(av, Vec3::Zero(), 5), std::invalid_argument);
}

TEST(BruteForce, Examples) {
    EXPECT_EQ(indices(brute_force_knn(line_avatar({Vec3(1, 2, 3)}), Vec3::Zero(), 1)), std::vector<int>{0});
    const UVAvatar dup = line_avatar({Vec3(1, 0, 0), Vec3(0, 0, 0), Vec3(1, 0, 0)});
    EXPECT_EQ(indices(brute_force_knn(dup, Vec3(1, 0, 0), 2)), (std::vector<int>{0, 2}));
    const auto at = brute_force_knn(dup, Vec3(0, 0, 0), 1);
    EXPECT_EQ(at[0].index, 1);
    EXPECT_EQ(at[0].dist_sq, 0.0);
}

TEST(Knn, MatchesOracleWithTiesAndMonotone) {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(-1, 1);
    std::uniform_int_distribution<int> lat(-3, 3), kd(1, 12);
    for (int scene = 0; scene < 10; ++scene) {
        std::vector<Vec3> c(200);
        for (std::size_t i = 0; i < c.size(); ++i)
            c[i] = i % 3 == 0 ? Vec3(lat(rng), lat(rng), lat(rng)) * 0.25 : Vec3(u(rng), u(rng), u(rng));
        const UniformGridIndex idx(c, scene % 2 ? 0.05 : suggested_cell_size(c));
        for (int q = 0; q < 100; ++q) {
            const Vec3 x   = q % 3 == 0 ? Vec3(lat(rng), lat(rng), lat(rng)) * 0.125 : Vec3(2 * u(rng), u(rng), u(rng));
            const int k    = kd(rng);
            const auto got = idx.query(Vec3::Zero(), x, k);
            EXPECT_EQ(indices(got), oracle_knn(c, x, k));
            for (std::size_t j = 1; j < got.size(); ++j) EXPECT_LE(got[j - 1].dist_sq, got[j].dist_sq);
        }
    }
}

TEST(Knn, OriginOffsetFormIsTranslationInvariant) {
    std::vector<Vec3> c = {Vec3(0.25, 0.5, 0), Vec3(-0.5, 0.125, 0.25), Vec3(0.75, -0.25, 0.5)};
    const Vec3 shift(8, -16, 4);
    std::vector<Vec3> moved;
    for (const auto &x : c) moved.push_back(x + shift);
    const UniformGridIndex a(c, 0.5), b(moved, 0.5);
    const Vec3 origin(0.5, 0.5, -1), off(0.1, -0.3, 1.2);
    const auto ra = a.query(origin, off, 3), rb = b.query(origin + shift, off, 3);
    for (int i = 0; i < 3; ++i) {
        EXPECT_EQ(ra[i].index, rb[i].index);
        EXPECT_EQ(ra[i].dist_sq, rb[i].dist_sq);
    }
}
