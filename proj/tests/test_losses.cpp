// Copyright Contributors to the uvg Project
// SPDX-License-Identifier: Apache-2.0

#include "uvg/losses.hpp"
#include "uvg/optim.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace uvg;

namespace {

UVAvatar grid(int h, int w) {
    UVAvatar av(h, w, 1, 8);
    for (auto &r : av.radii) r = Vec3::Zero();
    return av;
}

double radius_for(double g) { return std::sqrt(1.0 / (2.0 * std::log(5.0 / g))); }

} // namespace

TEST(L1, Examples) {
    const std::vector<double> z(8, 0.0), o(8, 1.0);
    EXPECT_EQ(l1_loss(z, z), 0.0);
    EXPECT_EQ(l1_loss(z, o), 1.0);
    std::vector<double> h = z;
    for (int i = 0; i < 4; ++i) h[i] = 0.5;
    EXPECT_EQ(l1_loss(h, z), 0.25);
    EXPECT_THROW(l1_loss(z, std::vector<double>(7, 0.0)), std::invalid_argument);
}

TEST(Depth, Examples) {
    const std::vector<double> d = {1, 2, 3, 4}, a = {1, 1, 0, 1};
    EXPECT_EQ(depth_loss(d, d, a).value, 0.0);
    const std::vector<double> off = {1.5, 2.5, 9, 4.5};
    EXPECT_EQ(depth_loss(off, d, a).value, 0.25);
    const auto e = depth_loss(off, d, std::vector<double>(4, 0.0));
    EXPECT_EQ(e.value, 0.0);
    EXPECT_TRUE(e.empty_mask);
    EXPECT_FALSE(depth_loss(off, d, a).empty_mask);
}

TEST(Silhouette, Examples) {
    const std::vector<double> one(6, 1.0), zero(6, 0.0), m = {0, 1, 0.5, 1, 0, 0};
    EXPECT_EQ(silhouette_loss(m, m), 0.0);
    EXPECT_EQ(silhouette_loss(one, zero), 1.0);
    EXPECT_EQ(silhouette_loss(one, zero, 2.5), 2.5);
    EXPECT_EQ(silhouette_loss(one, zero, 0.0), 0.0);
}

TEST(Coverage, ArithmeticExample) {
    UVAvatar av(1, 3, 1, 8);
    av.radii = {Vec3::Constant(radius_for(0.1)), Vec3::Constant(radius_for(0.2)), Vec3::Constant(radius_for(0.3))};
    const std::vector<Vec3> pts = {Vec3(1, 0, 0)};
    const auto idx = build_index(av, 1.0);
    EXPECT_NEAR(coverage_loss(av, pts, RenderConfig{}, idx, 0.001), 2e-4, 1e-15);
    RenderConfig twice;
    twice.eta = 10.0;
    EXPECT_NEAR(coverage_loss(av, pts, twice, idx, 0.001), 4e-4, 1e-15);
    const std::vector<Vec3> far = {Vec3(100, 0, 0)};
    EXPECT_NEAR(coverage_loss(av, far, RenderConfig{}, idx, 0.001), 0.0, 1e-300);
}

TEST(Volume, Examples) {
    UVAvatar av(1, 1, 1, 8);
    av.radii[0] = Vec3(1, 1, 1);
    EXPECT_NEAR(volume_loss(av, 1.0), 4.18879, 1e-5);
    const double base = volume_loss(av, 1.0);
    av.radii[0]       = Vec3(2, 1, 1);
    EXPECT_NEAR(volume_loss(av, 1.0), 2 * base, 1e-15);
    av.radii[0] = Vec3::Zero();
    EXPECT_EQ(volume_loss(av, 1.0), 0.0);
}

TEST(Tv, Examples) {
    UVAvatar c = grid(3, 4);
    EXPECT_EQ(tv_loss(c, 0.1), 0.0);
    UVAvatar two   = grid(2, 1);
    two.centers[1] = Vec3(1, 0, 0);
    EXPECT_NEAR(tv_loss(two, 0.1), 0.05, 1e-16);
    // constant rows: only vertical differences would be nonzero; permuting
    // rows changes them but horizontal terms stay 0
    UVAvatar rows = grid(3, 4);
    for (int h = 0; h < 3; ++h)
        for (int w = 0; w < 4; ++w) rows.centers[h * 4 + w] = Vec3(h * h, 0, 0);
    // vertical |1-0|+|4-1| per column = 4, 4 columns, N=12
    EXPECT_NEAR(tv_loss(rows, 1.0), 16.0 / 12.0, 1e-15);
    UVAvatar cols = grid(3, 4);
    for (int h = 0; h < 3; ++h)
        for (int w = 0; w < 4; ++w) cols.centers[h * 4 + w] = Vec3(5, 0, 0);
    EXPECT_EQ(tv_loss(cols, 1.0), 0.0);
}

TEST(Mesh, Examples) {
    UVAvatar av = grid(2, 2);
    EXPECT_EQ(mesh_loss(av, 0.01), 0.0);
    for (auto &c : av.centers) c += Vec3(0.1, 0, 0);
    EXPECT_NEAR(mesh_loss(av, 0.01), 1e-4, 1e-17);
    UVAvatar one   = grid(2, 2);
    one.centers[3] = Vec3(0, 0.5, 0);
    EXPECT_NEAR(mesh_loss(one, 0.01), 0.01 * 0.25 / 4, 1e-18);
}

TEST(Code, Examples) {
    std::vector<double> z(512, 0.0);
    EXPECT_EQ(code_loss(z), 0.0);
    z[0] = 0.6;
    z[1] = 0.8;
    EXPECT_NEAR(code_loss(z, 1e-4, 1.0), 1e-4, 1e-18);
    for (double &v : z) v *= 2;
    EXPECT_NEAR(code_loss(z, 1e-4, 1.0), 4e-4, 1e-18);
    EXPECT_NEAR(code_loss(z, 1e-4, 2.0), 1e-4, 1e-18);
}

namespace {

struct Fixture {
    UVAvatar av;
    RenderOutput out;
    std::vector<double> color, depth, alpha, z;
};

Fixture random_fixture(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Fixture f{UVAvatar(2, 3, 1, 8), RenderOutput(3, 2), {}, {}, {}, std::vector<double>(512)};
    for (std::size_t i = 0; i < f.av.texel_count(); ++i) {
        f.av.centers[i] = Vec3(u(rng), u(rng), u(rng));
        f.av.radii[i]   = Vec3(u(rng), u(rng), u(rng));
        f.av.rotations[i] = Vec3(u(rng), u(rng), u(rng));
    }
    for (double &v : f.out.color) v = u(rng);
    for (double &v : f.out.depth) v = 2 + u(rng);
    for (double &v : f.out.alpha) v = u(rng);
    f.out.mean_influence = 0.3;
    for (std::size_t i = 0; i < f.out.color.size(); ++i) f.color.push_back(u(rng));
    for (std::size_t i = 0; i < f.out.pixels(); ++i) {
        f.depth.push_back(2 + u(rng));
        f.alpha.push_back(u(rng));
    }
    for (double &v : f.z) v = 0.01 * (u(rng) - 0.5);
    return f;
}

} // namespace

TEST(Total, ZeroWeightsIsL1) {
    const Fixture f = random_fixture(1);
    LossWeights w{0, 0, 0, 0, 0, 0, 0, 0, 1.0};
    const auto b = total_loss(f.out, {f.color, f.depth, f.alpha}, f.av, f.z, w);
    EXPECT_EQ(b.total, l1_loss(f.out.color, f.color));
}

TEST(Total, BreakdownSumsAndTermsNonNegative) {
    const Fixture f = random_fixture(2);
    const LossWeights w;
    const auto b = total_loss(f.out, {f.color, f.depth, f.alpha}, f.av, f.z, w);
    const double parts[] = {b.l1, b.depth, b.coverage, b.volume, b.silhouette, b.tv, b.mesh, b.code};
    double s = 0;
    for (double p : parts) {
        EXPECT_GE(p, 0.0);
        EXPECT_LE(p, b.total);
        s += p;
    }
    EXPECT_NEAR(b.total, s, 1e-12);
    EXPECT_NEAR(b.depth, 0.1 * depth_loss(f.out.depth, f.depth, f.alpha).value, 1e-15);
    EXPECT_NEAR(b.coverage, 0.001 * 0.3, 1e-18);
}

TEST(Total, PerfectReconstructionIsZero) {
    UVAvatar av = grid(2, 2);
    RenderOutput out(2, 1);
    std::vector<double> a(2, 1.0);
    out.alpha = a;
    const auto b = total_loss(out, {out.color, out.depth, out.alpha}, av, std::vector<double>(512, 0.0), LossWeights{});
    EXPECT_EQ(b.total, 0.0);
}

TEST(Total, LinearInEachLambda) {
    const Fixture f = random_fixture(3);
    const LossWeights w;
    LossWeights w3{0.3, 0, 0.003, 3, 3, 0.3, 0.03, 3e-4, 1.0};
    const auto a = total_loss(f.out, {f.color, f.depth, f.alpha}, f.av, f.z, w);
    const auto b = total_loss(f.out, {f.color, f.depth, f.alpha}, f.av, f.z, w3);
    EXPECT_NEAR(b.depth, 3 * a.depth, 1e-15);
    EXPECT_NEAR(b.coverage, 3 * a.coverage, 1e-15);
    EXPECT_NEAR(b.volume, 3 * a.volume, 1e-14);
    EXPECT_NEAR(b.silhouette, 3 * a.silhouette, 1e-15);
    EXPECT_NEAR(b.tv, 3 * a.tv, 1e-15);
    EXPECT_NEAR(b.mesh, 3 * a.mesh, 1e-15);
    EXPECT_NEAR(b.code, 3 * a.code, 1e-18);
    LossWeights bad;
    bad.tv = -1;
    EXPECT_THROW(total_loss(f.out, {f.color, f.depth, f.alpha}, f.av, f.z, bad), std::invalid_argument);
}

TEST(Regularizers, TapeGradientsMatchCentralDifferences) {
    const Fixture f = random_fixture(4);
    const auto anchors = std::make_shared<std::vector<Vec3>>();
    for (const auto &c : f.av.centers) anchors->push_back(c + Vec3(0.05, -0.02, 0.01));
    const LossFn fn = [anchors](ad::Tape &, const std::vector<ad::Var> &x) {
        return ad::volume_loss(x[0], 1.0) + ad::tv_loss(x[0], 2, 3, 0.1) + ad::mesh_loss(x[0], *anchors, 0.01) +
               ad::code_loss(x[1], 1e-4, 1.0);
    };
    ParamSet p;
    p.add("poses", flatten_poses(f.av), 1.0);
    p.add("z", f.z, 1.0);
    const auto r = check_gradients(fn, p);
    for (const auto &g : r.groups) {
        EXPECT_TRUE(g.passed) << g.name << " " << g.max_rel_error;
        EXPECT_GT(g.compared, 0u);
    }
}
