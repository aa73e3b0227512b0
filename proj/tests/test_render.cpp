// Copyright Contributors to the uvg Project
// SPDX-License-Identifier: Apache-2.0

#include "uvg/render.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace uvg;

namespace {

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

UVAvatar single(const Vec3 &center, const Vec3 &radii, int S = 2) {
    UVAvatar av(1, 1, S, 8);
    av.centers[0] = center;
    av.anchors[0] = center;
    av.radii[0]   = radii;
    return av;
}

RenderMLP opaque_mlp(double opacity_logit = 20.0) {
    RenderMLP m;
    m.b2(3) = opacity_logit;
    return m;
}

Camera axis_camera(int w, int h, double z = -3.0) {
    Camera c;
    c.width = w;
    c.height = h;
    c.fx = c.fy = double(w);
    c.cx = w / 2.0;
    c.cy = h / 2.0;
    c.near = 1.0;
    c.far  = 5.0;
    c.cam_to_world(2, 3) = z;
    return c;
}

} // namespace

TEST(TriPlane, ZeroPayload) {
    TriPlanePayload p(4, 8);
    const auto f = sample_triplane(p.view(), Vec3(0.3, -0.2, 0.9));
    for (double v : f) EXPECT_EQ(v, 0.0);
}

TEST(TriPlane, ConstantPlane) {
    TriPlanePayload p(5, 8);
    for (int a = 0; a < 5; ++a)
        for (int b = 0; b < 5; ++b)
            for (int c = 0; c < 8; ++c) p.at(1, a, b, c) = 0.75;
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-1, 1);
    for (int i = 0; i < 20; ++i) {
        const auto f = sample_triplane(p.view(), Vec3(u(rng), u(rng), u(rng)));
        for (double v : f) EXPECT_NEAR(v, 0.75, 1e-15);
    }
}

TEST(TriPlane, ExactAtNodes) {
    const int S = 4;
    TriPlanePayload p(S, 8);
    std::mt19937_64 rng(2);
    std::normal_distribution<double> g;
    for (double &v : p.values) v = g(rng);
    for (int i = 0; i < S; ++i)
        for (int j = 0; j < S; ++j)
            for (int k = 0; k < S; ++k) {
                auto node     = [&](int n) { return -1.0 + 2.0 * n / (S - 1); };
                const auto f  = sample_triplane(p.view(), Vec3(node(i), node(j), node(k)));
                for (int c = 0; c < 8; ++c) {
                    const double want = p.at(0, i, j, c) + p.at(1, i, k, c) + p.at(2, j, k, c);
                    EXPECT_NEAR(f[c], want, 1e-14);
                }
            }
}

TEST(TriPlane, BilinearMidpoint) {
    TriPlanePayload p(2, 8);
    p.at(0, 0, 0, 0) = 1.0;
    p.at(0, 1, 0, 0) = 3.0;
    p.at(0, 0, 1, 0) = 5.0;
    p.at(0, 1, 1, 0) = 7.0;
    const auto f = sample_triplane(p.view(), Vec3(0, 0, 0.4));
    EXPECT_NEAR(f[0], 4.0, 1e-15);
    const auto q = sample_triplane(p.view(), Vec3(0.5, -1, 0)); // a at 3/4, b at 0
    EXPECT_NEAR(q[0], 1.0 + 0.75 * 2.0, 1e-15);
}

TEST(TriPlane, VectorModeSumsPlanes) {
    TriPlanePayload p(1, 8);
    for (int pl = 0; pl < 3; ++pl) p.at(pl, 0, 0, 2) = pl + 1.0;
    const auto f = sample_triplane(p.view(), Vec3(0.9, -0.3, 0.1));
    EXPECT_EQ(f[2], 6.0);
}

TEST(Mlp, ZeroWeights) {
    const auto o = mlp_forward(RenderMLP{}, Feature{1, 2, 3, 4, 5, 6, 7, 8});
    EXPECT_EQ(o.color, Vec3(0.5, 0.5, 0.5));
    EXPECT_EQ(o.opacity, 0.5);
}

TEST(Mlp, OpacitySaturates) {
    const auto o = mlp_forward(opaque_mlp(), Feature{});
    EXPECT_NEAR(o.opacity, 1.0, 1e-8);
}

TEST(Mlp, ReluKillsNegatives) {
    RenderMLP m;
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.1, 1.0);
    for (int i = 0; i < 8; ++i)
        for (int h = 0; h < 32; ++h) m.w1(i, h) = u(rng);
    for (int h = 0; h < 32; ++h)
        for (int o = 0; o < 4; ++o) m.w2(h, o) = u(rng);
    for (int o = 0; o < 4; ++o) m.b2(o) = 0.3 * o - 0.4;
    const Feature neg{-1, -2, -1, -3, -1, -1, -2, -1};
    const auto out = mlp_forward(m, neg);
    for (int k = 0; k < 3; ++k) EXPECT_NEAR(out.color[k], sig(0.3 * k - 0.4), 1e-15);
    EXPECT_NEAR(out.opacity, sig(0.5), 1e-15);
}

TEST(Mlp, MatchesDenseFormula) {
    const RenderMLP m = RenderMLP::random(4);
    const Feature f{0.1, -0.5, 0.7, 0.2, -0.9, 0.3, 0.0, 1.2};
    Eigen::Matrix<double, 8, 32> W1;
    Eigen::Matrix<double, 32, 4> W2;
    Eigen::Matrix<double, 32, 1> b1;
    Eigen::Matrix<double, 4, 1> b2;
    RenderMLP mm = m;
    for (int i = 0; i < 8; ++i)
        for (int h = 0; h < 32; ++h) W1(i, h) = mm.w1(i, h);
    for (int h = 0; h < 32; ++h) {
        b1(h) = mm.b1(h);
        for (int o = 0; o < 4; ++o) W2(h, o) = mm.w2(h, o);
    }
    for (int o = 0; o < 4; ++o) b2(o) = mm.b2(o);
    Eigen::Matrix<double, 8, 1> x;
    for (int i = 0; i < 8; ++i) x(i) = f[i];
    const Eigen::Matrix<double, 32, 1> hid = (W1.transpose() * x + b1).cwiseMax(0.0);
    const Eigen::Matrix<double, 4, 1> o    = W2.transpose() * hid + b2;
    const auto out                         = mlp_forward(m, f);
    for (int k = 0; k < 3; ++k) EXPECT_NEAR(out.color[k], sig(o(k)), 1e-14);
    EXPECT_NEAR(out.opacity, sig(o(3)), 1e-14);
}

TEST(Blend, SingleGaussianReduction) {
    const UVAvatar av = single(Vec3(0.5, 0, 0), Vec3(1, 1, 1));
    RenderConfig cfg;
    cfg.knn_k  = 1;
    cfg.eta    = 1.0; // g = 1 at the center
    const auto r = blend_point(av, RenderMLP{}, Vec3(0.5, 0, 0), cfg, build_index(av, 1.0));
    for (int k = 0; k < 3; ++k) EXPECT_NEAR(r.color[k], 0.5 / (1.0 + 1e-6), 1e-16);
    EXPECT_EQ(r.alpha, 0.5);
}

TEST(Blend, FarFieldDecays) {
    const UVAvatar av = single(Vec3::Zero(), Vec3::Constant(0.1));
    const auto r      = blend_point(av, RenderMLP{}, Vec3(10, 0, 0), RenderConfig{}, build_index(av, 1.0));
    EXPECT_EQ(r.alpha, 0.0);
}

TEST(Blend, TwoCoLocatedGaussians) {
    UVAvatar av(1, 2, 2, 8);
    av.radii[0] = av.radii[1] = Vec3::Constant(1.0);
    RenderConfig cfg;
    cfg.knn_k    = 2;
    cfg.eta      = 0.2;
    const Vec3 x(0.3, 0.1, 0);
    const auto r = blend_point(av, RenderMLP{}, x, cfg, build_index(av, 1.0));
    const double g = 0.2 * std::exp(-0.5 * x.squaredNorm());
    for (int k = 0; k < 3; ++k) EXPECT_NEAR(r.color[k], 0.5 * 2 * g / (2 * g + 1e-6), 1e-15);
    EXPECT_NEAR(r.alpha, 2 * g * 0.5, 1e-15);
}

TEST(Blend, AlphaClamped) {
    const UVAvatar av = single(Vec3::Zero(), Vec3::Constant(1.0));
    const auto r      = blend_point(av, opaque_mlp(), Vec3::Zero(), RenderConfig{}, build_index(av, 1.0));
    EXPECT_EQ(r.alpha, kMaxAlpha);
}

TEST(Blend, DoublingEtaDoublesOpacityKeepsColor) {
    UVAvatar av(1, 3, 2, 8);
    av.centers = {Vec3(0, 0, 0), Vec3(0.5, 0, 0), Vec3(0, 0.4, 0.2)};
    std::mt19937_64 rng(5);
    std::normal_distribution<double> g;
    for (double &p : av.payloads) p = g(rng);
    const RenderMLP m = RenderMLP::random(6);
    RenderConfig a, b;
    a.eta = 0.01;
    b.eta = 0.02;
    const auto idx = build_index(av, 1.0);
    const Vec3 x(0.2, 0.1, 0.1);
    const auto ra = blend_point(av, m, x, a, idx), rb = blend_point(av, m, x, b, idx);
    EXPECT_NEAR(rb.alpha, 2 * ra.alpha, 1e-15);
    EXPECT_NEAR((ra.color - rb.color).norm(), 0.0, 1e-4); // epsilon in the denominator
}

TEST(Composite, ExampleArithmetic) {
    const std::vector<double> a = {0.5, 0.5}, t = {1, 2};
    const std::vector<Vec3> c   = {Vec3(1, 0, 0), Vec3(0, 1, 0)};
    const auto r                = composite_samples(a, c, t, Vec3::Zero());
    EXPECT_EQ(r.color, Vec3(0.5, 0.25, 0));
    EXPECT_EQ(r.depth, 1.0);
    EXPECT_EQ(r.alpha, 0.75);
}

TEST(Composite, FullOcclusion) {
    const std::vector<double> a = {1.0, 0.7}, t = {1, 2};
    const std::vector<Vec3> c   = {Vec3(0.2, 0.3, 0.4), Vec3(1, 1, 1)};
    const auto r                = composite_samples(a, c, t, Vec3(0.9, 0.1, 0.5));
    EXPECT_EQ(r.color, Vec3(0.2, 0.3, 0.4));
    EXPECT_EQ(r.alpha, 1.0);
}

TEST(Composite, ConservationAndMonotoneOcclusion) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0, 1);
    for (int i = 0; i < 100; ++i) {
        std::vector<double> a(16), t(16);
        std::vector<Vec3> c(16, Vec3::Zero());
        double prod = 1.0;
        for (int j = 0; j < 16; ++j) {
            a[j] = u(rng);
            t[j] = j;
            prod *= 1 - a[j];
        }
        const auto r = composite_samples(a, c, t, Vec3::Zero());
        EXPECT_NEAR(r.alpha, 1.0 - prod, 1e-10);
        auto b   = a;
        b[i % 16] = std::min(1.0, b[i % 16] + 0.2);
        EXPECT_GE(composite_samples(b, c, t, Vec3::Zero()).alpha, r.alpha);
    }
}

TEST(MarchRay, EmptySceneIsBackground) {
    const UVAvatar av = single(Vec3(1000, 0, 0), Vec3::Constant(0.01));
    const auto r = march_ray(av, opaque_mlp(), Vec3::Zero(), Vec3::UnitZ(), 1, 5, RenderConfig{}, build_index(av, 1.0));
    EXPECT_EQ(r.color, Vec3(1, 1, 1));
    EXPECT_EQ(r.alpha, 0.0);
}

TEST(MarchRay, DirectionMustBeNormalized) {
    const UVAvatar av = single(Vec3::Zero(), Vec3::Ones());
    EXPECT_THROW(march_ray(av, RenderMLP{}, Vec3::Zero(), Vec3(0, 0, 2), 1, 5, RenderConfig{}, build_index(av, 1.0)),
                 std::invalid_argument);
}

TEST(RenderImage, EmptyScene) {
    const UVAvatar av = single(Vec3(1000, 0, 0), Vec3::Constant(0.01));
    RenderConfig cfg;
    cfg.background = Vec3(0.2, 0.4, 0.6);
    const auto out = render_image(av, opaque_mlp(), axis_camera(6, 5), cfg);
    for (std::size_t p = 0; p < out.pixels(); ++p) {
        EXPECT_EQ(out.alpha[p], 0.0);
        for (int c = 0; c < 3; ++c) EXPECT_EQ(out.color[p * 3 + c], cfg.background[c]);
    }
}

TEST(RenderImage, OpaqueGaussianCenterPixel) {
    UVAvatar av = single(Vec3::Zero(), Vec3::Constant(0.3), 3);
    std::mt19937_64 rng(8);
    std::normal_distribution<double> g;
    for (double &p : av.payloads) p = 0.5 * g(rng);
    RenderMLP m = RenderMLP::random(9);
    m.b2(3)     = 20.0;
    const Camera cam = axis_camera(9, 9);
    const RenderConfig cfg;
    const auto index = build_index(av, 1.0);
    const auto out   = render_image(av, m, cam, cfg, index);
    const std::size_t p = 4 * 9 + 4;
    // first sample along the center ray where blended opacity saturates
    RenderScene scene(av, m, cfg, index);
    std::vector<double> ts;
    scene.sample_depths(cam.near, cam.far, pixel_stream(cam, 4, 4), ts);
    const Vec3 dir = cam.ray_direction(4, 4);
    Vec3 expect    = Vec3::Zero();
    for (double t : ts) {
        const auto b = blend_point(av, m, cam.origin() + t * dir, cfg, index);
        if (b.alpha > 0.99) {
            expect = b.color;
            break;
        }
    }
    const Vec3 center_color = blend_point(av, m, Vec3::Zero(), cfg, index).color;
    for (int c = 0; c < 3; ++c) {
        EXPECT_NEAR(out.color[p * 3 + c], expect[c], 0.02);
        EXPECT_NEAR(out.color[p * 3 + c], center_color[c], 0.1);
    }
    EXPECT_GT(out.alpha[p], 0.99);
}

TEST(RenderImage, PixelsEqualMarchRayAndDeterministic) {
    UVAvatar av(2, 2, 2, 8);
    av.centers = {Vec3(0.2, 0, 0), Vec3(-0.3, 0.1, 0.2), Vec3(0, -0.3, -0.1), Vec3(0.1, 0.3, 0.1)};
    for (auto &r : av.radii) r = Vec3(0.3, 0.2, 0.25);
    std::mt19937_64 rng(10);
    std::normal_distribution<double> g;
    for (double &p : av.payloads) p = g(rng);
    const RenderMLP m = RenderMLP::random(11);
    const Camera cam  = axis_camera(8, 7);
    RenderConfig cfg;
    cfg.jitter_seed   = 77;
    const auto index  = build_index(av, 0.5);
    const auto a      = render_image(av, m, cam, cfg, index);
    const auto b      = render_image(av, m, cam, cfg, index);
    EXPECT_EQ(a.color, b.color);
    EXPECT_EQ(a.depth, b.depth);
    EXPECT_EQ(a.alpha, b.alpha);
    for (int y = 0; y < cam.height; ++y)
        for (int x = 0; x < cam.width; ++x) {
            const auto r = march_ray(av, m, cam.origin(), cam.ray_direction(x, y), cam.near, cam.far, cfg, index,
                                     pixel_stream(cam, x, y));
            const std::size_t p = std::size_t(y) * cam.width + x;
            for (int c = 0; c < 3; ++c) EXPECT_EQ(a.color[p * 3 + c], r.color[c]);
            EXPECT_EQ(a.depth[p], r.depth);
            EXPECT_EQ(a.alpha[p], r.alpha);
        }
    // window render equals the crop of the full render
    RenderScene scene(av, m, cfg, index);
    const auto w = render_window(scene, cam, {2, 3, 4, 2});
    for (int y = 0; y < 2; ++y)
        for (int x = 0; x < 4; ++x) EXPECT_EQ(w.alpha[y * 4 + x], a.alpha[(y + 3) * 8 + x + 2]);
    // a different jitter seed changes the samples
    cfg.jitter_seed = 78;
    EXPECT_NE(render_image(av, m, cam, cfg, index).depth, a.depth);
}

TEST(RenderImage, TranslationInvariantBitExact) {
    UVAvatar av(1, 3, 2, 8);
    av.centers = {Vec3(0.25, 0, 0), Vec3(-0.375, 0.125, 0.25), Vec3(0, -0.25, -0.125)};
    for (auto &r : av.radii) r = Vec3(0.3, 0.2, 0.25);
    std::mt19937_64 rng(12);
    std::normal_distribution<double> g;
    for (double &p : av.payloads) p = g(rng);
    const RenderMLP m = RenderMLP::random(13);
    const Camera cam  = axis_camera(6, 6);
    const Vec3 shift(4, -8, 2);
    UVAvatar moved = av;
    for (auto &c : moved.centers) c += shift;
    Camera cam2 = cam;
    cam2.cam_to_world.block<3, 1>(0, 3) += shift;
    const RenderConfig cfg;
    const auto a = render_image(av, m, cam, cfg, build_index(av, 0.5));
    const auto b = render_image(moved, m, cam2, cfg, build_index(moved, 0.5));
    EXPECT_EQ(a.color, b.color);
    EXPECT_EQ(a.depth, b.depth);
    EXPECT_EQ(a.alpha, b.alpha);
}

TEST(Psnr, Examples) {
    const std::vector<double> z(12, 0.0), o(12, 1.0);
    EXPECT_TRUE(std::isinf(psnr(z, z)));
    EXPECT_NEAR(psnr(z, o), 0.0, 1e-15);
    std::vector<double> e(1000, 0.0), f(1000, 0.0);
    f[0] = 1.0; // MSE 1e-3
    EXPECT_NEAR(psnr(e, f), 30.0, 1e-12);
    EXPECT_THROW(psnr(z, e), std::invalid_argument);
}
