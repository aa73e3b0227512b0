// Copyright Contributors to the uvg Project
// SPDX-License-Identifier: Apache-2.0

#include "uvg/fit.hpp"
#include "uvg/toy.hpp"

#include <gtest/gtest.h>

#include <random>
#include <set>

using namespace uvg;

namespace {

io::Dataset small_dataset(int views = 6, int res = 16) {
    toy::Options o;
    o.views      = views;
    o.resolution = res;
    o.grid       = 4;
    return toy::make_dataset(o);
}

FitConfig small_config(long iters) {
    FitConfig c;
    c.iterations = iters;
    c.patch      = 8;
    c.plane_size = 4;
    c.render.samples_per_ray = 16;
    return c;
}

} // namespace

TEST(Decoder, ZeroWeightsGiveZeroPayloads) {
    LatentDecoder d(3, 4, 24);
    for (double &z : d.z) z = 0.7;
    for (double v : decode_payloads(d)) EXPECT_EQ(v, 0.0);
}

TEST(Decoder, ShapeAndDeterminism) {
    const auto d = LatentDecoder::random(3, 5, 3 * 4 * 4 * 8, 7);
    const auto a = decode_payloads(d);
    EXPECT_EQ(a.size(), std::size_t(3 * 5) * 3 * 4 * 4 * 8);
    EXPECT_EQ(a, decode_payloads(d));
}

TEST(Decoder, EqualUvInputsGiveEqualOutputs) {
    // Texels differ only through (h/H, w/W): a decoder whose first layer ignores
    // the UV inputs produces identical blocks.
    auto d = LatentDecoder::random(2, 3, 16, 8);
    for (int h = 0; h < LatentDecoder::kHidden; ++h)
        for (int uv = LatentDecoder::kLatent; uv < LatentDecoder::kIn; ++uv)
            d.weights[LatentDecoder::w1() + std::size_t(uv) * LatentDecoder::kHidden + h] = 0.0;
    const auto p = decode_payloads(d);
    for (std::size_t t = 1; t < 6; ++t)
        for (std::size_t i = 0; i < 16; ++i) EXPECT_EQ(p[t * 16 + i], p[i]);
}

TEST(Decoder, DifferentLatentsDiffer) {
    auto a = LatentDecoder::random(2, 2, 16, 9);
    auto b = a;
    b.z[3] += 0.5;
    EXPECT_NE(decode_payloads(a), decode_payloads(b));
}

TEST(SamplePatch, FullImageAndSinglePixel) {
    Camera c;
    c.width  = 7;
    c.height = 5;
    const std::vector<Camera> cams = {c, c};
    std::mt19937_64 rng(1);
    const auto full = sample_patch(std::span<const Camera>(cams), 5, rng);
    EXPECT_EQ(full.window.height, 5);
    EXPECT_EQ(full.window.y0, 0);
    EXPECT_LE(full.window.x0, 2);
    std::set<std::pair<int, int>> seen;
    for (int i = 0; i < 2000; ++i) {
        const auto p = sample_patch(std::span<const Camera>(cams), 1, rng);
        ASSERT_LT(p.window.x0, 7);
        ASSERT_LT(p.window.y0, 5);
        ASSERT_LT(p.view, 2u);
        seen.insert({p.window.x0, p.window.y0});
    }
    EXPECT_EQ(seen.size(), 35u);
    EXPECT_THROW(sample_patch(std::span<const Camera>(cams), 6, rng), std::invalid_argument);
}

TEST(SamplePatch, SeedReproducible) {
    Camera c;
    c.width = c.height = 32;
    const std::vector<Camera> cams(16, c);
    std::mt19937_64 a(5), b(5);
    for (int i = 0; i < 100; ++i) {
        const auto p = sample_patch(std::span<const Camera>(cams), 16, a);
        const auto q = sample_patch(std::span<const Camera>(cams), 16, b);
        EXPECT_EQ(p.view, q.view);
        EXPECT_EQ(p.window.x0, q.window.x0);
        EXPECT_EQ(p.window.y0, q.window.y0);
    }
}

TEST(Background, CompositeExamples) {
    const std::vector<double> img = {0.2, 0.4, 0.6, 0.0, 1.0, 0.5};
    EXPECT_EQ(composite_background(img, std::vector<double>{1, 1}, Vec3::Ones()), img);
    for (double v : composite_background(img, std::vector<double>{0, 0}, Vec3::Ones())) EXPECT_EQ(v, 1.0);
    const auto h = composite_background(img, std::vector<double>{0.5, 0.5}, Vec3::Ones());
    for (std::size_t i = 0; i < img.size(); ++i) EXPECT_EQ(h[i], 0.5 * (img[i] + 1.0));
}

TEST(Background, ReplaceMatchesCompositeForBinaryMask) {
    const std::vector<double> fg = {0.2, 0.4, 0.6, 0.3, 0.1, 0.5}, mask = {1, 0};
    const auto on_white = composite_background(fg, mask, Vec3::Ones());
    const Vec3 bg(0.1, 0.7, 0.3);
    const auto swapped  = replace_background(on_white, mask, Vec3::Ones(), bg);
    const auto direct   = composite_background(fg, mask, bg);
    for (std::size_t i = 0; i < fg.size(); ++i) EXPECT_NEAR(swapped[i], direct[i], 1e-15);
}

TEST(Fit, ZeroIterationsReturnsInitialization) {
    const auto ds = small_dataset(2, 8);
    const auto r  = fit_scene(ds.views, ds.anchors, small_config(0));
    const UVAvatar init = init_from_anchors(ds.anchors, 4, kFeatureDim);
    EXPECT_EQ(r.avatar.centers, init.centers);
    EXPECT_EQ(r.avatar.rotations, init.rotations);
    EXPECT_EQ(r.avatar.radii, init.radii);
    EXPECT_EQ(r.avatar.payloads, init.payloads);
    EXPECT_TRUE(r.loss_history.empty());
}

TEST(Fit, LossDecreasesAndIsReproducible) {
    const auto ds = small_dataset();
    const auto cfg = small_config(300);
    const auto a   = fit_scene(ds.views, ds.anchors, cfg);
    const auto m   = window_means(a.loss_history, 100);
    ASSERT_EQ(m.size(), 3u);
    for (std::size_t i = 1; i < m.size(); ++i) EXPECT_LE(m[i], m[i - 1]);
    // the total is dominated by slowly moving regularizers; the photometric term must drop
    std::vector<double> l1;
    for (const auto &b : a.breakdowns) l1.push_back(b.l1);
    const auto ml = window_means(l1, 100);
    EXPECT_LT(ml.back(), 0.6 * ml.front());
    const auto b = fit_scene(ds.views, ds.anchors, small_config(40));
    for (std::size_t i = 0; i < 40; ++i) EXPECT_EQ(a.loss_history[i], b.loss_history[i]);
    for (const auto &r : a.avatar.radii) EXPECT_GE(r.minCoeff(), cfg.min_radius);
    EXPECT_NO_THROW(a.avatar.validate());
}

TEST(Fit, LatentModeRuns) {
    const auto ds = small_dataset(3, 8);
    auto cfg      = small_config(30);
    cfg.mode      = FitMode::latent;
    const auto r  = fit_scene(ds.views, ds.anchors, cfg);
    ASSERT_TRUE(r.decoder.has_value());
    EXPECT_EQ(r.avatar.payloads, decode_payloads(*r.decoder));
    const auto m = window_means(r.loss_history, 15);
    EXPECT_LE(m[1], m[0]);
}

TEST(Fit, MeshWeightHoldsCentersToAnchors) {
    const auto ds = small_dataset(4, 8);
    auto cfg      = small_config(60);
    cfg.lr_poses  = 2e-3;
    auto dist = [&](double mesh) {
        cfg.weights.mesh = mesh;
        const auto av    = fit_scene(ds.views, ds.anchors, cfg).avatar;
        double s         = 0;
        for (std::size_t i = 0; i < av.texel_count(); ++i) s += (av.centers[i] - ds.anchors.anchors[i]).squaredNorm();
        return s;
    };
    const double d0 = dist(0.0), d1 = dist(10.0), d3 = dist(1e3);
    EXPECT_GT(d0, 0.0);
    EXPECT_LT(d1, d0);
    EXPECT_LT(d3, d1);
}

TEST(Fit, Validation) {
    const auto ds = small_dataset(2, 8);
    auto cfg      = small_config(1);
    cfg.patch     = 9;
    EXPECT_THROW(fit_scene(ds.views, ds.anchors, cfg), std::invalid_argument);
    cfg.patch    = 4;
    cfg.lr_mlp   = -1;
    EXPECT_THROW(fit_scene(ds.views, ds.anchors, cfg), std::invalid_argument);
    EXPECT_THROW(fit_scene(std::span<const FitView>{}, ds.anchors, small_config(1)), std::invalid_argument);
}

TEST(Fit, DivergenceReportsIteration) {
    const auto ds = small_dataset(2, 8);
    auto cfg      = small_config(50);
    cfg.lr_mlp    = 1e308; // weights overflow within a few steps
    try {
        fit_scene(ds.views, ds.anchors, cfg);
        FAIL() << "expected NumericError";
    } catch (const NumericError &e) {
        EXPECT_GE(e.iteration(), 0);
        EXPECT_NE(std::string(e.what()).find("iteration"), std::string::npos);
    }
}

TEST(Fit, WindowMeans) {
    const std::vector<double> h = {4, 2, 3, 1, 9};
    EXPECT_EQ(window_means(h, 2), (std::vector<double>{3, 2}));
    EXPECT_THROW(window_means(h, 0), std::invalid_argument);
}
