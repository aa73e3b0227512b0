// Copyright Contributors to the uvg Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "uvg/core.hpp"
#include "uvg/decoder.hpp"
#include "uvg/errors.hpp"
#include "uvg/losses.hpp"
#include "uvg/objective.hpp"
#include "uvg/optim.hpp"
#include "uvg/render.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <vector>

namespace uvg {

/// One posed training image. `depth` may be empty; `alpha` is the target
/// silhouette and the depth mask. `background` is the color the image was
/// composited over.
struct FitView {
    Camera camera;
    std::vector<double> color;
    std::vector<double> depth;
    std::vector<double> alpha;
    Vec3 background = Vec3::Ones();

    void validate() const {
        camera.validate();
        const std::size_t p = std::size_t(camera.width) * camera.height;
        detail::require(color.size() == 3 * p && alpha.size() == p && (depth.empty() || depth.size() == p),
                        "FitView: map sizes disagree with the camera");
    }
};

enum class BackgroundMode { white, random_white_biased };

struct FitConfig {
    long iterations = 1000;
    int patch       = 36;
    FitMode mode    = FitMode::direct;
    PayloadKind payload = PayloadKind::triplane;
    int plane_size  = 8; // tri-plane resolution; vector payloads use 1

    double lr_poses    = 1e-5;
    double lr_payloads = 0.05;
    double lr_mlp      = 5e-2;
    double lr_z        = 0.05;
    double lr_decoder  = 0.0025;
    AdamWConfig adam;

    BackgroundMode background = BackgroundMode::white;
    double white_probability  = 0.8; // random_white_biased only
    std::uint64_t seed        = 0;

    LossWeights weights;
    RenderConfig render;
    double min_radius = 1e-4;

    /// Called after every iteration with (iteration, breakdown before the update).
    std::function<void(long, const LossBreakdown &)> on_iteration;

    void validate() const {
        detail::require(iterations >= 0, "FitConfig: iterations must be >= 0");
        detail::require(patch >= 1, "FitConfig: patch must be >= 1");
        detail::require(plane_size >= 2, "FitConfig: tri-plane size must be >= 2");
        for (double r : {lr_poses, lr_payloads, lr_mlp, lr_z, lr_decoder}) {
            detail::require(std::isfinite(r) && r >= 0.0, "FitConfig: learning rates must be >= 0");
        }
        detail::require(white_probability >= 0.0 && white_probability <= 1.0,
                        "FitConfig: white probability must be in [0,1]");
        weights.validate();
        render.validate();
    }
};

struct FitResult {
    UVAvatar avatar;
    RenderMLP mlp;
    std::optional<LatentDecoder> decoder;
    std::vector<double> loss_history;
    std::vector<LossBreakdown> breakdowns;
};

struct PatchChoice {
    std::size_t view = 0;
    Window window;
};

/// Uniform view, then uniform top-left corner among valid windows.
template <typename Rng>
PatchChoice sample_patch(std::span<const Camera> cameras, int patch, Rng &rng) {
    detail::require(!cameras.empty(), "sample_patch: no views");
    PatchChoice c;
    c.view             = std::uniform_int_distribution<std::size_t>(0, cameras.size() - 1)(rng);
    const Camera &cam  = cameras[c.view];
    detail::require(patch >= 1 && patch <= cam.width && patch <= cam.height, "sample_patch: patch exceeds the image");
    c.window.width  = patch;
    c.window.height = patch;
    c.window.x0     = std::uniform_int_distribution<int>(0, cam.width - patch)(rng);
    c.window.y0     = std::uniform_int_distribution<int>(0, cam.height - patch)(rng);
    return c;
}

/// out = target * mask + color * (1 - mask), per pixel.
inline std::vector<double> composite_background(std::span<const double> target, std::span<const double> mask,
                                                const Vec3 &color) {
    detail::require(target.size() == 3 * mask.size(), "composite_background: shape mismatch");
    std::vector<double> out(target.size());
    for (std::size_t p = 0; p < mask.size(); ++p)
        for (int c = 0; c < 3; ++c) out[p * 3 + c] = target[p * 3 + c] * mask[p] + color[c] * (1.0 - mask[p]);
    return out;
}

/// Swaps the background of an image composited over `old_bg` with soft alpha:
/// out = target + (1 - alpha) (new_bg - old_bg). Equals composite_background
/// of the foreground when the mask is binary.
inline std::vector<double> replace_background(std::span<const double> target, std::span<const double> alpha,
                                              const Vec3 &old_bg, const Vec3 &new_bg) {
    detail::require(target.size() == 3 * alpha.size(), "replace_background: shape mismatch");
    std::vector<double> out(target.size());
    for (std::size_t p = 0; p < alpha.size(); ++p)
        for (int c = 0; c < 3; ++c) out[p * 3 + c] = target[p * 3 + c] + (1.0 - alpha[p]) * (new_bg[c] - old_bg[c]);
    return out;
}

/// Copies a window of a full-image map with `channels` values per pixel.
inline std::vector<double> crop(std::span<const double> image, int image_width, const Window &w, int channels) {
    std::vector<double> out;
    if (image.empty()) return out;
    out.reserve(std::size_t(w.width) * w.height * channels);
    for (int y = w.y0; y < w.y0 + w.height; ++y) {
        const std::size_t base = (std::size_t(y) * image_width + w.x0) * channels;
        out.insert(out.end(), image.begin() + base, image.begin() + base + std::size_t(w.width) * channels);
    }
    return out;
}

namespace detail {

inline void write_params(const ParamSet &ps, FitMode mode, UVAvatar &av, RenderMLP &mlp,
                         std::optional<LatentDecoder> &dec) {
    unflatten_poses(ps[0].values, av);
    if (mode == FitMode::direct) {
        av.payloads = ps[1].values;
        mlp.params  = ps[2].values;
    } else {
        dec->z       = ps[1].values;
        dec->weights = ps[2].values;
        av.payloads  = decode_payloads(*dec);
        mlp.params   = ps[3].values;
    }
}

} // namespace detail

/// Fits an avatar to posed views. Direct mode optimizes payloads as free
/// parameters; latent mode optimizes (z, decoder) with payloads decoded.
inline FitResult fit_scene(std::span<const FitView> views, const AnchorGrid &anchors, const FitConfig &cfg) {
    cfg.validate();
    detail::require(!views.empty(), "fit_scene: need at least one view");
    std::vector<Camera> cams;
    for (const auto &v : views) {
        v.validate();
        detail::require(cfg.patch <= v.camera.width && cfg.patch <= v.camera.height,
                        "fit_scene: patch exceeds an image");
        cams.push_back(v.camera);
    }
    const int S = cfg.payload == PayloadKind::triplane ? cfg.plane_size : 1;

    FitResult res;
    res.avatar = init_from_anchors(anchors, S, kFeatureDim);
    std::mt19937_64 rng(cfg.seed);
    res.mlp = RenderMLP::random(rng());
    if (cfg.mode == FitMode::latent) {
        res.decoder = LatentDecoder::random(anchors.height, anchors.width, int(res.avatar.payload_stride()), rng());
        res.avatar.payloads = decode_payloads(*res.decoder);
    }

    ParamSet ps;
    ps.add(kGroupPoses, flatten_poses(res.avatar), cfg.lr_poses);
    if (cfg.mode == FitMode::direct) {
        ps.add(kGroupPayloads, res.avatar.payloads, cfg.lr_payloads);
    } else {
        ps.add(kGroupLatent, res.decoder->z, cfg.lr_z);
        ps.add(kGroupDecoder, res.decoder->weights, cfg.lr_decoder);
    }
    ps.add(kGroupMlp, res.mlp.params, cfg.lr_mlp);
    AdamWState state(ps);

    auto base      = std::make_shared<ObjectiveContext>();
    base->templ    = res.avatar;
    base->render   = cfg.render;
    base->weights  = cfg.weights;
    base->mode     = cfg.mode;
    base->cell_size = suggested_cell_size(anchors.anchors);

    std::bernoulli_distribution pick_white(cfg.white_probability);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    res.loss_history.reserve(std::size_t(cfg.iterations));
    for (long it = 0; it < cfg.iterations; ++it) {
        const PatchChoice pc = sample_patch(std::span<const Camera>(cams), cfg.patch, rng);
        const FitView &v     = views[pc.view];
        auto target          = std::make_shared<PatchTarget>();
        target->camera       = v.camera;
        target->window       = pc.window;
        target->alpha        = crop(v.alpha, v.camera.width, pc.window, 1);
        target->depth        = crop(v.depth, v.camera.width, pc.window, 1);
        auto color           = crop(v.color, v.camera.width, pc.window, 3);

        auto ctx = std::make_shared<ObjectiveContext>(*base);
        Vec3 bg  = Vec3::Ones();
        if (cfg.background == BackgroundMode::random_white_biased && !pick_white(rng)) {
            bg = Vec3(unit(rng), unit(rng), unit(rng));
        }
        ctx->render.background = bg;
        target->color = bg == v.background ? std::move(color) : replace_background(color, target->alpha, v.background, bg);

        LossBreakdown b;
        GradientResult gr;
        try {
            gr = gradients(make_objective(ctx, target, &b), ps);
            if (!std::isfinite(gr.loss)) throw NumericError("non-finite loss", "total_loss");
            adamw_step(ps, gr.grads, state, cfg.adam);
            for (std::size_t g = 0; g < ps.size(); ++g)
                for (double x : ps[g].values)
                    if (!std::isfinite(x)) throw NumericError("non-finite parameter in group '" + ps[g].name + "'", ps[g].name);
        } catch (const NumericError &e) {
            throw NumericError(std::string(e.what()) + " at iteration " + std::to_string(it), e.op(), it);
        }
        auto &pv = ps[0].values;
        for (std::size_t i = 0; i < res.avatar.texel_count(); ++i)
            for (int a = 0; a < 3; ++a) pv[i * kPoseDim + 6 + a] = std::max(pv[i * kPoseDim + 6 + a], cfg.min_radius);

        res.loss_history.push_back(gr.loss);
        res.breakdowns.push_back(b);
        if (cfg.on_iteration) cfg.on_iteration(it, b);
    }
    detail::write_params(ps, cfg.mode, res.avatar, res.mlp, res.decoder);
    return res;
}

/// Means of consecutive, non-overlapping windows of a loss history. A
/// trailing partial window is dropped.
inline std::vector<double> window_means(std::span<const double> history, std::size_t window) {
    detail::require(window >= 1, "window_means: window must be >= 1");
    std::vector<double> out;
    for (std::size_t s = 0; s + window <= history.size(); s += window) {
        double m = 0.0;
        for (std::size_t i = s; i < s + window; ++i) m += history[i];
        out.push_back(m / double(window));
    }
    return out;
}

/// PSNR over all pixels of all views (pooled MSE), rendered over each
/// view's background.
inline double training_psnr(const UVAvatar &avatar, const RenderMLP &mlp, std::span<const FitView> views,
                            RenderConfig cfg) {
    const auto index = build_index(avatar);
    double se        = 0.0;
    std::size_t n    = 0;
    for (const auto &v : views) {
        cfg.background = v.background;
        const auto out = render_image(avatar, mlp, v.camera, cfg, index);
        for (std::size_t i = 0; i < out.color.size(); ++i) {
            const double d = out.color[i] - v.color[i];
            se += d * d;
        }
        n += out.color.size();
    }
    if (se == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(double(n) / se);
}

} // namespace uvg
