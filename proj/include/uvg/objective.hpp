// Copyright Contributors to the uvg Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "uvg/core.hpp"
#include "uvg/decoder.hpp"
#include "uvg/losses.hpp"
#include "uvg/optim.hpp"
#include "uvg/parallel.hpp"
#include "uvg/render.hpp"
#include "uvg/spatial.hpp"
#include "uvg/tape.hpp"

#include <cmath>
#include <memory>
#include <span>
#include <vector>

namespace uvg {

/// Supervision for one pixel window of one view. Maps are window-sized,
/// row-major; `depth` may be empty.
struct PatchTarget {
    Camera camera;
    Window window;
    std::vector<double> color;
    std::vector<double> depth;
    std::vector<double> alpha;
};

/// Image terms of the objective over a patch, already weighted.
struct RenderLossTerms {
    double l1         = 0.0;
    double depth      = 0.0;
    double silhouette = 0.0;
    double coverage   = 0.0;
    bool depth_mask_empty = false;
    RenderGrads grads;

    double sum() const { return l1 + depth + silhouette + coverage; }
};

/// Renders the patch and evaluates L1 + depth + silhouette + coverage. With
/// `want_grads` each ray's adjoint is pushed through the renderer right after
/// it is traced. Rows go to a fixed number of chunks reduced in order, so the
/// result does not depend on threading.
inline RenderLossTerms render_patch_loss(const RenderScene &scene, const PatchTarget &t, const LossWeights &w,
                                         bool want_grads) {
    const Window &win  = t.window;
    const std::size_t P = std::size_t(win.width) * win.height;
    detail::require(win.width > 0 && win.height > 0 && win.x0 >= 0 && win.y0 >= 0 &&
                        win.x0 + win.width <= t.camera.width && win.y0 + win.height <= t.camera.height,
                    "render_patch_loss: window outside the image");
    detail::require(t.color.size() == 3 * P && t.alpha.size() == P && (t.depth.empty() || t.depth.size() == P),
                    "render_patch_loss: target shape mismatch");
    const bool use_depth = !t.depth.empty();
    std::size_t masked   = 0;
    if (use_depth)
        for (double a : t.alpha) masked += a > kDepthMaskThreshold;

    const int J          = scene.config().samples_per_ray;
    const double c_l1    = 1.0 / (3.0 * double(P));
    const double c_depth = masked > 0 ? w.depth / double(masked) : 0.0;
    const double c_sil   = w.silhouette / double(P);
    const double c_cov   = w.coverage / (double(P) * J);

    const std::size_t chunks = std::min<std::size_t>(win.height, 8);
    struct Partial {
        double l1 = 0, depth = 0, sil = 0, cov = 0;
        RenderGrads grads;
    };
    std::vector<Partial> parts(chunks);
    const Vec3 origin = t.camera.origin();
    parallel_chunks(chunks, [&](std::size_t c) {
        Partial &part = parts[c];
        if (want_grads) part.grads = RenderGrads(scene.avatar());
        detail::RayTape tape;
        std::vector<double> ts;
        const std::size_t r0 = c * win.height / chunks, r1 = (c + 1) * win.height / chunks;
        for (std::size_t row = r0; row < r1; ++row) {
            const int y = win.y0 + int(row);
            for (int xi = 0; xi < win.width; ++xi) {
                const int x         = win.x0 + xi;
                const std::size_t p = row * win.width + xi;
                scene.sample_depths(t.camera.near, t.camera.far, pixel_stream(t.camera, x, y), ts);
                const RayResult r = scene.trace(origin, t.camera.ray_direction(x, y), ts, tape);
                RayAdjoint adj;
                for (int k = 0; k < 3; ++k) {
                    const double d = r.color[k] - t.color[p * 3 + k];
                    part.l1 += std::abs(d);
                    adj.color[k] = d > 0.0 ? c_l1 : (d < 0.0 ? -c_l1 : 0.0);
                }
                if (use_depth && t.alpha[p] > kDepthMaskThreshold) {
                    const double d = r.depth - t.depth[p];
                    part.depth += d * d;
                    adj.depth = 2.0 * c_depth * d;
                }
                const double da = r.alpha - t.alpha[p];
                part.sil += da * da;
                adj.alpha = 2.0 * c_sil * da;
                part.cov += tape.influence_sum;
                adj.influence = c_cov;
                if (want_grads) scene.backward(tape, adj, part.grads);
            }
        }
    });
    RenderLossTerms out;
    if (want_grads) out.grads = RenderGrads(scene.avatar());
    double l1 = 0, dep = 0, sil = 0, cov = 0;
    for (auto &part : parts) {
        l1 += part.l1;
        dep += part.depth;
        sil += part.sil;
        cov += part.cov;
        if (want_grads) out.grads.add(part.grads);
    }
    out.l1               = c_l1 * l1;
    out.depth            = c_depth * dep;
    out.depth_mask_empty = use_depth && masked == 0;
    out.silhouette       = c_sil * sil;
    out.coverage         = c_cov * cov;
    return out;
}

// ---------------------------------------------------------------------------
// Objective on the tape
// ---------------------------------------------------------------------------

enum class FitMode { direct, latent };

/// Parameter group names; the order of groups in a fit ParamSet.
inline constexpr const char *kGroupPoses    = "gaussian_poses";
inline constexpr const char *kGroupPayloads = "payloads";
inline constexpr const char *kGroupLatent   = "latent_z";
inline constexpr const char *kGroupDecoder  = "decoder";
inline constexpr const char *kGroupMlp      = "mlp";

/// Everything the objective needs besides the optimized values.
struct ObjectiveContext {
    UVAvatar templ; // dims, anchors; poses and payloads are overwritten
    RenderConfig render;
    LossWeights weights;
    FitMode mode     = FitMode::direct;
    double cell_size = 0.0; // KNN grid cell; 0 picks one from the anchors
};

namespace ad {

/// Fused node for the image terms; gradients are computed eagerly.
inline Var render_loss(const Var &poses, const Var &payloads, const Var &mlp, const ObjectiveContext &ctx,
                       const PatchTarget &target, LossBreakdown *breakdown) {
    UVAvatar av = ctx.templ;
    unflatten_poses(poses.value(), av);
    ::uvg::detail::require(payloads.size() == av.payloads.size(), "render_loss: payload size mismatch");
    av.payloads = payloads.value();
    RenderMLP net;
    net.params = mlp.value();
    for (std::size_t i = 0; i < av.texel_count(); ++i) {
        if (!av.centers[i].allFinite() || !av.rotations[i].allFinite() || !av.radii[i].allFinite() ||
            !(av.radii[i].array() > 0.0).all()) {
            throw NumericError("invalid Gaussian pose at texel " + std::to_string(i), "render_loss");
        }
    }
    const double cell  = ctx.cell_size > 0.0 ? ctx.cell_size : suggested_cell_size(ctx.templ.anchors);
    const auto index   = build_index(av, cell);
    const bool rec     = poses.tape().recording();
    RenderScene scene(av, net, ctx.render, index, rec);
    auto terms = render_patch_loss(scene, target, ctx.weights, rec);
    if (breakdown) {
        breakdown->l1               = terms.l1;
        breakdown->depth            = terms.depth;
        breakdown->silhouette       = terms.silhouette;
        breakdown->coverage         = terms.coverage;
        breakdown->depth_mask_empty = terms.depth_mask_empty;
    }
    if (!rec) return fused_scalar("render_loss", terms.sum(), {poses, payloads, mlp}, {{}, {}, {}});
    return fused_scalar("render_loss", terms.sum(), {poses, payloads, mlp},
                        {std::move(terms.grads.poses), std::move(terms.grads.payloads), std::move(terms.grads.mlp)});
}

} // namespace ad

/// Builds the full objective for a patch. Group order: direct mode
/// [poses, payloads, mlp]; latent mode [poses, z, decoder, mlp].
/// When `breakdown` is given it receives the weighted terms of the last evaluation.
inline LossFn make_objective(std::shared_ptr<const ObjectiveContext> ctx, std::shared_ptr<const PatchTarget> target,
                             LossBreakdown *breakdown = nullptr) {
    return [ctx, target, breakdown](ad::Tape &tape, const std::vector<ad::Var> &in) -> ad::Var {
        (void)tape;
        const auto &w    = ctx->weights;
        const UVAvatar &tp = ctx->templ;
        const ad::Var &poses = in[0];
        ad::Var payloads;
        ad::Var mlp;
        ad::Var code;
        if (ctx->mode == FitMode::direct) {
            detail::require(in.size() == 3, "objective: expected 3 parameter groups");
            payloads = in[1];
            mlp      = in[2];
        } else {
            detail::require(in.size() == 4, "objective: expected 4 parameter groups");
            payloads = ad::decode(in[1], in[2], tp.height, tp.width, int(tp.payload_stride()));
            code     = ad::code_loss(in[1], w.code, w.code_sigma);
            mlp      = in[3];
        }
        LossBreakdown b;
        ad::Var total = ad::render_loss(poses, payloads, mlp, *ctx, *target, &b);
        const ad::Var vol  = ad::volume_loss(poses, w.volume);
        const ad::Var tv   = ad::tv_loss(poses, tp.height, tp.width, w.tv);
        const ad::Var mesh = ad::mesh_loss(poses, tp.anchors, w.mesh);
        total = total + vol + tv + mesh;
        b.volume = vol.scalar();
        b.tv     = tv.scalar();
        b.mesh   = mesh.scalar();
        if (ctx->mode == FitMode::latent) {
            total  = total + code;
            b.code = code.scalar();
        }
        b.finish();
        if (breakdown) *breakdown = b;
        return total;
    };
}

} // namespace uvg
