// Copyright Contributors to the uvg Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "uvg/core.hpp"
#include "uvg/render.hpp"
#include "uvg/spatial.hpp"
#include "uvg/tape.hpp"

#include <cmath>
#include <span>
#include <string>
#include <vector>

namespace uvg {

struct LossWeights {
    double depth      = 0.1;
    double identity   = 0.0; // accepted for completeness; no identity network exists
    double coverage   = 0.001;
    double silhouette = 1.0;
    double volume     = 1.0;
    double tv         = 0.1;
    double mesh       = 0.01;
    double code       = 1e-4;
    double code_sigma = 1.0;

    void validate() const {
        for (double w : {depth, identity, coverage, silhouette, volume, tv, mesh, code}) {
            detail::require(std::isfinite(w) && w >= 0.0, "LossWeights: weights must be >= 0");
        }
        detail::require(code_sigma > 0.0, "LossWeights: code sigma must be positive");
    }
};

// ---------------------------------------------------------------------------
// Image terms
// ---------------------------------------------------------------------------

/// Mean absolute difference. Optional per-value weights multiply each term.
inline double l1_loss(std::span<const double> image, std::span<const double> target,
                      std::span<const double> weights = {}) {
    detail::require(image.size() == target.size() && !image.empty(), "l1_loss: shape mismatch");
    detail::require(weights.empty() || weights.size() == image.size(), "l1_loss: weight shape mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < image.size(); ++i) {
        s += (weights.empty() ? 1.0 : weights[i]) * std::abs(image[i] - target[i]);
    }
    return s / static_cast<double>(image.size());
}

struct DepthLoss {
    double value    = 0.0;
    bool empty_mask = false;
};

inline constexpr double kDepthMaskThreshold = 0.5;

/// Mean squared depth error over pixels whose target alpha exceeds 0.5.
inline DepthLoss depth_loss(std::span<const double> depth, std::span<const double> target,
                            std::span<const double> target_alpha) {
    detail::require(depth.size() == target.size() && depth.size() == target_alpha.size(),
                    "depth_loss: shape mismatch");
    double s      = 0.0;
    std::size_t m = 0;
    for (std::size_t i = 0; i < depth.size(); ++i) {
        if (target_alpha[i] > kDepthMaskThreshold) {
            const double d = depth[i] - target[i];
            s += d * d;
            ++m;
        }
    }
    if (m == 0) return {0.0, true};
    return {s / static_cast<double>(m), false};
}

/// lambda * mean squared difference between rendered alpha and target mask.
inline double silhouette_loss(std::span<const double> alpha, std::span<const double> mask, double lambda = 1.0) {
    detail::require(alpha.size() == mask.size() && !alpha.empty(), "silhouette_loss: shape mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < alpha.size(); ++i) {
        const double d = alpha[i] - mask[i];
        s += d * d;
    }
    return lambda * s / static_cast<double>(alpha.size());
}

/// lambda * mean over points of (1/K) sum of the K nearest influences.
inline double coverage_loss(const UVAvatar &avatar, std::span<const Vec3> points, const RenderConfig &cfg,
                            const UniformGridIndex &index, double lambda = 0.001) {
    detail::require(!points.empty(), "coverage_loss: no sample points");
    const int k = std::min<int>(cfg.knn_k, static_cast<int>(avatar.texel_count()));
    double total = 0.0;
    for (const Vec3 &x : points) {
        double s = 0.0;
        for (const auto &nb : index.query(Vec3::Zero(), x, k)) {
            s += rbf_influence(avatar.pose(static_cast<std::size_t>(nb.index)), x, cfg.eta, cfg.tau);
        }
        total += s / k;
    }
    return lambda * total / static_cast<double>(points.size());
}

// ---------------------------------------------------------------------------
// Pose and code regularizers. Each kernel evaluates on flat per-texel pose
// vectors [center, rotation, radii] and optionally accumulates its gradient.
// ---------------------------------------------------------------------------

namespace detail {

inline double volume_kernel(std::span<const double> poses, double lambda, double *grad) {
    const std::size_t n = poses.size() / kPoseDim;
    const double c      = lambda * (4.0 * kPi / 3.0) / static_cast<double>(n);
    double s            = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double *r = poses.data() + i * kPoseDim + 6;
        s += r[0] * r[1] * r[2];
        if (grad) {
            double *g = grad + i * kPoseDim + 6;
            g[0] += c * r[1] * r[2];
            g[1] += c * r[0] * r[2];
            g[2] += c * r[0] * r[1];
        }
    }
    return c * s;
}

inline double tv_kernel(std::span<const double> poses, int height, int width, double lambda, double *grad) {
    const std::size_t n = static_cast<std::size_t>(height) * width;
    const double c      = lambda / static_cast<double>(n);
    double s            = 0.0;
    auto diff = [&](std::size_t a, std::size_t b) {
        for (int ch = 0; ch < kPoseDim; ++ch) {
            const double d = poses[b * kPoseDim + ch] - poses[a * kPoseDim + ch];
            s += std::abs(d);
            if (grad) {
                const double sg = d > 0.0 ? c : (d < 0.0 ? -c : 0.0);
                grad[b * kPoseDim + ch] += sg;
                grad[a * kPoseDim + ch] -= sg;
            }
        }
    };
    for (int h = 0; h < height; ++h) {
        for (int w = 0; w < width; ++w) {
            const std::size_t i = static_cast<std::size_t>(h) * width + w;
            if (h + 1 < height) diff(i, i + width);
            if (w + 1 < width) diff(i, i + 1);
        }
    }
    return c * s;
}

inline double mesh_kernel(std::span<const double> poses, std::span<const Vec3> anchors, double lambda,
                          double *grad) {
    const std::size_t n = anchors.size();
    const double c      = lambda / static_cast<double>(n);
    double s            = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (int a = 0; a < 3; ++a) {
            const double d = poses[i * kPoseDim + a] - anchors[i][a];
            s += d * d;
            if (grad) grad[i * kPoseDim + a] += 2.0 * c * d;
        }
    }
    return c * s;
}

inline double code_kernel(std::span<const double> z, double lambda, double sigma, double *grad) {
    const double c = lambda / (sigma * sigma);
    double s       = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        s += z[i] * z[i];
        if (grad) grad[i] += 2.0 * c * z[i];
    }
    return c * s;
}

} // namespace detail

/// Flat [center, rotation, radii] per texel.
inline std::vector<double> flatten_poses(const UVAvatar &av) {
    std::vector<double> p(av.texel_count() * kPoseDim);
    for (std::size_t i = 0; i < av.texel_count(); ++i) {
        for (int a = 0; a < 3; ++a) {
            p[i * kPoseDim + a]     = av.centers[i][a];
            p[i * kPoseDim + 3 + a] = av.rotations[i][a];
            p[i * kPoseDim + 6 + a] = av.radii[i][a];
        }
    }
    return p;
}

inline void unflatten_poses(std::span<const double> p, UVAvatar &av) {
    detail::require(p.size() == av.texel_count() * kPoseDim, "unflatten_poses: size mismatch");
    for (std::size_t i = 0; i < av.texel_count(); ++i) {
        for (int a = 0; a < 3; ++a) {
            av.centers[i][a]   = p[i * kPoseDim + a];
            av.rotations[i][a] = p[i * kPoseDim + 3 + a];
            av.radii[i][a]     = p[i * kPoseDim + 6 + a];
        }
    }
}

/// lambda * mean over texels of the ellipsoid volume (4 pi / 3) r1 r2 r3.
inline double volume_loss(const UVAvatar &av, double lambda = 1.0) {
    return detail::volume_kernel(flatten_poses(av), lambda, nullptr);
}

/// lambda / N * sum of absolute forward differences of the 9 pose channels.
inline double tv_loss(const UVAvatar &av, double lambda = 0.1) {
    return detail::tv_kernel(flatten_poses(av), av.height, av.width, lambda, nullptr);
}

/// lambda / N * sum ||anchor - center||^2.
inline double mesh_loss(const UVAvatar &av, double lambda = 0.01) {
    return detail::mesh_kernel(flatten_poses(av), av.anchors, lambda, nullptr);
}

/// lambda / sigma^2 * ||z||^2.
inline double code_loss(std::span<const double> z, double lambda = 1e-4, double sigma = 1.0) {
    return detail::code_kernel(z, lambda, sigma, nullptr);
}

// ---------------------------------------------------------------------------
// Totals
// ---------------------------------------------------------------------------

/// Weighted terms of the objective; `total` is their sum.
struct LossBreakdown {
    double l1         = 0.0;
    double depth      = 0.0;
    double coverage   = 0.0;
    double volume     = 0.0;
    double silhouette = 0.0;
    double tv         = 0.0;
    double mesh       = 0.0;
    double code       = 0.0;
    double total      = 0.0;
    bool depth_mask_empty = false;

    void finish() { total = l1 + depth + coverage + volume + silhouette + tv + mesh + code; }
};

/// Rendered maps and their targets for one image or patch.
struct ImageTargets {
    std::span<const double> color; // P x 3
    std::span<const double> depth; // P (may be empty: no depth supervision)
    std::span<const double> alpha; // P
};

/// Full objective for already-rendered outputs. `z` may be empty.
inline LossBreakdown total_loss(const RenderOutput &out, const ImageTargets &target, const UVAvatar &avatar,
                                std::span<const double> z, const LossWeights &w) {
    w.validate();
    LossBreakdown b;
    b.l1 = l1_loss(out.color, target.color);
    if (!target.depth.empty()) {
        const auto d      = depth_loss(out.depth, target.depth, target.alpha);
        b.depth           = w.depth * d.value;
        b.depth_mask_empty = d.empty_mask;
    }
    b.silhouette = silhouette_loss(out.alpha, target.alpha, w.silhouette);
    b.coverage   = w.coverage * out.mean_influence;
    const auto p = flatten_poses(avatar);
    b.volume     = detail::volume_kernel(p, w.volume, nullptr);
    b.tv         = detail::tv_kernel(p, avatar.height, avatar.width, w.tv, nullptr);
    b.mesh       = detail::mesh_kernel(p, avatar.anchors, w.mesh, nullptr);
    b.code       = z.empty() ? 0.0 : detail::code_kernel(z, w.code, w.code_sigma, nullptr);
    b.finish();
    return b;
}

// ---------------------------------------------------------------------------
// Tape nodes for the regularizers
// ---------------------------------------------------------------------------

namespace ad {

namespace detail {

template <typename Kernel>
Var regularizer_node(const char *name, const Var &x, Kernel kernel) {
    const bool rec = x.tape().recording();
    std::vector<double> g(rec ? x.size() : 0, 0.0);
    const double v = kernel(x.value(), rec ? g.data() : nullptr);
    return fused_scalar(name, v, {x}, {std::move(g)});
}

} // namespace detail

inline Var volume_loss(const Var &poses, double lambda) {
    return detail::regularizer_node("volume_loss", poses, [&](std::span<const double> p, double *g) {
        return uvg::detail::volume_kernel(p, lambda, g);
    });
}

inline Var tv_loss(const Var &poses, int height, int width, double lambda) {
    return detail::regularizer_node("tv_loss", poses, [&](std::span<const double> p, double *g) {
        return uvg::detail::tv_kernel(p, height, width, lambda, g);
    });
}

inline Var mesh_loss(const Var &poses, std::span<const Vec3> anchors, double lambda) {
    return detail::regularizer_node("mesh_loss", poses, [&](std::span<const double> p, double *g) {
        return uvg::detail::mesh_kernel(p, anchors, lambda, g);
    });
}

inline Var code_loss(const Var &z, double lambda, double sigma) {
    return detail::regularizer_node("code_loss", z, [&](std::span<const double> p, double *g) {
        return uvg::detail::code_kernel(p, lambda, sigma, g);
    });
}

} // namespace ad

} // namespace uvg
