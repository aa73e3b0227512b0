// Copyright Contributors to the uvg Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "uvg/core.hpp"

#include <cmath>
#include <span>
#include <utility>

namespace uvg {

/// Moves every center by (target - anchor) and rebases the anchors onto the
/// target vertices, so successive offsets compose additively.
inline UVAvatar apply_expression_offset(const UVAvatar &av, std::span<const Vec3> target_vertices) {
    detail::require(target_vertices.size() == av.texel_count(), "apply_expression_offset: shape mismatch");
    UVAvatar out = av;
    for (std::size_t i = 0; i < av.texel_count(); ++i) {
        detail::require(target_vertices[i].allFinite(),
                        "apply_expression_offset: non-finite vertex at texel " + std::to_string(i));
        out.centers[i] = av.centers[i] + (target_vertices[i] - av.anchors[i]);
        out.anchors[i] = target_vertices[i];
    }
    return out;
}

namespace detail {

inline void require_compatible(const UVAvatar &a, const UVAvatar &b, const UVMask *m, const char *op) {
    require(a.same_dims(b), std::string(op) + ": avatars differ in dimensions");
    if (m) {
        require(m->height == a.height && m->width == a.width &&
                    m->texels.size() == a.texel_count(),
                std::string(op) + ": mask shape does not match the avatar");
    }
}

inline void copy_geometry(UVAvatar &dst, const UVAvatar &src, std::size_t i) {
    dst.centers[i]        = src.centers[i];
    dst.rotations[i]      = src.rotations[i];
    dst.radii[i]          = src.radii[i];
    dst.anchors[i]        = src.anchors[i];
    dst.anchor_normals[i] = src.anchor_normals[i];
    dst.anchor_scales[i]  = src.anchor_scales[i];
}

inline void copy_texture(UVAvatar &dst, const UVAvatar &src, std::size_t i) {
    const auto from = src.payload(i).values;
    auto to         = dst.payload_mut(i);
    std::copy(from.begin(), from.end(), to.begin());
}

} // namespace detail

/// Copies the selected channels of `source` into `target` inside the mask.
/// Geometry carries pose and the anchor data it is attached to.
inline UVAvatar region_transfer(const UVAvatar &target, const UVAvatar &source, const UVMask &mask) {
    detail::require_compatible(target, source, &mask, "region_transfer");
    UVAvatar out = target;
    for (std::size_t i = 0; i < out.texel_count(); ++i) {
        if (!mask.selected(i)) continue;
        if (mask.geometry()) detail::copy_geometry(out, source, i);
        if (mask.texture()) detail::copy_texture(out, source, i);
    }
    return out;
}

/// (A shape + B texture, B shape + A texture).
inline std::pair<UVAvatar, UVAvatar> swap_shape_texture(const UVAvatar &a, const UVAvatar &b) {
    detail::require_compatible(a, b, nullptr, "swap_shape_texture");
    const UVMask tex(a.height, a.width, true, ChannelSelector::texture);
    return {region_transfer(a, b, tex), region_transfer(b, a, tex)};
}

/// Wraps an angle difference into [-pi, pi).
inline double wrap_angle(double d) {
    d = std::fmod(d + kPi, 2.0 * kPi);
    if (d < 0.0) d += 2.0 * kPi;
    return d - kPi;
}

/// Linear blend of the selected channels from A (lambda = 0) towards B
/// (lambda = 1). Rotations move along the shortest angle per component.
inline UVAvatar interpolate(const UVAvatar &a, const UVAvatar &b, double lambda,
                            ChannelSelector sel = ChannelSelector::both) {
    detail::require_compatible(a, b, nullptr, "interpolate");
    detail::require(lambda >= 0.0 && lambda <= 1.0, "interpolate: weight must be in [0, 1]");
    const UVMask all(a.height, a.width, true, sel);
    if (lambda == 1.0) return region_transfer(a, b, all);
    UVAvatar out = a;
    if (lambda == 0.0) return out;
    auto lerp = [lambda](const Vec3 &x, const Vec3 &y) -> Vec3 { return x + lambda * (y - x); };
    for (std::size_t i = 0; i < a.texel_count(); ++i) {
        if (all.geometry()) {
            out.centers[i] = lerp(a.centers[i], b.centers[i]);
            for (int k = 0; k < 3; ++k)
                out.rotations[i][k] = a.rotations[i][k] + lambda * wrap_angle(b.rotations[i][k] - a.rotations[i][k]);
            out.radii[i]          = lerp(a.radii[i], b.radii[i]);
            out.anchors[i]        = lerp(a.anchors[i], b.anchors[i]);
            const Vec3 n          = lerp(a.anchor_normals[i], b.anchor_normals[i]);
            out.anchor_normals[i] = n.norm() > 0.0 ? Vec3(n.normalized()) : a.anchor_normals[i];
            out.anchor_scales[i]  = a.anchor_scales[i] + lambda * (b.anchor_scales[i] - a.anchor_scales[i]);
        }
        if (all.texture()) {
            const auto pb = b.payload(i).values;
            auto po       = out.payload_mut(i);
            for (std::size_t k = 0; k < po.size(); ++k) po[k] += lambda * (pb[k] - po[k]);
        }
    }
    return out;
}

} // namespace uvg
