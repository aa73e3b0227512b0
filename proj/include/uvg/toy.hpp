// Copyright Contributors to the uvg Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "uvg/core.hpp"
#include "uvg/io.hpp"
#include "uvg/render.hpp"

#include <cmath>
#include <random>
#include <string>
#include <vector>

namespace uvg::toy {

enum class Kind { sphere, two_lobe, checker_sphere };

inline Kind parse_kind(const std::string &s) {
    if (s == "sphere") return Kind::sphere;
    if (s == "two-lobe") return Kind::two_lobe;
    if (s == "checker-sphere") return Kind::checker_sphere;
    throw std::invalid_argument("unknown toy dataset kind '" + s + "'");
}

struct Options {
    Kind kind        = Kind::checker_sphere;
    int views        = 16;
    int resolution   = 32;
    std::uint64_t seed = 0;
    int grid         = 8;   // UV grid is grid x grid
    int plane_size   = 8;
    double distance  = 3.2; // camera distance from the origin
    int checker_cell = 1;   // tri-plane nodes per checker cell
};

/// Points on a sphere along a Fibonacci spiral, texel i = spiral index i.
inline AnchorGrid sphere_anchors(int height, int width, const Vec3 &center = Vec3::Zero(), double radius = 1.0,
                                 double scale_factor = 0.6) {
    detail::require(height > 0 && width > 0 && radius > 0.0, "sphere_anchors: bad arguments");
    AnchorGrid g;
    g.height            = height;
    g.width             = width;
    const std::size_t n = g.texel_count();
    const double golden = kPi * (3.0 - std::sqrt(5.0));
    const double s      = scale_factor * radius * std::sqrt(4.0 * kPi / double(n));
    for (std::size_t i = 0; i < n; ++i) {
        const double z   = 1.0 - (2.0 * double(i) + 1.0) / double(n);
        const double r   = std::sqrt(std::max(0.0, 1.0 - z * z));
        const double phi = golden * double(i);
        const Vec3 nrm   = Vec3(r * std::cos(phi), r * std::sin(phi), z).normalized();
        g.anchors.push_back(center + radius * nrm);
        g.normals.push_back(nrm);
        g.scales.push_back(s);
    }
    return g;
}

/// Two touching spheres along x; the first half of the texels covers the left lobe.
inline AnchorGrid two_lobe_anchors(int height, int width) {
    detail::require(height % 2 == 0, "two_lobe_anchors: height must be even");
    const AnchorGrid a = sphere_anchors(height / 2, width, Vec3(-0.55, 0, 0), 0.7);
    const AnchorGrid b = sphere_anchors(height / 2, width, Vec3(0.55, 0, 0), 0.7);
    AnchorGrid g       = a;
    g.height           = height;
    g.anchors.insert(g.anchors.end(), b.anchors.begin(), b.anchors.end());
    g.normals.insert(g.normals.end(), b.normals.begin(), b.normals.end());
    g.scales.insert(g.scales.end(), b.scales.begin(), b.scales.end());
    return g;
}

/// MLP whose four outputs equal the first four input features: hidden
/// units carry relu(f) and relu(-f).
inline RenderMLP passthrough_mlp() {
    RenderMLP m;
    for (int i = 0; i < RenderMLP::kIn; ++i) {
        m.w1(i, i)                 = 1.0;
        m.w1(i, i + RenderMLP::kIn) = -1.0;
    }
    for (int o = 0; o < RenderMLP::kOut; ++o) {
        m.w2(o, o)                 = 1.0;
        m.w2(o + RenderMLP::kIn, o) = -1.0;
    }
    return m;
}

inline constexpr double kOpacityLogit = 3.0;
inline constexpr double kColorLogit   = 2.0;

/// Reference avatar for a toy scene; appearance lives in the XY plane.
inline UVAvatar reference_avatar(const Options &o) {
    const AnchorGrid g = o.kind == Kind::two_lobe ? two_lobe_anchors(o.grid, o.grid) : sphere_anchors(o.grid, o.grid);
    UVAvatar av        = init_from_anchors(g, o.plane_size, kFeatureDim);
    const int S        = o.plane_size;
    for (std::size_t i = 0; i < av.texel_count(); ++i) {
        auto p  = av.payload_mut(i);
        auto at = [&](int a, int b, int c) -> double & { return p[((std::size_t(0) * S + a) * S + b) * kFeatureDim + c]; };
        const Vec3 &n = av.anchor_normals[i];
        for (int a = 0; a < S; ++a) {
            for (int b = 0; b < S; ++b) {
                Vec3 logit;
                switch (o.kind) {
                case Kind::sphere: logit = kColorLogit * n; break;
                case Kind::two_lobe:
                    logit = i < av.texel_count() / 2 ? Vec3(kColorLogit, -0.5 * kColorLogit, n.z())
                                                     : Vec3(-0.5 * kColorLogit, n.z(), kColorLogit);
                    break;
                case Kind::checker_sphere: {
                    const bool odd = ((a / o.checker_cell) + (b / o.checker_cell)) % 2 == 1;
                    logit = odd ? Vec3(kColorLogit, -kColorLogit, -kColorLogit)
                                : Vec3(-kColorLogit, -kColorLogit, kColorLogit);
                    break;
                }
                }
                for (int c = 0; c < 3; ++c) at(a, b, c) = logit[c];
                at(a, b, 3) = kOpacityLogit;
            }
        }
    }
    return io::round_to_file_precision(av);
}

/// Camera at `eye` looking at the origin; image y points away from world +z.
inline Camera look_at_camera(const Vec3 &eye, int resolution, double near, double far) {
    const Vec3 f = (-eye).normalized();
    Vec3 up      = Vec3::UnitZ();
    if (f.cross(up).norm() < 1e-6) up = Vec3::UnitY();
    const Vec3 x = f.cross(up).normalized();
    const Vec3 y = f.cross(x);
    Camera c;
    c.width = c.height = resolution;
    c.fx = c.fy = double(resolution);
    c.cx = c.cy        = 0.5 * resolution;
    c.near             = near;
    c.far              = far;
    c.cam_to_world.block<3, 1>(0, 0) = x;
    c.cam_to_world.block<3, 1>(0, 1) = y;
    c.cam_to_world.block<3, 1>(0, 2) = f;
    c.cam_to_world.block<3, 1>(0, 3) = eye;
    return c;
}

/// Views spread over a sphere of radius `distance`, rotated about z by a seeded angle.
inline std::vector<Camera> orbit_cameras(int views, int resolution, double distance, std::uint64_t seed) {
    detail::require(views >= 1 && resolution >= 1 && distance > 1.6, "orbit_cameras: bad arguments");
    std::mt19937_64 rng(seed);
    const double yaw    = std::uniform_real_distribution<double>(0.0, 2.0 * kPi)(rng);
    const double golden = kPi * (3.0 - std::sqrt(5.0));
    std::vector<Camera> cams;
    for (int i = 0; i < views; ++i) {
        const double z   = 0.9 * (1.0 - (2.0 * i + 1.0) / views);
        const double r   = std::sqrt(1.0 - z * z);
        const double phi = yaw + golden * i;
        const Vec3 eye   = distance * Vec3(r * std::cos(phi), r * std::sin(phi), z);
        cams.push_back(look_at_camera(eye, resolution, distance - 1.6, distance + 1.6));
    }
    return cams;
}

/// Renders the reference avatar into a full dataset, maps quantized to file precision.
inline io::Dataset make_dataset(const Options &o) {
    detail::require(o.views >= 1 && o.resolution >= 1, "generate_toy_dataset: need views and resolution >= 1");
    io::Dataset ds;
    ds.reference          = reference_avatar(o);
    ds.reference_mlp      = passthrough_mlp();
    ds.anchors            = io::anchors_of(ds.reference);
    ds.render             = RenderConfig{};
    ds.render.jitter_seed = o.seed;
    const auto index      = build_index(ds.reference);
    for (const Camera &cam : orbit_cameras(o.views, o.resolution, o.distance, o.seed)) {
        const RenderOutput out = render_image(ds.reference, ds.reference_mlp, cam, ds.render, index);
        FitView v;
        v.camera     = cam;
        v.color      = out.color;
        v.depth      = out.depth;
        v.alpha      = out.alpha;
        v.background = ds.render.background;
        io::quantize_view(v);
        ds.views.push_back(std::move(v));
    }
    return ds;
}

inline io::Dataset generate_toy_dataset(const Options &o, const std::filesystem::path &dir) {
    io::Dataset ds = make_dataset(o);
    io::save_dataset(ds, dir);
    return ds;
}

} // namespace uvg::toy
