// Copyright Contributors to the uvg Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace uvg {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

inline constexpr double kPi = 3.14159265358979323846;

/// Number of feature channels consumed by the shading MLP.
inline constexpr int kFeatureDim = 8;
/// Pose scalars per texel: center, Euler rotation, radii.
inline constexpr int kPoseDim = 9;

namespace detail {

inline void require(bool ok, const std::string &msg) {
    if (!ok) {
        throw std::invalid_argument(msg);
    }
}

} // namespace detail

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

/// Nine-parameter pose of one Gaussian: center, intrinsic XYZ Euler angles and
/// per-axis standard deviations.
struct GaussianPose {
    Vec3 center   = Vec3::Zero();
    Vec3 rotation = Vec3::Zero();
    Vec3 radii    = Vec3::Ones();

    void validate() const {
        detail::require(center.allFinite(), "GaussianPose: non-finite center");
        detail::require(rotation.allFinite(), "GaussianPose: non-finite rotation");
        detail::require(radii.allFinite() && (radii.array() > 0.0).all(),
                        "GaussianPose: radii must be finite and positive");
    }
};

/// Read-only view of one texel's tri-plane: planes XY, XZ, YZ, each
/// size x size nodes of `channels` features, laid out [plane][a][b][channel].
/// A size of 1 degenerates to a per-texel feature vector (sum of three nodes).
struct TriPlaneView {
    std::span<const double> values;
    int size     = 8;
    int channels = kFeatureDim;

    double at(int plane, int a, int b, int c) const {
        return values[((static_cast<std::size_t>(plane) * size + a) * size + b) * channels + c];
    }
};

/// Owning tri-plane payload.
struct TriPlanePayload {
    int size     = 8;
    int channels = kFeatureDim;
    std::vector<double> values;

    TriPlanePayload() = default;
    TriPlanePayload(int s, int c)
        : size(s), channels(c), values(static_cast<std::size_t>(3) * s * s * c, 0.0) {}

    TriPlaneView view() const { return {values, size, channels}; }

    double &at(int plane, int a, int b, int c) {
        return values[((static_cast<std::size_t>(plane) * size + a) * size + b) * channels + c];
    }
};

/// The UV-grid avatar: one Gaussian and one tri-plane per texel plus the
/// rest-state mesh samples it was anchored to. Texels are row-major, W fastest.
struct UVAvatar {
    int height        = 0;
    int width         = 0;
    int plane_size    = 8;
    int channels      = kFeatureDim;

    std::vector<Vec3> centers;
    std::vector<Vec3> rotations;
    std::vector<Vec3> radii;
    std::vector<double> payloads;

    std::vector<Vec3> anchors;
    std::vector<Vec3> anchor_normals;
    std::vector<double> anchor_scales;

    UVAvatar() = default;
    UVAvatar(int h, int w, int s = 8, int c = kFeatureDim)
        : height(h), width(w), plane_size(s), channels(c) {
        detail::require(h > 0 && w > 0 && s > 0 && c > 0, "UVAvatar: dimensions must be positive");
        const auto n = texel_count();
        centers.assign(n, Vec3::Zero());
        rotations.assign(n, Vec3::Zero());
        radii.assign(n, Vec3::Ones());
        payloads.assign(n * payload_stride(), 0.0);
        anchors.assign(n, Vec3::Zero());
        anchor_normals.assign(n, Vec3::UnitZ());
        anchor_scales.assign(n, 1.0);
    }

    std::size_t texel_count() const { return static_cast<std::size_t>(height) * width; }
    std::size_t texel(int h, int w) const { return static_cast<std::size_t>(h) * width + w; }
    std::size_t payload_stride() const {
        return static_cast<std::size_t>(3) * plane_size * plane_size * channels;
    }

    GaussianPose pose(std::size_t i) const { return {centers[i], rotations[i], radii[i]}; }

    void set_pose(std::size_t i, const GaussianPose &p) {
        centers[i]   = p.center;
        rotations[i] = p.rotation;
        radii[i]     = p.radii;
    }

    TriPlaneView payload(std::size_t i) const {
        return {std::span<const double>(payloads).subspan(i * payload_stride(), payload_stride()),
                plane_size, channels};
    }

    std::span<double> payload_mut(std::size_t i) {
        return std::span<double>(payloads).subspan(i * payload_stride(), payload_stride());
    }

    bool same_dims(const UVAvatar &o) const {
        return height == o.height && width == o.width && plane_size == o.plane_size &&
               channels == o.channels;
    }

    void validate() const {
        const auto n = texel_count();
        detail::require(height > 0 && width > 0, "UVAvatar: empty grid");
        detail::require(centers.size() == n && rotations.size() == n && radii.size() == n &&
                            anchors.size() == n && anchor_normals.size() == n &&
                            anchor_scales.size() == n,
                        "UVAvatar: grid sizes disagree");
        detail::require(payloads.size() == n * payload_stride(), "UVAvatar: payload size mismatch");
        for (std::size_t i = 0; i < n; ++i) {
            pose(i).validate();
            detail::require(anchors[i].allFinite(), "UVAvatar: non-finite anchor");
        }
    }
};

/// Which per-texel channels an edit or inpainting mask applies to.
enum class ChannelSelector { geometry, texture, both };

/// H x W texel selection plus a channel selector.
struct UVMask {
    int height = 0;
    int width  = 0;
    std::vector<std::uint8_t> texels; // 1 = selected, row-major
    ChannelSelector channels = ChannelSelector::both;

    UVMask() = default;
    UVMask(int h, int w, bool value = false, ChannelSelector sel = ChannelSelector::both)
        : height(h), width(w), texels(static_cast<std::size_t>(h) * w, value ? 1 : 0), channels(sel) {}

    bool selected(std::size_t i) const { return texels[i] != 0; }
    bool geometry() const { return channels != ChannelSelector::texture; }
    bool texture() const { return channels != ChannelSelector::geometry; }
};

/// Pinhole camera, OpenCV convention (x right, y down, z forward).
struct Camera {
    double fx = 1.0, fy = 1.0, cx = 0.0, cy = 0.0;
    int width = 1, height = 1;
    double near = 0.1, far = 10.0;
    Mat4 cam_to_world = Mat4::Identity();

    Mat3 rotation() const { return cam_to_world.block<3, 3>(0, 0); }
    Vec3 origin() const { return cam_to_world.block<3, 1>(0, 3); }

    void validate() const {
        detail::require(fx > 0.0 && fy > 0.0, "Camera: focal lengths must be positive");
        detail::require(width > 0 && height > 0, "Camera: image size must be positive");
        detail::require(near > 0.0 && near < far, "Camera: need 0 < near < far");
        detail::require(cam_to_world.allFinite(), "Camera: non-finite transform");
        const Mat3 r = rotation();
        detail::require((r * r.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff() <= 1e-9,
                        "Camera: rotation block is not orthonormal");
        detail::require(std::abs(r.determinant() - 1.0) <= 1e-9, "Camera: rotation is a reflection");
        detail::require(cam_to_world.row(3).isApprox(Eigen::RowVector4d(0, 0, 0, 1)),
                        "Camera: bottom row must be (0,0,0,1)");
    }

    /// Unit ray direction through the center of pixel (px, py).
    Vec3 ray_direction(int px, int py) const {
        const Vec3 d((px + 0.5 - cx) / fx, (py + 0.5 - cy) / fy, 1.0);
        return (rotation() * d).normalized();
    }
};

enum class PayloadKind { triplane, vector };

struct RenderConfig {
    int samples_per_ray   = 32;
    int knn_k             = 3;
    double eta            = 5.0;
    double tau            = 1.0;
    double epsilon        = 1e-6;
    Vec3 background       = Vec3::Ones();
    bool jitter           = true;
    std::uint64_t jitter_seed = 0;

    void validate() const {
        detail::require(samples_per_ray >= 1, "RenderConfig: samples_per_ray must be >= 1");
        detail::require(knn_k >= 1, "RenderConfig: knn_k must be >= 1");
        detail::require(eta > 0.0 && tau > 0.0 && epsilon > 0.0,
                        "RenderConfig: eta, tau and epsilon must be positive");
        detail::require(background.allFinite(), "RenderConfig: non-finite background");
    }
};

// ---------------------------------------------------------------------------
// Rotation and covariance algebra
// ---------------------------------------------------------------------------

namespace detail {

inline Mat3 rot_x(double a) {
    const double c = std::cos(a), s = std::sin(a);
    Mat3 m;
    m << 1, 0, 0, 0, c, -s, 0, s, c;
    return m;
}
inline Mat3 rot_y(double a) {
    const double c = std::cos(a), s = std::sin(a);
    Mat3 m;
    m << c, 0, s, 0, 1, 0, -s, 0, c;
    return m;
}
inline Mat3 rot_z(double a) {
    const double c = std::cos(a), s = std::sin(a);
    Mat3 m;
    m << c, -s, 0, s, c, 0, 0, 0, 1;
    return m;
}
inline Mat3 drot_x(double a) {
    const double c = std::cos(a), s = std::sin(a);
    Mat3 m;
    m << 0, 0, 0, 0, -s, -c, 0, c, -s;
    return m;
}
inline Mat3 drot_y(double a) {
    const double c = std::cos(a), s = std::sin(a);
    Mat3 m;
    m << -s, 0, c, 0, 0, 0, -c, 0, -s;
    return m;
}
inline Mat3 drot_z(double a) {
    const double c = std::cos(a), s = std::sin(a);
    Mat3 m;
    m << -s, -c, 0, c, -s, 0, 0, 0, 0;
    return m;
}

} // namespace detail

/// Intrinsic X-then-Y-then-Z rotation, R = Rx(a) Ry(b) Rz(c).
inline Mat3 rotation_matrix(const Vec3 &angles) {
    detail::require(angles.allFinite(), "rotation_matrix: non-finite angle");
    return detail::rot_x(angles.x()) * detail::rot_y(angles.y()) * detail::rot_z(angles.z());
}

/// Partial derivatives dR/da, dR/db, dR/dc of rotation_matrix.
inline std::array<Mat3, 3> rotation_matrix_derivatives(const Vec3 &angles) {
    using namespace detail;
    const Mat3 rx = rot_x(angles.x()), ry = rot_y(angles.y()), rz = rot_z(angles.z());
    return {drot_x(angles.x()) * ry * rz, rx * drot_y(angles.y()) * rz, rx * ry * drot_z(angles.z())};
}

/// Inverse covariance R diag(radii^-2) R^T.
inline Mat3 precision_matrix(const GaussianPose &pose) {
    pose.validate();
    const Mat3 r   = rotation_matrix(pose.rotation);
    const Vec3 inv = pose.radii.cwiseInverse().cwiseAbs2();
    return r * inv.asDiagonal() * r.transpose();
}

/// Squared Mahalanobis distance of offset `d = x - center` under `pose`.
inline double mahalanobis_sq(const Mat3 &rot, const Vec3 &radii, const Vec3 &d) {
    const Vec3 local = rot.transpose() * d;
    return local.cwiseQuotient(radii).squaredNorm();
}

/// Scaled anisotropic RBF: eta * exp(-(x-mu)^T Sigma^-1 (x-mu) / (2 tau)).
inline double rbf_influence(const GaussianPose &pose, const Vec3 &x, double eta = 5.0,
                            double tau = 1.0) {
    pose.validate();
    const double m = mahalanobis_sq(rotation_matrix(pose.rotation), pose.radii, x - pose.center);
    return eta * std::exp(-m / (2.0 * tau));
}

/// Extent of the local tri-plane cube, in standard deviations.
inline constexpr double kCubeSigmas = 3.0;

/// Maps a world point into the Gaussian's local cube [-1,1]^3 (+-3 radii), clamped.
inline Vec3 world_to_local(const GaussianPose &pose, const Vec3 &x) {
    pose.validate();
    const Vec3 local = rotation_matrix(pose.rotation).transpose() * (x - pose.center);
    Vec3 u           = local.cwiseQuotient(kCubeSigmas * pose.radii);
    return u.cwiseMax(-1.0).cwiseMin(1.0);
}

/// Euler angles (intrinsic XYZ) of a rotation matrix.
inline Vec3 euler_from_matrix(const Mat3 &r) {
    const double sb = std::clamp(r(0, 2), -1.0, 1.0);
    const double b  = std::asin(sb);
    if (std::abs(sb) < 1.0 - 1e-12) {
        return {std::atan2(-r(1, 2), r(2, 2)), b, std::atan2(-r(0, 1), r(0, 0))};
    }
    // Gimbal lock: only a +- c is observable; put it all in a.
    return {std::atan2(r(2, 1), r(1, 1)), b, 0.0};
}

/// Zero-roll shortest-arc rotation taking +z onto `normal`.
inline Vec3 align_z_to(const Vec3 &normal) {
    const Vec3 z = Vec3::UnitZ();
    const double c = z.dot(normal);
    Mat3 r;
    if (c > 1.0 - 1e-15) {
        return Vec3::Zero();
    }
    if (c < -1.0 + 1e-15) {
        r = detail::rot_x(kPi);
    } else {
        const Vec3 axis = z.cross(normal);
        r = Eigen::AngleAxisd(std::atan2(axis.norm(), c), axis.normalized()).toRotationMatrix();
    }
    return euler_from_matrix(r);
}

/// Rasterized mesh samples, one per texel: position, unit normal, scale.
struct AnchorGrid {
    int height = 0;
    int width  = 0;
    std::vector<Vec3> anchors;
    std::vector<Vec3> normals;
    std::vector<double> scales;

    std::size_t texel_count() const { return static_cast<std::size_t>(height) * width; }
};

/// Builds an avatar from rasterized mesh samples: centers at the anchors,
/// local +z along the normal, radii (s, s, s/2), zero payloads.
inline UVAvatar init_from_anchors(int height, int width, std::span<const Vec3> anchors,
                                  std::span<const Vec3> normals, std::span<const double> scales,
                                  int plane_size = 8, int channels = kFeatureDim) {
    UVAvatar av(height, width, plane_size, channels);
    const auto n = av.texel_count();
    detail::require(anchors.size() == n && normals.size() == n && scales.size() == n,
                    "init_from_anchors: grid shape mismatch");
    for (std::size_t i = 0; i < n; ++i) {
        detail::require(anchors[i].allFinite(), "init_from_anchors: non-finite anchor at texel " +
                                                    std::to_string(i));
        detail::require(normals[i].allFinite() && std::abs(normals[i].norm() - 1.0) <= 1e-6,
                        "init_from_anchors: normal is not unit length at texel " + std::to_string(i));
        detail::require(std::isfinite(scales[i]) && scales[i] > 0.0,
                        "init_from_anchors: scale must be positive at texel " + std::to_string(i));
        av.anchors[i]        = anchors[i];
        av.anchor_normals[i] = normals[i];
        av.anchor_scales[i]  = scales[i];
        av.centers[i]        = anchors[i];
        av.rotations[i]      = align_z_to(normals[i]);
        av.radii[i]          = Vec3(scales[i], scales[i], 0.5 * scales[i]);
    }
    return av;
}

inline UVAvatar init_from_anchors(const AnchorGrid &grid, int plane_size = 8, int channels = kFeatureDim) {
    return init_from_anchors(grid.height, grid.width, grid.anchors, grid.normals, grid.scales, plane_size,
                             channels);
}

} // namespace uvg
