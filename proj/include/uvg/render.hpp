// Copyright Contributors to the uvg Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "uvg/core.hpp"
#include "uvg/parallel.hpp"
#include "uvg/spatial.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <vector>

namespace uvg {

/// Shared shading network: feature (8) -> ReLU hidden (32) -> sigmoid (4).
/// Parameters are stored flat: W1 [in][hidden], b1, W2 [hidden][out], b2.
struct RenderMLP {
    static constexpr int kIn     = kFeatureDim;
    static constexpr int kHidden = 32;
    static constexpr int kOut    = 4;

    static constexpr std::size_t kW1   = 0;
    static constexpr std::size_t kB1   = kW1 + kIn * kHidden;
    static constexpr std::size_t kW2   = kB1 + kHidden;
    static constexpr std::size_t kB2   = kW2 + kHidden * kOut;
    static constexpr std::size_t kSize = kB2 + kOut;

    std::vector<double> params = std::vector<double>(kSize, 0.0);

    double &w1(int i, int h) { return params[kW1 + i * kHidden + h]; }
    double &b1(int h) { return params[kB1 + h]; }
    double &w2(int h, int o) { return params[kW2 + h * kOut + o]; }
    double &b2(int o) { return params[kB2 + o]; }

    void validate() const {
        detail::require(params.size() == kSize, "RenderMLP: expected 8x32x4 parameter layout");
        for (double p : params) {
            detail::require(std::isfinite(p), "RenderMLP: non-finite weight");
        }
    }

    /// Weights and biases uniform in +-1/sqrt(fan_in). Nonzero hidden biases
    /// keep units alive when the payloads start at zero.
    static RenderMLP random(std::uint64_t seed) {
        RenderMLP m;
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> u1(-1.0 / std::sqrt(double(kIn)), 1.0 / std::sqrt(double(kIn)));
        std::uniform_real_distribution<double> u2(-1.0 / std::sqrt(double(kHidden)),
                                                  1.0 / std::sqrt(double(kHidden)));
        for (std::size_t i = kW1; i < kW2; ++i) m.params[i] = u1(rng);
        for (std::size_t i = kW2; i < kSize; ++i) m.params[i] = u2(rng);
        return m;
    }
};

struct MlpOutput {
    Vec3 color     = Vec3::Zero();
    double opacity = 0.0;
    std::array<double, RenderMLP::kHidden> pre{};
};

using Feature = std::array<double, kFeatureDim>;

struct RenderOutput {
    int width  = 0;
    int height = 0;
    std::vector<double> color; // height x width x 3
    std::vector<double> depth; // height x width
    std::vector<double> alpha; // height x width
    /// Mean over every ray sample of (1/K) sum_k g_k, the coverage statistic.
    double mean_influence = 0.0;

    RenderOutput() = default;
    RenderOutput(int w, int h)
        : width(w), height(h), color(std::size_t(w) * h * 3, 0.0), depth(std::size_t(w) * h, 0.0),
          alpha(std::size_t(w) * h, 0.0) {}

    std::size_t pixels() const { return std::size_t(width) * height; }
};

/// Pixel rectangle [x0, x0 + width) x [y0, y0 + height).
struct Window {
    int x0 = 0, y0 = 0, width = 0, height = 0;
};

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Opacity ceiling after blending; keeps transmittance strictly positive.
inline constexpr double kMaxAlpha = 1.0 - 1e-4;

// ---------------------------------------------------------------------------
// Tri-plane sampling and shading
// ---------------------------------------------------------------------------

namespace detail {

/// Axes (a, b) spanned by planes XY, XZ, YZ.
inline constexpr int kPlaneAxes[3][2] = {{0, 1}, {0, 2}, {1, 2}};

struct GridCoord {
    int i0;
    double f;
};

/// Node i sits at u = -1 + 2 i / (S - 1).
inline GridCoord grid_coord(double u, int size) {
    const double p = (u + 1.0) * 0.5 * (size - 1);
    const int i0   = std::clamp(static_cast<int>(std::floor(p)), 0, size - 2);
    return {i0, p - i0};
}

} // namespace detail

/// Sum of the bilinear samples of the three planes at local point u in [-1,1]^3.
inline Feature sample_triplane(const TriPlaneView &tp, const Vec3 &u) {
    detail::require(tp.channels == kFeatureDim, "sample_triplane: expected 8 channels");
    Feature f{};
    if (tp.size == 1) {
        for (int p = 0; p < 3; ++p)
            for (int c = 0; c < kFeatureDim; ++c) f[c] += tp.at(p, 0, 0, c);
        return f;
    }
    for (int p = 0; p < 3; ++p) {
        const auto ga = detail::grid_coord(u[detail::kPlaneAxes[p][0]], tp.size);
        const auto gb = detail::grid_coord(u[detail::kPlaneAxes[p][1]], tp.size);
        const double w00 = (1 - ga.f) * (1 - gb.f), w01 = (1 - ga.f) * gb.f;
        const double w10 = ga.f * (1 - gb.f), w11 = ga.f * gb.f;
        for (int c = 0; c < kFeatureDim; ++c) {
            f[c] += w00 * tp.at(p, ga.i0, gb.i0, c) + w01 * tp.at(p, ga.i0, gb.i0 + 1, c) +
                    w10 * tp.at(p, ga.i0 + 1, gb.i0, c) + w11 * tp.at(p, ga.i0 + 1, gb.i0 + 1, c);
        }
    }
    return f;
}

inline MlpOutput mlp_forward(const RenderMLP &mlp, const Feature &feature) {
    const double *w = mlp.params.data();
    MlpOutput out;
    std::array<double, RenderMLP::kHidden> hid{};
    for (int h = 0; h < RenderMLP::kHidden; ++h) {
        double s = w[RenderMLP::kB1 + h];
        for (int i = 0; i < RenderMLP::kIn; ++i) {
            s += feature[i] * w[RenderMLP::kW1 + i * RenderMLP::kHidden + h];
        }
        out.pre[h] = s;
        hid[h]     = s > 0.0 ? s : 0.0;
    }
    std::array<double, RenderMLP::kOut> o{};
    for (int k = 0; k < RenderMLP::kOut; ++k) {
        double s = w[RenderMLP::kB2 + k];
        for (int h = 0; h < RenderMLP::kHidden; ++h) {
            s += hid[h] * w[RenderMLP::kW2 + h * RenderMLP::kOut + k];
        }
        o[k] = s;
    }
    out.color   = Vec3(sigmoid(o[0]), sigmoid(o[1]), sigmoid(o[2]));
    out.opacity = sigmoid(o[3]);
    return out;
}

struct BlendResult {
    Vec3 color   = Vec3::Zero();
    double alpha = 0.0;
};

struct RayResult {
    Vec3 color   = Vec3::Zero();
    double depth = 0.0;
    double alpha = 0.0;
};

/// Front-to-back compositing of per-sample (alpha, color) at depths t over a
/// background. Returns color (with background), expected depth and alpha.
inline RayResult composite_samples(std::span<const double> alphas, std::span<const Vec3> colors,
                                   std::span<const double> ts, const Vec3 &background) {
    RayResult r;
    double trans = 1.0;
    for (std::size_t j = 0; j < alphas.size(); ++j) {
        const double w = trans * alphas[j];
        r.color += w * colors[j];
        r.depth += w * ts[j];
        r.alpha += w;
        trans *= 1.0 - alphas[j];
    }
    r.color += (1.0 - r.alpha) * background;
    return r;
}

/// Gradient buffers over the differentiable inputs of the renderer.
/// Poses are laid out per texel as [center(3), rotation(3), radii(3)].
struct RenderGrads {
    std::vector<double> poses;
    std::vector<double> payloads;
    std::vector<double> mlp;

    RenderGrads() = default;
    explicit RenderGrads(const UVAvatar &av)
        : poses(av.texel_count() * kPoseDim, 0.0), payloads(av.payloads.size(), 0.0),
          mlp(RenderMLP::kSize, 0.0) {}

    void add(const RenderGrads &o) {
        for (std::size_t i = 0; i < poses.size(); ++i) poses[i] += o.poses[i];
        for (std::size_t i = 0; i < payloads.size(); ++i) payloads[i] += o.payloads[i];
        for (std::size_t i = 0; i < mlp.size(); ++i) mlp[i] += o.mlp[i];
    }
};

/// Upstream derivatives of a loss with respect to one ray's outputs.
struct RayAdjoint {
    Vec3 color   = Vec3::Zero();
    double depth = 0.0;
    double alpha = 0.0;
    /// Added to dL/dg_k for every sample and neighbor (coverage term).
    double influence = 0.0;
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

inline double unit_hash(std::uint64_t seed, std::uint64_t stream, std::uint64_t j) {
    const std::uint64_t h = splitmix64(splitmix64(seed ^ splitmix64(stream)) + j);
    return static_cast<double>(h >> 11) * 0x1.0p-53;
}

struct NeighborRecord {
    int texel = -1;
    double g  = 0.0;
    Vec3 offset;  // x - center
    Vec3 local;   // R^T (x - center)
    Vec3 u_raw;   // local / (3 r), before clamping
    Feature feature{};
    MlpOutput shade;
};

struct SampleRecord {
    double t         = 0.0;
    double alpha_raw = 0.0;
    double alpha     = 0.0;
    Vec3 color       = Vec3::Zero();
    double gsum      = 0.0;
    int first        = 0;
    int count        = 0;
};

/// Per-ray record of every intermediate the reverse pass needs.
struct RayTape {
    std::vector<SampleRecord> samples;
    std::vector<NeighborRecord> neighbors;
    std::vector<Neighbor> knn;
    RayResult result;
    double influence_sum = 0.0; // sum over samples of (1/K) sum_k g_k

    void clear() {
        samples.clear();
        neighbors.clear();
        influence_sum = 0.0;
        result        = {};
    }
};

} // namespace detail

/// Immutable render context: avatar, MLP, config, KNN index and per-texel
/// rotation caches. Rays may be traced concurrently.
class RenderScene {
  public:
    RenderScene(const UVAvatar &avatar, const RenderMLP &mlp, const RenderConfig &cfg,
                const UniformGridIndex &index, bool with_derivatives = false)
        : avatar_(avatar), mlp_(mlp), cfg_(cfg), index_(index) {
        cfg.validate();
        mlp.validate();
        detail::require(avatar.channels == kFeatureDim, "render: avatar payloads need 8 channels");
        detail::require(index.size() == avatar.texel_count(), "render: index does not match avatar");
        detail::require(avatar.plane_size == 1 || avatar.plane_size >= 2, "render: bad plane size");
        const auto n = avatar.texel_count();
        rot_.resize(n);
        inv_radii_.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            avatar.pose(i).validate();
            rot_[i]       = rotation_matrix(avatar.rotations[i]);
            inv_radii_[i] = avatar.radii[i].cwiseInverse();
        }
        if (with_derivatives) {
            drot_.resize(n);
            for (std::size_t i = 0; i < n; ++i) {
                drot_[i] = rotation_matrix_derivatives(avatar.rotations[i]);
            }
        }
    }

    const UVAvatar &avatar() const { return avatar_; }
    const RenderConfig &config() const { return cfg_; }

    /// Color and opacity at a point given as origin + offset.
    BlendResult blend(const Vec3 &origin, const Vec3 &offset, detail::RayTape &tape) const {
        tape.clear();
        tape.samples.push_back({});
        shade_sample(origin, offset, tape, tape.samples.back());
        return {tape.samples.back().color, tape.samples.back().alpha};
    }

    /// Sample depths for one ray; stratified with a per-stream hash jitter.
    void sample_depths(double near, double far, std::uint64_t stream, std::vector<double> &ts) const {
        const int n = cfg_.samples_per_ray;
        ts.resize(n);
        const double step = (far - near) / n;
        for (int j = 0; j < n; ++j) {
            const double xi = cfg_.jitter ? detail::unit_hash(cfg_.jitter_seed, stream, j) : 0.5;
            ts[j]           = near + (j + xi) * step;
        }
    }

    /// Marches a ray, recording every intermediate in `tape`.
    RayResult trace(const Vec3 &origin, const Vec3 &dir, std::span<const double> ts,
                    detail::RayTape &tape) const {
        tape.clear();
        tape.samples.resize(ts.size());
        for (std::size_t j = 0; j < ts.size(); ++j) {
            auto &s = tape.samples[j];
            s.t     = ts[j];
            shade_sample(origin, ts[j] * dir, tape, s);
        }
        double trans = 1.0;
        RayResult r;
        for (const auto &s : tape.samples) {
            const double w = trans * s.alpha;
            r.color += w * s.color;
            r.depth += w * s.t;
            r.alpha += w;
            trans *= 1.0 - s.alpha;
        }
        r.color += (1.0 - r.alpha) * cfg_.background;
        tape.result = r;
        return r;
    }

    /// Reverse pass of trace(): accumulates parameter gradients into `grads`.
    void backward(const detail::RayTape &tape, const RayAdjoint &adj, RenderGrads &grads) const {
        detail::require(!drot_.empty(), "render: scene was built without derivatives");
        const auto &samples = tape.samples;
        const std::size_t n = samples.size();
        const double dA_eff = adj.alpha - adj.color.dot(cfg_.background);

        // dL/dalpha_j = T_j G_j - (sum_{i>j} w_i G_i) / (1 - alpha_j)
        thread_local std::vector<double> trans, dalpha;
        trans.resize(n);
        dalpha.resize(n);
        double t = 1.0;
        for (std::size_t j = 0; j < n; ++j) {
            trans[j] = t;
            t *= 1.0 - samples[j].alpha;
        }
        double suffix = 0.0;
        for (std::size_t j = n; j-- > 0;) {
            const auto &s  = samples[j];
            const double G = adj.color.dot(s.color) + adj.depth * s.t + dA_eff;
            dalpha[j]      = trans[j] * G - suffix / (1.0 - s.alpha);
            suffix += trans[j] * s.alpha * G;
        }

        for (std::size_t j = 0; j < n; ++j) {
            const auto &s        = samples[j];
            const Vec3 dcolor    = trans[j] * s.alpha * adj.color;
            const double dalraw  = (s.alpha_raw > 0.0 && s.alpha_raw < kMaxAlpha) ? dalpha[j] : 0.0;
            backward_sample(tape, s, dcolor, dalraw, adj.influence, grads);
        }
    }

    /// Reverse pass for a single blend() evaluation.
    void backward_blend(const detail::RayTape &tape, const Vec3 &dcolor, double dalpha,
                        RenderGrads &grads) const {
        detail::require(!drot_.empty(), "render: scene was built without derivatives");
        const auto &s       = tape.samples.front();
        const double dalraw = (s.alpha_raw > 0.0 && s.alpha_raw < kMaxAlpha) ? dalpha : 0.0;
        backward_sample(tape, s, dcolor, dalraw, 0.0, grads);
    }

  private:
    void shade_sample(const Vec3 &origin, const Vec3 &offset, detail::RayTape &tape,
                      detail::SampleRecord &s) const {
        const int k = std::min<int>(cfg_.knn_k, static_cast<int>(avatar_.texel_count()));
        tape.knn.resize(k);
        const int found = index_.query_into(origin, offset, k, tape.knn);
        s.first         = static_cast<int>(tape.neighbors.size());
        s.count         = found;
        Vec3 csum       = Vec3::Zero();
        double gsum = 0.0, asum = 0.0;
        for (int q = 0; q < found; ++q) {
            detail::NeighborRecord nb;
            nb.texel          = tape.knn[q].index;
            const auto ti     = static_cast<std::size_t>(nb.texel);
            nb.offset         = offset - (avatar_.centers[ti] - origin);
            nb.local          = rot_[ti].transpose() * nb.offset;
            const Vec3 scaled = nb.local.cwiseProduct(inv_radii_[ti]);
            nb.g              = cfg_.eta * std::exp(-scaled.squaredNorm() / (2.0 * cfg_.tau));
            nb.u_raw          = scaled / kCubeSigmas;
            const Vec3 u      = nb.u_raw.cwiseMax(-1.0).cwiseMin(1.0);
            nb.feature        = sample_triplane(avatar_.payload(ti), u);
            nb.shade          = mlp_forward(mlp_, nb.feature);
            csum += nb.g * nb.shade.color;
            gsum += nb.g;
            asum += nb.g * nb.shade.opacity;
            tape.neighbors.push_back(nb);
        }
        s.gsum      = gsum;
        s.color     = csum / (gsum + cfg_.epsilon);
        s.alpha_raw = asum;
        s.alpha     = std::clamp(asum, 0.0, kMaxAlpha);
        tape.influence_sum += found > 0 ? gsum / k : 0.0;
    }

    void backward_sample(const detail::RayTape &tape, const detail::SampleRecord &s,
                         const Vec3 &dcolor, double dalpha_raw, double dinfluence,
                         RenderGrads &grads) const {
        const double inv_norm = 1.0 / (s.gsum + cfg_.epsilon);
        const int S           = avatar_.plane_size;
        const std::size_t pstride = avatar_.payload_stride();
        const double *w       = mlp_.params.data();
        double *gm            = grads.mlp.data();
        const int k           = std::max(1, std::min<int>(cfg_.knn_k, static_cast<int>(avatar_.texel_count())));

        for (int q = 0; q < s.count; ++q) {
            const auto &nb    = tape.neighbors[s.first + q];
            const auto ti     = static_cast<std::size_t>(nb.texel);
            const Vec3 &ck    = nb.shade.color;
            const double ak   = nb.shade.opacity;

            double dg       = dcolor.dot(ck - s.color) * inv_norm + dalpha_raw * ak + dinfluence / k;
            const Vec3 dck  = dcolor * (nb.g * inv_norm);
            const double dak = dalpha_raw * nb.g;

            // MLP
            std::array<double, RenderMLP::kOut> dout{};
            for (int c = 0; c < 3; ++c) dout[c] = dck[c] * ck[c] * (1.0 - ck[c]);
            dout[3] = dak * ak * (1.0 - ak);
            Feature df{};
            for (int h = 0; h < RenderMLP::kHidden; ++h) {
                const double pre = nb.shade.pre[h];
                const double hid = pre > 0.0 ? pre : 0.0;
                double dh        = 0.0;
                for (int o = 0; o < RenderMLP::kOut; ++o) {
                    gm[RenderMLP::kW2 + h * RenderMLP::kOut + o] += hid * dout[o];
                    dh += w[RenderMLP::kW2 + h * RenderMLP::kOut + o] * dout[o];
                }
                if (pre <= 0.0) {
                    continue;
                }
                gm[RenderMLP::kB1 + h] += dh;
                for (int i = 0; i < RenderMLP::kIn; ++i) {
                    gm[RenderMLP::kW1 + i * RenderMLP::kHidden + h] += nb.feature[i] * dh;
                    df[i] += w[RenderMLP::kW1 + i * RenderMLP::kHidden + h] * dh;
                }
            }
            for (int o = 0; o < RenderMLP::kOut; ++o) gm[RenderMLP::kB2 + o] += dout[o];

            // Tri-plane
            double *gp       = grads.payloads.data() + ti * pstride;
            const auto view  = avatar_.payload(ti);
            Vec3 du          = Vec3::Zero();
            if (S == 1) {
                for (int p = 0; p < 3; ++p)
                    for (int c = 0; c < kFeatureDim; ++c) gp[p * kFeatureDim + c] += df[c];
            } else {
                const Vec3 u = nb.u_raw.cwiseMax(-1.0).cwiseMin(1.0);
                const double dscale = 0.5 * (S - 1);
                for (int p = 0; p < 3; ++p) {
                    const int ax = detail::kPlaneAxes[p][0], bx = detail::kPlaneAxes[p][1];
                    const auto ga = detail::grid_coord(u[ax], S);
                    const auto gb = detail::grid_coord(u[bx], S);
                    const double w00 = (1 - ga.f) * (1 - gb.f), w01 = (1 - ga.f) * gb.f;
                    const double w10 = ga.f * (1 - gb.f), w11 = ga.f * gb.f;
                    auto node = [&](int a, int b) {
                        return ((static_cast<std::size_t>(p) * S + a) * S + b) * kFeatureDim;
                    };
                    const std::size_t n00 = node(ga.i0, gb.i0), n01 = node(ga.i0, gb.i0 + 1);
                    const std::size_t n10 = node(ga.i0 + 1, gb.i0), n11 = node(ga.i0 + 1, gb.i0 + 1);
                    double da = 0.0, db = 0.0;
                    for (int c = 0; c < kFeatureDim; ++c) {
                        gp[n00 + c] += w00 * df[c];
                        gp[n01 + c] += w01 * df[c];
                        gp[n10 + c] += w10 * df[c];
                        gp[n11 + c] += w11 * df[c];
                        const double v00 = view.values[n00 + c], v01 = view.values[n01 + c];
                        const double v10 = view.values[n10 + c], v11 = view.values[n11 + c];
                        da += df[c] * ((1 - gb.f) * (v10 - v00) + gb.f * (v11 - v01));
                        db += df[c] * ((1 - ga.f) * (v01 - v00) + ga.f * (v11 - v10));
                    }
                    du[ax] += da * dscale;
                    du[bx] += db * dscale;
                }
                for (int a = 0; a < 3; ++a) {
                    if (!(nb.u_raw[a] > -1.0 && nb.u_raw[a] < 1.0)) du[a] = 0.0;
                }
            }

            // Pose: g = eta exp(-m / 2tau), m = |local / r|^2, u = local / 3r.
            const Vec3 &ir  = inv_radii_[ti];
            const Vec3 &l   = nb.local;
            const double dm = dg * (-nb.g / (2.0 * cfg_.tau));
            Vec3 dl, dr;
            for (int a = 0; a < 3; ++a) {
                dl[a] = dm * 2.0 * l[a] * ir[a] * ir[a] + du[a] * ir[a] / kCubeSigmas;
                dr[a] = -dm * 2.0 * l[a] * l[a] * ir[a] * ir[a] * ir[a] -
                        du[a] * l[a] * ir[a] * ir[a] / kCubeSigmas;
            }
            const Vec3 dd = rot_[ti] * dl;
            double *gpose = grads.poses.data() + ti * kPoseDim;
            for (int a = 0; a < 3; ++a) {
                gpose[a] -= dd[a];
                gpose[3 + a] += nb.offset.dot(drot_[ti][a] * dl);
                gpose[6 + a] += dr[a];
            }
        }
    }

    const UVAvatar &avatar_;
    const RenderMLP &mlp_;
    RenderConfig cfg_;
    const UniformGridIndex &index_;
    std::vector<Mat3> rot_;
    std::vector<Vec3> inv_radii_;
    std::vector<std::array<Mat3, 3>> drot_;
};

// ---------------------------------------------------------------------------
// Public entry points
// ---------------------------------------------------------------------------

/// Blended color and opacity of the K nearest Gaussians at world point x.
inline BlendResult blend_point(const UVAvatar &avatar, const RenderMLP &mlp, const Vec3 &x,
                               const RenderConfig &cfg, const UniformGridIndex &index) {
    RenderScene scene(avatar, mlp, cfg, index);
    detail::RayTape tape;
    return scene.blend(Vec3::Zero(), x, tape);
}

/// Marches one ray between near and far. `stream` selects the jitter pattern.
inline RayResult march_ray(const UVAvatar &avatar, const RenderMLP &mlp, const Vec3 &origin,
                           const Vec3 &direction, double near, double far, const RenderConfig &cfg,
                           const UniformGridIndex &index, std::uint64_t stream = 0) {
    detail::require(std::abs(direction.norm() - 1.0) <= 1e-6, "march_ray: direction is not normalized");
    detail::require(near > 0.0 && near < far, "march_ray: need 0 < near < far");
    RenderScene scene(avatar, mlp, cfg, index);
    detail::RayTape tape;
    std::vector<double> ts;
    scene.sample_depths(near, far, stream, ts);
    return scene.trace(origin, direction, ts, tape);
}

/// Jitter stream of pixel (x, y); shared by every render path.
inline std::uint64_t pixel_stream(const Camera &cam, int x, int y) {
    return static_cast<std::uint64_t>(y) * static_cast<std::uint64_t>(cam.width) + x;
}

/// Renders a window of the camera image. Rows are processed in a fixed number
/// of chunks so that results do not depend on thread scheduling.
inline RenderOutput render_window(const RenderScene &scene, const Camera &cam, const Window &win) {
    cam.validate();
    detail::require(win.x0 >= 0 && win.y0 >= 0 && win.width > 0 && win.height > 0 &&
                        win.x0 + win.width <= cam.width && win.y0 + win.height <= cam.height,
                    "render: window outside the image");
    RenderOutput out(win.width, win.height);
    const Vec3 origin = cam.origin();
    std::vector<double> infl(static_cast<std::size_t>(win.height), 0.0);
    parallel_chunks(static_cast<std::size_t>(win.height), [&](std::size_t row) {
        detail::RayTape tape;
        std::vector<double> ts;
        const int y = win.y0 + static_cast<int>(row);
        for (int xi = 0; xi < win.width; ++xi) {
            const int x = win.x0 + xi;
            scene.sample_depths(cam.near, cam.far, pixel_stream(cam, x, y), ts);
            const RayResult r   = scene.trace(origin, cam.ray_direction(x, y), ts, tape);
            const std::size_t p = row * win.width + xi;
            for (int c = 0; c < 3; ++c) out.color[p * 3 + c] = r.color[c];
            out.depth[p] = r.depth;
            out.alpha[p] = r.alpha;
            infl[row] += tape.influence_sum;
        }
    });
    double total = 0.0;
    for (double v : infl) total += v;
    out.mean_influence = total / (double(out.pixels()) * scene.config().samples_per_ray);
    return out;
}

inline RenderOutput render_image(const UVAvatar &avatar, const RenderMLP &mlp, const Camera &cam,
                                 const RenderConfig &cfg, const UniformGridIndex &index) {
    RenderScene scene(avatar, mlp, cfg, index);
    return render_window(scene, cam, {0, 0, cam.width, cam.height});
}

inline RenderOutput render_image(const UVAvatar &avatar, const RenderMLP &mlp, const Camera &cam,
                                 const RenderConfig &cfg) {
    const auto index = build_index(avatar);
    return render_image(avatar, mlp, cam, cfg, index);
}

/// Peak signal-to-noise ratio for images in [0,1]; +infinity when identical.
inline double psnr(std::span<const double> image, std::span<const double> reference) {
    detail::require(image.size() == reference.size() && !image.empty(), "psnr: shape mismatch");
    double se = 0.0;
    for (std::size_t i = 0; i < image.size(); ++i) {
        const double d = image[i] - reference[i];
        se += d * d;
    }
    if (se == 0.0) {
        return std::numeric_limits<double>::infinity();
    }
    return 10.0 * std::log10(double(image.size()) / se);
}

} // namespace uvg
