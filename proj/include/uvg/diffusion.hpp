// Copyright Contributors to the uvg Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "uvg/core.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

namespace uvg {

// ---------------------------------------------------------------------------
// Schedule and transitions
// ---------------------------------------------------------------------------

struct DiffusionSchedule {
    int steps = 0; // T
    std::vector<double> alphas; // T + 1
    std::vector<double> sigmas; // T + 1

    void check_t(int t) const {
        detail::require(t >= 0 && t <= steps, "diffusion: timestep out of range");
    }
};

/// Squared-cosine schedule with offset 0.008, normalized so alpha_0 = 1.
inline DiffusionSchedule cosine_schedule(int T, double offset = 0.008) {
    detail::require(T >= 1, "cosine_schedule: T must be >= 1");
    auto f = [&](double t) {
        const double c = std::cos((t / T + offset) / (1.0 + offset) * kPi / 2.0);
        return c * c;
    };
    DiffusionSchedule s;
    s.steps = T;
    s.alphas.resize(T + 1);
    s.sigmas.resize(T + 1);
    const double f0 = f(0.0);
    for (int t = 0; t <= T; ++t) {
        const double ab = std::clamp(f(double(t)) / f0, 0.0, 1.0);
        s.alphas[t]     = std::sqrt(ab);
        s.sigmas[t]     = std::sqrt(1.0 - ab);
    }
    return s;
}

struct Transition {
    double alpha = 1.0; // alpha_{t|s}
    double sigma = 0.0; // sigma_{t|s}
};

/// q(G_t | G_s) for s <= t: alpha_ts = alpha_t / alpha_s,
/// sigma_ts^2 = sigma_t^2 - alpha_ts^2 sigma_s^2.
inline Transition transition_params(const DiffusionSchedule &sch, int s, int t) {
    sch.check_t(s);
    sch.check_t(t);
    detail::require(s <= t, "transition_params: need s <= t");
    if (s == t) return {1.0, 0.0};
    const double a  = sch.alphas[t] / sch.alphas[s];
    const double v  = sch.sigmas[t] * sch.sigmas[t] - a * a * sch.sigmas[s] * sch.sigmas[s];
    return {a, std::sqrt(std::max(v, 0.0))};
}

/// G_t = alpha_t G_0 + sigma_t noise.
inline std::vector<double> q_sample(const DiffusionSchedule &sch, std::span<const double> g0, int t,
                                    std::span<const double> noise) {
    sch.check_t(t);
    detail::require(g0.size() == noise.size(), "q_sample: shape mismatch");
    std::vector<double> out(g0.size());
    const double a = sch.alphas[t], s = sch.sigmas[t];
    for (std::size_t i = 0; i < g0.size(); ++i) out[i] = a * g0[i] + s * noise[i];
    return out;
}

struct Posterior {
    std::vector<double> mean;
    double std = 0.0;
};

/// q(G_s | G_t, G_0 = g0_hat).
inline Posterior posterior_params(const DiffusionSchedule &sch, int s, int t, std::span<const double> gt,
                                  std::span<const double> g0_hat) {
    detail::require(gt.size() == g0_hat.size(), "posterior_params: shape mismatch");
    if (s == t) {
        sch.check_t(t);
        return {std::vector<double>(gt.begin(), gt.end()), 0.0};
    }
    const Transition tr = transition_params(sch, s, t);
    const double st2 = sch.sigmas[t] * sch.sigmas[t];
    const double ss2 = sch.sigmas[s] * sch.sigmas[s];
    const double v   = tr.sigma * tr.sigma;
    const double ct  = tr.alpha * ss2 / st2;
    const double c0  = sch.alphas[s] * v / st2;
    Posterior p;
    p.mean.resize(gt.size());
    for (std::size_t i = 0; i < gt.size(); ++i) p.mean[i] = ct * gt[i] + c0 * g0_hat[i];
    p.std = std::sqrt(v * ss2 / st2);
    return p;
}

/// sigmoid(alpha_t^2 / sigma_t^2); 1 at t = 0.
inline double ddpm_weight(const DiffusionSchedule &sch, int t) {
    sch.check_t(t);
    const double s2 = sch.sigmas[t] * sch.sigmas[t];
    if (s2 == 0.0) return 1.0;
    const double snr = sch.alphas[t] * sch.alphas[t] / s2;
    return 1.0 / (1.0 + std::exp(-snr));
}

/// Predicts G_0 from (G_t, t).
using Denoiser = std::function<std::vector<double>(std::span<const double>, int)>;

/// w_t * ||G_0 - f(G_t, t)||^2 with G_t = q_sample(G_0, t, noise).
inline double denoiser_loss(const DiffusionSchedule &sch, std::span<const double> g0, int t,
                            std::span<const double> noise, const Denoiser &f) {
    const auto gt   = q_sample(sch, g0, t, noise);
    const auto pred = f(gt, t);
    detail::require(pred.size() == g0.size(), "denoiser_loss: denoiser changed the shape");
    double s = 0.0;
    for (std::size_t i = 0; i < g0.size(); ++i) s += (g0[i] - pred[i]) * (g0[i] - pred[i]);
    return ddpm_weight(sch, t) * s;
}

/// E[G_0 | G_t] for scalar-wise G_0 ~ N(m, s^2).
inline Denoiser analytic_gauss_denoiser(const DiffusionSchedule &sch, double m, double s) {
    detail::require(std::isfinite(m) && std::isfinite(s) && s >= 0.0, "analytic_gauss_denoiser: bad parameters");
    return [sch, m, s](std::span<const double> gt, int t) {
        sch.check_t(t);
        const double a = sch.alphas[t], sg = sch.sigmas[t];
        std::vector<double> out(gt.size());
        const double den = a * a * s * s + sg * sg;
        for (std::size_t i = 0; i < gt.size(); ++i) {
            out[i] = s == 0.0 ? m : (a * s * s * gt[i] + sg * sg * m) / den;
        }
        return out;
    };
}

/// Decreasing timesteps round(T i / steps), i = steps..0.
inline std::vector<int> sampling_timesteps(int T, int steps) {
    detail::require(steps >= 1 && steps <= T, "reverse_sample: steps must be in [1, T]");
    std::vector<int> ts;
    for (int i = steps; i >= 0; --i) {
        ts.push_back(static_cast<int>(std::lround(double(T) * i / steps)));
    }
    return ts;
}

namespace detail {

template <typename Rng>
void fill_normal(std::span<double> out, Rng &rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    for (double &v : out) v = n(rng);
}

inline std::vector<double> clamp_unit(std::vector<double> v) {
    for (double &x : v) x = std::clamp(x, -1.0, 1.0);
    return v;
}

/// One ancestral step t -> s, drawing a full-size noise vector.
template <typename Rng>
std::vector<double> ancestral_step(const DiffusionSchedule &sch, const Denoiser &f, std::span<const double> g,
                                   int t, int s, Rng &rng) {
    const auto g0 = clamp_unit(f(g, t));
    detail::require(g0.size() == g.size(), "reverse_sample: denoiser changed the shape");
    auto post = posterior_params(sch, s, t, g, g0);
    std::vector<double> noise(g.size());
    fill_normal(std::span<double>(noise), rng);
    for (std::size_t i = 0; i < g.size(); ++i) post.mean[i] += post.std * noise[i];
    return post.mean;
}

} // namespace detail

/// Ancestral sampling from N(0, I) with G_0 estimates clamped to [-1, 1].
template <typename Rng>
std::vector<double> reverse_sample(const DiffusionSchedule &sch, const Denoiser &f, std::size_t count, Rng &rng,
                                   int steps) {
    const auto ts = sampling_timesteps(sch.steps, steps);
    std::vector<double> g(count);
    detail::fill_normal(std::span<double>(g), rng);
    for (std::size_t k = 0; k + 1 < ts.size(); ++k) {
        g = detail::ancestral_step(sch, f, g, ts[k], ts[k + 1], rng);
    }
    return g;
}

/// Reverse sampling that overwrites the known elements after every step with
/// q_sample(known, s); at s = 0 they are copied exactly. Posterior noise is
/// drawn for the full state first, then noise for the known elements only, so
/// an empty mask reproduces reverse_sample.
template <typename Rng>
std::vector<double> inpaint_sample(const DiffusionSchedule &sch, const Denoiser &f, std::span<const double> known,
                                   std::span<const std::uint8_t> mask, Rng &rng, int steps) {
    detail::require(known.size() == mask.size(), "inpaint_sample: mask shape mismatch");
    const auto ts = sampling_timesteps(sch.steps, steps);
    std::vector<double> g(known.size());
    detail::fill_normal(std::span<double>(g), rng);
    std::normal_distribution<double> n(0.0, 1.0);
    for (std::size_t k = 0; k + 1 < ts.size(); ++k) {
        const int s = ts[k + 1];
        g           = detail::ancestral_step(sch, f, g, ts[k], s, rng);
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (!mask[i]) continue;
            const double e = n(rng);
            g[i]           = s == 0 ? known[i] : sch.alphas[s] * known[i] + sch.sigmas[s] * e;
        }
    }
    for (std::size_t i = 0; i < g.size(); ++i)
        if (mask[i]) g[i] = known[i];
    return g;
}

// ---------------------------------------------------------------------------
// Avatar tensors, normalization, unfold / fold
// ---------------------------------------------------------------------------

/// Per-texel layout H x W x (9 + 3 S S C): pose [center, rotation, radii]
/// followed by the tri-plane payload [plane][a][b][c].
struct AvatarTensor {
    int height = 0, width = 0, plane_size = 0, channels = 0;
    std::vector<double> values;

    std::size_t texel_size() const { return kPoseDim + 3 * std::size_t(plane_size) * plane_size * channels; }
};

/// Wide UV layout (H S) x (W S) x (9 + 3 C), channels fastest.
struct UVTensor {
    int rows = 0, cols = 0, channels = 0;
    int block = 1; // S
    std::vector<double> values;

    double &at(int r, int c, int ch) { return values[(std::size_t(r) * cols + c) * channels + ch]; }
    double at(int r, int c, int ch) const { return values[(std::size_t(r) * cols + c) * channels + ch]; }
};

inline AvatarTensor avatar_to_tensor(const UVAvatar &av) {
    av.validate();
    AvatarTensor t{av.height, av.width, av.plane_size, av.channels, {}};
    const std::size_t ts = t.texel_size(), ps = av.payload_stride();
    t.values.resize(av.texel_count() * ts);
    for (std::size_t i = 0; i < av.texel_count(); ++i) {
        double *d = t.values.data() + i * ts;
        for (int a = 0; a < 3; ++a) {
            d[a]     = av.centers[i][a];
            d[3 + a] = av.rotations[i][a];
            d[6 + a] = av.radii[i][a];
        }
        std::copy_n(av.payloads.data() + i * ps, ps, d + kPoseDim);
    }
    return t;
}

/// Writes poses and payloads of `t` into a copy of `templ` (anchors kept).
inline UVAvatar tensor_to_avatar(const AvatarTensor &t, const UVAvatar &templ) {
    UVAvatar av = templ;
    detail::require(av.height == t.height && av.width == t.width && av.plane_size == t.plane_size &&
                        av.channels == t.channels,
                    "tensor_to_avatar: dimensions disagree with the template");
    const std::size_t ts = t.texel_size(), ps = av.payload_stride();
    for (std::size_t i = 0; i < av.texel_count(); ++i) {
        const double *d = t.values.data() + i * ts;
        for (int a = 0; a < 3; ++a) {
            av.centers[i][a]   = d[a];
            av.rotations[i][a] = d[3 + a];
            av.radii[i][a]     = d[6 + a];
        }
        std::copy_n(d + kPoseDim, ps, av.payloads.data() + i * ps);
    }
    return av;
}

inline double normalize_center(double x) { return (x + 0.12) * 2.0; }
inline double normalize_rotation(double x) { return x / kPi; }
inline double normalize_radius(double x) { return (std::clamp(std::abs(x), 0.0, 0.15) - 0.06) * 10.0; }
inline double normalize_payload(double x) { return std::tanh(x); }
inline double denormalize_center(double n) { return n / 2.0 - 0.12; }
inline double denormalize_rotation(double n) { return n * kPi; }
inline double denormalize_radius(double n) { return n / 10.0 + 0.06; }
inline double denormalize_payload(double n) { return std::atanh(std::clamp(n, -1.0 + 1e-6, 1.0 - 1e-6)); }

namespace detail {

template <typename FC, typename FR, typename FS, typename FP>
void map_channels(AvatarTensor &t, FC fc, FR fr, FS fs, FP fp) {
    const std::size_t ts = t.texel_size();
    for (std::size_t i = 0; i + ts <= t.values.size(); i += ts) {
        double *d = t.values.data() + i;
        for (int a = 0; a < 3; ++a) {
            d[a]     = fc(d[a]);
            d[3 + a] = fr(d[3 + a]);
            d[6 + a] = fs(d[6 + a]);
        }
        for (std::size_t k = kPoseDim; k < ts; ++k) d[k] = fp(d[k]);
    }
}

} // namespace detail

inline AvatarTensor normalize_tensor(AvatarTensor t) {
    detail::map_channels(t, normalize_center, normalize_rotation, normalize_radius, normalize_payload);
    return t;
}

inline AvatarTensor denormalize_tensor(AvatarTensor t) {
    detail::map_channels(t, denormalize_center, denormalize_rotation, denormalize_radius, denormalize_payload);
    return t;
}

/// Replicates each texel's pose over its S x S block; payload channel
/// 9 + p C + c of texel (h, w) node (a, b) lands at row h S + a, column w S + b.
inline UVTensor unfold(const AvatarTensor &t) {
    const int S = t.plane_size, C = t.channels;
    UVTensor u{t.height * S, t.width * S, kPoseDim + 3 * C, S, {}};
    u.values.resize(std::size_t(u.rows) * u.cols * u.channels);
    const std::size_t ts = t.texel_size();
    for (int h = 0; h < t.height; ++h) {
        for (int w = 0; w < t.width; ++w) {
            const double *d = t.values.data() + (std::size_t(h) * t.width + w) * ts;
            for (int a = 0; a < S; ++a) {
                for (int b = 0; b < S; ++b) {
                    double *o = &u.at(h * S + a, w * S + b, 0);
                    std::copy_n(d, kPoseDim, o);
                    for (int p = 0; p < 3; ++p)
                        for (int c = 0; c < C; ++c)
                            o[kPoseDim + p * C + c] = d[kPoseDim + ((std::size_t(p) * S + a) * S + b) * C + c];
                }
            }
        }
    }
    return u;
}

/// Inverse of unfold. Pose channels take the block mean v0 + sum(v_i - v0) / n,
/// which returns exactly replicated blocks unchanged.
inline AvatarTensor fold(const UVTensor &u) {
    const int S = u.block;
    detail::require(S >= 1 && u.rows % S == 0 && u.cols % S == 0 && u.channels > kPoseDim &&
                        (u.channels - kPoseDim) % 3 == 0,
                    "fold: tensor shape is not a valid unfolded avatar");
    const int C = (u.channels - kPoseDim) / 3;
    AvatarTensor t{u.rows / S, u.cols / S, S, C, {}};
    const std::size_t ts = t.texel_size();
    t.values.resize(std::size_t(t.height) * t.width * ts);
    const double n = double(S) * S;
    for (int h = 0; h < t.height; ++h) {
        for (int w = 0; w < t.width; ++w) {
            double *d = t.values.data() + (std::size_t(h) * t.width + w) * ts;
            for (int ch = 0; ch < kPoseDim; ++ch) {
                const double v0 = u.at(h * S, w * S, ch);
                double dev      = 0.0;
                for (int a = 0; a < S; ++a)
                    for (int b = 0; b < S; ++b) dev += u.at(h * S + a, w * S + b, ch) - v0;
                d[ch] = v0 + dev / n;
            }
            for (int a = 0; a < S; ++a)
                for (int b = 0; b < S; ++b)
                    for (int p = 0; p < 3; ++p)
                        for (int c = 0; c < C; ++c)
                            d[kPoseDim + ((std::size_t(p) * S + a) * S + b) * C + c] =
                                u.at(h * S + a, w * S + b, kPoseDim + p * C + c);
        }
    }
    return t;
}

struct NormalizeOptions {
    /// When set, the avatar's anchors must equal these (neutral expression).
    const std::vector<Vec3> *neutral_anchors = nullptr;
};

inline UVTensor normalize_avatar(const UVAvatar &av, const NormalizeOptions &opt = {}) {
    if (opt.neutral_anchors) {
        detail::require(opt.neutral_anchors->size() == av.anchors.size(),
                        "normalize_avatar: neutral anchor grid shape mismatch");
        for (std::size_t i = 0; i < av.anchors.size(); ++i) {
            detail::require(av.anchors[i] == (*opt.neutral_anchors)[i],
                            "normalize_avatar: avatar is not in neutral expression (texel " + std::to_string(i) + ")");
        }
    }
    return unfold(normalize_tensor(avatar_to_tensor(av)));
}

/// Inverse of normalize_avatar; anchors, normals and scales come from `templ`.
inline UVAvatar denormalize_avatar(const UVTensor &u, const UVAvatar &templ) {
    return tensor_to_avatar(denormalize_tensor(fold(u)), templ);
}

/// Element mask over a UV tensor: selected texels' pose channels (geometry)
/// and/or payload channels (texture).
inline std::vector<std::uint8_t> uv_element_mask(const UVTensor &u, const UVMask &m) {
    const int S = u.block;
    detail::require(m.height * S == u.rows && m.width * S == u.cols, "uv_element_mask: mask shape mismatch");
    std::vector<std::uint8_t> out(u.values.size(), 0);
    for (int r = 0; r < u.rows; ++r) {
        for (int c = 0; c < u.cols; ++c) {
            if (!m.selected(std::size_t(r / S) * m.width + c / S)) continue;
            for (int ch = 0; ch < u.channels; ++ch) {
                const bool geo = ch < kPoseDim;
                if ((geo && m.geometry()) || (!geo && m.texture())) out[(std::size_t(r) * u.cols + c) * u.channels + ch] = 1;
            }
        }
    }
    return out;
}

} // namespace uvg
