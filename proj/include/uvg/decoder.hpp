// Copyright Contributors to the uvg Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "uvg/core.hpp"
#include "uvg/tape.hpp"

#include <cmath>
#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <vector>

namespace uvg {

/// Per-texel payload generator: (z, h/H, w/W) -> 128 -> 128 -> payload,
/// ReLU on both hidden layers, linear output. Weights are flat:
/// W1 [in][128], b1, W2 [128][128], b2, W3 [128][out], b3.
struct LatentDecoder {
    static constexpr int kLatent = 512;
    static constexpr int kIn     = kLatent + 2;
    static constexpr int kHidden = 128;

    int height  = 0;
    int width   = 0;
    int out_dim = 0;
    std::vector<double> z;
    std::vector<double> weights;

    LatentDecoder() = default;
    LatentDecoder(int h, int w, int out)
        : height(h), width(w), out_dim(out), z(kLatent, 0.0), weights(weight_count(out), 0.0) {
        detail::require(h > 0 && w > 0 && out > 0, "LatentDecoder: dimensions must be positive");
    }

    static std::size_t w1() { return 0; }
    static std::size_t b1() { return std::size_t(kIn) * kHidden; }
    static std::size_t w2() { return b1() + kHidden; }
    static std::size_t b2() { return w2() + std::size_t(kHidden) * kHidden; }
    static std::size_t w3() { return b2() + kHidden; }
    std::size_t b3() const { return w3() + std::size_t(kHidden) * out_dim; }
    static std::size_t weight_count(int out) {
        return w3() + std::size_t(kHidden) * out + static_cast<std::size_t>(out);
    }

    void validate() const {
        detail::require(z.size() == std::size_t(kLatent), "LatentDecoder: z must have 512 entries");
        detail::require(weights.size() == weight_count(out_dim), "LatentDecoder: weight size mismatch");
    }

    /// z ~ N(0, 0.01^2); weights uniform in +-1/sqrt(fan_in); zero biases.
    static LatentDecoder random(int h, int w, int out, std::uint64_t seed) {
        LatentDecoder d(h, w, out);
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> nz(0.0, 0.01);
        for (double &v : d.z) v = nz(rng);
        auto fill = [&](std::size_t from, std::size_t count, int fan_in) {
            std::uniform_real_distribution<double> u(-1.0 / std::sqrt(double(fan_in)), 1.0 / std::sqrt(double(fan_in)));
            for (std::size_t i = 0; i < count; ++i) d.weights[from + i] = u(rng);
        };
        fill(w1(), b1() - w1(), kIn);
        fill(w2(), b2() - w2(), kHidden);
        fill(w3(), d.b3() - w3(), kHidden);
        return d;
    }
};

namespace detail {

/// Hidden pre-activations of every texel, kept for the reverse pass.
struct DecoderCache {
    std::vector<double> pre1; // N x 128
    std::vector<double> pre2; // N x 128
};

inline std::vector<double> decoder_forward(std::span<const double> z, std::span<const double> wts, int height,
                                           int width, int out, DecoderCache *cache) {
    using D = LatentDecoder;
    require(z.size() == std::size_t(D::kLatent) && wts.size() == D::weight_count(out),
            "decode_payloads: parameter size mismatch");
    const std::size_t n = std::size_t(height) * width;
    const double *w     = wts.data();
    const std::size_t b3 = D::w3() + std::size_t(D::kHidden) * out;

    // z contribution to layer 1 is shared by every texel.
    std::vector<double> zpart(D::kHidden, 0.0);
    for (int h = 0; h < D::kHidden; ++h) zpart[h] = w[D::b1() + h];
    for (int i = 0; i < D::kLatent; ++i) {
        const double zi = z[i];
        const double *row = w + D::w1() + std::size_t(i) * D::kHidden;
        for (int h = 0; h < D::kHidden; ++h) zpart[h] += zi * row[h];
    }
    if (cache) {
        cache->pre1.assign(n * D::kHidden, 0.0);
        cache->pre2.assign(n * D::kHidden, 0.0);
    }
    std::vector<double> outv(n * out, 0.0);
    std::vector<double> a1(D::kHidden), a2(D::kHidden), p2(D::kHidden);
    const double *rh = w + D::w1() + std::size_t(D::kLatent) * D::kHidden;
    const double *rw = rh + D::kHidden;
    for (int th = 0; th < height; ++th) {
        for (int tw = 0; tw < width; ++tw) {
            const std::size_t t = std::size_t(th) * width + tw;
            const double uh = double(th) / height, uw = double(tw) / width;
            for (int h = 0; h < D::kHidden; ++h) {
                const double p = zpart[h] + uh * rh[h] + uw * rw[h];
                if (cache) cache->pre1[t * D::kHidden + h] = p;
                a1[h] = p > 0.0 ? p : 0.0;
            }
            for (int h = 0; h < D::kHidden; ++h) p2[h] = w[D::b2() + h];
            for (int i = 0; i < D::kHidden; ++i) {
                if (a1[i] == 0.0) continue;
                const double *row = w + D::w2() + std::size_t(i) * D::kHidden;
                for (int h = 0; h < D::kHidden; ++h) p2[h] += a1[i] * row[h];
            }
            for (int h = 0; h < D::kHidden; ++h) {
                if (cache) cache->pre2[t * D::kHidden + h] = p2[h];
                a2[h] = p2[h] > 0.0 ? p2[h] : 0.0;
            }
            double *o = outv.data() + t * out;
            for (int k = 0; k < out; ++k) o[k] = w[b3 + k];
            for (int i = 0; i < D::kHidden; ++i) {
                if (a2[i] == 0.0) continue;
                const double *row = w + D::w3() + std::size_t(i) * out;
                for (int k = 0; k < out; ++k) o[k] += a2[i] * row[k];
            }
        }
    }
    return outv;
}

/// Accumulates d/dz and d/dweights given d/d(output).
inline void decoder_backward(std::span<const double> z, std::span<const double> wts, int height, int width, int out,
                             const DecoderCache &cache, std::span<const double> dout, double *dz, double *dw) {
    using D = LatentDecoder;
    const double *w      = wts.data();
    const std::size_t b3 = D::w3() + std::size_t(D::kHidden) * out;
    std::vector<double> dpre1_sum(D::kHidden, 0.0);
    std::vector<double> a2(D::kHidden), da2(D::kHidden), dp2(D::kHidden), da1(D::kHidden);
    double *gh = dw + D::w1() + std::size_t(D::kLatent) * D::kHidden;
    double *gw = gh + D::kHidden;
    for (int th = 0; th < height; ++th) {
        for (int tw = 0; tw < width; ++tw) {
            const std::size_t t = std::size_t(th) * width + tw;
            const double *go    = dout.data() + t * out;
            const double *p1    = cache.pre1.data() + t * D::kHidden;
            const double *p2    = cache.pre2.data() + t * D::kHidden;
            for (int k = 0; k < out; ++k) dw[b3 + k] += go[k];
            for (int i = 0; i < D::kHidden; ++i) {
                a2[i] = p2[i] > 0.0 ? p2[i] : 0.0;
                const double *row = w + D::w3() + std::size_t(i) * out;
                double *grow      = dw + D::w3() + std::size_t(i) * out;
                double s          = 0.0;
                for (int k = 0; k < out; ++k) {
                    grow[k] += a2[i] * go[k];
                    s += row[k] * go[k];
                }
                dp2[i] = p2[i] > 0.0 ? s : 0.0;
            }
            for (int h = 0; h < D::kHidden; ++h) dw[D::b2() + h] += dp2[h];
            for (int i = 0; i < D::kHidden; ++i) {
                const double a1 = p1[i] > 0.0 ? p1[i] : 0.0;
                const double *row = w + D::w2() + std::size_t(i) * D::kHidden;
                double *grow      = dw + D::w2() + std::size_t(i) * D::kHidden;
                double s          = 0.0;
                for (int h = 0; h < D::kHidden; ++h) {
                    if (a1 != 0.0) grow[h] += a1 * dp2[h];
                    s += row[h] * dp2[h];
                }
                da1[i] = p1[i] > 0.0 ? s : 0.0;
            }
            const double uh = double(th) / height, uw = double(tw) / width;
            for (int h = 0; h < D::kHidden; ++h) {
                dpre1_sum[h] += da1[h];
                gh[h] += uh * da1[h];
                gw[h] += uw * da1[h];
            }
        }
    }
    for (int h = 0; h < D::kHidden; ++h) dw[D::b1() + h] += dpre1_sum[h];
    for (int i = 0; i < D::kLatent; ++i) {
        const double *row = w + D::w1() + std::size_t(i) * D::kHidden;
        double *grow      = dw + D::w1() + std::size_t(i) * D::kHidden;
        double s          = 0.0;
        for (int h = 0; h < D::kHidden; ++h) {
            grow[h] += z[i] * dpre1_sum[h];
            s += row[h] * dpre1_sum[h];
        }
        dz[i] += s;
    }
}

} // namespace detail

/// Payloads of every texel, H*W blocks of out_dim values.
inline std::vector<double> decode_payloads(const LatentDecoder &dec) {
    dec.validate();
    return detail::decoder_forward(dec.z, dec.weights, dec.height, dec.width, dec.out_dim, nullptr);
}

namespace ad {

/// Decoder as a tape node; the reverse pass runs only when backward() reaches it.
inline Var decode(const Var &z, const Var &weights, int height, int width, int out) {
    Tape &t = z.tape();
    if (!t.recording()) {
        return t.push(uvg::detail::decoder_forward(z.value(), weights.value(), height, width, out, nullptr),
                      "decode", nullptr);
    }
    auto cache = std::make_shared<uvg::detail::DecoderCache>();
    auto value = uvg::detail::decoder_forward(z.value(), weights.value(), height, width, out, cache.get());
    const std::size_t iz = z.id(), iw = weights.id();
    return t.push(std::move(value), "decode", [=](Tape &tp, std::size_t self) {
        const auto &g = tp.grad(self);
        bool any      = false;
        for (double v : g) any = any || v != 0.0;
        if (!any) return;
        const std::vector<double> gout = g;
        uvg::detail::decoder_backward(tp.value(iz), tp.value(iw), height, width, out, *cache, gout, tp.grad(iz).data(),
                                      tp.grad(iw).data());
    });
}

} // namespace ad

} // namespace uvg
