// Copyright Contributors to the uvg Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "uvg/core.hpp"
#include "uvg/decoder.hpp"
#include "uvg/diffusion.hpp"
#include "uvg/objective.hpp"
#include "uvg/optim.hpp"
#include "uvg/render.hpp"
#include "uvg/spatial.hpp"

#include <chrono>
#include <cmath>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace uvg::checks {

struct CheckLine {
    std::string name;
    bool passed = false;
    std::string detail;
};

struct CheckReport {
    std::vector<CheckLine> lines;

    bool passed() const {
        for (const auto &l : lines)
            if (!l.passed) return false;
        return !lines.empty();
    }
    void add(std::string name, bool ok, std::string detail) { lines.push_back({std::move(name), ok, std::move(detail)}); }
};

// ---------------------------------------------------------------------------
// Gradients
// ---------------------------------------------------------------------------

/// A small random scene and the full objective over one patch.
struct GradScene {
    ParamSet params;
    LossFn fn;
    std::shared_ptr<ObjectiveContext> ctx;
    std::shared_ptr<PatchTarget> target;
};

/// 8 Gaussians on a 2 x 4 grid in front of a 4 x 4 camera, random targets.
inline GradScene grad_scene(FitMode mode, std::uint64_t seed, int plane_size = 4) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0), unit(0.0, 1.0);
    UVAvatar av(2, 4, plane_size, kFeatureDim);
    for (std::size_t i = 0; i < av.texel_count(); ++i) {
        av.centers[i]   = 0.35 * Vec3(u(rng), u(rng), u(rng));
        av.rotations[i] = kPi * Vec3(u(rng), u(rng), u(rng));
        av.radii[i]     = Vec3(0.25 + 0.1 * u(rng), 0.25 + 0.1 * u(rng), 0.25 + 0.1 * u(rng));
        av.anchors[i]   = av.centers[i] + 0.05 * Vec3(u(rng), u(rng), u(rng));
    }
    std::normal_distribution<double> nrm(0.0, 0.7);
    for (double &p : av.payloads) p = nrm(rng);

    GradScene sc;
    sc.ctx            = std::make_shared<ObjectiveContext>();
    sc.ctx->templ     = av;
    sc.ctx->mode      = mode;
    sc.ctx->render    = RenderConfig{};
    sc.ctx->render.jitter_seed = seed;
    sc.ctx->render.samples_per_ray = 24;

    sc.target                 = std::make_shared<PatchTarget>();
    Camera &cam               = sc.target->camera;
    cam.width = cam.height    = 4;
    cam.fx = cam.fy           = 6.0;
    cam.cx = cam.cy           = 2.0;
    cam.near                  = 1.8;
    cam.far                   = 3.2;
    cam.cam_to_world(2, 3)    = -2.5;
    sc.target->window         = {0, 0, 4, 4};
    for (int p = 0; p < 16; ++p) {
        for (int c = 0; c < 3; ++c) sc.target->color.push_back(unit(rng));
        sc.target->depth.push_back(2.2 + 0.6 * unit(rng));
        sc.target->alpha.push_back(unit(rng));
    }

    const RenderMLP mlp = RenderMLP::random(rng());
    sc.params.add(kGroupPoses, flatten_poses(av), 1.0);
    if (mode == FitMode::direct) {
        sc.params.add(kGroupPayloads, av.payloads, 1.0);
    } else {
        LatentDecoder dec = LatentDecoder::random(av.height, av.width, int(av.payload_stride()), rng());
        for (double &z : dec.z) z = nrm(rng);
        sc.params.add(kGroupLatent, dec.z, 1.0);
        sc.params.add(kGroupDecoder, dec.weights, 1.0);
    }
    sc.params.add(kGroupMlp, mlp.params, 1.0);
    sc.fn = make_objective(sc.ctx, sc.target);
    return sc;
}

inline GradCheckOptions default_grad_options(std::uint64_t seed) {
    GradCheckOptions o;
    o.h           = 1e-5;
    o.tolerance   = 1e-4;
    o.floor       = 1e-6;
    o.max_nonzero = 48;
    o.max_zero    = 8;
    o.seed        = seed;
    return o;
}

inline std::string describe(const GroupCheck &g) {
    std::ostringstream s;
    s << g.name << ": " << g.compared << " compared, " << g.excluded << " kink-excluded, max rel err "
      << g.max_rel_error;
    return s.str();
}

inline CheckReport check_grad(std::uint64_t seed = 0) {
    CheckReport rep;
    for (FitMode mode : {FitMode::direct, FitMode::latent}) {
        const GradScene sc   = grad_scene(mode, seed);
        const auto r         = check_gradients(sc.fn, sc.params, default_grad_options(seed));
        const std::string md = mode == FitMode::direct ? "direct/" : "latent/";
        for (const auto &g : r.groups) rep.add("grad " + md + g.name, g.passed, describe(g));
    }
    return rep;
}

// ---------------------------------------------------------------------------
// KNN
// ---------------------------------------------------------------------------

/// Grid index against exhaustive search; half the centers sit on a coarse
/// lattice so that distance ties occur.
inline CheckReport check_knn(std::uint64_t seed = 0, std::size_t centers = 1024, std::size_t queries = 1000) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::uniform_int_distribution<int> lat(-4, 4), kd(1, 8);
    std::vector<Vec3> c(centers);
    for (std::size_t i = 0; i < centers; ++i) {
        c[i] = i % 2 == 0 ? Vec3(u(rng), u(rng), u(rng)) : Vec3(lat(rng), lat(rng), lat(rng)) * 0.25;
    }
    const UniformGridIndex index(c, suggested_cell_size(c));
    std::size_t mismatches = 0, ties = 0;
    for (std::size_t q = 0; q < queries; ++q) {
        const Vec3 x   = q % 4 == 0 ? Vec3(lat(rng), lat(rng), lat(rng)) * 0.125 : Vec3(1.3 * u(rng), 1.3 * u(rng), 1.3 * u(rng));
        const int k    = kd(rng);
        const auto got = index.query(Vec3::Zero(), x, k);
        const auto ref = brute_force_knn(c, Vec3::Zero(), x, k);
        bool same      = got.size() == ref.size();
        for (std::size_t j = 0; same && j < ref.size(); ++j)
            same = got[j].index == ref[j].index && got[j].dist_sq == ref[j].dist_sq;
        for (std::size_t j = 1; j < ref.size(); ++j) ties += ref[j].dist_sq == ref[j - 1].dist_sq;
        mismatches += !same;
    }
    CheckReport rep;
    std::ostringstream s;
    s << queries << " queries over " << centers << " centers, " << mismatches << " mismatches, " << ties
      << " tied pairs";
    rep.add("knn grid == brute force", mismatches == 0, s.str());
    return rep;
}

// ---------------------------------------------------------------------------
// Diffusion
// ---------------------------------------------------------------------------

struct SamplerStats {
    double mean = 0.0, std = 0.0, seconds = 0.0;
};

inline SamplerStats sample_gaussian_stats(int T, double m, double s, std::size_t chains, std::uint64_t seed,
                                          int steps = -1) {
    const auto sch = cosine_schedule(T);
    std::mt19937_64 rng(seed);
    const auto t0  = std::chrono::steady_clock::now();
    const auto out = reverse_sample(sch, analytic_gauss_denoiser(sch, m, s), chains, rng, steps < 0 ? T : steps);
    SamplerStats st;
    st.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    for (double v : out) st.mean += v;
    st.mean /= double(out.size());
    for (double v : out) st.std += (v - st.mean) * (v - st.mean);
    st.std = std::sqrt(st.std / double(out.size() - 1));
    return st;
}

inline CheckReport check_diffusion(std::uint64_t seed = 0) {
    CheckReport rep;
    {
        const auto sch = cosine_schedule(1000);
        double worst   = 0.0;
        for (int t = 0; t <= 1000; ++t)
            worst = std::max(worst, std::abs(sch.alphas[t] * sch.alphas[t] + sch.sigmas[t] * sch.sigmas[t] - 1.0));
        std::ostringstream s;
        s << "max |a^2 + s^2 - 1| = " << worst;
        rep.add("variance preserving (T=1000)", worst < 1e-12, s.str());
    }
    {
        const auto sch = cosine_schedule(50);
        double worst   = 0.0;
        for (int s = 0; s <= 50; ++s)
            for (int t = s; t <= 50; ++t)
                for (int u = t; u <= 50; ++u) {
                    const auto us = transition_params(sch, s, u), ut = transition_params(sch, t, u),
                               ts = transition_params(sch, s, t);
                    worst = std::max(worst, std::abs(us.alpha - ut.alpha * ts.alpha));
                    worst = std::max(worst, std::abs(us.sigma * us.sigma -
                                                     (ut.alpha * ut.alpha * ts.sigma * ts.sigma + ut.sigma * ut.sigma)));
                }
        std::ostringstream s;
        s << "max composition error = " << worst;
        rep.add("transition composition (T=50)", worst < 1e-12, s.str());
    }
    {
        const SamplerStats st = sample_gaussian_stats(200, 0.3, 0.2, 10000, seed);
        std::ostringstream s;
        s << "mean " << st.mean << ", std " << st.std << " (target 0.3, 0.2)";
        rep.add("sampler moments (T=200, 1e4 chains)",
                std::abs(st.mean - 0.3) <= 0.01 && std::abs(st.std - 0.2) <= 0.05 * 0.2, s.str());
    }
    return rep;
}

} // namespace uvg::checks
