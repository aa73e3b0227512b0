// Copyright Contributors to the uvg Project
// SPDX-License-Identifier: Apache-2.0

#include "uvg/checks.hpp"
#include "uvg/diffusion.hpp"
#include "uvg/edit.hpp"
#include "uvg/errors.hpp"
#include "uvg/fit.hpp"
#include "uvg/io.hpp"
#include "uvg/render.hpp"
#include "uvg/toy.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <random>
#include <string>

namespace fs = std::filesystem;
using namespace uvg;

namespace {

constexpr int kExitOk       = 0;
constexpr int kExitInput    = 2;
constexpr int kExitNumeric  = 3;
constexpr int kExitCheck    = 4;

ChannelSelector parse_channels(const std::string &s) {
    if (s == "geo") return ChannelSelector::geometry;
    if (s == "tex") return ChannelSelector::texture;
    if (s == "both") return ChannelSelector::both;
    throw std::invalid_argument("--channels must be geo, tex or both");
}

std::pair<double, double> parse_analytic(const std::string &spec) {
    const std::string prefix = "analytic:";
    if (spec.rfind(prefix, 0) != 0) throw std::invalid_argument("--denoiser must look like analytic:m,s");
    const std::string rest = spec.substr(prefix.size());
    const auto comma       = rest.find(',');
    if (comma == std::string::npos) throw std::invalid_argument("--denoiser must look like analytic:m,s");
    std::size_t u1 = 0, u2 = 0;
    const std::string a = rest.substr(0, comma), b = rest.substr(comma + 1);
    const double m = std::stod(a, &u1), s = std::stod(b, &u2);
    if (u1 != a.size() || u2 != b.size() || !std::isfinite(m) || !(s >= 0.0) || !std::isfinite(s))
        throw std::invalid_argument("--denoiser: bad mean or std");
    return {m, s};
}

void copy_renderer(const fs::path &from_avatar, const fs::path &to_avatar) {
    const fs::path src = io::sidecar_path(from_avatar);
    if (fs::exists(src)) io::save_renderer(io::load_renderer(src), io::sidecar_path(to_avatar));
}

void print_report(const checks::CheckReport &r) {
    for (const auto &l : r.lines) std::cout << (l.passed ? "PASS " : "FAIL ") << l.name << ": " << l.detail << "\n";
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"uvg: UV-grid Gaussian avatars with tri-plane payloads"};
    app.require_subcommand(1);

    // generate -------------------------------------------------------------
    auto *gen = app.add_subcommand("generate", "Write a synthetic toy dataset directory");
    std::string gen_dir, gen_kind = "checker-sphere";
    toy::Options gen_opt;
    gen->add_option("dir", gen_dir, "Output directory")->required();
    gen->add_option("--kind", gen_kind, "sphere | two-lobe | checker-sphere");
    gen->add_option("--views", gen_opt.views, "Number of views");
    gen->add_option("--resolution", gen_opt.resolution, "Image width and height");
    gen->add_option("--seed", gen_opt.seed, "Seed");

    // fit ------------------------------------------------------------------
    auto *fit = app.add_subcommand("fit", "Fit an avatar to a dataset directory");
    std::string fit_dataset, fit_out, fit_mode = "direct", fit_payload = "triplane", fit_history;
    FitConfig fc;
    int fit_k = 3;
    fit->add_option("dataset", fit_dataset, "Dataset directory")->required();
    fit->add_option("--out", fit_out, "Output avatar (.guv)")->required();
    fit->add_option("--iters", fc.iterations, "Iterations");
    fit->add_option("--mode", fit_mode, "direct | latent");
    fit->add_option("--k", fit_k, "Neighbors blended per point");
    fit->add_option("--payload", fit_payload, "triplane | vector");
    fit->add_option("--seed", fc.seed, "Seed");
    fit->add_option("--patch", fc.patch, "Patch size (clamped to the image)");
    fit->add_option("--history", fit_history, "Write per-iteration losses as CSV");

    // render ---------------------------------------------------------------
    auto *ren = app.add_subcommand("render", "Render one view of an avatar");
    std::string ren_avatar, ren_cams, ren_out, ren_depth, ren_alpha;
    std::size_t ren_view = 0;
    std::uint64_t ren_seed = 0;
    ren->add_option("avatar", ren_avatar, "Avatar (.guv) with its .mlp.json sidecar")->required();
    ren->add_option("--camera", ren_cams, "Camera file (JSON)")->required();
    ren->add_option("--view", ren_view, "Camera index");
    ren->add_option("--out", ren_out, "Color output (.ppm)")->required();
    ren->add_option("--depth", ren_depth, "Depth output (.pgm)");
    ren->add_option("--alpha", ren_alpha, "Alpha output (.pgm)");
    auto *ren_seed_opt = ren->add_option("--seed", ren_seed, "Override the jitter seed");

    // edit -----------------------------------------------------------------
    auto *edt = app.add_subcommand("edit", "Region transfer or expression offset");
    std::string ed_target, ed_transfer, ed_mask, ed_channels = "both", ed_expr, ed_out;
    edt->add_option("avatar", ed_target, "Avatar to edit")->required();
    auto *o_transfer = edt->add_option("--transfer", ed_transfer, "Source avatar");
    edt->add_option("--mask", ed_mask, "UV mask (.pgm, >= 128 selects)");
    edt->add_option("--channels", ed_channels, "geo | tex | both");
    auto *o_expr = edt->add_option("--expr", ed_expr, "Avatar whose anchors are the target vertices");
    edt->add_option("--out", ed_out, "Output avatar")->required();
    o_transfer->excludes(o_expr);

    // diffuse --------------------------------------------------------------
    auto *dif = app.add_subcommand("diffuse", "Sample or inpaint a UV tensor");
    std::string df_action, df_schedule = "cosine", df_denoiser = "analytic:0,0.5", df_mask, df_avatar, df_out,
                           df_channels = "both";
    int df_steps = 1000;
    std::uint64_t df_seed = 0;
    dif->add_option("action", df_action, "sample | inpaint")->required()->check(CLI::IsMember({"sample", "inpaint"}));
    dif->add_option("--schedule", df_schedule, "cosine")->check(CLI::IsMember({"cosine"}));
    dif->add_option("--steps", df_steps, "Diffusion steps T");
    dif->add_option("--denoiser", df_denoiser, "analytic:m,s");
    dif->add_option("--mask", df_mask, "Known-texel mask for inpaint (.pgm)");
    dif->add_option("--channels", df_channels, "Channels the mask covers: geo | tex | both");
    dif->add_option("--avatar", df_avatar, "Template avatar (dims; known values for inpaint)")->required();
    dif->add_option("--out", df_out, "Output avatar")->required();
    dif->add_option("--seed", df_seed, "Seed");

    // check ----------------------------------------------------------------
    auto *chk = app.add_subcommand("check", "Run an oracle suite");
    std::string chk_what;
    std::uint64_t chk_seed = 0;
    chk->add_option("suite", chk_what, "grad | knn | diffusion")->required()->check(CLI::IsMember({"grad", "knn", "diffusion"}));
    chk->add_option("--seed", chk_seed, "Seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitInput;
    }

    try {
        if (*gen) {
            gen_opt.kind  = toy::parse_kind(gen_kind);
            const auto ds = toy::generate_toy_dataset(gen_opt, gen_dir);
            std::cout << "wrote " << ds.views.size() << " views to " << gen_dir << "\n";
        } else if (*fit) {
            const io::Dataset ds = io::load_dataset(fit_dataset);
            if (fit_mode != "direct" && fit_mode != "latent") throw std::invalid_argument("--mode must be direct or latent");
            if (fit_payload != "triplane" && fit_payload != "vector")
                throw std::invalid_argument("--payload must be triplane or vector");
            fc.mode         = fit_mode == "direct" ? FitMode::direct : FitMode::latent;
            fc.payload      = fit_payload == "triplane" ? PayloadKind::triplane : PayloadKind::vector;
            fc.render       = ds.render;
            fc.render.knn_k = fit_k;
            for (const auto &v : ds.views)
                fc.patch = std::min({fc.patch, v.camera.width, v.camera.height});
            if (fit_k < 1 || std::size_t(fit_k) > ds.anchors.texel_count())
                throw std::invalid_argument("--k must be in [1, number of texels]");
            fc.on_iteration = [&](long it, const LossBreakdown &b) {
                if ((it + 1) % 100 == 0 || it + 1 == fc.iterations)
                    std::cerr << "iter " << it + 1 << " loss " << b.total << "\n";
            };
            const FitResult r = fit_scene(ds.views, ds.anchors, fc);
            io::save_avatar(r.avatar, fit_out);
            io::save_renderer({r.mlp, fc.render}, io::sidecar_path(fit_out));
            if (!fit_history.empty()) {
                std::string csv = "iteration,total,l1,depth,silhouette,coverage,volume,tv,mesh,code\n";
                char buf[512];
                for (std::size_t i = 0; i < r.breakdowns.size(); ++i) {
                    const auto &b = r.breakdowns[i];
                    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", i,
                                  b.total, b.l1, b.depth, b.silhouette, b.coverage, b.volume, b.tv, b.mesh, b.code);
                    csv += buf;
                }
                io::write_file_atomic(fit_history, csv);
            }
            // the saved avatar is float32; report PSNR of what was written
            const UVAvatar saved = io::round_to_file_precision(r.avatar);
            std::cout << "training PSNR " << training_psnr(saved, r.mlp, ds.views, fc.render) << " dB\n";
        } else if (*ren) {
            const UVAvatar av   = io::load_avatar(ren_avatar);
            io::Renderer rr     = io::load_renderer(io::sidecar_path(ren_avatar));
            const auto cams     = io::load_cameras(ren_cams);
            if (ren_view >= cams.size()) throw std::invalid_argument("--view out of range");
            if (*ren_seed_opt) rr.config.jitter_seed = ren_seed;
            const Camera &cam   = cams[ren_view];
            const auto out      = render_image(av, rr.mlp, cam, rr.config);
            io::write_ppm(ren_out, out.color, cam.width, cam.height);
            if (!ren_depth.empty()) io::write_pgm(ren_depth, out.depth, cam.width, cam.height, cam.far);
            if (!ren_alpha.empty()) io::write_pgm(ren_alpha, out.alpha, cam.width, cam.height, 1.0);
        } else if (*edt) {
            const UVAvatar target = io::load_avatar(ed_target);
            UVAvatar out;
            if (!ed_transfer.empty()) {
                if (ed_mask.empty()) throw std::invalid_argument("--transfer needs --mask");
                const UVAvatar source = io::load_avatar(ed_transfer);
                const UVMask mask     = io::load_mask(ed_mask, parse_channels(ed_channels));
                out                   = region_transfer(target, source, mask);
            } else if (!ed_expr.empty()) {
                const UVAvatar verts = io::load_avatar(ed_expr);
                if (verts.height != target.height || verts.width != target.width)
                    throw std::invalid_argument("--expr avatar has a different UV grid");
                out = apply_expression_offset(target, verts.anchors);
            } else {
                throw std::invalid_argument("edit needs --transfer or --expr");
            }
            io::save_avatar(out, ed_out);
            copy_renderer(ed_target, ed_out);
        } else if (*dif) {
            const UVAvatar templ   = io::load_avatar(df_avatar);
            const auto [m, s]      = parse_analytic(df_denoiser);
            if (df_steps < 1) throw std::invalid_argument("--steps must be >= 1");
            const auto sch         = cosine_schedule(df_steps);
            const Denoiser f       = analytic_gauss_denoiser(sch, m, s);
            UVTensor u             = normalize_avatar(templ);
            std::mt19937_64 rng(df_seed);
            if (df_action == "sample") {
                u.values = reverse_sample(sch, f, u.values.size(), rng, df_steps);
            } else {
                if (df_mask.empty()) throw std::invalid_argument("inpaint needs --mask");
                const UVMask mask = io::load_mask(df_mask, parse_channels(df_channels));
                const auto known  = uv_element_mask(u, mask);
                u.values          = inpaint_sample(sch, f, u.values, known, rng, df_steps);
            }
            UVAvatar out = denormalize_avatar(u, templ);
            for (auto &r : out.radii) r = r.cwiseAbs().cwiseMax(1e-4);
            io::save_avatar(out, df_out);
            copy_renderer(df_avatar, df_out);
        } else if (*chk) {
            checks::CheckReport r;
            if (chk_what == "grad") r = checks::check_grad(chk_seed);
            if (chk_what == "knn") r = checks::check_knn(chk_seed);
            if (chk_what == "diffusion") r = checks::check_diffusion(chk_seed);
            print_report(r);
            return r.passed() ? kExitOk : kExitCheck;
        }
    } catch (const NumericError &e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const FormatError &e) {
        std::cerr << "invalid input: " << e.what() << "\n";
        return kExitInput;
    } catch (const std::invalid_argument &e) {
        std::cerr << "invalid input: " << e.what() << "\n";
        return kExitInput;
    } catch (const fs::filesystem_error &e) {
        std::cerr << "invalid input: " << e.what() << "\n";
        return kExitInput;
    } catch (const std::out_of_range &e) {
        std::cerr << "invalid input: " << e.what() << "\n";
        return kExitInput;
    }
    return kExitOk;
}
