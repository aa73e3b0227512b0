// Copyright Contributors to the uvg Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "uvg/errors.hpp"
#include "uvg/tape.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace uvg {

/// A named block of optimizable scalars with its own learning rate.
struct ParamGroup {
    std::string name;
    std::vector<double> values;
    double lr = 0.0;
};

/// Ordered collection of parameter groups. Group names are unique.
class ParamSet {
  public:
    ParamGroup &add(std::string name, std::vector<double> values, double lr) {
        if (find(name) != nullptr) {
            throw std::invalid_argument("ParamSet: duplicate group '" + name + "'");
        }
        if (!(lr >= 0.0)) {
            throw std::invalid_argument("ParamSet: learning rate must be >= 0");
        }
        groups_.push_back({std::move(name), std::move(values), lr});
        return groups_.back();
    }

    std::size_t size() const { return groups_.size(); }
    ParamGroup &operator[](std::size_t i) { return groups_[i]; }
    const ParamGroup &operator[](std::size_t i) const { return groups_[i]; }

    const ParamGroup *find(const std::string &name) const {
        for (const auto &g : groups_)
            if (g.name == name) return &g;
        return nullptr;
    }
    ParamGroup *find(const std::string &name) {
        for (auto &g : groups_)
            if (g.name == name) return &g;
        return nullptr;
    }

    ParamGroup &at(const std::string &name) {
        auto *g = find(name);
        if (!g) throw std::out_of_range("ParamSet: no group '" + name + "'");
        return *g;
    }
    const ParamGroup &at(const std::string &name) const {
        const auto *g = find(name);
        if (!g) throw std::out_of_range("ParamSet: no group '" + name + "'");
        return *g;
    }

    std::size_t scalar_count() const {
        std::size_t n = 0;
        for (const auto &g : groups_) n += g.values.size();
        return n;
    }

    /// Same names and sizes, all values zero.
    ParamSet zeros_like() const {
        ParamSet z;
        for (const auto &g : groups_) z.groups_.push_back({g.name, std::vector<double>(g.values.size(), 0.0), g.lr});
        return z;
    }

    bool same_layout(const ParamSet &o) const {
        if (o.groups_.size() != groups_.size()) return false;
        for (std::size_t i = 0; i < groups_.size(); ++i) {
            if (groups_[i].name != o.groups_[i].name || groups_[i].values.size() != o.groups_[i].values.size())
                return false;
        }
        return true;
    }

  private:
    std::vector<ParamGroup> groups_;
};

/// Builds the loss on `tape` from one leaf per parameter group (same order).
using LossFn = std::function<ad::Var(ad::Tape &, const std::vector<ad::Var> &)>;

namespace detail {

inline std::vector<ad::Var> make_leaves(ad::Tape &tape, const ParamSet &params) {
    std::vector<ad::Var> leaves;
    leaves.reserve(params.size());
    for (std::size_t g = 0; g < params.size(); ++g) leaves.push_back(tape.leaf(params[g].values, params[g].name));
    return leaves;
}

} // namespace detail

/// Loss value without recording derivatives.
inline double evaluate(const LossFn &fn, const ParamSet &params) {
    ad::Tape tape(false);
    const auto leaves = detail::make_leaves(tape, params);
    const ad::Var root = fn(tape, leaves);
    if (tape.first_non_finite() || !std::isfinite(root.scalar())) {
        const std::string op = tape.first_non_finite().value_or("loss");
        throw NumericError("non-finite value produced by op '" + op + "'", op);
    }
    return root.scalar();
}

struct GradientResult {
    double loss = 0.0;
    ParamSet grads;
};

/// Reverse-mode gradient of the loss with respect to every group.
inline GradientResult gradients(const LossFn &fn, const ParamSet &params) {
    ad::Tape tape(true);
    const auto leaves = detail::make_leaves(tape, params);
    const ad::Var root = fn(tape, leaves);
    tape.backward(root);
    GradientResult r{root.scalar(), params.zeros_like()};
    for (std::size_t g = 0; g < params.size(); ++g) r.grads[g].values = tape.grad(leaves[g].id());
    return r;
}

/// Step used for scalar theta: h * max(1, |theta|).
inline double fd_step(double theta, double h) { return h * std::max(1.0, std::abs(theta)); }

/// Central difference of the loss along one scalar.
inline double finite_diff_scalar(const LossFn &fn, ParamSet params, std::size_t group, std::size_t index,
                                 double h) {
    if (!(h > 0.0)) throw std::invalid_argument("finite_diff: h must be positive");
    double &theta    = params[group].values.at(index);
    const double t0  = theta;
    const double step = fd_step(t0, h);
    theta            = t0 + step;
    const double lp  = evaluate(fn, params);
    theta            = t0 - step;
    const double lm  = evaluate(fn, params);
    return (lp - lm) / (2.0 * step);
}

/// Central differences for every scalar.
inline ParamSet finite_diff(const LossFn &fn, const ParamSet &params, double h = 1e-5) {
    ParamSet out = params.zeros_like();
    for (std::size_t g = 0; g < params.size(); ++g)
        for (std::size_t i = 0; i < params[g].values.size(); ++i)
            out[g].values[i] = finite_diff_scalar(fn, params, g, i, h);
    return out;
}

// ---------------------------------------------------------------------------
// Gradient check
// ---------------------------------------------------------------------------

struct GradCheckOptions {
    double h             = 1e-5;
    double tolerance     = 1e-4;
    /// Denominator floor of the relative error.
    double floor         = 1e-6;
    /// Scalars checked per group: up to `max_nonzero` with a nonzero analytic
    /// gradient plus up to `max_zero` with a zero one. 0 checks everything.
    std::size_t max_nonzero = 0;
    std::size_t max_zero    = 0;
    /// A scalar is treated as kink-adjacent (excluded) when the second
    /// differences over [-2h, 2h] could move the central difference by more
    /// than this relative amount.
    double kink_tolerance = 2.5e-5;
    std::uint64_t seed    = 0;
};

struct GradCheckEntry {
    std::size_t index = 0;
    double analytic   = 0.0;
    double numeric    = 0.0;
    double rel_error  = 0.0;
    bool excluded     = false;
};

struct GroupCheck {
    std::string name;
    std::size_t compared = 0;
    std::size_t excluded = 0;
    double max_rel_error = 0.0;
    std::vector<GradCheckEntry> entries;
    bool passed = true;
};

struct GradCheckReport {
    double loss = 0.0;
    std::vector<GroupCheck> groups;
    bool passed = true;
};

inline double relative_error(double a, double n, double floor) {
    return std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
}

/// Compares analytic against central-difference gradients group by group.
inline GradCheckReport check_gradients(const LossFn &fn, const ParamSet &params, const GradCheckOptions &opt = {}) {
    const auto analytic = gradients(fn, params);
    const double f0     = evaluate(fn, params);
    GradCheckReport rep;
    rep.loss = analytic.loss;
    std::mt19937_64 rng(opt.seed);
    for (std::size_t g = 0; g < params.size(); ++g) {
        GroupCheck gc;
        gc.name        = params[g].name;
        const auto &ga = analytic.grads[g].values;
        std::vector<std::size_t> nz, zr;
        for (std::size_t i = 0; i < ga.size(); ++i) (ga[i] != 0.0 ? nz : zr).push_back(i);
        auto pick = [&](std::vector<std::size_t> &v, std::size_t cap) {
            if (cap == 0 || v.size() <= cap) return;
            std::shuffle(v.begin(), v.end(), rng);
            v.resize(cap);
            std::sort(v.begin(), v.end());
        };
        if (opt.max_nonzero != 0 || opt.max_zero != 0) {
            pick(nz, opt.max_nonzero);
            pick(zr, opt.max_zero);
        }
        std::vector<std::size_t> idx = nz;
        idx.insert(idx.end(), zr.begin(), zr.end());
        for (std::size_t i : idx) {
            const double step = fd_step(params[g].values[i], opt.h);
            auto at           = [&](double d) {
                ParamSet p = params;
                p[g].values[i] += d;
                return evaluate(fn, p);
            };
            const double fm2 = at(-2.0 * step), fm1 = at(-step), fp1 = at(step), fp2 = at(2.0 * step);
            GradCheckEntry e;
            e.index    = i;
            e.analytic = ga[i];
            e.numeric  = (fp1 - fm1) / (2.0 * step);
            // A kink or jump inside the stencil shows up as unequal second
            // differences; its effect on the central difference is spread / 2h.
            const double d2[3] = {fm2 - 2.0 * fm1 + f0, fm1 - 2.0 * f0 + fp1, f0 - 2.0 * fp1 + fp2};
            const double spread = std::max({d2[0], d2[1], d2[2]}) - std::min({d2[0], d2[1], d2[2]});
            e.excluded  = spread / (2.0 * step) > opt.kink_tolerance * std::max(std::abs(e.numeric), opt.floor);
            e.rel_error = relative_error(e.analytic, e.numeric, opt.floor);
            if (e.excluded) {
                ++gc.excluded;
            } else {
                ++gc.compared;
                gc.max_rel_error = std::max(gc.max_rel_error, e.rel_error);
                gc.passed        = gc.passed && e.rel_error < opt.tolerance;
            }
            gc.entries.push_back(e);
        }
        rep.passed = rep.passed && gc.passed;
        rep.groups.push_back(std::move(gc));
    }
    return rep;
}

// ---------------------------------------------------------------------------
// AdamW
// ---------------------------------------------------------------------------

struct AdamWConfig {
    double beta1        = 0.9;
    double beta2        = 0.999;
    double eps          = 1e-8;
    double weight_decay = 0.0;
    /// Every group's rate is multiplied by decay_factor once per decay_step steps.
    long decay_step     = 100000;
    double decay_factor = 0.5;
};

struct AdamWState {
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
    long step = 0;

    AdamWState() = default;
    explicit AdamWState(const ParamSet &p) {
        for (std::size_t g = 0; g < p.size(); ++g) {
            m.emplace_back(p[g].values.size(), 0.0);
            v.emplace_back(p[g].values.size(), 0.0);
        }
    }
};

inline double scheduled_lr(double base, long step, const AdamWConfig &cfg) {
    if (cfg.decay_step <= 0) return base;
    return base * std::pow(cfg.decay_factor, static_cast<double>(step / cfg.decay_step));
}

/// One bias-corrected AdamW update (decoupled weight decay) using each group's lr.
inline void adamw_step(ParamSet &params, const ParamSet &grads, AdamWState &st, const AdamWConfig &cfg = {}) {
    if (!params.same_layout(grads) || st.m.size() != params.size()) {
        throw std::invalid_argument("adamw_step: parameter, gradient and state shapes disagree");
    }
    for (std::size_t g = 0; g < params.size(); ++g) {
        if (st.m[g].size() != params[g].values.size()) {
            throw std::invalid_argument("adamw_step: state shape mismatch in group " + params[g].name);
        }
        for (double x : grads[g].values) {
            if (!std::isfinite(x)) {
                throw NumericError("non-finite gradient in group '" + params[g].name + "'", params[g].name);
            }
        }
    }
    const long t      = st.step + 1;
    const double bc1  = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
    const double bc2  = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
    for (std::size_t g = 0; g < params.size(); ++g) {
        const double lr = scheduled_lr(params[g].lr, st.step, cfg);
        auto &x         = params[g].values;
        const auto &gr  = grads[g].values;
        auto &m         = st.m[g];
        auto &v         = st.v[g];
        for (std::size_t i = 0; i < x.size(); ++i) {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gr[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gr[i] * gr[i];
            const double mh = m[i] / bc1;
            const double vh = v[i] / bc2;
            x[i] -= lr * (mh / (std::sqrt(vh) + cfg.eps) + cfg.weight_decay * x[i]);
        }
    }
    st.step = t;
}

} // namespace uvg
