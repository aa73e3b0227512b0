// Copyright Contributors to the uvg Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "uvg/errors.hpp"

#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace uvg::ad {

class Tape;

/// Handle to a tensor node recorded on a Tape.
class Var {
  public:
    Var() = default;
    Var(Tape *tape, std::size_t id) : tape_(tape), id_(id) {}

    Tape &tape() const { return *tape_; }
    std::size_t id() const { return id_; }
    const std::vector<double> &value() const;
    double scalar() const;
    std::size_t size() const { return value().size(); }

  private:
    Tape *tape_      = nullptr;
    std::size_t id_  = 0;
};

/// Reverse-mode tape over flat double tensors. Every node stores its value and
/// a closure that pushes its gradient back to its inputs. Nodes are appended in
/// evaluation order, so walking them backwards is a valid topological order.
///
/// When constructed with record_gradients = false the tape only evaluates;
/// fused operations may then skip their derivative work.
class Tape {
  public:
    using Backward = std::function<void(Tape &, std::size_t self)>;

    explicit Tape(bool record_gradients = true) : record_(record_gradients) {}

    Tape(const Tape &)            = delete;
    Tape &operator=(const Tape &) = delete;

    bool recording() const { return record_; }

    Var leaf(std::vector<double> values, std::string name = "leaf") {
        return push(std::move(values), std::move(name), nullptr);
    }

    /// Appends a node. `backward` may be empty for nodes without inputs.
    Var push(std::vector<double> value, std::string op, Backward backward) {
        if (!first_bad_) {
            for (double v : value) {
                if (!std::isfinite(v)) {
                    first_bad_ = op;
                    break;
                }
            }
        }
        nodes_.push_back({std::move(value), {}, std::move(op), std::move(backward)});
        return Var(this, nodes_.size() - 1);
    }

    const std::vector<double> &value(std::size_t id) const { return nodes_[id].value; }
    const std::string &op(std::size_t id) const { return nodes_[id].op; }

    /// Gradient buffer of a node; valid after backward().
    std::vector<double> &grad(std::size_t id) {
        auto &n = nodes_[id];
        if (n.grad.size() != n.value.size()) {
            n.grad.assign(n.value.size(), 0.0);
        }
        return n.grad;
    }

    std::size_t size() const { return nodes_.size(); }

    /// Name of the first op that produced a non-finite value, if any.
    const std::optional<std::string> &first_non_finite() const { return first_bad_; }

    /// Seeds d(root)/d(root) = 1 and propagates to every recorded node.
    void backward(const Var &root) {
        if (!record_) {
            throw std::logic_error("Tape::backward on a tape built without gradients");
        }
        if (root.size() != 1) {
            throw std::invalid_argument("Tape::backward: root must be a scalar");
        }
        if (first_bad_) {
            throw NumericError("non-finite value produced by op '" + *first_bad_ + "'", *first_bad_);
        }
        for (auto &n : nodes_) {
            n.grad.assign(n.value.size(), 0.0);
        }
        nodes_[root.id()].grad[0] = 1.0;
        for (std::size_t i = root.id() + 1; i-- > 0;) {
            if (nodes_[i].backward) {
                nodes_[i].backward(*this, i);
            }
        }
    }

  private:
    struct Node {
        std::vector<double> value;
        std::vector<double> grad;
        std::string op;
        Backward backward;
    };

    bool record_;
    std::vector<Node> nodes_;
    std::optional<std::string> first_bad_;
};

inline const std::vector<double> &Var::value() const { return tape_->value(id_); }

inline double Var::scalar() const {
    const auto &v = value();
    if (v.size() != 1) {
        throw std::invalid_argument("Var::scalar on a non-scalar node");
    }
    return v[0];
}

// ---------------------------------------------------------------------------
// Elementwise and reduction ops. Binary ops broadcast size-1 operands.
// ---------------------------------------------------------------------------

namespace detail {

template <typename F, typename DA, typename DB>
Var binary(const Var &a, const Var &b, std::string op, F f, DA da, DB db) {
    Tape &t       = a.tape();
    const auto &x = a.value();
    const auto &y = b.value();
    if (x.size() != y.size() && x.size() != 1 && y.size() != 1) {
        throw std::invalid_argument(op + ": incompatible sizes");
    }
    const std::size_t n = std::max(x.size(), y.size());
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = f(x[x.size() == 1 ? 0 : i], y[y.size() == 1 ? 0 : i]);
    }
    const std::size_t ia = a.id(), ib = b.id();
    return t.push(std::move(out), std::move(op), [ia, ib, da, db](Tape &tp, std::size_t self) {
        const auto &x   = tp.value(ia);
        const auto &y   = tp.value(ib);
        const auto g    = tp.grad(self);
        auto &gx        = tp.grad(ia);
        auto &gy        = tp.grad(ib);
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double xv = x[x.size() == 1 ? 0 : i], yv = y[y.size() == 1 ? 0 : i];
            gx[x.size() == 1 ? 0 : i] += g[i] * da(xv, yv);
            gy[y.size() == 1 ? 0 : i] += g[i] * db(xv, yv);
        }
    });
}

template <typename F, typename D>
Var unary(const Var &a, std::string op, F f, D d) {
    const auto &x = a.value();
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
    const std::size_t ia = a.id();
    return a.tape().push(std::move(out), std::move(op), [ia, d](Tape &tp, std::size_t self) {
        const auto &x = tp.value(ia);
        const auto g  = tp.grad(self);
        auto &gx      = tp.grad(ia);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * d(x[i]);
    });
}

} // namespace detail

inline Var operator+(const Var &a, const Var &b) {
    return detail::binary(
        a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
        [](double, double) { return 1.0; });
}

inline Var operator-(const Var &a, const Var &b) {
    return detail::binary(
        a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
        [](double, double) { return -1.0; });
}

inline Var operator*(const Var &a, const Var &b) {
    return detail::binary(
        a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
        [](double x, double) { return x; });
}

inline Var operator/(const Var &a, const Var &b) {
    return detail::binary(
        a, b, "div", [](double x, double y) { return x / y; },
        [](double, double y) { return 1.0 / y; }, [](double x, double y) { return -x / (y * y); });
}

inline Var scale(const Var &a, double c) {
    return detail::unary(
        a, "scale", [c](double x) { return c * x; }, [c](double) { return c; });
}

inline Var operator*(double c, const Var &a) { return scale(a, c); }

inline Var square(const Var &a) {
    return detail::unary(
        a, "square", [](double x) { return x * x; }, [](double x) { return 2.0 * x; });
}

inline Var exp(const Var &a) {
    return detail::unary(
        a, "exp", [](double x) { return std::exp(x); }, [](double x) { return std::exp(x); });
}

inline Var log(const Var &a) {
    return detail::unary(
        a, "log", [](double x) { return std::log(x); }, [](double x) { return 1.0 / x; });
}

inline Var tanh(const Var &a) {
    return detail::unary(
        a, "tanh", [](double x) { return std::tanh(x); },
        [](double x) {
            const double t = std::tanh(x);
            return 1.0 - t * t;
        });
}

inline Var sigmoid(const Var &a) {
    return detail::unary(
        a, "sigmoid", [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
        [](double x) {
            const double s = 1.0 / (1.0 + std::exp(-x));
            return s * (1.0 - s);
        });
}

/// Subgradient 0 at the kink.
inline Var relu(const Var &a) {
    return detail::unary(
        a, "relu", [](double x) { return x > 0.0 ? x : 0.0; }, [](double x) { return x > 0.0 ? 1.0 : 0.0; });
}

/// sign(0) = 0.
inline Var abs(const Var &a) {
    return detail::unary(
        a, "abs", [](double x) { return std::abs(x); },
        [](double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

inline Var sum(const Var &a) {
    double s = 0.0;
    for (double v : a.value()) s += v;
    const std::size_t ia = a.id();
    return a.tape().push({s}, "sum", [ia](Tape &tp, std::size_t self) {
        const double g = tp.grad(self)[0];
        for (double &gx : tp.grad(ia)) gx += g;
    });
}

inline Var mean(const Var &a) {
    if (a.size() == 0) {
        throw std::invalid_argument("mean of an empty tensor");
    }
    return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

/// Contiguous slice [offset, offset + count).
inline Var slice(const Var &a, std::size_t offset, std::size_t count) {
    const auto &x = a.value();
    if (offset + count > x.size()) {
        throw std::out_of_range("slice out of range");
    }
    std::vector<double> out(x.begin() + offset, x.begin() + offset + count);
    const std::size_t ia = a.id();
    return a.tape().push(std::move(out), "slice", [ia, offset](Tape &tp, std::size_t self) {
        const auto g = tp.grad(self);
        auto &gx     = tp.grad(ia);
        for (std::size_t i = 0; i < g.size(); ++i) gx[offset + i] += g[i];
    });
}

inline Var constant(Tape &t, std::vector<double> values) {
    return t.push(std::move(values), "constant", nullptr);
}

/// Scalar node whose value and input gradients were computed by a fused
/// kernel. `grads[i]` is d(value)/d(inputs[i]); it may be empty when the tape
/// does not record gradients.
inline Var fused_scalar(std::string op, double value, std::vector<Var> inputs,
                        std::vector<std::vector<double>> grads) {
    if (inputs.empty()) {
        throw std::invalid_argument("fused_scalar: no inputs");
    }
    Tape &t = inputs.front().tape();
    if (!t.recording()) {
        return t.push({value}, std::move(op), nullptr);
    }
    std::vector<std::size_t> ids;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        if (grads[i].size() != inputs[i].size()) {
            throw std::invalid_argument(op + ": gradient shape mismatch");
        }
        ids.push_back(inputs[i].id());
    }
    return t.push({value}, std::move(op),
                  [ids = std::move(ids), grads = std::move(grads)](Tape &tp, std::size_t self) {
                      const double g = tp.grad(self)[0];
                      if (g == 0.0) return;
                      for (std::size_t i = 0; i < ids.size(); ++i) {
                          auto &gx = tp.grad(ids[i]);
                          for (std::size_t j = 0; j < gx.size(); ++j) gx[j] += g * grads[i][j];
                      }
                  });
}

} // namespace uvg::ad
