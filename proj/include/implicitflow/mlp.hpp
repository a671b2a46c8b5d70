#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "implicitflow/rng.hpp"
#include "implicitflow/vec.hpp"

namespace iflow {

/// Sine-activated MLP Phi(x; theta) with scalar output.
///
/// Layer l computes a_l = W_l z_l + b_l; hidden layers apply z_{l+1} =
/// sin(omega0 * a_l), the last layer is linear. Parameters live in one flat
/// vector, layer-major: weights row-major (out x in), then bias. Checkpoints
/// and grad_params share this layout, so it must stay stable.
class MlpParams {
public:
    MlpParams() = default;

    MlpParams(int input_dim, std::vector<int> out_dims, double omega0)
        : input_dim_(input_dim), omega0_(omega0), out_dims_(std::move(out_dims)) {
        if (input_dim_ < 1) throw std::invalid_argument("mlp: input_dim must be positive");
        if (out_dims_.empty()) throw std::invalid_argument("mlp: at least one layer required");
        if (out_dims_.back() != 1) throw std::invalid_argument("mlp: output_dim must be 1");
        for (int w : out_dims_)
            if (w < 1) throw std::invalid_argument("mlp: layer widths must be positive");
        std::size_t off = 0;
        w_off_.resize(out_dims_.size());
        b_off_.resize(out_dims_.size());
        for (std::size_t l = 0; l < out_dims_.size(); ++l) {
            w_off_[l] = off;
            off += static_cast<std::size_t>(out_dim(static_cast<int>(l))) * in_dim(static_cast<int>(l));
            b_off_[l] = off;
            off += static_cast<std::size_t>(out_dim(static_cast<int>(l)));
        }
        theta_.assign(off, 0.0);
    }

    int input_dim() const { return input_dim_; }
    double omega0() const { return omega0_; }
    int layer_count() const { return static_cast<int>(out_dims_.size()); }
    int in_dim(int l) const { return l == 0 ? input_dim_ : out_dims_[static_cast<std::size_t>(l) - 1]; }
    int out_dim(int l) const { return out_dims_[static_cast<std::size_t>(l)]; }
    int max_width() const {
        int m = input_dim_;
        for (int w : out_dims_) m = std::max(m, w);
        return m;
    }

    std::size_t parameter_count() const { return theta_.size(); }
    std::span<const double> theta() const { return theta_; }
    std::span<double> theta() { return theta_; }

    const double* weights(int l) const { return theta_.data() + w_off_[static_cast<std::size_t>(l)]; }
    double* weights(int l) { return theta_.data() + w_off_[static_cast<std::size_t>(l)]; }
    const double* bias(int l) const { return theta_.data() + b_off_[static_cast<std::size_t>(l)]; }
    double* bias(int l) { return theta_.data() + b_off_[static_cast<std::size_t>(l)]; }
    std::size_t weight_offset(int l) const { return w_off_[static_cast<std::size_t>(l)]; }
    std::size_t bias_offset(int l) const { return b_off_[static_cast<std::size_t>(l)]; }

    bool finite() const {
        for (double t : theta_)
            if (!std::isfinite(t)) return false;
        return true;
    }

    bool same_shape(const MlpParams& o) const {
        return input_dim_ == o.input_dim_ && out_dims_ == o.out_dims_ && omega0_ == o.omega0_;
    }

private:
    int input_dim_ = 0;
    double omega0_ = 30.0;
    std::vector<int> out_dims_;
    std::vector<std::size_t> w_off_, b_off_;
    std::vector<double> theta_;
};

/// Value, spatial gradient and parameter gradient of Phi at one point.
struct EvalRecord {
    double value = 0.0;
    std::vector<double> input_grad;  // length input_dim
    std::vector<double> param_grad;  // length parameter_count, MlpParams layout
};

/// SIREN initialization: first layer U(-1/in, 1/in), later layers
/// U(-sqrt(6/in)/omega0, sqrt(6/in)/omega0); biases U(-1/sqrt(in), 1/sqrt(in)).
/// Layer dims: input_dim -> hidden_width x (depth-1) -> 1.
inline MlpParams init_siren(int input_dim, int hidden_width, int depth, double omega0,
                            std::uint64_t seed) {
    if (depth < 2) throw std::invalid_argument("init_siren: depth must be >= 2");
    if (hidden_width < 1) throw std::invalid_argument("init_siren: hidden_width must be >= 1");
    if (input_dim < 1) throw std::invalid_argument("init_siren: input_dim must be >= 1");
    std::vector<int> dims(static_cast<std::size_t>(depth), hidden_width);
    dims.back() = 1;
    MlpParams p(input_dim, std::move(dims), omega0);
    Rng rng(seed);
    for (int l = 0; l < p.layer_count(); ++l) {
        const int in = p.in_dim(l);
        const int out = p.out_dim(l);
        const double wb = (l == 0) ? 1.0 / in : std::sqrt(6.0 / in) / omega0;
        double* w = p.weights(l);
        for (int i = 0; i < out * in; ++i) w[i] = rng.uniform(-wb, wb);
        const double bb = 1.0 / std::sqrt(static_cast<double>(in));
        double* b = p.bias(l);
        for (int i = 0; i < out; ++i) b[i] = rng.uniform(-bb, bb);
    }
    return p;
}

namespace detail {

// Per-thread scratch so the public functions stay pure and allocation-free
// in hot loops.
struct MlpScratch {
    std::vector<std::vector<double>> a;   // pre-activations per layer
    std::vector<std::vector<double>> z;   // activations; z[0] is the input
    std::vector<std::vector<double>> at;  // tangent pre-activations
    std::vector<std::vector<double>> zt;  // tangent activations
    std::vector<double> bar_a, bar_at, bar_z, bar_zt;

    void prepare(const MlpParams& p) {
        auto L = static_cast<std::size_t>(p.layer_count());
        a.resize(L);
        z.resize(L + 1);
        at.resize(L);
        zt.resize(L + 1);
        z[0].resize(static_cast<std::size_t>(p.input_dim()));
        zt[0].resize(static_cast<std::size_t>(p.input_dim()));
        for (std::size_t l = 0; l < L; ++l) {
            auto out = static_cast<std::size_t>(p.out_dim(static_cast<int>(l)));
            a[l].resize(out);
            at[l].resize(out);
            z[l + 1].resize(out);
            zt[l + 1].resize(out);
        }
        auto w = static_cast<std::size_t>(p.max_width());
        bar_a.resize(w);
        bar_at.resize(w);
        bar_z.resize(w);
        bar_zt.resize(w);
    }
};

inline MlpScratch& scratch() {
    thread_local MlpScratch s;
    return s;
}

// a = W z + b
inline void affine(const double* W, const double* b, std::span<const double> z, std::span<double> a,
                   int out, int in) {
    for (int r = 0; r < out; ++r) {
        const double* row = W + static_cast<std::size_t>(r) * in;
        double s = b ? b[r] : 0.0;
        for (int c = 0; c < in; ++c) s += row[c] * z[static_cast<std::size_t>(c)];
        a[static_cast<std::size_t>(r)] = s;
    }
}

// Forward pass caching a and z in the scratch.
inline double forward_cached(const MlpParams& p, std::span<const double> x, MlpScratch& s) {
    const int L = p.layer_count();
    const double w0 = p.omega0();
    for (int i = 0; i < p.input_dim(); ++i) s.z[0][static_cast<std::size_t>(i)] = x[static_cast<std::size_t>(i)];
    for (int l = 0; l < L; ++l) {
        const int out = p.out_dim(l), in = p.in_dim(l);
        auto lu = static_cast<std::size_t>(l);
        affine(p.weights(l), p.bias(l), s.z[lu], s.a[lu], out, in);
        if (l + 1 < L)
            for (int r = 0; r < out; ++r)
                s.z[lu + 1][static_cast<std::size_t>(r)] = std::sin(w0 * s.a[lu][static_cast<std::size_t>(r)]);
    }
    return s.a[static_cast<std::size_t>(L - 1)][0];
}

}  // namespace detail

inline void check_input(const MlpParams& p, std::span<const double> x) {
    if (static_cast<int>(x.size()) != p.input_dim())
        throw std::invalid_argument("mlp: input dimension mismatch");
    for (double c : x)
        if (!std::isfinite(c)) throw std::invalid_argument("mlp: non-finite input");
}

/// Phi(x; theta).
inline double forward(const MlpParams& p, std::span<const double> x) {
    check_input(p, x);
    auto& s = detail::scratch();
    s.prepare(p);
    return detail::forward_cached(p, x, s);
}

template <int D>
inline double forward(const MlpParams& p, const Vec<D>& x) {
    return forward(p, std::span<const double>(x.data(), D));
}

/// Value and exact spatial gradient in one reverse sweep.
inline double value_and_grad(const MlpParams& p, std::span<const double> x, std::span<double> grad_x) {
    check_input(p, x);
    auto& s = detail::scratch();
    s.prepare(p);
    const double value = detail::forward_cached(p, x, s);
    const int L = p.layer_count();
    const double w0 = p.omega0();
    // bar_a starts at the scalar output with seed 1.
    s.bar_a[0] = 1.0;
    for (int l = L - 1; l >= 0; --l) {
        const int out = p.out_dim(l), in = p.in_dim(l);
        const double* W = p.weights(l);
        for (int c = 0; c < in; ++c) s.bar_z[static_cast<std::size_t>(c)] = 0.0;
        for (int r = 0; r < out; ++r) {
            const double ar = s.bar_a[static_cast<std::size_t>(r)];
            if (ar == 0.0) continue;
            const double* row = W + static_cast<std::size_t>(r) * in;
            for (int c = 0; c < in; ++c) s.bar_z[static_cast<std::size_t>(c)] += ar * row[c];
        }
        if (l > 0) {
            const auto& al = s.a[static_cast<std::size_t>(l - 1)];
            for (int c = 0; c < in; ++c) {
                auto cu = static_cast<std::size_t>(c);
                const double cw = w0 * std::cos(w0 * al[cu]);
                s.bar_a[cu] = s.bar_z[cu] * cw;
            }
        }
    }
    for (int i = 0; i < p.input_dim(); ++i) grad_x[static_cast<std::size_t>(i)] = s.bar_z[static_cast<std::size_t>(i)];
    return value;
}

template <int D>
inline double value_and_grad(const MlpParams& p, const Vec<D>& x, Vec<D>& grad_x) {
    return value_and_grad(p, std::span<const double>(x.data(), D), std::span<double>(grad_x.data(), D));
}

/// grad of Phi with respect to position.
template <int D>
inline Vec<D> grad_input(const MlpParams& p, const Vec<D>& x) {
    Vec<D> g;
    value_and_grad(p, x, g);
    return g;
}

inline std::vector<double> grad_input(const MlpParams& p, std::span<const double> x) {
    std::vector<double> g(x.size());
    value_and_grad(p, x, g);
    return g;
}

/// Accumulates d/dtheta of (cv * Phi(x) + ct * (v . grad_x Phi(x))) into
/// `grad` (MlpParams layout). The second seed is the workhorse for eikonal
/// terms: the derivative of |grad Phi| contracts to a fixed direction v, so a
/// forward tangent pass along v followed by one reverse sweep gives the exact
/// mixed second-order gradient.
///
/// Returns Phi(x); if grad_x is non-empty it receives the spatial gradient.
inline double accumulate_param_grad(const MlpParams& p, std::span<const double> x, double cv,
                                    double ct, std::span<const double> v, std::span<double> grad,
                                    std::span<double> grad_x = {}) {
    check_input(p, x);
    if (grad.size() != p.parameter_count())
        throw std::invalid_argument("mlp: gradient accumulator size mismatch");
    auto& s = detail::scratch();
    s.prepare(p);
    const double value = detail::forward_cached(p, x, s);
    const int L = p.layer_count();
    const double w0 = p.omega0();
    const bool with_tangent = (ct != 0.0);

    if (with_tangent) {
        if (static_cast<int>(v.size()) != p.input_dim())
            throw std::invalid_argument("mlp: tangent direction dimension mismatch");
        for (int i = 0; i < p.input_dim(); ++i) s.zt[0][static_cast<std::size_t>(i)] = v[static_cast<std::size_t>(i)];
        for (int l = 0; l < L; ++l) {
            const int out = p.out_dim(l), in = p.in_dim(l);
            auto lu = static_cast<std::size_t>(l);
            detail::affine(p.weights(l), nullptr, s.zt[lu], s.at[lu], out, in);
            if (l + 1 < L)
                for (int r = 0; r < out; ++r) {
                    auto ru = static_cast<std::size_t>(r);
                    s.zt[lu + 1][ru] = w0 * std::cos(w0 * s.a[lu][ru]) * s.at[lu][ru];
                }
        }
    }

    // Reverse sweep over the primal chain and (when ct != 0) the tangent chain.
    s.bar_a[0] = cv;
    s.bar_at[0] = ct;
    for (int l = L - 1; l >= 0; --l) {
        const int out = p.out_dim(l), in = p.in_dim(l);
        auto lu = static_cast<std::size_t>(l);
        const double* W = p.weights(l);
        double* gw = grad.data() + p.weight_offset(l);
        double* gb = grad.data() + p.bias_offset(l);
        const auto& zl = s.z[lu];
        const auto& ztl = s.zt[lu];
        for (int c = 0; c < in; ++c) {
            s.bar_z[static_cast<std::size_t>(c)] = 0.0;
            s.bar_zt[static_cast<std::size_t>(c)] = 0.0;
        }
        for (int r = 0; r < out; ++r) {
            auto ru = static_cast<std::size_t>(r);
            const double ba = s.bar_a[ru];
            const double* row = W + static_cast<std::size_t>(r) * in;
            double* grow = gw + static_cast<std::size_t>(r) * in;
            if (with_tangent) {
                const double bat = s.bar_at[ru];
                if (ba != 0.0 || bat != 0.0) {
                    for (int c = 0; c < in; ++c) {
                        auto cu = static_cast<std::size_t>(c);
                        grow[cu] += ba * zl[cu] + bat * ztl[cu];
                        s.bar_z[cu] += ba * row[c];
                        s.bar_zt[cu] += bat * row[c];
                    }
                }
            } else if (ba != 0.0) {
                for (int c = 0; c < in; ++c) {
                    auto cu = static_cast<std::size_t>(c);
                    grow[cu] += ba * zl[cu];
                    s.bar_z[cu] += ba * row[c];
                }
            }
            gb[ru] += ba;
        }
        if (l > 0) {
            const auto& am = s.a[lu - 1];
            const auto& atm = s.at[lu - 1];
            for (int c = 0; c < in; ++c) {
                auto cu = static_cast<std::size_t>(c);
                const double cw = w0 * std::cos(w0 * am[cu]);
                double ba = s.bar_z[cu] * cw;
                if (with_tangent) {
                    ba -= s.bar_zt[cu] * w0 * w0 * std::sin(w0 * am[cu]) * atm[cu];
                    s.bar_at[cu] = s.bar_zt[cu] * cw;
                }
                s.bar_a[cu] = ba;
            }
        }
    }
    if (!grad_x.empty()) {
        // bar_z at the input holds d/dx of (cv*Phi + ct*(v.grad Phi)); only
        // meaningful to callers when ct == 0, where it is cv * grad Phi.
        for (int i = 0; i < p.input_dim(); ++i)
            grad_x[static_cast<std::size_t>(i)] = s.bar_z[static_cast<std::size_t>(i)];
    }
    return value;
}

/// d(forward)/dtheta in MlpParams layout order.
inline std::vector<double> grad_params(const MlpParams& p, std::span<const double> x) {
    std::vector<double> g(p.parameter_count(), 0.0);
    accumulate_param_grad(p, x, 1.0, 0.0, {}, g);
    return g;
}

template <int D>
inline std::vector<double> grad_params(const MlpParams& p, const Vec<D>& x) {
    return grad_params(p, std::span<const double>(x.data(), D));
}

/// Value, spatial gradient and parameter gradient at x.
inline EvalRecord eval_record(const MlpParams& p, std::span<const double> x) {
    EvalRecord r;
    r.input_grad.assign(static_cast<std::size_t>(p.input_dim()), 0.0);
    r.param_grad.assign(p.parameter_count(), 0.0);
    r.value = accumulate_param_grad(p, x, 1.0, 0.0, {}, r.param_grad, r.input_grad);
    return r;
}

/// Trace of the Hessian of Phi at x: one univariate second-order forward
/// pass per axis, reusing the cached primal activations.
inline double laplacian(const MlpParams& p, std::span<const double> x) {
    check_input(p, x);
    auto& s = detail::scratch();
    s.prepare(p);
    detail::forward_cached(p, x, s);
    const int L = p.layer_count();
    const double w0 = p.omega0();
    const int d = p.input_dim();
    double trace = 0.0;
    std::vector<double>& t1 = s.bar_z;   // first-order tangent, reused buffers
    std::vector<double>& t2 = s.bar_zt;  // second-order tangent
    std::vector<double>& n1 = s.bar_a;
    std::vector<double>& n2 = s.bar_at;
    for (int axis = 0; axis < d; ++axis) {
        for (int i = 0; i < d; ++i) {
            t1[static_cast<std::size_t>(i)] = (i == axis) ? 1.0 : 0.0;
            t2[static_cast<std::size_t>(i)] = 0.0;
        }
        int in_now = d;
        for (int l = 0; l < L; ++l) {
            const int out = p.out_dim(l);
            const double* W = p.weights(l);
            for (int r = 0; r < out; ++r) {
                const double* row = W + static_cast<std::size_t>(r) * in_now;
                double s1 = 0.0, s2 = 0.0;
                for (int c = 0; c < in_now; ++c) {
                    s1 += row[c] * t1[static_cast<std::size_t>(c)];
                    s2 += row[c] * t2[static_cast<std::size_t>(c)];
                }
                n1[static_cast<std::size_t>(r)] = s1;
                n2[static_cast<std::size_t>(r)] = s2;
            }
            if (l + 1 < L) {
                const auto& al = s.a[static_cast<std::size_t>(l)];
                for (int r = 0; r < out; ++r) {
                    auto ru = static_cast<std::size_t>(r);
                    const double c1 = w0 * std::cos(w0 * al[ru]);
                    const double s1 = w0 * w0 * std::sin(w0 * al[ru]);
                    t2[ru] = c1 * n2[ru] - s1 * n1[ru] * n1[ru];
                    t1[ru] = c1 * n1[ru];
                }
            } else {
                trace += n2[0];
            }
            in_now = out;
        }
    }
    return trace;
}

template <int D>
inline double laplacian(const MlpParams& p, const Vec<D>& x) {
    return laplacian(p, std::span<const double>(x.data(), D));
}

}  // namespace iflow
