#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "implicitflow/adam.hpp"
#include "implicitflow/analytic.hpp"
#include "implicitflow/mlp.hpp"
#include "implicitflow/rng.hpp"

namespace iflow {

struct SdfFitConfig {
    int hidden_width = 48;
    int depth = 4;
    double omega0 = 30.0;
    int iterations = 2500;
    int batch = 384;
    double lr = 5e-4;
    double lr_final_factor = 0.05;  // cosine decay toward lr * factor
    double eikonal_weight = 1e-2;
    double near_surface_sigma = 0.05;  // surface sample + N(0, sigma) per axis
    double tol_mean_abs = 5e-3;        // on fresh uniform samples in [-1,1]^d
    double tol_surface_grad = 0.1;     // mean ||grad|-1| on surface samples
    int eval_samples = 4096;
    std::uint64_t seed = 1;
};

struct SdfFitResult {
    MlpParams params;
    double mean_abs_error = 0;
    double surface_grad_error = 0;
    bool converged = false;
    std::vector<double> loss_log;  // distance-term loss per iteration
};

/// Fits Phi to a signed distance field by minimizing
///   mean (Phi - phi)^2 + eikonal_weight * mean (|grad Phi| - 1)^2
/// over batches drawn half uniform in [-1,1]^d, half near the surface.
/// Non-convergence is reported in the result, with the achieved error.
template <int D>
SdfFitResult fit_sdf(const Field<D>& target, const SdfFitConfig& cfg) {
    Rng rng(cfg.seed);
    SdfFitResult res;
    res.params = init_siren(D, cfg.hidden_width, cfg.depth, cfg.omega0, rng.next_u64());
    MlpParams& p = res.params;
    Adam opt(p.parameter_count(), {.lr = cfg.lr});
    std::vector<double> grad(p.parameter_count());
    std::vector<Vec<D>> pts(static_cast<std::size_t>(cfg.batch));
    std::vector<double> phi(static_cast<std::size_t>(cfg.batch));
    res.loss_log.reserve(static_cast<std::size_t>(cfg.iterations));

    const Vec<D> lo = Vec<D>::filled(-1.0), hi = Vec<D>::filled(1.0);
    for (int it = 0; it < cfg.iterations; ++it) {
        const double frac = cfg.iterations > 1 ? static_cast<double>(it) / (cfg.iterations - 1) : 0.0;
        const double floor_lr = cfg.lr * cfg.lr_final_factor;
        opt.set_lr(floor_lr + (cfg.lr - floor_lr) * 0.5 * (1.0 + std::cos(M_PI * frac)));
        for (int i = 0; i < cfg.batch; ++i) {
            Vec<D> x;
            if (i % 2 == 0) {
                x = rng.uniform_in_box<D>(lo, hi);
            } else {
                x = target.surface_point(rng);
                for (int k = 0; k < D; ++k) x[k] += rng.normal(0.0, cfg.near_surface_sigma);
            }
            pts[static_cast<std::size_t>(i)] = x;
            phi[static_cast<std::size_t>(i)] = target.value(x);
        }
        std::fill(grad.begin(), grad.end(), 0.0);
        double loss = 0;
        const double wv = 2.0 / cfg.batch;
        const double wg = 2.0 * cfg.eikonal_weight / cfg.batch;
        for (int i = 0; i < cfg.batch; ++i) {
            const auto& x = pts[static_cast<std::size_t>(i)];
            Vec<D> g;
            const double value = value_and_grad(p, x, g);
            const double gn = norm(g);
            const double resid = value - phi[static_cast<std::size_t>(i)];
            loss += resid * resid / cfg.batch;
            const Vec<D> v = gn > 1e-12 ? g / gn : Vec<D>::zero();
            const double cv = wv * resid;
            const double ct = wg * (gn - 1.0);
            accumulate_param_grad(p, std::span<const double>(x.data(), D), cv, ct,
                                  std::span<const double>(v.data(), D), grad);
        }
        opt.step(p.theta(), grad);
        res.loss_log.push_back(loss);
    }

    // fresh-sample evaluation
    double abs_err = 0;
    for (int i = 0; i < cfg.eval_samples; ++i) {
        const Vec<D> x = rng.uniform_in_box<D>(lo, hi);
        abs_err += std::abs(forward(p, x) - target.value(x));
    }
    res.mean_abs_error = abs_err / cfg.eval_samples;
    double gerr = 0;
    const int surf_n = std::max(cfg.eval_samples / 4, 1);
    for (int i = 0; i < surf_n; ++i) {
        const Vec<D> x = target.surface_point(rng);
        Vec<D> g;
        value_and_grad(p, x, g);
        gerr += std::abs(norm(g) - 1.0);
    }
    res.surface_grad_error = gerr / surf_n;
    res.converged = res.mean_abs_error < cfg.tol_mean_abs && res.surface_grad_error < cfg.tol_surface_grad;
    return res;
}

}  // namespace iflow
