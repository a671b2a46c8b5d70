#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "implicitflow/adam.hpp"
#include "implicitflow/flows.hpp"
#include "implicitflow/grid.hpp"
#include "implicitflow/marching.hpp"
#include "implicitflow/mesh.hpp"
#include "implicitflow/mesh_ops.hpp"
#include "implicitflow/mlp.hpp"
#include "implicitflow/rng.hpp"

namespace iflow {

struct EvolutionDiverged : std::runtime_error {
    explicit EvolutionDiverged(const std::string& what) : std::runtime_error(what) {}
};

template <int D>
struct EvolutionConfig {
    double dt = 0.1;              // time step of the level-set update
    double lr = 1e-4;             // inner Adam learning rate
    int inner_steps = 100;        // gradient steps per time step
    double eikonal_weight = 1e-3;
    double weight_decay = 0.0;
    GridSpec<D> grid = GridSpec<D>::cube(64);
    int horizon = 10;             // T
    int eikonal_samples = 1024;
    double near_surface_sigma = 0.05;
    bool reset_optimizer_each_step = true;
    std::uint64_t seed = 1;
    double divergence_factor = 10.0;

    void validate() const {
        if (dt < 0) throw std::invalid_argument("evolution: dt must be >= 0");
        if (lr <= 0) throw std::invalid_argument("evolution: lr must be positive");
        if (inner_steps < 1) throw std::invalid_argument("evolution: inner_steps must be >= 1");
        if (horizon < 1) throw std::invalid_argument("evolution: horizon must be >= 1");
        grid.validate();
    }
};

/// Reference values phi^{t+1} at the extracted vertices (Eq. target of the
/// forward-Euler level-set update).
template <int D>
struct TargetSet {
    std::vector<Vec<D>> points;
    std::vector<double> targets;
};

struct GradNormStats {
    double mean = 0, stddev = 0, min = 0, max = 0;
};

/// targets_i = Phi(x_i) - dt * (grad Phi(x_i) . V_i), for any evaluator
/// exposing value_and_gradient. This is the forward-Euler discretization of
/// d phi/dt = -grad phi . V.
template <int D, class F>
TargetSet<D> eulerian_targets_field(F&& value_and_gradient, const std::vector<Vec<D>>& points,
                                    const FlowField<D>& velocity, double dt,
                                    GradNormStats* stats = nullptr) {
    if (points.size() != velocity.size())
        throw std::invalid_argument("eulerian_targets: flow not aligned with points");
    TargetSet<D> ts;
    ts.points = points;
    ts.targets.resize(points.size());
    double sum = 0, sum2 = 0, mn = 1e300, mx = -1e300;
    for (std::size_t i = 0; i < points.size(); ++i) {
        Vec<D> g;
        const double value = value_and_gradient(points[i], g);
        ts.targets[i] = value - dt * dot(g, velocity[i]);
        if (stats) {
            const double n = norm(g);
            sum += n;
            sum2 += n * n;
            mn = std::min(mn, n);
            mx = std::max(mx, n);
        }
    }
    if (stats && !points.empty()) {
        const auto k = static_cast<double>(points.size());
        stats->mean = sum / k;
        stats->stddev = std::sqrt(std::max(sum2 / k - (sum / k) * (sum / k), 0.0));
        stats->min = mn;
        stats->max = mx;
    }
    return ts;
}

template <int D>
TargetSet<D> eulerian_targets(const MlpParams& params, const std::vector<Vec<D>>& points,
                              const FlowField<D>& velocity, double dt,
                              GradNormStats* stats = nullptr) {
    return eulerian_targets_field<D>(
        [&](const Vec<D>& x, Vec<D>& g) { return value_and_grad(params, x, g); }, points,
        velocity, dt, stats);
}

/// Gradient of J(theta) = mean (Phi(x_i) - target_i)^2
///                        + eikonal_weight * mean (|grad Phi| - 1)^2
/// where the eikonal term is sampled at the given points. Returns J's value
/// term. This is the objective the evolution minimizes each time step; its
/// first gradient step is what the iso-surface-extraction baseline takes.
template <int D>
double level_set_objective_gradient(const MlpParams& params, const TargetSet<D>& ts,
                                    double eikonal_weight,
                                    const std::vector<Vec<D>>& eikonal_points,
                                    std::vector<double>& grad) {
    std::fill(grad.begin(), grad.end(), 0.0);
    const auto k = static_cast<double>(ts.points.size());
    double j_value = 0;
    for (std::size_t i = 0; i < ts.points.size(); ++i) {
        const auto& x = ts.points[i];
        const double value = forward(params, x);
        const double resid = value - ts.targets[i];
        j_value += resid * resid / k;
        accumulate_param_grad(params, std::span<const double>(x.data(), D), 2.0 * resid / k, 0.0,
                              {}, grad);
    }
    if (eikonal_weight > 0 && !eikonal_points.empty()) {
        const auto m = static_cast<double>(eikonal_points.size());
        for (const auto& x : eikonal_points) {
            Vec<D> g;
            value_and_grad(params, x, g);
            const double gn = norm(g);
            const Vec<D> v = gn > 1e-12 ? g / gn : Vec<D>::zero();
            accumulate_param_grad(params, std::span<const double>(x.data(), D), 0.0,
                                  2.0 * eikonal_weight * (gn - 1.0) / m,
                                  std::span<const double>(v.data(), D), grad);
        }
    }
    return j_value;
}

/// J evaluated without touching gradients.
template <int D>
double level_set_objective(const MlpParams& params, const TargetSet<D>& ts) {
    double j = 0;
    for (std::size_t i = 0; i < ts.points.size(); ++i) {
        const double r = forward(params, ts.points[i]) - ts.targets[i];
        j += r * r;
    }
    return ts.points.empty() ? 0.0 : j / static_cast<double>(ts.points.size());
}

template <int D>
std::vector<Vec<D>> draw_eikonal_points(const TargetSet<D>& ts, const GridSpec<D>& grid, int count,
                                        double sigma, Rng& rng) {
    std::vector<Vec<D>> pts;
    pts.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        if (i % 2 == 0 || ts.points.empty()) {
            pts.push_back(rng.uniform_in_box<D>(grid.lo, grid.hi));
        } else {
            Vec<D> x = ts.points[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(ts.points.size()) - 1))];
            for (int k = 0; k < D; ++k) x[k] += rng.normal(0.0, sigma);
            pts.push_back(x);
        }
    }
    return pts;
}

struct FitTargetsResult {
    double entry_J = 0;
    double final_J = 0;
    int steps = 0;
};

/// Runs inner_steps Adam iterations on the level-set objective with eikonal
/// regularization. Divergence (J growing past divergence_factor x entry,
/// above a 1e-6 floor) aborts with diagnostics.
template <int D>
FitTargetsResult fit_targets(MlpParams& params, const TargetSet<D>& ts,
                             const EvolutionConfig<D>& cfg, Rng& rng, Adam* optimizer = nullptr) {
    if (ts.points.empty()) throw std::invalid_argument("fit_targets: empty target set");
    Adam local(params.parameter_count(), {.lr = cfg.lr, .weight_decay = cfg.weight_decay});
    Adam& opt = optimizer ? *optimizer : local;
    std::vector<double> grad(params.parameter_count());
    FitTargetsResult res;
    for (int step = 0; step < cfg.inner_steps; ++step) {
        const auto eik = draw_eikonal_points(ts, cfg.grid, cfg.eikonal_samples,
                                             cfg.near_surface_sigma, rng);
        const double j = level_set_objective_gradient(params, ts, cfg.eikonal_weight, eik, grad);
        if (step == 0) res.entry_J = j;
        // transient overshoot right after entry is normal for Adam when the
        // entry objective is already near zero; only genuine runaways trip
        const double ceiling = std::max(cfg.divergence_factor * res.entry_J, 1e-3);
        if (j > ceiling) {
            std::ostringstream msg;
            msg << "fit_targets: objective diverged at inner step " << step << " (J=" << j
                << ", entry=" << res.entry_J << ")";
            throw EvolutionDiverged(msg.str());
        }
        opt.step(params.theta(), grad);
        ++res.steps;
    }
    res.final_J = level_set_objective(params, ts);
    const double ceiling = std::max(cfg.divergence_factor * std::max(res.entry_J, 0.0), 1e-6);
    if (res.final_J > ceiling) {
        std::ostringstream msg;
        msg << "fit_targets: final objective " << res.final_J << " exceeds entry " << res.entry_J;
        throw EvolutionDiverged(msg.str());
    }
    return res;
}

template <int D>
Surface<D> extract_zero_set(const MlpParams& params, const GridSpec<D>& grid) {
    if constexpr (D == 3)
        return marching_cubes([&](const Vec3& p) { return forward(params, p); }, grid);
    else
        return marching_squares([&](const Vec2& p) { return forward(params, p); }, grid);
}

struct EvolveStepDiag {
    int t = 0;
    double entry_J = 0;
    double final_J = 0;
    int vertex_count = 0;
    int grid_resolution = 0;
    GradNormStats grad_norms;
};

struct EvolveResult {
    std::vector<EvolveStepDiag> steps;
    bool stopped_surface_vanished = false;
};

/// The full Eulerian loop: extract a Lagrangian surface, ask the flow
/// provider for V, form the Eq.-update targets, and fit theta to them.
/// flow(surface, t) -> FlowField. per_step runs after each fit with the
/// extracted surface (pre-update geometry) and diagnostics.
template <int D, class FlowProvider,
          class StepFn = std::function<void(const EvolveStepDiag&, const Surface<D>&, const MlpParams&)>>
EvolveResult evolve(MlpParams& params, FlowProvider&& flow, const EvolutionConfig<D>& cfg,
                    StepFn per_step = [](const EvolveStepDiag&, const Surface<D>&, const MlpParams&) {}) {
    cfg.validate();
    Rng rng(cfg.seed);
    EvolveResult result;
    Adam persistent(params.parameter_count(), {.lr = cfg.lr, .weight_decay = cfg.weight_decay});
    for (int t = 1; t <= cfg.horizon; ++t) {
        Rng step_rng = rng.fork(static_cast<std::uint64_t>(t));
        const GridSpec<D> grid = cfg.grid.jittered(step_rng);
        Surface<D> surface = extract_zero_set(params, grid);
        if (surface.empty()) {
            result.stopped_surface_vanished = true;
            break;
        }
        FlowField<D> v = flow(surface, t);
        check_flow(surface, v);
        EvolveStepDiag diag;
        diag.t = t;
        diag.vertex_count = surface.vertex_count();
        diag.grid_resolution = grid.resolution[0];
        TargetSet<D> ts = eulerian_targets(params, surface.vertices, v, cfg.dt, &diag.grad_norms);
        EvolutionConfig<D> step_cfg = cfg;
        step_cfg.grid = grid;
        FitTargetsResult fit = fit_targets(params, ts, step_cfg, step_rng,
                                           cfg.reset_optimizer_each_step ? nullptr : &persistent);
        diag.entry_J = fit.entry_J;
        diag.final_J = fit.final_J;
        result.steps.push_back(diag);
        per_step(diag, surface, params);
    }
    return result;
}

// --- baseline update rules ---------------------------------------------------

/// Differentiable-iso-surface-extraction baseline: one explicit step
///   theta <- theta - lr * sum_i (V_i . grad Phi(x_i)) dPhi/dtheta(x_i).
template <int D>
std::vector<double> meshsdf_gradient(const MlpParams& params, const std::vector<Vec<D>>& points,
                                     const FlowField<D>& velocity) {
    if (points.size() != velocity.size())
        throw std::invalid_argument("meshsdf: flow not aligned with points");
    std::vector<double> grad(params.parameter_count(), 0.0);
    for (std::size_t i = 0; i < points.size(); ++i) {
        Vec<D> g;
        value_and_grad(params, points[i], g);
        const double c = dot(velocity[i], g);
        if (c != 0.0)
            accumulate_param_grad(params, std::span<const double>(points[i].data(), D), c, 0.0, {},
                                  grad);
    }
    return grad;
}

template <int D>
void meshsdf_step(MlpParams& params, const std::vector<Vec<D>>& points,
                  const FlowField<D>& velocity, double lr) {
    const auto g = meshsdf_gradient(params, points, velocity);
    auto theta = params.theta();
    for (std::size_t i = 0; i < theta.size(); ++i) theta[i] -= lr * g[i];
}

/// Differentiable ray-marching baseline. Hits carry the intersection point
/// x_u and the (unit) viewing direction v_u; the update follows the
/// implicit-differentiation form
///   theta <- theta - lr * sum_u (V_u . v_u) / (grad Phi(x_u) . v_u) dPhi/dtheta(x_u).
/// Grazing samples with |grad Phi . v| < 1e-9 are skipped.
template <int D>
struct RaySample {
    Vec<D> point;
    Vec<D> dir;
};

template <int D>
std::vector<double> dvr_gradient(const MlpParams& params, const std::vector<RaySample<D>>& hits,
                                 const FlowField<D>& velocity) {
    if (hits.size() != velocity.size())
        throw std::invalid_argument("dvr: flow not aligned with hits");
    std::vector<double> grad(params.parameter_count(), 0.0);
    for (std::size_t i = 0; i < hits.size(); ++i) {
        Vec<D> g;
        value_and_grad(params, hits[i].point, g);
        const double denom = dot(g, hits[i].dir);
        if (std::abs(denom) < 1e-9) continue;
        const double c = dot(velocity[i], hits[i].dir) / denom;
        if (c != 0.0)
            accumulate_param_grad(params, std::span<const double>(hits[i].point.data(), D), c, 0.0,
                                  {}, grad);
    }
    return grad;
}

template <int D>
void dvr_step(MlpParams& params, const std::vector<RaySample<D>>& hits,
              const FlowField<D>& velocity, double lr) {
    const auto g = dvr_gradient(params, hits, velocity);
    auto theta = params.theta();
    for (std::size_t i = 0; i < theta.size(); ++i) theta[i] -= lr * g[i];
}

// --- user-defined editing -----------------------------------------------------

/// One handle group: vertex ids on the t = 0 mesh plus a schedule giving the
/// target position of a point as a function of its rest position and the
/// normalized time s in [0, 1].
template <int D>
struct EditHandle {
    std::vector<int> vertices;
    std::function<Vec<D>(const Vec<D>&, double)> position_at;
};

template <int D>
struct EditStepDiag {
    int t = 0;
    double entry_J = 0;
    double final_J = 0;
    double thin_shell_residual = 0;
};

template <int D>
struct EditResult {
    std::vector<EditStepDiag<D>> steps;
    std::vector<Vec<D>> advected_points;  // x^T for every vertex of mesh0
};

/// Editing loop: the t = 0 extraction is advected Lagrangially; each step
/// solves the thin-shell system for a dense flow honoring the handle
/// schedule, advances x^t = x^{t-1} + V (no dt, the constraints already
/// encode the step), and refits Phi with zero targets at the advected
/// points plus eikonal regularization.
template <int D, class StepFn = std::function<void(const EditStepDiag<D>&, const std::vector<Vec<D>>&,
                                                   const MlpParams&)>>
EditResult<D> evolve_edit(MlpParams& params, const Surface<D>& mesh0,
                          const std::vector<EditHandle<D>>& handles,
                          const std::vector<int>& frozen, double k_stretch, double k_bend,
                          const EvolutionConfig<D>& cfg,
                          StepFn per_step = [](const EditStepDiag<D>&, const std::vector<Vec<D>>&,
                                               const MlpParams&) {}) {
    cfg.validate();
    Rng rng(cfg.seed);
    EditResult<D> result;
    result.advected_points = mesh0.vertices;
    std::vector<Vec<D>> rest = mesh0.vertices;
    Surface<D> advected = mesh0;  // connectivity reused; positions move
    for (int t = 1; t <= cfg.horizon; ++t) {
        Rng step_rng = rng.fork(static_cast<std::uint64_t>(t));
        const double s = static_cast<double>(t) / cfg.horizon;
        std::map<int, Vec<D>> constraints;
        for (const auto& h : handles)
            for (int vid : h.vertices)
                constraints[vid] = h.position_at(rest[static_cast<std::size_t>(vid)], s) -
                                   result.advected_points[static_cast<std::size_t>(vid)];
        std::set<int> frozen_set(frozen.begin(), frozen.end());
        advected.vertices = result.advected_points;
        auto shell = solve_thin_shell(advected, constraints, frozen_set, k_stretch, k_bend);
        for (std::size_t i = 0; i < result.advected_points.size(); ++i)
            result.advected_points[i] += shell.velocity[i];

        TargetSet<D> ts;
        ts.points = result.advected_points;
        ts.targets.assign(ts.points.size(), 0.0);
        FitTargetsResult fit = fit_targets(params, ts, cfg, step_rng);
        EditStepDiag<D> diag;
        diag.t = t;
        diag.entry_J = fit.entry_J;
        diag.final_J = fit.final_J;
        diag.thin_shell_residual = shell.rel_residual;
        result.steps.push_back(diag);
        per_step(diag, result.advected_points, params);
    }
    return result;
}

}  // namespace iflow
