#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>

#include "implicitflow/vec.hpp"

namespace iflow {

template <int D>
struct Ray {
    Vec<D> origin;
    Vec<D> dir;  // unit length (|dir| = 1 within 1e-9)

    static Ray through(const Vec<D>& origin, const Vec<D>& target) {
        return {origin, normalized(target - origin)};
    }
};

template <int D>
struct TraceHit {
    Vec<D> point;
    double t = 0.0;
    int steps = 0;
};

/// Sphere tracing along a ray: steps by the field value (scaled by
/// step_scale when the field is not Lipschitz-1) until |Phi| < hit_eps.
/// An overshoot into the interior is refined by bisection against the last
/// outside point. A miss is a value, not an error.
template <int D, class F>
std::optional<TraceHit<D>> sphere_trace(F&& field, const Ray<D>& ray, int max_steps,
                                        double hit_eps, double max_dist,
                                        double step_scale = 1.0) {
    if (std::abs(norm(ray.dir) - 1.0) > 1e-9)
        throw std::invalid_argument("sphere_trace: ray direction must be unit length");
    double t = 0.0;
    double t_prev = 0.0;
    double v_prev = 0.0;
    bool have_outside = false;
    for (int step = 0; step < max_steps; ++step) {
        const Vec<D> p = ray.origin + ray.dir * t;
        const double v = field(p);
        if (std::isnan(v)) return std::nullopt;
        if (std::abs(v) < hit_eps) return TraceHit<D>{p, t, step + 1};
        if (v < 0.0) {
            if (!have_outside) return std::nullopt;  // started inside
            // bracket [t_prev, t] with sign change; bisect to |Phi| < hit_eps
            double lo = t_prev, hi = t;
            double vlo = v_prev;
            for (int i = 0; i < 128; ++i) {
                const double mid = 0.5 * (lo + hi);
                const double vm = field(ray.origin + ray.dir * mid);
                if (std::isnan(vm)) return std::nullopt;
                if (std::abs(vm) < hit_eps)
                    return TraceHit<D>{ray.origin + ray.dir * mid, mid, step + i + 2};
                if ((vm < 0.0) == (vlo < 0.0)) {
                    lo = mid;
                    vlo = vm;
                } else {
                    hi = mid;
                }
            }
            return std::nullopt;
        }
        have_outside = true;
        t_prev = t;
        v_prev = v;
        t += step_scale * v;
        if (t > max_dist) return std::nullopt;
    }
    return std::nullopt;
}

}  // namespace iflow
