#pragma once

#include <functional>
#include <stdexcept>
#include <vector>

#include "implicitflow/mesh.hpp"
#include "implicitflow/mesh_ops.hpp"
#include "implicitflow/vec.hpp"

namespace iflow {

/// Per-vertex velocities aligned with a specific extracted surface,
/// in domain length per unit time. Flow constructors return -dE/dx;
/// they never hand back raw gradients.
template <int D>
using FlowField = std::vector<Vec<D>>;

template <int D>
inline void check_flow(const Surface<D>& m, const FlowField<D>& v) {
    if (static_cast<int>(v.size()) != m.vertex_count())
        throw std::invalid_argument("flow: length does not match mesh");
    for (const auto& x : v)
        if (!all_finite(x)) throw std::invalid_argument("flow: non-finite velocity");
}

/// V_i = beta * n_i.
template <int D>
inline FlowField<D> constant_normal_flow(const Surface<D>& m, double beta) {
    auto n = vertex_normals(m);
    FlowField<D> v(n.size());
    for (std::size_t i = 0; i < n.size(); ++i) v[i] = n[i] * beta;
    return v;
}

/// Projects a generator field onto the tangent plane: V_i . n_i == 0 exactly.
template <int D, class G>
inline FlowField<D> tangential_flow(const Surface<D>& m, G&& generator) {
    auto n = vertex_normals(m);
    FlowField<D> v(n.size());
    for (std::size_t i = 0; i < n.size(); ++i) {
        const Vec<D> g = generator(m.vertices[i]);
        v[i] = g - n[i] * dot(g, n[i]);
    }
    return v;
}

/// Default tangential generator: rotation about an axis (3D) or about a
/// center point (2D).
inline auto rotation_generator(const Vec3& axis, const Vec3& center = Vec3::zero()) {
    const Vec3 a = normalized(axis);
    return [a, center](const Vec3& x) { return cross(a, x - center); };
}

inline auto rotation_generator_2d(const Vec2& center = Vec2::zero()) {
    return [center](const Vec2& x) { return perp(x - center); };
}

/// V = lambda * (L x): the discrete stand-in for mean-curvature flow
/// -2 lambda kappa n, using the uniform graph Laplacian.
template <int D>
inline FlowField<D> mean_curvature_flow(const Surface<D>& m, double lambda) {
    const SparseMatrix L = uniform_laplacian(m);
    auto lx = apply_to_positions(L, m.vertices);
    for (auto& v : lx) v *= lambda;
    return lx;
}

/// Identical computation to mean_curvature_flow: minimizing the Dirichlet
/// energy induces the same flow. Kept as its own entry point so experiment
/// configs can name it.
template <int D>
inline FlowField<D> smoothing_flow(const Surface<D>& m, double lambda) {
    return mean_curvature_flow(m, lambda);
}

}  // namespace iflow
