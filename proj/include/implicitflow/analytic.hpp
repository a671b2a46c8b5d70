#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <utility>
#include <vector>

#include "implicitflow/mesh.hpp"
#include "implicitflow/rng.hpp"
#include "implicitflow/vec.hpp"

namespace iflow {

namespace detail {

// Signed distance to a watertight triangle mesh: unsigned point-triangle
// distance with a bounding-box culled flat list, signed by ray parity
// (three fixed skew directions, majority vote).
class MeshSdf {
public:
    explicit MeshSdf(TriangleMesh mesh) : mesh_(std::move(mesh)) {
        if (mesh_.empty()) throw std::runtime_error("mesh sdf: empty mesh");
        std::map<std::pair<int, int>, int> edge_count;
        for (const auto& f : mesh_.elements)
            for (int k = 0; k < 3; ++k) {
                int a = f[static_cast<std::size_t>(k)], b = f[static_cast<std::size_t>((k + 1) % 3)];
                if (a > b) std::swap(a, b);
                edge_count[{a, b}]++;
            }
        for (const auto& [e, c] : edge_count)
            if (c != 2) throw std::runtime_error("mesh sdf: mesh is not watertight");
        boxes_.reserve(mesh_.elements.size());
        for (const auto& f : mesh_.elements) {
            Vec3 lo = Vec3::filled(1e300), hi = Vec3::filled(-1e300);
            for (int v : f)
                for (int i = 0; i < 3; ++i) {
                    lo[i] = std::min(lo[i], mesh_.vertices[static_cast<std::size_t>(v)][i]);
                    hi[i] = std::max(hi[i], mesh_.vertices[static_cast<std::size_t>(v)][i]);
                }
            boxes_.push_back({lo, hi});
        }
        cum_ = measure_cumulative(mesh_);
    }

    const TriangleMesh& mesh() const { return mesh_; }
    const std::vector<double>& cumulative() const { return cum_; }

    double value(const Vec3& p) const {
        double best = 1e300;
        for (std::size_t i = 0; i < mesh_.elements.size(); ++i) {
            const auto& bb = boxes_[i];
            double dbox = 0;
            for (int k = 0; k < 3; ++k) {
                const double d = std::max({bb.first[k] - p[k], 0.0, p[k] - bb.second[k]});
                dbox += d * d;
            }
            if (dbox >= best) continue;
            const auto& f = mesh_.elements[i];
            best = std::min(best, point_triangle_distance2(
                                      p, mesh_.vertices[static_cast<std::size_t>(f[0])],
                                      mesh_.vertices[static_cast<std::size_t>(f[1])],
                                      mesh_.vertices[static_cast<std::size_t>(f[2])]));
        }
        return inside(p) ? -std::sqrt(best) : std::sqrt(best);
    }

private:
    bool inside(const Vec3& p) const {
        static const Vec3 dirs[3] = {normalized(Vec3{0.5377, -1.3077, 0.8339}),
                                     normalized(Vec3{-0.7873, 0.3188, 1.1093}),
                                     normalized(Vec3{1.0347, 0.7269, -0.3034})};
        int votes = 0;
        for (const auto& d : dirs)
            if (parity(p, d)) ++votes;
        return votes >= 2;
    }

    bool parity(const Vec3& o, const Vec3& d) const {
        int crossings = 0;
        for (const auto& f : mesh_.elements) {
            const Vec3& a = mesh_.vertices[static_cast<std::size_t>(f[0])];
            const Vec3& b = mesh_.vertices[static_cast<std::size_t>(f[1])];
            const Vec3& c = mesh_.vertices[static_cast<std::size_t>(f[2])];
            const Vec3 e1 = b - a, e2 = c - a;
            const Vec3 pv = cross(d, e2);
            const double det = dot(e1, pv);
            if (std::abs(det) < 1e-14) continue;
            const double inv = 1.0 / det;
            const Vec3 tv = o - a;
            const double u = dot(tv, pv) * inv;
            if (u < 0 || u > 1) continue;
            const Vec3 qv = cross(tv, e1);
            const double v = dot(d, qv) * inv;
            if (v < 0 || u + v > 1) continue;
            const double t = dot(e2, qv) * inv;
            if (t > 1e-12) ++crossings;
        }
        return (crossings & 1) != 0;
    }

    TriangleMesh mesh_;
    std::vector<std::pair<Vec3, Vec3>> boxes_;
    std::vector<double> cum_;
};

inline double smoothstep01(double t) {
    t = std::clamp(t, 0.0, 1.0);
    return t * t * (3 - 2 * t);
}

}  // namespace detail

/// Closed-form level-set functions used as fitting targets and oracles.
/// Primitives are exact signed distances; CSG combinations via min/max are
/// the usual lower-bound approximation.
template <int D>
class Field {
public:
    enum class Kind {
        sphere,       // circle in 2D
        plane,        // line in 2D: dot(n, x) - offset
        box,          // square in 2D
        torus,        // 3D, axis z
        cylinder,     // 3D capped cylinder, axis z
        bumpy_sphere, // sphere with a radial bump field (optionally one hemisphere)
        csg_union,
        csg_intersect,
        csg_difference,
        mesh          // 3D watertight mesh
    };

    static Field sphere(Vec<D> center, double radius) {
        if (radius <= 0) throw std::invalid_argument("field: radius must be positive");
        Field f(Kind::sphere);
        f.center_ = center;
        f.radius_ = radius;
        return f;
    }

    static Field plane(Vec<D> normal, double offset) {
        if (norm(normal) == 0) throw std::invalid_argument("field: plane normal must be nonzero");
        Field f(Kind::plane);
        f.normal_ = normalized(normal);
        f.offset_ = offset;
        return f;
    }

    static Field box(Vec<D> center, Vec<D> half_extent) {
        for (int i = 0; i < D; ++i)
            if (half_extent[i] <= 0) throw std::invalid_argument("field: half extents must be positive");
        Field f(Kind::box);
        f.center_ = center;
        f.half_ = half_extent;
        return f;
    }

    static Field torus(Vec3 center, double major, double minor) requires(D == 3) {
        if (major <= 0 || minor <= 0 || minor >= major)
            throw std::invalid_argument("field: torus radii invalid");
        Field f(Kind::torus);
        f.center_ = center;
        f.radius_ = major;
        f.radius2_ = minor;
        return f;
    }

    static Field cylinder(Vec3 center, double radius, double half_height) requires(D == 3) {
        if (radius <= 0 || half_height <= 0) throw std::invalid_argument("field: cylinder dims invalid");
        Field f(Kind::cylinder);
        f.center_ = center;
        f.radius_ = radius;
        f.half_height_ = half_height;
        return f;
    }

    static Field bumpy_sphere(Vec<D> center, double radius, double amplitude, double frequency,
                              bool upper_hemisphere_only) {
        if (radius <= 0) throw std::invalid_argument("field: radius must be positive");
        Field f(Kind::bumpy_sphere);
        f.center_ = center;
        f.radius_ = radius;
        f.amp_ = amplitude;
        f.freq_ = frequency;
        f.hemi_ = upper_hemisphere_only;
        return f;
    }

    static Field csg_union(Field a, Field b) { return csg(Kind::csg_union, std::move(a), std::move(b)); }
    static Field csg_intersect(Field a, Field b) { return csg(Kind::csg_intersect, std::move(a), std::move(b)); }
    static Field csg_difference(Field a, Field b) { return csg(Kind::csg_difference, std::move(a), std::move(b)); }

    static Field from_mesh(TriangleMesh mesh) requires(D == 3) {
        Field f(Kind::mesh);
        f.mesh_ = std::make_shared<detail::MeshSdf>(std::move(mesh));
        return f;
    }

    Kind kind() const { return kind_; }

    double value(const Vec<D>& x) const {
        switch (kind_) {
            case Kind::sphere:
                return norm(x - center_) - radius_;
            case Kind::plane:
                return dot(normal_, x) - offset_;
            case Kind::box: {
                Vec<D> q;
                for (int i = 0; i < D; ++i) q[i] = std::abs(x[i] - center_[i]) - half_[i];
                Vec<D> qp;
                double qmax = -1e300;
                for (int i = 0; i < D; ++i) {
                    qp[i] = std::max(q[i], 0.0);
                    qmax = std::max(qmax, q[i]);
                }
                return norm(qp) + std::min(qmax, 0.0);
            }
            case Kind::torus: {
                if constexpr (D == 3) {
                    const Vec3 r = x - center_;
                    const double qx = std::sqrt(r[0] * r[0] + r[1] * r[1]) - radius_;
                    return std::sqrt(qx * qx + r[2] * r[2]) - radius2_;
                }
                break;
            }
            case Kind::cylinder: {
                if constexpr (D == 3) {
                    const Vec3 r = x - center_;
                    const double dr = std::sqrt(r[0] * r[0] + r[1] * r[1]) - radius_;
                    const double dz = std::abs(r[2]) - half_height_;
                    const double ox = std::max(dr, 0.0), oz = std::max(dz, 0.0);
                    return std::min(std::max(dr, dz), 0.0) + std::sqrt(ox * ox + oz * oz);
                }
                break;
            }
            case Kind::bumpy_sphere: {
                const Vec<D> r = x - center_;
                const double len = norm(r);
                if (len < 1e-12) return -radius_;
                const Vec<D> dir = r / len;
                return len - (radius_ + amp_ * hemi_mask(dir) * bump(dir));
            }
            case Kind::csg_union:
                return std::min(children_[0].value(x), children_[1].value(x));
            case Kind::csg_intersect:
                return std::max(children_[0].value(x), children_[1].value(x));
            case Kind::csg_difference:
                return std::max(children_[0].value(x), -children_[1].value(x));
            case Kind::mesh:
                if constexpr (D == 3) return mesh_->value(x);
                break;
        }
        throw std::logic_error("field: invalid kind for dimension");
    }

    double operator()(const Vec<D>& x) const { return value(x); }

    /// Analytic gradient where the primitive admits one, central differences
    /// (h = 1e-6) otherwise.
    Vec<D> gradient(const Vec<D>& x) const {
        switch (kind_) {
            case Kind::sphere: {
                const Vec<D> r = x - center_;
                const double len = norm(r);
                if (len < 1e-12) {
                    Vec<D> e{};
                    e[0] = 1;
                    return e;
                }
                return r / len;
            }
            case Kind::plane:
                return normal_;
            case Kind::torus: {
                if constexpr (D == 3) {
                    const Vec3 r = x - center_;
                    const double rho = std::sqrt(r[0] * r[0] + r[1] * r[1]);
                    if (rho < 1e-12) return Vec3{0, 0, r[2] >= 0 ? 1.0 : -1.0};
                    const double qx = rho - radius_;
                    const double qn = std::sqrt(qx * qx + r[2] * r[2]);
                    if (qn < 1e-12) return Vec3{r[0] / rho, r[1] / rho, 0};
                    return Vec3{(qx / qn) * (r[0] / rho), (qx / qn) * (r[1] / rho), r[2] / qn};
                }
                break;
            }
            default:
                break;
        }
        Vec<D> g;
        const double h = 1e-6;
        for (int i = 0; i < D; ++i) {
            Vec<D> xp = x, xm = x;
            xp[i] += h;
            xm[i] -= h;
            g[i] = (value(xp) - value(xm)) / (2 * h);
        }
        return g;
    }

    /// A point exactly (primitives) or nearly (CSG, tolerance 1e-9) on the
    /// zero level set.
    Vec<D> surface_point(Rng& rng) const {
        switch (kind_) {
            case Kind::sphere:
                return center_ + rng.unit_vector<D>() * radius_;
            case Kind::plane: {
                Vec<D> x = rng.uniform_in_box<D>(Vec<D>::filled(-1), Vec<D>::filled(1));
                return x - normal_ * (dot(normal_, x) - offset_);
            }
            case Kind::box: {
                // pick a face weighted by its measure
                std::vector<double> areas;
                double total = 0;
                for (int axis = 0; axis < D; ++axis) {
                    double a = 2;  // two faces
                    for (int i = 0; i < D; ++i)
                        if (i != axis) a *= 2 * half_[i];
                    areas.push_back(a);
                    total += a;
                }
                double u = rng.uniform() * total;
                int axis = 0;
                while (axis + 1 < D && u > areas[static_cast<std::size_t>(axis)]) {
                    u -= areas[static_cast<std::size_t>(axis)];
                    ++axis;
                }
                Vec<D> p;
                for (int i = 0; i < D; ++i)
                    p[i] = (i == axis) ? (rng.uniform() < 0.5 ? -half_[i] : half_[i])
                                       : rng.uniform(-half_[i], half_[i]);
                return center_ + p;
            }
            case Kind::torus: {
                if constexpr (D == 3) {
                    // area weight proportional to R + r cos(psi)
                    double psi;
                    do {
                        psi = rng.uniform(0, 2 * M_PI);
                    } while (rng.uniform() > (radius_ + radius2_ * std::cos(psi)) / (radius_ + radius2_));
                    const double phi = rng.uniform(0, 2 * M_PI);
                    const double rho = radius_ + radius2_ * std::cos(psi);
                    return center_ + Vec3{rho * std::cos(phi), rho * std::sin(phi), radius2_ * std::sin(psi)};
                }
                break;
            }
            case Kind::cylinder: {
                if constexpr (D == 3) {
                    const double side = 2 * M_PI * radius_ * 2 * half_height_;
                    const double caps = 2 * M_PI * radius_ * radius_;
                    if (rng.uniform() * (side + caps) < side) {
                        const double phi = rng.uniform(0, 2 * M_PI);
                        return center_ + Vec3{radius_ * std::cos(phi), radius_ * std::sin(phi),
                                              rng.uniform(-half_height_, half_height_)};
                    }
                    const double phi = rng.uniform(0, 2 * M_PI);
                    const double r = radius_ * std::sqrt(rng.uniform());
                    const double z = rng.uniform() < 0.5 ? -half_height_ : half_height_;
                    return center_ + Vec3{r * std::cos(phi), r * std::sin(phi), z};
                }
                break;
            }
            case Kind::bumpy_sphere: {
                const Vec<D> dir = rng.unit_vector<D>();
                return center_ + dir * (radius_ + amp_ * hemi_mask(dir) * bump(dir));
            }
            case Kind::csg_union:
            case Kind::csg_intersect:
            case Kind::csg_difference: {
                for (int attempt = 0; attempt < 4000; ++attempt) {
                    const std::size_t c = rng.uniform() < 0.5 ? 0 : 1;
                    const Vec<D> p = children_[c].surface_point(rng);
                    if (std::abs(value(p)) < 1e-9) return p;
                }
                throw std::runtime_error("field: CSG surface sampling failed");
            }
            case Kind::mesh: {
                if constexpr (D == 3) return surface_sample(mesh_->mesh(), mesh_->cumulative(), rng);
                break;
            }
        }
        throw std::logic_error("field: invalid kind for dimension");
    }

private:
    explicit Field(Kind k) : kind_(k) {}

    static Field csg(Kind k, Field a, Field b) {
        Field f(k);
        f.children_.push_back(std::move(a));
        f.children_.push_back(std::move(b));
        return f;
    }

    double bump(const Vec<D>& dir) const {
        double b = 1;
        for (int i = 0; i < D; ++i) b *= std::sin(freq_ * dir[i] + 0.37 * (i + 1));
        return b;
    }

    double hemi_mask(const Vec<D>& dir) const {
        if (!hemi_) return 1.0;
        return detail::smoothstep01(dir[D - 1] / 0.2);
    }

    Kind kind_;
    Vec<D> center_ = Vec<D>::zero();
    Vec<D> normal_ = Vec<D>::zero();
    Vec<D> half_ = Vec<D>::zero();
    double radius_ = 0, radius2_ = 0, offset_ = 0, half_height_ = 0;
    double amp_ = 0, freq_ = 0;
    bool hemi_ = false;
    std::vector<Field> children_;
    std::shared_ptr<const detail::MeshSdf> mesh_;
};

using Field2 = Field<2>;
using Field3 = Field<3>;

/// eval_sdf: exact signed distance for primitives; for meshes, unsigned
/// distance signed by ray parity (watertight input enforced).
template <int D>
inline double eval_sdf(const Field<D>& field, const Vec<D>& x) {
    if (!all_finite(x)) throw std::invalid_argument("eval_sdf: non-finite point");
    return field.value(x);
}

}  // namespace iflow
