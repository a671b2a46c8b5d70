#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <stdexcept>
#include <utility>
#include <vector>

#include "implicitflow/rng.hpp"
#include "implicitflow/vec.hpp"

namespace iflow {

/// Lagrangian surface: triangles in 3D, line segments in 2D. Element arity
/// equals the dimension, so one template covers both extraction outputs.
template <int D>
struct Surface {
    std::vector<Vec<D>> vertices;
    std::vector<std::array<int, D>> elements;

    int vertex_count() const { return static_cast<int>(vertices.size()); }
    int element_count() const { return static_cast<int>(elements.size()); }
    bool empty() const { return elements.empty(); }
};

using TriangleMesh = Surface<3>;
using PolylineSet = Surface<2>;

// Unnormalized element normal. 3D: cross product (twice the area vector),
// consistent with counter-clockwise winding seen from outside. 2D: edge
// direction rotated so the inside of the contour lies to the segment's left.
inline Vec3 element_normal_raw(const TriangleMesh& m, const std::array<int, 3>& f) {
    const Vec3& a = m.vertices[static_cast<std::size_t>(f[0])];
    const Vec3& b = m.vertices[static_cast<std::size_t>(f[1])];
    const Vec3& c = m.vertices[static_cast<std::size_t>(f[2])];
    return cross(b - a, c - a);
}

inline Vec2 element_normal_raw(const PolylineSet& m, const std::array<int, 2>& e) {
    const Vec2 d = m.vertices[static_cast<std::size_t>(e[1])] - m.vertices[static_cast<std::size_t>(e[0])];
    return {d[1], -d[0]};
}

template <int D>
inline double element_measure(const Surface<D>& m, int e) {
    if constexpr (D == 3)
        return 0.5 * norm(element_normal_raw(m, m.elements[static_cast<std::size_t>(e)]));
    else
        return norm(element_normal_raw(m, m.elements[static_cast<std::size_t>(e)]));
}

template <int D>
inline double total_measure(const Surface<D>& m) {
    double s = 0;
    for (int e = 0; e < m.element_count(); ++e) s += element_measure(m, e);
    return s;
}

/// Measure-weighted average of incident element normals, normalized.
/// Throws on vertices not referenced by any element.
template <int D>
inline std::vector<Vec<D>> vertex_normals(const Surface<D>& m) {
    std::vector<Vec<D>> n(m.vertices.size(), Vec<D>::zero());
    std::vector<char> touched(m.vertices.size(), 0);
    for (const auto& el : m.elements) {
        const Vec<D> fn = element_normal_raw(m, el);
        for (int v : el) {
            n[static_cast<std::size_t>(v)] += fn;
            touched[static_cast<std::size_t>(v)] = 1;
        }
    }
    for (std::size_t i = 0; i < n.size(); ++i) {
        if (!touched[i]) throw std::runtime_error("vertex_normals: isolated vertex");
        const double len = norm(n[i]);
        if (len > 0) n[i] /= len;
    }
    return n;
}

/// Sorted unique one-ring neighbors per vertex, from element edges.
template <int D>
inline std::vector<std::vector<int>> vertex_adjacency(const Surface<D>& m) {
    std::vector<std::vector<int>> adj(m.vertices.size());
    auto link = [&](int a, int b) {
        adj[static_cast<std::size_t>(a)].push_back(b);
        adj[static_cast<std::size_t>(b)].push_back(a);
    };
    for (const auto& el : m.elements) {
        if constexpr (D == 3) {
            link(el[0], el[1]);
            link(el[1], el[2]);
            link(el[2], el[0]);
        } else {
            link(el[0], el[1]);
        }
    }
    for (auto& a : adj) {
        std::sort(a.begin(), a.end());
        a.erase(std::unique(a.begin(), a.end()), a.end());
    }
    return adj;
}

template <int D>
inline std::pair<Vec<D>, Vec<D>> bounding_box(const Surface<D>& m) {
    Vec<D> lo = Vec<D>::filled(1e300), hi = Vec<D>::filled(-1e300);
    for (const auto& v : m.vertices)
        for (int i = 0; i < D; ++i) {
            lo[i] = std::min(lo[i], v[i]);
            hi[i] = std::max(hi[i], v[i]);
        }
    return {lo, hi};
}

/// Uniform sample on the surface: element by measure, then uniform within.
template <int D>
inline Vec<D> surface_sample(const Surface<D>& m, const std::vector<double>& cumulative, Rng& rng) {
    const double u = rng.uniform() * cumulative.back();
    const auto it = std::lower_bound(cumulative.begin(), cumulative.end(), u);
    const auto e = static_cast<std::size_t>(std::distance(cumulative.begin(), it));
    const auto& el = m.elements[std::min(e, m.elements.size() - 1)];
    if constexpr (D == 3) {
        double r1 = std::sqrt(rng.uniform()), r2 = rng.uniform();
        const Vec3& a = m.vertices[static_cast<std::size_t>(el[0])];
        const Vec3& b = m.vertices[static_cast<std::size_t>(el[1])];
        const Vec3& c = m.vertices[static_cast<std::size_t>(el[2])];
        return a * (1 - r1) + b * (r1 * (1 - r2)) + c * (r1 * r2);
    } else {
        double t = rng.uniform();
        const Vec2& a = m.vertices[static_cast<std::size_t>(el[0])];
        const Vec2& b = m.vertices[static_cast<std::size_t>(el[1])];
        return a * (1 - t) + b * t;
    }
}

template <int D>
inline std::vector<double> measure_cumulative(const Surface<D>& m) {
    std::vector<double> c(m.elements.size());
    double s = 0;
    for (int e = 0; e < m.element_count(); ++e) {
        s += element_measure(m, e);
        c[static_cast<std::size_t>(e)] = s;
    }
    return c;
}

template <int D>
inline std::vector<Vec<D>> sample_points(const Surface<D>& m, int count, Rng& rng) {
    if (m.empty()) throw std::runtime_error("sample_points: empty surface");
    auto cum = measure_cumulative(m);
    std::vector<Vec<D>> pts;
    pts.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) pts.push_back(surface_sample(m, cum, rng));
    return pts;
}

// --- point/element distances ---------------------------------------------

inline double point_segment_distance2(const Vec2& p, const Vec2& a, const Vec2& b) {
    const Vec2 ab = b - a;
    const double t = std::clamp(dot(p - a, ab) / std::max(norm2(ab), 1e-300), 0.0, 1.0);
    return norm2(p - (a + ab * t));
}

inline double point_triangle_distance2(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
    // Ericson, Real-Time Collision Detection, closest point on triangle.
    const Vec3 ab = b - a, ac = c - a, ap = p - a;
    const double d1 = dot(ab, ap), d2 = dot(ac, ap);
    if (d1 <= 0 && d2 <= 0) return norm2(p - a);
    const Vec3 bp = p - b;
    const double d3 = dot(ab, bp), d4 = dot(ac, bp);
    if (d3 >= 0 && d4 <= d3) return norm2(p - b);
    const double vc = d1 * d4 - d3 * d2;
    if (vc <= 0 && d1 >= 0 && d3 <= 0) {
        const double t = d1 / (d1 - d3);
        return norm2(p - (a + ab * t));
    }
    const Vec3 cp = p - c;
    const double d5 = dot(ab, cp), d6 = dot(ac, cp);
    if (d6 >= 0 && d5 <= d6) return norm2(p - c);
    const double vb = d5 * d2 - d1 * d6;
    if (vb <= 0 && d2 >= 0 && d6 <= 0) {
        const double t = d2 / (d2 - d6);
        return norm2(p - (a + ac * t));
    }
    const double va = d3 * d6 - d5 * d4;
    if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) {
        const double t = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return norm2(p - (b + (c - b) * t));
    }
    const double denom = 1.0 / (va + vb + vc);
    const double v = vb * denom, w = vc * denom;
    return norm2(p - (a + ab * v + ac * w));
}

template <int D>
inline double point_surface_distance(const Vec<D>& p, const Surface<D>& m) {
    double best = 1e300;
    for (const auto& el : m.elements) {
        double d2;
        if constexpr (D == 3)
            d2 = point_triangle_distance2(p, m.vertices[static_cast<std::size_t>(el[0])],
                                          m.vertices[static_cast<std::size_t>(el[1])],
                                          m.vertices[static_cast<std::size_t>(el[2])]);
        else
            d2 = point_segment_distance2(p, m.vertices[static_cast<std::size_t>(el[0])],
                                         m.vertices[static_cast<std::size_t>(el[1])]);
        best = std::min(best, d2);
    }
    return std::sqrt(best);
}

/// Symmetric Hausdorff distance, vertices of one surface against the
/// elements of the other.
template <int D>
inline double hausdorff(const Surface<D>& a, const Surface<D>& b) {
    auto directed = [](const Surface<D>& from, const Surface<D>& to) {
        double worst = 0;
        for (const auto& v : from.vertices) worst = std::max(worst, point_surface_distance(v, to));
        return worst;
    };
    return std::max(directed(a, b), directed(b, a));
}

// --- topology --------------------------------------------------------------

struct TopologyReport {
    int components = 0;
    int boundary_edges = 0;           // edges with face count != 2 (largest component)
    int euler_characteristic = 0;     // V - E + F of the largest component
    int genus = -1;                   // (2 - chi) / 2 when closed, else -1
    int largest_component_faces = 0;
};

inline TopologyReport analyze_topology(const TriangleMesh& m) {
    TopologyReport rep;
    if (m.elements.empty()) return rep;
    // union-find over faces via shared edges
    std::map<std::pair<int, int>, std::vector<int>> edge_faces;
    for (int f = 0; f < m.element_count(); ++f) {
        const auto& el = m.elements[static_cast<std::size_t>(f)];
        for (int k = 0; k < 3; ++k) {
            int a = el[static_cast<std::size_t>(k)], b = el[static_cast<std::size_t>((k + 1) % 3)];
            if (a > b) std::swap(a, b);
            edge_faces[{a, b}].push_back(f);
        }
    }
    std::vector<int> parent(static_cast<std::size_t>(m.element_count()));
    for (std::size_t i = 0; i < parent.size(); ++i) parent[i] = static_cast<int>(i);
    std::function<int(int)> find = [&](int x) {
        while (parent[static_cast<std::size_t>(x)] != x) {
            parent[static_cast<std::size_t>(x)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
            x = parent[static_cast<std::size_t>(x)];
        }
        return x;
    };
    for (const auto& [e, fs] : edge_faces)
        for (std::size_t i = 1; i < fs.size(); ++i) {
            int ra = find(fs[0]), rb = find(fs[i]);
            if (ra != rb) parent[static_cast<std::size_t>(rb)] = ra;
        }
    std::map<int, int> comp_faces;
    for (int f = 0; f < m.element_count(); ++f) comp_faces[find(f)]++;
    rep.components = static_cast<int>(comp_faces.size());
    int largest = -1;
    for (const auto& [root, cnt] : comp_faces)
        if (largest < 0 || cnt > comp_faces[largest]) largest = root;
    rep.largest_component_faces = comp_faces[largest];

    // V, E, F and boundary edges of the largest component
    std::vector<char> in_comp(m.vertices.size(), 0);
    int F = 0;
    for (int f = 0; f < m.element_count(); ++f)
        if (find(f) == largest) {
            ++F;
            for (int v : m.elements[static_cast<std::size_t>(f)]) in_comp[static_cast<std::size_t>(v)] = 1;
        }
    int V = 0;
    for (char c : in_comp) V += c;
    int E = 0, boundary = 0;
    for (const auto& [e, fs] : edge_faces) {
        bool inc = false;
        int cnt = 0;
        for (int f : fs)
            if (find(f) == largest) {
                inc = true;
                ++cnt;
            }
        if (inc) {
            ++E;
            if (cnt != 2) ++boundary;
        }
    }
    rep.boundary_edges = boundary;
    rep.euler_characteristic = V - E + F;
    if (boundary == 0) rep.genus = (2 - rep.euler_characteristic) / 2;
    return rep;
}

}  // namespace iflow
