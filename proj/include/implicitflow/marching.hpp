#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "implicitflow/grid.hpp"
#include "implicitflow/mesh.hpp"

namespace iflow {
namespace mc_detail {

// Cube corners: corner i sits at ((i&1), (i>>1&1), (i>>2&1)).
// Edges grouped by axis; faces listed with corner cycles that are
// counter-clockwise when seen from outside the cube, which fixes the
// orientation of the generated triangles (normals point toward positive
// field values).
inline constexpr std::array<std::array<int, 2>, 12> kEdges = {{
    {0, 1}, {2, 3}, {4, 5}, {6, 7},  // x
    {0, 2}, {1, 3}, {4, 6}, {5, 7},  // y
    {0, 4}, {1, 5}, {2, 6}, {3, 7},  // z
}};

inline constexpr std::array<std::array<int, 4>, 6> kFaceCycles = {{
    {0, 4, 6, 2},  // -x
    {1, 3, 7, 5},  // +x
    {0, 1, 5, 4},  // -y
    {2, 6, 7, 3},  // +y
    {0, 2, 3, 1},  // -z
    {4, 5, 7, 6},  // +z
}};

struct CaseTable {
    // For each of the 256 sign configurations, triangles as edge-id triples.
    std::array<std::vector<std::array<int, 3>>, 256> tri;
};

inline int edge_of(int a, int b) {
    for (int e = 0; e < 12; ++e) {
        if ((kEdges[static_cast<std::size_t>(e)][0] == a && kEdges[static_cast<std::size_t>(e)][1] == b) ||
            (kEdges[static_cast<std::size_t>(e)][0] == b && kEdges[static_cast<std::size_t>(e)][1] == a))
            return e;
    }
    throw std::logic_error("mc: not a cube edge");
}

// Builds the 256-case table by walking iso-contour chords across faces.
// On each face, every maximal cyclic run of inside corners contributes one
// chord from its entry crossing to its exit crossing; faces with four
// crossings therefore always separate the two inside corners, and both
// cells sharing an ambiguous face make the same choice, keeping the mesh
// watertight.
inline CaseTable build_case_table() {
    CaseTable table;
    for (int mask = 0; mask < 256; ++mask) {
        auto inside = [&](int corner) { return (mask >> corner) & 1; };
        std::array<int, 12> next;
        next.fill(-1);
        std::array<char, 12> crossed{};
        for (int e = 0; e < 12; ++e)
            crossed[static_cast<std::size_t>(e)] =
                static_cast<char>(inside(kEdges[static_cast<std::size_t>(e)][0]) !=
                                  inside(kEdges[static_cast<std::size_t>(e)][1]));
        for (const auto& cyc : kFaceCycles) {
            for (int k = 0; k < 4; ++k) {
                const int prev = cyc[static_cast<std::size_t>((k + 3) & 3)];
                const int cur = cyc[static_cast<std::size_t>(k)];
                if (!inside(cur) || inside(prev)) continue;  // not a run start
                int m = k;  // advance to the run's last inside corner
                while (inside(cyc[static_cast<std::size_t>((m + 1) & 3)]) &&
                       ((m + 1) & 3) != k)
                    m = (m + 1) & 3;
                const int entry = edge_of(prev, cur);
                const int exit = edge_of(cyc[static_cast<std::size_t>(m)],
                                         cyc[static_cast<std::size_t>((m + 1) & 3)]);
                if (next[static_cast<std::size_t>(entry)] != -1)
                    throw std::logic_error("mc: chord conflict");
                next[static_cast<std::size_t>(entry)] = exit;
            }
        }
        // every crossed edge must start exactly one chord
        for (int e = 0; e < 12; ++e)
            if (crossed[static_cast<std::size_t>(e)] != (next[static_cast<std::size_t>(e)] >= 0))
                throw std::logic_error("mc: inconsistent chord graph");
        std::array<char, 12> used{};
        for (int e0 = 0; e0 < 12; ++e0) {
            if (!crossed[static_cast<std::size_t>(e0)] || used[static_cast<std::size_t>(e0)]) continue;
            std::vector<int> loop;
            int e = e0;
            do {
                loop.push_back(e);
                used[static_cast<std::size_t>(e)] = 1;
                e = next[static_cast<std::size_t>(e)];
            } while (e != e0 && loop.size() <= 12);
            if (e != e0) throw std::logic_error("mc: open loop");
            for (std::size_t i = 1; i + 1 < loop.size(); ++i)
                table.tri[static_cast<std::size_t>(mask)].push_back(
                    {loop[0], loop[i], loop[i + 1]});
        }
    }
    return table;
}

inline const CaseTable& case_table() {
    static const CaseTable t = build_case_table();
    return t;
}

// 2D cell: corners ((i&1), (i>>1&1)), counter-clockwise cycle in the plane.
// Chords are reversed relative to 3D so that the interior ends up on the
// left of each segment (outward normal = (dy, -dx)).
inline constexpr std::array<int, 4> kCycle2d = {0, 1, 3, 2};

struct CaseTable2d {
    std::array<std::vector<std::array<int, 2>>, 16> seg;  // pairs of side ids (0..3)
};

inline CaseTable2d build_case_table_2d() {
    CaseTable2d table;
    for (int mask = 0; mask < 16; ++mask) {
        auto inside = [&](int corner) { return (mask >> corner) & 1; };
        for (int k = 0; k < 4; ++k) {
            const int prev = kCycle2d[static_cast<std::size_t>((k + 3) & 3)];
            const int cur = kCycle2d[static_cast<std::size_t>(k)];
            if (!inside(cur) || inside(prev)) continue;
            int m = k;
            while (inside(kCycle2d[static_cast<std::size_t>((m + 1) & 3)]) && ((m + 1) & 3) != k)
                m = (m + 1) & 3;
            const int entry_side = (k + 3) & 3;
            const int exit_side = m;
            table.seg[static_cast<std::size_t>(mask)].push_back({exit_side, entry_side});
        }
    }
    return table;
}

inline const CaseTable2d& case_table_2d() {
    static const CaseTable2d t = build_case_table_2d();
    return t;
}

// side s of the 2d cycle connects kCycle2d[s] and kCycle2d[s+1]
inline std::array<int, 2> side_corners_2d(int s) {
    return {kCycle2d[static_cast<std::size_t>(s)], kCycle2d[static_cast<std::size_t>((s + 1) & 3)]};
}

template <int D>
void weld_and_clean(Surface<D>& m) {
    // Weld exactly coincident vertices (crossings clamped to grid nodes),
    // drop elements that lost rank, then compact unreferenced vertices.
    std::unordered_map<std::string, int> seen;
    std::vector<int> remap(m.vertices.size());
    std::vector<Vec<D>> verts;
    verts.reserve(m.vertices.size());
    for (std::size_t i = 0; i < m.vertices.size(); ++i) {
        std::string key(reinterpret_cast<const char*>(m.vertices[i].data()), D * sizeof(double));
        auto [it, fresh] = seen.emplace(std::move(key), static_cast<int>(verts.size()));
        if (fresh) verts.push_back(m.vertices[i]);
        remap[i] = it->second;
    }
    std::vector<std::array<int, D>> elems;
    elems.reserve(m.elements.size());
    for (auto el : m.elements) {
        for (auto& v : el) v = remap[static_cast<std::size_t>(v)];
        bool degenerate = false;
        for (int a = 0; a < D && !degenerate; ++a)
            for (int b = a + 1; b < D; ++b)
                if (el[static_cast<std::size_t>(a)] == el[static_cast<std::size_t>(b)]) degenerate = true;
        if (degenerate) continue;
        elems.push_back(el);
    }
    m.vertices = std::move(verts);
    m.elements = std::move(elems);
    // drop measure-degenerate elements (slivers), then compact
    std::vector<std::array<int, D>> kept;
    kept.reserve(m.elements.size());
    for (const auto& el : m.elements) {
        double measure;
        if constexpr (D == 3) {
            const Vec3& a = m.vertices[static_cast<std::size_t>(el[0])];
            const Vec3& b = m.vertices[static_cast<std::size_t>(el[1])];
            const Vec3& c = m.vertices[static_cast<std::size_t>(el[2])];
            measure = 0.5 * norm(cross(b - a, c - a));
        } else {
            measure = norm(m.vertices[static_cast<std::size_t>(el[1])] -
                           m.vertices[static_cast<std::size_t>(el[0])]);
        }
        if (measure < 1e-12) continue;
        kept.push_back(el);
    }
    m.elements = std::move(kept);
    std::vector<int> used(m.vertices.size(), -1);
    std::vector<Vec<D>> compact;
    for (auto& el : m.elements)
        for (auto& v : el) {
            auto vu = static_cast<std::size_t>(v);
            if (used[vu] < 0) {
                used[vu] = static_cast<int>(compact.size());
                compact.push_back(m.vertices[vu]);
            }
            v = used[vu];
        }
    m.vertices = std::move(compact);
}

}  // namespace mc_detail

/// Marching cubes over the zero iso-contour. Vertices lie on grid edges via
/// linear interpolation; winding is consistent with normals along +grad.
/// An empty zero set yields an empty mesh; NaN field values are an error.
template <class F>
TriangleMesh marching_cubes(F&& field, const GridSpec<3>& grid) {
    grid.validate();
    const int nx = grid.resolution[0], ny = grid.resolution[1], nz = grid.resolution[2];
    const auto node_count = static_cast<std::size_t>(nx + 1) * (ny + 1) * (nz + 1);
    std::vector<double> values(node_count);
    std::vector<Vec3> nodes(node_count);
    auto idx = [&](int ix, int iy, int iz) {
        return (static_cast<std::size_t>(iz) * (ny + 1) + iy) * (nx + 1) + ix;
    };
    for (int iz = 0; iz <= nz; ++iz)
        for (int iy = 0; iy <= ny; ++iy)
            for (int ix = 0; ix <= nx; ++ix) {
                const Vec3 p = grid.node({ix, iy, iz});
                const double v = field(p);
                if (std::isnan(v)) throw std::runtime_error("marching_cubes: NaN field value");
                nodes[idx(ix, iy, iz)] = p;
                values[idx(ix, iy, iz)] = v;
            }

    TriangleMesh mesh;
    std::unordered_map<std::uint64_t, int> edge_vertex;
    const auto& table = mc_detail::case_table();
    std::array<std::size_t, 8> corner_nodes;
    for (int iz = 0; iz < nz; ++iz)
        for (int iy = 0; iy < ny; ++iy)
            for (int ix = 0; ix < nx; ++ix) {
                int mask = 0;
                for (int c = 0; c < 8; ++c) {
                    corner_nodes[static_cast<std::size_t>(c)] =
                        idx(ix + (c & 1), iy + ((c >> 1) & 1), iz + ((c >> 2) & 1));
                    if (values[corner_nodes[static_cast<std::size_t>(c)]] < 0.0) mask |= 1 << c;
                }
                const auto& tris = table.tri[static_cast<std::size_t>(mask)];
                if (tris.empty()) continue;
                auto edge_point = [&](int e) {
                    const auto a = corner_nodes[static_cast<std::size_t>(mc_detail::kEdges[static_cast<std::size_t>(e)][0])];
                    const auto b = corner_nodes[static_cast<std::size_t>(mc_detail::kEdges[static_cast<std::size_t>(e)][1])];
                    const std::uint64_t key = (static_cast<std::uint64_t>(std::min(a, b)) << 32) |
                                              static_cast<std::uint64_t>(std::max(a, b));
                    auto it = edge_vertex.find(key);
                    if (it != edge_vertex.end()) return it->second;
                    const double va = values[a], vb = values[b];
                    double t = va / (va - vb);
                    if (!(t >= 0.0)) t = 0.0;
                    if (t > 1.0) t = 1.0;
                    const Vec3 p = nodes[a] + (nodes[b] - nodes[a]) * t;
                    const int id = mesh.vertex_count();
                    mesh.vertices.push_back(p);
                    edge_vertex.emplace(key, id);
                    return id;
                };
                for (const auto& t : tris)
                    mesh.elements.push_back({edge_point(t[0]), edge_point(t[1]), edge_point(t[2])});
            }
    mc_detail::weld_and_clean(mesh);
    return mesh;
}

/// 2D analogue of marching_cubes; returns segments whose left side is the
/// interior (outward normal (dy, -dx)).
template <class F>
PolylineSet marching_squares(F&& field, const GridSpec<2>& grid) {
    grid.validate();
    const int nx = grid.resolution[0], ny = grid.resolution[1];
    const auto node_count = static_cast<std::size_t>(nx + 1) * (ny + 1);
    std::vector<double> values(node_count);
    std::vector<Vec2> nodes(node_count);
    auto idx = [&](int ix, int iy) { return static_cast<std::size_t>(iy) * (nx + 1) + ix; };
    for (int iy = 0; iy <= ny; ++iy)
        for (int ix = 0; ix <= nx; ++ix) {
            const Vec2 p = grid.node({ix, iy});
            const double v = field(p);
            if (std::isnan(v)) throw std::runtime_error("marching_squares: NaN field value");
            nodes[idx(ix, iy)] = p;
            values[idx(ix, iy)] = v;
        }

    PolylineSet poly;
    std::unordered_map<std::uint64_t, int> edge_vertex;
    const auto& table = mc_detail::case_table_2d();
    std::array<std::size_t, 4> corner_nodes;
    for (int iy = 0; iy < ny; ++iy)
        for (int ix = 0; ix < nx; ++ix) {
            int mask = 0;
            for (int c = 0; c < 4; ++c) {
                corner_nodes[static_cast<std::size_t>(c)] = idx(ix + (c & 1), iy + ((c >> 1) & 1));
                if (values[corner_nodes[static_cast<std::size_t>(c)]] < 0.0) mask |= 1 << c;
            }
            const auto& segs = table.seg[static_cast<std::size_t>(mask)];
            if (segs.empty()) continue;
            auto side_point = [&](int s) {
                const auto sc = mc_detail::side_corners_2d(s);
                const auto a = corner_nodes[static_cast<std::size_t>(sc[0])];
                const auto b = corner_nodes[static_cast<std::size_t>(sc[1])];
                const std::uint64_t key = (static_cast<std::uint64_t>(std::min(a, b)) << 32) |
                                          static_cast<std::uint64_t>(std::max(a, b));
                auto it = edge_vertex.find(key);
                if (it != edge_vertex.end()) return it->second;
                const double va = values[a], vb = values[b];
                double t = va / (va - vb);
                if (!(t >= 0.0)) t = 0.0;
                if (t > 1.0) t = 1.0;
                const Vec2 p = nodes[a] + (nodes[b] - nodes[a]) * t;
                const int id = poly.vertex_count();
                poly.vertices.push_back(p);
                edge_vertex.emplace(key, id);
                return id;
            };
            for (const auto& s : segs) poly.elements.push_back({side_point(s[0]), side_point(s[1])});
        }
    mc_detail::weld_and_clean(poly);
    return poly;
}

/// Number of connected components of the element graph.
template <int D>
inline int component_count(const Surface<D>& m) {
    if (m.vertices.empty()) return 0;
    std::vector<int> parent(m.vertices.size());
    for (std::size_t i = 0; i < parent.size(); ++i) parent[i] = static_cast<int>(i);
    std::function<int(int)> find = [&](int x) {
        while (parent[static_cast<std::size_t>(x)] != x) {
            parent[static_cast<std::size_t>(x)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
            x = parent[static_cast<std::size_t>(x)];
        }
        return x;
    };
    for (const auto& el : m.elements)
        for (int k = 1; k < D; ++k) {
            int ra = find(el[0]), rb = find(el[static_cast<std::size_t>(k)]);
            if (ra != rb) parent[static_cast<std::size_t>(rb)] = ra;
        }
    int count = 0;
    for (std::size_t i = 0; i < parent.size(); ++i)
        if (find(static_cast<int>(i)) == static_cast<int>(i)) ++count;
    return count;
}

}  // namespace iflow
