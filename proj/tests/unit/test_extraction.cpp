#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "implicitflow/marching.hpp"
#include "implicitflow/mesh.hpp"
#include "implicitflow/sphere_trace.hpp"

using namespace iflow;

namespace {
double sphere_field(const Vec3& p) { return norm(p) - 1.0; }
}  // namespace

TEST_CASE("marching cubes on the unit sphere: vertex radii near 1") {
    auto grid = GridSpec<3>::cube(64, -1.5, 1.5);
    TriangleMesh m = marching_cubes(sphere_field, grid);
    REQUIRE(m.vertex_count() > 1000);
    const double cell_diag = grid.max_cell_size() * std::sqrt(3.0);
    for (const auto& v : m.vertices) REQUIRE(std::abs(norm(v) - 1.0) < 2 * cell_diag);
}

TEST_CASE("marching cubes is watertight and genus-correct") {
    auto grid = GridSpec<3>::cube(48, -1.5, 1.5);
    TriangleMesh sphere = marching_cubes(sphere_field, grid);
    TopologyReport rs = analyze_topology(sphere);
    REQUIRE(rs.components == 1);
    REQUIRE(rs.boundary_edges == 0);
    REQUIRE(rs.euler_characteristic == 2);
    REQUIRE(rs.genus == 0);

    auto torus = [](const Vec3& p) {
        const double qx = std::sqrt(p[0] * p[0] + p[1] * p[1]) - 0.7;
        return std::sqrt(qx * qx + p[2] * p[2]) - 0.25;
    };
    TriangleMesh t = marching_cubes(torus, grid);
    TopologyReport rt = analyze_topology(t);
    REQUIRE(rt.components == 1);
    REQUIRE(rt.boundary_edges == 0);
    REQUIRE(rt.euler_characteristic == 0);
    REQUIRE(rt.genus == 1);
}

TEST_CASE("marching cubes winding points along the gradient") {
    auto grid = GridSpec<3>::cube(32, -1.5, 1.5);
    TriangleMesh m = marching_cubes(sphere_field, grid);
    int outward = 0;
    for (const auto& f : m.elements) {
        const Vec3 n = element_normal_raw(m, f);
        const Vec3 c = (m.vertices[static_cast<std::size_t>(f[0])] +
                        m.vertices[static_cast<std::size_t>(f[1])] +
                        m.vertices[static_cast<std::size_t>(f[2])]) /
                       3.0;
        if (dot(n, c) > 0) ++outward;
    }
    REQUIRE(outward == m.element_count());
}

TEST_CASE("constant positive field yields an empty mesh") {
    auto grid = GridSpec<3>::cube(8);
    TriangleMesh m = marching_cubes([](const Vec3&) { return 1.0; }, grid);
    REQUIRE(m.empty());
    REQUIRE(m.vertex_count() == 0);
}

TEST_CASE("NaN field value raises") {
    auto grid = GridSpec<3>::cube(4);
    REQUIRE_THROWS_AS(
        marching_cubes([](const Vec3&) { return std::numeric_limits<double>::quiet_NaN(); }, grid),
        std::runtime_error);
}

TEST_CASE("plane z=0 extracts at z~0 with +z normals") {
    auto grid = GridSpec<3>::cube(16, -1.0, 1.0);
    TriangleMesh m = marching_cubes([](const Vec3& p) { return p[2]; }, grid);
    REQUIRE(!m.empty());
    for (const auto& v : m.vertices) REQUIRE(std::abs(v[2]) < 1e-12);
    auto normals = vertex_normals(m);
    for (const auto& n : normals) {
        REQUIRE(n[2] == Catch::Approx(1.0).margin(1e-12));
    }
}

TEST_CASE("interpolation bound: |phi(v)| below max adjacent-node |phi|") {
    auto grid = GridSpec<3>::cube(24, -1.4, 1.4);
    TriangleMesh m = marching_cubes(sphere_field, grid);
    // node spacing bounds any crossing's field magnitude for a 1-Lipschitz field
    const double bound = grid.max_cell_size() * std::sqrt(3.0);
    for (const auto& v : m.vertices) REQUIRE(std::abs(sphere_field(v)) <= bound);
}

TEST_CASE("doubling resolution reduces mean |phi| at vertices") {
    auto mean_abs = [](int res) {
        auto grid = GridSpec<3>::cube(res, -1.5, 1.5);
        TriangleMesh m = marching_cubes(sphere_field, grid);
        double s = 0;
        for (const auto& v : m.vertices) s += std::abs(sphere_field(v));
        return s / m.vertex_count();
    };
    REQUIRE(mean_abs(32) < mean_abs(16));
}

TEST_CASE("extraction is deterministic") {
    auto grid = GridSpec<3>::cube(20, -1.2, 1.2);
    TriangleMesh a = marching_cubes(sphere_field, grid);
    TriangleMesh b = marching_cubes(sphere_field, grid);
    REQUIRE(a.vertices.size() == b.vertices.size());
    for (std::size_t i = 0; i < a.vertices.size(); ++i)
        for (int k = 0; k < 3; ++k) REQUIRE(a.vertices[i][k] == b.vertices[i][k]);
    REQUIRE(a.elements == b.elements);
}

TEST_CASE("marching squares on a circle") {
    auto grid = GridSpec<2>::cube(256, -1.0, 1.0);
    PolylineSet p = marching_squares([](const Vec2& q) { return norm(q) - 0.5; }, grid);
    REQUIRE(!p.empty());
    for (const auto& v : p.vertices) REQUIRE(std::abs(norm(v) - 0.5) < 1e-2);
    REQUIRE(component_count(p) == 1);
    // outward normals
    auto normals = vertex_normals(p);
    for (std::size_t i = 0; i < normals.size(); ++i)
        REQUIRE(dot(normals[i], normalized(p.vertices[i])) > 0.9);
}

TEST_CASE("marching squares empties and line case") {
    auto grid = GridSpec<2>::cube(32);
    PolylineSet empty = marching_squares([](const Vec2&) { return -1.0; }, grid);
    REQUIRE(empty.empty());

    PolylineSet line = marching_squares([](const Vec2& q) { return q[0]; }, grid);
    REQUIRE(!line.empty());
    for (const auto& v : line.vertices) REQUIRE(std::abs(v[0]) < 1e-12);
    REQUIRE(component_count(line) == 1);
}

TEST_CASE("sphere trace hits an analytic sphere head on") {
    Ray<3> ray{{0, 0, 3}, {0, 0, -1}};
    auto hit = sphere_trace(sphere_field, ray, 200, 1e-7, 10.0);
    REQUIRE(hit.has_value());
    REQUIRE(std::abs(hit->point[2] - 1.0) < 1e-6);
    REQUIRE(std::abs(hit->point[0]) < 1e-12);
    REQUIRE(std::abs(sphere_field(hit->point)) < 1e-7);
}

TEST_CASE("sphere trace misses when pointing away") {
    Ray<3> ray{{0, 0, 3}, {0, 0, 1}};
    auto hit = sphere_trace(sphere_field, ray, 200, 1e-7, 10.0);
    REQUIRE(!hit.has_value());
}

TEST_CASE("grazing rays stay finite") {
    // tangent to the unit sphere at distance exactly 1 from the axis
    for (double off : {1.0, 1.0 - 1e-9, 1.0 + 1e-9}) {
        Ray<3> ray{{off, 0, 3}, {0, 0, -1}};
        auto hit = sphere_trace(sphere_field, ray, 10000, 1e-7, 10.0);
        if (hit.has_value()) {
            REQUIRE(norm(hit->point - Vec3{1, 0, 0}) < 2e-3);
            REQUIRE(all_finite(hit->point));
        }
    }
}

TEST_CASE("sphere trace validates direction normalization") {
    Ray<3> ray{{0, 0, 3}, {0, 0, -2}};
    REQUIRE_THROWS_AS(sphere_trace(sphere_field, ray, 10, 1e-6, 10.0), std::invalid_argument);
}
