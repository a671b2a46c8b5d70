#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "implicitflow/analytic.hpp"
#include "implicitflow/fit.hpp"
#include "implicitflow/marching.hpp"

using namespace iflow;

TEST_CASE("sphere sdf matches |x-c|-r exactly") {
    auto f = Field3::sphere(Vec3{0.1, -0.2, 0.3}, 0.7);
    Rng rng(4);
    for (int i = 0; i < 200; ++i) {
        Vec3 x = rng.uniform_in_box<3>(Vec3::filled(-1), Vec3::filled(1));
        REQUIRE(eval_sdf(f, x) == norm(x - Vec3{0.1, -0.2, 0.3}) - 0.7);
    }
    REQUIRE(eval_sdf(Field3::sphere(Vec3::zero(), 1.0), Vec3::zero()) == -1.0);
    REQUIRE(eval_sdf(Field3::sphere(Vec3::zero(), 1.0), Vec3{2, 0, 0}) == 1.0);
}

TEST_CASE("primitive gradients are unit length away from the medial axis") {
    Rng rng(5);
    auto check = [&](const Field3& f) {
        int tested = 0;
        while (tested < 100) {
            Vec3 x = rng.uniform_in_box<3>(Vec3::filled(-1), Vec3::filled(1));
            // keep clear of kinks: probe the FD gradient magnitude stability
            const double h = 1e-5;
            bool smooth = true;
            Vec3 g;
            for (int k = 0; k < 3; ++k) {
                Vec3 xp = x, xm = x;
                xp[k] += h;
                xm[k] -= h;
                g[k] = (f.value(xp) - f.value(xm)) / (2 * h);
                Vec3 xp2 = x, xm2 = x;
                xp2[k] += 2 * h;
                xm2[k] -= 2 * h;
                const double g2 = (f.value(xp2) - f.value(xm2)) / (4 * h);
                if (std::abs(g2 - g[k]) > 1e-6) smooth = false;  // near kink/medial axis
            }
            if (!smooth) continue;
            ++tested;
            REQUIRE(std::abs(norm(g) - 1.0) < 1e-6);
        }
    };
    check(Field3::sphere(Vec3{0.2, 0, 0}, 0.5));
    check(Field3::box(Vec3::zero(), Vec3{0.4, 0.3, 0.5}));
    check(Field3::torus(Vec3::zero(), 0.6, 0.2));
}

TEST_CASE("cube mesh sdf: outside point at +0.5") {
    // cube [-1,1]^3 as 12 triangles
    TriangleMesh cube;
    const double s = 1.0;
    for (int i = 0; i < 8; ++i)
        cube.vertices.push_back({(i & 1) ? s : -s, (i & 2) ? s : -s, (i & 4) ? s : -s});
    auto quad = [&](int a, int b, int c, int d) {
        cube.elements.push_back({a, b, c});
        cube.elements.push_back({a, c, d});
    };
    quad(0, 2, 3, 1);  // z = -1
    quad(4, 5, 7, 6);  // z = +1
    quad(0, 1, 5, 4);  // y = -1
    quad(2, 6, 7, 3);  // y = +1
    quad(0, 4, 6, 2);  // x = -1
    quad(1, 3, 7, 5);  // x = +1
    auto f = Field3::from_mesh(cube);
    REQUIRE(eval_sdf(f, Vec3{0, 0, 1.5}) == Catch::Approx(0.5).epsilon(1e-12));
    REQUIRE(eval_sdf(f, Vec3{0, 0, 0}) == Catch::Approx(-1.0).epsilon(1e-12));
    REQUIRE(eval_sdf(f, Vec3{2, 2, 2}) == Catch::Approx(std::sqrt(3.0)).epsilon(1e-12));

    // brute-force oracle over the 12 triangles
    Rng rng(9);
    for (int i = 0; i < 50; ++i) {
        Vec3 x = rng.uniform_in_box<3>(Vec3::filled(-2), Vec3::filled(2));
        double best = 1e300;
        for (const auto& t : cube.elements)
            best = std::min(best, point_triangle_distance2(
                                      x, cube.vertices[static_cast<std::size_t>(t[0])],
                                      cube.vertices[static_cast<std::size_t>(t[1])],
                                      cube.vertices[static_cast<std::size_t>(t[2])]));
        REQUIRE(std::abs(eval_sdf(f, x)) == Catch::Approx(std::sqrt(best)).epsilon(1e-12));
        const bool inside = std::abs(x[0]) < 1 && std::abs(x[1]) < 1 && std::abs(x[2]) < 1;
        REQUIRE((eval_sdf(f, x) < 0) == inside);
    }
}

TEST_CASE("non-watertight mesh is rejected") {
    TriangleMesh open_mesh;
    open_mesh.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
    open_mesh.elements = {{0, 1, 2}};
    REQUIRE_THROWS_AS(Field3::from_mesh(open_mesh), std::runtime_error);
}

TEST_CASE("surface_point lands on the zero set") {
    Rng rng(11);
    auto blob = Field3::csg_union(Field3::sphere(Vec3{-0.25, 0, 0}, 0.4),
                                  Field3::sphere(Vec3{0.3, 0.1, 0}, 0.35));
    for (int i = 0; i < 200; ++i) REQUIRE(std::abs(blob.value(blob.surface_point(rng))) < 1e-9);
    auto tor = Field3::torus(Vec3::zero(), 0.6, 0.2);
    for (int i = 0; i < 200; ++i) REQUIRE(std::abs(tor.value(tor.surface_point(rng))) < 1e-12);
    auto cyl = Field3::cylinder(Vec3::zero(), 0.4, 0.5);
    for (int i = 0; i < 200; ++i) REQUIRE(std::abs(cyl.value(cyl.surface_point(rng))) < 1e-12);
    auto sq = Field2::box(Vec2{0, 0}, Vec2{0.5, 0.5});
    for (int i = 0; i < 200; ++i) REQUIRE(std::abs(sq.value(sq.surface_point(rng))) < 1e-12);
}

TEST_CASE("fit_sdf on a 2D circle: zero set within 5e-3 of the analytic circle") {
    auto circle = Field2::sphere(Vec2{0, 0}, 0.5);
    SdfFitConfig cfg;
    cfg.hidden_width = 32;
    cfg.depth = 3;
    cfg.iterations = 2000;
    cfg.batch = 256;
    cfg.seed = 21;
    SdfFitResult res = fit_sdf(circle, cfg);
    INFO("mean_abs_error=" << res.mean_abs_error << " grad_err=" << res.surface_grad_error);
    REQUIRE(res.converged);

    auto grid = GridSpec<2>::cube(512, -1.0, 1.0);
    PolylineSet poly = marching_squares([&](const Vec2& q) { return forward(res.params, q); }, grid);
    REQUIRE(!poly.empty());
    double worst = 0;
    for (const auto& v : poly.vertices) worst = std::max(worst, std::abs(norm(v) - 0.5));
    REQUIRE(worst < 5e-3);
}

TEST_CASE("fit_sdf on a 3D plane: surface gradient within 5 degrees of the normal") {
    const Vec3 n = normalized(Vec3{0.3, 0.5, 0.8});
    auto plane = Field3::plane(n, 0.1);
    SdfFitConfig cfg;
    cfg.hidden_width = 32;
    cfg.depth = 3;
    cfg.iterations = 5000;
    cfg.batch = 256;
    cfg.lr = 1e-3;
    cfg.seed = 22;
    SdfFitResult res = fit_sdf(plane, cfg);
    REQUIRE(res.converged);
    Rng rng(23);
    for (int i = 0; i < 50; ++i) {
        Vec3 x = plane.surface_point(rng);
        // fit quality is judged inside the sampled domain, away from box corners
        while (std::abs(x[0]) > 0.85 || std::abs(x[1]) > 0.85 || std::abs(x[2]) > 0.85)
            x = plane.surface_point(rng);
        const Vec3 g = grad_input(res.params, x);
        const double cos_angle = dot(normalized(g), n);
        REQUIRE(cos_angle > std::cos(5.0 * M_PI / 180.0));
        REQUIRE(norm(g) > 0.95);
        REQUIRE(norm(g) < 1.05);
    }
}

TEST_CASE("fit_sdf is deterministic for a fixed seed") {
    auto circle = Field2::sphere(Vec2{0.1, 0}, 0.4);
    SdfFitConfig cfg;
    cfg.hidden_width = 16;
    cfg.depth = 3;
    cfg.iterations = 50;
    cfg.batch = 64;
    cfg.seed = 33;
    SdfFitResult a = fit_sdf(circle, cfg);
    SdfFitResult b = fit_sdf(circle, cfg);
    REQUIRE(std::equal(a.params.theta().begin(), a.params.theta().end(), b.params.theta().begin()));
    REQUIRE(a.mean_abs_error == b.mean_abs_error);
}

TEST_CASE("fit_sdf loss decreases over smoothed windows") {
    auto circle = Field2::sphere(Vec2{0, 0}, 0.5);
    SdfFitConfig cfg;
    cfg.hidden_width = 24;
    cfg.depth = 3;
    cfg.iterations = 800;
    cfg.batch = 128;
    cfg.seed = 44;
    SdfFitResult res = fit_sdf(circle, cfg);
    const int window = 100;
    std::vector<double> smoothed;
    for (std::size_t start = 0; start + window <= res.loss_log.size(); start += window) {
        double s = 0;
        for (int i = 0; i < window; ++i) s += res.loss_log[start + static_cast<std::size_t>(i)];
        smoothed.push_back(s / window);
    }
    for (std::size_t i = 1; i < smoothed.size(); ++i)
        REQUIRE(smoothed[i] < smoothed[i - 1] * 1.05 + 1e-12);
}

TEST_CASE("fitted square sdf has noisy laplacian near flat edges") {
    // The analytic square has zero curvature on its edges; the MLP's
    // continuous laplacian there is visibly non-zero.
    auto square = Field2::box(Vec2{0, 0}, Vec2{0.5, 0.5});
    SdfFitConfig cfg;
    cfg.hidden_width = 32;
    cfg.depth = 3;
    cfg.iterations = 1500;
    cfg.batch = 256;
    cfg.seed = 55;
    SdfFitResult res = fit_sdf(square, cfg);
    Rng rng(56);
    std::vector<double> laps;
    for (int i = 0; i < 200; ++i) {
        // sample along the right edge, away from corners
        const Vec2 x{0.5, rng.uniform(-0.3, 0.3)};
        laps.push_back(laplacian(res.params, x));
    }
    double mean = 0;
    for (double l : laps) mean += l;
    mean /= static_cast<double>(laps.size());
    double var = 0;
    for (double l : laps) var += (l - mean) * (l - mean);
    const double stddev = std::sqrt(var / static_cast<double>(laps.size()));
    // Fig. 4 reports values spanning tens for a zero-curvature surface.
    REQUIRE(stddev > 1.0);
}
