#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>
#include <vector>

#include "implicitflow/mesh.hpp"
#include "implicitflow/sparse.hpp"
#include "implicitflow/vec.hpp"

namespace iflow {

/// Uniform graph Laplacian: L[i][j] = 1/deg(i) for neighbors, L[i][i] = -1.
/// Rows sum to zero; L x points from each vertex toward its neighbor mean.
template <int D>
inline SparseMatrix uniform_laplacian(const Surface<D>& m) {
    const auto adj = vertex_adjacency(m);
    std::vector<Triplet> t;
    for (std::size_t i = 0; i < adj.size(); ++i) {
        if (adj[i].empty()) throw std::runtime_error("uniform_laplacian: isolated vertex");
        const double w = 1.0 / static_cast<double>(adj[i].size());
        t.push_back({static_cast<int>(i), static_cast<int>(i), -1.0});
        for (int j : adj[i]) t.push_back({static_cast<int>(i), j, w});
    }
    return SparseMatrix::from_triplets(m.vertex_count(), m.vertex_count(), std::move(t));
}

/// Cotangent Laplacian, row-normalized so magnitudes are comparable to the
/// uniform operator (L[i][i] = -1). Offered behind a flag for comparison;
/// marching-cubes slivers can make it ill-behaved.
inline SparseMatrix cotangent_laplacian(const TriangleMesh& m) {
    std::map<std::pair<int, int>, double> w;
    auto add = [&](int a, int b, double v) {
        if (a > b) std::swap(a, b);
        w[{a, b}] += v;
    };
    for (const auto& f : m.elements) {
        for (int k = 0; k < 3; ++k) {
            const int i = f[static_cast<std::size_t>(k)];
            const int j = f[static_cast<std::size_t>((k + 1) % 3)];
            const int o = f[static_cast<std::size_t>((k + 2) % 3)];
            const Vec3 u = m.vertices[static_cast<std::size_t>(i)] - m.vertices[static_cast<std::size_t>(o)];
            const Vec3 v = m.vertices[static_cast<std::size_t>(j)] - m.vertices[static_cast<std::size_t>(o)];
            const double cr = norm(cross(u, v));
            const double cot = cr > 1e-14 ? dot(u, v) / cr : 0.0;
            add(i, j, 0.5 * cot);
        }
    }
    std::vector<double> row_total(m.vertices.size(), 0.0);
    for (const auto& [e, v] : w) {
        row_total[static_cast<std::size_t>(e.first)] += v;
        row_total[static_cast<std::size_t>(e.second)] += v;
    }
    std::vector<Triplet> t;
    for (int i = 0; i < m.vertex_count(); ++i) {
        if (row_total[static_cast<std::size_t>(i)] == 0.0)
            throw std::runtime_error("cotangent_laplacian: isolated or degenerate vertex");
        t.push_back({i, i, -1.0});
    }
    for (const auto& [e, v] : w) {
        t.push_back({e.first, e.second, v / row_total[static_cast<std::size_t>(e.first)]});
        t.push_back({e.second, e.first, v / row_total[static_cast<std::size_t>(e.second)]});
    }
    return SparseMatrix::from_triplets(m.vertex_count(), m.vertex_count(), std::move(t));
}

/// Applies a k x k operator to vertex positions componentwise.
template <int D>
inline std::vector<Vec<D>> apply_to_positions(const SparseMatrix& L, const std::vector<Vec<D>>& x) {
    std::vector<Vec<D>> out(x.size());
    std::vector<double> in(x.size()), res(x.size());
    for (int c = 0; c < D; ++c) {
        for (std::size_t i = 0; i < x.size(); ++i) in[i] = x[i][c];
        L.apply(in, res);
        for (std::size_t i = 0; i < x.size(); ++i) out[i][c] = res[i];
    }
    return out;
}

template <int D>
struct ThinShellResult {
    std::vector<Vec<D>> velocity;
    double rel_residual = 0.0;  // free rows, relative to the constraint forcing
    int iterations = 0;
};

/// Densifies sparse handle displacements into a smooth flow by solving the
/// linearized thin-shell system (-kS L + kB L^2) V = 0 with hard equality at
/// handle and frozen vertices (frozen means V = 0). Constrained rows are
/// eliminated, so they hold exactly; free rows are solved by CG on the
/// normal equations (diagonal preconditioner).
template <int D>
ThinShellResult<D> solve_thin_shell(const Surface<D>& m, const std::map<int, Vec<D>>& handles,
                                    const std::set<int>& frozen, double k_stretch, double k_bend,
                                    double tol = 1e-10, int max_iter = 10000) {
    if (handles.empty() && frozen.empty())
        throw std::invalid_argument("thin_shell: no constraints; system is singular");
    if (k_stretch < 0 || k_bend < 0 || (k_stretch == 0 && k_bend == 0))
        throw std::invalid_argument("thin_shell: invalid stiffness weights");
    const int k = m.vertex_count();
    const SparseMatrix L = uniform_laplacian(m);
    std::vector<Triplet> at;
    auto add_scaled = [&](const SparseMatrix& M, double s) {
        for (int r = 0; r < M.rows(); ++r)
            M.for_each_in_row(r, [&](int c, double v) { at.push_back({r, c, s * v}); });
    };
    if (k_stretch != 0) add_scaled(L, -k_stretch);
    if (k_bend != 0) add_scaled(SparseMatrix::multiply(L, L), k_bend);
    const SparseMatrix A = SparseMatrix::from_triplets(k, k, std::move(at));

    std::vector<Vec<D>> constraint(static_cast<std::size_t>(k), Vec<D>::zero());
    std::vector<char> constrained(static_cast<std::size_t>(k), 0);
    for (int v : frozen) {
        if (v < 0 || v >= k) throw std::invalid_argument("thin_shell: frozen vertex out of range");
        constrained[static_cast<std::size_t>(v)] = 1;
    }
    for (const auto& [v, d] : handles) {
        if (v < 0 || v >= k) throw std::invalid_argument("thin_shell: handle vertex out of range");
        constrained[static_cast<std::size_t>(v)] = 1;
        constraint[static_cast<std::size_t>(v)] = d;
    }
    std::vector<int> free_index(static_cast<std::size_t>(k), -1);
    std::vector<int> free_list;
    for (int i = 0; i < k; ++i)
        if (!constrained[static_cast<std::size_t>(i)]) {
            free_index[static_cast<std::size_t>(i)] = static_cast<int>(free_list.size());
            free_list.push_back(i);
        }

    ThinShellResult<D> result;
    result.velocity.assign(static_cast<std::size_t>(k), Vec<D>::zero());
    for (int i = 0; i < k; ++i)
        if (constrained[static_cast<std::size_t>(i)]) result.velocity[static_cast<std::size_t>(i)] = constraint[static_cast<std::size_t>(i)];
    if (free_list.empty()) return result;

    // reduced system over free vertices: A_ff v_f = -A_fc d_c
    std::vector<Triplet> rt;
    const auto nf = static_cast<int>(free_list.size());
    std::vector<std::vector<double>> rhs(D, std::vector<double>(static_cast<std::size_t>(nf), 0.0));
    for (int fi = 0; fi < nf; ++fi) {
        const int r = free_list[static_cast<std::size_t>(fi)];
        A.for_each_in_row(r, [&](int c, double v) {
            if (constrained[static_cast<std::size_t>(c)]) {
                for (int d = 0; d < D; ++d)
                    rhs[static_cast<std::size_t>(d)][static_cast<std::size_t>(fi)] -=
                        v * constraint[static_cast<std::size_t>(c)][d];
            } else {
                rt.push_back({fi, free_index[static_cast<std::size_t>(c)], v});
            }
        });
    }
    const SparseMatrix M = SparseMatrix::from_triplets(nf, nf, std::move(rt));
    std::vector<double> x(static_cast<std::size_t>(nf));
    for (int d = 0; d < D; ++d) {
        std::fill(x.begin(), x.end(), 0.0);
        CgReport rep = solve_normal_cg(M, rhs[static_cast<std::size_t>(d)], x, tol, max_iter);
        if (!rep.converged) {
            std::ostringstream msg;
            msg << "thin_shell: CG failed to converge, rel residual " << rep.rel_residual;
            throw std::runtime_error(msg.str());
        }
        result.rel_residual = std::max(result.rel_residual, rep.rel_residual);
        result.iterations = std::max(result.iterations, rep.iterations);
        for (int fi = 0; fi < nf; ++fi)
            result.velocity[static_cast<std::size_t>(free_list[static_cast<std::size_t>(fi)])][d] =
                x[static_cast<std::size_t>(fi)];
    }
    return result;
}

// --- point-set metrics -------------------------------------------------------

namespace detail {

template <int D>
class HashGrid {
public:
    explicit HashGrid(const std::vector<Vec<D>>& pts) : pts_(pts) {
        Vec<D> lo = Vec<D>::filled(1e300), hi = Vec<D>::filled(-1e300);
        for (const auto& p : pts) {
            for (int i = 0; i < D; ++i) {
                lo[i] = std::min(lo[i], p[i]);
                hi[i] = std::max(hi[i], p[i]);
            }
        }
        origin_ = lo;
        double diag = norm(hi - lo);
        const double per_axis = std::pow(static_cast<double>(pts.size()), 1.0 / D);
        h_ = diag > 0 ? diag / std::max(per_axis, 1.0) : 1.0;
        clo_ = cell_of(lo);
        chi_ = cell_of(hi);
        for (std::size_t i = 0; i < pts.size(); ++i) cells_[key(cell_of(pts[i]))].push_back(static_cast<int>(i));
    }

    // Exact squared nearest-neighbor distance. After every cell within
    // Chebyshev ring r has been scanned, any unscanned point is at least
    // (r * h) away, which gives the stopping rule.
    double nearest2(const Vec<D>& q) const {
        const auto c0 = cell_of(q);
        int max_ring = 0;
        for (int i = 0; i < D; ++i) {
            max_ring = std::max(max_ring, std::abs(c0[static_cast<std::size_t>(i)] - clo_[static_cast<std::size_t>(i)]));
            max_ring = std::max(max_ring, std::abs(c0[static_cast<std::size_t>(i)] - chi_[static_cast<std::size_t>(i)]));
        }
        double best = 1e300;
        for (int ring = 0; ring <= max_ring; ++ring) {
            if (ring > 0) {
                const double bound = static_cast<double>(ring - 1) * h_;
                if (best <= bound * bound) return best;
            }
            std::array<int, D> c{};
            scan_axis(q, c0, ring, 0, c, best);
        }
        return best;
    }

private:
    std::array<int, D> cell_of(const Vec<D>& p) const {
        std::array<int, D> c;
        for (int i = 0; i < D; ++i) c[static_cast<std::size_t>(i)] = static_cast<int>(std::floor((p[i] - origin_[i]) / h_));
        return c;
    }

    static std::uint64_t key(const std::array<int, D>& c) {
        std::uint64_t k = 1469598103934665603ull;
        for (int v : c) {
            k ^= static_cast<std::uint64_t>(static_cast<std::uint32_t>(v));
            k *= 1099511628211ull;
        }
        return k;
    }

    void scan_axis(const Vec<D>& q, const std::array<int, D>& c0, int ring, int axis,
                   std::array<int, D>& c, double& best) const {
        if (axis == D) {
            int cheb = 0;
            for (int i = 0; i < D; ++i)
                cheb = std::max(cheb, std::abs(c[static_cast<std::size_t>(i)] - c0[static_cast<std::size_t>(i)]));
            if (cheb != ring) return;
            auto it = cells_.find(key(c));
            if (it == cells_.end()) return;
            for (int idx : it->second) best = std::min(best, norm2(q - pts_[static_cast<std::size_t>(idx)]));
            return;
        }
        const int lo = std::max(c0[static_cast<std::size_t>(axis)] - ring, clo_[static_cast<std::size_t>(axis)]);
        const int hi = std::min(c0[static_cast<std::size_t>(axis)] + ring, chi_[static_cast<std::size_t>(axis)]);
        for (int v = lo; v <= hi; ++v) {
            c[static_cast<std::size_t>(axis)] = v;
            scan_axis(q, c0, ring, axis + 1, c, best);
        }
    }

    const std::vector<Vec<D>>& pts_;
    Vec<D> origin_;
    double h_ = 1.0;
    std::array<int, D> clo_{}, chi_{};
    std::unordered_map<std::uint64_t, std::vector<int>> cells_;
};

}  // namespace detail

/// Symmetric Chamfer distance: mean squared nearest-neighbor distance,
/// averaged over both directions. Exact (the hash grid search is exact).
template <int D>
inline double chamfer(const std::vector<Vec<D>>& a, const std::vector<Vec<D>>& b) {
    if (a.empty() || b.empty()) throw std::invalid_argument("chamfer: empty point set");
    detail::HashGrid<D> ga(a), gb(b);
    double ab = 0, ba = 0;
    for (const auto& p : a) ab += gb.nearest2(p);
    for (const auto& p : b) ba += ga.nearest2(p);
    return 0.5 * (ab / static_cast<double>(a.size()) + ba / static_cast<double>(b.size()));
}

}  // namespace iflow
