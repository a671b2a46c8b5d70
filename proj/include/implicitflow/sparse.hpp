#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <tuple>
#include <vector>

namespace iflow {

struct Triplet {
    int row;
    int col;
    double value;
};

/// Square-or-rectangular sparse matrix in CSR form; duplicate triplets sum.
class SparseMatrix {
public:
    SparseMatrix() = default;

    static SparseMatrix from_triplets(int rows, int cols, std::vector<Triplet> t) {
        SparseMatrix m;
        m.rows_ = rows;
        m.cols_ = cols;
        std::sort(t.begin(), t.end(), [](const Triplet& a, const Triplet& b) {
            return std::tie(a.row, a.col) < std::tie(b.row, b.col);
        });
        m.row_ptr_.assign(static_cast<std::size_t>(rows) + 1, 0);
        for (std::size_t i = 0; i < t.size(); ++i) {
            if (t[i].row < 0 || t[i].row >= rows || t[i].col < 0 || t[i].col >= cols)
                throw std::invalid_argument("sparse: triplet out of range");
            if (i > 0 && t[i].row == t[i - 1].row && t[i].col == t[i - 1].col) {
                m.vals_.back() += t[i].value;
            } else {
                m.col_idx_.push_back(t[i].col);
                m.vals_.push_back(t[i].value);
                m.row_ptr_[static_cast<std::size_t>(t[i].row) + 1]++;
            }
        }
        for (int r = 0; r < rows; ++r)
            m.row_ptr_[static_cast<std::size_t>(r) + 1] += m.row_ptr_[static_cast<std::size_t>(r)];
        return m;
    }

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    std::size_t nnz() const { return vals_.size(); }

    void apply(std::span<const double> x, std::span<double> y) const {
        for (int r = 0; r < rows_; ++r) {
            double s = 0;
            for (auto k = row_ptr_[static_cast<std::size_t>(r)]; k < row_ptr_[static_cast<std::size_t>(r) + 1]; ++k)
                s += vals_[k] * x[static_cast<std::size_t>(col_idx_[k])];
            y[static_cast<std::size_t>(r)] = s;
        }
    }

    void apply_transpose(std::span<const double> x, std::span<double> y) const {
        std::fill(y.begin(), y.end(), 0.0);
        for (int r = 0; r < rows_; ++r)
            for (auto k = row_ptr_[static_cast<std::size_t>(r)]; k < row_ptr_[static_cast<std::size_t>(r) + 1]; ++k)
                y[static_cast<std::size_t>(col_idx_[k])] += vals_[k] * x[static_cast<std::size_t>(r)];
    }

    double entry(int r, int c) const {
        for (auto k = row_ptr_[static_cast<std::size_t>(r)]; k < row_ptr_[static_cast<std::size_t>(r) + 1]; ++k)
            if (col_idx_[k] == c) return vals_[k];
        return 0.0;
    }

    double row_sum(int r) const {
        double s = 0;
        for (auto k = row_ptr_[static_cast<std::size_t>(r)]; k < row_ptr_[static_cast<std::size_t>(r) + 1]; ++k)
            s += vals_[k];
        return s;
    }

    template <class F>
    void for_each_in_row(int r, F&& f) const {
        for (auto k = row_ptr_[static_cast<std::size_t>(r)]; k < row_ptr_[static_cast<std::size_t>(r) + 1]; ++k)
            f(col_idx_[k], vals_[k]);
    }

    static SparseMatrix multiply(const SparseMatrix& a, const SparseMatrix& b) {
        if (a.cols_ != b.rows_) throw std::invalid_argument("sparse: multiply shape mismatch");
        std::vector<Triplet> t;
        std::vector<double> acc(static_cast<std::size_t>(b.cols_), 0.0);
        std::vector<int> touched;
        for (int r = 0; r < a.rows_; ++r) {
            touched.clear();
            a.for_each_in_row(r, [&](int k, double av) {
                b.for_each_in_row(k, [&](int c, double bv) {
                    if (acc[static_cast<std::size_t>(c)] == 0.0 && bv != 0.0) touched.push_back(c);
                    acc[static_cast<std::size_t>(c)] += av * bv;
                });
            });
            std::sort(touched.begin(), touched.end());
            for (int c : touched) {
                t.push_back({r, c, acc[static_cast<std::size_t>(c)]});
                acc[static_cast<std::size_t>(c)] = 0.0;
            }
        }
        return from_triplets(a.rows_, b.cols_, std::move(t));
    }

    // diag(A^T A): squared column norms, the Jacobi preconditioner for CGNR.
    std::vector<double> normal_diagonal() const {
        std::vector<double> d(static_cast<std::size_t>(cols_), 0.0);
        for (std::size_t k = 0; k < vals_.size(); ++k)
            d[static_cast<std::size_t>(col_idx_[k])] += vals_[k] * vals_[k];
        return d;
    }

private:
    int rows_ = 0, cols_ = 0;
    std::vector<std::size_t> row_ptr_;
    std::vector<int> col_idx_;
    std::vector<double> vals_;
};

struct CgReport {
    bool converged = false;
    int iterations = 0;
    double rel_residual = 0.0;
};

/// Conjugate gradient on the normal equations (A^T A x = A^T b) with a
/// Jacobi preconditioner; handles nonsymmetric square systems. Convergence
/// is measured as ||Ax - b|| / ||b||.
inline CgReport solve_normal_cg(const SparseMatrix& A, std::span<const double> b,
                                std::span<double> x, double tol = 1e-10, int max_iter = 10000) {
    const auto n = static_cast<std::size_t>(A.cols());
    const auto m = static_cast<std::size_t>(A.rows());
    if (b.size() != m || x.size() != n) throw std::invalid_argument("cg: size mismatch");
    double bnorm = 0;
    for (double v : b) bnorm += v * v;
    bnorm = std::sqrt(bnorm);
    CgReport rep;
    if (bnorm == 0.0) {
        std::fill(x.begin(), x.end(), 0.0);
        rep.converged = true;
        return rep;
    }
    std::vector<double> prec = A.normal_diagonal();
    for (auto& d : prec) d = d > 0 ? 1.0 / d : 1.0;

    std::vector<double> r(m), s(n), z(n), p(n), q(m);
    A.apply(x, r);
    for (std::size_t i = 0; i < m; ++i) r[i] = b[i] - r[i];
    A.apply_transpose(r, s);
    for (std::size_t i = 0; i < n; ++i) z[i] = prec[i] * s[i];
    p = z;
    double gamma = 0;
    for (std::size_t i = 0; i < n; ++i) gamma += s[i] * z[i];
    for (int it = 0; it < max_iter; ++it) {
        double rnorm = 0;
        for (double v : r) rnorm += v * v;
        rep.rel_residual = std::sqrt(rnorm) / bnorm;
        if (rep.rel_residual <= tol) {
            rep.converged = true;
            rep.iterations = it;
            return rep;
        }
        A.apply(p, q);
        double qq = 0;
        for (double v : q) qq += v * v;
        if (qq == 0.0) break;
        const double alpha = gamma / qq;
        for (std::size_t i = 0; i < n; ++i) x[i] += alpha * p[i];
        for (std::size_t i = 0; i < m; ++i) r[i] -= alpha * q[i];
        A.apply_transpose(r, s);
        double gamma_next = 0;
        for (std::size_t i = 0; i < n; ++i) {
            z[i] = prec[i] * s[i];
            gamma_next += s[i] * z[i];
        }
        const double beta = gamma_next / gamma;
        gamma = gamma_next;
        for (std::size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
        rep.iterations = it + 1;
    }
    double rnorm = 0;
    for (double v : r) rnorm += v * v;
    rep.rel_residual = std::sqrt(rnorm) / bnorm;
    rep.converged = rep.rel_residual <= tol;
    return rep;
}

}  // namespace iflow
