#pragma once

#include <cmath>
#include <optional>
#include <string>

#include "ttamen/core.hpp"
#include "ttamen/linalg.hpp"
#include "ttamen/ortho.hpp"

namespace ttamen {

namespace detail {

inline void require_same_modes(const std::vector<Index>& a, const std::vector<Index>& b, const char* what) {
    if (a != b) throw SizeMismatch(std::string(what) + ": mode sizes differ");
}

} // namespace detail

/// alpha*x + beta*y with ranks r(x) + r(y) (block-diagonal cores).
inline TTVector tt_add(const TTVector& x, const TTVector& y, double alpha = 1.0, double beta = 1.0) {
    detail::require_same_modes(x.mode_sizes(), y.mode_sizes(), "tt_add");
    const Index d = x.dim();
    std::vector<Core3> cores;
    if (d == 1) {
        Core3 c(1, x.core(0).n(), 1);
        c.data() = alpha * x.core(0).data() + beta * y.core(0).data();
        cores.push_back(std::move(c));
        return TTVector(std::move(cores));
    }
    for (Index k = 0; k < d; ++k) {
        const auto& a = x.core(k);
        const auto& b = y.core(k);
        const Index n = a.n();
        const Index r1 = k == 0 ? 1 : a.r1() + b.r1();
        const Index r2 = k == d - 1 ? 1 : a.r2() + b.r2();
        const Index off1 = k == 0 ? 0 : a.r1();
        const Index off2 = k == d - 1 ? 0 : a.r2();
        const double sa = k == d - 1 ? alpha : 1.0;
        const double sb = k == d - 1 ? beta : 1.0;
        Core3 c(r1, n, r2);
        for (Index q = 0; q < a.r2(); ++q)
            for (Index i = 0; i < n; ++i)
                for (Index p = 0; p < a.r1(); ++p) c(p, i, q) = sa * a(p, i, q);
        for (Index q = 0; q < b.r2(); ++q)
            for (Index i = 0; i < n; ++i)
                for (Index p = 0; p < b.r1(); ++p) c(off1 + p, i, off2 + q) += sb * b(p, i, q);
        cores.push_back(std::move(c));
    }
    return TTVector(std::move(cores));
}

inline TTVector tt_scale(TTVector x, double alpha) {
    Ortho tag = x.ortho();
    const Index k = std::min(tag.left, x.dim() - 1);
    x.core(k).data() *= alpha;
    tag.left = std::min(tag.left, k);
    tag.right = std::max(tag.right, k + 1);
    x.set_ortho(tag);
    return x;
}

/// Exact operator-vector product; output rank R_k(A) * r_k(x).
inline TTVector tt_matvec(const TTMatrix& a, const TTVector& x) {
    if (a.dim() != x.dim()) throw SizeMismatch("tt_matvec: dimension mismatch");
    detail::require_same_modes(a.col_sizes(), x.mode_sizes(), "tt_matvec");
    std::vector<Core3> cores;
    for (Index k = 0; k < x.dim(); ++k) cores.push_back(linalg::apply_core(a.core(k), x.core(k)));
    return TTVector(std::move(cores));
}

/// Inner product through a left-to-right contraction.
inline double tt_dot(const TTVector& x, const TTVector& y) {
    if (x.dim() != y.dim()) throw SizeMismatch("tt_dot: dimension mismatch");
    detail::require_same_modes(x.mode_sizes(), y.mode_sizes(), "tt_dot");
    Matrix phi = Matrix::Ones(1, 1);
    for (Index k = 0; k < x.dim(); ++k) phi = linalg::left_env_step(phi, x.core(k), y.core(k));
    return phi(0, 0);
}

inline double tt_norm(const TTVector& x) {
    const double s = tt_dot(x, x);
    return std::sqrt(std::max(s, 0.0));
}

/// Norm via left orthogonalization. Unlike tt_norm it stays accurate when the
/// represented vector is a small difference of large terms.
inline double tt_norm_stable(const TTVector& x) {
    TTVector y = orthogonalize(x, Direction::left, x.dim() - 1);
    return y.core(x.dim() - 1).norm();
}

// ---- operator algebra -------------------------------------------------------

inline TTMatrix tt_add(const TTMatrix& a, const TTMatrix& b, double alpha = 1.0, double beta = 1.0) {
    if (a.row_sizes() != b.row_sizes() || a.col_sizes() != b.col_sizes())
        throw SizeMismatch("tt_add(TTMatrix): sizes differ");
    const auto rows = a.row_sizes();
    const auto cols = a.col_sizes();
    return TTMatrix::from_flat(tt_add(a.flatten(), b.flatten(), alpha, beta), rows, cols);
}

inline TTMatrix tt_scale(const TTMatrix& a, double alpha) {
    TTMatrix out = a;
    out.core(0).flat().data() *= alpha;
    return out;
}

inline TTMatrix round(const TTMatrix& a, double tol, std::optional<Index> max_rank = std::nullopt) {
    const auto rows = a.row_sizes();
    const auto cols = a.col_sizes();
    return TTMatrix::from_flat(round(a.flatten(), tol, max_rank), rows, cols);
}

/// Operator-operator product A*B; ranks multiply.
inline TTMatrix tt_matmul(const TTMatrix& a, const TTMatrix& b) {
    if (a.dim() != b.dim() || a.col_sizes() != b.row_sizes())
        throw SizeMismatch("tt_matmul: inner sizes differ");
    std::vector<Core4> cores;
    for (Index k = 0; k < a.dim(); ++k) {
        const auto& ca = a.core(k);
        const auto& cb = b.core(k);
        const Index n = ca.n(), m = cb.m();
        Core4 c(ca.r1() * cb.r1(), n, m, ca.r2() * cb.r2());
        for (Index a1 = 0; a1 < ca.r2(); ++a1)
            for (Index a0 = 0; a0 < ca.r1(); ++a0) {
                const Matrix ba = ca.block(a0, a1);
                for (Index b1 = 0; b1 < cb.r2(); ++b1)
                    for (Index b0 = 0; b0 < cb.r1(); ++b0) {
                        const Matrix blk = ba * cb.block(b0, b1);
                        c.set_block(b0 + cb.r1() * a0, b1 + cb.r2() * a1, blk);
                    }
            }
        cores.push_back(std::move(c));
    }
    return TTMatrix(std::move(cores));
}

/// Appends the modes of `b` after those of `a`: the result is a (x) b with
/// a's indices varying fastest.
inline TTMatrix tt_kron(const TTMatrix& a, const TTMatrix& b) {
    std::vector<Core4> cores = a.cores();
    for (const auto& c : b.cores()) cores.push_back(c);
    return TTMatrix(std::move(cores));
}
inline TTVector tt_kron(const TTVector& a, const TTVector& b) {
    std::vector<Core3> cores = a.cores();
    for (const auto& c : b.cores()) cores.push_back(c);
    return TTVector(std::move(cores));
}

inline double tt_norm_stable(const TTMatrix& a) { return tt_norm_stable(a.flatten()); }

/// ||A - A^T|| <= tol * ||A|| (Frobenius, evaluated in TT format).
inline bool is_symmetric(const TTMatrix& a, double tol = 1e-12) {
    if (a.row_sizes() != a.col_sizes()) return false;
    const double na = tt_norm_stable(a);
    if (na == 0.0) return true;
    return tt_norm_stable(tt_add(a, a.transposed(), 1.0, -1.0)) <= tol * na;
}

} // namespace ttamen
