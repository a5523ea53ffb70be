#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "ttamen/amen/config.hpp"
#include "ttamen/amen/environments.hpp"

namespace ttamen {

struct LocalSolution {
    Vector u;
    double rel_residual = 0.0;
    int iterations = 0;
    bool direct = true;
    bool fallback = false; ///< matrix was singular; least-squares solution returned
};

namespace detail {

inline double rel_res(const Vector& r, const Vector& b) {
    const double nb = b.norm();
    if (nb > 0) return r.norm() / nb;
    return r.norm();
}

} // namespace detail

/// Dense solve. SPD systems go through Cholesky; otherwise LU. Singular or
/// severely ill-conditioned matrices fall back to a least-squares solution.
inline LocalSolution solve_local(const Matrix& b, const Vector& rhs, bool symmetric) {
    LocalSolution out;
    if (rhs.size() == 0) return out;
    if (rhs.norm() == 0.0) {
        out.u = Vector::Zero(rhs.size());
        return out;
    }
    bool done = false;
    if (symmetric) {
        Eigen::LLT<Matrix> llt(b);
        if (llt.info() == Eigen::Success) {
            out.u = llt.solve(rhs);
            done = true;
        }
    }
    if (!done) {
        Eigen::PartialPivLU<Matrix> lu(b);
        const double rc = lu.rcond();
        if (rc > 1e-14 && std::isfinite(rc)) {
            out.u = lu.solve(rhs);
            done = true;
        }
    }
    // rcond is an estimate; an exact zero pivot can slip through
    if (done && (!out.u.allFinite() || detail::rel_res(rhs - b * out.u, rhs) > 1e-6)) done = false;
    if (!done) {
        out.fallback = true;
        out.u = b.completeOrthogonalDecomposition().solve(rhs);
    }
    out.rel_residual = detail::rel_res(rhs - b * out.u, rhs);
    return out;
}

using LinearMap = std::function<Vector(const Vector&)>;

/// Conjugate gradients for SPD operators.
inline LocalSolution cg(const LinearMap& op, const Vector& rhs, const Vector& guess, double rtol, int maxit) {
    LocalSolution out;
    out.direct = false;
    const double nb = rhs.norm();
    Vector x = guess;
    if (nb == 0.0) {
        out.u = Vector::Zero(rhs.size());
        return out;
    }
    Vector r = rhs - op(x);
    Vector p = r;
    double rr = r.squaredNorm();
    int it = 0;
    while (std::sqrt(rr) > rtol * nb && it < maxit) {
        const Vector ap = op(p);
        const double pap = p.dot(ap);
        if (!(pap > 0)) break;
        const double alpha = rr / pap;
        x += alpha * p;
        r -= alpha * ap;
        const double rr_new = r.squaredNorm();
        p = r + (rr_new / rr) * p;
        rr = rr_new;
        ++it;
    }
    out.u = std::move(x);
    out.iterations = it;
    out.rel_residual = detail::rel_res(rhs - op(out.u), rhs);
    return out;
}

/// Restarted GMRES with modified Gram-Schmidt and Givens rotations.
inline LocalSolution gmres(const LinearMap& op, const Vector& rhs, const Vector& guess, double rtol, int maxit,
                           int restart) {
    LocalSolution out;
    out.direct = false;
    const double nb = rhs.norm();
    Vector x = guess;
    if (nb == 0.0) {
        out.u = Vector::Zero(rhs.size());
        return out;
    }
    const Index n = rhs.size();
    const int m = std::max(1, std::min<int>(restart, static_cast<int>(n)));
    int total = 0;
    Vector r = rhs - op(x);
    double beta = r.norm();
    while (beta > rtol * nb && total < maxit) {
        Matrix v(n, m + 1);
        Matrix h = Matrix::Zero(m + 1, m);
        Vector cs = Vector::Zero(m), sn = Vector::Zero(m), g = Vector::Zero(m + 1);
        v.col(0) = r / beta;
        g(0) = beta;
        int j = 0;
        for (; j < m && total < maxit; ++j, ++total) {
            Vector w = op(v.col(j));
            for (int i = 0; i <= j; ++i) {
                h(i, j) = w.dot(v.col(i));
                w -= h(i, j) * v.col(i);
            }
            h(j + 1, j) = w.norm();
            if (h(j + 1, j) > 0) v.col(j + 1) = w / h(j + 1, j);
            for (int i = 0; i < j; ++i) {
                const double t = cs(i) * h(i, j) + sn(i) * h(i + 1, j);
                h(i + 1, j) = -sn(i) * h(i, j) + cs(i) * h(i + 1, j);
                h(i, j) = t;
            }
            const double den = std::hypot(h(j, j), h(j + 1, j));
            cs(j) = den > 0 ? h(j, j) / den : 1.0;
            sn(j) = den > 0 ? h(j + 1, j) / den : 0.0;
            h(j, j) = den;
            h(j + 1, j) = 0.0;
            g(j + 1) = -sn(j) * g(j);
            g(j) = cs(j) * g(j);
            if (std::abs(g(j + 1)) <= rtol * nb || den == 0.0) {
                ++j;
                ++total;
                break;
            }
        }
        const Vector y = h.topLeftCorner(j, j).triangularView<Eigen::Upper>().solve(g.head(j));
        x += v.leftCols(j) * y;
        r = rhs - op(x);
        const double beta_new = r.norm();
        if (!(beta_new < beta)) {
            beta = beta_new;
            break; // stagnation
        }
        beta = beta_new;
    }
    out.u = std::move(x);
    out.iterations = total;
    out.rel_residual = beta / nb;
    return out;
}

/// Local solve for core k: dense factorization for small systems, matrix-free
/// CG (symmetric) or GMRES otherwise.
inline LocalSolution solve_local(const LocalOperator& op, const Vector& rhs, const Vector& guess,
                                 const LocalSolverConfig& cfg, double tol, bool symmetric) {
    const bool dense = cfg.kind == LocalSolverKind::direct ||
                       (cfg.kind == LocalSolverKind::automatic && op.size() <= cfg.dense_cap);
    if (dense) return solve_local(op.dense(), rhs, symmetric);
    const double rtol = cfg.rtol > 0 ? cfg.rtol : tol / 10.0;
    LinearMap f = [&op](const Vector& v) { return op.apply(v); };
    if (symmetric) {
        LocalSolution s = cg(f, rhs, guess, rtol, cfg.max_iterations);
        if (s.rel_residual <= rtol * 1.01) return s;
        // lost definiteness or ran out of iterations: finish with GMRES
        LocalSolution g = gmres(f, rhs, s.u, rtol, cfg.max_iterations, cfg.restart);
        g.iterations += s.iterations;
        return g;
    }
    return gmres(f, rhs, guess, rtol, cfg.max_iterations, cfg.restart);
}

} // namespace ttamen
