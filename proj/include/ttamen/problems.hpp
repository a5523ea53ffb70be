#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "ttamen/algebra.hpp"
#include "ttamen/core.hpp"
#include "ttamen/qtt.hpp"

namespace ttamen {

/// -Laplacian on the uniform grid of [0,1]^d, homogeneous Dirichlet boundary,
/// unscaled stencil tridiag(-1, 2, -1) per mode.
struct PoissonSpec {
    Index d = 2;
    Index n = 64;

    void validate() const {
        if (d < 1) throw Error("PoissonSpec: d must be at least 1");
        if (n < 2) throw Error("PoissonSpec: n must be at least 2");
    }
};

inline Matrix laplacian_1d(Index n) {
    Matrix l = Matrix::Zero(n, n);
    for (Index i = 0; i < n; ++i) {
        l(i, i) = 2.0;
        if (i > 0) l(i, i - 1) = l(i - 1, i) = -1.0;
    }
    return l;
}

/// Kronecker sum of per-mode terms: sum_k I x ... x term_k x ... x I, with
/// operator ranks 2.
inline TTMatrix kronecker_sum(const std::vector<Matrix>& terms) {
    const Index d = static_cast<Index>(terms.size());
    if (d == 0) throw Error("kronecker_sum: no terms");
    std::vector<Core4> cores;
    for (Index k = 0; k < d; ++k) {
        const Index n = terms[k].rows();
        const Matrix id = Matrix::Identity(n, n);
        if (d == 1) {
            Core4 c(1, n, n, 1);
            c.set_block(0, 0, terms[k]);
            cores.push_back(std::move(c));
            break;
        }
        const Index r1 = k == 0 ? 1 : 2;
        const Index r2 = k == d - 1 ? 1 : 2;
        Core4 c(r1, n, n, r2);
        // state 0: identities so far, state 1: term already placed
        if (k == 0) {
            c.set_block(0, 0, id);
            c.set_block(0, 1, terms[k]);
        } else if (k == d - 1) {
            c.set_block(0, 0, terms[k]);
            c.set_block(1, 0, id);
        } else {
            c.set_block(0, 0, id);
            c.set_block(0, 1, terms[k]);
            c.set_block(1, 1, id);
        }
        cores.push_back(std::move(c));
    }
    return TTMatrix(std::move(cores));
}

inline std::pair<TTMatrix, TTVector> build_poisson(const PoissonSpec& spec) {
    spec.validate();
    std::vector<Matrix> terms(spec.d, laplacian_1d(spec.n));
    std::vector<Index> sizes(spec.d, spec.n);
    return {kronecker_sum(terms), TTVector::ones(sizes)};
}

/// Cascade gene regulatory network: species 1 is produced at constant rate
/// alpha0, species k >= 2 at rate beta i_{k-1} / (beta i_{k-1} + gamma); all
/// degrade with rate delta i_k. States i_k = 0..n-1.
struct CascadeCMESpec {
    Index d = 2;
    Index n = 64;
    double alpha0 = 0.7;
    double delta = 0.07;
    double beta = 1.0;
    double gamma = 5.0;

    void validate() const {
        if (d < 1) throw Error("CascadeCMESpec: d must be at least 1");
        if (n < 2) throw Error("CascadeCMESpec: n must be at least 2");
        if (!(alpha0 > 0 && delta > 0 && beta > 0 && gamma > 0))
            throw Error("CascadeCMESpec: rates must be positive");
    }
};

namespace detail {

/// (S^- - I): psi(i-1) - psi(i); inflow from i = -1 is absent, outflow at
/// i = n-1 is kept.
inline Matrix production_1d(Index n) {
    Matrix m = -Matrix::Identity(n, n);
    for (Index i = 1; i < n; ++i) m(i, i - 1) = 1.0;
    return m;
}

/// (i+1) psi(i+1) - i psi(i); no inflow from i = n.
inline Matrix degradation_1d(Index n) {
    Matrix m = Matrix::Zero(n, n);
    for (Index i = 0; i < n; ++i) {
        m(i, i) = -static_cast<double>(i);
        if (i + 1 < n) m(i, i + 1) = static_cast<double>(i + 1);
    }
    return m;
}

} // namespace detail

/// Generator A = A_1 + ... + A_d with TT ranks 3. Interior columns sum to zero.
inline TTMatrix build_cme_operator(const CascadeCMESpec& spec) {
    spec.validate();
    const Index n = spec.n, d = spec.d;
    const Matrix id = Matrix::Identity(n, n);
    const Matrix prod = detail::production_1d(n);
    const Matrix deg = spec.delta * detail::degradation_1d(n);
    Matrix f = Matrix::Zero(n, n);
    for (Index i = 0; i < n; ++i) {
        const double bi = spec.beta * static_cast<double>(i);
        f(i, i) = bi / (bi + spec.gamma);
    }
    std::vector<Core4> cores;
    for (Index k = 0; k < d; ++k) {
        const Matrix local = k == 0 ? Matrix(spec.alpha0 * prod + deg) : deg;
        if (d == 1) {
            Core4 c(1, n, n, 1);
            c.set_block(0, 0, local);
            cores.push_back(std::move(c));
            break;
        }
        // states: 0 identities so far, 1 coupling factor placed on the
        // previous mode, 2 done
        const Index r1 = k == 0 ? 1 : 3;
        const Index r2 = k == d - 1 ? 1 : 3;
        Core4 c(r1, n, n, r2);
        if (k == 0) {
            c.set_block(0, 0, id);
            c.set_block(0, 1, f);
            c.set_block(0, 2, local);
        } else if (k == d - 1) {
            c.set_block(0, 0, local);
            c.set_block(1, 0, prod);
            c.set_block(2, 0, id);
        } else {
            c.set_block(0, 0, id);
            c.set_block(0, 1, f);
            c.set_block(0, 2, local);
            c.set_block(1, 2, prod);
            c.set_block(2, 2, id);
        }
        cores.push_back(std::move(c));
    }
    return TTMatrix(std::move(cores));
}

/// psi(0) = e_1 x ... x e_1 (no molecules of any species).
inline TTVector build_initial_state(const std::vector<Index>& sizes) {
    std::vector<Core3> cores;
    for (Index n : sizes) {
        Core3 c(1, n, 1);
        c(0, 0, 0) = 1.0;
        cores.push_back(std::move(c));
    }
    return TTVector(std::move(cores));
}
inline TTVector build_initial_state(const CascadeCMESpec& spec) {
    return build_initial_state(std::vector<Index>(spec.d, spec.n));
}

enum class TimeScheme { crank_nicolson, implicit_euler };

struct TimeSystemSpec {
    double tau = 10.0 / 4096.0;
    Index steps = 4096;
    TimeScheme scheme = TimeScheme::crank_nicolson;

    void validate() const {
        if (!(tau > 0)) throw Error("TimeSystemSpec: tau must be positive");
        if (steps < 1) throw Error("TimeSystemSpec: steps must be at least 1");
    }
};

/// I + s A, compressed.
inline TTMatrix shifted_identity(const TTMatrix& a, double s) {
    return round(tt_add(TTMatrix::identity(a.row_sizes()), a, 1.0, s), 1e-14);
}

/// All-at-once system for psi(t_1), ..., psi(t_N) with time as the last mode:
///   (I - tau/2 A) psi_m - (I + tau/2 A) psi_{m-1} = 0, psi_0 given.
/// The first block row carries (I + tau/2 A) psi_0 on the right-hand side.
inline std::pair<TTMatrix, TTVector> build_time_system(const TTMatrix& a, const TTVector& psi0,
                                                       const TimeSystemSpec& spec) {
    spec.validate();
    if (a.row_sizes() != psi0.mode_sizes() || a.col_sizes() != psi0.mode_sizes())
        throw SizeMismatch("build_time_system: operator and initial state sizes differ");
    const Index nt = spec.steps;
    Matrix shift = Matrix::Zero(nt, nt);
    for (Index m = 1; m < nt; ++m) shift(m, m - 1) = 1.0;
    Vector e0 = Vector::Zero(nt);
    e0(0) = 1.0;
    const TTMatrix time_id = TTMatrix::kron({Matrix::Identity(nt, nt)});
    const TTMatrix time_shift = TTMatrix::kron({shift});
    TTMatrix diag_block, sub_block;
    TTVector first;
    if (spec.scheme == TimeScheme::crank_nicolson) {
        diag_block = shifted_identity(a, -0.5 * spec.tau);
        sub_block = tt_scale(shifted_identity(a, 0.5 * spec.tau), -1.0);
        first = tt_matvec(shifted_identity(a, 0.5 * spec.tau), psi0);
    } else {
        diag_block = shifted_identity(a, -spec.tau);
        sub_block = tt_scale(TTMatrix::identity(a.row_sizes()), -1.0);
        first = psi0;
    }
    TTMatrix m = tt_add(tt_kron(diag_block, time_id), tt_kron(sub_block, time_shift));
    m = round(m, 1e-14);
    Core3 tc(1, nt, 1);
    tc.data() = e0;
    TTVector b = tt_kron(first, TTVector({tc}));
    b = round(b, 1e-14);
    return {std::move(m), std::move(b)};
}

/// Extracts psi(t_m) (m = 1..N) from a stacked all-at-once solution.
inline TTVector time_slice(const TTVector& x, Index m) {
    const Index d = x.dim();
    const Core3& last = x.core(d - 1);
    if (m < 1 || m > last.n()) throw BoundsError("time_slice: step out of range");
    std::vector<Core3> cores(x.cores().begin(), x.cores().end() - 1);
    Core3 pre = cores.back();
    const Matrix v = last.slice(m - 1); // r x 1
    cores.back() = Core3::from_left(Matrix(pre.left() * v), pre.r1(), pre.n());
    return TTVector(std::move(cores));
}

} // namespace ttamen
