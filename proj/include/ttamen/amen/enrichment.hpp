#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "ttamen/amen/environments.hpp"
#include "ttamen/core.hpp"
#include "ttamen/linalg.hpp"
#include "ttamen/ortho.hpp"

namespace ttamen {

// The projected residual z_k = X_{<k}^T (y - A u) is kept in TT form
//   z_k = tau(head_k, block_{k+1}, ..., block_d)
// where head_k is the only step-dependent block and every right block is
// blockdiag(Y^(p), A^(p) T^(p)) built once per sweep.

/// Step-dependent first block of the residual, (r_k n_k) x (ry_{k+1} + R_{k+1} r_{k+1}):
/// [ Y_k | -A_k U ].
inline Matrix residual_head(const Matrix& left_rhs, const Core3& yk, const Matrix& left_op, const Core3& auk) {
    const Index rows = left_rhs.rows() * yk.n();
    Matrix head(rows, yk.r2() + auk.r2());
    const Matrix ty = left_rhs * yk.right();
    head.leftCols(yk.r2()) = ConstMatrixMap(ty.data(), rows, yk.r2());
    const Matrix ta = left_op * auk.right();
    head.rightCols(auk.r2()) = -ConstMatrixMap(ta.data(), rows, auk.r2());
    return head;
}

/// blockdiag(Y^(p), A^(p) T^(p)) with mode slices kept block-diagonal.
inline Core3 residual_block(const Core3& yk, const Core3& axk) {
    const Index n = yk.n();
    Core3 b(yk.r1() + axk.r1(), n, yk.r2() + axk.r2());
    for (Index q = 0; q < yk.r2(); ++q)
        for (Index i = 0; i < n; ++i)
            for (Index p = 0; p < yk.r1(); ++p) b(p, i, q) = yk(p, i, q);
    for (Index q = 0; q < axk.r2(); ++q)
        for (Index i = 0; i < n; ++i)
            for (Index p = 0; p < axk.r1(); ++p) b(yk.r1() + p, i, yk.r2() + q) = axk(p, i, q);
    return b;
}

/// Right residual blocks contracted once per sweep. Both vectors are
/// indexed by bond (1..d); entry d is the boundary.
///   factor[k]: L with L L^T = Gram of the tail T_{>=k} (LQ-compressed)
///   gram[k]:   the Gram matrix itself
struct ResidualTails {
    std::vector<Matrix> factor;
    std::vector<Matrix> gram;
};

inline ResidualTails residual_tails(const TTMatrix& a, const TTVector& y, const TTVector& x, bool with_factor,
                                    bool with_gram) {
    const Index d = x.dim();
    ResidualTails t;
    if (with_factor) {
        t.factor.assign(d + 1, Matrix());
        t.factor[d] = Matrix::Ones(2, 1);
    }
    if (with_gram) {
        t.gram.assign(d + 1, Matrix());
        t.gram[d] = Matrix::Ones(2, 2);
    }
    for (Index p = d - 1; p >= 1; --p) {
        const Core3 blk = residual_block(y.core(p), linalg::apply_core(a.core(p), x.core(p)));
        if (with_factor) {
            const Matrix& f = t.factor[p + 1];
            const Matrix m = blk.left() * f; // (r1 n) x s
            ConstMatrixMap right(m.data(), blk.r1(), blk.n() * f.cols());
            t.factor[p] = linalg::lq_thin(right).l;
        }
        if (with_gram) t.gram[p] = linalg::right_env_step(t.gram[p + 1], blk, blk);
    }
    return t;
}

/// Orthonormal enrichment columns for core k plus quality figures.
struct Enrichment {
    Matrix basis;               ///< (r_k n_k) x width, orthonormal columns
    double residual_norm = 0.0; ///< ||z_k||
    double defect = std::numeric_limits<double>::quiet_NaN(); ///< ||z_k - P z_k|| / ||z_k||
    bool indefinite = false;    ///< Cholesky met a negative pivot
    Index width() const { return basis.cols(); }
};

/// Dominant rho left singular vectors of the first unfolding of z_k.
inline Enrichment enrich_svd(const Matrix& head, const Matrix& tail_factor, Index rho) {
    Enrichment e;
    const Matrix m = head * tail_factor;
    Eigen::BDCSVD<Matrix> svd(m, Eigen::ComputeThinU);
    const Vector& s = svd.singularValues();
    e.residual_norm = s.norm();
    if (e.residual_norm == 0.0 || s.size() == 0) {
        e.basis = Matrix(head.rows(), 0);
        e.defect = 0.0;
        return e;
    }
    Index w = std::min<Index>(rho, s.size());
    const double floor = 1e-14 * s(0);
    while (w > 0 && s(w - 1) <= floor) --w;
    e.basis = svd.matrixU().leftCols(w);
    e.defect = s.size() > w ? s.tail(s.size() - w).norm() / e.residual_norm : 0.0;
    return e;
}

struct PivotedCholesky {
    Matrix factor;          ///< G ~ factor * factor^T
    std::vector<Index> pivots;
    bool indefinite = false;
};

/// Unfinished (rank-limited) pivoted Cholesky of a symmetric PSD matrix.
/// Pivot = largest remaining diagonal entry, ties to the lowest index. Stops
/// when the pivot drops below 1e-12 * trace(G).
inline PivotedCholesky pivoted_cholesky(const Matrix& g, Index rank) {
    PivotedCholesky out;
    const Index n = g.rows();
    Vector diag = g.diagonal();
    const double tr = diag.sum();
    out.factor = Matrix(n, 0);
    if (!(tr > 0)) return out;
    Matrix l(n, std::min(rank, n));
    Index j = 0;
    for (; j < l.cols(); ++j) {
        Index p = 0;
        for (Index i = 1; i < n; ++i)
            if (diag(i) > diag(p)) p = i;
        const double piv = diag(p);
        if (piv < -1e-10 * tr) {
            out.indefinite = true;
            break;
        }
        if (piv <= 1e-12 * tr) break;
        Vector col = g.col(p);
        if (j > 0) col.noalias() -= l.leftCols(j) * l.row(p).head(j).transpose();
        col /= std::sqrt(piv);
        l.col(j) = col;
        diag -= col.cwiseAbs2();
        diag(p) = 0.0;
        out.pivots.push_back(p);
    }
    // negative diagonal remainders below the threshold mean the Gram matrix
    // lost definiteness to round-off
    if (diag.minCoeff() < -1e-10 * tr) out.indefinite = true;
    out.factor = l.leftCols(j);
    return out;
}

/// Enrichment from the Gram matrix G_k = Z^{k} Z^{k}^T without forming the
/// residual unfolding.
inline Enrichment enrich_chol(const Matrix& head, const Matrix& tail_gram, Index rho) {
    Enrichment e;
    const Matrix hg = head * tail_gram;
    Matrix g = hg * head.transpose();
    g = 0.5 * (g + g.transpose()).eval();
    const double tr = g.trace();
    e.residual_norm = std::sqrt(std::max(tr, 0.0));
    if (!(tr > 0)) {
        e.basis = Matrix(head.rows(), 0);
        e.defect = 0.0;
        return e;
    }
    PivotedCholesky pc = pivoted_cholesky(g, rho);
    e.indefinite = pc.indefinite;
    if (pc.factor.cols() == 0) {
        e.basis = Matrix(head.rows(), 0);
        e.defect = 1.0;
        return e;
    }
    e.basis = linalg::qr_thin(pc.factor).q;
    const double rest = tr - pc.factor.squaredNorm();
    e.defect = std::sqrt(std::clamp(rest / tr, 0.0, 1.0));
    return e;
}

/// Persistent rank-rho residual approximant for ALS-based enrichment and its
/// partial contractions with y and A x (bond-indexed like SweepState).
struct AlsResidual {
    TTVector z;
    std::vector<Matrix> left_y, left_a, right_y, right_a;
    std::mt19937_64 rng;
    std::vector<std::string> notices;
};

namespace detail {

inline Matrix random_orthonormal(Index rows, Index cols, std::mt19937_64& rng) {
    std::normal_distribution<double> nd;
    Matrix m(rows, cols);
    for (Index j = 0; j < cols; ++j)
        for (Index i = 0; i < rows; ++i) m(i, j) = nd(rng);
    return linalg::qr_thin(m).q;
}

} // namespace detail

/// Random rank-rho train with orthonormal cores (ranks clipped to what the
/// mode sizes allow).
inline AlsResidual init_als_residual(const std::vector<Index>& sizes, Index rho, std::uint64_t seed) {
    AlsResidual s;
    s.rng.seed(seed);
    const Index d = static_cast<Index>(sizes.size());
    std::vector<Index> ranks(d + 1, rho);
    ranks[0] = ranks[d] = 1;
    ranks = TTVector::clip_ranks(sizes, ranks);
    std::vector<Core3> cores;
    for (Index k = 0; k < d; ++k) {
        // right-orthonormal: orthonormal rows of the r1 x (n r2) unfolding
        const Matrix q = detail::random_orthonormal(sizes[k] * ranks[k + 1], ranks[k], s.rng);
        cores.push_back(Core3::from_right(q.transpose(), sizes[k], ranks[k + 1]));
    }
    s.z = TTVector(std::move(cores));
    s.z.set_ortho(Ortho::right_from(1));
    return s;
}

/// Re-orthogonalizes z from the right and contracts it with the current
/// sweep-start x (cores T) and y.
inline void als_prepare_sweep(AlsResidual& s, const TTMatrix& a, const TTVector& y, const TTVector& x) {
    const Index d = x.dim();
    s.z = orthogonalize(s.z, Direction::right, 0);
    s.left_y.assign(d + 1, Matrix());
    s.left_a.assign(d + 1, Matrix());
    s.right_y.assign(d + 1, Matrix());
    s.right_a.assign(d + 1, Matrix());
    s.left_y[0] = s.left_a[0] = Matrix::Ones(1, 1);
    s.right_y[d] = s.right_a[d] = Matrix::Ones(1, 1);
    for (Index p = d - 1; p >= 1; --p) {
        s.right_y[p] = linalg::right_env_step(s.right_y[p + 1], s.z.core(p), y.core(p));
        s.right_a[p] =
            linalg::right_env_step(s.right_a[p + 1], s.z.core(p), linalg::apply_core(a.core(p), x.core(p)));
    }
}

/// Projection of z_k onto the right residual basis Z^{>k}.
inline Enrichment enrich_als(const AlsResidual& s, const Matrix& head, Index k, Index rho) {
    Enrichment e;
    const Matrix& ry = s.right_y[k + 1];
    const Matrix& ra = s.right_a[k + 1];
    Matrix tail(ry.cols() + ra.cols(), ry.rows());
    tail.topRows(ry.cols()) = ry.transpose();
    tail.bottomRows(ra.cols()) = ra.transpose();
    const Matrix proj = head * tail; // (r n) x rho_{k+1}
    const double pn = proj.norm();
    if (pn == 0.0) {
        e.basis = Matrix(head.rows(), 0);
        return e;
    }
    // keep the directions that carry weight; width capped by rho
    Eigen::BDCSVD<Matrix> svd(proj, Eigen::ComputeThinU);
    const Vector& sv = svd.singularValues();
    Index w = std::min<Index>(rho, sv.size());
    while (w > 0 && sv(w - 1) <= 1e-14 * sv(0)) --w;
    e.basis = svd.matrixU().leftCols(w);
    return e;
}

/// One ALS update of the residual core k: Z^(k) <- QR(Z_{!=k}^T (y - A u)).
/// `auk` is A^(k) applied to the solved core U^(k).
inline void als_update_core(AlsResidual& s, const Core3& yk, const Core3& auk, Index k) {
    const Index rz = s.z.core(k).r1();
    const Index n = yk.n();
    const Matrix& ry = s.right_y[k + 1];
    const Matrix& ra = s.right_a[k + 1];
    const Matrix ty = s.left_y[k] * yk.right();
    const Matrix ta = s.left_a[k] * auk.right();
    Matrix zk = ConstMatrixMap(ty.data(), rz * n, yk.r2()) * ry.transpose();
    zk.noalias() -= ConstMatrixMap(ta.data(), rz * n, auk.r2()) * ra.transpose();
    const Index rz2 = s.z.core(k).r2();
    Matrix q;
    if (zk.norm() == 0.0 || !std::isfinite(zk.norm())) {
        q = detail::random_orthonormal(rz * n, rz2, s.rng);
        s.notices.push_back("residual core " + std::to_string(k) + " vanished; reinitialized randomly");
    } else {
        q = linalg::qr_thin(zk).q;
    }
    s.z.set_core(k, Core3::from_left(q, rz, n));
}

/// Advances the left contractions past core k once the solution core k is final.
inline void als_advance_left(AlsResidual& s, const Core3& yk, const Core3& axk, Index k) {
    s.left_y[k + 1] = linalg::left_env_step(s.left_y[k], s.z.core(k), yk);
    s.left_a[k + 1] = linalg::left_env_step(s.left_a[k], s.z.core(k), axk);
}

} // namespace ttamen
