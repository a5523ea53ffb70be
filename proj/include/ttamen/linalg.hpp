#pragma once

#include <cmath>
#include <limits>
#include <utility>

#include <Eigen/Dense>

#include "ttamen/core.hpp"

namespace ttamen::linalg {

struct QR {
    Matrix q; // rows x k, orthonormal columns
    Matrix r; // k x cols
};

/// Thin Householder QR with k = min(rows, cols).
inline QR qr_thin(const Eigen::Ref<const Matrix>& m) {
    const Index k = std::min(m.rows(), m.cols());
    Eigen::HouseholderQR<Matrix> qr(m);
    QR out;
    out.q = qr.householderQ() * Matrix::Identity(m.rows(), k);
    out.r = qr.matrixQR().topRows(k).template triangularView<Eigen::Upper>();
    return out;
}

struct LQ {
    Matrix l; // rows x k
    Matrix q; // k x cols, orthonormal rows
};

inline LQ lq_thin(const Eigen::Ref<const Matrix>& m) {
    QR t = qr_thin(m.transpose());
    return {t.r.transpose(), t.q.transpose()};
}

struct TruncatedSVD {
    Matrix u;
    Vector s;
    Matrix vt;
    double discarded = 0.0; // Frobenius norm of the dropped part
};

/// Smallest rank whose discarded tail has Frobenius norm <= abs_tol, capped by max_rank.
inline Index truncation_rank(const Vector& s, double abs_tol, Index max_rank) {
    Index r = s.size();
    double tail = 0.0;
    while (r > 1) {
        const double next = tail + s[r - 1] * s[r - 1];
        if (std::sqrt(next) > abs_tol) break;
        tail = next;
        --r;
    }
    if (max_rank > 0) r = std::min(r, max_rank);
    return std::max<Index>(r, std::min<Index>(1, s.size()));
}

inline TruncatedSVD svd_truncated(const Eigen::Ref<const Matrix>& m, double abs_tol, Index max_rank = 0) {
    Eigen::BDCSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vector& s = svd.singularValues();
    const Index r = truncation_rank(s, abs_tol, max_rank);
    TruncatedSVD out;
    out.u = svd.matrixU().leftCols(r);
    out.s = s.head(r);
    out.vt = svd.matrixV().leftCols(r).transpose();
    out.discarded = s.size() > r ? s.tail(s.size() - r).norm() : 0.0;
    return out;
}

/// Contraction of a left environment with one more pair of cores:
/// out(b', b) = sum_{a', a, i} bra(a', i, b') phi(a', a) ket(a, i, b).
inline Matrix left_env_step(const Matrix& phi, const Core3& bra, const Core3& ket) {
    const Matrix t = phi * ket.right(); // p x (n * q2)
    ConstMatrixMap t2(t.data(), bra.r1() * bra.n(), ket.r2());
    return bra.left().transpose() * t2;
}

/// out(a', a) = sum_{b', b, i} bra(a', i, b') phi(b', b) ket(a, i, b).
inline Matrix right_env_step(const Matrix& phi, const Core3& bra, const Core3& ket) {
    const Matrix t = ket.left() * phi.transpose(); // (q * n) x p2
    ConstMatrixMap t2(t.data(), ket.r1(), ket.n() * bra.r2());
    return bra.right() * t2.transpose();
}

/// Core of the operator-vector product: W(a + r1*b0, i, c + r2*b1) =
/// sum_j A(b0, i, j, b1) X(a, j, c). The vector rank varies fastest.
inline Core3 apply_core(const Core4& a, const Core3& x) {
    if (a.m() != x.n()) throw SizeMismatch("apply_core: column size of operator core does not match");
    const Index r1 = x.r1(), r2 = x.r2(), n = a.n(), m = a.m();
    const Index R1 = a.r1(), R2 = a.r2();
    // xp(j, a + r1*c) = X(a, j, c)
    Matrix xp(m, r1 * r2);
    for (Index c = 0; c < r2; ++c)
        for (Index j = 0; j < m; ++j)
            for (Index aa = 0; aa < r1; ++aa) xp(j, aa + r1 * c) = x(aa, j, c);
    Core3 w(R1 * r1, n, R2 * r2);
    Matrix prod(n, r1 * r2);
    for (Index b1 = 0; b1 < R2; ++b1)
        for (Index b0 = 0; b0 < R1; ++b0) {
            const auto blk = a.block(b0, b1);
            if (blk.cwiseAbs().maxCoeff() == 0.0) continue;
            prod.noalias() = blk * xp;
            for (Index c = 0; c < r2; ++c)
                for (Index i = 0; i < n; ++i)
                    for (Index aa = 0; aa < r1; ++aa) w(aa + r1 * b0, i, c + r2 * b1) = prod(i, aa + r1 * c);
        }
    return w;
}

/// Contraction of two neighbouring operator cores into one with merged modes
/// (row index i + n*i', column index j + m*j').
inline Core4 merge_cores(const Core4& a, const Core4& b) {
    if (a.r2() != b.r1()) throw SizeMismatch("merge_cores: rank mismatch");
    const Index n = a.n() * b.n(), m = a.m() * b.m();
    Core4 out(a.r1(), n, m, b.r2());
    for (Index b2 = 0; b2 < b.r2(); ++b2)
        for (Index b1 = 0; b1 < a.r2(); ++b1)
            for (Index b0 = 0; b0 < a.r1(); ++b0) {
                const Matrix ab = a.block(b0, b1);
                const Matrix bb = b.block(b1, b2);
                if (ab.cwiseAbs().maxCoeff() == 0.0 || bb.cwiseAbs().maxCoeff() == 0.0) continue;
                for (Index j2 = 0; j2 < b.m(); ++j2)
                    for (Index j1 = 0; j1 < a.m(); ++j1)
                        for (Index i2 = 0; i2 < b.n(); ++i2)
                            for (Index i1 = 0; i1 < a.n(); ++i1)
                                out(b0, i1 + a.n() * i2, j1 + a.m() * j2, b2) += ab(i1, j1) * bb(i2, j2);
            }
    return out;
}

/// Contraction of two neighbouring vector cores, mode index i + n*i'.
inline Core3 merge_cores(const Core3& a, const Core3& b) {
    const Matrix m = a.left() * b.right(); // (r1 n) x (n' r2)
    Core3 out(a.r1(), a.n() * b.n(), b.r2());
    out.data() = Eigen::Map<const Vector>(m.data(), m.size());
    return out;
}

/// Principal angles (largest, radians) between the column spans of two
/// orthonormal matrices.
inline double max_principal_angle(const Matrix& u, const Matrix& v) {
    const Matrix c = u.transpose() * v;
    Eigen::JacobiSVD<Matrix> svd(c);
    const double smin = svd.singularValues().size() ? svd.singularValues().minCoeff() : 0.0;
    // sin of the largest angle from the projection residual for accuracy at small angles
    const Matrix res = v - u * c;
    Eigen::JacobiSVD<Matrix> svd2(res);
    const double smax = svd2.singularValues().size() ? svd2.singularValues().maxCoeff() : 0.0;
    return std::atan2(smax, smin);
}

} // namespace ttamen::linalg
