#pragma once

#include <vector>

#include <unsupported/Eigen/KroneckerProduct>

#include "ttamen/algebra.hpp"
#include "ttamen/core.hpp"
#include "ttamen/linalg.hpp"

namespace ttamen {

/// Partial contractions of the solution frame with the operator and the
/// right-hand side. All vectors are indexed by bond k = 0..d:
///   left_op[k]   r_k x (R_k r_k)  X^{<k}^T A X^{<k}   (ket rank fastest)
///   right_op[k]  r_k x (R_k r_k)  X^{>=k} A X^{>=k} contracted over the modes
///   left_rhs[k]  r_k x r_k(y)
///   right_rhs[k] r_k x r_k(y)
/// The boundary environments left_*[0] and right_*[d] are 1x1 ones.
struct SweepState {
    std::vector<Matrix> left_op;
    std::vector<Matrix> right_op;
    std::vector<Matrix> left_rhs;
    std::vector<Matrix> right_rhs;
    Index position = 0;
};

inline void check_system(const TTMatrix& a, const TTVector& y, const TTVector& x) {
    if (a.dim() != x.dim() || y.dim() != x.dim()) throw SizeMismatch("solver: dimension mismatch");
    if (a.col_sizes() != x.mode_sizes()) throw SizeMismatch("solver: operator columns do not match x");
    if (a.row_sizes() != y.mode_sizes()) throw SizeMismatch("solver: operator rows do not match y");
    if (a.row_sizes() != a.col_sizes()) throw SizeMismatch("solver: operator must be square");
}

/// Moves the left environments from bond k to bond k+1 using core k of x.
inline void advance_left(SweepState& s, const TTMatrix& a, const TTVector& y, const TTVector& x, Index k) {
    const Core3 ax = linalg::apply_core(a.core(k), x.core(k));
    s.left_op[k + 1] = linalg::left_env_step(s.left_op[k], x.core(k), ax);
    s.left_rhs[k + 1] = linalg::left_env_step(s.left_rhs[k], x.core(k), y.core(k));
}

/// Moves the right environments from bond k+1 to bond k using core k of x.
inline void advance_right(SweepState& s, const TTMatrix& a, const TTVector& y, const TTVector& x, Index k) {
    const Core3 ax = linalg::apply_core(a.core(k), x.core(k));
    s.right_op[k] = linalg::right_env_step(s.right_op[k + 1], x.core(k), ax);
    s.right_rhs[k] = linalg::right_env_step(s.right_rhs[k + 1], x.core(k), y.core(k));
}

/// Fresh environments for a left-to-right sweep: all right environments
/// from the current cores, left ones reset to the boundary.
inline SweepState build_environments(const TTMatrix& a, const TTVector& y, const TTVector& x) {
    check_system(a, y, x);
    const Index d = x.dim();
    SweepState s;
    s.left_op.assign(d + 1, Matrix());
    s.right_op.assign(d + 1, Matrix());
    s.left_rhs.assign(d + 1, Matrix());
    s.right_rhs.assign(d + 1, Matrix());
    s.left_op[0] = s.left_rhs[0] = Matrix::Ones(1, 1);
    s.right_op[d] = s.right_rhs[d] = Matrix::Ones(1, 1);
    for (Index k = d - 1; k >= 1; --k) advance_right(s, a, y, x, k);
    s.position = 0;
    return s;
}

/// The projected operator B = X_{!=k}^T A X_{!=k} for one (possibly merged)
/// core, applied matrix-free or expanded densely. Unknowns are ordered like
/// core storage: a + r1*(i + n*b).
class LocalOperator {
public:
    LocalOperator(Matrix left, Core4 op, Matrix right)
        : left_(std::move(left)), op_(std::move(op)), right_(std::move(right)) {
        r1_ = left_.rows();
        r2_ = right_.rows();
        if (left_.cols() != op_.r1() * r1_ || right_.cols() != op_.r2() * r2_)
            throw SizeMismatch("LocalOperator: environment and operator ranks differ");
    }

    Index r1() const { return r1_; }
    Index n() const { return op_.n(); }
    Index r2() const { return r2_; }
    Index size() const { return r1_ * op_.n() * r2_; }

    Vector apply(const Vector& u) const {
        Core3 uc(r1_, op_.m(), r2_);
        uc.data() = u;
        const Core3 au = linalg::apply_core(op_, uc);
        const Matrix t = left_ * au.right(); // r1 x (n * R2 r2)
        ConstMatrixMap tm(t.data(), r1_ * op_.n(), au.r2());
        const Matrix out = tm * right_.transpose();
        return Eigen::Map<const Vector>(out.data(), out.size());
    }

    Matrix dense() const {
        const Index sz = size();
        Matrix b = Matrix::Zero(sz, sz);
        for (Index b1 = 0; b1 < op_.r2(); ++b1) {
            const Matrix rb = right_.middleCols(b1 * r2_, r2_);
            if (rb.cwiseAbs().maxCoeff() == 0.0) continue;
            for (Index b0 = 0; b0 < op_.r1(); ++b0) {
                const Matrix ab = op_.block(b0, b1);
                if (ab.cwiseAbs().maxCoeff() == 0.0) continue;
                const Matrix lb = left_.middleCols(b0 * r1_, r1_);
                b += Eigen::kroneckerProduct(rb, Eigen::kroneckerProduct(ab, lb).eval()).eval();
            }
        }
        return b;
    }

private:
    Matrix left_;
    Core4 op_;
    Matrix right_;
    Index r1_ = 0;
    Index r2_ = 0;
};

inline LocalOperator local_operator(const SweepState& s, const TTMatrix& a, Index k) {
    return LocalOperator(s.left_op[k], a.core(k), s.right_op[k + 1]);
}

/// X_{!=k}^T y for an arbitrary (possibly merged) right-hand side core.
inline Vector local_rhs(const Matrix& left_rhs, const Core3& ycore, const Matrix& right_rhs) {
    const Matrix t = left_rhs * ycore.right();
    ConstMatrixMap tm(t.data(), left_rhs.rows() * ycore.n(), ycore.r2());
    const Matrix out = tm * right_rhs.transpose();
    return Eigen::Map<const Vector>(out.data(), out.size());
}

inline Vector local_rhs(const SweepState& s, const TTVector& y, Index k) {
    return local_rhs(s.left_rhs[k], y.core(k), s.right_rhs[k + 1]);
}

struct LocalSystem {
    Matrix matrix;
    Vector rhs;
};

/// Dense local system at core k. Throws DenseCapExceeded when the number of
/// unknowns is above `cap`, in which case the matrix-free path is required.
inline LocalSystem assemble_local(const SweepState& s, const TTMatrix& a, const TTVector& y, Index k,
                                  Index cap = 1500) {
    LocalOperator op = local_operator(s, a, k);
    if (op.size() > cap)
        throw DenseCapExceeded("assemble_local: " + std::to_string(op.size()) +
                               " unknowns exceed the dense cap of " + std::to_string(cap));
    return {op.dense(), local_rhs(s, y, k)};
}

} // namespace ttamen
