#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ttamen/error.hpp"

namespace ttamen {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using MatrixMap = Eigen::Map<Matrix>;
using ConstMatrixMap = Eigen::Map<const Matrix>;

/// Default cap on the number of entries of a dense expansion (vectors and matrices).
inline constexpr std::size_t kDefaultDenseCap = std::size_t{1} << 24;

enum class Endian { little, big };

/// Zero-based multi-index (i_1, ..., i_d).
using MultiIndex = std::vector<Index>;

/// Flat position of a multi-index. Little-endian puts i_1 fastest.
inline Index flat_index(std::span<const Index> mi, std::span<const Index> sizes,
                        Endian endian = Endian::little) {
    if (mi.size() != sizes.size())
        throw SizeMismatch("flat_index: multi-index has " + std::to_string(mi.size()) +
                           " entries, expected " + std::to_string(sizes.size()));
    const auto d = static_cast<Index>(sizes.size());
    Index f = 0;
    for (Index s = 0; s < d; ++s) {
        const Index k = endian == Endian::little ? d - 1 - s : s;
        if (mi[k] < 0 || mi[k] >= sizes[k])
            throw BoundsError("flat_index: index " + std::to_string(mi[k]) + " out of range [0," +
                              std::to_string(sizes[k]) + ") in mode " + std::to_string(k));
        f = f * sizes[k] + mi[k];
    }
    return f;
}

inline MultiIndex multi_index(Index f, std::span<const Index> sizes,
                              Endian endian = Endian::little) {
    const auto d = static_cast<Index>(sizes.size());
    Index total = 1;
    for (auto n : sizes) total *= n;
    if (f < 0 || f >= total)
        throw BoundsError("multi_index: flat index " + std::to_string(f) + " out of range [0," +
                          std::to_string(total) + ")");
    MultiIndex mi(sizes.size());
    for (Index s = 0; s < d; ++s) {
        const Index k = endian == Endian::little ? s : d - 1 - s;
        mi[k] = f % sizes[k];
        f /= sizes[k];
    }
    return mi;
}

/// Order-3 tensor train core with entries (a, i, b) stored at a + r1*(i + n*b).
///
/// The left unfolding is the (r1*n) x r2 column-major matrix over the same
/// storage and the right unfolding is r1 x (n*r2), so both are free reshapes.
class Core3 {
public:
    Core3() = default;
    Core3(Index r1, Index n, Index r2) : r1_(r1), n_(n), r2_(r2), data_(Vector::Zero(r1 * n * r2)) {}

    static Core3 from_left(const Eigen::Ref<const Matrix>& m, Index r1, Index n) {
        if (m.rows() != r1 * n) throw SizeMismatch("Core3::from_left: row count mismatch");
        Core3 c(r1, n, m.cols());
        c.left() = m;
        return c;
    }
    static Core3 from_right(const Eigen::Ref<const Matrix>& m, Index n, Index r2) {
        if (m.cols() != n * r2) throw SizeMismatch("Core3::from_right: column count mismatch");
        Core3 c(m.rows(), n, r2);
        c.right() = m;
        return c;
    }

    Index r1() const { return r1_; }
    Index n() const { return n_; }
    Index r2() const { return r2_; }
    Index size() const { return r1_ * n_ * r2_; }

    double& operator()(Index a, Index i, Index b) { return data_[a + r1_ * (i + n_ * b)]; }
    double operator()(Index a, Index i, Index b) const { return data_[a + r1_ * (i + n_ * b)]; }

    MatrixMap left() { return {data_.data(), r1_ * n_, r2_}; }
    ConstMatrixMap left() const { return {data_.data(), r1_ * n_, r2_}; }
    MatrixMap right() { return {data_.data(), r1_, n_ * r2_}; }
    ConstMatrixMap right() const { return {data_.data(), r1_, n_ * r2_}; }

    /// r1 x r2 matrix slice for mode index i.
    Matrix slice(Index i) const {
        using Stride = Eigen::OuterStride<>;
        return Eigen::Map<const Matrix, 0, Stride>(data_.data() + r1_ * i, r1_, r2_,
                                                   Stride(r1_ * n_));
    }

    Vector& data() { return data_; }
    const Vector& data() const { return data_; }

    double norm() const { return data_.norm(); }

private:
    Index r1_ = 0;
    Index n_ = 0;
    Index r2_ = 0;
    Vector data_;
};

/// Which cores of a train are known to be orthonormal.
///
/// Cores with index < left are left-orthonormal (orthonormal columns of the
/// left unfolding); cores with index >= right are right-orthonormal.
struct Ortho {
    Index left = 0;
    Index right = 0;

    static Ortho none(Index d) { return {0, d}; }
    static Ortho left_upto(Index p, Index d) { return {p + 1, d}; }
    static Ortho right_from(Index p) { return {0, p}; }

    bool operator==(const Ortho&) const = default;
};

/// Vector of length n_1*...*n_d in tensor train format.
class TTVector {
public:
    TTVector() = default;
    explicit TTVector(std::vector<Core3> cores) : cores_(std::move(cores)) {
        validate();
        ortho_ = Ortho::none(dim());
    }

    static TTVector zeros(std::span<const Index> sizes) {
        std::vector<Core3> cores;
        for (auto n : sizes) cores.emplace_back(1, n, 1);
        return TTVector(std::move(cores));
    }
    static TTVector ones(std::span<const Index> sizes) {
        std::vector<Core3> cores;
        for (auto n : sizes) {
            Core3 c(1, n, 1);
            c.data().setOnes();
            cores.push_back(std::move(c));
        }
        return TTVector(std::move(cores));
    }

    /// Gaussian cores with the requested interior ranks, clipped to the
    /// largest ranks the mode sizes allow.
    template <class Rng>
    static TTVector random(std::span<const Index> sizes, Index rank, Rng& rng) {
        const auto d = static_cast<Index>(sizes.size());
        std::vector<Index> ranks(d + 1, 1);
        for (Index k = 1; k < d; ++k) ranks[k] = rank;
        return random(sizes, clip_ranks(sizes, ranks), rng);
    }
    template <class Rng>
    static TTVector random(std::span<const Index> sizes, const std::vector<Index>& ranks, Rng& rng) {
        std::normal_distribution<double> dist;
        std::vector<Core3> cores;
        for (std::size_t k = 0; k < sizes.size(); ++k) {
            Core3 c(ranks[k], sizes[k], ranks[k + 1]);
            for (Index t = 0; t < c.size(); ++t) c.data()[t] = dist(rng);
            cores.push_back(std::move(c));
        }
        return TTVector(std::move(cores));
    }

    static std::vector<Index> clip_ranks(std::span<const Index> sizes, std::vector<Index> ranks) {
        const auto d = static_cast<Index>(sizes.size());
        double left = 1;
        for (Index k = 1; k < d; ++k) {
            left *= static_cast<double>(sizes[k - 1]);
            ranks[k] = std::min<double>(static_cast<double>(ranks[k]), left);
        }
        double right = 1;
        for (Index k = d - 1; k >= 1; --k) {
            right *= static_cast<double>(sizes[k]);
            ranks[k] = std::min<double>(static_cast<double>(ranks[k]), right);
        }
        return ranks;
    }

    Index dim() const { return static_cast<Index>(cores_.size()); }

    const std::vector<Core3>& cores() const { return cores_; }
    const Core3& core(Index k) const { return cores_[k]; }

    /// Mutable access drops orthogonality knowledge; callers that preserve
    /// it restore the tag with set_ortho.
    Core3& core(Index k) {
        ortho_ = Ortho::none(dim());
        return cores_[k];
    }
    void set_core(Index k, Core3 c) {
        ortho_ = Ortho::none(dim());
        cores_[k] = std::move(c);
    }

    std::vector<Index> mode_sizes() const {
        std::vector<Index> s;
        for (const auto& c : cores_) s.push_back(c.n());
        return s;
    }
    std::vector<Index> ranks() const {
        std::vector<Index> r;
        if (cores_.empty()) return r;
        for (const auto& c : cores_) r.push_back(c.r1());
        r.push_back(cores_.back().r2());
        return r;
    }
    Index max_rank() const {
        Index m = 1;
        for (const auto& c : cores_) m = std::max({m, c.r1(), c.r2()});
        return m;
    }
    /// Product of mode sizes as a double (overflow-safe for reporting).
    double full_size() const {
        double s = 1;
        for (const auto& c : cores_) s *= static_cast<double>(c.n());
        return s;
    }
    Index storage() const {
        Index s = 0;
        for (const auto& c : cores_) s += c.size();
        return s;
    }

    const Ortho& ortho() const { return ortho_; }
    void set_ortho(Ortho o) { ortho_ = o; }

    void validate() const {
        if (cores_.empty()) throw SizeMismatch("TTVector: no cores");
        if (cores_.front().r1() != 1 || cores_.back().r2() != 1)
            throw SizeMismatch("TTVector: boundary ranks must be 1");
        for (std::size_t k = 0; k + 1 < cores_.size(); ++k)
            if (cores_[k].r2() != cores_[k + 1].r1())
                throw SizeMismatch("TTVector: rank mismatch between cores " + std::to_string(k) +
                                   " and " + std::to_string(k + 1));
        for (const auto& c : cores_)
            if (c.n() <= 0) throw SizeMismatch("TTVector: mode sizes must be positive");
    }

private:
    std::vector<Core3> cores_;
    Ortho ortho_;
};

/// Order-4 operator core with entries (b0, i, j, b1) stored at
/// b0 + R1*(i + n*(j + m*b1)). Viewed as a Core3 its mode index is i + n*j.
class Core4 {
public:
    Core4() = default;
    Core4(Index r1, Index n, Index m, Index r2) : n_(n), m_(m), flat_(r1, n * m, r2) {}
    Core4(Core3 flat, Index n, Index m) : n_(n), m_(m), flat_(std::move(flat)) {
        if (flat_.n() != n * m) throw SizeMismatch("Core4: mode size is not n*m");
    }

    Index r1() const { return flat_.r1(); }
    Index n() const { return n_; }
    Index m() const { return m_; }
    Index r2() const { return flat_.r2(); }

    double& operator()(Index b0, Index i, Index j, Index b1) { return flat_(b0, i + n_ * j, b1); }
    double operator()(Index b0, Index i, Index j, Index b1) const { return flat_(b0, i + n_ * j, b1); }

    /// n x m block for the rank pair (b0, b1).
    Eigen::Map<const Matrix, 0, Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>> block(Index b0,
                                                                                      Index b1) const {
        using S = Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>;
        const Index r = flat_.r1();
        return {flat_.data().data() + b0 + r * n_ * m_ * b1, n_, m_, S(r * n_, r)};
    }
    void set_block(Index b0, Index b1, const Eigen::Ref<const Matrix>& blk) {
        for (Index j = 0; j < m_; ++j)
            for (Index i = 0; i < n_; ++i) (*this)(b0, i, j, b1) = blk(i, j);
    }

    const Core3& flat() const { return flat_; }
    Core3& flat() { return flat_; }

    Core4 transposed() const {
        Core4 t(r1(), m_, n_, r2());
        for (Index b1 = 0; b1 < r2(); ++b1)
            for (Index j = 0; j < m_; ++j)
                for (Index i = 0; i < n_; ++i)
                    for (Index b0 = 0; b0 < r1(); ++b0) t(b0, j, i, b1) = (*this)(b0, i, j, b1);
        return t;
    }

private:
    Index n_ = 0;
    Index m_ = 0;
    Core3 flat_;
};

/// Kronecker-structured operator in tensor train (MPO) format.
class TTMatrix {
public:
    TTMatrix() = default;
    explicit TTMatrix(std::vector<Core4> cores) : cores_(std::move(cores)) { validate(); }

    /// Interprets a train whose k-th mode has size rows[k]*cols[k].
    static TTMatrix from_flat(const TTVector& flat, std::span<const Index> rows,
                              std::span<const Index> cols) {
        if (static_cast<std::size_t>(flat.dim()) != rows.size() || rows.size() != cols.size())
            throw SizeMismatch("TTMatrix::from_flat: dimension mismatch");
        std::vector<Core4> cores;
        for (Index k = 0; k < flat.dim(); ++k) cores.emplace_back(flat.core(k), rows[k], cols[k]);
        return TTMatrix(std::move(cores));
    }

    static TTMatrix identity(std::span<const Index> sizes) {
        std::vector<Core4> cores;
        for (auto n : sizes) {
            Core4 c(1, n, n, 1);
            for (Index i = 0; i < n; ++i) c(0, i, i, 0) = 1.0;
            cores.push_back(std::move(c));
        }
        return TTMatrix(std::move(cores));
    }

    /// Rank-one operator M_1 (x) ... (x) M_d acting mode-wise.
    static TTMatrix kron(const std::vector<Matrix>& factors) {
        std::vector<Core4> cores;
        for (const auto& f : factors) {
            Core4 c(1, f.rows(), f.cols(), 1);
            c.set_block(0, 0, f);
            cores.push_back(std::move(c));
        }
        return TTMatrix(std::move(cores));
    }

    Index dim() const { return static_cast<Index>(cores_.size()); }
    const std::vector<Core4>& cores() const { return cores_; }
    const Core4& core(Index k) const { return cores_[k]; }
    Core4& core(Index k) { return cores_[k]; }

    std::vector<Index> row_sizes() const {
        std::vector<Index> s;
        for (const auto& c : cores_) s.push_back(c.n());
        return s;
    }
    std::vector<Index> col_sizes() const {
        std::vector<Index> s;
        for (const auto& c : cores_) s.push_back(c.m());
        return s;
    }
    std::vector<Index> ranks() const {
        std::vector<Index> r;
        for (const auto& c : cores_) r.push_back(c.r1());
        r.push_back(cores_.back().r2());
        return r;
    }
    Index max_rank() const {
        Index m = 1;
        for (const auto& c : cores_) m = std::max({m, c.r1(), c.r2()});
        return m;
    }

    TTVector flatten() const {
        std::vector<Core3> cores;
        for (const auto& c : cores_) cores.push_back(c.flat());
        return TTVector(std::move(cores));
    }

    TTMatrix transposed() const {
        std::vector<Core4> cores;
        for (const auto& c : cores_) cores.push_back(c.transposed());
        return TTMatrix(std::move(cores));
    }

    void validate() const {
        if (cores_.empty()) throw SizeMismatch("TTMatrix: no cores");
        if (cores_.front().r1() != 1 || cores_.back().r2() != 1)
            throw SizeMismatch("TTMatrix: boundary ranks must be 1");
        for (std::size_t k = 0; k + 1 < cores_.size(); ++k)
            if (cores_[k].r2() != cores_[k + 1].r1())
                throw SizeMismatch("TTMatrix: rank mismatch between cores " + std::to_string(k) +
                                   " and " + std::to_string(k + 1));
    }

private:
    std::vector<Core4> cores_;
};

namespace detail {

inline double product(std::span<const Index> s) {
    double p = 1;
    for (auto v : s) p *= static_cast<double>(v);
    return p;
}

inline void check_cap(double entries, std::size_t cap, const char* what) {
    if (entries > static_cast<double>(cap))
        throw DenseCapExceeded(std::string(what) + ": dense expansion with " +
                               std::to_string(static_cast<long long>(entries)) +
                               " entries exceeds the cap of " + std::to_string(cap));
}

} // namespace detail

/// Single entry x(i_1, ..., i_d) as the product of core slices.
inline double eval_entry(const TTVector& x, std::span<const Index> mi) {
    if (static_cast<Index>(mi.size()) != x.dim())
        throw SizeMismatch("eval_entry: multi-index length does not match dimension");
    Eigen::RowVectorXd row = Eigen::RowVectorXd::Ones(1);
    for (Index k = 0; k < x.dim(); ++k) {
        const auto& c = x.core(k);
        if (mi[k] < 0 || mi[k] >= c.n())
            throw BoundsError("eval_entry: index " + std::to_string(mi[k]) + " out of range in mode " +
                              std::to_string(k));
        row = row * c.slice(mi[k]);
    }
    return row(0);
}

/// Interface matrix of the first `bond` cores, (n_1...n_bond) x r_bond.
inline Matrix left_interface(const TTVector& x, Index bond, std::size_t cap = kDefaultDenseCap) {
    if (bond < 0 || bond > x.dim()) throw BoundsError("left_interface: bond out of range");
    double rows = 1;
    for (Index k = 0; k < bond; ++k) rows *= static_cast<double>(x.core(k).n());
    const double r = bond == 0 ? 1.0 : static_cast<double>(x.core(bond - 1).r2());
    detail::check_cap(rows * r, cap, "left_interface");
    Matrix m = Matrix::Ones(1, 1);
    for (Index k = 0; k < bond; ++k) {
        const auto& c = x.core(k);
        Matrix next = m * c.right(); // N x (n * r2), column-major equals (N*n) x r2
        m = MatrixMap(next.data(), m.rows() * c.n(), c.r2());
    }
    return m;
}

/// Interface matrix of the cores after `bond`, r_bond x (n_{bond+1}...n_d).
inline Matrix right_interface(const TTVector& x, Index bond, std::size_t cap = kDefaultDenseCap) {
    if (bond < 0 || bond > x.dim()) throw BoundsError("right_interface: bond out of range");
    double cols = 1;
    for (Index k = bond; k < x.dim(); ++k) cols *= static_cast<double>(x.core(k).n());
    const double r = bond == x.dim() ? 1.0 : static_cast<double>(x.core(bond).r1());
    detail::check_cap(cols * r, cap, "right_interface");
    Matrix m = Matrix::Ones(1, 1);
    for (Index k = x.dim() - 1; k >= bond; --k) {
        const auto& c = x.core(k);
        // (r1 * n) x M
        Matrix next = c.left() * m;
        // rows a + r1*i, cols rest -> want r1 x (i + n*rest)
        m = MatrixMap(next.data(), c.r1(), c.n() * m.cols());
    }
    return m;
}

enum class Side { leq, gt };

/// X^{<=k} or X^{>k} for bond k in [1, d].
inline Matrix interface_matrix(const TTVector& x, Index k, Side side, std::size_t cap = kDefaultDenseCap) {
    if (k < 1 || k > x.dim()) throw BoundsError("interface_matrix: position must lie in [1, d]");
    return side == Side::leq ? left_interface(x, k, cap) : right_interface(x, k, cap);
}

inline Vector to_dense(const TTVector& x, std::size_t cap = kDefaultDenseCap) {
    Matrix m = left_interface(x, x.dim(), cap);
    return Eigen::Map<Vector>(m.data(), m.size());
}

/// Dense operator with little-endian row and column multi-indices.
inline Matrix to_dense(const TTMatrix& a, std::size_t cap = kDefaultDenseCap) {
    const auto rows = a.row_sizes();
    const auto cols = a.col_sizes();
    const double nr = detail::product(rows);
    const double nc = detail::product(cols);
    detail::check_cap(nr * nc, cap, "to_dense(TTMatrix)");
    const Vector flat = to_dense(a.flatten(), cap);
    Matrix out(static_cast<Index>(nr), static_cast<Index>(nc));
    const auto d = a.dim();
    std::vector<Index> fs(d);
    for (Index k = 0; k < d; ++k) fs[k] = rows[k] * cols[k];
    for (Index f = 0; f < flat.size(); ++f) {
        Index rem = f, row = 0, col = 0, rs = 1, cs = 1;
        for (Index k = 0; k < d; ++k) {
            const Index t = rem % fs[k];
            rem /= fs[k];
            row += (t % rows[k]) * rs;
            col += (t / rows[k]) * cs;
            rs *= rows[k];
            cs *= cols[k];
        }
        out(row, col) = flat[f];
    }
    return out;
}

/// Left-orthonormality defect of core k: ||Q^T Q - I||_max.
inline double left_ortho_defect(const Core3& c) {
    const Matrix g = c.left().transpose() * c.left();
    return (g - Matrix::Identity(g.rows(), g.cols())).cwiseAbs().maxCoeff();
}
inline double right_ortho_defect(const Core3& c) {
    const Matrix g = c.right() * c.right().transpose();
    return (g - Matrix::Identity(g.rows(), g.cols())).cwiseAbs().maxCoeff();
}

/// Checks the orthogonality claims recorded in x.ortho().
inline bool ortho_tag_holds(const TTVector& x, double tol = 1e-12) {
    for (Index k = 0; k < x.ortho().left; ++k)
        if (left_ortho_defect(x.core(k)) > tol) return false;
    for (Index k = x.ortho().right; k < x.dim(); ++k)
        if (right_ortho_defect(x.core(k)) > tol) return false;
    return true;
}

} // namespace ttamen
