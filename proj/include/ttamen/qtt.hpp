#pragma once

#include <string>

#include "ttamen/algebra.hpp"
#include "ttamen/core.hpp"
#include "ttamen/linalg.hpp"
#include "ttamen/ortho.hpp"

namespace ttamen {

namespace detail {

/// Number of factors `base` in n, or -1 if n is not a power of base.
inline Index log_base(Index n, Index base) {
    Index l = 0;
    while (n > 1) {
        if (n % base != 0) return -1;
        n /= base;
        ++l;
    }
    return n == 1 ? l : -1;
}

/// Splits a vector core (r1, b*rest, r2) into (r1, b, s) and (s, rest, r2)
/// with the fast index i mod b going into the first core. Exact up to
/// round-off; singular values below eps-level are dropped.
inline std::pair<Core3, Core3> split_core(const Core3& c, Index b) {
    const Index rest = c.n() / b;
    ConstMatrixMap m(c.data().data(), c.r1() * b, rest * c.r2());
    const double abs_tol = 1e-15 * m.norm();
    auto svd = linalg::svd_truncated(m, abs_tol);
    Matrix sv = svd.s.asDiagonal() * svd.vt;
    return {Core3::from_left(svd.u, c.r1(), b), Core3::from_right(sv, rest, c.r2())};
}

} // namespace detail

/// Replaces every mode of size base^L by L modes of size base, least
/// significant digit first; the represented vector is unchanged. The result
/// is rounded at `tol`.
inline TTVector qtt_quantize(const TTVector& x, Index base = 2, double tol = 1e-14) {
    std::vector<Core3> out;
    for (Index k = 0; k < x.dim(); ++k) {
        const Index l = detail::log_base(x.core(k).n(), base);
        if (l < 0)
            throw SizeMismatch("qtt_quantize: mode size " + std::to_string(x.core(k).n()) +
                               " is not a power of " + std::to_string(base));
        Core3 cur = x.core(k);
        for (Index s = 0; s + 1 < l; ++s) {
            auto [head, tail] = detail::split_core(cur, base);
            out.push_back(std::move(head));
            cur = std::move(tail);
        }
        out.push_back(std::move(cur));
    }
    return round(TTVector(std::move(out)), tol);
}

/// Operator version: row and column mode of each core must be the same power
/// of the base; every new core carries one row digit and one column digit.
inline TTMatrix qtt_quantize(const TTMatrix& a, Index base = 2, double tol = 1e-14) {
    std::vector<Core3> out;
    std::vector<Index> rows, cols;
    for (Index k = 0; k < a.dim(); ++k) {
        const auto& c = a.core(k);
        const Index ln = detail::log_base(c.n(), base);
        const Index lm = detail::log_base(c.m(), base);
        if (ln < 0 || lm < 0 || ln != lm)
            throw SizeMismatch("qtt_quantize: operator mode " + std::to_string(k) + " (" +
                               std::to_string(c.n()) + "x" + std::to_string(c.m()) +
                               ") is not a square power of the base");
        Core4 cur = c;
        for (Index s = 0; s + 1 < ln; ++s) {
            const Index n = cur.n(), m = cur.m(), nr = n / base, mr = m / base;
            // reorder (b0, i0 + base*i', j0 + base*j', b1) into mode
            // (i0 + base*j0) + base^2 * (i' + nr*j')
            Core3 perm(cur.r1(), n * m, cur.r2());
            for (Index b1 = 0; b1 < cur.r2(); ++b1)
                for (Index j = 0; j < m; ++j)
                    for (Index i = 0; i < n; ++i)
                        for (Index b0 = 0; b0 < cur.r1(); ++b0) {
                            const Index lo = (i % base) + base * (j % base);
                            const Index hi = (i / base) + nr * (j / base);
                            perm(b0, lo + base * base * hi, b1) = cur(b0, i, j, b1);
                        }
            auto [head, tail] = detail::split_core(perm, base * base);
            out.push_back(std::move(head));
            rows.push_back(base);
            cols.push_back(base);
            cur = Core4(std::move(tail), nr, mr);
        }
        out.push_back(cur.flat());
        rows.push_back(cur.n());
        cols.push_back(cur.m());
    }
    TTVector flat = round(TTVector(std::move(out)), tol);
    return TTMatrix::from_flat(flat, rows, cols);
}

} // namespace ttamen
