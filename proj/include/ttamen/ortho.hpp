#pragma once

#include <cmath>
#include <limits>
#include <optional>

#include "ttamen/core.hpp"
#include "ttamen/linalg.hpp"

namespace ttamen {

enum class Direction { left, right };

namespace detail {

/// QR of core k, R factor pushed into core k+1. Ranks may shrink to r1*n.
inline void left_qr_step(std::vector<Core3>& cores, Index k) {
    auto qr = linalg::qr_thin(cores[k].left());
    const Index r1 = cores[k].r1(), n = cores[k].n();
    Matrix next = qr.r * cores[k + 1].right();
    const Index n2 = cores[k + 1].n(), r3 = cores[k + 1].r2();
    cores[k] = Core3::from_left(qr.q, r1, n);
    cores[k + 1] = Core3::from_right(next, n2, r3);
}

/// LQ of core k, L factor pushed into core k-1.
inline void right_qr_step(std::vector<Core3>& cores, Index k) {
    auto lq = linalg::lq_thin(cores[k].right());
    const Index n = cores[k].n(), r2 = cores[k].r2();
    Matrix prev = cores[k - 1].left() * lq.l;
    const Index r0 = cores[k - 1].r1(), n0 = cores[k - 1].n();
    cores[k] = Core3::from_right(lq.q, n, r2);
    cores[k - 1] = Core3::from_left(prev, r0, n0);
}

} // namespace detail

/// Makes every core before `pivot` left-orthonormal (direction left) or every
/// core after `pivot` right-orthonormal (direction right); the remaining
/// factor ends up in the pivot core. Cores already known to be orthonormal are
/// skipped.
inline TTVector orthogonalize(TTVector x, Direction direction, Index pivot) {
    const Index d = x.dim();
    if (pivot < 0 || pivot >= d) throw BoundsError("orthogonalize: pivot out of range");
    Ortho tag = x.ortho();
    std::vector<Core3> cores = x.cores();
    if (direction == Direction::left) {
        for (Index k = std::min(tag.left, pivot); k < pivot; ++k) detail::left_qr_step(cores, k);
        // the pivot absorbed factors; its right neighbours are untouched
        tag = {pivot, std::max(tag.right, pivot + 1)};
        if (tag.right > d) tag.right = d;
    } else {
        for (Index k = std::max(tag.right, pivot + 1) - 1; k > pivot; --k) detail::right_qr_step(cores, k);
        tag = {std::min(tag.left, pivot), pivot + 1};
    }
    TTVector out(std::move(cores));
    out.set_ortho(tag);
    return out;
}

/// SVD-based rounding with relative Frobenius accuracy tol. The output has
/// right-orthonormal cores 2..d.
inline TTVector round(const TTVector& x, double tol, std::optional<Index> max_rank = std::nullopt) {
    if (tol < 0) throw Error("round: tolerance must be non-negative");
    const Index d = x.dim();
    std::vector<Core3> cores = x.cores();
    const Index start = std::min(x.ortho().left, d - 1);
    // largest intermediate norm of the left sweep: the reference scale for
    // round-off level cancellation such as x - x
    double scale = start == d - 1 ? cores[start].norm() : 0.0;
    for (Index k = start; k + 1 < d; ++k) {
        detail::left_qr_step(cores, k);
        scale = std::max(scale, cores[k + 1].norm());
    }
    TTVector y(std::move(cores));
    const double nrm = y.core(d - 1).norm();
    const double floor = 8.0 * static_cast<double>(d) * std::numeric_limits<double>::epsilon() * scale;
    if (nrm <= floor || nrm == 0.0) {
        TTVector z = TTVector::zeros(x.mode_sizes());
        z.set_ortho(Ortho::none(d));
        return z;
    }
    if (d == 1) {
        y.set_ortho(Ortho::none(1));
        return y;
    }
    const double site_tol = std::max(tol * nrm / std::sqrt(static_cast<double>(d - 1)), floor);
    cores = y.cores();
    for (Index k = d - 1; k >= 1; --k) {
        const Index n = cores[k].n(), r2 = cores[k].r2();
        auto svd = linalg::svd_truncated(cores[k].right(), site_tol, max_rank.value_or(0));
        Matrix us = svd.u * svd.s.asDiagonal();
        Matrix prev = cores[k - 1].left() * us;
        const Index r0 = cores[k - 1].r1(), n0 = cores[k - 1].n();
        cores[k] = Core3::from_right(svd.vt, n, r2);
        cores[k - 1] = Core3::from_left(prev, r0, n0);
    }
    TTVector out(std::move(cores));
    out.set_ortho(Ortho::right_from(1));
    return out;
}

} // namespace ttamen
