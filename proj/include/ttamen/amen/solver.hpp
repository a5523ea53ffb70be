#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "ttamen/algebra.hpp"
#include "ttamen/amen/config.hpp"
#include "ttamen/amen/enrichment.hpp"
#include "ttamen/amen/environments.hpp"
#include "ttamen/amen/local_solver.hpp"
#include "ttamen/ortho.hpp"

namespace ttamen {

/// Snapshot handed to a sweep observer after core k is final. Only built
/// when an observer is installed (instrumented runs).
struct CoreEvent {
    Index k = 0;
    const TTVector* before = nullptr; ///< tau(X^{<k}, T^(k), T^{>k})
    const TTVector* solved = nullptr; ///< tau(X^{<k}, U^(k), T^{>k})
    const TTVector* after = nullptr;  ///< tau(X^{<=k}, S^(k+1), T^{>k+1}); same vector as `solved`
    const Enrichment* enrichment = nullptr;
};
using SweepObserver = std::function<void(const CoreEvent&)>;

/// Writes [U Z] into core k, pads core k+1 with zero rows and restores the
/// left orthogonality of core k with a QR whose R factor moves into core k+1.
/// `carry` (rank(U) x r_{k+1}) multiplies core k+1 first; pass an empty
/// matrix for the identity.
inline void expand_and_orthogonalize(TTVector& x, Index k, const Matrix& u_left, const Matrix& carry,
                                     const Matrix& z) {
    const Index d = x.dim();
    if (k < 0 || k + 1 >= d) throw BoundsError("expand_and_orthogonalize: k must be below d-1");
    const Index r1 = x.core(k).r1(), n = x.core(k).n();
    if (u_left.rows() != r1 * n || (z.cols() > 0 && z.rows() != r1 * n))
        throw SizeMismatch("expand_and_orthogonalize: block row count differs from r1*n");
    Matrix uz(r1 * n, u_left.cols() + z.cols());
    uz.leftCols(u_left.cols()) = u_left;
    if (z.cols() > 0) uz.rightCols(z.cols()) = z;
    const linalg::QR qr = linalg::qr_thin(uz);
    const Core3& next = x.core(k + 1);
    Matrix nr = carry.size() ? Matrix(carry * next.right()) : Matrix(next.right());
    if (nr.rows() != u_left.cols())
        throw SizeMismatch("expand_and_orthogonalize: U and the next core disagree on the rank");
    // R * [S; 0] only involves the first rank(U) columns of R
    const Matrix newnext = qr.r.leftCols(u_left.cols()) * nr;
    Ortho tag = x.ortho();
    x.set_core(k, Core3::from_left(qr.q, r1, n));
    x.set_core(k + 1, Core3::from_right(newnext, next.n(), next.r2()));
    x.set_ortho({k + 1, std::max(tag.right, k + 2)});
}

struct SolverContext {
    const TTMatrix* a = nullptr;
    const TTVector* y = nullptr;
    SolverConfig config;
    bool symmetric = false;
    ResidualTails tails;
    std::optional<AlsResidual> als;
    std::vector<std::string>* notices = nullptr;
    SweepObserver observer;
};

namespace detail {

inline double safe_ratio(double num, double den) { return den > 0 ? num / den : num; }

/// Truncation of the solved core according to the configured policy.
/// Returns the kept left factor and the carry into the next core.
struct Truncated {
    Matrix left;  // (r1 n) x r'
    Matrix carry; // r' x r2
};

inline Truncated truncate_core(const Core3& u, const LocalOperator& op, const Vector& rhs, double res_out,
                               const SolverConfig& cfg, Index d) {
    const Index r2 = u.r2();
    const Index cap = cfg.max_rank.value_or(0);
    const bool need_cap = cap > 0 && r2 > cap;
    if (cfg.truncation == Truncation::none && !need_cap) return {u.left(), Matrix()};
    Eigen::BDCSVD<Matrix> svd(u.left(), Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vector& s = svd.singularValues();
    const double local_tol = cfg.tol / std::sqrt(static_cast<double>(d));
    Index r = s.size();
    if (cfg.truncation != Truncation::none) {
        r = linalg::truncation_rank(s, local_tol * s.norm(), 0);
        if (cfg.truncation == Truncation::residual) {
            const double target = std::max(local_tol, 2.0 * res_out);
            const double nb = rhs.norm();
            while (r < s.size()) {
                Core3 t(u.r1(), u.n(), r2);
                t.left() = svd.matrixU().leftCols(r) * s.head(r).asDiagonal() *
                           svd.matrixV().leftCols(r).transpose();
                const double res = safe_ratio((rhs - op.apply(t.data())).norm(), nb);
                if (res <= target) break;
                ++r;
            }
        }
    }
    if (cap > 0) r = std::min(r, cap);
    r = std::max<Index>(r, 1);
    return {svd.matrixU().leftCols(r), s.head(r).asDiagonal() * svd.matrixV().leftCols(r).transpose()};
}

/// Split of a merged two-site solution w = U (S V^T), (r1 n1) x (n2 r3),
/// with the same rank policy as truncate_core.
inline Truncated truncate_split(const Vector& u, Index rows, Index cols, const LocalOperator& op, const Vector& rhs,
                                double res_out, const SolverConfig& cfg, Index d) {
    ConstMatrixMap w(u.data(), rows, cols);
    Eigen::BDCSVD<Matrix> svd(w, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vector& s = svd.singularValues();
    const double local_tol = cfg.tol / std::sqrt(static_cast<double>(std::max<Index>(d - 1, 1)));
    Index r = s.size();
    if (cfg.truncation != Truncation::none) {
        r = linalg::truncation_rank(s, local_tol * s.norm(), 0);
        if (cfg.truncation == Truncation::residual) {
            const double target = std::max(local_tol, 2.0 * res_out);
            const double nb = rhs.norm();
            while (r < s.size()) {
                const Matrix t = svd.matrixU().leftCols(r) * s.head(r).asDiagonal() *
                                 svd.matrixV().leftCols(r).transpose();
                const Vector tv = Eigen::Map<const Vector>(t.data(), t.size());
                if (safe_ratio((rhs - op.apply(tv)).norm(), nb) <= target) break;
                ++r;
            }
        }
    }
    if (cfg.max_rank) r = std::min(r, *cfg.max_rank);
    r = std::max<Index>(r, 1);
    return {svd.matrixU().leftCols(r), s.head(r).asDiagonal() * svd.matrixV().leftCols(r).transpose()};
}

} // namespace detail

/// One left-to-right AMEn pass. Expects x right-orthogonal from
/// core 1 and fresh environments; leaves x left-orthogonal up to core d-2 with
/// the norm in core d-1.
inline std::vector<CoreStats> amen_sweep(TTVector& x, SweepState& state, SolverContext& ctx) {
    const TTMatrix& a = *ctx.a;
    const TTVector& y = *ctx.y;
    const SolverConfig& cfg = ctx.config;
    const Index d = x.dim();
    std::vector<CoreStats> stats;
    std::optional<TTVector> before, solved;
    for (Index k = 0; k < d; ++k) {
        CoreStats cs;
        cs.core = k;
        const LocalOperator op = local_operator(state, a, k);
        const Vector rhs = local_rhs(state, y, k);
        const double nb = rhs.norm();
        const Vector t = x.core(k).data();
        cs.local_residual_in = detail::safe_ratio((rhs - op.apply(t)).norm(), nb);
        if (ctx.observer) before = x;

        LocalSolution sol = solve_local(op, rhs, t, cfg.local, cfg.tol, ctx.symmetric);
        cs.local_residual_out = sol.rel_residual;
        cs.iterations = sol.iterations;
        cs.direct = sol.direct;
        cs.fallback = sol.fallback;
        if (sol.fallback && ctx.notices)
            ctx.notices->push_back("core " + std::to_string(k) +
                                   ": singular local system, least-squares solution used");

        Core3 u(x.core(k).r1(), x.core(k).n(), x.core(k).r2());
        u.data() = sol.u;

        if (k == d - 1) {
            Ortho tag = x.ortho();
            x.set_core(k, u);
            x.set_ortho({std::min(tag.left, k), d});
            if (ctx.observer) {
                CoreEvent ev{k, &*before, &x, &x, nullptr};
                ctx.observer(ev);
            }
            stats.push_back(cs);
            break;
        }

        detail::Truncated tr = detail::truncate_core(u, op, rhs, sol.rel_residual, cfg, d);
        Core3 ur(u.r1(), u.n(), u.r2());
        if (tr.carry.size())
            ur.left() = tr.left * tr.carry;
        else
            ur = u;
        if (ctx.observer) {
            solved = x;
            solved->set_core(k, ur);
        }

        // enrichment from the projected residual of the solved core
        Enrichment en;
        const Core3 au = linalg::apply_core(a.core(k), ur);
        if (cfg.enrichment != EnrichmentMethod::none) {
            const Matrix head = residual_head(state.left_rhs[k], y.core(k), state.left_op[k], au);
            switch (cfg.enrichment) {
                case EnrichmentMethod::svd: {
                    en = enrich_svd(head, ctx.tails.factor[k + 1], cfg.kickrank);
                    // ||z_k|| for the incoming core gives the residual-based mu
                    const Core3 at = linalg::apply_core(a.core(k), x.core(k));
                    const Matrix h0 = residual_head(state.left_rhs[k], y.core(k), state.left_op[k], at);
                    const double z0 = (h0 * ctx.tails.factor[k + 1]).norm();
                    cs.mu_surrogate = detail::safe_ratio(en.residual_norm, z0);
                    cs.omega_surrogate = en.defect;
                    break;
                }
                case EnrichmentMethod::chol:
                    en = enrich_chol(head, ctx.tails.gram[k + 1], cfg.kickrank);
                    cs.omega_surrogate = en.defect;
                    if (en.indefinite && ctx.notices)
                        ctx.notices->push_back("core " + std::to_string(k) +
                                               ": Gram matrix numerically indefinite, pivoting stopped early");
                    break;
                case EnrichmentMethod::als:
                    en = enrich_als(*ctx.als, head, k, cfg.kickrank);
                    als_update_core(*ctx.als, y.core(k), au, k);
                    break;
                case EnrichmentMethod::none: break;
            }
        }
        Matrix zb = en.basis;
        const Index keep = tr.left.cols();
        if (cfg.max_rank) {
            const Index room = std::max<Index>(0, *cfg.max_rank - keep);
            if (zb.cols() > room) zb.conservativeResize(Eigen::NoChange, room);
        }
        cs.enrichment_width = zb.cols();
        expand_and_orthogonalize(x, k, tr.left, tr.carry, zb);

        const Core3 ax = linalg::apply_core(a.core(k), x.core(k));
        state.left_op[k + 1] = linalg::left_env_step(state.left_op[k], x.core(k), ax);
        state.left_rhs[k + 1] = linalg::left_env_step(state.left_rhs[k], x.core(k), y.core(k));
        state.position = k + 1;
        if (cfg.enrichment == EnrichmentMethod::als) als_advance_left(*ctx.als, y.core(k), ax, k);

        if (ctx.observer) {
            CoreEvent ev{k, &*before, &*solved, &x, &en};
            ctx.observer(ev);
        }
        stats.push_back(cs);
    }
    return stats;
}

/// ||y - A x|| / ||y|| evaluated without rounding (QR-based norm of the exact
/// TT difference); absolute when y = 0.
inline double relative_residual(const TTMatrix& a, const TTVector& y, const TTVector& x) {
    const double ny = tt_norm_stable(y);
    const double nr = tt_norm_stable(tt_add(y, tt_matvec(a, x), 1.0, -1.0));
    return detail::safe_ratio(nr, ny);
}

namespace detail {

inline TTVector default_guess(const TTVector& y, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return TTVector::random(y.mode_sizes(), 1, rng);
}

inline void prepare_sweep(TTVector& x, SweepState& state, SolverContext& ctx) {
    x = orthogonalize(x, Direction::right, 0);
    state = build_environments(*ctx.a, *ctx.y, x);
    const auto m = ctx.config.enrichment;
    if (m == EnrichmentMethod::svd || m == EnrichmentMethod::chol)
        ctx.tails = residual_tails(*ctx.a, *ctx.y, x, m == EnrichmentMethod::svd, m == EnrichmentMethod::chol);
    if (m == EnrichmentMethod::als) als_prepare_sweep(*ctx.als, *ctx.a, *ctx.y, x);
}

} // namespace detail

/// Optional per-sweep hook, e.g. for the A-norm error against a reference.
using SweepCallback = std::function<void(const TTVector&, SweepRecord&)>;

/// Normal equations A^T A x = A^T y. Operator ranks square; `round_tol` > 0
/// compresses the product.
inline std::pair<TTMatrix, TTVector> symmetrize(const TTMatrix& a, const TTVector& y, double round_tol = 0.0,
                                                Index rank_cap = 4096) {
    const TTMatrix at = a.transposed();
    for (Index r : a.ranks())
        if (r * r > rank_cap)
            throw Error("symmetrize: operator rank " + std::to_string(r * r) + " exceeds the cap of " +
                        std::to_string(rank_cap) + "; round A before symmetrizing");
    TTMatrix ata = tt_matmul(at, a);
    if (round_tol > 0) ata = round(ata, round_tol);
    TTVector aty = tt_matvec(at, y);
    if (round_tol > 0) aty = round(aty, round_tol);
    return {std::move(ata), std::move(aty)};
}

struct SolveResult {
    TTVector x;
    ConvergenceLog log;
};

/// AMEn for A x = y. Sweeps until the relative residual drops below tol, the
/// local criterion fires (all incoming local residuals below tol) or
/// max_sweeps is reached. Never throws on non-convergence.
inline SolveResult amen_solve(const TTMatrix& a, const TTVector& y, std::optional<TTVector> x0,
                              const SolverConfig& config, SweepCallback on_sweep = {},
                              SweepObserver observer = {}) {
    config.validate();
    if (config.symmetrize) {
        auto [ata, aty] = symmetrize(a, y, 1e-14);
        SolverConfig inner = config;
        inner.symmetrize = false;
        inner.symmetric = true;
        SolveResult r = amen_solve(ata, aty, std::move(x0), inner, std::move(on_sweep), std::move(observer));
        r.log.method += "_sym";
        return r;
    }
    const auto start = std::chrono::steady_clock::now();
    std::chrono::steady_clock::duration excluded{};
    SolveResult res;
    res.log.method = config.enrichment == EnrichmentMethod::none ? "als" : "amen_" + to_string(config.enrichment);
    TTVector x = x0 ? *x0 : detail::default_guess(y, config.seed);
    check_system(a, y, x);

    SolverContext ctx;
    ctx.a = &a;
    ctx.y = &y;
    ctx.config = config;
    ctx.symmetric = config.symmetric ? *config.symmetric : is_symmetric(a);
    ctx.notices = &res.log.notices;
    ctx.observer = std::move(observer);
    if (config.enrichment == EnrichmentMethod::als)
        ctx.als = init_als_residual(y.mode_sizes(), config.kickrank, config.seed + 7919);

    SweepState state;
    for (int sweep = 1; sweep <= config.max_sweeps; ++sweep) {
        detail::prepare_sweep(x, state, ctx);
        SweepRecord rec;
        rec.sweep = sweep;
        rec.cores = amen_sweep(x, state, ctx);
        rec.rel_residual = relative_residual(a, y, x);
        rec.max_rank = x.max_rank();
        double mx = 0.0;
        for (const auto& c : rec.cores) mx = std::max(mx, c.local_residual_in);
        rec.max_local_residual = mx;
        rec.local_converged = mx < config.tol;
        if (on_sweep) {
            // callback time (reference errors, instrumentation) is not solver time
            const auto c0 = std::chrono::steady_clock::now();
            on_sweep(x, rec);
            excluded += std::chrono::steady_clock::now() - c0;
        }
        rec.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start - excluded).count();
        res.log.sweeps.push_back(rec);
        if (rec.rel_residual <= config.tol) {
            res.log.status = SolveStatus::converged;
            break;
        }
        if (config.stop_on_local && rec.local_converged) {
            res.log.status = SolveStatus::converged_local;
            break;
        }
    }
    if (ctx.als) {
        for (auto& n : ctx.als->notices) res.log.notices.push_back(std::move(n));
    }
    res.x = std::move(x);
    return res;
}

/// Fixed-rank one-site ALS: the AMEn sweep without enrichment or truncation.
inline SolveResult als_solve(const TTMatrix& a, const TTVector& y, std::optional<TTVector> x0,
                             SolverConfig config, SweepCallback on_sweep = {}) {
    config.enrichment = EnrichmentMethod::none;
    config.truncation = Truncation::none;
    config.max_rank.reset();
    return amen_solve(a, y, std::move(x0), config, std::move(on_sweep));
}

/// Two-site DMRG: solves for merged neighbouring cores and splits them by a
/// truncated SVD (tolerance tol/sqrt(d-1), optional max_rank).
inline SolveResult dmrg_solve(const TTMatrix& a, const TTVector& y, std::optional<TTVector> x0,
                              const SolverConfig& config, SweepCallback on_sweep = {}) {
    config.validate();
    const auto start = std::chrono::steady_clock::now();
    std::chrono::steady_clock::duration excluded{};
    SolveResult res;
    res.log.method = "dmrg";
    TTVector x = x0 ? *x0 : detail::default_guess(y, config.seed);
    check_system(a, y, x);
    const bool symmetric = config.symmetric ? *config.symmetric : is_symmetric(a);
    const Index d = x.dim();
    for (int sweep = 1; sweep <= config.max_sweeps; ++sweep) {
        x = orthogonalize(x, Direction::right, 0);
        SweepState state = build_environments(a, y, x);
        SweepRecord rec;
        rec.sweep = sweep;
        double mx = 0.0;
        if (d == 1) {
            const LocalOperator op = local_operator(state, a, 0);
            const Vector rhs = local_rhs(state, y, 0);
            CoreStats cs;
            cs.local_residual_in = detail::safe_ratio((rhs - op.apply(x.core(0).data())).norm(), rhs.norm());
            LocalSolution sol = solve_local(op, rhs, x.core(0).data(), config.local, config.tol, symmetric);
            x.core(0).data() = sol.u;
            cs.local_residual_out = sol.rel_residual;
            mx = cs.local_residual_in;
            rec.cores.push_back(cs);
        }
        for (Index k = 0; k + 1 < d; ++k) {
            CoreStats cs;
            cs.core = k;
            const Core4 am = linalg::merge_cores(a.core(k), a.core(k + 1));
            const LocalOperator op(state.left_op[k], am, state.right_op[k + 2]);
            const Vector rhs = local_rhs(state.left_rhs[k], linalg::merge_cores(y.core(k), y.core(k + 1)),
                                         state.right_rhs[k + 2]);
            const Core3 guess = linalg::merge_cores(x.core(k), x.core(k + 1));
            const double nb = rhs.norm();
            cs.local_residual_in = detail::safe_ratio((rhs - op.apply(guess.data())).norm(), nb);
            mx = std::max(mx, cs.local_residual_in);
            LocalSolution sol = solve_local(op, rhs, guess.data(), config.local, config.tol, symmetric);
            cs.local_residual_out = sol.rel_residual;
            cs.iterations = sol.iterations;
            cs.direct = sol.direct;
            cs.fallback = sol.fallback;
            const Index r1 = x.core(k).r1(), n1 = x.core(k).n(), n2 = x.core(k + 1).n(), r3 = x.core(k + 1).r2();
            const detail::Truncated tr =
                detail::truncate_split(sol.u, r1 * n1, n2 * r3, op, rhs, sol.rel_residual, config, d);
            x.set_core(k, Core3::from_left(tr.left, r1, n1));
            x.set_core(k + 1, Core3::from_right(tr.carry, n2, r3));
            advance_left(state, a, y, x, k);
            rec.cores.push_back(cs);
        }
        x.set_ortho({d - 1, d});
        rec.rel_residual = relative_residual(a, y, x);
        rec.max_rank = x.max_rank();
        rec.max_local_residual = mx;
        rec.local_converged = mx < config.tol;
        if (on_sweep) {
            // callback time (reference errors, instrumentation) is not solver time
            const auto c0 = std::chrono::steady_clock::now();
            on_sweep(x, rec);
            excluded += std::chrono::steady_clock::now() - c0;
        }
        rec.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start - excluded).count();
        res.log.sweeps.push_back(rec);
        if (rec.rel_residual <= config.tol) {
            res.log.status = SolveStatus::converged;
            break;
        }
        if (config.stop_on_local && rec.local_converged) {
            res.log.status = SolveStatus::converged_local;
            break;
        }
    }
    res.x = std::move(x);
    return res;
}

} // namespace ttamen
