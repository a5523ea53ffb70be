#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "ttamen/algebra.hpp"
#include "ttamen/amen/solver.hpp"
#include "ttamen/core.hpp"

namespace ttamen {

// ---- spectral bounds ---------------------------------------------------------

struct SpectrumEstimate {
    double lambda_min = 0.0;
    double lambda_max = 0.0;
    double omega = 0.0; ///< (lmax - lmin) / (lmax + lmin)
};

inline double kantorovich_bound(double lambda_min, double lambda_max) {
    if (!(lambda_min > 0) || lambda_max < lambda_min) throw NotSPD("kantorovich_bound: spectrum not positive");
    return (lambda_max - lambda_min) / (lambda_max + lambda_min);
}

/// Extreme eigenvalues of a dense SPD matrix by a direct eigen-solve.
inline SpectrumEstimate kantorovich_bound(const Matrix& a) {
    if (a.rows() != a.cols()) throw SizeMismatch("kantorovich_bound: matrix is not square");
    const double na = a.norm();
    if ((a - a.transpose()).norm() > 1e-12 * std::max(na, 1.0)) throw NotSPD("kantorovich_bound: matrix not symmetric");
    Eigen::SelfAdjointEigenSolver<Matrix> es(a, Eigen::EigenvaluesOnly);
    SpectrumEstimate s;
    s.lambda_min = es.eigenvalues().minCoeff();
    s.lambda_max = es.eigenvalues().maxCoeff();
    if (!(s.lambda_min > 0)) throw NotSPD("kantorovich_bound: smallest eigenvalue is not positive");
    s.omega = kantorovich_bound(s.lambda_min, s.lambda_max);
    return s;
}

namespace detail {

/// Rayleigh quotient after `steps` power iterations on (A + shift I).
inline double power_iteration(const TTMatrix& a, double shift, int steps, double round_tol, std::mt19937_64& rng) {
    TTVector v = TTVector::random(a.col_sizes(), 2, rng);
    v = tt_scale(v, 1.0 / tt_norm_stable(v));
    const TTMatrix id = TTMatrix::identity(a.col_sizes());
    double lambda = 0.0;
    for (int it = 0; it < steps; ++it) {
        TTVector w = tt_matvec(a, v);
        if (shift != 0.0) w = tt_add(w, v, 1.0, shift);
        w = round(w, round_tol);
        lambda = tt_dot(v, w);
        const double nw = tt_norm_stable(w);
        if (nw == 0.0) break;
        v = tt_scale(w, 1.0 / nw);
    }
    return lambda;
}

} // namespace detail

/// Extreme eigenvalue estimates of an SPD TT operator: power method for
/// lambda_max, shifted power method on (lambda_max I - A) for lambda_min.
inline SpectrumEstimate kantorovich_bound(const TTMatrix& a, int steps = 100, double round_tol = 1e-6,
                                          std::uint64_t seed = 1) {
    if (!is_symmetric(a, 1e-10)) throw NotSPD("kantorovich_bound: operator not symmetric");
    std::mt19937_64 rng(seed);
    SpectrumEstimate s;
    s.lambda_max = detail::power_iteration(a, 0.0, steps, round_tol, rng);
    // top of the spectrum of lmax I - A is lmax - lmin
    const TTMatrix neg = tt_scale(a, -1.0);
    const double top = detail::power_iteration(neg, s.lambda_max, steps, round_tol, rng);
    s.lambda_min = s.lambda_max - top;
    if (!(s.lambda_min > 0)) throw NotSPD("kantorovich_bound: estimated smallest eigenvalue is not positive");
    s.omega = kantorovich_bound(s.lambda_min, s.lambda_max);
    return s;
}

// ---- steepest descent --------------------------------------------------------

/// Exact steepest descent step x + h z, z = y - A x, h = (z,z)/(z,Az).
inline Vector sd_step(const Matrix& a, const Vector& y, const Vector& x) {
    const Vector z = y - a * x;
    const double zz = z.squaredNorm();
    if (zz == 0.0) return x;
    const double zaz = z.dot(a * z);
    if (!(zaz > 0)) throw NotSPD("sd_step: (z, Az) is not positive");
    return x + (zz / zaz) * z;
}

inline double a_norm(const Matrix& a, const Vector& v) { return std::sqrt(std::max(v.dot(a * v), 0.0)); }

// ---- rate formulas -------------------------------------------------------------

/// phi_d from per-core factors (sequences of length d-1):
/// phi^2 = sum_k omega_k^2 prod_{j<k} (1 - omega_j^2) prod_{j<=k} mu_j^2.
inline double phi_d(const std::vector<double>& mu, const std::vector<double>& omega) {
    if (mu.size() != omega.size()) throw SizeMismatch("phi_d: sequences differ in length");
    for (std::size_t k = 0; k < mu.size(); ++k)
        if (!(mu[k] >= 0 && mu[k] <= 1 && omega[k] >= 0 && omega[k] <= 1))
            throw Error("phi_d: entries must lie in [0, 1]");
    double sum = 0.0, keep = 1.0, mus = 1.0;
    for (std::size_t k = 0; k < mu.size(); ++k) {
        mus *= mu[k] * mu[k];
        sum += omega[k] * omega[k] * keep * mus;
        keep *= 1.0 - omega[k] * omega[k];
    }
    return std::sqrt(sum);
}

/// Unchecked variant used on measured values that may exceed 1 by round-off.
inline double phi_d_squared_raw(const std::vector<double>& mu, const std::vector<double>& omega) {
    double sum = 0.0, keep = 1.0, mus = 1.0;
    for (std::size_t k = 0; k < mu.size(); ++k) {
        mus *= mu[k] * mu[k];
        sum += omega[k] * omega[k] * keep * mus;
        keep *= 1.0 - omega[k] * omega[k];
    }
    return sum;
}

/// Residual accumulation bound sum_k omega_k mu_k prod_{m<k} mu_m / sqrt(1 - omega_m^2).
/// Returns +inf when some omega_m >= 1.
inline double fom_chain_bound(const std::vector<double>& mu, const std::vector<double>& omega) {
    if (mu.size() != omega.size()) throw SizeMismatch("fom_chain_bound: sequences differ in length");
    double sum = 0.0, prod = 1.0;
    for (std::size_t k = 0; k < mu.size(); ++k) {
        sum += omega[k] * mu[k] * prod;
        if (omega[k] >= 1.0) return std::numeric_limits<double>::infinity();
        prod *= mu[k] / std::sqrt(1.0 - omega[k] * omega[k]);
    }
    return sum;
}

// ---- projection angles -------------------------------------------------------------

struct AngleReport {
    double eps = 0.0;      ///< ||z - V V^T z|| / ||z||
    double mu = 0.0;       ///< lambda_min of the symmetric part of V^T A V
    double omega_v = 0.0;  ///< sqrt(1 - omega_v^2) = mu / ||A V||
    double realized = 0.0; ///< ||y - A x|| / ||z|| after the Galerkin step
    double bound = std::numeric_limits<double>::infinity();
    bool applicable = false; ///< mu > 0
};

/// Galerkin step on span(V) starting from t = 0 (so y = z) and the quantities
/// of the oblique projection bound.
inline AngleReport angle_quantities(const Matrix& a, const Matrix& v, const Vector& z) {
    if (a.rows() != a.cols() || v.rows() != a.rows() || z.size() != a.rows())
        throw SizeMismatch("angle_quantities: sizes differ");
    const Matrix vtv = v.transpose() * v;
    if ((vtv - Matrix::Identity(v.cols(), v.cols())).norm() > 1e-10)
        throw Error("angle_quantities: V does not have orthonormal columns");
    AngleReport r;
    const double nz = z.norm();
    if (nz == 0.0) {
        r.applicable = true;
        r.bound = 0.0;
        return r;
    }
    const Vector vz = v.transpose() * z;
    r.eps = (z - v * vz).norm() / nz;
    const Matrix av = a * v;
    const Matrix b = v.transpose() * av;
    const Matrix sym = 0.5 * (b + b.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> es(sym, Eigen::EigenvaluesOnly);
    r.mu = es.eigenvalues().minCoeff();
    Eigen::JacobiSVD<Matrix> svd(av);
    const double nav = svd.singularValues()(0);
    const Vector w = b.partialPivLu().solve(vz);
    r.realized = (z - av * w).norm() / nz;
    r.applicable = r.mu > 0;
    if (r.applicable) {
        const double c = std::min(1.0, r.mu / nav);
        r.omega_v = std::sqrt(std::max(0.0, 1.0 - c * c));
        const double e = std::min(1.0, r.eps);
        r.bound = c > 0 ? e + r.omega_v / c * std::sqrt(1.0 - e * e) : std::numeric_limits<double>::infinity();
    } else {
        r.omega_v = 1.0;
    }
    return r;
}

// ---- dense references ------------------------------------------------------------

inline Vector dense_oracle_solve(const Matrix& a, const Vector& y) {
    if (a.rows() != a.cols() || a.rows() != y.size()) throw SizeMismatch("dense_oracle_solve: sizes differ");
    Eigen::PartialPivLU<Matrix> lu(a);
    const double rc = lu.rcond();
    if (!(rc > 1e-15)) throw Error("dense_oracle_solve: matrix is singular to working precision");
    Vector x = lu.solve(y);
    // one step of iterative refinement
    x += lu.solve(y - a * x);
    return x;
}

inline Vector dense_oracle_solve(const TTMatrix& a, const TTVector& y, std::size_t cap = kDefaultDenseCap) {
    const double n = detail::product(y.mode_sizes());
    detail::check_cap(n * n, cap, "dense_oracle_solve");
    return dense_oracle_solve(to_dense(a), to_dense(y));
}

/// Dense frame X_{<k} = X^{<k} (x) I mapping a reduced vector (rank index
/// fastest) to the full little-endian vector.
inline Matrix left_frame(const TTVector& x, Index k) {
    const Matrix p = left_interface(x, k);
    double rest = 1.0;
    for (Index j = k; j < x.dim(); ++j) rest *= static_cast<double>(x.core(j).n());
    const Index nr = static_cast<Index>(rest);
    Matrix f = Matrix::Zero(p.rows() * nr, p.cols() * nr);
    for (Index b = 0; b < nr; ++b) f.block(b * p.rows(), b * p.cols(), p.rows(), p.cols()) = p;
    return f;
}

/// Extreme eigenvalues of the reduced operators A_k = X_{<k}^T A X_{<k},
/// k = 0..d-1 (A_0 = A), for a left-orthogonal x.
inline std::vector<SpectrumEstimate> reduced_spectra(const Matrix& a, const TTVector& x) {
    std::vector<SpectrumEstimate> out;
    for (Index k = 0; k < x.dim(); ++k) {
        const Matrix f = left_frame(x, k);
        out.push_back(kantorovich_bound(Matrix(f.transpose() * a * f)));
    }
    return out;
}

// ---- instrumented AMEn ----------------------------------------------------------------

/// Dense per-core quantities of one sweep (0-based core index k < d-1).
struct InstrumentedCore {
    Index k = 0;
    double mu = 0.0;           ///< A_k-norm error decrease of the core update
    double omega = 0.0;        ///< A_k-norm error decrease of the enriched Galerkin step
    double omega_ztilde = 0.0; ///< perturbed steepest descent rate along the approximate residual
    double mu_res = 0.0;       ///< residual decrease of the core update
    double omega_res = 0.0;    ///< residual decrease of the exact Galerkin step on the enriched frame
    double omega_v = 0.0;      ///< angle quantity of the enriched frame
    double sym_min = 0.0;      ///< lambda_min of the symmetric part of the projected operator
};

struct InstrumentedSweep {
    int sweep = 0;
    std::vector<double> energies; ///< J before the sweep and after every core update (SPD only)
    double energy_ratio = std::numeric_limits<double>::quiet_NaN();
    double phi2 = std::numeric_limits<double>::quiet_NaN();
    double residual_ratio = 0.0; ///< ||y - A x|| / ||y - A t|| over the sweep
    double fom_bound = std::numeric_limits<double>::infinity();
    bool fom_preconditions = false;
    std::vector<InstrumentedCore> cores;
};

struct InstrumentedRun {
    std::vector<InstrumentedSweep> sweeps;
    SolveResult result;
};

/// Runs AMEn with dense local solves and no truncation and evaluates the rate
/// quantities of every core update against dense oracles. Small problems only.
inline InstrumentedRun instrumented_amen(const TTMatrix& a, const TTVector& y, std::optional<TTVector> x0,
                                         SolverConfig cfg, int sweeps) {
    cfg.truncation = Truncation::none;
    cfg.local.kind = LocalSolverKind::direct;
    cfg.stop_on_local = false;
    cfg.max_sweeps = sweeps;
    cfg.max_rank.reset();
    const Matrix ad = to_dense(a);
    const Vector yd = to_dense(y);
    const Vector xs = dense_oracle_solve(ad, yd);
    const bool spd = cfg.symmetric ? *cfg.symmetric : is_symmetric(a);
    const Index d = y.dim();
    auto energy = [&](const Vector& v) {
        const Vector e = xs - v;
        return e.dot(ad * e);
    };

    InstrumentedRun run;
    InstrumentedSweep cur;
    Vector t_start;
    auto observer = [&](const CoreEvent& ev) {
        const Vector t = to_dense(*ev.before);
        const Vector u = to_dense(*ev.solved);
        if (ev.k == 0) {
            t_start = t;
            cur = InstrumentedSweep{};
            if (spd) cur.energies.push_back(energy(t));
        }
        if (spd) cur.energies.push_back(energy(u));
        if (ev.k == d - 1) return;
        // reduced problem k in the frame of the final left cores
        const Matrix f = left_frame(*ev.after, ev.k);
        const Matrix ak = f.transpose() * ad * f;
        const Vector yk = f.transpose() * yd;
        const Vector tk = f.transpose() * t;
        const Vector uk = f.transpose() * u;
        const Vector xk = dense_oracle_solve(ak, yk);
        // frame of the enriched core: X^(k) (x) I
        const Core3& xc = ev.after->core(ev.k);
        const Index rest = ak.rows() / xc.left().rows();
        Matrix v = Matrix::Zero(ak.rows(), xc.r2() * rest);
        for (Index b = 0; b < rest; ++b)
            v.block(b * xc.left().rows(), b * xc.r2(), xc.left().rows(), xc.r2()) = xc.left();
        InstrumentedCore ic;
        ic.k = ev.k;
        const Vector zt = yk - ak * tk;
        const Vector zu = yk - ak * uk;
        const Matrix av = ak * v;
        const Matrix b = v.transpose() * av;
        const Vector w = b.partialPivLu().solve(v.transpose() * yk);
        const Vector zx = yk - av * w;
        ic.mu_res = detail::safe_ratio(zu.norm(), zt.norm());
        ic.omega_res = detail::safe_ratio(zx.norm(), zu.norm());
        {
            const Matrix sym = 0.5 * (b + b.transpose());
            Eigen::SelfAdjointEigenSolver<Matrix> es(sym, Eigen::EigenvaluesOnly);
            ic.sym_min = es.eigenvalues().minCoeff();
            Eigen::JacobiSVD<Matrix> svd(av);
            const double c = ic.sym_min > 0 ? std::min(1.0, ic.sym_min / svd.singularValues()(0)) : 0.0;
            ic.omega_v = std::sqrt(std::max(0.0, 1.0 - c * c));
        }
        if (spd) {
            const Vector ct = xk - tk, cu = xk - uk;
            const double jt = ct.dot(ak * ct), ju = cu.dot(ak * cu);
            ic.mu = std::sqrt(detail::safe_ratio(ju, jt));
            // 1 - (c, R c)_A / (c, c)_A with R the A_k-orthogonal projector onto V
            const Vector ac = ak * cu;
            const Vector vac = v.transpose() * ac;
            const double proj = vac.dot(b.ldlt().solve(vac));
            ic.omega = ju > 0 ? std::sqrt(std::max(0.0, 1.0 - proj / ju)) : 0.0;
            if (ev.enrichment && ev.enrichment->width() > 0) {
                const Matrix& zb = ev.enrichment->basis;
                const Index rz = zb.rows();
                Vector ztl = Vector::Zero(zu.size());
                const Index blocks = zu.size() / rz;
                for (Index bb = 0; bb < blocks; ++bb)
                    ztl.segment(bb * rz, rz) = zb * (zb.transpose() * zu.segment(bb * rz, rz));
                const double num = ztl.dot(zu);
                const double den = ztl.dot(ak * ztl) * cu.dot(zu);
                ic.omega_ztilde = den > 0 ? std::sqrt(std::max(0.0, 1.0 - num * num / den)) : 1.0;
            } else {
                ic.omega_ztilde = 1.0;
            }
        }
        cur.cores.push_back(ic);
    };
    auto on_sweep = [&](const TTVector& x, SweepRecord& rec) {
        const Vector xd = to_dense(x);
        cur.sweep = rec.sweep;
        const double r0 = (yd - ad * t_start).norm();
        cur.residual_ratio = detail::safe_ratio((yd - ad * xd).norm(), r0);
        std::vector<double> mu, om, mur, omr;
        bool pre = true;
        for (const auto& c : cur.cores) {
            mu.push_back(c.mu);
            om.push_back(c.omega);
            mur.push_back(c.mu_res);
            omr.push_back(std::max(c.omega_res, c.omega_v));
            pre = pre && c.sym_min > 0 && c.mu_res <= 1.0 && std::max(c.omega_res, c.omega_v) < 1.0;
        }
        cur.fom_preconditions = pre;
        cur.fom_bound = fom_chain_bound(mur, omr);
        if (spd) {
            cur.energy_ratio = detail::safe_ratio(energy(xd), energy(t_start));
            cur.phi2 = phi_d_squared_raw(mu, om);
        }
        run.sweeps.push_back(cur);
    };
    run.result = amen_solve(a, y, std::move(x0), cfg, on_sweep, observer);
    return run;
}

// ---- random trial generators -------------------------------------------------------

/// Q diag(lambda) Q^T with lambda uniform in [1, kappa].
inline Matrix random_spd(Index n, double kappa, std::mt19937_64& rng) {
    std::normal_distribution<double> nd;
    std::uniform_real_distribution<double> ud(1.0, kappa);
    Matrix g(n, n);
    for (Index j = 0; j < n; ++j)
        for (Index i = 0; i < n; ++i) g(i, j) = nd(rng);
    const Matrix q = linalg::qr_thin(g).q;
    Vector l(n);
    for (Index i = 0; i < n; ++i) l(i) = ud(rng);
    return q * l.asDiagonal() * q.transpose();
}

/// I + 0.5 N with N Gaussian rescaled to unit spectral norm.
inline Matrix random_well_conditioned(Index n, std::mt19937_64& rng) {
    std::normal_distribution<double> nd;
    Matrix g(n, n);
    for (Index j = 0; j < n; ++j)
        for (Index i = 0; i < n; ++i) g(i, j) = nd(rng);
    Eigen::JacobiSVD<Matrix> svd(g);
    g /= svd.singularValues()(0);
    return Matrix::Identity(n, n) + 0.5 * g;
}

inline Matrix random_orthonormal(Index rows, Index cols, std::mt19937_64& rng) {
    return detail::random_orthonormal(rows, cols, rng);
}

inline Vector random_vector(Index n, std::mt19937_64& rng) {
    std::normal_distribution<double> nd;
    Vector v(n);
    for (Index i = 0; i < n; ++i) v(i) = nd(rng);
    return v;
}

/// Rate figures for reporting.
struct RateReport {
    SpectrumEstimate spectrum;
    std::vector<double> sd_ratios;
    std::vector<double> phi_d;
    std::vector<double> j_ratios;
};

} // namespace ttamen
