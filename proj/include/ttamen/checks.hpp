#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include <json.hpp>

#include "ttamen/amen/enrichment.hpp"
#include "ttamen/amen/solver.hpp"
#include "ttamen/diagnostics.hpp"
#include "ttamen/linalg.hpp"
#include "ttamen/problems.hpp"

namespace ttamen {

// Randomized trial suites over the diagnostics. Each trial draws from its own
// stream seeded by (seed, trial), so a suite is reproducible and trials can be
// rerun in isolation.

namespace detail {

inline std::mt19937_64 trial_rng(std::uint64_t seed, int trial) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(trial), 0x5eedu};
    return std::mt19937_64(seq);
}

} // namespace detail

// ---- steepest descent vs the Kantorovich bound --------------------------------------

struct KantorovichCheck {
    int trials = 0;
    int steps = 0;              ///< SD steps checked over all trials
    int violations = 0;
    double worst_excess = -std::numeric_limits<double>::infinity(); ///< max(ratio - Omega)
    double max_omega = 0.0;

    bool passed() const { return trials > 0 && violations == 0; }
};

/// Exact SD from x = 0 on random dense SPD systems of size n with condition
/// numbers drawn from [2, 1000]; each step must contract the A-norm error by
/// at most Omega(A). Steps stop once the error has dropped to 1e-10 of the
/// initial one.
inline KantorovichCheck check_kantorovich(int trials, std::uint64_t seed, Index n = 50, int max_steps = 50,
                                          double slack = 1e-12) {
    KantorovichCheck r;
    for (int t = 0; t < trials; ++t) {
        auto rng = detail::trial_rng(seed, t);
        std::uniform_real_distribution<double> kd(std::log(2.0), std::log(1000.0));
        const Matrix a = random_spd(n, std::exp(kd(rng)), rng);
        const Vector y = random_vector(n, rng);
        const SpectrumEstimate sp = kantorovich_bound(a);
        r.max_omega = std::max(r.max_omega, sp.omega);
        const Vector xs = dense_oracle_solve(a, y);
        Vector x = Vector::Zero(n);
        const double e0 = a_norm(a, xs - x);
        double e = e0;
        for (int s = 0; s < max_steps && e > 1e-10 * e0; ++s) {
            x = sd_step(a, y, x);
            const double en = a_norm(a, xs - x);
            const double excess = en / e - sp.omega;
            r.worst_excess = std::max(r.worst_excess, excess);
            if (excess > slack) ++r.violations;
            ++r.steps;
            e = en;
        }
        ++r.trials;
    }
    return r;
}

inline nlohmann::json to_json(const KantorovichCheck& r) {
    return {{"check", "kantorovich"}, {"trials", r.trials},           {"steps", r.steps},
            {"violations", r.violations}, {"worst_excess", r.worst_excess}, {"max_omega", r.max_omega},
            {"passed", r.passed()}};
}

// ---- Galerkin step vs the oblique projection bound ---------------------------------------

struct FomCheck {
    int trials = 0;
    int applicable = 0;   ///< trials with mu > 0
    int inapplicable = 0; ///< mu <= 0: bound not claimed, counted separately
    int violations = 0;
    double worst_excess = -std::numeric_limits<double>::infinity(); ///< max(realized - bound)
    double max_ratio = 0.0; ///< max(realized / bound) over applicable trials

    bool passed() const { return applicable > 0 && violations == 0; }
};

/// Random well-conditioned nonsymmetric A = I + 0.5 N, random orthonormal V
/// and residuals z mixing span(V) with an orthogonal component of random
/// relative size (including z in span(V) exactly).
inline FomCheck check_fom(int trials, std::uint64_t seed, double slack = 1e-12) {
    FomCheck r;
    for (int t = 0; t < trials; ++t) {
        auto rng = detail::trial_rng(seed, t);
        std::uniform_int_distribution<Index> nd(4, 40);
        const Index n = nd(rng);
        std::uniform_int_distribution<Index> md(1, n - 1);
        const Index m = md(rng);
        const Matrix a = random_well_conditioned(n, rng);
        const Matrix v = random_orthonormal(n, m, rng);
        Vector z = v * random_vector(m, rng);
        const int kind = t % 4; // 0: z in span(V), else growing out-of-span part
        if (kind > 0) {
            Vector w = random_vector(n, rng);
            w -= v * (v.transpose() * w);
            const double scale = kind == 1 ? 1e-3 : kind == 2 ? 0.3 : 3.0;
            z += scale * z.norm() / w.norm() * w;
        }
        const AngleReport ar = angle_quantities(a, v, z);
        ++r.trials;
        if (!ar.applicable) {
            ++r.inapplicable;
            continue;
        }
        ++r.applicable;
        const double excess = ar.realized - ar.bound;
        r.worst_excess = std::max(r.worst_excess, excess);
        if (ar.bound > 0) r.max_ratio = std::max(r.max_ratio, ar.realized / ar.bound);
        if (excess > slack) ++r.violations;
    }
    return r;
}

inline nlohmann::json to_json(const FomCheck& r) {
    return {{"check", "fom"},
            {"trials", r.trials},
            {"applicable", r.applicable},
            {"inapplicable", r.inapplicable},
            {"violations", r.violations},
            {"worst_excess", r.worst_excess},
            {"max_ratio", r.max_ratio},
            {"passed", r.passed()}};
}

// ---- instrumented AMEn rate identity -----------------------------------------------------

/// d-dimensional SPD test system: Laplacian plus a random SPD perturbation
/// per mode (Kronecker sum) and a random rank-2 right-hand side.
inline std::pair<TTMatrix, TTVector> random_spd_system(Index d, Index n, std::mt19937_64& rng, double shift = 0.3) {
    std::vector<Matrix> terms;
    for (Index k = 0; k < d; ++k) terms.push_back(laplacian_1d(n) + shift * random_spd(n, 10.0, rng));
    const std::vector<Index> sizes(d, n);
    return {kronecker_sum(terms), TTVector::random(sizes, 2, rng)};
}

struct RateCheck {
    int trials = 0;
    int sweeps_compared = 0; ///< sweeps whose end energy is resolvable
    int sweeps_skipped = 0;  ///< sweep ends at round-off level
    int identity_violations = 0;
    int monotonicity_violations = 0;
    int ordering_violations = 0; ///< omega_k > omega_ztilde_k
    double worst_identity = 0.0; ///< max |ratio - phi^2| / max(ratio, phi^2)
    double worst_increase = 0.0; ///< max (J_{i+1} - J_i) / J_0

    bool passed() const {
        return sweeps_compared > 0 && identity_violations == 0 && monotonicity_violations == 0 &&
               ordering_violations == 0;
    }
};

/// Instrumented AMEn with exact local solves and enrichment rank large enough
/// to capture the full residual. Energies carry an absolute error of order
/// delta ||e||_A (delta: round-off of the dense error vector), so a sweep
/// enters the identity and ordering comparisons only when its end energy
/// exceeds `resolvable` times the initial energy. Monotonicity is checked
/// everywhere.
inline RateCheck check_rate(int trials, std::uint64_t seed, Index d = 3, Index n = 4, int sweeps = 2,
                            Index kickrank = 64, double rtol = 1e-10, double resolvable = 1e-10) {
    RateCheck r;
    for (int t = 0; t < trials; ++t) {
        auto rng = detail::trial_rng(seed, t);
        auto [a, y] = random_spd_system(d, n, rng);
        SolverConfig cfg;
        cfg.tol = 1e-14;
        cfg.kickrank = kickrank;
        cfg.enrichment = EnrichmentMethod::svd;
        cfg.seed = seed + static_cast<std::uint64_t>(t);
        const InstrumentedRun run = instrumented_amen(a, y, std::nullopt, cfg, sweeps);
        ++r.trials;
        if (run.sweeps.empty()) continue;
        const double j0 = run.sweeps.front().energies.front();
        for (const auto& s : run.sweeps) {
            for (std::size_t i = 1; i < s.energies.size(); ++i) {
                const double inc = (s.energies[i] - s.energies[i - 1]) / j0;
                r.worst_increase = std::max(r.worst_increase, inc);
                if (inc > 1e-12) ++r.monotonicity_violations;
            }
            if (s.energies.back() <= resolvable * j0) {
                ++r.sweeps_skipped;
                continue;
            }
            ++r.sweeps_compared;
            for (const auto& c : s.cores)
                if (c.omega > c.omega_ztilde + 1e-10) ++r.ordering_violations;
            const double scale = std::max(s.energy_ratio, s.phi2);
            const double rel = scale > 0 ? std::abs(s.energy_ratio - s.phi2) / scale : 0.0;
            r.worst_identity = std::max(r.worst_identity, rel);
            if (rel > rtol) ++r.identity_violations;
        }
    }
    return r;
}

inline nlohmann::json to_json(const RateCheck& r) {
    return {{"check", "rate"},
            {"trials", r.trials},
            {"sweeps_compared", r.sweeps_compared},
            {"sweeps_skipped", r.sweeps_skipped},
            {"identity_violations", r.identity_violations},
            {"monotonicity_violations", r.monotonicity_violations},
            {"ordering_violations", r.ordering_violations},
            {"worst_identity", r.worst_identity},
            {"worst_increase", r.worst_increase},
            {"passed", r.passed()}};
}

// ---- svd vs chol enrichment subspaces ---------------------------------------------------

struct EnrichmentEquivalence {
    int trials = 0;
    int violations = 0;
    double worst_angle = 0.0;

    bool passed() const { return trials > 0 && violations == 0; }
};

/// Residual unfolding head * tail with prescribed, well separated singular
/// values (ratio 1/3) and exact rank rho; the tail is known through its
/// triangular factor (svd) and its Gram matrix (chol).
inline EnrichmentEquivalence check_enrichment_equivalence(int trials, std::uint64_t seed, Index rows = 24,
                                                          Index inner = 12, Index cols = 40, Index rho = 4,
                                                          double max_angle = 1e-6) {
    EnrichmentEquivalence r;
    for (int t = 0; t < trials; ++t) {
        auto rng = detail::trial_rng(seed, t);
        const Matrix u = random_orthonormal(rows, rho, rng);
        const Matrix q = random_orthonormal(inner, rho, rng);
        Vector s(rho);
        for (Index i = 0; i < rho; ++i) s(i) = std::pow(1.0 / 3.0, static_cast<double>(i));
        // mix the inner index with a random well-conditioned M: head = U S Q^T M^-1, tail = M T0
        const Matrix mix = random_well_conditioned(inner, rng);
        const Matrix head = u * s.asDiagonal() * q.transpose() * mix.inverse();
        const Matrix t0 = random_orthonormal(cols, inner, rng).transpose();
        const Matrix tail = mix * t0;
        const Matrix gram = tail * tail.transpose();
        const Matrix factor = linalg::lq_thin(tail).l;
        const Enrichment es = enrich_svd(head, factor, rho);
        const Enrichment ec = enrich_chol(head, gram, rho);
        ++r.trials;
        double angle = std::numeric_limits<double>::infinity();
        if (es.width() == rho && ec.width() == rho) angle = linalg::max_principal_angle(es.basis, ec.basis);
        r.worst_angle = std::max(r.worst_angle, angle);
        if (!(angle <= max_angle)) ++r.violations;
    }
    return r;
}

inline nlohmann::json to_json(const EnrichmentEquivalence& r) {
    return {{"check", "enrichment_equivalence"},
            {"trials", r.trials},
            {"violations", r.violations},
            {"worst_angle", r.worst_angle},
            {"passed", r.passed()}};
}

} // namespace ttamen
