#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "ttamen/core.hpp"

namespace ttamen {

enum class EnrichmentMethod { none, svd, chol, als };

inline std::string to_string(EnrichmentMethod m) {
    switch (m) {
        case EnrichmentMethod::none: return "none";
        case EnrichmentMethod::svd: return "svd";
        case EnrichmentMethod::chol: return "chol";
        case EnrichmentMethod::als: return "als";
    }
    return "?";
}

enum class LocalSolverKind { automatic, direct, iterative };

/// How the freshly solved core is compressed before the basis expansion.
enum class Truncation {
    none,      ///< keep the full rank, no compression
    frobenius, ///< SVD truncation at tol/sqrt(d) relative Frobenius accuracy
    residual,  ///< smallest rank whose local residual stays below tol/sqrt(d)
};

struct LocalSolverConfig {
    LocalSolverKind kind = LocalSolverKind::automatic;
    Index dense_cap = 400;   ///< largest local system solved by dense factorization
    int max_iterations = 500;
    double rtol = -1.0;      ///< negative: tol / 10
    int restart = 40;        ///< GMRES restart length
};

struct SolverConfig {
    double tol = 1e-5;
    int max_sweeps = 20;
    LocalSolverConfig local;
    EnrichmentMethod enrichment = EnrichmentMethod::svd;
    Index kickrank = 4;
    std::optional<Index> max_rank;
    Truncation truncation = Truncation::residual;
    /// Solve the normal equations A^T A x = A^T y instead; residuals are then
    /// those of the normal system.
    bool symmetrize = false;
    /// nullopt: detect by comparing A with its transpose.
    std::optional<bool> symmetric;
    bool stop_on_local = true;
    std::uint64_t seed = 1;

    void validate() const;
};

/// Per-core statistics of one sweep.
struct CoreStats {
    Index core = 0;
    double local_residual_in = 0.0; ///< ||b - B t|| / ||b|| for the incoming core
    double local_residual_out = 0.0;
    int iterations = 0;             ///< Krylov iterations (0 for direct solves)
    bool direct = true;
    bool fallback = false;          ///< singular local system, least-squares used
    Index enrichment_width = 0;
    /// Residual-based rate surrogates (computable in
    /// production): mu = ||z_k(u)|| / ||z_k(t)||, omega = enrichment defect
    /// ||z_k - P z_k|| / ||z_k||. NaN when the enrichment back-end cannot
    /// provide them cheaply.
    double mu_surrogate = std::numeric_limits<double>::quiet_NaN();
    double omega_surrogate = std::numeric_limits<double>::quiet_NaN();
};

struct SweepRecord {
    int sweep = 0;
    double wall_time = 0.0;    ///< seconds since the start of the solve
    double rel_residual = 0.0; ///< ||y - A x|| / ||y||
    std::optional<double> a_norm_error;
    Index max_rank = 0;
    bool local_converged = false;
    double max_local_residual = 0.0;
    std::vector<CoreStats> cores;
};

enum class SolveStatus { converged, converged_local, max_sweeps };

inline std::string to_string(SolveStatus s) {
    switch (s) {
        case SolveStatus::converged: return "converged";
        case SolveStatus::converged_local: return "converged_local";
        case SolveStatus::max_sweeps: return "max_sweeps";
    }
    return "?";
}

struct ConvergenceLog {
    std::vector<SweepRecord> sweeps;
    SolveStatus status = SolveStatus::max_sweeps;
    std::vector<std::string> notices;
    std::string method;

    bool converged() const { return status != SolveStatus::max_sweeps; }
    double final_residual() const { return sweeps.empty() ? 0.0 : sweeps.back().rel_residual; }
};

inline void SolverConfig::validate() const {
    if (!(tol > 0)) throw Error("SolverConfig: tol must be positive");
    if (max_sweeps < 1) throw Error("SolverConfig: max_sweeps must be at least 1");
    if (kickrank < 1 && enrichment != EnrichmentMethod::none)
        throw Error("SolverConfig: kickrank must be positive");
    if (max_rank && *max_rank < 1) throw Error("SolverConfig: max_rank must be positive");
}

} // namespace ttamen
