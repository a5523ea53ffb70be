#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "ttamen/algebra.hpp"
#include "ttamen/amen/solver.hpp"
#include "ttamen/diagnostics.hpp"
#include "ttamen/io.hpp"
#include "ttamen/problems.hpp"
#include "ttamen/qtt.hpp"

namespace ttamen {

/// Invalid experiment specification; `issues` lists every offending field.
class SpecError : public FormatError {
public:
    explicit SpecError(std::vector<std::string> issues)
        : FormatError(join(issues)), issues_(std::move(issues)) {}
    const std::vector<std::string>& issues() const { return issues_; }

private:
    static std::string join(const std::vector<std::string>& v) {
        std::string s = "invalid experiment spec:";
        for (const auto& i : v) s += "\n  " + i;
        return s;
    }
    std::vector<std::string> issues_;
};

struct ExperimentSpec {
    std::string problem = "poisson"; ///< poisson | cme | cme_time | custom
    std::string solver = "amen_svd"; ///< amen_svd | amen_chol | amen_als | als | dmrg | amen_sym
    Index d = 4;
    Index n = 64;
    double tol = 1e-5;
    Index kickrank = 4;
    int max_sweeps = 20;
    std::optional<Index> max_rank;
    std::uint64_t seed = 1;
    std::string out;                 ///< output directory; empty: no artifacts
    std::string matrix, rhs;         ///< TT manifests for problem = custom
    std::string reference = "auto";  ///< auto | dense | tight | none
    bool symmetrize = false;
    std::optional<bool> qtt;         ///< default: on for the CME problems
    Index steps = 4096;              ///< time steps (cme: defines tau only)
    double t_final = 10.0;
    std::string scheme = "crank_nicolson";
    double alpha0 = 0.7, delta = 0.07, beta = 1.0, gamma = 5.0;
    Index initial_rank = 1;
    bool stop_on_local = true;
    std::string truncation = "residual";
    std::string local_solver = "automatic";

    bool use_qtt() const { return qtt.value_or(problem == "cme" || problem == "cme_time"); }

    std::vector<std::string> issues() const {
        std::vector<std::string> e;
        auto one_of = [&](const std::string& field, const std::string& v, std::initializer_list<const char*> ok) {
            for (const char* o : ok)
                if (v == o) return;
            std::string msg = field + ": '" + v + "' is not one of";
            for (const char* o : ok) msg += std::string(" ") + o;
            e.push_back(msg);
        };
        one_of("problem", problem, {"poisson", "cme", "cme_time", "custom"});
        one_of("solver", solver, {"amen_svd", "amen_chol", "amen_als", "als", "dmrg", "amen_sym"});
        one_of("reference", reference, {"auto", "dense", "tight", "none"});
        one_of("scheme", scheme, {"crank_nicolson", "implicit_euler"});
        one_of("truncation", truncation, {"none", "frobenius", "residual"});
        one_of("local_solver", local_solver, {"automatic", "direct", "iterative"});
        if (d < 1) e.push_back("d: must be at least 1");
        if (n < 2) e.push_back("n: must be at least 2");
        if (!(tol > 0)) e.push_back("tol: must be positive");
        if (kickrank < 1) e.push_back("kickrank: must be positive");
        if (max_sweeps < 1) e.push_back("max_sweeps: must be at least 1");
        if (max_rank && *max_rank < 1) e.push_back("max_rank: must be positive");
        if (initial_rank < 1) e.push_back("initial_rank: must be positive");
        if (steps < 1) e.push_back("steps: must be at least 1");
        if (!(t_final > 0)) e.push_back("t_final: must be positive");
        if (!(alpha0 > 0 && delta > 0 && beta > 0 && gamma > 0)) e.push_back("rates: must be positive");
        if (problem == "custom") {
            if (matrix.empty()) e.push_back("matrix: required for problem custom");
            if (rhs.empty()) e.push_back("rhs: required for problem custom");
        }
        if (use_qtt() && problem != "custom") {
            if (detail::log_base(n, 2) < 0) e.push_back("n: must be a power of 2 for QTT");
            if (problem == "cme_time" && detail::log_base(steps, 2) < 0)
                e.push_back("steps: must be a power of 2 for QTT");
        }
        return e;
    }

    void validate() const {
        auto e = issues();
        if (!e.empty()) throw SpecError(std::move(e));
    }

    json to_json() const {
        json j;
        j["problem"] = problem;
        j["solver"] = solver;
        j["d"] = d;
        j["n"] = n;
        j["tol"] = tol;
        j["kickrank"] = kickrank;
        j["max_sweeps"] = max_sweeps;
        j["max_rank"] = max_rank ? json(*max_rank) : json(nullptr);
        j["seed"] = seed;
        j["out"] = out;
        j["matrix"] = matrix;
        j["rhs"] = rhs;
        j["reference"] = reference;
        j["symmetrize"] = symmetrize;
        j["qtt"] = use_qtt();
        j["steps"] = steps;
        j["t_final"] = t_final;
        j["scheme"] = scheme;
        j["rates"] = {{"alpha0", alpha0}, {"delta", delta}, {"beta", beta}, {"gamma", gamma}};
        j["initial_rank"] = initial_rank;
        j["stop_on_local"] = stop_on_local;
        j["truncation"] = truncation;
        j["local_solver"] = local_solver;
        return j;
    }

    /// Overlays the fields present in `j` on `base`. Unknown keys and type
    /// errors are collected together with the value checks.
    static ExperimentSpec from_json(const json& j) { return from_json(j, ExperimentSpec()); }
    static ExperimentSpec from_json(const json& j, ExperimentSpec base) {
        std::vector<std::string> e;
        if (!j.is_object()) throw SpecError({"spec: top level must be an object"});
        static const std::set<std::string> known = {
            "problem", "solver", "d",     "n",       "tol",    "kickrank",     "max_sweeps",    "max_rank",
            "seed",    "out",    "matrix", "rhs",    "reference", "symmetrize", "qtt",           "steps",
            "t_final", "scheme", "rates", "initial_rank", "stop_on_local", "truncation", "local_solver"};
        for (const auto& [k, v] : j.items())
            if (!known.count(k)) e.push_back(k + ": unknown field");
        auto str = [&](const char* k, std::string& dst) {
            if (!j.contains(k)) return;
            if (j[k].is_string()) dst = j[k].get<std::string>();
            else e.push_back(std::string(k) + ": expected a string");
        };
        auto integer = [&](const char* k, auto& dst) {
            if (!j.contains(k)) return;
            if (j[k].is_number_integer()) dst = static_cast<std::remove_reference_t<decltype(dst)>>(j[k].get<long long>());
            else e.push_back(std::string(k) + ": expected an integer");
        };
        auto number = [&](const json& obj, const char* k, double& dst, const std::string& prefix = "") {
            if (!obj.contains(k)) return;
            if (obj[k].is_number()) dst = obj[k].get<double>();
            else e.push_back(prefix + k + ": expected a number");
        };
        auto boolean = [&](const char* k, bool& dst) {
            if (!j.contains(k)) return;
            if (j[k].is_boolean()) dst = j[k].get<bool>();
            else e.push_back(std::string(k) + ": expected a boolean");
        };
        ExperimentSpec s = std::move(base);
        str("problem", s.problem);
        str("solver", s.solver);
        integer("d", s.d);
        integer("n", s.n);
        number(j, "tol", s.tol);
        integer("kickrank", s.kickrank);
        integer("max_sweeps", s.max_sweeps);
        if (j.contains("max_rank")) {
            if (j["max_rank"].is_null()) s.max_rank.reset();
            else if (j["max_rank"].is_number_integer()) s.max_rank = j["max_rank"].get<long long>();
            else e.push_back("max_rank: expected an integer or null");
        }
        if (j.contains("seed")) {
            if (j["seed"].is_number_unsigned()) s.seed = j["seed"].get<std::uint64_t>();
            else e.push_back("seed: expected a non-negative integer");
        }
        str("out", s.out);
        str("matrix", s.matrix);
        str("rhs", s.rhs);
        str("reference", s.reference);
        boolean("symmetrize", s.symmetrize);
        if (j.contains("qtt")) {
            if (j["qtt"].is_boolean()) s.qtt = j["qtt"].get<bool>();
            else e.push_back("qtt: expected a boolean");
        }
        integer("steps", s.steps);
        number(j, "t_final", s.t_final);
        str("scheme", s.scheme);
        if (j.contains("rates")) {
            const json& r = j["rates"];
            if (!r.is_object()) {
                e.push_back("rates: expected an object");
            } else {
                for (const auto& [k, v] : r.items())
                    if (k != "alpha0" && k != "delta" && k != "beta" && k != "gamma")
                        e.push_back("rates." + k + ": unknown field");
                number(r, "alpha0", s.alpha0, "rates.");
                number(r, "delta", s.delta, "rates.");
                number(r, "beta", s.beta, "rates.");
                number(r, "gamma", s.gamma, "rates.");
            }
        }
        integer("initial_rank", s.initial_rank);
        boolean("stop_on_local", s.stop_on_local);
        str("truncation", s.truncation);
        str("local_solver", s.local_solver);
        for (auto& i : s.issues()) e.push_back(std::move(i));
        if (!e.empty()) throw SpecError(std::move(e));
        return s;
    }
};

struct Problem {
    std::string name;
    TTMatrix a;
    TTVector y;
    bool symmetric = false;
};

inline Problem build_problem(const ExperimentSpec& spec) {
    spec.validate();
    Problem p;
    p.name = spec.problem;
    if (spec.problem == "poisson") {
        auto [a, y] = build_poisson({spec.d, spec.n});
        p.a = std::move(a);
        p.y = std::move(y);
        p.symmetric = true;
    } else if (spec.problem == "cme" || spec.problem == "cme_time") {
        const CascadeCMESpec cs{spec.d, spec.n, spec.alpha0, spec.delta, spec.beta, spec.gamma};
        const TTMatrix gen = build_cme_operator(cs);
        const TTVector psi0 = build_initial_state(cs);
        TimeSystemSpec ts;
        ts.steps = spec.steps;
        ts.tau = spec.t_final / static_cast<double>(spec.steps);
        ts.scheme = spec.scheme == "implicit_euler" ? TimeScheme::implicit_euler : TimeScheme::crank_nicolson;
        if (spec.problem == "cme_time") {
            auto [m, b] = build_time_system(gen, psi0, ts);
            p.a = std::move(m);
            p.y = std::move(b);
        } else if (ts.scheme == TimeScheme::crank_nicolson) {
            p.a = shifted_identity(gen, -0.5 * ts.tau);
            p.y = round(tt_matvec(shifted_identity(gen, 0.5 * ts.tau), psi0), 1e-14);
        } else {
            p.a = shifted_identity(gen, -ts.tau);
            p.y = psi0;
        }
        p.symmetric = false;
    } else {
        p.a = read_ttmatrix(spec.matrix);
        p.y = read_ttvector(spec.rhs);
        if (p.a.row_sizes() != p.a.col_sizes() || p.a.col_sizes() != p.y.mode_sizes())
            throw SizeMismatch("custom problem: matrix and right-hand side sizes differ");
        p.symmetric = is_symmetric(p.a);
    }
    if (spec.use_qtt() && spec.problem != "custom") {
        p.a = qtt_quantize(p.a, 2, 1e-14);
        p.y = qtt_quantize(p.y, 2, 1e-14);
    }
    return p;
}

inline SolverConfig solver_config(const ExperimentSpec& spec) {
    SolverConfig c;
    c.tol = spec.tol;
    c.max_sweeps = spec.max_sweeps;
    c.kickrank = spec.kickrank;
    c.max_rank = spec.max_rank;
    c.seed = spec.seed;
    c.stop_on_local = spec.stop_on_local;
    c.truncation = spec.truncation == "none"        ? Truncation::none
                   : spec.truncation == "frobenius" ? Truncation::frobenius
                                                    : Truncation::residual;
    c.local.kind = spec.local_solver == "direct"      ? LocalSolverKind::direct
                   : spec.local_solver == "iterative" ? LocalSolverKind::iterative
                                                      : LocalSolverKind::automatic;
    c.enrichment = spec.solver == "amen_chol"  ? EnrichmentMethod::chol
                   : spec.solver == "amen_als" ? EnrichmentMethod::als
                   : spec.solver == "als"      ? EnrichmentMethod::none
                                               : EnrichmentMethod::svd;
    return c;
}

/// Random orthonormalized starting guess of the given rank.
inline TTVector initial_guess(const TTVector& y, Index rank, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const auto sizes = y.mode_sizes();
    TTVector x = TTVector::random(sizes, rank, rng);
    return orthogonalize(x, Direction::right, 0);
}

/// Error of iterates against a reference solution: A-norm for symmetric
/// problems, Euclidean otherwise, both relative to the reference.
class ReferenceError {
public:
    ReferenceError() = default;

    static ReferenceError dense(const TTMatrix& a, const TTVector& y, bool a_norm) {
        ReferenceError r;
        r.kind_ = "dense";
        r.a_norm_ = a_norm;
        r.ad_ = to_dense(a);
        r.xd_ = dense_oracle_solve(r.ad_, to_dense(y));
        r.scale_ = r.norm(r.xd_);
        return r;
    }

    static ReferenceError tight(const TTMatrix& a, TTVector xref, bool a_norm, ConvergenceLog log) {
        ReferenceError r;
        r.kind_ = "tight";
        r.a_norm_ = a_norm;
        r.a_ = a;
        r.xt_ = std::move(xref);
        r.ref_log_ = std::move(log);
        r.scale_ = r.tt_norm_of(r.xt_);
        return r;
    }

    bool active() const { return !kind_.empty(); }
    const std::string& kind() const { return kind_; }
    bool a_norm() const { return a_norm_; }
    const ConvergenceLog& reference_log() const { return ref_log_; }

    double operator()(const TTVector& x) const {
        if (kind_ == "dense") return norm(xd_ - to_dense(x)) / scale_;
        return tt_norm_of(tt_add(xt_, x, 1.0, -1.0)) / scale_;
    }

private:
    double norm(const Vector& v) const { return a_norm_ ? std::sqrt(std::max(v.dot(ad_ * v), 0.0)) : v.norm(); }
    double tt_norm_of(const TTVector& v) const {
        return a_norm_ ? std::sqrt(std::max(tt_dot(v, tt_matvec(a_, v)), 0.0)) : tt_norm_stable(v);
    }

    std::string kind_;
    bool a_norm_ = false;
    Matrix ad_;
    Vector xd_;
    TTMatrix a_;
    TTVector xt_;
    ConvergenceLog ref_log_;
    double scale_ = 1.0;
};

/// Dense reference only when the dense operator fits the default cap.
inline bool dense_reference_fits(const TTVector& y) {
    const double n = detail::product(y.mode_sizes());
    return n * n <= static_cast<double>(kDefaultDenseCap);
}

struct ExperimentResult {
    ExperimentSpec spec;
    SolveResult solve;
    json summary;
    int exit_code = 0; ///< 0 converged, 2 not converged
};

inline ExperimentResult run_experiment(const ExperimentSpec& spec) {
    spec.validate();
    ExperimentResult res;
    res.spec = spec;
    const Problem p = build_problem(spec);
    const bool sym = spec.symmetrize || spec.solver == "amen_sym";
    const bool a_norm = p.symmetric;

    ReferenceError ref;
    std::string ref_kind = spec.reference;
    if (ref_kind == "auto") ref_kind = dense_reference_fits(p.y) ? "dense" : "none";
    if (ref_kind == "dense") {
        if (!dense_reference_fits(p.y))
            throw SpecError({"reference: dense reference needs (n_1...n_d)^2 <= 2^24 entries"});
        ref = ReferenceError::dense(p.a, p.y, a_norm);
    } else if (ref_kind == "tight") {
        SolverConfig rc = solver_config(spec);
        rc.enrichment = EnrichmentMethod::svd;
        rc.tol = spec.tol / 1000.0;
        rc.max_sweeps = std::max(40, 2 * spec.max_sweeps);
        rc.max_rank.reset();
        rc.stop_on_local = false;
        SolveResult rr = amen_solve(p.a, p.y, std::nullopt, rc);
        ref = ReferenceError::tight(p.a, std::move(rr.x), a_norm, std::move(rr.log));
    }

    SolverConfig cfg = solver_config(spec);
    const TTMatrix* a = &p.a;
    const TTVector* y = &p.y;
    TTMatrix ata;
    TTVector aty;
    if (sym) {
        std::tie(ata, aty) = symmetrize(p.a, p.y, 1e-14);
        a = &ata;
        y = &aty;
        cfg.symmetric = true;
    }
    std::optional<TTVector> x0;
    if (spec.initial_rank > 1) x0 = initial_guess(*y, spec.initial_rank, spec.seed);
    SweepCallback cb;
    if (ref.active()) cb = [&](const TTVector& x, SweepRecord& rec) { rec.a_norm_error = ref(x); };

    if (spec.solver == "dmrg") {
        res.solve = dmrg_solve(*a, *y, x0, cfg, cb);
    } else if (spec.solver == "als") {
        res.solve = als_solve(*a, *y, x0, cfg, cb);
    } else {
        res.solve = amen_solve(*a, *y, x0, cfg, cb);
    }
    if (spec.solver == "amen_sym") res.solve.log.method = "amen_sym";
    else if (sym) res.solve.log.method += "_sym";
    const ConvergenceLog& log = res.solve.log;
    res.exit_code = log.converged() ? 0 : 2;

    json s;
    s["spec"] = spec.to_json();
    s["problem"] = {{"name", p.name},
                    {"dim", p.y.dim()},
                    {"mode_sizes", p.y.mode_sizes()},
                    {"operator_ranks", p.a.ranks()},
                    {"rhs_ranks", p.y.ranks()},
                    {"symmetric", p.symmetric},
                    {"normal_equations", sym}};
    s["solver_config"] = to_json(cfg);
    s["status"] = to_string(log.status);
    s["converged"] = log.converged();
    s["method"] = log.method;
    s["final_rel_residual"] = json_number(log.final_residual());
    s["final_ranks"] = res.solve.x.ranks();
    s["wall_time_s"] = log.sweeps.empty() ? 0.0 : log.sweeps.back().wall_time;
    json r;
    r["kind"] = ref.active() ? ref.kind() : "none";
    r["error_norm"] = ref.active() ? json(a_norm ? "A" : "euclidean") : json(nullptr);
    if (ref.active() && ref.kind() == "tight") {
        r["tol"] = spec.tol / 1000.0;
        r["status"] = to_string(ref.reference_log().status);
        r["final_rel_residual"] = json_number(ref.reference_log().final_residual());
    }
    s["reference"] = r;
    s["final_a_norm_error"] = !log.sweeps.empty() && log.sweeps.back().a_norm_error
                                  ? json_number(*log.sweeps.back().a_norm_error)
                                  : json(nullptr);
    // cheap per-sweep rate figures (residual decrease of the core updates and
    // enrichment defects); the dense mu_k, omega_k need an instrumented run
    json diag = json::array();
    for (const auto& rec : log.sweeps) {
        double mu = -1.0, eps = -1.0;
        for (const auto& c : rec.cores) {
            if (!std::isnan(c.mu_surrogate)) mu = std::max(mu, c.mu_surrogate);
            if (!std::isnan(c.omega_surrogate)) eps = std::max(eps, c.omega_surrogate);
        }
        diag.push_back({{"sweep", rec.sweep},
                        {"max_residual_decrease", mu < 0 ? json(nullptr) : json(mu)},
                        {"max_enrichment_defect", eps < 0 ? json(nullptr) : json(eps)}});
    }
    s["diagnostics"] = {{"surrogates", diag}};
    if (p.symmetric && dense_reference_fits(p.y)) {
        const SpectrumEstimate sp = kantorovich_bound(to_dense(p.a));
        s["diagnostics"]["kantorovich"] = {
            {"lambda_min", sp.lambda_min}, {"lambda_max", sp.lambda_max}, {"omega", sp.omega}};
    }
    s["log"] = to_json(log);
    res.summary = std::move(s);

    if (!spec.out.empty()) {
        const fs::path dir(spec.out);
        std::error_code ec;
        fs::create_directories(dir, ec);
        if (ec) throw IoError("cannot create output directory '" + dir.string() + "': " + ec.message());
        write_log(log, dir / "log.csv");
        write_json(res.summary, dir / "summary.json");
        tt_io_write(res.solve.x, dir / "solution.json");
    }
    return res;
}

} // namespace ttamen
