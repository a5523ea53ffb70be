// ttamen: command-line experiment runner.
//
//   ttamen solve --problem poisson --d 8 --n 32 --solver amen_svd --out runs/p8
//   ttamen solve --spec experiments.json --jobs 4
//   ttamen diag --check kantorovich --trials 100 --seed 1 --out kant.json
//
// Exit codes: 0 converged / checks passed, 2 not converged / check failed,
// 3 invalid input, 4 I/O error. TTAMEN_NUM_THREADS sets the number of threads
// of the dense kernels.

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <iostream>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ttamen/checks.hpp"
#include "ttamen/experiment.hpp"
#include "ttamen/io.hpp"

namespace {

using namespace ttamen;

constexpr int kExitOk = 0;
constexpr int kExitNotConverged = 2;
constexpr int kExitInvalid = 3;
constexpr int kExitIo = 4;

void configure_threads() {
    if (const char* env = std::getenv("TTAMEN_NUM_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0) Eigen::setNbThreads(n);
    }
}

std::vector<ExperimentSpec> load_specs(const std::string& path, const ExperimentSpec& base) {
    json j;
    try {
        j = json::parse(detail::read_file(path, false));
    } catch (const json::parse_error& e) {
        throw SpecError({std::string("spec file is not valid JSON: ") + e.what()});
    }
    std::vector<ExperimentSpec> specs;
    if (j.is_array()) {
        for (std::size_t i = 0; i < j.size(); ++i) {
            try {
                specs.push_back(ExperimentSpec::from_json(j[i], base));
            } catch (const SpecError& e) {
                std::vector<std::string> issues;
                for (const auto& s : e.issues()) issues.push_back("[" + std::to_string(i) + "] " + s);
                throw SpecError(std::move(issues));
            }
            // isolate outputs of array entries that inherit the flag value
            if (!j[i].contains("out") && !base.out.empty())
                specs.back().out = (fs::path(base.out) / std::to_string(i)).string();
        }
    } else {
        specs.push_back(ExperimentSpec::from_json(j, base));
    }
    return specs;
}

struct Outcome {
    int code = kExitOk;
    std::string line;
};

Outcome run_one(const ExperimentSpec& spec) {
    Outcome o;
    try {
        const ExperimentResult r = run_experiment(spec);
        const auto& log = r.solve.log;
        o.code = r.exit_code;
        o.line = spec.problem + " d=" + std::to_string(spec.d) + " n=" + std::to_string(spec.n) + " " + log.method +
                 ": " + to_string(log.status) + " after " + std::to_string(log.sweeps.size()) +
                 " sweeps, residual " + format_double(log.final_residual()) + ", max rank " +
                 std::to_string(r.solve.x.max_rank());
        const auto& err = r.summary["final_a_norm_error"];
        if (!err.is_null()) o.line += ", error " + format_double(err.get<double>());
    } catch (const IoError& e) {
        o.code = kExitIo;
        o.line = std::string("I/O error: ") + e.what();
    } catch (const Error& e) {
        o.code = kExitInvalid;
        o.line = std::string("invalid input: ") + e.what();
    }
    return o;
}

int cmd_solve(ExperimentSpec base, const std::string& spec_path, int jobs) {
    std::vector<ExperimentSpec> specs;
    try {
        specs = spec_path.empty() ? std::vector<ExperimentSpec>{base} : load_specs(spec_path, base);
        for (const auto& s : specs) s.validate();
    } catch (const IoError& e) {
        std::cerr << "I/O error: " << e.what() << "\n";
        return kExitIo;
    } catch (const Error& e) {
        std::cerr << e.what() << "\n";
        return kExitInvalid;
    }
    std::vector<Outcome> out(specs.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < specs.size(); i = next++) out[i] = run_one(specs[i]);
    };
    const int nthreads = std::clamp<int>(jobs, 1, static_cast<int>(specs.size()));
    std::vector<std::thread> pool;
    for (int t = 1; t < nthreads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    int code = kExitOk;
    for (const auto& o : out) {
        (o.code == kExitOk || o.code == kExitNotConverged ? std::cout : std::cerr) << o.line << "\n";
        code = std::max(code, o.code);
    }
    return code;
}

int cmd_diag(const std::string& check, int trials, std::uint64_t seed, const std::string& out) {
    json report;
    bool passed = false;
    if (check == "kantorovich") {
        const auto r = check_kantorovich(trials, seed);
        report = to_json(r);
        passed = r.passed();
    } else if (check == "rate") {
        const auto r = check_rate(trials, seed);
        report = to_json(r);
        passed = r.passed();
    } else if (check == "fom") {
        const auto r = check_fom(trials, seed);
        report = to_json(r);
        passed = r.passed();
    } else {
        const auto r = check_enrichment_equivalence(trials, seed);
        report = to_json(r);
        passed = r.passed();
    }
    report["seed"] = seed;
    std::cout << report.dump(2) << "\n";
    if (!out.empty()) {
        try {
            write_json(report, out);
        } catch (const IoError& e) {
            std::cerr << "I/O error: " << e.what() << "\n";
            return kExitIo;
        }
    }
    return passed ? kExitOk : kExitNotConverged;
}

} // namespace

int main(int argc, char** argv) {
    configure_threads();
    CLI::App app{"Tensor-train AMEn solver and experiment runner"};
    app.require_subcommand(1);

    ExperimentSpec spec;
    std::string spec_path;
    int jobs = 1;
    std::optional<Index> max_rank;
    std::string reference = spec.reference;
    auto* solve = app.add_subcommand("solve", "Build a benchmark problem and solve it");
    solve->add_option("--problem", spec.problem, "poisson | cme | cme_time | custom")->capture_default_str();
    solve->add_option("--d", spec.d, "Dimension (number of species for cme)")->capture_default_str();
    solve->add_option("--n", spec.n, "Grid points / states per mode")->capture_default_str();
    solve->add_option("--solver", spec.solver, "amen_svd | amen_chol | amen_als | als | dmrg | amen_sym")
        ->capture_default_str();
    solve->add_option("--tol", spec.tol, "Relative residual target")->capture_default_str();
    solve->add_option("--kickrank", spec.kickrank, "Enrichment rank")->capture_default_str();
    solve->add_option("--max-sweeps", spec.max_sweeps)->capture_default_str();
    solve->add_option("--max-rank", max_rank, "Global rank cap (default unlimited)");
    solve->add_option("--seed", spec.seed)->capture_default_str();
    solve->add_option("--out", spec.out, "Output directory for log.csv, summary.json, solution.{json,bin}");
    solve->add_option("--matrix", spec.matrix, "TT matrix manifest (problem custom)");
    solve->add_option("--rhs", spec.rhs, "TT vector manifest (problem custom)");
    solve->add_option("--reference", reference, "auto | dense | tight | none")->capture_default_str();
    solve->add_flag("--symmetrize", spec.symmetrize, "Solve the normal equations");
    std::optional<bool> qtt;
    solve->add_option("--qtt", qtt, "Quantize modes (default: on for cme problems)");
    solve->add_option("--steps", spec.steps, "Time steps")->capture_default_str();
    solve->add_option("--t-final", spec.t_final, "Final time")->capture_default_str();
    solve->add_option("--scheme", spec.scheme, "crank_nicolson | implicit_euler")->capture_default_str();
    solve->add_option("--initial-rank", spec.initial_rank, "Rank of the random initial guess")->capture_default_str();
    bool no_local_stop = false;
    solve->add_flag("--no-local-stop", no_local_stop, "Stop on the global residual only");
    solve->add_option("--spec", spec_path, "JSON experiment file (object or array); overrides flags");
    solve->add_option("--jobs", jobs, "Experiments run concurrently")->capture_default_str();

    std::string check = "kantorovich";
    int trials = 100;
    std::uint64_t seed = 1;
    std::string diag_out;
    auto* diag = app.add_subcommand("diag", "Randomized checks of the convergence theory");
    diag->add_option("--check", check)
        ->check(CLI::IsMember({"kantorovich", "rate", "fom", "enrichment"}))
        ->capture_default_str();
    diag->add_option("--trials", trials)->check(CLI::PositiveNumber)->capture_default_str();
    diag->add_option("--seed", seed)->capture_default_str();
    diag->add_option("--out", diag_out, "JSON report path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitInvalid;
    }

    if (*solve) {
        spec.max_rank = max_rank;
        spec.reference = reference;
        spec.qtt = qtt;
        spec.stop_on_local = !no_local_stop;
        return cmd_solve(spec, spec_path, jobs);
    }
    return cmd_diag(check, trials, seed, diag_out);
}
