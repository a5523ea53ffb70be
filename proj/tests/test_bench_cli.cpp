#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "oracle.hpp"
#include "ttamen/experiment.hpp"
#include "ttamen/io.hpp"

using namespace ttamen;

namespace {

const fs::path kData = TTAMEN_TEST_DATA;

/// Fresh scratch directory per test.
fs::path scratch() {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    const fs::path p = fs::temp_directory_path() / "ttamen_tests" / info->test_suite_name() / info->name();
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void spit(const fs::path& p, const std::string& s) {
    std::ofstream out(p, std::ios::binary);
    out << s;
}

} // namespace

// ---- TT file I/O ---------------------------------------------------------------------------

TEST(TtIo, VectorRoundTripByteIdentical) {
    const fs::path dir = scratch();
    std::mt19937_64 rng(1);
    const TTVector x = oracle::random_tt({3, 5, 2, 4}, {1, 2, 4, 3, 1}, rng);
    tt_io_write(x, dir / "x.json");
    const TTVector back = read_ttvector(dir / "x.json");
    EXPECT_EQ(back.ranks(), x.ranks());
    for (Index k = 0; k < x.dim(); ++k) EXPECT_EQ(back.core(k).data(), x.core(k).data());
    tt_io_write(back, dir / "y.json");
    EXPECT_EQ(slurp(dir / "x.bin"), slurp(dir / "y.bin"));
    EXPECT_EQ(slurp(dir / "x.bin").size(), 8u * (6 + 40 + 24 + 12));
}

TEST(TtIo, MatrixRoundTrip) {
    const fs::path dir = scratch();
    std::mt19937_64 rng(2);
    const TTMatrix a = oracle::random_ttm({2, 3, 2}, {1, 3, 2, 1}, rng);
    tt_io_write(a, dir / "a.json");
    const TTObject obj = tt_io_read(dir / "a.json");
    ASSERT_TRUE(std::holds_alternative<TTMatrix>(obj));
    const TTMatrix& b = std::get<TTMatrix>(obj);
    EXPECT_EQ(oracle::dense(b), oracle::dense(a));
    tt_io_write(b, dir / "b.json");
    EXPECT_EQ(slurp(dir / "a.bin"), slurp(dir / "b.bin"));
    EXPECT_THROW(read_ttvector(dir / "a.json"), FormatError);
}

TEST(TtIo, ManifestFields) {
    const fs::path dir = scratch();
    tt_io_write(TTVector::ones(std::vector<Index>{2, 3}), dir / "v.json");
    const json j = json::parse(slurp(dir / "v.json"));
    EXPECT_EQ(j["type"], "ttvector");
    EXPECT_EQ(j["dtype"], "f64le");
    EXPECT_EQ(j["core_order"], "left_rank_fastest");
    EXPECT_EQ(j["mode_sizes"], json({2, 3}));
    EXPECT_EQ(j["ranks"], json({1, 1, 1}));
    EXPECT_EQ(j["blob"], "v.bin");
}

TEST(TtIo, TruncatedBlob) {
    const fs::path dir = scratch();
    std::mt19937_64 rng(3);
    tt_io_write(oracle::random_tt({3, 3}, {1, 2, 1}, rng), dir / "x.json");
    std::string blob = slurp(dir / "x.bin");
    blob.resize(blob.size() - 8);
    spit(dir / "x.bin", blob);
    EXPECT_THROW(tt_io_read(dir / "x.json"), SizeMismatch);
}

TEST(TtIo, MalformedManifests) {
    const fs::path dir = scratch();
    tt_io_write(TTVector::ones(std::vector<Index>{2, 2}), dir / "ok.json");
    const json good = json::parse(slurp(dir / "ok.json"));
    auto expect_format_error = [&](json j, const char* what) {
        spit(dir / "ok.json", j.dump());
        EXPECT_THROW(tt_io_read(dir / "ok.json"), FormatError) << what;
    };
    json j = good;
    j["dtype"] = "f32le";
    expect_format_error(j, "dtype");
    j = good;
    j["type"] = "ttensor";
    expect_format_error(j, "type");
    j = good;
    j["ranks"] = {1, 1};
    expect_format_error(j, "ranks length");
    j = good;
    j["ranks"] = {2, 1, 1};
    expect_format_error(j, "boundary rank");
    j = good;
    j.erase("mode_sizes");
    expect_format_error(j, "missing sizes");
    j = good;
    j["core_order"] = "right_rank_fastest";
    expect_format_error(j, "core order");
    spit(dir / "ok.json", "{ not json");
    EXPECT_THROW(tt_io_read(dir / "ok.json"), FormatError);
    EXPECT_THROW(tt_io_read(dir / "missing.json"), IoError);
}

TEST(TtIo, AlternateImplementationFixture) {
    const json dense = json::parse(slurp(kData / "numpy_dense.json"));
    const TTVector v = read_ttvector(kData / "numpy_vector.json");
    const auto ev = dense["vector"].get<std::vector<double>>();
    const Vector vd = to_dense(v);
    ASSERT_EQ(vd.size(), static_cast<Index>(ev.size()));
    for (Index i = 0; i < vd.size(); ++i) EXPECT_NEAR(vd(i), ev[i], 1e-13 * (1 + std::abs(ev[i]))) << i;

    const TTMatrix m = read_ttmatrix(kData / "numpy_matrix.json");
    const auto em = dense["matrix"].get<std::vector<std::vector<double>>>();
    const Matrix md = to_dense(m);
    ASSERT_EQ(md.rows(), static_cast<Index>(em.size()));
    for (Index i = 0; i < md.rows(); ++i)
        for (Index j = 0; j < md.cols(); ++j) EXPECT_NEAR(md(i, j), em[i][j], 1e-13 * (1 + std::abs(em[i][j])));
}

// ---- convergence logs ----------------------------------------------------------------------

TEST(Log, EmptyRunHeaderOnly) {
    const fs::path dir = scratch();
    write_log(ConvergenceLog{}, dir / "log.csv");
    EXPECT_EQ(slurp(dir / "log.csv"), "sweep,wall_time_s,rel_residual,a_norm_error,max_rank,local_converged\n");
    EXPECT_TRUE(read_log(dir / "log.csv").empty());
}

TEST(Log, MissingErrorIsEmptyField) {
    ConvergenceLog log;
    SweepRecord r;
    r.sweep = 1;
    r.wall_time = 0.5;
    r.rel_residual = 0.25;
    r.max_rank = 3;
    log.sweeps.push_back(r);
    r.sweep = 2;
    r.a_norm_error = 0.125;
    r.local_converged = true;
    log.sweeps.push_back(r);
    const std::string csv = log_csv(log);
    EXPECT_NE(csv.find("\n1,0.5,0.25,,3,0\n"), std::string::npos) << csv;
    EXPECT_NE(csv.find("\n2,0.5,0.25,0.125,3,1\n"), std::string::npos) << csv;
    const fs::path dir = scratch();
    write_log(log, dir / "log.csv");
    const auto rows = read_log(dir / "log.csv");
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_FALSE(rows[0].a_norm_error);
    EXPECT_EQ(*rows[1].a_norm_error, 0.125);
}

TEST(Log, TwoSweepsMonotoneTime) {
    auto [a, y] = build_poisson({3, 8});
    SolverConfig cfg;
    cfg.tol = 1e-14;
    cfg.max_sweeps = 2;
    cfg.stop_on_local = false;
    cfg.kickrank = 1;
    const SolveResult r = amen_solve(a, y, std::nullopt, cfg);
    ASSERT_EQ(r.log.sweeps.size(), 2u);
    const fs::path dir = scratch();
    write_log(r.log, dir / "log.csv");
    const auto rows = read_log(dir / "log.csv");
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_LE(rows[0].wall_time, rows[1].wall_time);
    EXPECT_EQ(rows[1].rel_residual, r.log.sweeps[1].rel_residual); // %.17g round-trips
}

TEST(Log, UnwritablePath) {
    const fs::path dir = scratch();
    EXPECT_THROW(write_log(ConvergenceLog{}, dir / "no" / "such" / "log.csv"), IoError);
}

TEST(Log, GoldenPoissonRun) {
    // regenerate with: ttamen solve --problem poisson --d 3 --n 8 --tol 1e-8 --seed 1 --out <dir>
    const auto golden = read_log(kData / "golden_poisson_d3.csv");
    ExperimentSpec spec;
    spec.d = 3;
    spec.n = 8;
    spec.tol = 1e-8;
    spec.seed = 1;
    const ExperimentResult r = run_experiment(spec);
    ASSERT_EQ(r.solve.log.sweeps.size(), golden.size());
    for (std::size_t i = 0; i < golden.size(); ++i) {
        const auto& s = r.solve.log.sweeps[i];
        EXPECT_NEAR(s.rel_residual, golden[i].rel_residual, 1e-12) << i;
        ASSERT_TRUE(s.a_norm_error && golden[i].a_norm_error);
        EXPECT_NEAR(*s.a_norm_error, *golden[i].a_norm_error, 1e-12) << i;
        EXPECT_EQ(s.max_rank, golden[i].max_rank);
        EXPECT_EQ(s.local_converged, golden[i].local_converged);
    }
}

TEST(Log, DeterministicRepeat) {
    ExperimentSpec spec;
    spec.d = 3;
    spec.n = 8;
    spec.solver = "amen_als";
    spec.seed = 5;
    spec.initial_rank = 2;
    const auto a = run_experiment(spec).solve.log;
    const auto b = run_experiment(spec).solve.log;
    ASSERT_EQ(a.sweeps.size(), b.sweeps.size());
    for (std::size_t i = 0; i < a.sweeps.size(); ++i) {
        EXPECT_EQ(a.sweeps[i].rel_residual, b.sweeps[i].rel_residual);
        EXPECT_EQ(a.sweeps[i].max_rank, b.sweeps[i].max_rank);
    }
}

// ---- experiment specs ---------------------------------------------------------------------------

TEST(Spec, Defaults) {
    const ExperimentSpec s;
    EXPECT_EQ(s.tol, 1e-5);
    EXPECT_EQ(s.kickrank, 4);
    EXPECT_EQ(s.solver, "amen_svd");
    EXPECT_NO_THROW(s.validate());
}

TEST(Spec, ListsEveryOffendingField) {
    const json j = {{"problem", "heat"}, {"d", 0}, {"tol", -1.0}, {"solver", 3}, {"colour", "red"}};
    try {
        ExperimentSpec::from_json(j);
        FAIL() << "accepted an invalid spec";
    } catch (const SpecError& e) {
        const auto& is = e.issues();
        auto has = [&](const std::string& field) {
            return std::any_of(is.begin(), is.end(), [&](const std::string& s) { return s.rfind(field, 0) == 0; });
        };
        EXPECT_TRUE(has("problem"));
        EXPECT_TRUE(has("d:"));
        EXPECT_TRUE(has("tol"));
        EXPECT_TRUE(has("solver"));
        EXPECT_TRUE(has("colour"));
    }
}

TEST(Spec, CustomNeedsFiles) {
    ExperimentSpec s;
    s.problem = "custom";
    EXPECT_THROW(s.validate(), SpecError);
}

TEST(Spec, QttNeedsPowerOfTwo) {
    ExperimentSpec s;
    s.problem = "cme";
    s.n = 12;
    EXPECT_THROW(s.validate(), SpecError);
    s.qtt = false;
    EXPECT_NO_THROW(s.validate());
}

TEST(Spec, JsonRoundTrip) {
    ExperimentSpec s;
    s.problem = "cme_time";
    s.d = 3;
    s.n = 8;
    s.steps = 16;
    s.max_rank = 12;
    s.alpha0 = 0.9;
    const ExperimentSpec t = ExperimentSpec::from_json(s.to_json());
    EXPECT_EQ(t.to_json(), s.to_json());
}

TEST(Spec, OverlayKeepsBase) {
    ExperimentSpec base;
    base.d = 6;
    base.tol = 1e-7;
    const ExperimentSpec s = ExperimentSpec::from_json({{"n", 16}}, base);
    EXPECT_EQ(s.d, 6);
    EXPECT_EQ(s.tol, 1e-7);
    EXPECT_EQ(s.n, 16);
}

// ---- experiments ----------------------------------------------------------------------------------

TEST(Experiment, PoissonConverges) {
    const fs::path dir = scratch();
    ExperimentSpec spec;
    spec.d = 4;
    spec.n = 8;
    spec.tol = 1e-6;
    spec.out = dir.string();
    const ExperimentResult r = run_experiment(spec);
    EXPECT_EQ(r.exit_code, 0);
    EXPECT_LE(r.solve.log.final_residual(), 1e-6);
    // dense cross-check of the reported residual
    auto [a, y] = build_poisson({4, 8});
    const Vector res = oracle::dense(y) - oracle::dense(a) * oracle::dense(r.solve.x);
    EXPECT_LE(res.norm() / std::sqrt(4096.0), 1e-6);
    EXPECT_TRUE(fs::exists(dir / "log.csv"));
    EXPECT_TRUE(fs::exists(dir / "solution.bin"));
    const json s = json::parse(slurp(dir / "summary.json"));
    EXPECT_EQ(s["status"], "converged");
    EXPECT_EQ(s["reference"]["kind"], "dense");
    EXPECT_EQ(s["reference"]["error_norm"], "A");
    EXPECT_LT(s["final_a_norm_error"].get<double>(), 1e-5);
    EXPECT_TRUE(s["diagnostics"].contains("kantorovich"));
    const TTVector x = read_ttvector(dir / "solution.json");
    EXPECT_EQ(to_dense(x), to_dense(r.solve.x));
}

TEST(Experiment, CustomIdentity) {
    const fs::path dir = scratch();
    std::mt19937_64 rng(4);
    const std::vector<Index> sizes{3, 4, 2};
    tt_io_write(TTMatrix::identity(sizes), dir / "a.json");
    tt_io_write(oracle::random_tt(sizes, {1, 2, 2, 1}, rng), dir / "y.json");
    ExperimentSpec spec;
    spec.problem = "custom";
    spec.matrix = (dir / "a.json").string();
    spec.rhs = (dir / "y.json").string();
    const ExperimentResult r = run_experiment(spec);
    EXPECT_EQ(r.solve.log.sweeps.size(), 1u);
    EXPECT_LT(r.solve.log.final_residual(), 1e-14);
    EXPECT_EQ(r.exit_code, 0);
}

TEST(Experiment, CustomSizeMismatch) {
    const fs::path dir = scratch();
    tt_io_write(TTMatrix::identity(std::vector<Index>{3, 3}), dir / "a.json");
    tt_io_write(TTVector::ones(std::vector<Index>{3, 4}), dir / "y.json");
    ExperimentSpec spec;
    spec.problem = "custom";
    spec.matrix = (dir / "a.json").string();
    spec.rhs = (dir / "y.json").string();
    EXPECT_THROW(run_experiment(spec), Error);
    spec.rhs = (dir / "missing.json").string();
    EXPECT_THROW(run_experiment(spec), IoError);
}

TEST(Experiment, NotConvergedExitCode) {
    ExperimentSpec spec;
    spec.d = 3;
    spec.n = 8;
    spec.tol = 1e-14;
    spec.max_sweeps = 1;
    spec.kickrank = 1;
    spec.stop_on_local = false;
    EXPECT_EQ(run_experiment(spec).exit_code, 2);
}

TEST(Experiment, CmeSingleStepAgainstDense) {
    ExperimentSpec spec;
    spec.problem = "cme";
    spec.d = 2;
    spec.n = 8;
    spec.steps = 16;
    spec.tol = 1e-10;
    const ExperimentResult r = run_experiment(spec);
    EXPECT_EQ(r.summary["problem"]["symmetric"], false);
    EXPECT_EQ(r.summary["reference"]["error_norm"], "euclidean");
    EXPECT_EQ(r.summary["problem"]["dim"], 6); // quantized
    EXPECT_LT(r.summary["final_a_norm_error"].get<double>(), 1e-8);
}

TEST(Experiment, SymmetrizedAndTightReference) {
    ExperimentSpec spec;
    spec.problem = "cme_time";
    spec.d = 2;
    spec.n = 4;
    spec.steps = 8;
    spec.tol = 1e-6;
    spec.solver = "amen_sym";
    spec.reference = "tight";
    const ExperimentResult r = run_experiment(spec);
    EXPECT_EQ(r.solve.log.method, "amen_sym");
    EXPECT_EQ(r.summary["problem"]["normal_equations"], true);
    EXPECT_EQ(r.summary["reference"]["kind"], "tight");
    EXPECT_LT(r.summary["final_a_norm_error"].get<double>(), 1e-3);
}

TEST(Experiment, AllSolversRun) {
    for (const char* solver : {"amen_svd", "amen_chol", "amen_als", "als", "dmrg"}) {
        ExperimentSpec spec;
        spec.d = 3;
        spec.n = 8;
        spec.solver = solver;
        spec.initial_rank = 2;
        const ExperimentResult r = run_experiment(spec);
        EXPECT_FALSE(r.solve.log.sweeps.empty()) << solver;
        if (std::string(solver) != "als") EXPECT_EQ(r.exit_code, 0) << solver;
    }
}
