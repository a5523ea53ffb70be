#include <gtest/gtest.h>

#include <random>

#include "oracle.hpp"
#include "ttamen/algebra.hpp"
#include "ttamen/ortho.hpp"
#include "ttamen/qtt.hpp"

using namespace ttamen;

namespace {

std::vector<Index> sz(std::initializer_list<Index> l) { return l; }

} // namespace

// ---- indices ------------------------------------------------------------------------

TEST(Index, SingleModeIsIdentity) {
    const auto s = sz({5});
    EXPECT_EQ(flat_index(MultiIndex{2}, s), 2);
}

TEST(Index, TwoModesLittleEndian) {
    const auto s = sz({2, 3});
    EXPECT_EQ(flat_index(MultiIndex{1, 0}, s), 1);
    EXPECT_EQ(flat_index(MultiIndex{0, 2}, s), 4);
}

TEST(Index, BijectionAgainstEnumeration) {
    const auto s = sz({2, 3});
    std::vector<bool> seen(6, false);
    for (Index i2 = 0; i2 < 3; ++i2)
        for (Index i1 = 0; i1 < 2; ++i1) {
            const Index f = flat_index(MultiIndex{i1, i2}, s);
            EXPECT_EQ(f, i1 + 2 * i2);
            EXPECT_FALSE(seen[f]);
            seen[f] = true;
            EXPECT_EQ(multi_index(f, s), (MultiIndex{i1, i2}));
        }
}

TEST(Index, BigEndianRoundTrip) {
    const auto s = sz({2, 3, 4});
    for (Index f = 0; f < 24; ++f) {
        const auto mi = multi_index(f, s, Endian::big);
        EXPECT_EQ(mi[2] + 4 * (mi[1] + 3 * mi[0]), f);
        EXPECT_EQ(flat_index(mi, s, Endian::big), f);
    }
}

TEST(Index, OutOfRange) {
    const auto s = sz({2, 3});
    EXPECT_THROW(flat_index(MultiIndex{2, 0}, s), BoundsError);
    EXPECT_THROW(flat_index(MultiIndex{0, -1}, s), BoundsError);
    EXPECT_THROW(multi_index(6, s), BoundsError);
}

// ---- entries and dense expansion ------------------------------------------------------

TEST(EvalEntry, SingleCore) {
    Core3 c(1, 4, 1);
    c.data() << 1, 2, 3, 4;
    const TTVector x({c});
    for (Index i = 0; i < 4; ++i) EXPECT_EQ(eval_entry(x, MultiIndex{i}), c(0, i, 0));
}

TEST(EvalEntry, OnesTrain) {
    const auto x = TTVector::ones(sz({2, 3, 2}));
    for (Index f = 0; f < 12; ++f) EXPECT_EQ(eval_entry(x, multi_index(f, x.mode_sizes())), 1.0);
}

TEST(EvalEntry, MatchesBruteForceContraction) {
    std::mt19937_64 rng(3);
    const auto x = oracle::random_tt({2, 2, 2}, {1, 2, 2, 1}, rng);
    for (Index f = 0; f < 8; ++f) {
        const auto mi = oracle::digits(f, {2, 2, 2});
        // explicit triple sum over the rank indices
        double s = 0;
        for (Index a = 0; a < 2; ++a)
            for (Index b = 0; b < 2; ++b) s += x.core(0)(0, mi[0], a) * x.core(1)(a, mi[1], b) * x.core(2)(b, mi[2], 0);
        EXPECT_NEAR(eval_entry(x, mi), s, 1e-14 * (1 + std::abs(s)));
    }
}

TEST(EvalEntry, Bounds) {
    const auto x = TTVector::ones(sz({2, 3}));
    EXPECT_THROW(eval_entry(x, MultiIndex{0, 3}), BoundsError);
}

TEST(ToDense, SingleCore) {
    Core3 c(1, 3, 1);
    c.data() << 4, 5, 6;
    EXPECT_EQ(to_dense(TTVector({c})), c.data());
}

TEST(ToDense, RankOneIsOuterProduct) {
    Core3 a(1, 2, 1), b(1, 3, 1);
    a.data() << 1, 2;
    b.data() << 3, 4, 5;
    const Vector v = to_dense(TTVector({a, b}));
    for (Index j = 0; j < 3; ++j)
        for (Index i = 0; i < 2; ++i) EXPECT_EQ(v[i + 2 * j], a.data()[i] * b.data()[j]);
}

TEST(ToDense, EveryEntryMatchesEvalEntry) {
    std::mt19937_64 rng(4);
    const auto x = oracle::random_tt({3, 2, 4}, {1, 2, 3, 1}, rng);
    const Vector v = to_dense(x);
    for (Index f = 0; f < v.size(); ++f) EXPECT_NEAR(v[f], eval_entry(x, multi_index(f, x.mode_sizes())), 1e-13);
    EXPECT_LE(oracle::rel(v, oracle::dense(x)), 1e-14);
}

TEST(ToDense, CapRefusal) {
    const auto x = TTVector::ones(sz({16, 16, 16}));
    EXPECT_THROW(to_dense(x, 1000), DenseCapExceeded);
}

TEST(ToDense, OperatorMatchesBruteForce) {
    std::mt19937_64 rng(5);
    const auto a = oracle::random_ttm({2, 3, 2}, {1, 2, 2, 1}, rng);
    EXPECT_LE(oracle::rel(to_dense(a), oracle::dense(a)), 1e-14);
}

// ---- interfaces --------------------------------------------------------------------------

TEST(Interface, LastLeqIsFullVector) {
    std::mt19937_64 rng(6);
    const auto x = oracle::random_tt({2, 3, 2}, {1, 2, 2, 1}, rng);
    const Matrix p = interface_matrix(x, 3, Side::leq);
    ASSERT_EQ(p.cols(), 1);
    EXPECT_LE(oracle::rel(Vector(p.col(0)), oracle::dense(x)), 1e-14);
}

TEST(Interface, LeftOrthogonalHasOrthonormalColumns) {
    std::mt19937_64 rng(7);
    const auto x = orthogonalize(oracle::random_tt({3, 3, 3}, {1, 3, 2, 1}, rng), Direction::left, 2);
    for (Index k = 1; k <= 2; ++k) {
        const Matrix p = interface_matrix(x, k, Side::leq);
        EXPECT_LE((p.transpose() * p - Matrix::Identity(p.cols(), p.cols())).norm(), 1e-12);
    }
}

TEST(Interface, ProductIsUnfolding) {
    std::mt19937_64 rng(8);
    const auto x = oracle::random_tt({2, 3, 4}, {1, 2, 3, 1}, rng);
    const Vector v = oracle::dense(x);
    for (Index k = 1; k < 3; ++k) {
        const Matrix l = interface_matrix(x, k, Side::leq);
        const Matrix r = interface_matrix(x, k, Side::gt);
        const Matrix unf = Eigen::Map<const Matrix>(v.data(), l.rows(), r.cols());
        EXPECT_LE(oracle::rel(Matrix(l * r), unf), 1e-14);
    }
    EXPECT_THROW(interface_matrix(x, 0, Side::leq), BoundsError);
}

// ---- orthogonalization ----------------------------------------------------------------------

TEST(Orthogonalize, AlreadyLeftOrthogonalUnchanged) {
    std::mt19937_64 rng(9);
    const auto x = orthogonalize(oracle::random_tt({2, 3, 2, 2}, {1, 2, 3, 2, 1}, rng), Direction::left, 3);
    const auto y = orthogonalize(x, Direction::left, 3);
    EXPECT_EQ(y.ortho().left, x.ortho().left);
    EXPECT_LE(oracle::rel(oracle::dense(y), oracle::dense(x)), 1e-15);
}

TEST(Orthogonalize, NormTelescopes) {
    std::mt19937_64 rng(10);
    const auto x = oracle::random_tt({3, 2, 3, 2}, {1, 2, 3, 2, 1}, rng);
    const auto y = orthogonalize(x, Direction::left, 3);
    EXPECT_NEAR(y.core(3).norm(), oracle::dense(x).norm(), 1e-12 * oracle::dense(x).norm());
    EXPECT_TRUE(ortho_tag_holds(y));
}

TEST(Orthogonalize, RepresentationFidelityBothDirections) {
    std::mt19937_64 rng(11);
    for (int t = 0; t < 20; ++t) {
        const auto s = oracle::random_shape(rng, 4, 1 << 12);
        const auto x = oracle::random_tt(s.sizes, s.ranks, rng);
        const Vector v = oracle::dense(x);
        const Index d = x.dim();
        for (Index pivot = 0; pivot < d; ++pivot) {
            const auto l = orthogonalize(x, Direction::left, pivot);
            const auto r = orthogonalize(x, Direction::right, pivot);
            EXPECT_LE(oracle::rel(oracle::dense(l), v), 1e-12);
            EXPECT_LE(oracle::rel(oracle::dense(r), v), 1e-12);
            EXPECT_TRUE(ortho_tag_holds(l));
            EXPECT_TRUE(ortho_tag_holds(r));
            EXPECT_GE(l.ortho().left, pivot);
            EXPECT_LE(r.ortho().right, pivot + 1);
        }
    }
}

TEST(Orthogonalize, ZeroCoresStayValid) {
    auto x = TTVector::zeros(sz({2, 3, 2}));
    const auto y = orthogonalize(x, Direction::left, 2);
    EXPECT_EQ(oracle::dense(y).norm(), 0.0);
    EXPECT_TRUE(ortho_tag_holds(y));
}

// ---- rounding ------------------------------------------------------------------------------------

TEST(Round, ZeroToleranceKeepsVector) {
    std::mt19937_64 rng(12);
    const auto x = oracle::random_tt({3, 3, 3}, {1, 2, 2, 1}, rng);
    const auto y = round(x, 0.0);
    for (Index k = 0; k < 4; ++k) EXPECT_LE(y.ranks()[k], x.ranks()[k]);
    EXPECT_LE(oracle::rel(oracle::dense(y), oracle::dense(x)), 1e-13);
    EXPECT_TRUE(ortho_tag_holds(y));
    EXPECT_EQ(y.ortho().right, 1);
}

TEST(Round, SumOfCopiesCompressesBack) {
    std::mt19937_64 rng(13);
    const auto x = oracle::random_tt({3, 4, 3, 2}, {1, 3, 3, 2, 1}, rng);
    const auto s = tt_add(x, x);
    EXPECT_EQ(s.ranks()[2], 6);
    const auto y = round(s, 1e-14);
    EXPECT_EQ(y.ranks(), x.ranks());
    EXPECT_LE(oracle::rel(oracle::dense(y), Vector(2 * oracle::dense(x))), 1e-13);
}

TEST(Round, ContractAtLooseTolerance) {
    std::mt19937_64 rng(14);
    for (int t = 0; t < 10; ++t) {
        const auto x = oracle::random_tt({4, 4, 4, 4}, {1, 4, 4, 4, 1}, rng);
        const Vector v = oracle::dense(x);
        for (double eps : {0.5, 1e-2, 1e-5, 1e-8}) {
            const Vector w = oracle::dense(round(x, eps));
            EXPECT_LE((v - w).norm(), eps * v.norm());
        }
    }
}

TEST(Round, MaxRankCap) {
    std::mt19937_64 rng(15);
    const auto x = oracle::random_tt({4, 4, 4}, {1, 4, 4, 1}, rng);
    EXPECT_LE(round(x, 0.0, 2).max_rank(), 2);
}

TEST(Round, NegativeToleranceRejected) {
    EXPECT_THROW(round(TTVector::ones(sz({2, 2})), -1.0), Error);
}

// ---- algebra ---------------------------------------------------------------------------------------

TEST(Add, ZeroCoefficientLeavesX) {
    std::mt19937_64 rng(16);
    const auto x = oracle::random_tt({2, 3}, {1, 2, 1}, rng);
    const auto y = oracle::random_tt({2, 3}, {1, 2, 1}, rng);
    EXPECT_LE(oracle::rel(oracle::dense(tt_add(x, y, 1.0, 0.0)), oracle::dense(x)), 1e-15);
}

TEST(Add, CancellationRoundsToZero) {
    std::mt19937_64 rng(17);
    const auto x = oracle::random_tt({3, 3, 3}, {1, 3, 3, 1}, rng);
    const auto z = round(tt_add(x, x, 1.0, -1.0), 1e-12);
    EXPECT_EQ(z.max_rank(), 1);
    EXPECT_EQ(oracle::dense(z).norm(), 0.0);
}

TEST(Add, MatchesDenseAndRanksAdd) {
    std::mt19937_64 rng(18);
    const auto x = oracle::random_tt({2, 3, 2}, {1, 2, 2, 1}, rng);
    const auto y = oracle::random_tt({2, 3, 2}, {1, 1, 2, 1}, rng);
    const auto s = tt_add(x, y, 0.5, -2.0);
    EXPECT_EQ(s.ranks(), (std::vector<Index>{1, 3, 4, 1}));
    EXPECT_LE(oracle::rel(oracle::dense(s), Vector(0.5 * oracle::dense(x) - 2.0 * oracle::dense(y))), 1e-14);
    EXPECT_THROW(tt_add(x, TTVector::ones(sz({2, 3, 3}))), SizeMismatch);
}

TEST(Matvec, IdentityOperator) {
    std::mt19937_64 rng(19);
    const auto x = oracle::random_tt({2, 3, 2}, {1, 2, 2, 1}, rng);
    const auto y = tt_matvec(TTMatrix::identity(x.mode_sizes()), x);
    EXPECT_LE(oracle::rel(oracle::dense(y), oracle::dense(x)), 1e-15);
}

TEST(Matvec, KroneckerSumMatchesDense) {
    std::mt19937_64 rng(20);
    std::normal_distribution<double> nd;
    Matrix l1(3, 3), l2(4, 4);
    for (Index i = 0; i < 9; ++i) l1.data()[i] = nd(rng);
    for (Index i = 0; i < 16; ++i) l2.data()[i] = nd(rng);
    // I (x) L2 + L1 (x) I as a rank-2 train
    Core4 c0(1, 3, 3, 2), c1(2, 4, 4, 1);
    c0.set_block(0, 0, Matrix::Identity(3, 3));
    c0.set_block(0, 1, l1);
    c1.set_block(0, 0, l2);
    c1.set_block(1, 0, Matrix::Identity(4, 4));
    const TTMatrix a({c0, c1});
    const auto x = oracle::random_tt({3, 4}, {1, 2, 1}, rng);
    const Matrix ad = oracle::kron_sum({l1, l2});
    EXPECT_LE(oracle::rel(oracle::dense(tt_matvec(a, x)), Vector(ad * oracle::dense(x))), 1e-14);
}

TEST(Matvec, RanksMultiply) {
    std::mt19937_64 rng(21);
    const auto a = oracle::random_ttm({2, 2, 2}, {1, 3, 2, 1}, rng);
    const auto x = oracle::random_tt({2, 2, 2}, {1, 2, 2, 1}, rng);
    EXPECT_EQ(tt_matvec(a, x).ranks(), (std::vector<Index>{1, 6, 4, 1}));
    EXPECT_THROW(tt_matvec(a, TTVector::ones(sz({2, 2}))), SizeMismatch);
}

TEST(Dot, LeftOrthogonalNormIsLastCore) {
    std::mt19937_64 rng(22);
    const auto x = orthogonalize(oracle::random_tt({2, 3, 2}, {1, 2, 2, 1}, rng), Direction::left, 2);
    EXPECT_NEAR(tt_dot(x, x), x.core(2).data().squaredNorm(), 1e-12 * tt_dot(x, x));
}

TEST(Dot, OrthogonalRankOne) {
    Core3 a(1, 2, 1), b(1, 2, 1), c(1, 2, 1);
    a.data() << 1, 0;
    b.data() << 0, 1;
    c.data() << 1, 1;
    EXPECT_NEAR(tt_dot(TTVector({a, c}), TTVector({b, c})), 0.0, 1e-14);
}

TEST(Dot, MatchesDense) {
    std::mt19937_64 rng(23);
    const auto x = oracle::random_tt({3, 2, 3}, {1, 2, 3, 1}, rng);
    const auto y = oracle::random_tt({3, 2, 3}, {1, 3, 2, 1}, rng);
    const double ref = oracle::dense(x).dot(oracle::dense(y));
    EXPECT_NEAR(tt_dot(x, y), ref, 1e-12 * oracle::dense(x).norm() * oracle::dense(y).norm());
    EXPECT_NEAR(tt_norm(x), oracle::dense(x).norm(), 1e-12 * oracle::dense(x).norm());
    EXPECT_NEAR(tt_norm_stable(x), oracle::dense(x).norm(), 1e-12 * oracle::dense(x).norm());
}

TEST(Dot, NormOfCancellationClampsToZero) {
    std::mt19937_64 rng(24);
    const auto x = oracle::random_tt({3, 3}, {1, 3, 1}, rng);
    EXPECT_GE(tt_norm(tt_add(x, x, 1.0, -1.0)), 0.0);
}

// ---- QTT -----------------------------------------------------------------------------------------------

TEST(Qtt, BinaryModesUnchanged) {
    std::mt19937_64 rng(25);
    const auto x = oracle::random_tt({2, 2, 2}, {1, 2, 2, 1}, rng);
    const auto q = qtt_quantize(x);
    EXPECT_EQ(q.mode_sizes(), x.mode_sizes());
    EXPECT_LE(oracle::rel(oracle::dense(q), oracle::dense(x)), 1e-13);
}

TEST(Qtt, FourEntryVector) {
    Core3 c(1, 4, 1);
    c.data() << 1, 2, 3, 4;
    const auto q = qtt_quantize(TTVector({c}));
    ASSERT_EQ(q.mode_sizes(), sz({2, 2}));
    // least significant bit first: entry (b0, b1) = value at b0 + 2 b1
    for (Index b1 = 0; b1 < 2; ++b1)
        for (Index b0 = 0; b0 < 2; ++b0) EXPECT_NEAR(eval_entry(q, MultiIndex{b0, b1}), 1.0 + b0 + 2 * b1, 1e-13);
}

TEST(Qtt, DenseRoundTrip) {
    std::mt19937_64 rng(26);
    const auto x = oracle::random_tt({8, 8}, {1, 3, 1}, rng);
    const auto q = qtt_quantize(x);
    EXPECT_EQ(q.dim(), 6);
    EXPECT_LE(oracle::rel(oracle::dense(q), oracle::dense(x)), 1e-13);
}

TEST(Qtt, OperatorRepresentsSameMatrix) {
    std::mt19937_64 rng(27);
    const auto a = oracle::random_ttm({4, 8}, {1, 2, 1}, rng);
    const auto q = qtt_quantize(a);
    EXPECT_EQ(q.dim(), 5);
    EXPECT_LE(oracle::rel(oracle::dense(q), oracle::dense(a)), 1e-13);
}

TEST(Qtt, NonPowerRejected) {
    EXPECT_THROW(qtt_quantize(TTVector::ones(sz({3, 4}))), SizeMismatch);
}

// ---- homomorphism property over random shapes ---------------------------------------------------------------

TEST(Algebra, DenseHomomorphism) {
    std::mt19937_64 rng(28);
    for (int t = 0; t < 30; ++t) {
        const auto s = oracle::random_shape(rng, 4, 1 << 10);
        const auto x = oracle::random_tt(s.sizes, s.ranks, rng);
        const auto y = oracle::random_tt(s.sizes, s.ranks, rng);
        std::vector<Index> ra(s.ranks.size(), 2);
        ra.front() = ra.back() = 1;
        const auto a = oracle::random_ttm(s.sizes, ra, rng);
        const Vector xd = oracle::dense(x), yd = oracle::dense(y);
        EXPECT_LE(oracle::rel(oracle::dense(tt_add(x, y, 2.0, -3.0)), Vector(2 * xd - 3 * yd)), 1e-13);
        EXPECT_LE(oracle::rel(oracle::dense(tt_matvec(a, x)), Vector(oracle::dense(a) * xd)), 1e-12);
        EXPECT_NEAR(tt_dot(x, y), xd.dot(yd), 1e-12 * xd.norm() * yd.norm());
    }
}
