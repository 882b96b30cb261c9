#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "sparsemp/locallaw.hpp"

using namespace sparsemp;

namespace {

ModelParams params(std::size_t n, std::size_t m, double p, std::uint64_t seed) {
    ModelParams mp;
    mp.n = n;
    mp.m = m;
    mp.p = p;
    mp.seed = seed;
    return mp;
}

// Correction terms for an n = m = 2 row by explicit formulas on hand-built minors.
struct HandTerms {
    cplx e1, e2, e3;
};

HandTerms hand_row_terms(const SampledMatrix& x, ComplexPoint z, int j) {
    const double m = 2.0, p = x.p;
    // Rows remaining after deleting j form a 1 x 2 matrix r; its block
    // resolvent is the inverse of [[-z, r], [r^T, -z I]].
    const int other = 1 - j;
    Eigen::MatrixXcd V = Eigen::MatrixXcd::Zero(3, 3);
    for (int l = 0; l < 2; ++l) V(0, 1 + l) = V(1 + l, 0) = x.scaled(other, l);
    const Eigen::MatrixXcd minor = (V - z.z() * Eigen::MatrixXcd::Identity(3, 3)).inverse();
    Eigen::MatrixXcd W = Eigen::MatrixXcd::Zero(4, 4);
    for (int a = 0; a < 2; ++a)
        for (int l = 0; l < 2; ++l) W(a, 2 + l) = W(2 + l, a) = x.scaled(a, l);
    const Eigen::MatrixXcd full = (W - z.z() * Eigen::MatrixXcd::Identity(4, 4)).inverse();

    HandTerms h;
    h.e1 = (minor(1, 1) + minor(2, 2) - full(2, 2) - full(3, 3)) / m;
    h.e2 = 0.0;
    for (int l = 0; l < 2; ++l) {
        const double xv = x.raw(j, l), xi = x.mask(j, l);
        h.e2 += (xv * xv * xi - p) * minor(1 + l, 1 + l);
    }
    h.e2 /= m * p;
    const double a0 = x.raw(j, 0) * x.mask(j, 0), a1 = x.raw(j, 1) * x.mask(j, 1);
    h.e3 = (a0 * a1 * minor(1, 2) + a1 * a0 * minor(2, 1)) / (m * p);
    return h;
}

}  // namespace

TEST(LambdaN, SelfComparisonAndConjugateSymmetry) {
    const auto x = sample_matrix(params(60, 120, 0.3, 1), 0);
    const auto spec = singular_values_only(x);
    for (double u : {0.3, 0.9, 1.4}) {
        const cplx a = lambda_n(spec, {u, 0.05}, 0.5), b = lambda_n(spec, {-u, 0.05}, 0.5);
        EXPECT_LT(std::abs(a - (-std::conj(b))), 1e-12);
        EXPECT_NEAR(std::abs(a), std::abs(b), 1e-12);
    }
    EXPECT_EQ(stieltjes_esd(spec, {1.0, 0.2}) - stieltjes_esd(spec, {1.0, 0.2}), cplx(0.0));
}

TEST(IdentityConvention, UniqueConventionAtTwoByTwo) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto x = sample_matrix(params(2, 2, 0.8, seed), 0);
        if (x.mask.cast<int>().sum() == 0) continue;
        const auto pass = passing_conventions(x, {0.35, 0.4}, 1e-10);
        ASSERT_EQ(pass.size(), 1u) << "seed " << seed;
        EXPECT_EQ(pass.front(), kResolvedConvention);
    }
    EXPECT_FALSE(kResolvedConvention == kLiteralConvention);
}

TEST(IdentityConvention, StableAcrossSizes) {
    for (auto [n, m] : {std::pair{2u, 4u}, std::pair{7u, 13u}, std::pair{30u, 45u}}) {
        const auto x = sample_matrix(params(n, m, 0.5, 11), 0);
        const auto pass = passing_conventions(x, {1.05, 0.07}, 1e-8);
        ASSERT_EQ(pass.size(), 1u);
        EXPECT_EQ(pass.front(), kResolvedConvention);
    }
}

TEST(CorrectionTerms, MatchHandComputationAtTwoByTwo) {
    const auto x = sample_matrix(params(2, 2, 1.0, 5), 0);
    const ComplexPoint z{0.45, 0.3};
    for (int j = 0; j < 2; ++j) {
        const auto rep = correction_terms(x, z, j, Side::row);
        const auto h = hand_row_terms(x, z, j);
        EXPECT_LT(std::abs(rep.eps1 - h.e1), 1e-13);
        EXPECT_LT(std::abs(rep.eps2 - h.e2), 1e-13);
        EXPECT_LT(std::abs(rep.eps3 - h.e3), 1e-13);
        EXPECT_EQ(rep.eps_total, rep.eps1 + rep.eps2 + rep.eps3);
    }
}

TEST(CorrectionTerms, NullMatrix) {
    // X = 0: eps1 and eps3 vanish, while the centring leaves
    // eps2 = -(1/m) sum_l R^{(j)}_{l+n,l+n} = 1/z.
    const auto x = assemble_sample(Eigen::MatrixXd::Zero(3, 5), MaskMatrix::Ones(3, 5), 0.4);
    const ComplexPoint z{0.6, 0.25};
    const auto a = self_consistency_audit(x, z);
    for (const auto& r : a.rows) {
        EXPECT_LT(std::abs(r.eps1), 1e-15);
        EXPECT_LT(std::abs(r.eps3), 1e-15);
        EXPECT_LT(std::abs(r.eps2 - 1.0 / z.z()), 1e-14);
        EXPECT_LT(std::abs(r.diag + 1.0 / z.z()), 1e-15);
        EXPECT_LT(r.identity_residual, 1e-14);
    }
    EXPECT_LT(a.max_residual, 1e-14);
}

TEST(CorrectionTerms, TraceTermBound) {
    CounterRng rng = CounterRng::stream(3, 0);
    for (int t = 0; t < 1000; ++t) {
        const auto x = sample_matrix(params(4, 7, 0.6, 1000 + t), 0);
        const ComplexPoint z{-2.0 + 4.0 * rng.uniform(), 0.01 + rng.uniform()};
        const auto j = static_cast<std::size_t>(rng.uniform() * 4);
        const auto r = correction_terms(x, z, j, Side::row);
        ASSERT_LE(std::abs(r.eps1), 2.0 / (7.0 * z.v));
    }
}

TEST(CorrectionTerms, IndexErrors) {
    const auto x = sample_matrix(params(3, 5, 0.5, 2), 0);
    EXPECT_THROW(correction_terms(x, {1.0, 0.1}, 3, Side::row), IndexError);
    EXPECT_THROW(correction_terms(x, {1.0, 0.1}, 5, Side::column), IndexError);
    EXPECT_NO_THROW(correction_terms(x, {1.0, 0.1}, 4, Side::column));
}

TEST(SelfConsistencyAudit, ExactAtModerateSize) {
    const auto x = sample_matrix(params(50, 100, 0.3, 7), 0);
    for (ComplexPoint z : {ComplexPoint{1.0, 0.05}, ComplexPoint{-0.6, 0.01}, ComplexPoint{0.1, 2.0}}) {
        const auto a = self_consistency_audit(x, z);
        EXPECT_LT(a.max_residual, 1e-8);
        EXPECT_EQ(a.rows.size(), 50u);
        EXPECT_EQ(a.columns.size(), 100u);
        EXPECT_GT(a.max_literal_residual, 1e-6);
        // The summed identity balances with +y Lambda s_n; the flipped sign does not.
        EXPECT_LT(a.sc_residual_plus, 1e-10);
        EXPECT_LT(std::abs(a.T_n - a.T_n_closed), 1e-10);
    }
}

TEST(SelfConsistencyAudit, SquareCaseUsesUnitAspect) {
    const auto x = sample_matrix(params(6, 6, 0.7, 8), 0);
    const auto a = self_consistency_audit(x, {0.4, 0.2});
    EXPECT_DOUBLE_EQ(a.y, 1.0);
    EXPECT_LT(a.max_residual, 1e-8);
}

TEST(SelfConsistencyAudit, ZeroCorrectionsRecoverQuadratic) {
    // With T_n = 0 and s_n = S the summed identity holds trivially:
    // s = S (1 + y (s - S) s) with s = S.
    const ComplexPoint z{0.8, 0.3};
    const double y = 0.4;
    const cplx S = stieltjes_mp(z, y);
    EXPECT_LT(std::abs(S - S * (1.0 + 0.0 + y * (S - S) * S)), 1e-16);
    // And for a perturbed s_n the residual equals |s - S(1 + y (s - S) s)| > 0.
    const cplx s = S + 0.01;
    EXPECT_GT(std::abs(s - S * (1.0 + y * (s - S) * s)), 1e-4);
}

TEST(SelfConsistencyAudit, RejectsLargeN) {
    const auto x = sample_matrix(params(201, 300, 0.1, 1), 0);
    EXPECT_THROW(self_consistency_audit(x, {1.0, 0.1}), ParameterError);
}

TEST(SelfConsistencyAudit, ThreadCountDoesNotChangeResult) {
    const auto x = sample_matrix(params(20, 35, 0.4, 9), 0);
    const auto a = self_consistency_audit(x, {0.9, 0.1}, true, 1e-8, 1);
    const auto b = self_consistency_audit(x, {0.9, 0.1}, true, 1e-8, 4);
    EXPECT_EQ(to_json_value(a).dump(), to_json_value(b).dump());
}

TEST(MultiscaleLadder, DepthAndFlags) {
    EXPECT_EQ(ladder_depth(0.1, 1.0, 2.0), 4u);
    EXPECT_EQ(ladder_depth(1.0, 1.0, 2.0), 0u);
    EXPECT_EQ(ladder_depth(2.0, 1.0, 2.0), 0u);
    EXPECT_THROW(ladder_depth(0.1, 1.0, 1.0), ParameterError);

    const ModelParams mp = params(100, 200, 0.5, 4);
    const auto spec = singular_values_only(sample_matrix(mp, 0));
    DomainSpec d;
    d.n = 100;
    d.a0 = 0.001;
    d.grid_u = 5;
    const auto open = multiscale_ladder(spec, d, 0.1, 1e9, 2.0, 0.5);
    EXPECT_EQ(open.k_v, 4u);
    ASSERT_EQ(open.levels.size(), 5u);
    EXPECT_NEAR(open.levels.back(), 1.6, 1e-15);
    EXPECT_TRUE(open.q_event);
    for (bool f : open.gamma_flags) EXPECT_TRUE(f);
    const auto closed = multiscale_ladder(spec, d, 0.1, 0.0, 2.0, 0.5);
    EXPECT_FALSE(closed.q_event);
    for (bool f : closed.gamma_flags) EXPECT_FALSE(f);
}

class ScanTest : public ::testing::Test {
protected:
    ModelParams mp = params(80, 160, 0.25, 21);
    DomainSpec d = [] {
        DomainSpec s;
        s.n = 80;
        s.a0 = 0.005;
        s.grid_u = 6;
        s.grid_v = 4;
        return s;
    }();
};

TEST_F(ScanTest, RatiosSupremumAndFittedK) {
    ScanOptions o;
    o.max_entry_stride = 3;
    o.candidate_K = {0.0, 1e9};
    const auto r = locallaw_scan(mp, d, 4, 1.0, o);
    ASSERT_EQ(r.per_point.size(), r.grid.size());
    ASSERT_EQ(r.per_replication.size(), 4u);
    double sup = 0.0;
    for (const auto& p : r.per_point) {
        EXPECT_GT(p.gamma, 0.0);
        EXPECT_DOUBLE_EQ(p.ratio_max, p.lambda_abs_max / p.gamma);
        sup = std::max(sup, p.ratio_max);
    }
    EXPECT_DOUBLE_EQ(r.sup_ratio, sup);
    EXPECT_EQ(r.fitted_K, r.sup_ratio);
    EXPECT_EQ(exceedance_rate(r, r.fitted_K), 0.0);
    EXPECT_EQ(r.exceedance.back().second, 0.0);
    EXPECT_EQ(r.exceedance[0].second, 1.0);
    EXPECT_EQ(r.exceedance[1].second, 0.0);
    EXPECT_EQ(r.nonfinite_count, 0u);
    EXPECT_LT(r.trace_residual_max, 1e-10);
    for (std::size_t i = 0; i < r.per_point.size(); ++i)
        EXPECT_EQ(std::isnan(r.per_point[i].max_entry), i % 3 != 0);
}

TEST_F(ScanTest, DeterministicAcrossThreadCounts) {
    ScanOptions a, b;
    a.threads = 1;
    b.threads = 3;
    const auto ra = locallaw_scan(mp, d, 5, 1.0, a), rb = locallaw_scan(mp, d, 5, 1.0, b);
    EXPECT_EQ(to_json_value(ra).dump(), to_json_value(rb).dump());
}

TEST_F(ScanTest, SpectrumOnlyModeSkipsMaxEntries) {
    ScanOptions o;
    o.max_entry_stride = 0;
    const auto r = locallaw_scan(mp, d, 2, 1.0, o);
    EXPECT_TRUE(std::isnan(r.max_entry_max));
    EXPECT_TRUE(to_json_value(r)["aggregates"]["max_entry_max"].is_null());
}

TEST_F(ScanTest, InvalidArguments) {
    EXPECT_THROW(locallaw_scan(mp, d, 0, 1.0), ParameterError);
    DomainSpec bad = d;
    bad.grid_u = 0;
    EXPECT_THROW(locallaw_scan(mp, bad, 1, 1.0), ParameterError);
    ModelParams sq = mp;
    sq.m = sq.n;
    EXPECT_THROW(locallaw_scan(sq, d, 1, 1.0), ParameterError);
}

TEST(LocalLawScan, SinglePointDenseCase) {
    ModelParams mp = params(2000, 4000, 1.0, 3);
    DomainSpec d;
    d.n = 2000;
    d.mu = 0.5;
    d.a0 = 0.001;
    d.grid_u = 1;
    d.grid_v = 1;
    ScanOptions o;
    o.max_entry_stride = 0;
    const auto r = locallaw_scan(mp, d, 1, 1.0, o);
    EXPECT_EQ(r.grid.size(), 2u);
    EXPECT_TRUE(std::isfinite(r.sup_ratio));
}

TEST(LambdaN, DenseGaussianCloseToLaw) {
    const ModelParams mp = params(4000, 8000, 1.0, 17);
    const auto spec = singular_values_only(sample_matrix(mp, 0));
    EXPECT_LT(std::abs(lambda_n(spec, {0.0, 1.0}, 0.5)), 0.05);
}

TEST(TnMoments, ZeroOrderAndErrors) {
    const ModelParams mp = params(20, 40, 1.0, 2);
    DomainSpec d;
    d.n = 20;
    d.a0 = 0.001;
    d.grid_u = 3;
    d.grid_v = 2;
    const auto r = tn_moment_study(mp, d, {1.0, 0.5}, 0, 1000);
    EXPECT_EQ(r.estimate, 1.0);
    EXPECT_THROW(tn_moment_study(mp, d, {1.0, 0.5}, 2, 0), ParameterError);
    EXPECT_THROW(tn_moment_study(mp, d, {1.0, 0.5}, 3, 1000), ParameterError);
    TnOptions closed;
    closed.gamma = 0.0;
    EXPECT_THROW(tn_moment_study(mp, d, {1.0, 0.5}, 2, 1000, closed), DegenerateConditioningError);
}

TEST(TnMoments, ClosedFormMatchesMinorsBasedTn) {
    const auto x = sample_matrix(params(15, 40, 0.5, 6), 0);
    const auto spec = singular_values(x);
    for (ComplexPoint z : {ComplexPoint{1.2, 0.1}, ComplexPoint{0.2, 0.6}}) {
        const auto a = self_consistency_audit(x, z);
        EXPECT_LT(std::abs(tn_closed_form(spec, z, 15.0 / 40.0) - a.T_n), 1e-11);
    }
}

TEST(TnMoments, DenseHundredEnvelopeRecorded) {
    const ModelParams mp = params(100, 200, 1.0, 8);
    DomainSpec d;
    d.n = 100;
    d.a0 = 0.01;
    d.grid_u = 5;
    d.grid_v = 2;
    const ComplexPoint z{1.0, 0.5};
    const auto r = tn_moment_study(mp, d, z, 2, 1000);
    EXPECT_TRUE(std::isfinite(r.estimate));
    EXPECT_GT(r.survivors, 0u);
    const double env = std::pow((1.0 / (100 * 0.5) + 1.0 / 100.0) * std::log(100.0), 2);
    EXPECT_NEAR(r.envelope, env, 1e-15);
    EXPECT_NEAR(r.fitted_C, std::sqrt(r.estimate / env), 1e-12);
}
