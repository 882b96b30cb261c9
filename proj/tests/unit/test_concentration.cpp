#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "sparsemp/concentration.hpp"

using namespace sparsemp;

namespace {

ConcentrationInput input(Eigen::MatrixXd a, int q,
                         EntryDistribution xi = EntryDistribution::rademacher(),
                         EntryDistribution eta = EntryDistribution::rademacher()) {
    ConcentrationInput in;
    in.a = std::move(a);
    in.q = q;
    in.xi = xi;
    in.eta = eta;
    return in;
}

}  // namespace

TEST(BilinearExact, SmallExamples) {
    EXPECT_DOUBLE_EQ(bilinear_moment_exact(input(Eigen::MatrixXd::Ones(1, 1), 6)), 1.0);
    EXPECT_DOUBLE_EQ(bilinear_moment_exact(input(Eigen::MatrixXd::Identity(2, 2), 2)), 2.0);
    EXPECT_DOUBLE_EQ(bilinear_moment_exact(input(Eigen::MatrixXd::Zero(3, 3), 4)), 0.0);
    // xi1 eta1 + xi2 eta2 takes -2, 0, 2 with probabilities 1/4, 1/2, 1/4.
    EXPECT_DOUBLE_EQ(bilinear_moment_exact(input(Eigen::MatrixXd::Identity(2, 2), 4)), 8.0);
}

TEST(BilinearExact, SecondMomentIsFrobeniusSquared) {
    const Eigen::MatrixXd a = gaussian_matrix(4, 3, 1, 0);
    EXPECT_NEAR(bilinear_moment_exact(input(a, 2)), a.squaredNorm(), 1e-12);
}

TEST(BilinearExact, ScalesAsPowerQ) {
    const Eigen::MatrixXd a = gaussian_matrix(3, 3, 2, 0);
    for (int q : {2, 4, 8}) {
        const double base = bilinear_moment_exact(input(a, q));
        const double scaled = bilinear_moment_exact(input(-1.7 * a, q));
        EXPECT_NEAR(scaled, std::pow(1.7, q) * base, 1e-12 * scaled);
        const auto r1 = moment_bound_rhs(input(a, q)), r2 = moment_bound_rhs(input(-1.7 * a, q));
        EXPECT_NEAR(r2.norm_q, std::pow(1.7, q) * r1.norm_q, 1e-12 * r2.norm_q);
        EXPECT_NEAR(r2.sum_L_q, std::pow(1.7, q) * r1.sum_L_q, 1e-12 * r2.sum_L_q);
        EXPECT_NEAR(r2.sum_abs_q, std::pow(1.7, q) * r1.sum_abs_q, 1e-12 * r2.sum_abs_q);
    }
}

TEST(BilinearExact, Unsupported) {
    EXPECT_THROW(bilinear_moment_exact(input(Eigen::MatrixXd::Identity(2, 2), 2,
                                             EntryDistribution::gaussian())),
                 UnsupportedError);
    EXPECT_THROW(bilinear_moment_exact(input(Eigen::MatrixXd::Identity(9, 9), 2)), UnsupportedError);
    EXPECT_THROW(bilinear_moment_exact(input(Eigen::MatrixXd::Identity(2, 2), 3)), ParameterError);
}

TEST(BilinearMc, AgreesWithExactOnIdentity) {
    const auto in = input(Eigen::MatrixXd::Identity(2, 2), 2);
    const auto e = bilinear_moment_mc(in, 100000, 9);
    EXPECT_LE(std::abs(e.mean - 2.0), 3.0 * e.stderr_);
    EXPECT_THROW(bilinear_moment_mc(in, 999, 9), ParameterError);
}

TEST(BilinearMc, GaussianIdentitySecondMoment) {
    for (int k : {1, 3, 5}) {
        const auto in = input(Eigen::MatrixXd::Identity(k, k), 2, EntryDistribution::gaussian(),
                              EntryDistribution::gaussian());
        const auto e = bilinear_moment_mc(in, 200000, 10 + k);
        EXPECT_LE(std::abs(e.mean - k), 3.0 * e.stderr_) << k;
    }
}

TEST(BilinearMc, StandardErrorShrinksLikeRootTwo) {
    const auto in = input(gaussian_matrix(3, 3, 4, 0), 4);
    const auto a = bilinear_moment_mc(in, 50000, 1), b = bilinear_moment_mc(in, 100000, 2);
    EXPECT_NEAR(a.stderr_ / b.stderr_, std::sqrt(2.0), 0.2 * std::sqrt(2.0));
}

TEST(BilinearMc, ThreadCountInvariant) {
    const auto in = input(gaussian_matrix(4, 4, 5, 0), 4);
    const auto a = bilinear_moment_mc(in, 20000, 3, 1), b = bilinear_moment_mc(in, 20000, 3, 4);
    EXPECT_EQ(a.mean, b.mean);
    EXPECT_EQ(a.stderr_, b.stderr_);
}

TEST(MomentBoundRhs, CoefficientArithmetic) {
    const auto r = moment_bound_rhs(input(Eigen::MatrixXd::Identity(2, 2), 8));
    EXPECT_DOUBLE_EQ(r.A1, std::pow(8.0, 12) * 2.0);
    EXPECT_DOUBLE_EQ(r.A3, std::pow(8.0, 16));
    // literal: 8^12 * 2^{2/8} * 1^{3}
    EXPECT_NEAR(r.A2, std::pow(8.0, 12) * std::pow(2.0, 0.25), 1e-3);
    EXPECT_TRUE(r.a2_defined);
    const auto y = moment_bound_rhs(input(Eigen::MatrixXd::Identity(2, 2), 8), A2Reading::young);
    EXPECT_DOUBLE_EQ(y.A2, std::pow(8.0, 12) * 2.0);
}

TEST(MomentBoundRhs, GaussianMomentsEnterA3AndA2) {
    const auto in = input(Eigen::MatrixXd::Identity(2, 2), 8, EntryDistribution::gaussian(),
                          EntryDistribution::rademacher());
    const auto lit = moment_bound_rhs(in), yng = moment_bound_rhs(in, A2Reading::young);
    EXPECT_NEAR(lit.A3, std::pow(8.0, 16) * 105.0, 1e-6 * lit.A3);
    // xi fourth moment 3 raised to 2(q-2)/(q-4) = 3 in the literal reading;
    // the eta (Rademacher) moment in the alternative one.
    EXPECT_NEAR(lit.A2, std::pow(8.0, 12) * std::pow(2.0, 0.25) * 27.0, 1e-6 * lit.A2);
    EXPECT_NEAR(yng.A2, std::pow(8.0, 12) * 2.0, 1e-6 * yng.A2);
}

TEST(MomentBoundRhs, SmallQOmitsA2) {
    const auto r = moment_bound_rhs(input(Eigen::MatrixXd::Identity(2, 2), 6));
    EXPECT_FALSE(r.a2_defined);
    EXPECT_EQ(r.A2, 0.0);
    EXPECT_FALSE(r.note.empty());
}

TEST(MomentBoundRhs, FunctionalsUseColumnNorms) {
    Eigen::MatrixXd a(2, 2);
    a << 3, 0, 4, 1;
    const auto r = moment_bound_rhs(input(a, 2));
    EXPECT_NEAR(r.norm_q, 26.0, 1e-12);
    EXPECT_NEAR(r.sum_L_q, 25.0 + 1.0, 1e-12);
    EXPECT_NEAR(r.sum_abs_q, 26.0, 1e-12);
    const Eigen::VectorXd L = column_norms(a);
    EXPECT_NEAR(L(0), 5.0, 1e-15);
    EXPECT_NEAR(frobenius_norm(a) * frobenius_norm(a), L.squaredNorm(), 1e-12);
}

TEST(MomentBoundRhs, ZeroMatrixGivesZeroRhs) {
    const auto r = moment_bound_rhs(input(Eigen::MatrixXd::Zero(3, 3), 8));
    for (double C : {1.0, 2.0, 100.0}) EXPECT_EQ(r.at(C), 0.0);
    EXPECT_EQ(fitted_constant(0.0, r), 1.0);
}

TEST(FittedConstant, SmallestAdmissibleC) {
    MomentBoundRhs r;
    r.q = 2;
    r.A1 = 1.0;
    r.norm_q = 1.0;
    EXPECT_EQ(fitted_constant(0.5, r), 1.0);
    const double c = fitted_constant(9.0, r);
    EXPECT_LE(9.0, r.at(c));
    EXPECT_NEAR(c, 3.0, 1e-12);
}

TEST(ConcentrationReport, RegressionCorpusAtQ8) {
    double worst = 1.0;
    for (std::uint64_t t = 0; t < 100; ++t) {
        const auto in = input(gaussian_matrix(5, 5, 1234, t), 8);
        const auto rep = concentration_report(in, true, 0, 0);
        ASSERT_LE(rep.lhs, rep.rhs.at(1.0)) << t;
        ASSERT_GE(rep.fitted_C, 1.0);
        ASSERT_LE(rep.lhs, rep.rhs.at(rep.fitted_C));
        worst = std::max(worst, rep.fitted_C);
    }
    EXPECT_LE(worst, 4.0);
}

TEST(ConcentrationReport, JsonAndCsv) {
    const auto rep = concentration_report(input(Eigen::MatrixXd::Identity(2, 2), 2), true, 0, 0);
    const auto j = to_json_value(rep);
    EXPECT_EQ(j["lhs"].get<double>(), 2.0);
    EXPECT_TRUE(j["lhs_stderr"].is_null());
    EXPECT_EQ(j["a2_reading"], "literal");
    std::ostringstream os;
    write_corpus_csv(os, {rep});
    EXPECT_EQ(os.str().substr(0, 29), "trial,lhs,A1,A2,A3,fitted_C\n0");
}
