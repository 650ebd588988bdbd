#include "gqc/oracle.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace gqc;
using std::numbers::pi;

TEST(ManufacturedH, ZeroSolution) {
    auto s = GridSpec::box(2, 8);
    auto ops = build_operators(s);
    auto h = manufactured_h(parse_coefficient("0", s), make_problem(s, "1", "1", "0", -1.0), ops);
    EXPECT_EQ(h.values.norm(), 0.0);
}

TEST(ManufacturedH, QuadraticMidpoint) {
    auto s = GridSpec::box(1, 16);
    auto ops = build_operators(s);
    auto p = make_problem(s, "1", "1", "0", -1.0);
    auto us = parse_coefficient("x1*(1-x1)", s);
    auto h = manufactured_h(us, p, ops);
    // The midpoint gradient vanishes; the discrete quadratic term there is
    // 2(e^{-h²} - 1 + h²)/h² with h = 1/16 (both one-sided differences are -h²).
    const double hs = 1.0 / 16;
    const double q = 2 * (std::exp(-hs * hs) - 1 + hs * hs) / (hs * hs);
    EXPECT_NEAR(h.values[7], 2.25 - q, 1e-12);
    EXPECT_NEAR(h.values[7], 2.25, 1.01 * hs * hs);
    EXPECT_LE(residual_P(us.cached, p.with_h(h), ops).values.cwiseAbs().maxCoeff(), 1e-12);
}

TEST(ManufacturedH, SineProductRoundTrip) {
    auto s = GridSpec::box(2, 32);
    auto ops = build_operators(s);
    auto p = make_problem(s, "1", "1", "0", 0.0);
    auto us = parse_coefficient("sin(pi*x1)*sin(pi*x2)", s);
    auto h = manufactured_h(us, p, ops);
    EXPECT_LE(residual_P(us.cached, p.with_h(h), ops).values.cwiseAbs().maxCoeff(), 1e-12);
    // Close to 2π²u* - |∇u*|² away from the discretisation error.
    auto analytic = parse_coefficient(
        "2*pi^2*sin(pi*x1)*sin(pi*x2) - pi^2*(cos(pi*x1)^2*sin(pi*x2)^2 + sin(pi*x1)^2*cos(pi*x2)^2)", s);
    const double e32 = (h.values - analytic.values()).cwiseAbs().maxCoeff();
    EXPECT_LE(e32, 0.1);
    auto s64 = GridSpec::box(2, 64);
    auto o64 = build_operators(s64);
    auto h64 = manufactured_h(parse_coefficient("sin(pi*x1)*sin(pi*x2)", s64), make_problem(s64, "1", "1", "0", 0.0), o64);
    auto a64 = parse_coefficient(
        "2*pi^2*sin(pi*x1)*sin(pi*x2) - pi^2*(cos(pi*x1)^2*sin(pi*x2)^2 + sin(pi*x1)^2*cos(pi*x2)^2)", s64);
    EXPECT_NEAR(e32 / (h64.values - a64.values()).cwiseAbs().maxCoeff(), 4.0, 0.3);
}

TEST(ManufacturedH, RejectsBoundaryIncompatible) {
    auto s = GridSpec::box(1, 16);
    auto ops = build_operators(s);
    EXPECT_THROW(manufactured_h(parse_coefficient("1 + x1", s), make_problem(s, "1", "1", "0", 0.0), ops), DomainError);
}

TEST(DenseEigenOracle, MatchesFirstEigen) {
    auto s = GridSpec::box(1, 16);
    auto ops = build_operators(s);
    auto c = GridFunction::constant(s, 1.0);
    const double g = dense_eigen_oracle(c, ops);
    EXPECT_NEAR(g, pi * pi, 0.01 * pi * pi);
    EXPECT_NEAR(first_eigen(c, ops).gamma / g, 1.0, 1e-8);
    EXPECT_NEAR(dense_eigen_oracle(GridFunction::constant(s, 2.0), ops), g / 2, 1e-12 * g);
    auto ind = parse_coefficient("indicator(1, 0.5, 1)", s).cached;
    EXPECT_NEAR(first_eigen(ind, ops).gamma / dense_eigen_oracle(ind, ops), 1.0, 1e-8);
}

TEST(DenseEigenOracle, Refusals) {
    auto big = GridSpec::box(2, 20);
    auto ops = build_operators(big);
    EXPECT_THROW(dense_eigen_oracle(GridFunction::constant(big, 1.0), ops), SpecError);
    auto s = GridSpec::box(1, 16);
    auto o = build_operators(s);
    EXPECT_THROW(dense_eigen_oracle(GridFunction::zeros(s), o), DomainError);
}

TEST(FdGradientCheck, QuadraticCase) {
    auto s = GridSpec::box(1, 16);
    auto ops = build_operators(s);
    TransformedProblem tp{GridFunction::zeros(s), 1.0, GridFunction::zeros(s)};
    auto v = parse_coefficient("sin(3*x1)*x1*(1-x1)", s).cached;
    EXPECT_LE(fd_gradient_check(tp, v, ops), 1e-9);
}

TEST(FdGradientCheck, GenericCase) {
    auto s = GridSpec::box(2, 8);
    auto ops = build_operators(s);
    TransformedProblem tp{parse_coefficient("-1 - x1", s).cached, 1.0, parse_coefficient("0.5 + x2", s).cached};
    auto v = parse_coefficient("sin(pi*x1)*sin(pi*x2)", s).cached;
    EXPECT_LE(fd_gradient_check(tp, v, ops), 1e-6);
    auto big = GridSpec::box(1, 32);
    EXPECT_THROW(fd_gradient_check(TransformedProblem{GridFunction::zeros(big), 1.0, GridFunction::zeros(big)},
                                   GridFunction::zeros(big), build_operators(big)),
                 SpecError);
}

TEST(FdGradientCheck, LinearTermAtZero) {
    auto s = GridSpec::box(1, 16);
    auto ops = build_operators(s);
    TransformedProblem tp{parse_coefficient("-1", s).cached, 1.0, parse_coefficient("1 + x1", s).cached};
    auto g = functional_I(GridFunction::zeros(s), tp, ops).grad.values;
    std::mt19937_64 rng(5);
    std::normal_distribution<double> dist;
    for (int k = 0; k < 5; ++k) {
        Vector e(g.size());
        for (auto& x : e) x = dist(rng);
        const double expect = -(ops.weights().cwiseProduct(tp.h.values)).dot(e);
        EXPECT_NEAR(g.dot(e), expect, 1e-12 * std::max(1.0, std::abs(expect)));
    }
}

TEST(ReferenceContinuation, ZeroBranch) {
    auto s = GridSpec::box(1, 16);
    auto ops = build_operators(s);
    ReferenceOptions o;
    o.lambda_max = 5.0;
    auto b = reference_continuation(make_problem(s, "1", "1", "0", -2.0), -2.0, ops, o);
    for (const auto& p : b.points) EXPECT_EQ(p.sup_norm, 0.0);
    EXPECT_TRUE(b.folds.empty());
}

TEST(ReferenceContinuation, AgreesWithTraceBranch) {
    auto s = GridSpec::box(1, 32);
    auto ops = build_operators(s);
    auto fam = make_problem(s, "1", "1", "0.1*sin(pi*x1)", -2.0, Profile::A2);
    auto ref = reference_continuation(fam, -2.0, ops);
    auto tb = trace_branch(fam, -2.0, ops);
    ASSERT_FALSE(ref.folds.empty());
    ASSERT_FALSE(tb.folds.empty());
    auto lbar = [](const Branch& b) {
        double m = -1e300;
        for (const auto& p : b.points) m = std::max(m, p.lambda);
        return m;
    };
    EXPECT_NEAR(lbar(ref) / lbar(tb), 1.0, 0.05);

    // Lower sub-branch: sup norms at matched λ within 2%.
    std::size_t top = 0;
    for (std::size_t i = 0; i < tb.points.size(); ++i) {
        if (tb.points[i].lambda > tb.points[top].lambda) top = i;
    }
    for (std::size_t i = 0; i < top; ++i) {
        const double l = tb.points[i].lambda;
        for (std::size_t j = 0; j + 1 < ref.points.size() && j < ref.folds.front(); ++j) {
            const auto& a = ref.points[j];
            const auto& c = ref.points[j + 1];
            if (a.lambda <= l && l <= c.lambda) {
                const double t = (l - a.lambda) / (c.lambda - a.lambda);
                const double interp = a.sup_norm + t * (c.sup_norm - a.sup_norm);
                EXPECT_NEAR(interp, tb.points[i].sup_norm, 0.02 * tb.points[i].sup_norm) << l;
                break;
            }
        }
    }
}

TEST(ReferenceContinuation, H0ViolatingBothBlowLeft) {
    auto s = GridSpec::box(2, 32);
    auto ops = build_operators(s);
    auto fam = make_problem(s, "1", "1", "6*pi^2", -2.0, Profile::A2);
    auto ref = reference_continuation(fam, -2.0, ops);
    auto tb = trace_branch(fam, -2.0, ops);
    EXPECT_LT(ref.points.back().lambda, 0.0);
    EXPECT_LT(tb.points.back().lambda, 0.0);
    EXPECT_EQ(tb.termination, "norm_cap");
    EXPECT_GT(ref.points.back().sup_norm, 10 * ref.points.front().sup_norm);
}
