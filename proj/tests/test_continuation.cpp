#include "gqc/oracle.hpp"

#include <gtest/gtest.h>

#include <numbers>

using namespace gqc;
using std::numbers::pi;

namespace {

struct FoldFamily {
    GridSpec s = GridSpec::box(1, 64);
    DiscreteOperators ops = build_operators(s);
    ProblemData fam = make_problem(s, "1", "1", "0.1*sin(pi*x1)", -2.0, Profile::A2);
    Branch b = trace_branch(fam, -2.0, ops);
    double gamma1 = first_eigen(fam.c.cached, ops).gamma;
};

const FoldFamily& fold_family() {
    static const FoldFamily f;
    return f;
}

} // namespace

TEST(TraceBranch, TrivialBranch) {
    auto s = GridSpec::box(1, 32);
    auto ops = build_operators(s);
    auto fam = make_problem(s, "1", "1", "0", -2.0);
    const double g1 = first_eigen(fam.c.cached, ops).gamma;
    ContinuationOptions co;
    co.lambda_max = g1 - 0.1;
    auto b = trace_branch(fam, -2.0, ops, co);
    EXPECT_EQ(b.termination, "lambda_max");
    EXPECT_TRUE(b.folds.empty());
    EXPECT_DOUBLE_EQ(b.points.front().lambda, -2.0);
    EXPECT_GT(b.points.back().lambda, g1 - 0.1 - 2.5);
    for (const auto& p : b.points) {
        EXPECT_EQ(p.sup_norm, 0.0);
        EXPECT_LE(p.lambda, g1 - 0.1);
    }
    auto a = analyze_branch(b, g1, ops);
    EXPECT_EQ(a.blowup_side, "none");
    EXPECT_EQ(a.fold_count, 0u);
    EXPECT_THROW(analyze_branch(b, g1, ops, 1.0), Error);
}

TEST(TraceBranch, FoldAndRightBlowup) {
    const auto& f = fold_family();
    const auto& b = f.b;
    EXPECT_EQ(b.termination, "norm_cap");
    ASSERT_FALSE(b.folds.empty());
    auto a = analyze_branch(b, f.gamma1, f.ops);
    EXPECT_TRUE(a.crosses_zero);
    EXPECT_GT(a.lambda_bar, 0.0);
    EXPECT_LT(a.lambda_bar, pi * pi);
    EXPECT_LE(a.lambda_bar, f.gamma1 - 0.05);
    EXPECT_GT(a.margin, 0.0);
    EXPECT_EQ(a.blowup_side, "right");
    EXPECT_GT(a.lambda_at_termination, 0.0);
    for (const auto& p : b.points) {
        EXPECT_TRUE(std::isfinite(p.sup_norm));
        EXPECT_GE(p.u.values.minCoeff(), -1e-8);
    }
}

TEST(TraceBranch, StoredPointInvariants) {
    const auto& f = fold_family();
    const auto& b = f.b;
    const double tol = SolveOptions{}.tol_residual;
    for (std::size_t i = 0; i < b.points.size(); ++i) {
        const auto& p = b.points[i];
        EXPECT_TRUE(p.converged);
        EXPECT_NEAR(p.sup_norm, p.u.values.cwiseAbs().maxCoeff(), 1e-12);
        EXPECT_NEAR(p.h10_norm, h10_norm(p.u.values, f.ops), 1e-12 * std::max(1.0, p.h10_norm));
        EXPECT_LE(scaled_residual(p.u, f.fam.with_lambda(p.lambda), f.ops), tol) << i;
        if (i > 0) {
            EXPECT_GT(p.s, b.points[i - 1].s);
            EXPECT_LE(p.step, 2.0 * ContinuationOptions{}.ds_max + 1e-12);
        }
    }
    for (auto i : b.folds) {
        EXPECT_LT((b.points[i + 1].lambda - b.points[i].lambda) * (b.points[i].lambda - b.points[i - 1].lambda), 0.0);
    }
    EXPECT_EQ(detect_folds(b.points), b.folds);
}

TEST(TraceBranch, FoldBisection) {
    const auto& f = fold_family();
    const auto i = f.b.folds.front();
    auto loc = locate_fold(f.b, i, f.ops, 1e-8);
    EXPECT_GE(loc.lambda, f.b.points[i].lambda - 1e-12);
    EXPECT_LE(loc.width, 1e-8 * 4);
    EXPECT_LE(scaled_residual(loc.u, f.fam.with_lambda(loc.lambda), f.ops), 1e-9);
    EXPECT_THROW(locate_fold(f.b, 0, f.ops), std::invalid_argument);
}

TEST(TraceBranch, SolutionPairAtHalfFold) {
    const auto& f = fold_family();
    auto a0 = analyze_branch(f.b, f.gamma1, f.ops);
    auto a = analyze_branch(f.b, f.gamma1, f.ops, a0.lambda_bar / 2);
    ASSERT_TRUE(a.pair.has_value());
    const auto& sp = *a.pair;
    EXPECT_TRUE(sp.report_low.converged);
    EXPECT_TRUE(sp.report_high.converged);
    EXPECT_GE(sp.sup_high - sp.sup_low, 1e-2);
    EXPECT_GE(sp.u_low.values.minCoeff(), -1e-8);
    EXPECT_GE(sp.u_high.values.minCoeff(), -1e-8);
    EXPECT_THROW(analyze_branch(f.b, f.gamma1, f.ops, -0.5), DomainError);
    EXPECT_THROW(analyze_branch(f.b, f.gamma1, f.ops, a0.lambda_bar + 0.1), DomainError);
}

TEST(TraceBranch, AprioriShadow) {
    const auto& f = fold_family();
    auto a = analyze_branch(f.b, f.gamma1, f.ops);
    const double cap = ContinuationOptions{}.norm_cap;
    // Segment with λ ≥ λ̄/4 on the lower sub-branch, up to the fold.
    std::size_t top = 0;
    for (std::size_t i = 0; i < f.b.points.size(); ++i) {
        if (f.b.points[i].lambda > f.b.points[top].lambda) top = i;
    }
    for (std::size_t i = 0; i <= top; ++i) {
        if (f.b.points[i].lambda >= a.lambda_bar / 4) {
            EXPECT_LE(f.b.points[i].sup_norm, cap / 2);
        }
    }
}

TEST(TraceBranch, LeftBlowup) {
    auto s = GridSpec::box(2, 16);
    auto ops = build_operators(s);
    auto fam = make_problem(s, "1", "1", "6*pi^2", -2.0, Profile::A2);
    auto b = trace_branch(fam, -2.0, ops);
    EXPECT_EQ(b.termination, "norm_cap");
    EXPECT_LT(b.points.back().lambda, 0.0);
    for (std::size_t i = 1; i < b.points.size(); ++i) EXPECT_GT(b.points[i].sup_norm, b.points[i - 1].sup_norm);
    EXPECT_EQ(analyze_branch(b, 2 * pi * pi, ops).blowup_side, "left");
}

TEST(TraceBranch, LambdaMinAndMaxPoints) {
    auto s = GridSpec::box(1, 32);
    auto ops = build_operators(s);
    auto fam = make_problem(s, "1", "1", "0.1*sin(pi*x1)", -2.0, Profile::A2);
    ContinuationOptions co;
    co.max_points = 5;
    auto b = trace_branch(fam, -2.0, ops, co);
    EXPECT_EQ(b.termination, "max_points");
    EXPECT_EQ(b.points.size(), 5u);
}

TEST(TraceBranch, SeedFailure) {
    auto s = GridSpec::box(1, 32);
    auto ops = build_operators(s);
    auto fam = make_problem(s, "1", "1", "200*sin(pi*x1)", -0.5, Profile::A2);
    SolveOptions so;
    so.max_newton = 1;
    so.max_fixed_point = 1;
    EXPECT_THROW(trace_branch(fam, -0.5, ops, {}, so), ConvergenceError);
}

TEST(TraceBranch, ProductDistance) {
    auto s = GridSpec::box(1, 16);
    auto ops = build_operators(s);
    Vector z = Vector::Zero(static_cast<Eigen::Index>(s.size()));
    EXPECT_DOUBLE_EQ(product_distance(1.0, z, 4.0, z, 0.0, ops), 3.0);
    Vector u = parse_coefficient("sin(pi*x1)", s).values();
    const double n = h10_norm(u, ops);
    EXPECT_NEAR(product_distance(0.0, u, 0.0, z, 0.0, ops), n, 1e-14);
    EXPECT_NEAR(product_distance(0.0, u, 0.0, z, 1.0, ops), n / std::sqrt(2.0), 1e-14);
}
