#include "gqc/problem.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>

using namespace gqc;

TEST(ParseCoefficient, ZeroAndPeak) {
    auto s1 = GridSpec::box(1, 8);
    auto z = parse_coefficient("0", s1);
    EXPECT_EQ(z.values().norm(), 0.0);
    EXPECT_EQ(z.source, CoefficientSpec::Source::Constant);

    auto s2 = GridSpec::box(2, 8);
    auto c = parse_coefficient("sin(pi*x1)*sin(pi*x2)", s2);
    EXPECT_NEAR(c.values()[static_cast<Eigen::Index>(s2.linear_index({3, 3, 0}))], 1.0, 1e-15);
}

TEST(ParseCoefficient, Indicator) {
    auto s = GridSpec::box(1, 8);
    auto c = parse_coefficient("indicator(1, 0.5, 1.0)", s);
    for (std::size_t k = 0; k < s.size(); ++k) EXPECT_EQ(c.values()[static_cast<Eigen::Index>(k)], s.coordinate(k, 0) > 0.5 ? 1.0 : 0.0);
}

TEST(ParseCoefficient, Errors) {
    auto s = GridSpec::box(1, 8);
    EXPECT_THROW(parse_coefficient("x2", s), ParseError);
    try {
        parse_coefficient("1/(x1-0.5)", s);
        FAIL();
    } catch (const DomainError& e) {
        EXPECT_EQ(e.node(), 3u);
    }
    EXPECT_THROW(parse_coefficient("ln(x1-0.5)", s), DomainError);
}

TEST(SampledFile, RoundTripAndCountCheck) {
    auto s = GridSpec::box(2, 6);
    auto f = GridFunction::sample(s, [](const auto& x) { return std::exp(x[0]) / 3.0 - x[1]; });
    const auto path = (std::filesystem::temp_directory_path() / "gqc_sampled.txt").string();
    write_sampled_file(path, f);
    auto g = coefficient_from_file(path, s);
    EXPECT_EQ(g.source, CoefficientSpec::Source::File);
    EXPECT_EQ((g.values() - f.values).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_THROW(coefficient_from_file(path, GridSpec::box(2, 7)), SpecError);
    std::remove(path.c_str());
}

TEST(ValidateProfile, Examples) {
    auto s = GridSpec::box(1, 8);
    auto ok = validate_profile(make_problem(s, "1", "1", "1", 0.0, Profile::A2));
    EXPECT_TRUE(ok.passed);
    EXPECT_EQ(ok.mu1, 1.0);
    EXPECT_EQ(ok.mu2, 1.0);

    auto neg = validate_profile(make_problem(s, "-1", "1", "1", 0.0, Profile::A1));
    ASSERT_FALSE(neg.passed);
    EXPECT_EQ(neg.first_failure()->clause, "c ≥ 0");
    EXPECT_TRUE(neg.first_failure()->witness.has_value());

    auto zero = validate_profile(make_problem(s, "0", "1", "1", 0.0, Profile::A1));
    ASSERT_FALSE(zero.passed);
    EXPECT_EQ(zero.first_failure()->clause, "c ⪈ 0");
}

TEST(ValidateProfile, A2AndA3AndA5Clauses) {
    auto s = GridSpec::box(1, 8);
    EXPECT_EQ(validate_profile(make_problem(s, "1", "1", "-1", 0.0, Profile::A2)).first_failure()->clause, "h ≥ 0");
    EXPECT_EQ(validate_profile(make_problem(s, "1", "x1", "1", 0.0, Profile::A2)).passed, true);
    EXPECT_EQ(validate_profile(make_problem(s, "1", "x1-0.5", "1", 0.0, Profile::A2)).first_failure()->clause,
              "μ ≥ μ₁ > 0");
    EXPECT_EQ(validate_profile(make_problem(s, "1", "x1", "1", -1.0, Profile::A3)).first_failure()->clause,
              "μ constant > 0");
    EXPECT_EQ(validate_profile(make_problem(s, "1", "2", "1", 1.0, Profile::A3)).first_failure()->clause, "d = λc ≤ 0");
    EXPECT_TRUE(validate_profile(make_problem(s, "1", "2", "1", -1.0, Profile::A3)).passed);
    EXPECT_TRUE(validate_profile(make_problem(s, "x1", "sin(9*x1)", "-1", -1.0, Profile::A5)).passed);
}

TEST(ProblemData, PositiveNegativeParts) {
    auto s = GridSpec::box(2, 9);
    auto p = make_problem(s, "1", "sin(7*x1)", "cos(5*x1*x2) - 0.3", -1.0);
    const Vector& h = p.h_values();
    EXPECT_EQ((p.h_plus - p.h_minus - h).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(p.h_plus.cwiseProduct(p.h_minus).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_GE(p.h_plus.minCoeff(), 0.0);
    EXPECT_GE(p.h_minus.minCoeff(), 0.0);
    EXPECT_DOUBLE_EQ(p.mu_plus_sup, p.mu_values().maxCoeff());
    EXPECT_DOUBLE_EQ(p.mu_minus_sup, -p.mu_values().minCoeff());
}

TEST(ProblemData, ZeroMaskMonotoneInThreshold) {
    auto s = GridSpec::box(1, 16);
    auto p = make_problem(s, "indicator(1, 0.5, 1) * x1", "1", "1", 0.0);
    EXPECT_EQ(count(p.c_zero_mask), 8u);  // x = 1/16 .. 8/16
    std::size_t prev = 0;
    for (double tau : {0.0, 0.55, 0.7, 0.9, 2.0}) {
        const auto n = count(zero_mask(p.c_values(), tau));
        EXPECT_GE(n, prev);
        prev = n;
    }
    EXPECT_EQ(prev, s.size());
}

TEST(ProblemData, WithLambdaAndWithH) {
    auto s = GridSpec::box(1, 8);
    auto p = make_problem(s, "1", "1", "1", -1.0);
    EXPECT_EQ(p.with_lambda(2.0).lambda, 2.0);
    auto q = p.with_h(GridFunction::constant(s, -2.0));
    EXPECT_EQ(q.h_minus.maxCoeff(), 2.0);
    EXPECT_EQ(q.h_plus.maxCoeff(), 0.0);
    EXPECT_THROW(p.with_h(GridFunction::zeros(GridSpec::box(1, 9))), SpecError);
}
