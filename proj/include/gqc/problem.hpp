#pragma once

// Problem instances  -Δu = λ c(x) u + μ(x)|∇u|² + h(x),  u = 0 on ∂Ω,
// their coefficient fields, and the assumption profiles they are checked against.

#include "gqc/expression.hpp"
#include "gqc/grid.hpp"

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace gqc {

/// A coefficient field together with where it came from.
struct CoefficientSpec {
    enum class Source { Constant, Expression, File };

    Source source = Source::Constant;
    double constant = 0.0;
    ExprPtr expression;
    std::string text;  // expression text or file path
    GridFunction cached;

    [[nodiscard]] const Vector& values() const { return cached.values; }
};

inline CoefficientSpec constant_coefficient(double value, const GridSpec& spec) {
    CoefficientSpec c;
    c.source = CoefficientSpec::Source::Constant;
    c.constant = value;
    std::ostringstream os;
    os << std::setprecision(17) << value;
    c.text = os.str();
    c.cached = GridFunction::constant(spec, value);
    c.cached.check_finite("coefficient");
    return c;
}

inline CoefficientSpec parse_coefficient(std::string_view text, const GridSpec& spec) {
    CoefficientSpec c;
    c.text = std::string(text);
    c.expression = parse_expression(text, spec.dim);
    c.source = c.expression->kind == Expr::Kind::Number ? CoefficientSpec::Source::Constant
                                                         : CoefficientSpec::Source::Expression;
    if (c.source == CoefficientSpec::Source::Constant) c.constant = c.expression->number;
    const Expr& e = *c.expression;
    c.cached = GridFunction::sample(spec, [&](const std::array<double, 3>& x) { return evaluate(e, x); });
    c.cached.check_finite("expression '" + c.text + "'");
    return c;
}

/// Reads a sampled-data file: whitespace separated values, one per interior
/// node in lexicographic order.
inline GridFunction read_sampled_file(const std::string& path, const GridSpec& spec) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open sampled data file '" + path + "'");
    std::vector<double> vals;
    std::string tok;
    while (in >> tok) {
        try {
            std::size_t used = 0;
            vals.push_back(std::stod(tok, &used));
            if (used != tok.size()) throw std::invalid_argument(tok);
        } catch (const std::exception&) {
            throw Error("'" + path + "': bad value '" + tok + "' at entry " + std::to_string(vals.size()));
        }
    }
    if (vals.size() != spec.size()) {
        throw SpecError("'" + path + "' has " + std::to_string(vals.size()) + " values, grid has " +
                        std::to_string(spec.size()) + " interior nodes");
    }
    GridFunction f(spec, Eigen::Map<const Vector>(vals.data(), static_cast<Eigen::Index>(vals.size())));
    f.check_finite("'" + path + "'");
    return f;
}

inline void write_sampled_file(const std::string& path, const GridFunction& f) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write '" + path + "'");
    char buf[40];
    for (Eigen::Index k = 0; k < f.values.size(); ++k) {
        std::snprintf(buf, sizeof buf, "%.17g\n", f.values[k]);
        out << buf;
    }
}

inline CoefficientSpec coefficient_from_file(const std::string& path, const GridSpec& spec) {
    CoefficientSpec c;
    c.source = CoefficientSpec::Source::File;
    c.text = path;
    c.cached = read_sampled_file(path, spec);
    return c;
}

enum class Profile { A1, A2, A3, A5 };

inline const char* to_string(Profile p) {
    switch (p) {
    case Profile::A1: return "A1";
    case Profile::A2: return "A2";
    case Profile::A3: return "A3";
    case Profile::A5: return "A5";
    }
    return "?";
}

inline std::optional<Profile> profile_from_string(std::string_view s) {
    if (s == "A1") return Profile::A1;
    if (s == "A2") return Profile::A2;
    if (s == "A3") return Profile::A3;
    if (s == "A5") return Profile::A5;
    return std::nullopt;
}

using NodeMask = std::vector<bool>;

/// Discrete complement of Supp c: nodes with |c| <= tau_c.
inline NodeMask zero_mask(const Vector& c, double tau_c) {
    NodeMask m(static_cast<std::size_t>(c.size()));
    for (Eigen::Index k = 0; k < c.size(); ++k) m[static_cast<std::size_t>(k)] = std::abs(c[k]) <= tau_c;
    return m;
}

inline std::size_t count(const NodeMask& m) { return static_cast<std::size_t>(std::count(m.begin(), m.end(), true)); }

/// Relative support threshold: tau_c = kSupportThreshold * max|c|.
inline constexpr double kSupportThreshold = 1e-12;

struct ProblemData {
    GridSpec spec;
    CoefficientSpec c;
    CoefficientSpec mu;
    CoefficientSpec h;
    double lambda = 0.0;
    double p_exponent = 0.0;  // declared integrability exponent; metadata for condition checks
    Profile profile = Profile::A1;

    // derived
    double mu_plus_sup = 0.0;
    double mu_minus_sup = 0.0;
    Vector h_plus;
    Vector h_minus;
    double tau_c = 0.0;
    NodeMask c_zero_mask;

    [[nodiscard]] const Vector& c_values() const { return c.values(); }
    [[nodiscard]] const Vector& mu_values() const { return mu.values(); }
    [[nodiscard]] const Vector& h_values() const { return h.values(); }

    /// μ constant across the grid (exactly).
    [[nodiscard]] bool mu_is_constant() const {
        const Vector& m = mu_values();
        return m.size() == 0 || (m.array() == m[0]).all();
    }

    [[nodiscard]] ProblemData with_lambda(double l) const {
        ProblemData p = *this;
        p.lambda = l;
        return p;
    }

    [[nodiscard]] ProblemData with_h(const GridFunction& hf) const {
        ProblemData p = *this;
        require_same_grid(hf.spec, spec, "with_h");
        p.h.source = CoefficientSpec::Source::File;
        p.h.expression.reset();
        p.h.text = "<derived>";
        p.h.cached = hf;
        p.refresh();
        return p;
    }

    void refresh() {
        const Vector& m = mu_values();
        const Vector& hv = h_values();
        mu_plus_sup = m.size() ? m.cwiseMax(0.0).maxCoeff() : 0.0;
        mu_minus_sup = m.size() ? (-m).cwiseMax(0.0).maxCoeff() : 0.0;
        h_plus = hv.cwiseMax(0.0);
        h_minus = (-hv).cwiseMax(0.0);
        const double cmax = c_values().size() ? c_values().cwiseAbs().maxCoeff() : 0.0;
        tau_c = kSupportThreshold * cmax;
        c_zero_mask = zero_mask(c_values(), tau_c);
    }
};

inline ProblemData make_problem(const GridSpec& spec, CoefficientSpec c, CoefficientSpec mu, CoefficientSpec h,
                                double lambda, Profile profile = Profile::A1, double p_exponent = 0.0) {
    spec.validate();
    require_same_grid(c.cached.spec, spec, "coefficient c");
    require_same_grid(mu.cached.spec, spec, "coefficient mu");
    require_same_grid(h.cached.spec, spec, "coefficient h");
    ProblemData p;
    p.spec = spec;
    p.c = std::move(c);
    p.mu = std::move(mu);
    p.h = std::move(h);
    p.lambda = lambda;
    p.profile = profile;
    p.p_exponent = p_exponent > 0.0 ? p_exponent : spec.dim / 2.0 + 1.0;
    p.refresh();
    return p;
}

/// Convenience: all three coefficients from expression text.
inline ProblemData make_problem(const GridSpec& spec, std::string_view c, std::string_view mu, std::string_view h,
                                double lambda, Profile profile = Profile::A1) {
    return make_problem(spec, parse_coefficient(c, spec), parse_coefficient(mu, spec), parse_coefficient(h, spec),
                        lambda, profile);
}

// --- profile validation ----------------------------------------------------

struct ClauseResult {
    std::string clause;
    bool holds = true;
    std::optional<std::size_t> witness;  // a violating node
};

struct ValidationReport {
    Profile profile = Profile::A1;
    bool passed = true;
    std::vector<ClauseResult> clauses;
    double mu1 = 0.0;  // min μ
    double mu2 = 0.0;  // max μ

    [[nodiscard]] const ClauseResult* first_failure() const {
        for (const auto& c : clauses) {
            if (!c.holds) return &c;
        }
        return nullptr;
    }
};

namespace detail {

template <typename Pred>
ClauseResult clause_all(std::string name, const Vector& v, Pred pred) {
    ClauseResult r{std::move(name), true, std::nullopt};
    for (Eigen::Index k = 0; k < v.size(); ++k) {
        if (!pred(v[k])) {
            r.holds = false;
            r.witness = static_cast<std::size_t>(k);
            break;
        }
    }
    return r;
}

template <typename Pred>
ClauseResult clause_some(std::string name, const Vector& v, Pred pred) {
    for (Eigen::Index k = 0; k < v.size(); ++k) {
        if (pred(v[k])) return {std::move(name), true, std::nullopt};
    }
    return {std::move(name), false, v.size() ? std::optional<std::size_t>(0) : std::nullopt};
}

} // namespace detail

inline ValidationReport validate_profile(const ProblemData& p) {
    ValidationReport r;
    r.profile = p.profile;
    const Vector& c = p.c_values();
    const Vector& mu = p.mu_values();
    const Vector& h = p.h_values();
    r.mu1 = mu.size() ? mu.minCoeff() : 0.0;
    r.mu2 = mu.size() ? mu.maxCoeff() : 0.0;
    const Vector d = p.lambda * c;
    auto nonneg = [](double x) { return x >= 0.0; };
    auto positive = [](double x) { return x > 0.0; };
    auto finite = [](double x) { return std::isfinite(x); };

    auto& cl = r.clauses;
    switch (p.profile) {
    case Profile::A1:
    case Profile::A2:
        cl.push_back(detail::clause_all("c ≥ 0", c, nonneg));
        cl.push_back(detail::clause_some("c ⪈ 0", c, positive));
        cl.push_back(detail::clause_all("μ ∈ L∞", mu, finite));
        if (p.profile == Profile::A2) {
            cl.push_back(detail::clause_all("h ≥ 0", h, nonneg));
            cl.push_back(detail::clause_some("h ⪈ 0", h, positive));
            cl.push_back(detail::clause_all("μ ≥ μ₁ > 0", mu, positive));
        }
        break;
    case Profile::A3: {
        ClauseResult constant{"μ constant > 0", p.mu_is_constant() && r.mu1 > 0.0, std::nullopt};
        if (!constant.holds) {
            for (Eigen::Index k = 0; k < mu.size(); ++k) {
                if (mu[k] <= 0.0 || mu[k] != mu[0]) {
                    constant.witness = static_cast<std::size_t>(k);
                    break;
                }
            }
        }
        cl.push_back(constant);
        cl.push_back(detail::clause_all("d = λc ≤ 0", d, [](double x) { return x <= 0.0; }));
        cl.push_back(detail::clause_all("h ≥ 0", h, nonneg));
        break;
    }
    case Profile::A5:
        cl.push_back(detail::clause_all("d = λc ≤ 0", d, [](double x) { return x <= 0.0; }));
        cl.push_back(detail::clause_all("μ ∈ L∞", mu, finite));
        break;
    }
    r.passed = r.first_failure() == nullptr;
    return r;
}

} // namespace gqc
