#pragma once

// Constant-μ change of variables v = (e^{μu} - 1)/μ and the semilinear problem
//
//   -Δv - μ h v = d g(v) + h,   d ≤ 0, h ≥ 0,
//
// solved by minimising its energy I.

#include "gqc/conditions.hpp"

#include <Eigen/SparseLU>

#include <cmath>
#include <string>
#include <vector>

namespace gqc {

struct GPair {
    double g = 0.0;
    double G = 0.0;
};

/// g(s) = (1/μ)(1+μ|s|) ln(1+μ|s|) sign(s) and its even primitive G.
inline GPair g_and_G(double s, double mu) {
    if (!(mu > 0.0)) throw DomainError("g_and_G: μ must be positive");
    const double a = std::abs(s);
    const double t = mu * a;
    GPair r;
    if (t < 0.05) {
        // (1+t)ln(1+t) = t + Σ_{k≥2} (-1)^k t^k / (k(k-1))
        double gs = t;
        double Gs = 0.5 * t * t;
        double tk = t;
        for (int k = 2; k <= 18; ++k) {
            tk *= -t;
            const double sign_k = -tk;  // (-1)^k t^k
            gs += sign_k / (k * (k - 1.0));
            Gs += sign_k * t / ((k + 1.0) * k * (k - 1.0));
        }
        r.g = gs / mu;
        r.G = Gs / (mu * mu);
    } else {
        const double l = std::log1p(t);
        r.g = (1.0 + t) * l / mu;
        r.G = ((1.0 + t) * (1.0 + t) * (2.0 * l - 1.0) + 1.0) / (4.0 * mu * mu);
    }
    if (s < 0.0) r.g = -r.g;
    return r;
}

/// g'(s) = 1 + ln(1 + μ|s|).
inline double g_prime(double s, double mu) { return 1.0 + std::log1p(mu * std::abs(s)); }

enum class Direction { Forward, Inverse };

/// Forward: w = (e^{μu} - 1)/μ. Inverse: u = ln(1 + μv)/μ, needs 1 + μv > 0.
inline GridFunction cole_hopf(const GridFunction& field, double mu, Direction dir) {
    if (!(mu > 0.0)) throw DomainError("cole_hopf: μ must be positive");
    Vector out(field.values.size());
    for (Eigen::Index k = 0; k < out.size(); ++k) {
        const double x = field.values[k];
        if (dir == Direction::Forward) {
            out[k] = std::expm1(mu * x) / mu;
        } else {
            if (!(1.0 + mu * x > 0.0)) {
                throw DomainError("cole_hopf inverse: 1 + μv <= 0", static_cast<std::size_t>(k));
            }
            out[k] = std::log1p(mu * x) / mu;
        }
    }
    return {field.spec, std::move(out)};
}

struct TransformedProblem {
    GridFunction d;
    double mu = 1.0;
    GridFunction h;

    void validate() const {
        require_same_grid(d.spec, h.spec, "TransformedProblem");
        if (!(mu > 0.0)) throw DomainError("transformed problem: μ must be a positive constant");
        for (Eigen::Index k = 0; k < d.values.size(); ++k) {
            if (d.values[k] > 0.0) throw DomainError("transformed problem: d must be <= 0", static_cast<std::size_t>(k));
            if (h.values[k] < 0.0) throw DomainError("transformed problem: h must be >= 0", static_cast<std::size_t>(k));
        }
    }
};

/// d = λc, constant μ and h taken from an instance with constant positive μ.
inline TransformedProblem transformed_from(const ProblemData& p) {
    if (!p.mu_is_constant() || p.mu_values().size() == 0 || !(p.mu_values()[0] > 0.0)) {
        throw DomainError("transform path needs constant μ > 0");
    }
    TransformedProblem tp{GridFunction(p.spec, p.lambda * p.c_values()), p.mu_values()[0], p.h.cached};
    tp.validate();
    return tp;
}

struct FunctionalValue {
    double value = 0.0;
    GridFunction grad;
};

/// I(v) = ½∫|∇v|² - ½μ∫h v² - ∫d G(v) - ∫h v and its discrete gradient.
inline FunctionalValue functional_I(const GridFunction& v, const TransformedProblem& tp, const DiscreteOperators& ops) {
    require_same_grid(v.spec, ops.spec(), "functional_I");
    require_same_grid(tp.d.spec, ops.spec(), "functional_I");
    const Vector& w = ops.weights();
    const Vector& x = v.values;
    const Vector& d = tp.d.values;
    const Vector& h = tp.h.values;
    const Vector Lx = ops.laplacian() * x;
    Vector gv(x.size());
    double value = 0.5 * ops.cell_volume() * x.dot(Lx);
    for (Eigen::Index k = 0; k < x.size(); ++k) {
        const auto gg = g_and_G(x[k], tp.mu);
        gv[k] = gg.g;
        value -= w[k] * (0.5 * tp.mu * h[k] * x[k] * x[k] + d[k] * gg.G + h[k] * x[k]);
    }
    Vector grad = ops.cell_volume() * Lx - w.cwiseProduct(tp.mu * h.cwiseProduct(x) + d.cwiseProduct(gv) + h);
    return {value, GridFunction(v.spec, std::move(grad))};
}

struct TransformOptions {
    double tol = 1e-9;
    double descent_switch = 1e-3;  // Sobolev gradient norm at which Newton takes over
    int max_descent = 2000;
    int max_newton = 50;
    double armijo_shrink = 0.5;
    double armijo_slope = 1e-4;
    double min_step = 1e-12;
};

struct TransformResult {
    GridFunction v;
    GridFunction u;
    int descent_iterations = 0;
    int newton_iterations = 0;
    double final_residual = 0.0;  // EL residual, sup norm relative to max(1, ‖Lv‖∞)
    double condition_H_margin = 0.0;
    std::vector<std::string> warnings;
};

namespace detail {

inline Vector el_residual(const Vector& v, const TransformedProblem& tp, const DiscreteOperators& ops) {
    Vector gv(v.size());
    for (Eigen::Index k = 0; k < v.size(); ++k) gv[k] = g_and_G(v[k], tp.mu).g;
    return ops.laplacian() * v - tp.mu * tp.h.values.cwiseProduct(v) - tp.d.values.cwiseProduct(gv) - tp.h.values;
}

inline double el_scaled(const Vector& r, const Vector& v, const TransformedProblem& tp, const DiscreteOperators& ops) {
    const double scale = std::max({1.0, (ops.laplacian() * v).cwiseAbs().maxCoeff(), tp.h.values.cwiseAbs().maxCoeff()});
    return r.cwiseAbs().maxCoeff() / scale;
}

// Undamped Newton on the Euler–Lagrange system; returns false on breakdown.
inline bool el_newton(Vector& v, const TransformedProblem& tp, const DiscreteOperators& ops,
                      const TransformOptions& o, int& iterations, double& residual) {
    for (int it = 0;; ++it) {
        const Vector r = el_residual(v, tp, ops);
        residual = el_scaled(r, v, tp, ops);
        if (!std::isfinite(residual)) return false;
        if (residual <= o.tol) return true;
        if (it == o.max_newton) return false;
        Vector diag(v.size());
        for (Eigen::Index k = 0; k < v.size(); ++k) {
            diag[k] = tp.mu * tp.h.values[k] + tp.d.values[k] * g_prime(v[k], tp.mu);
        }
        SparseMatrix J = ops.laplacian();
        for (Eigen::Index k = 0; k < v.size(); ++k) J.coeffRef(k, k) -= diag[k];
        Eigen::SparseLU<SparseMatrix> lu;
        lu.compute(J);
        if (lu.info() != Eigen::Success) return false;
        v -= lu.solve(r);
        ++iterations;
    }
}

} // namespace detail

/// Minimises I (Sobolev-gradient descent with Armijo backtracking, then Newton
/// on the Euler–Lagrange equation) and maps back with u = ln(1 + μv)/μ.
inline TransformResult solve_transformed(const TransformedProblem& tp, const DiscreteOperators& ops,
                                         const TransformOptions& o = {}) {
    tp.validate();
    require_same_grid(tp.d.spec, ops.spec(), "solve_transformed");
    TransformResult out;

    const double dmax = tp.d.values.size() ? tp.d.values.cwiseAbs().maxCoeff() : 0.0;
    const NodeMask mask_d = zero_mask(tp.d.values, kSupportThreshold * dmax);
    out.condition_H_margin =
        count(mask_d) == 0 ? 1.0 : detail::smallness_margin(tp.mu, tp.h.values, mask_d, ops);
    if (out.condition_H_margin <= 0.0) {
        out.warnings.push_back("condition (H) fails (margin " + std::to_string(out.condition_H_margin) +
                               "); a minimiser need not exist");
    }

    const double cell = ops.cell_volume();
    GridFunction v = GridFunction::zeros(ops.spec());
    auto fv = functional_I(v, tp, ops);
    for (int it = 0; it < o.max_descent; ++it) {
        const Vector p = -ops.solve_laplacian(fv.grad.values) / cell;
        const double slope = fv.grad.values.dot(p);
        const double dual = std::sqrt(std::max(0.0, -slope));
        if (dual < o.descent_switch) break;
        double t = 1.0;
        bool accepted = false;
        while (t >= o.min_step) {
            GridFunction trial(v.spec, v.values + t * p);
            auto ft = functional_I(trial, tp, ops);
            if (std::isfinite(ft.value) && ft.value <= fv.value + o.armijo_slope * t * slope) {
                v = std::move(trial);
                fv = std::move(ft);
                accepted = true;
                break;
            }
            t *= o.armijo_shrink;
        }
        ++out.descent_iterations;
        const double vsup = v.values.cwiseAbs().maxCoeff();
        if (!std::isfinite(fv.value) || fv.value < -1e15 || vsup > 1e12) {
            throw ConvergenceError("(H) violated / coercivity failure: I unbounded below along descent");
        }
        if (!accepted) break;
    }

    int newton_its = 0;
    double res = 0.0;
    if (!detail::el_newton(v.values, tp, ops, o, newton_its, res)) {
        throw ConvergenceError("Newton failure after descent (EL residual " + std::to_string(res) + ")");
    }
    if (v.values.minCoeff() < -1e-10) {
        out.warnings.push_back("minimiser had negative nodes (min " + std::to_string(v.values.minCoeff()) +
                               "); replaced by |v|");
        v.values = v.values.cwiseAbs();
        if (!detail::el_newton(v.values, tp, ops, o, newton_its, res)) {
            throw ConvergenceError("Newton failure after sign flip (EL residual " + std::to_string(res) + ")");
        }
    }
    out.newton_iterations = newton_its;
    out.final_residual = res;
    out.u = cole_hopf(v, tp.mu, Direction::Inverse);
    out.v = std::move(v);
    return out;
}

} // namespace gqc
