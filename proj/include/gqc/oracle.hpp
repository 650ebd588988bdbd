#pragma once

// Brute-force reference computations used to check the main code paths.
// Only grid primitives are shared with the modules they check.

#include "gqc/continuation.hpp"

#include <Eigen/Dense>
#include <Eigen/SparseLU>

#include <cmath>
#include <random>
#include <string>

namespace gqc {

/// h := -Δ_h u* - λc u* - Q(u*; μ) on the same stencils, so residual_P(u*) = 0.
/// Expression sources must vanish on ∂Ω (checked on the faces of the box);
/// sampled files are checked by linear extrapolation to the boundary.
inline GridFunction manufactured_h(const CoefficientSpec& u_star, const ProblemData& p, const DiscreteOperators& ops) {
    require_same_grid(p.spec, ops.spec(), "manufactured_h");
    const GridSpec& s = p.spec;
    const Vector& u = u_star.values();
    require_same_grid(u_star.cached.spec, s, "manufactured_h");
    const double scale = std::max(1.0, u.size() ? u.cwiseAbs().maxCoeff() : 0.0);

    if (u_star.expression) {
        for (std::size_t k = 0; k < s.size(); ++k) {
            for (int a = 0; a < s.dim; ++a) {
                for (double face : {s.bounds[a].lo, s.bounds[a].hi}) {
                    std::array<double, 3> x{0.0, 0.0, 0.0};
                    for (int b = 0; b < s.dim; ++b) x[b] = s.coordinate(k, b);
                    x[a] = face;
                    const double v = evaluate(*u_star.expression, x);
                    if (!(std::abs(v) <= 1e-10 * scale)) {
                        throw DomainError("manufactured u* does not vanish on the boundary", k);
                    }
                }
            }
        }
    } else if (u_star.source == CoefficientSpec::Source::Constant) {
        if (u_star.constant != 0.0) throw DomainError("manufactured u*: nonzero constant violates u = 0 on ∂Ω");
    } else {
        for (std::size_t k = 0; k < s.size(); ++k) {
            for (int a = 0; a < s.dim; ++a) {
                for (int side = 0; side < 2; ++side) {
                    if (ops.neighbor(k, a, side) != DiscreteOperators::kNoNeighbor) continue;
                    const int inner = ops.neighbor(k, a, 1 - side);
                    const double next = inner == DiscreteOperators::kNoNeighbor ? 0.0 : u[inner];
                    const double boundary = 2.0 * u[static_cast<Eigen::Index>(k)] - next;
                    if (std::abs(boundary) > 0.05 * scale) {
                        throw DomainError("manufactured u*: sampled data do not extrapolate to 0 on ∂Ω", k);
                    }
                }
            }
        }
    }
    Vector h = ops.laplacian() * u - p.lambda * p.c_values().cwiseProduct(u) -
               quadratic_gradient_term(u, p.mu_values(), ops);
    return {s, std::move(h)};
}

/// Smallest γ of -Δ_h φ = γ c φ by a dense symmetric eigensolve.
inline double dense_eigen_oracle(const GridFunction& c, const DiscreteOperators& ops) {
    require_same_grid(c.spec, ops.spec(), "dense_eigen_oracle");
    const auto n = static_cast<Eigen::Index>(ops.size());
    if (n > 256) throw SpecError("dense_eigen_oracle: grid too large (" + std::to_string(n) + " > 256 nodes)");
    if (!(c.values.array() >= 0.0).all() || !(c.values.array() > 0.0).any()) {
        throw DomainError("dense_eigen_oracle: c must be >= 0 and not identically 0");
    }
    const Eigen::MatrixXd L = Eigen::MatrixXd(ops.laplacian());
    Eigen::LLT<Eigen::MatrixXd> llt(L);
    const Eigen::MatrixXd R = llt.matrixL();
    const Eigen::MatrixXd Ri = R.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd::Identity(n, n));
    const Eigen::MatrixXd M = Ri * c.values.asDiagonal() * Ri.transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (M + M.transpose()), Eigen::EigenvaluesOnly);
    return 1.0 / es.eigenvalues().maxCoeff();
}

/// Max relative error between central differences of I and ⟨∇I, e⟩ over
/// seeded random directions.
inline double fd_gradient_check(const TransformedProblem& tp, const GridFunction& v, const DiscreteOperators& ops,
                                std::uint64_t seed = 2024, int directions = 10, double eps = 1e-5) {
    const auto& s = ops.spec();
    for (int a = 0; a < s.dim; ++a) {
        if (s.cells[a] > 16) throw SpecError("fd_gradient_check: at most 16 cells per axis");
    }
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist;
    const auto grad = functional_I(v, tp, ops).grad.values;
    double worst = 0.0;
    for (int i = 0; i < directions; ++i) {
        Vector e(v.values.size());
        for (auto& x : e) x = dist(rng);
        const double plus = functional_I(GridFunction(v.spec, v.values + eps * e), tp, ops).value;
        const double minus = functional_I(GridFunction(v.spec, v.values - eps * e), tp, ops).value;
        const double fd = (plus - minus) / (2.0 * eps);
        const double an = grad.dot(e);
        worst = std::max(worst, std::abs(fd - an) / std::max(std::abs(an), 1e-12));
    }
    return worst;
}

struct ReferenceOptions {
    double dlambda = 0.1;
    double dlambda_min = 1e-4;
    double norm_cap = 1e3;
    int max_steps = 5000;
    double lambda_min = std::numeric_limits<double>::quiet_NaN();  // NaN: λ₀ - 1
    double lambda_max = std::numeric_limits<double>::infinity();
    double tol = 1e-10;
    double amplitude_step = 0.05;
};

namespace detail {

struct RefSolve {
    bool ok = false;
    int iterations = 0;
};

// Plain Newton with step halving on -Δ_h u - λ c u - Q(u) - h = 0.
inline RefSolve ref_newton(const ProblemData& f, double lambda, Vector& u, const DiscreteOperators& ops,
                           double tol) {
    const SparseMatrix& L = ops.laplacian();
    const Vector a = lambda * f.c_values();
    auto res = [&](const Vector& x) {
        return Vector(L * x - a.cwiseProduct(x) - quadratic_gradient_term(x, f.mu_values(), ops) - f.h_values());
    };
    Vector r = res(u);
    for (int it = 0; it < 40; ++it) {
        const double scale = std::max({1.0, (L * u).cwiseAbs().maxCoeff(), f.h_values().cwiseAbs().maxCoeff()});
        if (r.cwiseAbs().maxCoeff() <= tol * scale) return {true, it};
        SparseMatrix J = L - quadratic_gradient_jacobian(u, f.mu_values(), ops);
        for (Eigen::Index k = 0; k < u.size(); ++k) J.coeffRef(k, k) -= a[k];
        Eigen::SparseLU<SparseMatrix> lu(J);
        if (lu.info() != Eigen::Success) return {};
        const Vector du = lu.solve(-r);
        double t = 1.0;
        for (;; t *= 0.5) {
            if (t < 1e-6) return {};
            Vector trial = u + t * du;
            Vector rt = res(trial);
            if (rt.allFinite() && rt.norm() < r.norm()) {
                u = std::move(trial);
                r = std::move(rt);
                break;
            }
        }
    }
    return {};
}

// Newton for (u, λ) with u[k] pinned to amp.
inline RefSolve ref_amplitude_newton(const ProblemData& f, double& lambda, Vector& u, Eigen::Index pin, double amp,
                                     const DiscreteOperators& ops, double tol) {
    const SparseMatrix& L = ops.laplacian();
    const auto n = u.size();
    for (int it = 0; it < 40; ++it) {
        const Vector a = lambda * f.c_values();
        const Vector r = L * u - a.cwiseProduct(u) - quadratic_gradient_term(u, f.mu_values(), ops) - f.h_values();
        const double scale = std::max({1.0, (L * u).cwiseAbs().maxCoeff(), f.h_values().cwiseAbs().maxCoeff()});
        if (!r.allFinite()) return {};
        if (r.cwiseAbs().maxCoeff() <= tol * scale && std::abs(u[pin] - amp) <= 1e-12 * std::max(1.0, amp)) {
            return {true, it};
        }
        SparseMatrix J = L - quadratic_gradient_jacobian(u, f.mu_values(), ops);
        for (Eigen::Index k = 0; k < n; ++k) J.coeffRef(k, k) -= a[k];
        std::vector<Eigen::Triplet<double>> t;
        for (int col = 0; col < J.outerSize(); ++col) {
            for (SparseMatrix::InnerIterator itJ(J, col); itJ; ++itJ) t.emplace_back(itJ.row(), col, itJ.value());
        }
        for (Eigen::Index k = 0; k < n; ++k) t.emplace_back(k, n, -f.c_values()[k] * u[k]);
        t.emplace_back(n, pin, 1.0);
        SparseMatrix A(n + 1, n + 1);
        A.setFromTriplets(t.begin(), t.end());
        Eigen::SparseLU<SparseMatrix> lu(A);
        if (lu.info() != Eigen::Success) return {};
        Vector rhs(n + 1);
        rhs.head(n) = -r;
        rhs[n] = amp - u[pin];
        const Vector step = lu.solve(rhs);
        if (!step.allFinite()) return {};
        u += step.head(n);
        lambda += step[n];
    }
    return {};
}

} // namespace detail

/// Naive continuation: fixed λ steps (halved on failure); once the step
/// underflows, the sup of u at its peak node becomes the parameter, which
/// carries the trace around a fold.
inline Branch reference_continuation(const ProblemData& family, double lambda0, const DiscreteOperators& ops,
                                     ReferenceOptions o = {}) {
    require_same_grid(family.spec, ops.spec(), "reference_continuation");
    if (std::isnan(o.lambda_min)) o.lambda_min = lambda0 - 1.0;
    Branch b;
    b.family = family;
    Vector u = Vector::Zero(static_cast<Eigen::Index>(family.spec.size()));
    double lambda = lambda0;
    auto seed = detail::ref_newton(family, lambda, u, ops, o.tol);
    if (!seed.ok) throw ConvergenceError("reference_continuation: seed failure");

    auto push = [&](int iters) {
        auto p = make_branch_point(lambda, GridFunction(family.spec, u), ops, iters);
        if (!b.points.empty()) {
            const auto& q = b.points.back();
            p.step = product_distance(p.lambda, p.u.values, q.lambda, q.u.values, q.h10_norm, ops);
            p.s = q.s + p.step;
        }
        b.points.push_back(std::move(p));
    };
    auto stop = [&]() -> bool {
        const auto& p = b.points.back();
        if (p.sup_norm > o.norm_cap) {
            b.termination = "norm_cap";
        } else if (static_cast<int>(b.points.size()) >= o.max_steps) {
            b.termination = "max_points";
        } else {
            return false;
        }
        return true;
    };
    push(seed.iterations);

    double dl = o.dlambda;
    bool done = stop();
    while (!done) {
        Vector trial = u;
        const double next = lambda + dl;
        if (next > o.lambda_max) {
            b.termination = "lambda_max";
            done = true;
            break;
        }
        auto r = detail::ref_newton(family, next, trial, ops, o.tol);
        if (r.ok) {
            u = std::move(trial);
            lambda = next;
            push(r.iterations);
            done = stop();
            continue;
        }
        dl *= 0.5;
        if (dl < o.dlambda_min) break;
    }

    if (!done) {
        Eigen::Index pin = 0;
        u.cwiseAbs().maxCoeff(&pin);
        double rho = o.amplitude_step;
        for (;;) {
            const auto& last = b.points.back();
            double amp = last.u.values[pin];
            const double target = amp * (1.0 + rho);
            Vector trial = last.u.values;
            double lam = last.lambda;
            if (b.points.size() >= 2) {
                const auto& prev = b.points[b.points.size() - 2];
                const double da = amp - prev.u.values[pin];
                if (da != 0.0) {
                    const double f = (target - amp) / da;
                    trial += f * (last.u.values - prev.u.values);
                    lam += f * (last.lambda - prev.lambda);
                }
            }
            auto r = detail::ref_amplitude_newton(family, lam, trial, pin, target, ops, o.tol);
            if (!r.ok) {
                rho *= 0.5;
                if (rho < 1e-6) {
                    b.termination = "step_floor";
                    break;
                }
                continue;
            }
            u = std::move(trial);
            lambda = lam;
            push(r.iterations);
            if (stop()) break;
            if (lambda < o.lambda_min) {
                b.points.pop_back();
                b.termination = "lambda_min";
                break;
            }
            rho = std::min(rho * 1.2, 0.25);
        }
    }
    b.folds = detect_folds(b.points);
    return b;
}

} // namespace gqc
