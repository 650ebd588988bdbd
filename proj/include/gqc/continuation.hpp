#pragma once

// Pseudo-arclength continuation of the solution set of (P_λ) in (λ, u).
//
// Distances use the product norm  Δλ² + ‖Δu‖²_{H¹₀} / (1 + ‖u‖²_{H¹₀})  with
// the norm of the most recent point.

#include "gqc/solver.hpp"

#include <Eigen/SparseLU>

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace gqc {

struct BranchPoint {
    double lambda = 0.0;
    GridFunction u;
    double sup_norm = 0.0;
    double h10_norm = 0.0;
    double s = 0.0;       // arclength
    double step = 0.0;    // product-norm distance from the previous point
    int newton_iters = 0;
    bool converged = true;
};

struct Branch {
    std::vector<BranchPoint> points;
    std::vector<std::size_t> folds;
    double gamma1 = std::numeric_limits<double>::quiet_NaN();
    std::string termination;  // norm_cap | lambda_min | lambda_max | step_floor | max_points
    ProblemData family;
};

struct ContinuationOptions {
    double ds0 = 0.1;
    double ds_min = 1e-8;
    double ds_max = 2.0;
    double norm_cap = 1e3;
    int max_points = 2000;
    double lambda_min = std::numeric_limits<double>::quiet_NaN();  // NaN: λ₀ - 1
    double lambda_max = std::numeric_limits<double>::infinity();
    int max_corrector = 12;
    int fast_iterations = 3;
    double grow = 1.3;
};

inline BranchPoint make_branch_point(double lambda, GridFunction u, const DiscreteOperators& ops, int iters) {
    BranchPoint p;
    p.lambda = lambda;
    p.sup_norm = u.values.size() ? u.values.cwiseAbs().maxCoeff() : 0.0;
    p.h10_norm = h10_norm(u.values, ops);
    p.newton_iters = iters;
    p.u = std::move(u);
    return p;
}

/// Product-norm distance between (λa, ua) and (λb, ub), weighted at ‖u_ref‖.
inline double product_distance(double la, const Vector& ua, double lb, const Vector& ub, double ref_h10,
                               const DiscreteOperators& ops) {
    const double w = 1.0 / (1.0 + ref_h10 * ref_h10);
    const double du = h10_norm(ua - ub, ops);
    return std::sqrt((la - lb) * (la - lb) + w * du * du);
}

/// Indices i with (λ_{i+1} - λ_i)(λ_i - λ_{i-1}) < 0.
inline std::vector<std::size_t> detect_folds(const std::vector<BranchPoint>& pts) {
    std::vector<std::size_t> f;
    for (std::size_t i = 1; i + 1 < pts.size(); ++i) {
        if ((pts[i + 1].lambda - pts[i].lambda) * (pts[i].lambda - pts[i - 1].lambda) < 0.0) f.push_back(i);
    }
    return f;
}

namespace detail {

struct CorrectorResult {
    bool converged = false;
    int iterations = 0;
    Vector u;
    double lambda = 0.0;
};

// Newton on  F(u, λ) = 0,  w∏h (L t_u)·(u - a_u) + t_λ (λ - a_λ) = rhs.
inline CorrectorResult bordered_newton(const ProblemData& family, Vector u, double lambda, const Vector& t_u,
                                       double t_l, const Vector& a_u, double a_l, double rhs, double weight,
                                       const DiscreteOperators& ops, const SolveOptions& so, int max_iter) {
    const auto n = u.size();
    const Vector row = weight * ops.cell_volume() * (ops.laplacian() * t_u);
    CorrectorResult r;
    for (int it = 0;; ++it) {
        QuasilinearSystem sys{lambda * family.c_values(), family.mu_values(), family.h_values()};
        const Vector F = sys.residual(u, ops);
        const double g = row.dot(u - a_u) + t_l * (lambda - a_l) - rhs;
        const double scaled = F.cwiseAbs().maxCoeff() / sys.scale(u, ops);
        if (!std::isfinite(scaled) || !std::isfinite(g)) return r;
        if (scaled <= so.tol_residual && std::abs(g) <= 1e-10 * std::max(1.0, std::abs(rhs))) {
            r.converged = true;
            r.iterations = it;
            r.u = std::move(u);
            r.lambda = lambda;
            return r;
        }
        if (it == max_iter) return r;
        const SparseMatrix J = sys.jacobian(u, ops);
        const Vector Fl = -family.c_values().cwiseProduct(u);
        std::vector<Eigen::Triplet<double>> t;
        t.reserve(static_cast<std::size_t>(J.nonZeros() + 2 * n + 1));
        for (int col = 0; col < J.outerSize(); ++col) {
            for (SparseMatrix::InnerIterator itJ(J, col); itJ; ++itJ) t.emplace_back(itJ.row(), col, itJ.value());
        }
        for (Eigen::Index k = 0; k < n; ++k) {
            if (Fl[k] != 0.0) t.emplace_back(k, n, Fl[k]);
            if (row[k] != 0.0) t.emplace_back(n, k, row[k]);
        }
        t.emplace_back(n, n, t_l);
        SparseMatrix A(n + 1, n + 1);
        A.setFromTriplets(t.begin(), t.end());
        Eigen::SparseLU<SparseMatrix> lu;
        lu.compute(A);
        if (lu.info() != Eigen::Success) return r;
        Vector rhs_vec(n + 1);
        rhs_vec.head(n) = -F;
        rhs_vec[n] = -g;
        const Vector step = lu.solve(rhs_vec);
        if (!step.allFinite()) return r;
        u += step.head(n);
        lambda += step[n];
    }
}

} // namespace detail

/// Traces the branch through the solution at λ₀ (solved from u = 0).
inline Branch trace_branch(const ProblemData& family, double lambda0, const DiscreteOperators& ops,
                           ContinuationOptions co = {}, const SolveOptions& so = {}) {
    require_same_grid(family.spec, ops.spec(), "trace_branch");
    if (std::isnan(co.lambda_min)) co.lambda_min = lambda0 - 1.0;
    Branch b;
    b.family = family;

    auto [u0, rep0] = newton_solve(family.with_lambda(lambda0), GridFunction::zeros(family.spec), ops, so);
    if (!rep0.converged) {
        auto [uf, repf] = fixed_point_T(family.with_lambda(lambda0), GridFunction::zeros(family.spec), ops, so);
        if (!repf.converged) throw ConvergenceError("seed failure at λ = " + std::to_string(lambda0));
        u0 = std::move(uf);
        rep0 = std::move(repf);
    }
    b.points.push_back(make_branch_point(lambda0, std::move(u0), ops, rep0.iterations));

    double ds = co.ds0;
    for (;;) {
        const auto& p0 = b.points.back();
        auto [u1, rep1] = newton_solve(family.with_lambda(lambda0 + ds), p0.u, ops, so);
        if (rep1.converged) {
            auto p = make_branch_point(lambda0 + ds, std::move(u1), ops, rep1.iterations);
            p.step = product_distance(p.lambda, p.u.values, p0.lambda, p0.u.values, p0.h10_norm, ops);
            p.s = p.step;
            b.points.push_back(std::move(p));
            break;
        }
        ds *= 0.5;
        if (ds < co.ds_min) {
            b.termination = "step_floor";
            return b;
        }
    }

    auto terminated = [&](const BranchPoint& p) -> const char* {
        if (p.sup_norm > co.norm_cap) return "norm_cap";
        if (static_cast<int>(b.points.size()) >= co.max_points) return "max_points";
        return nullptr;
    };
    if (const char* t = terminated(b.points.back())) {
        b.termination = t;
        b.folds = detect_folds(b.points);
        return b;
    }

    for (;;) {
        const auto& pa = b.points[b.points.size() - 2];
        const auto& pb = b.points.back();
        const double weight = 1.0 / (1.0 + pb.h10_norm * pb.h10_norm);
        Vector t_u = pb.u.values - pa.u.values;
        double t_l = pb.lambda - pa.lambda;
        const double tn = std::sqrt(t_l * t_l + weight * std::pow(h10_norm(t_u, ops), 2));
        t_u /= tn;
        t_l /= tn;

        std::optional<detail::CorrectorResult> accepted;
        for (;;) {
            auto cr = detail::bordered_newton(family, pb.u.values + ds * t_u, pb.lambda + ds * t_l, t_u, t_l,
                                              pb.u.values, pb.lambda, ds, weight, ops, so, co.max_corrector);
            if (cr.converged) {
                const double dist = product_distance(cr.lambda, cr.u, pb.lambda, pb.u.values, pb.h10_norm, ops);
                if (dist <= 2.0 * ds) {
                    accepted = std::move(cr);
                    break;
                }
            }
            ds *= 0.5;
            if (ds < co.ds_min) break;
        }
        if (!accepted) {
            b.termination = "step_floor";
            break;
        }
        if (accepted->lambda < co.lambda_min) {
            b.termination = "lambda_min";
            break;
        }
        if (accepted->lambda > co.lambda_max) {
            b.termination = "lambda_max";
            break;
        }
        auto p = make_branch_point(accepted->lambda, GridFunction(family.spec, std::move(accepted->u)), ops,
                                   accepted->iterations);
        p.step = product_distance(p.lambda, p.u.values, pb.lambda, pb.u.values, pb.h10_norm, ops);
        p.s = pb.s + p.step;
        const int iters = p.newton_iters;
        b.points.push_back(std::move(p));
        if (const char* t = terminated(b.points.back())) {
            b.termination = t;
            break;
        }
        if (iters <= co.fast_iterations) ds = std::min(ds * co.grow, co.ds_max);
    }
    b.folds = detect_folds(b.points);
    return b;
}

struct FoldLocation {
    double lambda = 0.0;
    double theta = 0.0;     // position on the chord between points i-1 and i+1
    double width = 0.0;     // final bracket length in the product norm
    int bisections = 0;
    GridFunction u;
};

/// Bisects along the chord through the neighbours of fold index i for the
/// point where dλ/ds changes sign; stops once the bracket is below tol.
inline FoldLocation locate_fold(const Branch& b, std::size_t i, const DiscreteOperators& ops, double tol = 1e-8,
                                const SolveOptions& so = {}) {
    if (i == 0 || i + 1 >= b.points.size()) throw std::invalid_argument("locate_fold: index has no neighbours");
    const auto& pa = b.points[i - 1];
    const auto& pc = b.points[i + 1];
    const double href = b.points[i].h10_norm;
    const double weight = 1.0 / (1.0 + href * href);
    Vector c_u = pc.u.values - pa.u.values;
    double c_l = pc.lambda - pa.lambda;
    const double len = std::sqrt(c_l * c_l + weight * std::pow(h10_norm(c_u, ops), 2));
    c_u /= len;
    c_l /= len;

    // Solution on the hyperplane through the chord point at θ, with the sign of
    // dλ/ds along the chord orientation.
    struct Probe {
        bool ok;
        double sign;
        double lambda;
        Vector u;
    };
    Vector guess = b.points[i].u.values;
    double lguess = b.points[i].lambda;
    auto probe = [&](double theta) -> Probe {
        const Vector base_u = pa.u.values + theta * len * c_u;
        const double base_l = pa.lambda + theta * len * c_l;
        const Vector start_u = theta <= 0.0 ? pa.u.values : theta >= 1.0 ? pc.u.values : guess;
        const double start_l = theta <= 0.0 ? pa.lambda : theta >= 1.0 ? pc.lambda : lguess;
        auto cr = detail::bordered_newton(b.family, start_u, start_l, c_u, c_l, base_u, base_l, 0.0, weight, ops, so,
                                          30);
        if (!cr.converged) return {false, 0.0, 0.0, {}};
        QuasilinearSystem sys{cr.lambda * b.family.c_values(), b.family.mu_values(), b.family.h_values()};
        Eigen::SparseLU<SparseMatrix> lu;
        lu.compute(sys.jacobian(cr.u, ops));
        const Vector du = lu.solve(b.family.c_values().cwiseProduct(cr.u));
        const double along = weight * ops.cell_volume() * c_u.dot(ops.laplacian() * du) + c_l;
        return {true, along >= 0.0 ? 1.0 : -1.0, cr.lambda, std::move(cr.u)};
    };

    auto left = probe(0.0);
    auto right = probe(1.0);
    if (!left.ok || !right.ok) throw ConvergenceError("locate_fold: endpoint re-solve failed");
    FoldLocation out;
    double lo = 0.0;
    double hi = 1.0;
    if (left.sign == right.sign) {
        // Both ends on the same side: keep the point of largest excursion.
        const auto& best = (left.lambda - right.lambda) * left.sign > 0 ? left : right;
        out.lambda = best.lambda;
        out.theta = &best == &left ? 0.0 : 1.0;
        out.u = GridFunction(b.family.spec, best.u);
        out.width = len;
        return out;
    }
    Probe mid = left;
    while ((hi - lo) * len > tol && out.bisections < 200) {
        const double theta = 0.5 * (lo + hi);
        auto m = probe(theta);
        ++out.bisections;
        if (!m.ok) throw ConvergenceError("locate_fold: hyperplane solve failed at θ = " + std::to_string(theta));
        guess = m.u;
        lguess = m.lambda;
        if (m.sign == left.sign) {
            lo = theta;
        } else {
            hi = theta;
        }
        mid = std::move(m);
    }
    out.lambda = mid.lambda;
    out.theta = 0.5 * (lo + hi);
    out.width = (hi - lo) * len;
    out.u = GridFunction(b.family.spec, std::move(mid.u));
    return out;
}

struct SolutionPair {
    double lambda = 0.0;
    GridFunction u_low;
    GridFunction u_high;
    SolveReport report_low;
    SolveReport report_high;
    double sup_low = 0.0;
    double sup_high = 0.0;
};

struct BranchAnalysis {
    double lambda_bar = 0.0;  // max λ over the branch
    double gamma1 = 0.0;
    double margin = 0.0;      // γ₁ - λ̄
    bool below_gamma1 = false;
    bool crosses_zero = false;
    std::string blowup_side;  // left | right | none
    std::string termination;
    double lambda_at_termination = 0.0;
    double sup_at_termination = 0.0;
    std::size_t fold_count = 0;
    std::optional<SolutionPair> pair;
};

inline BranchAnalysis analyze_branch(const Branch& b, double gamma1, const DiscreteOperators& ops,
                                     std::optional<double> pair_lambda = std::nullopt, const SolveOptions& so = {}) {
    if (b.points.empty()) throw std::invalid_argument("analyze_branch: empty branch");
    BranchAnalysis a;
    std::size_t top = 0;
    double lmin = b.points[0].lambda;
    for (std::size_t i = 0; i < b.points.size(); ++i) {
        if (b.points[i].lambda > b.points[top].lambda) top = i;
        lmin = std::min(lmin, b.points[i].lambda);
    }
    a.lambda_bar = b.points[top].lambda;
    a.gamma1 = gamma1;
    a.margin = gamma1 - a.lambda_bar;
    a.below_gamma1 = a.lambda_bar < gamma1;
    a.crosses_zero = lmin < 0.0 && a.lambda_bar > 0.0;
    a.termination = b.termination;
    a.lambda_at_termination = b.points.back().lambda;
    a.sup_at_termination = b.points.back().sup_norm;
    a.fold_count = b.folds.size();
    if (b.termination == "norm_cap") {
        a.blowup_side = a.lambda_at_termination > 0.0 ? "right" : "left";
    } else {
        a.blowup_side = "none";
    }

    if (!pair_lambda) return a;
    const double lam = *pair_lambda;
    if (b.folds.empty()) throw Error("analyze_branch: no fold recorded, no solution pair");
    if (!(lam > 0.0 && lam < a.lambda_bar)) {
        throw DomainError("analyze_branch: requested λ = " + std::to_string(lam) + " outside (0, λ̄ = " +
                          std::to_string(a.lambda_bar) + ")");
    }
    auto nearer = [&](std::size_t j) -> const BranchPoint& {
        return std::abs(b.points[j].lambda - lam) <= std::abs(b.points[j + 1].lambda - lam) ? b.points[j]
                                                                                               : b.points[j + 1];
    };
    const BranchPoint* low = nullptr;
    const BranchPoint* high = nullptr;
    for (std::size_t j = 0; j < top && !low; ++j) {
        if (b.points[j].lambda <= lam && lam <= b.points[j + 1].lambda) low = &nearer(j);
    }
    for (std::size_t j = top; j + 1 < b.points.size() && !high; ++j) {
        if (b.points[j].lambda >= lam && lam >= b.points[j + 1].lambda) high = &nearer(j);
    }
    if (!low || !high) throw Error("analyze_branch: branch does not bracket λ on both sub-branches");
    const ProblemData p = b.family.with_lambda(lam);
    SolutionPair sp;
    sp.lambda = lam;
    std::tie(sp.u_low, sp.report_low) = newton_solve(p, low->u, ops, so);
    std::tie(sp.u_high, sp.report_high) = newton_solve(p, high->u, ops, so);
    sp.sup_low = sp.u_low.values.cwiseAbs().maxCoeff();
    sp.sup_high = sp.u_high.values.cwiseAbs().maxCoeff();
    a.pair = std::move(sp);
    return a;
}

} // namespace gqc
