#pragma once

// Checkable hypotheses: the first weighted eigenvalue γ₁, the smallness
// conditions (H0), (Hc), (H), (k1), the Ferone–Murat bound and the exponent
// witness used by the a priori estimate for λ > 0.
//
// Discrete infima are Rayleigh quotients over grid functions and converge to
// their continuum values at O(h²); no attempt is made to correct for that.

#include "gqc/problem.hpp"

#include <Eigen/SparseCholesky>

#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

namespace gqc {

struct EigenResult {
    double gamma = 0.0;
    GridFunction phi;  // positive, ‖φ‖_{H¹₀} = 1
    double residual = 0.0;  // ‖Lφ - γcφ‖₂
    int iterations = 0;
};

/// Smallest γ of  -Δ_h φ = γ c φ  by inverse iteration from the all-ones vector.
inline EigenResult first_eigen(const GridFunction& c, const DiscreteOperators& ops, int max_iterations = 10000,
                               double tol = 1e-10) {
    require_same_grid(c.spec, ops.spec(), "first_eigen");
    const Vector& cv = c.values;
    for (Eigen::Index k = 0; k < cv.size(); ++k) {
        if (cv[k] < 0.0) throw DomainError("first_eigen: c must be non-negative", static_cast<std::size_t>(k));
    }
    if (!(cv.array() > 0.0).any()) throw DomainError("first_eigen: c vanishes identically, no eigenvalue");

    const SparseMatrix& L = ops.laplacian();
    Vector phi = Vector::Ones(cv.size());
    double gamma = std::numeric_limits<double>::infinity();
    EigenResult out;
    for (int it = 1; it <= max_iterations; ++it) {
        phi = ops.solve_laplacian(cv.cwiseProduct(phi));
        phi /= phi.norm();
        const Vector Lphi = L * phi;
        const double next = phi.dot(Lphi) / phi.dot(cv.cwiseProduct(phi));
        const double increment = std::abs(next - gamma);
        gamma = next;
        const double res = (Lphi - gamma * cv.cwiseProduct(phi)).norm();
        if (increment <= tol * gamma && res <= 1e-9 * Lphi.norm()) {
            out.iterations = it;
            break;
        }
        if (it == max_iterations) {
            throw ConvergenceError("first_eigen: no convergence after " + std::to_string(max_iterations) +
                                   " iterations (residual " + std::to_string(res) + ")");
        }
    }
    if (phi.sum() < 0.0) phi = -phi;
    phi /= h10_norm(phi, ops);
    out.gamma = gamma;
    out.residual = (L * phi - gamma * cv.cwiseProduct(phi)).norm();
    out.phi = GridFunction(c.spec, std::move(phi));
    return out;
}

namespace detail {

inline std::vector<int> mask_indices(const NodeMask& mask) {
    std::vector<int> idx;
    for (std::size_t k = 0; k < mask.size(); ++k) {
        if (mask[k]) idx.push_back(static_cast<int>(k));
    }
    return idx;
}

inline SparseMatrix restrict_to(const SparseMatrix& A, const std::vector<int>& idx, std::size_t n) {
    std::vector<int> pos(n, -1);
    for (std::size_t i = 0; i < idx.size(); ++i) pos[static_cast<std::size_t>(idx[i])] = static_cast<int>(i);
    std::vector<Eigen::Triplet<double>> t;
    for (int col = 0; col < A.outerSize(); ++col) {
        if (pos[static_cast<std::size_t>(col)] < 0) continue;
        for (SparseMatrix::InnerIterator it(A, col); it; ++it) {
            const int r = pos[static_cast<std::size_t>(it.row())];
            if (r >= 0) t.emplace_back(r, pos[static_cast<std::size_t>(col)], it.value());
        }
    }
    const auto m = static_cast<Eigen::Index>(idx.size());
    SparseMatrix R(m, m);
    R.setFromTriplets(t.begin(), t.end());
    return R;
}

/// sup_φ φᵀBφ / φᵀL_mφ over φ supported on the mask (B symmetric, given on the
/// full grid). Shifted power iteration on L_m⁻¹B + sI with s bounding the most
/// negative eigenvalue.
inline double generalized_sup(const SparseMatrix& B, const NodeMask& mask, const DiscreteOperators& ops,
                              int max_iterations = 50000, double tol = 1e-12) {
    const auto idx = mask_indices(mask);
    if (idx.empty()) throw DomainError("Rayleigh supremum over an empty node mask");
    const SparseMatrix Lm = restrict_to(ops.laplacian(), idx, ops.size());
    const SparseMatrix Bm = restrict_to(B, idx, ops.size());

    double gersh = 0.0;
    {
        Vector diag = Vector::Zero(Bm.rows());
        Vector off = Vector::Zero(Bm.rows());
        for (int col = 0; col < Bm.outerSize(); ++col) {
            for (SparseMatrix::InnerIterator it(Bm, col); it; ++it) {
                if (it.row() == col) {
                    diag[col] += it.value();
                } else {
                    off[it.row()] += std::abs(it.value());
                }
            }
        }
        gersh = (diag - off).minCoeff();
    }
    const double shift = std::max(0.0, -gersh) / ops.min_laplacian_eigenvalue();

    Eigen::SimplicialLDLT<SparseMatrix> solver(Lm);
    if (solver.info() != Eigen::Success) throw Error("restricted Laplacian factorization failed");

    Vector x = Vector::Ones(Lm.rows());
    double rho = -std::numeric_limits<double>::infinity();
    for (int it = 0; it < max_iterations; ++it) {
        Vector y = solver.solve(Bm * x) + shift * x;
        const double ny = y.norm();
        if (ny == 0.0) return 0.0;
        x = y / ny;
        const double next = x.dot(Bm * x) / x.dot(Lm * x);
        if (std::abs(next - rho) <= tol * std::max(1.0, std::abs(next))) {
            rho = next;
            break;
        }
        rho = next;
    }
    return rho;
}

} // namespace detail

/// ν = sup { ∫ w φ² / ‖φ‖²_{H¹₀} : φ supported on mask }, 0 when w ≤ 0 on the mask.
/// "inf ∫(|∇u|² - M w u²) > 0 over the subspace" is equivalent to M·ν < 1.
inline double weighted_rayleigh_sup(const Vector& w, const NodeMask& mask, const DiscreteOperators& ops) {
    if (count(mask) == 0) throw DomainError("weighted_rayleigh_sup: empty mask");
    bool any_positive = false;
    for (std::size_t k = 0; k < mask.size(); ++k) any_positive |= mask[k] && w[static_cast<Eigen::Index>(k)] > 0.0;
    if (!any_positive) return 0.0;
    const Vector scaled = w.cwiseProduct(ops.weights()) / ops.cell_volume();
    SparseMatrix B(w.size(), w.size());
    B = scaled.asDiagonal();
    return std::max(0.0, detail::generalized_sup(B, mask, ops));
}

inline NodeMask full_mask(const DiscreteOperators& ops) { return NodeMask(ops.size(), true); }

enum class Condition { H0, Hc, H, FeroneMurat, k1 };

inline const char* to_string(Condition c) {
    switch (c) {
    case Condition::H0: return "H0";
    case Condition::Hc: return "Hc";
    case Condition::H: return "H";
    case Condition::FeroneMurat: return "FeroneMurat";
    case Condition::k1: return "k1";
    }
    return "?";
}

inline std::optional<Condition> condition_from_string(std::string_view s) {
    if (s == "H0") return Condition::H0;
    if (s == "Hc") return Condition::Hc;
    if (s == "H") return Condition::H;
    if (s == "FeroneMurat") return Condition::FeroneMurat;
    if (s == "k1") return Condition::k1;
    return std::nullopt;
}

struct ConditionReport {
    Condition condition = Condition::H0;
    double infimum_estimate = 0.0;  // margin; holds iff > 0
    bool holds = false;
    std::vector<double> sub_infima;
    bool vacuous = false;
    std::string note;
};

namespace detail {

inline double smallness_margin(double coeff, const Vector& weight, const NodeMask& mask,
                               const DiscreteOperators& ops) {
    if (coeff == 0.0) return 1.0;
    return 1.0 - coeff * weighted_rayleigh_sup(weight, mask, ops);
}

// Stiffness form of -div((1/μ)∇·) restricted to the mask; edge coefficient is
// the mean of 1/μ at both ends when both are in the mask, else the node's own.
inline SparseMatrix inverse_mu_stiffness(const Vector& mu, const NodeMask& mask, const DiscreteOperators& ops) {
    const auto& s = ops.spec();
    std::vector<Eigen::Triplet<double>> t;
    for (std::size_t k = 0; k < ops.size(); ++k) {
        if (!mask[k]) continue;
        const double mk = mu[static_cast<Eigen::Index>(k)];
        if (!(mk > 0.0)) throw DomainError("(k1) needs μ > 0 on the zero set of c", k);
        double diag = 0.0;
        for (int a = 0; a < s.dim; ++a) {
            const double ih2 = 1.0 / (s.spacing(a) * s.spacing(a));
            for (int side = 0; side < 2; ++side) {
                const int j = ops.neighbor(k, a, side);
                double kappa = 1.0 / mk;
                if (j != DiscreteOperators::kNoNeighbor && mask[static_cast<std::size_t>(j)]) {
                    kappa = 0.5 * (1.0 / mk + 1.0 / mu[j]);
                    t.emplace_back(static_cast<int>(k), j, -kappa * ih2);
                }
                diag += kappa * ih2;
            }
        }
        t.emplace_back(static_cast<int>(k), static_cast<int>(k), diag);
    }
    SparseMatrix A(static_cast<Eigen::Index>(ops.size()), static_cast<Eigen::Index>(ops.size()));
    A.setFromTriplets(t.begin(), t.end());
    return A;
}

} // namespace detail

/// Margin of (H0), (Hc), (H) or (k1) for a problem instance.
inline ConditionReport check_smallness(const ProblemData& p, Condition which, const DiscreteOperators& ops) {
    require_same_grid(p.spec, ops.spec(), "check_smallness");
    ConditionReport r;
    r.condition = which;
    switch (which) {
    case Condition::H0:
    case Condition::Hc: {
        const NodeMask mask = which == Condition::H0 ? full_mask(ops) : p.c_zero_mask;
        if (count(mask) == 0) {
            r.vacuous = true;
            r.sub_infima = {1.0, 1.0};
            r.note = "Hc vacuous: W_c trivial, condition holds";
            break;
        }
        r.sub_infima = {detail::smallness_margin(p.mu_plus_sup, p.h_plus, mask, ops),
                        detail::smallness_margin(p.mu_minus_sup, p.h_minus, mask, ops)};
        break;
    }
    case Condition::H: {
        if (!p.mu_is_constant()) throw DomainError("condition (H) is defined for constant μ only");
        const double mu = p.mu_values().size() ? p.mu_values()[0] : 0.0;
        const Vector d = p.lambda * p.c_values();
        const double dmax = d.size() ? d.cwiseAbs().maxCoeff() : 0.0;
        const NodeMask mask = zero_mask(d, kSupportThreshold * dmax);
        if (count(mask) == 0) {
            r.vacuous = true;
            r.sub_infima = {1.0};
            r.note = "H vacuous: W_d trivial, condition holds";
            break;
        }
        r.sub_infima = {detail::smallness_margin(mu, p.h_values(), mask, ops)};
        break;
    }
    case Condition::k1: {
        const NodeMask& mask = p.c_zero_mask;
        if (count(mask) == 0) {
            r.vacuous = true;
            r.sub_infima = {1.0};
            r.note = "k1 vacuous: W_c trivial";
            break;
        }
        const SparseMatrix A = detail::inverse_mu_stiffness(p.mu_values(), mask, ops);
        const Vector hw = p.h_values().cwiseProduct(ops.weights()) / ops.cell_volume();
        SparseMatrix H(hw.size(), hw.size());
        H = hw.asDiagonal();
        const SparseMatrix B = ops.laplacian() - A + H;
        r.sub_infima = {1.0 - detail::generalized_sup(B, mask, ops)};
        r.note = "inequality (k1) evaluated on the grid; discrete necessity is not claimed";
        break;
    }
    case Condition::FeroneMurat:
        throw std::invalid_argument("use check_ferone_murat for the Ferone–Murat condition");
    }
    r.infimum_estimate = *std::min_element(r.sub_infima.begin(), r.sub_infima.end());
    r.holds = r.infimum_estimate > 0.0;
    return r;
}

/// Best Sobolev constant S_N of H¹₀ ↪ L^{2N/(N-2)} (Talenti/Aubin closed form).
inline double sobolev_constant(int N) {
    if (N < 3) throw DomainError("Sobolev constant S_N requires N >= 3");
    const double n = N;
    return std::sqrt(std::numbers::pi * n * (n - 2.0)) * std::pow(std::tgamma(n / 2.0) / std::tgamma(n), 1.0 / n);
}

/// ‖μ‖∞ ‖h‖_{N/2} < S_N² on a 3-d grid.
inline ConditionReport check_ferone_murat(const ProblemData& p, const DiscreteOperators& ops) {
    require_same_grid(p.spec, ops.spec(), "check_ferone_murat");
    if (p.spec.dim != 3) {
        throw SpecError("Ferone–Murat condition needs N >= 3; only 3-d grids qualify (grid is " +
                        std::to_string(p.spec.dim) + "-d)");
    }
    const double N = 3.0;
    const double q = N / 2.0;
    const double mu_inf = p.mu_values().size() ? p.mu_values().cwiseAbs().maxCoeff() : 0.0;
    const Vector& w = ops.data_weights();
    const double h_norm = std::pow(w.dot(p.h_values().cwiseAbs().array().pow(q).matrix()), 1.0 / q);
    const double s2 = std::pow(sobolev_constant(3), 2);
    ConditionReport r;
    r.condition = Condition::FeroneMurat;
    r.infimum_estimate = s2 - mu_inf * h_norm;
    r.sub_infima = {mu_inf, h_norm, s2};
    r.holds = mu_inf * h_norm < s2;
    r.note = "sub_infima = [‖μ‖∞, ‖h‖_{N/2}, S_N²]";
    return r;
}

// --- exponent witness ------------------------------------------------------

struct ExponentWitness {
    double p = 0.0;
    int N = 3;
    double theta = 0.0;
    double alpha = 0.0;
    double r = 0.0;
    double q = 0.0;
    double tau = 0.0;
};

inline double exponent_q(double alpha, double r, double theta) {
    return 1.0 + r + (1.0 + theta * alpha) / (1.0 - alpha);
}

inline double exponent_tau(double q, double alpha) { return alpha / (q * (1.0 - alpha)); }

/// True when q, τ reproduce from (α, r, θ) and
///   1/p ≤ q ≤ 2N(p-1)/(p(N-2+2τ)),   1-α < 2/q,   α, r ∈ (0,1).
inline bool exponents_feasible(const ExponentWitness& w) {
    const double upper = 2.0 * w.N * (w.p - 1.0) / (w.p * (w.N - 2.0 + 2.0 * w.tau));
    return w.alpha > 0.0 && w.alpha < 1.0 && w.r > 0.0 && w.r < 1.0 && w.q == exponent_q(w.alpha, w.r, w.theta) &&
           w.tau == exponent_tau(w.q, w.alpha) && 1.0 / w.p <= w.q && w.q <= upper && 1.0 - w.alpha < 2.0 / w.q;
}

/// Finds (α, r) by halving from 0.5 (α outer, r inner) until the constraints hold.
inline ExponentWitness find_exponents(double p, double theta, int N) {
    if (N < 3) throw DomainError("find_exponents: N must be >= 3");
    if (!(p > N / 2.0)) throw DomainError("find_exponents: need p > N/2 (p = " + std::to_string(p) + ")");
    if (!(theta > 0.0 && theta < 1.0)) throw DomainError("find_exponents: θ must lie in (0,1)");
    ExponentWitness w{p, N, theta, 0.0, 0.0, 0.0, 0.0};
    double alpha = 0.5;
    for (int i = 0; i < 60; ++i, alpha *= 0.5) {
        double r = 0.5;
        for (int j = 0; j < 60; ++j, r *= 0.5) {
            w.alpha = alpha;
            w.r = r;
            w.q = exponent_q(alpha, r, theta);
            w.tau = exponent_tau(w.q, alpha);
            if (exponents_feasible(w)) return w;
        }
    }
    throw Error("find_exponents: search exhausted for p=" + std::to_string(p) + ", N=" + std::to_string(N) +
                ", θ=" + std::to_string(theta));
}

} // namespace gqc
