#pragma once

// Nonlinear solvers for general μ(x): residual, damped Newton, the pivot
// operator K^μ, the fixed-point map T_λ, sub/super-solution enclosure and a
// multi-start uniqueness probe.

#include "gqc/transform.hpp"

#include <Eigen/SparseLU>

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace gqc {

struct SolveOptions {
    double tol_residual = 1e-10;
    int max_newton = 50;
    double armijo_shrink = 0.5;
    double armijo_slope = 1e-4;
    double min_step = 1e-8;
    int max_fixed_point = 200;
    double fp_tol = 1e-10;
};

struct StepRecord {
    double step = 0.0;
    double residual = 0.0;
};

struct SolveReport {
    bool converged = false;
    int iterations = 0;
    double final_residual = 0.0;
    std::vector<StepRecord> step_history;
    std::optional<std::string> failure_reason;  // max_iter | line_search_stall | diverged
};

/// F(u) = -Δ_h u - a⊙u - Q(u; μ) - f, the common shape of (P_λ) (a = λc) and of
/// the pivot problem (a = -1).
struct QuasilinearSystem {
    Vector a;
    Vector mu;
    Vector f;

    [[nodiscard]] Vector residual(const Vector& u, const DiscreteOperators& ops) const {
        return ops.laplacian() * u - a.cwiseProduct(u) - quadratic_gradient_term(u, mu, ops) - f;
    }

    [[nodiscard]] SparseMatrix jacobian(const Vector& u, const DiscreteOperators& ops) const {
        SparseMatrix J = ops.laplacian() - quadratic_gradient_jacobian(u, mu, ops);
        for (Eigen::Index k = 0; k < u.size(); ++k) J.coeffRef(k, k) -= a[k];
        return J;
    }

    /// Residuals are measured relative to max(1, ‖-Δ_h u‖∞, ‖f‖∞).
    [[nodiscard]] double scale(const Vector& u, const DiscreteOperators& ops) const {
        const double lu = u.size() ? (ops.laplacian() * u).cwiseAbs().maxCoeff() : 0.0;
        const double fs = f.size() ? f.cwiseAbs().maxCoeff() : 0.0;
        return std::max({1.0, lu, fs});
    }
};

inline QuasilinearSystem system_of(const ProblemData& p) {
    return {p.lambda * p.c_values(), p.mu_values(), p.h_values()};
}

/// -Δ_h u - λc u - μ|∇u|²_h - h, with the exponential two-point form of μ|∇u|².
inline GridFunction residual_P(const GridFunction& u, const ProblemData& p, const DiscreteOperators& ops) {
    require_same_grid(u.spec, ops.spec(), "residual_P");
    require_same_grid(p.spec, ops.spec(), "residual_P");
    return {u.spec, system_of(p).residual(u.values, ops)};
}

/// Sup-norm residual of (P_λ) relative to max(1, ‖-Δ_h u‖∞, ‖h‖∞).
inline double scaled_residual(const GridFunction& u, const ProblemData& p, const DiscreteOperators& ops) {
    const auto sys = system_of(p);
    return sys.residual(u.values, ops).cwiseAbs().maxCoeff() / sys.scale(u.values, ops);
}

/// Newton with Armijo backtracking on ‖F‖₂.
inline std::pair<Vector, SolveReport> newton(const QuasilinearSystem& sys, Vector u, const DiscreteOperators& ops,
                                             const SolveOptions& o) {
    SolveReport rep;
    Vector r = sys.residual(u, ops);
    for (int it = 0;; ++it) {
        const double scaled = r.cwiseAbs().maxCoeff() / sys.scale(u, ops);
        rep.final_residual = scaled;
        if (!std::isfinite(scaled)) {
            rep.failure_reason = "diverged";
            break;
        }
        if (scaled <= o.tol_residual) {
            rep.converged = true;
            break;
        }
        if (it == o.max_newton) {
            rep.failure_reason = "max_iter";
            break;
        }
        Eigen::SparseLU<SparseMatrix> lu;
        lu.compute(sys.jacobian(u, ops));
        if (lu.info() != Eigen::Success) {
            rep.failure_reason = "diverged";
            break;
        }
        const Vector du = lu.solve(-r);
        if (!du.allFinite()) {
            rep.failure_reason = "diverged";
            break;
        }
        const double r0 = r.norm();
        double t = 1.0;
        bool accepted = false;
        while (t >= o.min_step) {
            Vector trial = u + t * du;
            Vector rt = sys.residual(trial, ops);
            const double rn = rt.norm();
            if (std::isfinite(rn) && rn <= (1.0 - o.armijo_slope * t) * r0) {
                u = std::move(trial);
                r = std::move(rt);
                accepted = true;
                break;
            }
            t *= o.armijo_shrink;
        }
        ++rep.iterations;
        if (!accepted) {
            rep.step_history.push_back({0.0, r.cwiseAbs().maxCoeff()});
            rep.failure_reason = "line_search_stall";
            break;
        }
        rep.step_history.push_back({t, r.cwiseAbs().maxCoeff()});
    }
    return {std::move(u), std::move(rep)};
}

inline std::pair<GridFunction, SolveReport> newton_solve(const ProblemData& p, const GridFunction& u0,
                                                         const DiscreteOperators& ops, const SolveOptions& o = {}) {
    require_same_grid(u0.spec, ops.spec(), "newton_solve");
    require_same_grid(p.spec, ops.spec(), "newton_solve");
    auto [u, rep] = newton(system_of(p), u0.values, ops, o);
    return {GridFunction(u0.spec, std::move(u)), std::move(rep)};
}

/// K^μ f: the solution of -Δu + u - μ|∇u|² = f.
inline std::pair<GridFunction, SolveReport> K_mu(const GridFunction& f, const Vector& mu, const DiscreteOperators& ops,
                                                 const SolveOptions& o = {},
                                                 const std::optional<GridFunction>& u0 = std::nullopt) {
    require_same_grid(f.spec, ops.spec(), "K_mu");
    const QuasilinearSystem sys{Vector::Constant(f.values.size(), -1.0), mu, f.values};
    auto [u, rep] = newton(sys, u0 ? u0->values : Vector::Zero(f.values.size()), ops, o);
    return {GridFunction(f.spec, std::move(u)), std::move(rep)};
}

inline std::pair<GridFunction, SolveReport> K_mu(const GridFunction& f, const CoefficientSpec& mu,
                                                 const DiscreteOperators& ops, const SolveOptions& o = {}) {
    return K_mu(f, mu.values(), ops, o);
}

/// Picard iteration u ← K^μ((λc + 1)u + h). step_history holds (0, increment).
inline std::pair<GridFunction, SolveReport> fixed_point_T(const ProblemData& p, const GridFunction& u0,
                                                          const DiscreteOperators& ops, const SolveOptions& o = {}) {
    require_same_grid(u0.spec, ops.spec(), "fixed_point_T");
    SolveReport rep;
    GridFunction u = u0;
    const Vector shift = (p.lambda * p.c_values()).array() + 1.0;
    for (int it = 1; it <= o.max_fixed_point; ++it) {
        GridFunction rhs(u.spec, shift.cwiseProduct(u.values) + p.h_values());
        auto [next, inner] = K_mu(rhs, p.mu_values(), ops, o, u);
        rep.iterations = it;
        if (!inner.converged) {
            rep.failure_reason = inner.failure_reason;
            rep.final_residual = inner.final_residual;
            return {u, rep};
        }
        const double inc = (next.values - u.values).cwiseAbs().maxCoeff();
        rep.step_history.push_back({0.0, inc});
        u = std::move(next);
        if (!std::isfinite(inc)) {
            rep.failure_reason = "diverged";
            return {u, rep};
        }
        if (inc <= o.fp_tol) {
            rep.final_residual = scaled_residual(u, p, ops);
            rep.converged = rep.final_residual <= 10.0 * o.tol_residual;
            if (!rep.converged) rep.failure_reason = "max_iter";
            return {u, rep};
        }
    }
    rep.failure_reason = "max_iter";
    rep.final_residual = rep.step_history.empty() ? 0.0 : rep.step_history.back().residual;
    return {u, rep};
}

struct Enclosure {
    GridFunction alpha;
    GridFunction beta;
    GridFunction u;
    SolveReport report;
};

namespace detail {

// Solution of -Δu = d u + m Q(u) + f with constant m ≥ 0, d ≤ 0, f ≥ 0.
inline GridFunction constant_mu_solution(const Vector& d, double m, const Vector& f, const DiscreteOperators& ops) {
    const GridSpec& s = ops.spec();
    if (f.size() == 0 || f.maxCoeff() <= 0.0) return GridFunction::zeros(s);
    if (m == 0.0) {
        SparseMatrix A = ops.laplacian();
        for (Eigen::Index k = 0; k < d.size(); ++k) A.coeffRef(k, k) -= d[k];
        Eigen::SimplicialLDLT<SparseMatrix> ldlt(A);
        if (ldlt.info() != Eigen::Success) throw Error("enclosure: linear factorization failed");
        return {s, ldlt.solve(f)};
    }
    TransformedProblem tp{GridFunction(s, d), m, GridFunction(s, f)};
    try {
        return solve_transformed(tp, ops).u;
    } catch (const ConvergenceError& e) {
        throw ConvergenceError(std::string("enclosure bound failed ((Hc)-type failure): ") + e.what());
    }
}

} // namespace detail

/// β solves the problem with ‖μ⁺‖∞ and h⁺, α = -(solution with ‖μ⁻‖∞ and h⁻);
/// u is Newton's solution started from (α+β)/2 and must satisfy α ≤ u ≤ β.
inline Enclosure monotone_enclosure(const ProblemData& p, const DiscreteOperators& ops, const SolveOptions& o = {}) {
    require_same_grid(p.spec, ops.spec(), "monotone_enclosure");
    const Vector d = p.lambda * p.c_values();
    for (Eigen::Index k = 0; k < d.size(); ++k) {
        if (d[k] > 0.0) throw DomainError("monotone_enclosure needs λc <= 0", static_cast<std::size_t>(k));
    }
    Enclosure e;
    e.beta = detail::constant_mu_solution(d, p.mu_plus_sup, p.h_plus, ops);
    GridFunction minus = detail::constant_mu_solution(d, p.mu_minus_sup, p.h_minus, ops);
    e.alpha = GridFunction(p.spec, -minus.values);
    auto [u, rep] = newton_solve(p, GridFunction(p.spec, 0.5 * (e.alpha.values + e.beta.values)), ops, o);
    e.u = std::move(u);
    e.report = std::move(rep);
    if (e.report.converged) {
        for (Eigen::Index k = 0; k < d.size(); ++k) {
            if (e.u.values[k] < e.alpha.values[k] - 1e-8 || e.u.values[k] > e.beta.values[k] + 1e-8) {
                throw Error("enclosure ordering violated: alpha <= u <= beta fails at node " + std::to_string(k));
            }
        }
    }
    return e;
}

// --- multi-start -----------------------------------------------------------

struct SolutionCluster {
    std::size_t representative = 0;  // start index
    std::vector<std::size_t> members;
    double sup_norm = 0.0;
};

struct UniquenessReport {
    int k = 0;
    int converged = 0;
    double max_pairwise_distance = 0.0;
    std::vector<bool> start_converged;
    std::vector<GridFunction> solutions;  // one per start, in start order
    std::vector<SolutionCluster> clusters;
};

/// Worker count: GQC_THREADS if set, else hardware concurrency.
inline unsigned worker_threads() {
    if (const char* env = std::getenv("GQC_THREADS")) {
        const int n = std::atoi(env);
        if (n >= 1) return static_cast<unsigned>(n);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

/// Start i is uniform in [-1, 1] per node, scaled by 1/(1 + ‖h‖∞), drawn from
/// a generator seeded with (seed, i).
inline Vector multi_start_vector(std::uint64_t seed, std::size_t index, std::size_t n, double h_sup) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(index)};
    std::mt19937_64 rng(seq);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    Vector v(static_cast<Eigen::Index>(n));
    for (Eigen::Index k = 0; k < v.size(); ++k) v[k] = dist(rng) / (1.0 + h_sup);
    return v;
}

inline UniquenessReport multi_start(const ProblemData& p, int k, std::uint64_t seed, const DiscreteOperators& ops,
                                    const SolveOptions& o = {}, double cluster_radius = 1e-3) {
    if (k < 2) throw std::invalid_argument("multi_start: need k >= 2 starts");
    require_same_grid(p.spec, ops.spec(), "multi_start");
    UniquenessReport r;
    r.k = k;
    const auto n = static_cast<std::size_t>(k);
    r.solutions.resize(n);
    std::vector<char> ok(n, 0);
    const double h_sup = p.h_values().size() ? p.h_values().cwiseAbs().maxCoeff() : 0.0;

    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            GridFunction u0(p.spec, multi_start_vector(seed, i, p.spec.size(), h_sup));
            auto [u, rep] = newton_solve(p, u0, ops, o);
            ok[i] = rep.converged ? 1 : 0;
            r.solutions[i] = std::move(u);
        }
    };
    const unsigned threads = std::min<unsigned>(worker_threads(), static_cast<unsigned>(n));
    std::vector<std::thread> pool;
    for (unsigned t = 1; t < threads; ++t) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();

    r.start_converged.assign(ok.begin(), ok.end());
    std::vector<std::size_t> good;
    for (std::size_t i = 0; i < n; ++i) {
        if (ok[i]) good.push_back(i);
    }
    r.converged = static_cast<int>(good.size());
    for (std::size_t a = 0; a < good.size(); ++a) {
        for (std::size_t b = a + 1; b < good.size(); ++b) {
            const double dist = (r.solutions[good[a]].values - r.solutions[good[b]].values).cwiseAbs().maxCoeff();
            r.max_pairwise_distance = std::max(r.max_pairwise_distance, dist);
        }
    }
    for (std::size_t i : good) {
        bool placed = false;
        for (auto& c : r.clusters) {
            const double dist = (r.solutions[i].values - r.solutions[c.representative].values).cwiseAbs().maxCoeff();
            if (dist <= cluster_radius) {
                c.members.push_back(i);
                placed = true;
                break;
            }
        }
        if (!placed) {
            r.clusters.push_back({i, {i}, r.solutions[i].values.cwiseAbs().maxCoeff()});
        }
    }
    return r;
}

} // namespace gqc
