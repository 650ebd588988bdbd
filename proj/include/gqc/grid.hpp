#pragma once

// Uniform finite-difference grids on boxes with homogeneous Dirichlet data.
//
// Interior nodes are stored in lexicographic order with x1 varying slowest.
// Boundary values are never stored; every stencil substitutes 0 for them.

#include "gqc/errors.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

namespace gqc {

using Vector = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double>;

struct Interval {
    double lo = 0.0;
    double hi = 1.0;

    bool operator==(const Interval&) const = default;
};

struct GridSpec {
    int dim = 1;
    std::array<Interval, 3> bounds{};
    std::array<int, 3> cells{4, 1, 1};  // n_i; interior node count per axis is n_i - 1

    bool operator==(const GridSpec&) const = default;

    /// Cube [lo, hi]^dim with n cells per axis.
    static GridSpec box(int dim, int n, double lo = 0.0, double hi = 1.0) {
        GridSpec s;
        s.dim = dim;
        for (int a = 0; a < 3; ++a) {
            s.bounds[a] = {lo, hi};
            s.cells[a] = a < dim ? n : 1;
        }
        s.validate();
        return s;
    }

    void validate() const {
        if (dim < 1 || dim > 3) {
            throw SpecError("grid dimension must be 1, 2 or 3, got " + std::to_string(dim));
        }
        for (int a = 0; a < dim; ++a) {
            const auto axis = std::to_string(a + 1);
            if (cells[a] < 4) {
                throw SpecError("axis " + axis + ": need n >= 4 cells, got " + std::to_string(cells[a]));
            }
            if (!(bounds[a].lo < bounds[a].hi)) {
                throw SpecError("axis " + axis + ": lower bound must be below upper bound");
            }
            const double h = spacing(a);
            if (!std::isfinite(h) || h <= 0.0) {
                throw SpecError("axis " + axis + ": spacing is not finite and positive");
            }
        }
    }

    [[nodiscard]] double spacing(int axis) const {
        return (bounds[axis].hi - bounds[axis].lo) / cells[axis];
    }

    [[nodiscard]] int interior(int axis) const { return axis < dim ? cells[axis] - 1 : 1; }

    [[nodiscard]] std::size_t size() const {
        std::size_t total = 1;
        for (int a = 0; a < dim && a < 3; ++a) total *= static_cast<std::size_t>(interior(a));
        return total;
    }

    [[nodiscard]] double cell_volume() const {
        double v = 1.0;
        for (int a = 0; a < dim; ++a) v *= spacing(a);
        return v;
    }

    [[nodiscard]] std::array<int, 3> multi_index(std::size_t k) const {
        std::array<int, 3> idx{0, 0, 0};
        for (int a = dim - 1; a >= 0; --a) {
            const auto m = static_cast<std::size_t>(interior(a));
            idx[a] = static_cast<int>(k % m);
            k /= m;
        }
        return idx;
    }

    [[nodiscard]] std::size_t linear_index(const std::array<int, 3>& idx) const {
        std::size_t k = 0;
        for (int a = 0; a < dim; ++a) k = k * static_cast<std::size_t>(interior(a)) + static_cast<std::size_t>(idx[a]);
        return k;
    }

    /// Physical coordinate of interior node k along `axis`.
    [[nodiscard]] double coordinate(std::size_t k, int axis) const {
        return bounds[axis].lo + (multi_index(k)[axis] + 1) * spacing(axis);
    }
};

/// Nodal values of a field on the interior nodes of a grid.
struct GridFunction {
    GridSpec spec;
    Vector values;

    GridFunction() = default;
    GridFunction(GridSpec s, Vector v) : spec(s), values(std::move(v)) {
        if (static_cast<std::size_t>(values.size()) != spec.size()) {
            throw SpecError("grid function has " + std::to_string(values.size()) + " values, grid has " +
                            std::to_string(spec.size()) + " interior nodes");
        }
    }

    static GridFunction zeros(const GridSpec& s) { return {s, Vector::Zero(static_cast<Eigen::Index>(s.size()))}; }
    static GridFunction constant(const GridSpec& s, double c) {
        return {s, Vector::Constant(static_cast<Eigen::Index>(s.size()), c)};
    }

    /// Samples f(x) where x is a std::array<double,3> of node coordinates.
    template <typename F>
    static GridFunction sample(const GridSpec& s, F&& f) {
        Vector v(static_cast<Eigen::Index>(s.size()));
        for (std::size_t k = 0; k < s.size(); ++k) {
            std::array<double, 3> x{0.0, 0.0, 0.0};
            for (int a = 0; a < s.dim; ++a) x[a] = s.coordinate(k, a);
            v[static_cast<Eigen::Index>(k)] = f(x);
        }
        return {s, std::move(v)};
    }

    [[nodiscard]] std::size_t size() const { return static_cast<std::size_t>(values.size()); }
    double operator[](std::size_t k) const { return values[static_cast<Eigen::Index>(k)]; }

    /// Throws DomainError naming the first non-finite node.
    void check_finite(const std::string& what) const {
        for (Eigen::Index k = 0; k < values.size(); ++k) {
            if (!std::isfinite(values[k])) throw DomainError(what + " is not finite", static_cast<std::size_t>(k));
        }
    }
};

inline void require_same_grid(const GridSpec& a, const GridSpec& b, const char* what) {
    if (!(a == b)) throw SpecError(std::string(what) + ": grid mismatch");
}

/// Assembled stencils for one grid. Immutable once built; copies share the
/// Laplacian factorization.
class DiscreteOperators {
public:
    static constexpr int kNoNeighbor = -1;

    [[nodiscard]] const GridSpec& spec() const { return spec_; }
    [[nodiscard]] std::size_t size() const { return spec_.size(); }

    /// -Δ with the (2d+1)-point stencil and Dirichlet elimination.
    [[nodiscard]] const SparseMatrix& laplacian() const { return laplacian_; }
    /// Central difference along `axis`.
    [[nodiscard]] const SparseMatrix& gradient(int axis) const { return gradient_[axis]; }
    /// Midpoint weights ∏h_i for fields vanishing on the boundary.
    [[nodiscard]] const Vector& weights() const { return weights_; }
    /// Weights integrating constants exactly over the closed box (boundary-adjacent
    /// nodes carry 1.5h per axis); used for coefficient data that need not vanish on ∂Ω.
    [[nodiscard]] const Vector& data_weights() const { return data_weights_; }
    [[nodiscard]] double cell_volume() const { return spec_.cell_volume(); }

    /// Neighbour of node k along axis in direction side (0: -, 1: +), or kNoNeighbor.
    [[nodiscard]] int neighbor(std::size_t k, int axis, int side) const {
        return neighbors_[(k * static_cast<std::size_t>(spec_.dim) + static_cast<std::size_t>(axis)) * 2 +
                          static_cast<std::size_t>(side)];
    }

    /// Smallest eigenvalue of the discrete -Δ (closed form).
    [[nodiscard]] double min_laplacian_eigenvalue() const {
        double s = 0.0;
        for (int a = 0; a < spec_.dim; ++a) {
            const double h = spec_.spacing(a);
            const double t = std::sin(std::numbers::pi / (2.0 * spec_.cells[a]));
            s += 4.0 / (h * h) * t * t;
        }
        return s;
    }

    /// Solves laplacian * u = f with the cached Cholesky factorization.
    [[nodiscard]] Vector solve_laplacian(const Vector& f) const { return factor_->solve(f); }

    friend DiscreteOperators build_operators(const GridSpec& spec);

private:
    GridSpec spec_;
    SparseMatrix laplacian_;
    std::array<SparseMatrix, 3> gradient_;
    Vector weights_;
    Vector data_weights_;
    std::vector<int> neighbors_;
    std::shared_ptr<const Eigen::SimplicialLDLT<SparseMatrix>> factor_;
};

inline DiscreteOperators build_operators(const GridSpec& spec) {
    spec.validate();
    DiscreteOperators ops;
    ops.spec_ = spec;
    const std::size_t n = spec.size();
    const int d = spec.dim;

    ops.neighbors_.assign(n * static_cast<std::size_t>(d) * 2, DiscreteOperators::kNoNeighbor);
    for (std::size_t k = 0; k < n; ++k) {
        const auto idx = spec.multi_index(k);
        for (int a = 0; a < d; ++a) {
            for (int side = 0; side < 2; ++side) {
                auto j = idx;
                j[a] += side == 0 ? -1 : 1;
                if (j[a] >= 0 && j[a] < spec.interior(a)) {
                    ops.neighbors_[(k * static_cast<std::size_t>(d) + static_cast<std::size_t>(a)) * 2 +
                                   static_cast<std::size_t>(side)] = static_cast<int>(spec.linear_index(j));
                }
            }
        }
    }

    using Triplet = Eigen::Triplet<double>;
    std::vector<Triplet> lap;
    std::array<std::vector<Triplet>, 3> grad;
    lap.reserve(n * static_cast<std::size_t>(2 * d + 1));
    for (std::size_t k = 0; k < n; ++k) {
        const auto row = static_cast<int>(k);
        double diag = 0.0;
        for (int a = 0; a < d; ++a) {
            const double h = spec.spacing(a);
            const double ih2 = 1.0 / (h * h);
            diag += 2.0 * ih2;
            for (int side = 0; side < 2; ++side) {
                const int j = ops.neighbor(k, a, side);
                if (j == DiscreteOperators::kNoNeighbor) continue;
                lap.emplace_back(row, j, -ih2);
                grad[a].emplace_back(row, j, (side == 0 ? -1.0 : 1.0) / (2.0 * h));
            }
        }
        lap.emplace_back(row, row, diag);
    }
    const auto N = static_cast<Eigen::Index>(n);
    ops.laplacian_.resize(N, N);
    ops.laplacian_.setFromTriplets(lap.begin(), lap.end());
    for (int a = 0; a < 3; ++a) {
        ops.gradient_[a].resize(N, N);
        if (a < d) ops.gradient_[a].setFromTriplets(grad[a].begin(), grad[a].end());
    }

    ops.weights_ = Vector::Constant(N, spec.cell_volume());
    ops.data_weights_ = ops.weights_;
    for (std::size_t k = 0; k < n; ++k) {
        const auto idx = spec.multi_index(k);
        for (int a = 0; a < d; ++a) {
            if (idx[a] == 0 || idx[a] == spec.interior(a) - 1) ops.data_weights_[static_cast<Eigen::Index>(k)] *= 1.5;
        }
    }

    auto factor = std::make_shared<Eigen::SimplicialLDLT<SparseMatrix>>(ops.laplacian_);
    if (factor->info() != Eigen::Success) throw Error("Laplacian factorization failed");
    ops.factor_ = std::move(factor);
    return ops;
}

// --- pointwise stencil functions -------------------------------------------

/// Nodewise Σ_i (D_i u)² with central differences.
inline GridFunction grad_sq(const GridFunction& u, const DiscreteOperators& ops) {
    require_same_grid(u.spec, ops.spec(), "grad_sq");
    Vector out = Vector::Zero(u.values.size());
    for (int a = 0; a < ops.spec().dim; ++a) {
        const Vector g = ops.gradient(a) * u.values;
        out += g.cwiseProduct(g);
    }
    return {u.spec, std::move(out)};
}

namespace detail {

// e^z - 1 - z without cancellation near 0.
inline double expm1_minus_id(double z) {
    if (std::abs(z) < 1e-3) {
        const double z2 = z * z;
        return z2 * (0.5 + z * (1.0 / 6.0 + z * (1.0 / 24.0 + z * (1.0 / 120.0 + z / 720.0))));
    }
    return std::expm1(z) - z;
}

} // namespace detail

/// Discrete μ|∇u|² in two-point exponential form:
///
///   Σ_axes Σ_± (e^{μ δ} - 1 - μ δ) / (μ h²),   δ = u(neighbour) - u(node).
///
/// It satisfies -Δ_h u - Q = -μ⁻¹ e^{-μu} Δ_h e^{μu} exactly, so the Cole–Hopf
/// substitution carries over to the grid. Second order, ≥ 0 where μ ≥ 0, and
/// nondecreasing in μ.
inline Vector quadratic_gradient_term(const Vector& u, const Vector& mu, const DiscreteOperators& ops) {
    const auto& s = ops.spec();
    Vector out = Vector::Zero(u.size());
    for (Eigen::Index k = 0; k < u.size(); ++k) {
        const double m = mu[k];
        if (m == 0.0) continue;
        double acc = 0.0;
        for (int a = 0; a < s.dim; ++a) {
            const double h = s.spacing(a);
            for (int side = 0; side < 2; ++side) {
                const int j = ops.neighbor(static_cast<std::size_t>(k), a, side);
                const double delta = (j == DiscreteOperators::kNoNeighbor ? 0.0 : u[j]) - u[k];
                acc += detail::expm1_minus_id(m * delta) / (m * h * h);
            }
        }
        out[k] = acc;
    }
    return out;
}

/// Jacobian of quadratic_gradient_term with respect to u.
inline SparseMatrix quadratic_gradient_jacobian(const Vector& u, const Vector& mu, const DiscreteOperators& ops) {
    const auto& s = ops.spec();
    std::vector<Eigen::Triplet<double>> t;
    t.reserve(static_cast<std::size_t>(u.size()) * static_cast<std::size_t>(2 * s.dim + 1));
    for (Eigen::Index k = 0; k < u.size(); ++k) {
        const double m = mu[k];
        if (m == 0.0) continue;
        double diag = 0.0;
        for (int a = 0; a < s.dim; ++a) {
            const double h = s.spacing(a);
            for (int side = 0; side < 2; ++side) {
                const int j = ops.neighbor(static_cast<std::size_t>(k), a, side);
                const double delta = (j == DiscreteOperators::kNoNeighbor ? 0.0 : u[j]) - u[k];
                const double e = std::expm1(m * delta) / (h * h);
                diag -= e;
                if (j != DiscreteOperators::kNoNeighbor) t.emplace_back(static_cast<int>(k), j, e);
            }
        }
        t.emplace_back(static_cast<int>(k), static_cast<int>(k), diag);
    }
    SparseMatrix J(u.size(), u.size());
    J.setFromTriplets(t.begin(), t.end());
    return J;
}

// --- norms and the Poisson kernel ------------------------------------------

struct Norms {
    double lp = 0.0;
    double sup = 0.0;
    double h10 = 0.0;
    double integral = 0.0;
};

/// Energy (H¹₀) norm sqrt(∏h · uᵀ(-Δ_h)u), i.e. squared edge differences summed.
inline double h10_norm(const Vector& u, const DiscreteOperators& ops) {
    const double e = u.dot(ops.laplacian() * u);
    return std::sqrt(std::max(0.0, e * ops.cell_volume()));
}

inline Norms norms(const GridFunction& u, const DiscreteOperators& ops, double p = 2.0) {
    require_same_grid(u.spec, ops.spec(), "norms");
    if (!(p >= 1.0)) throw std::invalid_argument("norms: exponent p must be >= 1");
    Norms r;
    const Vector& w = ops.weights();
    r.lp = std::pow(w.dot(u.values.cwiseAbs().array().pow(p).matrix()), 1.0 / p);
    r.sup = u.values.size() ? u.values.cwiseAbs().maxCoeff() : 0.0;
    r.h10 = h10_norm(u.values, ops);
    r.integral = w.dot(u.values);
    return r;
}

/// Solves -Δ_h u = f.
inline GridFunction poisson_solve(const GridFunction& f, const DiscreteOperators& ops) {
    require_same_grid(f.spec, ops.spec(), "poisson_solve");
    Vector u = ops.solve_laplacian(f.values);
    const double fn = f.values.norm();
    const double res = (ops.laplacian() * u - f.values).norm();
    if (fn > 0.0 && res > 1e-12 * fn) {
        throw Error("poisson_solve: relative residual " + std::to_string(res / fn) + " above 1e-12");
    }
    return {f.spec, std::move(u)};
}

} // namespace gqc
