#pragma once

// Subcommands of the gqc tool. Each returns a process exit code:
// 0 success, 1 usage/config error, 2 a requested condition fails, 3 solve failure.

#include "gqc/config.hpp"
#include "gqc/oracle.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

namespace gqc {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitCondition = 2, kExitSolve = 3 };

struct CommandContext {
    RunConfig config;
    std::filesystem::path out_dir;
    bool quiet = false;
    std::ostream* log = &std::cerr;
};

inline Json to_json(const SolveReport& r) {
    Json steps = Json::array();
    for (const auto& s : r.step_history) steps.push_back({s.step, s.residual});
    return {{"converged", r.converged},
            {"iterations", r.iterations},
            {"final_residual", r.final_residual},
            {"failure_reason", r.failure_reason ? Json(*r.failure_reason) : Json(nullptr)},
            {"step_history", steps}};
}

inline Json to_json(const ConditionReport& r) {
    Json j{{"condition", to_string(r.condition)},
           {"holds", r.holds},
           {"margin", r.infimum_estimate},
           {"sub_infima", r.sub_infima},
           {"vacuous", r.vacuous}};
    if (!r.note.empty()) j["note"] = r.note;
    return j;
}

inline Json to_json(const ValidationReport& v) {
    Json clauses = Json::array();
    for (const auto& c : v.clauses) {
        clauses.push_back({{"clause", c.clause},
                           {"holds", c.holds},
                           {"witness_node", c.witness ? Json(*c.witness) : Json(nullptr)}});
    }
    return {{"profile", to_string(v.profile)}, {"passed", v.passed}, {"mu1", v.mu1}, {"mu2", v.mu2},
            {"clauses", clauses}};
}

inline Json to_json(const Norms& n) {
    return {{"sup", n.sup}, {"l2", n.lp}, {"h10", n.h10}, {"integral", n.integral}};
}

namespace detail {

inline Json report_header(const CommandContext& ctx, const char* command) {
    return {{"command", command}, {"config_hash", ctx.config.hash}, {"seed", ctx.config.seed}};
}

inline void write_json(const std::filesystem::path& path, const Json& j) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write '" + path.string() + "'");
    out << j.dump(2) << "\n";
}

inline void say(const CommandContext& ctx, const std::string& line) {
    if (!ctx.quiet) *ctx.log << line << "\n";
}

inline ProblemData build_problem(const RunConfig& rc, const DiscreteOperators& ops, double lambda) {
    auto c = coefficient_from_config(rc.c_source, rc, "/coefficients/c");
    auto mu = coefficient_from_config(rc.mu_source, rc, "/coefficients/mu");
    auto h = coefficient_from_config(rc.h_source, rc, "/coefficients/h");
    ProblemData p = make_problem(rc.grid, std::move(c), std::move(mu), std::move(h), lambda, rc.profile, rc.p_exponent);
    if (rc.u_star) {
        const auto us = coefficient_from_config(*rc.u_star, rc, "/manufactured/u_star");
        p = p.with_h(manufactured_h(us, p, ops));
    }
    return p;
}

inline std::string fmt(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", x);
    return buf;
}

} // namespace detail

inline int cmd_check(const CommandContext& ctx) {
    const RunConfig& rc = ctx.config;
    const auto ops = build_operators(rc.grid);
    const ProblemData p = detail::build_problem(rc, ops, rc.lambda.value_or(0.0));
    Json rep = detail::report_header(ctx, "check");
    rep["lambda"] = p.lambda;
    rep["profile"] = to_json(validate_profile(p));

    Json conds = Json::object();
    bool all_hold = true;
    auto requested = [&](Condition c) {
        return std::find(rc.conditions.begin(), rc.conditions.end(), c) != rc.conditions.end();
    };
    for (Condition c : {Condition::H0, Condition::Hc, Condition::H, Condition::k1, Condition::FeroneMurat}) {
        try {
            const ConditionReport r =
                c == Condition::FeroneMurat ? check_ferone_murat(p, ops) : check_smallness(p, c, ops);
            Json j = to_json(r);
            j["requested"] = requested(c);
            conds[to_string(c)] = j;
            if (requested(c) && !r.holds) all_hold = false;
            detail::say(ctx, std::string(to_string(c)) + ": " + (r.holds ? "holds" : "fails") +
                                 " (margin " + detail::fmt(r.infimum_estimate) + ")" + (r.vacuous ? " vacuous" : ""));
        } catch (const Error& e) {
            conds[to_string(c)] = {{"condition", to_string(c)}, {"applicable", false}, {"reason", e.what()},
                                   {"requested", requested(c)}};
            if (requested(c)) all_hold = false;
            detail::say(ctx, std::string(to_string(c)) + ": not applicable (" + e.what() + ")");
        }
    }
    rep["conditions"] = conds;
    try {
        const auto eig = first_eigen(p.c.cached, ops);
        rep["gamma1"] = eig.gamma;
        detail::say(ctx, "gamma1 = " + detail::fmt(eig.gamma));
    } catch (const Error& e) {
        rep["gamma1"] = nullptr;
        rep["gamma1_error"] = e.what();
    }
    rep["all_requested_hold"] = all_hold;
    detail::write_json(ctx.out_dir / "check.json", rep);
    return all_hold ? kExitOk : kExitCondition;
}

inline int cmd_solve(const CommandContext& ctx) {
    const RunConfig& rc = ctx.config;
    if (!rc.lambda) throw ConfigError("/lambda", "solve needs a fixed lambda");
    const auto ops = build_operators(rc.grid);
    const ProblemData p = detail::build_problem(rc, ops, *rc.lambda);
    Json rep = detail::report_header(ctx, "solve");
    rep["lambda"] = p.lambda;
    rep["profile"] = to_json(validate_profile(p));

    Json strategies = Json::array();
    std::optional<GridFunction> solution;
    std::string used;
    {
        auto [u, r] = newton_solve(p, GridFunction::zeros(p.spec), ops, rc.solver);
        strategies.push_back({{"strategy", "newton"}, {"report", to_json(r)}});
        if (r.converged) {
            solution = std::move(u);
            used = "newton";
        }
    }
    if (!solution) {
        auto [u, r] = fixed_point_T(p, GridFunction::zeros(p.spec), ops, rc.solver);
        strategies.push_back({{"strategy", "fixed_point"}, {"report", to_json(r)}});
        if (r.converged) {
            solution = std::move(u);
            used = "fixed_point";
        }
    }
    if (!solution) {
        Json entry{{"strategy", "monotone_enclosure"}};
        if (p.lambda <= 0.0 && (p.lambda * p.c_values()).maxCoeff() <= 0.0) {
            try {
                auto e = monotone_enclosure(p, ops, rc.solver);
                entry["report"] = to_json(e.report);
                if (e.report.converged) {
                    solution = std::move(e.u);
                    used = "monotone_enclosure";
                }
            } catch (const Error& err) {
                entry["error"] = err.what();
            }
        } else {
            entry["skipped"] = "needs lambda*c <= 0";
        }
        strategies.push_back(entry);
    }
    rep["strategies"] = strategies;
    rep["converged"] = solution.has_value();
    if (!solution) {
        detail::write_json(ctx.out_dir / "solve.json", rep);
        detail::say(ctx, "solve failed: every strategy failed");
        return kExitSolve;
    }
    rep["strategy"] = used;
    rep["norms"] = to_json(norms(*solution, ops));
    rep["residual"] = scaled_residual(*solution, p, ops);
    if (rc.u_star) {
        const auto us = coefficient_from_config(*rc.u_star, rc, "/manufactured/u_star");
        rep["manufactured_error_sup"] = (solution->values - us.values()).cwiseAbs().maxCoeff();
    }
    const auto file = ctx.out_dir / "solution.txt";
    write_sampled_file(file.string(), *solution);
    rep["solution_file"] = file.filename().string();
    detail::write_json(ctx.out_dir / "solve.json", rep);
    detail::say(ctx, "solved with " + used + ", sup norm " + detail::fmt(solution->values.cwiseAbs().maxCoeff()));
    return kExitOk;
}

/// CSV header of branch tables.
inline constexpr const char* kBranchCsvHeader = "idx,lambda,sup_norm,h10_norm,arclength,newton_iters";

inline void write_branch_csv(const std::filesystem::path& path, const Branch& b) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write '" + path.string() + "'");
    out << kBranchCsvHeader << "\n";
    char buf[160];
    for (std::size_t i = 0; i < b.points.size(); ++i) {
        const auto& p = b.points[i];
        std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%d\n", i, p.lambda, p.sup_norm, p.h10_norm, p.s,
                      p.newton_iters);
        out << buf;
    }
}

inline int cmd_branch(const CommandContext& ctx) {
    RunConfig rc = ctx.config;
    double lambda0 = 0.0;
    if (rc.lambda_range) {
        lambda0 = rc.lambda_range->first;
        rc.continuation.lambda_max = std::min(rc.continuation.lambda_max, rc.lambda_range->second);
    } else if (rc.lambda) {
        lambda0 = *rc.lambda;
    } else {
        throw ConfigError("/lambda_range", "branch needs lambda_range or lambda");
    }
    if (!(lambda0 < 0.0)) throw ConfigError("/lambda_range/0", "branch start must be negative");
    const auto ops = build_operators(rc.grid);
    const ProblemData p = detail::build_problem(rc, ops, lambda0);

    Json rep = detail::report_header(ctx, "branch");
    Branch b;
    try {
        b = trace_branch(p, lambda0, ops, rc.continuation, rc.solver);
    } catch (const ConvergenceError& e) {
        rep["error"] = e.what();
        detail::write_json(ctx.out_dir / "branch.json", rep);
        detail::say(ctx, std::string("branch: ") + e.what());
        return kExitSolve;
    }
    double gamma1 = std::numeric_limits<double>::quiet_NaN();
    try {
        gamma1 = first_eigen(p.c.cached, ops).gamma;
    } catch (const Error&) {
    }
    b.gamma1 = gamma1;
    write_branch_csv(ctx.out_dir / "branch.csv", b);

    std::optional<double> pair = rc.pair_lambda;
    auto a = analyze_branch(b, gamma1, ops, std::nullopt, rc.solver);
    if (rc.pair_half_fold && !b.folds.empty()) pair = a.lambda_bar / 2.0;
    Json analysis{{"lambda_bar", a.lambda_bar},
                  {"gamma1", gamma1},
                  {"margin", a.margin},
                  {"below_gamma1", a.below_gamma1},
                  {"crosses_zero", a.crosses_zero},
                  {"blowup_side", a.blowup_side},
                  {"termination", a.termination},
                  {"lambda_at_termination", a.lambda_at_termination},
                  {"sup_at_termination", a.sup_at_termination},
                  {"points", b.points.size()},
                  {"folds", b.folds}};
    if (!b.folds.empty()) {
        try {
            const auto f = locate_fold(b, b.folds.front(), ops, rc.continuation.ds_min, rc.solver);
            analysis["fold_refined_lambda"] = f.lambda;
        } catch (const Error& e) {
            analysis["fold_refine_error"] = e.what();
        }
    }
    if (pair) {
        try {
            const auto ap = analyze_branch(b, gamma1, ops, pair, rc.solver);
            const auto& sp = *ap.pair;
            analysis["pair"] = {{"lambda", sp.lambda},
                                {"sup_low", sp.sup_low},
                                {"sup_high", sp.sup_high},
                                {"min_low", sp.u_low.values.minCoeff()},
                                {"min_high", sp.u_high.values.minCoeff()},
                                {"converged_low", sp.report_low.converged},
                                {"converged_high", sp.report_high.converged}};
        } catch (const Error& e) {
            analysis["pair_error"] = e.what();
        }
    }
    rep["analysis"] = analysis;
    detail::write_json(ctx.out_dir / "branch.json", rep);
    detail::say(ctx, "branch: " + std::to_string(b.points.size()) + " points, termination " + b.termination +
                         ", lambda_bar " + detail::fmt(a.lambda_bar) + ", blow-up " + a.blowup_side);
    return kExitOk;
}

inline int cmd_eigen(const CommandContext& ctx) {
    const RunConfig& rc = ctx.config;
    const auto ops = build_operators(rc.grid);
    const auto c = coefficient_from_config(rc.c_source, rc, "/coefficients/c");
    Json rep = detail::report_header(ctx, "eigen");
    const auto eig = first_eigen(c.cached, ops);
    rep["gamma1"] = eig.gamma;
    rep["residual"] = eig.residual;
    rep["iterations"] = eig.iterations;
    write_sampled_file((ctx.out_dir / "eigenfunction.txt").string(), eig.phi);
    rep["eigenfunction_file"] = "eigenfunction.txt";
    detail::write_json(ctx.out_dir / "eigen.json", rep);
    detail::say(ctx, "gamma1 = " + detail::fmt(eig.gamma));
    return kExitOk;
}

inline int cmd_exponents(const CommandContext& ctx) {
    const RunConfig& rc = ctx.config;
    Json rep = detail::report_header(ctx, "exponents");
    try {
        const auto w = find_exponents(rc.exp_p, rc.exp_theta, rc.exp_N);
        rep["witness"] = {{"p", w.p},         {"N", w.N}, {"theta", w.theta}, {"alpha", w.alpha},
                          {"r", w.r},         {"q", w.q}, {"tau", w.tau},     {"verified", exponents_feasible(w)}};
        detail::say(ctx, "alpha = " + detail::fmt(w.alpha) + ", r = " + detail::fmt(w.r) + ", q = " + detail::fmt(w.q));
    } catch (const DomainError& e) {
        throw ConfigError("/exponents", e.what());
    }
    detail::write_json(ctx.out_dir / "exponents.json", rep);
    return kExitOk;
}

} // namespace gqc
