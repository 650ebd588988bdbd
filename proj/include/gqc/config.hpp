#pragma once

// JSON run configuration for the command-line tool.
//
//   {
//     "grid": {"dim": 2, "n": 32, "bounds": [[0, 1], [0, 1]]},
//     "coefficients": {"c": "1", "mu": 1, "h": {"file": "h.txt"}},
//     "profile": "A2",
//     "lambda": -1,                    or  "lambda_range": [-2, 10]
//     "conditions": ["H0", "Hc"],
//     "solver": {...}, "continuation": {...},
//     "manufactured": {"u_star": "sin(pi*x1)*sin(pi*x2)"},
//     "exponents": {"p": 2, "N": 3, "theta": 0.5},
//     "output": {"dir": "out"},
//     "seed": 0
//   }
//
// File references are resolved against the directory holding the config.

#include "gqc/continuation.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace gqc {

using Json = nlohmann::json;

struct RunConfig {
    GridSpec grid;
    Json c_source;
    Json mu_source;
    Json h_source;
    Profile profile = Profile::A1;
    double p_exponent = 0.0;
    std::optional<double> lambda;
    std::optional<std::pair<double, double>> lambda_range;
    std::vector<Condition> conditions;
    SolveOptions solver;
    ContinuationOptions continuation;
    std::optional<double> pair_lambda;
    bool pair_half_fold = false;
    std::optional<Json> u_star;
    double exp_p = 2.0;
    int exp_N = 3;
    double exp_theta = 0.5;
    std::string out_dir = ".";
    std::uint64_t seed = 0;
    int multi_start = 0;
    std::filesystem::path base_dir;
    std::string hash;
    Json raw;
};

/// FNV-1a 64-bit over the compact dump of the parsed document.
inline std::string config_hash(const Json& j) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : j.dump()) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

namespace detail {

inline const Json& require(const Json& j, const std::string& key, const std::string& ptr) {
    if (!j.is_object() || !j.contains(key)) throw ConfigError(ptr + "/" + key, "missing required field");
    return j.at(key);
}

inline double number_at(const Json& j, const std::string& ptr) {
    if (!j.is_number()) throw ConfigError(ptr, "expected a number");
    return j.get<double>();
}

inline int integer_at(const Json& j, const std::string& ptr) {
    if (!j.is_number_integer()) throw ConfigError(ptr, "expected an integer");
    return j.get<int>();
}

template <typename T, typename F>
void optional_field(const Json& obj, const std::string& key, const std::string& ptr, T& target, F get) {
    if (obj.contains(key)) target = get(obj.at(key), ptr + "/" + key);
}

inline void check_coefficient_source(const Json& j, const std::string& ptr) {
    if (j.is_number() || j.is_string()) return;
    if (j.is_object() && j.contains("file") && j.at("file").is_string()) return;
    throw ConfigError(ptr, "coefficient must be a number, an expression string or {\"file\": path}");
}

} // namespace detail

inline RunConfig parse_config(const Json& j, const std::filesystem::path& base_dir = ".") {
    using namespace detail;
    if (!j.is_object()) throw ConfigError("", "config must be a JSON object");
    RunConfig rc;
    rc.raw = j;
    rc.hash = config_hash(j);
    rc.base_dir = base_dir;

    const Json& g = require(j, "grid", "");
    const int dim = integer_at(require(g, "dim", "/grid"), "/grid/dim");
    if (dim < 1 || dim > 3) throw ConfigError("/grid/dim", "must be 1, 2 or 3");
    rc.grid.dim = dim;
    const Json& n = require(g, "n", "/grid");
    for (int a = 0; a < 3; ++a) {
        if (a >= dim) {
            rc.grid.cells[a] = 1;
            continue;
        }
        if (n.is_array()) {
            if (static_cast<int>(n.size()) != dim) throw ConfigError("/grid/n", "needs one entry per axis");
            rc.grid.cells[a] = integer_at(n[a], "/grid/n/" + std::to_string(a));
        } else {
            rc.grid.cells[a] = integer_at(n, "/grid/n");
        }
    }
    if (g.contains("bounds")) {
        const Json& b = g.at("bounds");
        if (!b.is_array() || static_cast<int>(b.size()) != dim) throw ConfigError("/grid/bounds", "needs one [lo, hi] per axis");
        for (int a = 0; a < dim; ++a) {
            const std::string p = "/grid/bounds/" + std::to_string(a);
            if (!b[a].is_array() || b[a].size() != 2) throw ConfigError(p, "expected [lo, hi]");
            rc.grid.bounds[a] = {number_at(b[a][0], p + "/0"), number_at(b[a][1], p + "/1")};
        }
    }
    try {
        rc.grid.validate();
    } catch (const SpecError& e) {
        throw ConfigError("/grid", e.what());
    }

    const Json& co = require(j, "coefficients", "");
    rc.c_source = require(co, "c", "/coefficients");
    rc.mu_source = require(co, "mu", "/coefficients");
    check_coefficient_source(rc.c_source, "/coefficients/c");
    check_coefficient_source(rc.mu_source, "/coefficients/mu");
    if (j.contains("manufactured")) {
        const Json& m = j.at("manufactured");
        rc.u_star = require(m, "u_star", "/manufactured");
        check_coefficient_source(*rc.u_star, "/manufactured/u_star");
        rc.h_source = co.contains("h") ? co.at("h") : Json(0);
    } else {
        rc.h_source = require(co, "h", "/coefficients");
    }
    check_coefficient_source(rc.h_source, "/coefficients/h");

    if (j.contains("profile")) {
        if (!j.at("profile").is_string()) throw ConfigError("/profile", "expected a string");
        auto p = profile_from_string(j.at("profile").get<std::string>());
        if (!p) throw ConfigError("/profile", "unknown profile (A1, A2, A3, A5)");
        rc.profile = *p;
    }
    optional_field(j, "p", "", rc.p_exponent, number_at);
    if (j.contains("lambda")) rc.lambda = number_at(j.at("lambda"), "/lambda");
    if (j.contains("lambda_range")) {
        const Json& r = j.at("lambda_range");
        if (!r.is_array() || r.size() != 2) throw ConfigError("/lambda_range", "expected [start, stop]");
        rc.lambda_range = std::make_pair(number_at(r[0], "/lambda_range/0"), number_at(r[1], "/lambda_range/1"));
    }
    if (j.contains("conditions")) {
        const Json& cs = j.at("conditions");
        if (!cs.is_array()) throw ConfigError("/conditions", "expected an array of condition names");
        for (std::size_t i = 0; i < cs.size(); ++i) {
            const std::string p = "/conditions/" + std::to_string(i);
            if (!cs[i].is_string()) throw ConfigError(p, "expected a string");
            auto c = condition_from_string(cs[i].get<std::string>());
            if (!c) throw ConfigError(p, "unknown condition (H0, Hc, H, FeroneMurat, k1)");
            rc.conditions.push_back(*c);
        }
    } else {
        rc.conditions = {Condition::H0, Condition::Hc};
    }

    if (j.contains("solver")) {
        const Json& s = j.at("solver");
        optional_field(s, "tol_residual", "/solver", rc.solver.tol_residual, number_at);
        optional_field(s, "max_newton", "/solver", rc.solver.max_newton, integer_at);
        optional_field(s, "max_fixed_point", "/solver", rc.solver.max_fixed_point, integer_at);
        optional_field(s, "fp_tol", "/solver", rc.solver.fp_tol, number_at);
        optional_field(s, "multi_start", "/solver", rc.multi_start, integer_at);
        if (!(rc.solver.tol_residual > 0.0) || !(rc.solver.fp_tol > 0.0)) {
            throw ConfigError("/solver", "tolerances must be positive");
        }
        if (rc.solver.max_newton < 1 || rc.solver.max_fixed_point < 1) {
            throw ConfigError("/solver", "iteration caps must be >= 1");
        }
    }
    if (j.contains("continuation")) {
        const Json& s = j.at("continuation");
        auto& c = rc.continuation;
        optional_field(s, "ds0", "/continuation", c.ds0, number_at);
        optional_field(s, "ds_min", "/continuation", c.ds_min, number_at);
        optional_field(s, "ds_max", "/continuation", c.ds_max, number_at);
        optional_field(s, "norm_cap", "/continuation", c.norm_cap, number_at);
        optional_field(s, "max_points", "/continuation", c.max_points, integer_at);
        optional_field(s, "lambda_min", "/continuation", c.lambda_min, number_at);
        optional_field(s, "lambda_max", "/continuation", c.lambda_max, number_at);
        if (s.contains("pair_lambda")) {
            const Json& pl = s.at("pair_lambda");
            if (pl.is_string() && pl.get<std::string>() == "half_fold") {
                rc.pair_half_fold = true;
            } else {
                rc.pair_lambda = number_at(pl, "/continuation/pair_lambda");
            }
        }
        if (!(c.ds_min > 0.0 && c.ds0 >= c.ds_min && c.ds_max >= c.ds0)) {
            throw ConfigError("/continuation", "need 0 < ds_min <= ds0 <= ds_max");
        }
    }
    if (j.contains("exponents")) {
        const Json& e = j.at("exponents");
        optional_field(e, "p", "/exponents", rc.exp_p, number_at);
        optional_field(e, "N", "/exponents", rc.exp_N, integer_at);
        optional_field(e, "theta", "/exponents", rc.exp_theta, number_at);
    }
    if (j.contains("output")) {
        const Json& o = j.at("output");
        if (o.contains("dir")) {
            if (!o.at("dir").is_string()) throw ConfigError("/output/dir", "expected a string");
            rc.out_dir = o.at("dir").get<std::string>();
        }
    }
    if (j.contains("seed")) {
        const Json& sd = j.at("seed");
        if (!sd.is_number_integer() || (!sd.is_number_unsigned() && sd.get<std::int64_t>() < 0)) {
            throw ConfigError("/seed", "expected a non-negative integer");
        }
        rc.seed = j.at("seed").get<std::uint64_t>();
    }
    return rc;
}

inline RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("", "cannot open config file '" + path.string() + "'");
    Json j;
    try {
        j = Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw ConfigError("", std::string("invalid JSON: ") + e.what());
    }
    auto dir = path.parent_path();
    return parse_config(j, dir.empty() ? std::filesystem::path(".") : dir);
}

/// Builds a coefficient from its config source on the configured grid.
inline CoefficientSpec coefficient_from_config(const Json& src, const RunConfig& rc, const std::string& ptr) {
    try {
        if (src.is_number()) return constant_coefficient(src.get<double>(), rc.grid);
        if (src.is_string()) return parse_coefficient(src.get<std::string>(), rc.grid);
        auto file = std::filesystem::path(src.at("file").get<std::string>());
        if (file.is_relative()) file = rc.base_dir / file;
        if (!std::filesystem::exists(file)) throw ConfigError(ptr + "/file", "file not found: " + file.string());
        return coefficient_from_file(file.string(), rc.grid);
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(ptr, e.what());
    }
}

} // namespace gqc
