#include "gqc/commands.hpp"

#include "CLI11.hpp"

#include <filesystem>
#include <iostream>
#include <optional>

int main(int argc, char** argv) {
    CLI::App app{"gqc: quasilinear elliptic problems with quadratic gradient growth"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
    bool quiet = false;
    app.add_option("--config", config_path, "JSON run configuration")->required();
    app.add_option("--out", out_dir, "output directory (overrides output.dir)");
    app.add_option("--seed", seed, "random seed (overrides config seed)");
    app.add_flag("--quiet", quiet, "suppress progress output");

    auto* check = app.add_subcommand("check", "evaluate the smallness conditions and γ₁");
    auto* solve = app.add_subcommand("solve", "solve at a fixed λ");
    auto* branch = app.add_subcommand("branch", "trace the solution branch from a negative λ");
    auto* eigen = app.add_subcommand("eigen", "first weighted eigenvalue of -Δφ = γcφ");
    auto* exponents = app.add_subcommand("exponents", "exponent witness (α, r, q, τ) for given p, N, θ");
    for (auto* sub : {check, solve, branch, eigen, exponents}) sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : gqc::kExitUsage;
    }

    try {
        gqc::CommandContext ctx;
        ctx.config = gqc::load_config(config_path);
        if (seed) ctx.config.seed = *seed;
        ctx.quiet = quiet;
        std::filesystem::path out = out_dir.empty() ? std::filesystem::path(ctx.config.out_dir) : std::filesystem::path(out_dir);
        if (out_dir.empty() && out.is_relative()) out = ctx.config.base_dir / out;
        std::filesystem::create_directories(out);
        ctx.out_dir = out;

        if (*check) return gqc::cmd_check(ctx);
        if (*solve) return gqc::cmd_solve(ctx);
        if (*branch) return gqc::cmd_branch(ctx);
        if (*eigen) return gqc::cmd_eigen(ctx);
        if (*exponents) return gqc::cmd_exponents(ctx);
    } catch (const gqc::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return gqc::kExitUsage;
    } catch (const gqc::ParseError& e) {
        std::cerr << "expression error: " << e.what() << "\n";
        return gqc::kExitUsage;
    } catch (const gqc::SpecError& e) {
        std::cerr << "grid error: " << e.what() << "\n";
        return gqc::kExitUsage;
    } catch (const gqc::DomainError& e) {
        std::cerr << "domain error: " << e.what() << "\n";
        return gqc::kExitUsage;
    } catch (const gqc::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return gqc::kExitSolve;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return gqc::kExitSolve;
    }
    return gqc::kExitUsage;
}
