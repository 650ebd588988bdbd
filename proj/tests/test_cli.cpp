#include "gqc/commands.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

using namespace gqc;
namespace fs = std::filesystem;

namespace {

struct CliRun {
    int code = -1;
    std::string output;
};

CliRun run_cli(const std::string& args) {
    const std::string cmd = std::string(GQC_CLI_PATH) + " " + args + " 2>&1";
    CliRun r;
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) return r;
    char buf[512];
    while (std::fgets(buf, sizeof buf, pipe)) r.output += buf;
    const int status = pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

class CliTest : public ::testing::Test {
protected:
    fs::path dir;

    void SetUp() override {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        dir = fs::temp_directory_path() / (std::string("gqc_cli_") + info->name());
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    void TearDown() override { fs::remove_all(dir); }

    fs::path write_config(const Json& j, const std::string& name = "config.json") {
        const auto p = dir / name;
        std::ofstream(p) << j.dump(2);
        return p;
    }

    CliRun run(const std::string& sub, const fs::path& cfg, const std::string& extra = "") {
        return run_cli(sub + " --config " + cfg.string() + " --out " + (dir / "out").string() + " --quiet " + extra);
    }

    Json report(const std::string& name) { return Json::parse(slurp(dir / "out" / name)); }
};

Json base_config(int dim, int n, Json c, Json mu, Json h) {
    return {{"grid", {{"dim", dim}, {"n", n}}}, {"coefficients", {{"c", c}, {"mu", mu}, {"h", h}}}};
}

fs::path demo(const std::string& name) { return fs::path(GQC_DEMO_DIR) / name; }

} // namespace

TEST_F(CliTest, CheckSignCaseHolds) {
    auto r = run("check", write_config(base_config(2, 16, "1", "1 + x1", "-1 - x2")));
    EXPECT_EQ(r.code, kExitOk) << r.output;
    auto j = report("check.json");
    EXPECT_TRUE(j["conditions"]["H0"]["holds"].get<bool>());
    EXPECT_TRUE(j["all_requested_hold"].get<bool>());
    EXPECT_TRUE(j.contains("config_hash"));
    EXPECT_TRUE(j.contains("gamma1"));
}

TEST_F(CliTest, CheckH0FailsAboveThreshold) {
    auto cfg = base_config(2, 16, "1", 1, 25);
    cfg["conditions"] = {"H0"};
    auto r = run("check", write_config(cfg));
    EXPECT_EQ(r.code, kExitCondition) << r.output;
    auto j = report("check.json");
    EXPECT_FALSE(j["conditions"]["H0"]["holds"].get<bool>());
    EXPECT_LT(j["conditions"]["H0"]["margin"].get<double>(), 0.0);
}

TEST_F(CliTest, CheckHcVacuousForPositiveC) {
    auto cfg = base_config(1, 32, 1, 1, 1);
    cfg["conditions"] = {"Hc"};
    auto r = run("check", write_config(cfg));
    EXPECT_EQ(r.code, kExitOk) << r.output;
    auto j = report("check.json");
    EXPECT_TRUE(j["conditions"]["Hc"]["vacuous"].get<bool>());
    EXPECT_TRUE(j["conditions"]["Hc"]["holds"].get<bool>());
}

TEST_F(CliTest, SolveZeroData) {
    auto cfg = base_config(1, 16, 1, 1, 0);
    cfg["lambda"] = -1;
    auto r = run("solve", write_config(cfg));
    EXPECT_EQ(r.code, kExitOk) << r.output;
    auto s = read_sampled_file((dir / "out" / "solution.txt").string(), GridSpec::box(1, 16));
    for (double v : s.values) EXPECT_EQ(v, 0.0);
    auto j = report("solve.json");
    EXPECT_TRUE(j["converged"].get<bool>());
    EXPECT_EQ(j["strategy"], "newton");
}

TEST_F(CliTest, SolveManufacturedDemo) {
    auto r = run_cli("solve --config " + demo("demo_manufactured.json").string() + " --out " + (dir / "out").string() +
                     " --quiet");
    EXPECT_EQ(r.code, kExitOk) << r.output;
    auto j = report("solve.json");
    EXPECT_LE(j["manufactured_error_sup"].get<double>(), 1e-10);
    EXPECT_EQ(j["seed"].get<std::uint64_t>(), 0u);
}

TEST_F(CliTest, SolveAtGamma1Fails) {
    auto s = GridSpec::box(1, 32);
    const double g1 = first_eigen(GridFunction::constant(s, 1.0), build_operators(s)).gamma;
    auto cfg = base_config(1, 32, 1, 1, "0.1*sin(pi*x1)");
    cfg["profile"] = "A2";
    cfg["lambda"] = g1;
    auto r = run("solve", write_config(cfg));
    EXPECT_EQ(r.code, kExitSolve) << r.output;
    auto j = report("solve.json");
    EXPECT_FALSE(j["converged"].get<bool>());
    ASSERT_EQ(j["strategies"].size(), 3u);
    EXPECT_FALSE(j["strategies"][0]["report"]["converged"].get<bool>());
    EXPECT_FALSE(j["strategies"][1]["report"]["converged"].get<bool>());
}

TEST_F(CliTest, BranchZeroData) {
    auto cfg = base_config(1, 16, 1, 1, 0);
    cfg["lambda_range"] = {-2, 5};
    auto r = run("branch", write_config(cfg));
    EXPECT_EQ(r.code, kExitOk) << r.output;
    std::istringstream csv(slurp(dir / "out" / "branch.csv"));
    std::string line;
    std::getline(csv, line);
    EXPECT_EQ(line, kBranchCsvHeader);
    int rows = 0;
    while (std::getline(csv, line)) {
        std::vector<std::string> f;
        std::stringstream ls(line);
        for (std::string x; std::getline(ls, x, ',');) f.push_back(x);
        ASSERT_EQ(f.size(), 6u);
        EXPECT_EQ(std::stod(f[2]), 0.0);
        EXPECT_EQ(std::stod(f[3]), 0.0);
        ++rows;
    }
    EXPECT_GT(rows, 1);
    EXPECT_EQ(report("branch.json")["analysis"]["blowup_side"], "none");
}

TEST_F(CliTest, BranchFoldDemoShape) {
    auto r = run_cli("branch --config " + demo("demo_fig2.json").string() + " --out " + (dir / "out").string() +
                     " --quiet");
    EXPECT_EQ(r.code, kExitOk) << r.output;
    auto a = report("branch.json")["analysis"];
    EXPECT_TRUE(a["crosses_zero"].get<bool>());
    EXPECT_GT(a["lambda_bar"].get<double>(), 0.0);
    EXPECT_GT(a["margin"].get<double>(), 0.0);
    EXPECT_EQ(a["blowup_side"], "right");
    EXPECT_EQ(a["termination"], "norm_cap");
    ASSERT_TRUE(a.contains("pair"));
    EXPECT_GE(a["pair"]["sup_high"].get<double>() - a["pair"]["sup_low"].get<double>(), 1e-2);

    // Upper sub-branch: norms increase as λ decreases toward 0⁺.
    std::istringstream csv(slurp(dir / "out" / "branch.csv"));
    std::string line;
    std::getline(csv, line);
    std::vector<std::pair<double, double>> pts;
    while (std::getline(csv, line)) {
        std::stringstream ls(line);
        std::string idx, l, sup;
        std::getline(ls, idx, ',');
        std::getline(ls, l, ',');
        std::getline(ls, sup, ',');
        pts.emplace_back(std::stod(l), std::stod(sup));
    }
    std::size_t top = 0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        if (pts[i].first > pts[top].first) top = i;
    }
    for (std::size_t i = top + 1; i < pts.size(); ++i) {
        EXPECT_LT(pts[i].first, pts[i - 1].first);
        EXPECT_GT(pts[i].second, pts[i - 1].second);
    }
}

TEST_F(CliTest, BranchLeftBlowupDemoShape) {
    auto r = run_cli("branch --config " + demo("demo_fig1.json").string() + " --out " + (dir / "out").string() +
                     " --quiet");
    EXPECT_EQ(r.code, kExitOk) << r.output;
    auto a = report("branch.json")["analysis"];
    EXPECT_EQ(a["termination"], "norm_cap");
    EXPECT_LT(a["lambda_at_termination"].get<double>(), 0.0);
    EXPECT_EQ(a["blowup_side"], "left");
}

TEST_F(CliTest, BranchCsvDeterministic) {
    auto cfg = base_config(1, 32, 1, 1, "0.1*sin(pi*x1)");
    cfg["profile"] = "A2";
    cfg["lambda_range"] = {-2, 20};
    auto path = write_config(cfg);
    ASSERT_EQ(run("branch", path, "--seed 7").code, kExitOk);
    const auto first = slurp(dir / "out" / "branch.csv");
    EXPECT_EQ(report("branch.json")["seed"].get<std::uint64_t>(), 7u);
    ASSERT_EQ(run("branch", path, "--seed 7").code, kExitOk);
    EXPECT_EQ(slurp(dir / "out" / "branch.csv"), first);
}

TEST_F(CliTest, EigenAndExponents) {
    auto cfg = base_config(1, 64, 1, 1, 0);
    cfg["exponents"] = {{"p", 2}, {"N", 3}, {"theta", 0.5}};
    auto path = write_config(cfg);
    ASSERT_EQ(run("eigen", path).code, kExitOk);
    EXPECT_NEAR(report("eigen.json")["gamma1"].get<double>(), 9.8696, 0.01 * 9.8696);
    ASSERT_EQ(run("exponents", path).code, kExitOk);
    auto w = report("exponents.json")["witness"];
    EXPECT_TRUE(w["verified"].get<bool>());
    cfg["exponents"]["p"] = 1.2;
    EXPECT_EQ(run("exponents", write_config(cfg)).code, kExitUsage);
}

TEST_F(CliTest, ConfigErrorsCarryJsonPointer) {
    auto missing = base_config(1, 16, 1, 1, 0);
    missing["grid"].erase("n");
    auto r = run("check", write_config(missing));
    EXPECT_EQ(r.code, kExitUsage);
    EXPECT_NE(r.output.find("/grid/n"), std::string::npos) << r.output;

    auto bad_profile = base_config(1, 16, 1, 1, 0);
    bad_profile["profile"] = "A4";
    r = run("check", write_config(bad_profile));
    EXPECT_EQ(r.code, kExitUsage);
    EXPECT_NE(r.output.find("/profile"), std::string::npos) << r.output;

    auto bad_expr = base_config(1, 16, "1 +* x1", 1, 0);
    r = run("check", write_config(bad_expr));
    EXPECT_EQ(r.code, kExitUsage);
    EXPECT_NE(r.output.find("/coefficients/c"), std::string::npos) << r.output;

    auto bad_file = base_config(1, 16, 1, Json{{"file", "nope.txt"}}, 0);
    r = run("check", write_config(bad_file));
    EXPECT_EQ(r.code, kExitUsage);
    EXPECT_NE(r.output.find("/coefficients/mu/file"), std::string::npos) << r.output;

    auto no_lambda = base_config(1, 16, 1, 1, 0);
    r = run("solve", write_config(no_lambda));
    EXPECT_EQ(r.code, kExitUsage);
    EXPECT_NE(r.output.find("/lambda"), std::string::npos) << r.output;

    EXPECT_EQ(run_cli("check").code, kExitUsage);
    EXPECT_EQ(run_cli("--config x.json").code, kExitUsage);
}

TEST_F(CliTest, FileCoefficientResolvedRelativeToConfig) {
    auto s = GridSpec::box(1, 16);
    write_sampled_file((dir / "h.txt").string(), parse_coefficient("0.2*sin(pi*x1)", s).cached);
    auto cfg = base_config(1, 16, 1, 1, Json{{"file", "h.txt"}});
    cfg["lambda"] = -1;
    auto r = run("solve", write_config(cfg));
    EXPECT_EQ(r.code, kExitOk) << r.output;
    auto sol = read_sampled_file((dir / "out" / "solution.txt").string(), GridSpec::box(1, 16));
    EXPECT_GT(sol.values.maxCoeff(), 0.0);
}

TEST(Config, ParseDefaultsAndHash) {
    Json j = base_config(2, 8, 1, 1, 0);
    auto rc = parse_config(j);
    EXPECT_EQ(rc.conditions, (std::vector<Condition>{Condition::H0, Condition::Hc}));
    EXPECT_EQ(rc.grid.cells[0], 8);
    EXPECT_EQ(rc.hash, config_hash(j));
    j["seed"] = 1;
    EXPECT_NE(parse_config(j).hash, rc.hash);
    j["seed"] = 2;
    EXPECT_EQ(parse_config(j).seed, 2u);
    j["seed"] = -1;
    try {
        parse_config(j);
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("/seed"), std::string::npos);
    }
}
