#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "oracles.hpp"
#include "test_util.hpp"
#include "tspec/cli.hpp"

using namespace tspec;
using json = nlohmann::json;
using testutil::kind_of;

namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::path(::testing::TempDir()) / ("tspec_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
    std::vector<std::vector<std::string>> rows;
    std::istringstream in(slurp(p));
    std::string line;
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::string cell;
        std::istringstream ls(line);
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        if (!line.empty() && line.back() == ',') cells.emplace_back();
        rows.push_back(cells);
    }
    return rows;
}

// Writes the config next to its outputs and runs one subcommand.
struct CliRun {
    fs::path dir;
    int code = -1;
    std::string err;
};

CliRun run(const std::string& name, const std::string& command, json cfg, std::optional<double> k = std::nullopt) {
    CliRun r;
    r.dir = fresh_dir(name);
    std::ofstream(r.dir / "config.json") << cfg.dump();
    std::ostringstream err;
    r.code = run_cli(command, r.dir / "config.json", k, r.dir, err);
    r.err = err.str();
    return r;
}

json manifest(const CliRun& r) { return json::parse(slurp(r.dir / "manifest.json")); }

}  // namespace

TEST(ParseConfig, Defaults) {
    const RunConfig cfg = parse_config(R"({"model": "kpi"})");
    EXPECT_EQ(cfg.model, "kpi");
    EXPECT_EQ(cfg.p, 2);
    EXPECT_DOUBLE_EQ(cfg.L, 40.0);
    EXPECT_EQ(cfg.n, 1024);
    EXPECT_EQ(cfg.steps, 20);
    EXPECT_EQ(cfg.samples, 8);
    EXPECT_DOUBLE_EQ(parse_config(R"({"model": "gp-black"})").L, 30.0);
}

TEST(ParseConfig, FullDocument) {
    const RunConfig cfg = parse_config(R"({
        "model": "ek-gp-dark", "model_params": {"c": 0.5},
        "grid": {"L": 25, "n": 300},
        "tolerances": {"tau_neg": 1e-3, "tau_ker": 1e-5, "tol_branch": 1e-6},
        "k0_search": {"k_scan_max": 3},
        "branch": {"sigma_max": 0.04, "steps": 8},
        "growth": {"k_min": 0.1, "k_max": 0.6, "samples": 5},
        "output_dir": "somewhere"})");
    EXPECT_DOUBLE_EQ(*cfg.c, 0.5);
    EXPECT_DOUBLE_EQ(cfg.L, 25);
    EXPECT_EQ(cfg.n, 300);
    EXPECT_DOUBLE_EQ(*cfg.tau_ker, 1e-5);
    EXPECT_DOUBLE_EQ(*cfg.k_scan_max, 3);
    EXPECT_DOUBLE_EQ(*cfg.sigma_max, 0.04);
    EXPECT_EQ(cfg.steps, 8);
    EXPECT_EQ(cfg.samples, 5);
    EXPECT_EQ(cfg.output_dir, fs::path("somewhere"));
}

TEST(ParseConfig, Rejections) {
    const char* bad[] = {
        "not json",
        "[1, 2]",
        R"({})",
        R"({"model": "nls"})",
        R"({"model": "kpi", "model_params": {"p": 5}})",
        R"({"model": "kpi", "grid": {"n": 2}})",
        R"({"model": "kpi", "grid": {"L": 0}})",
        R"({"model": "kpi", "grid": {"n": "big"}})",
        R"({"model": "kpi", "tolerances": {"tau_neg": -1}})",
        R"({"model": "kpi", "branch": {"steps": 0}})",
        R"({"model": "kpi", "growth": {"samples": -1}})",
        R"({"model": "kpi", "colour": "red"})",
        R"({"model": "ek-gp-dark"})",
        R"({"model": "ek-custom", "model_params": {"c": 0.5}})",
        R"({"model": "ek-custom", "model_params": {"c": 0.5, "profile_csv": "/nonexistent.csv"}})",
    };
    for (const char* text : bad) EXPECT_EQ(kind_of([&] { parse_config(text); }), ErrorKind::ConfigError) << text;
}

TEST(ParseConfig, RelativeProfilePath) {
    const fs::path dir = fresh_dir("relpath");
    std::ofstream(dir / "p.csv") << "x,rho,u\n0,1,0\n1,1,0\n2,1,0\n3,1,0\n";
    const RunConfig cfg =
        parse_config(R"({"model": "ek-custom", "model_params": {"c": 0.3, "profile_csv": "p.csv"}})", dir);
    EXPECT_EQ(*cfg.profile_csv, dir / "p.csv");
}

TEST(CmdHypotheses, KpiDefaultsPass) {
    const CliRun r = run("hyp_kpi", "hypotheses", {{"model", "kpi"}, {"model_params", {{"p", 2}}}});
    EXPECT_EQ(r.code, kExitOk) << r.err;
    const json rep = json::parse(slurp(r.dir / "hypothesis_report.json"));
    EXPECT_TRUE(rep["overall"].get<bool>());
    EXPECT_EQ(rep["h4"]["n_negative_at_0"].get<int>(), 1);
    EXPECT_TRUE(rep["h4"]["indicative"].get<bool>());
}

TEST(CmdHypotheses, SupersonicFailsH2) {
    const CliRun r = run("hyp_ek12", "hypotheses",
                      {{"model", "ek-gp-dark"}, {"model_params", {{"c", 1.2}}}, {"grid", {{"n", 256}}}});
    EXPECT_EQ(r.code, kExitHypothesis) << r.err;
    const json rep = json::parse(slurp(r.dir / "hypothesis_report.json"));
    EXPECT_FALSE(rep["h2"]["pass"].get<bool>());
    EXPECT_FALSE(rep["overall"].get<bool>());
    EXPECT_EQ(manifest(r)["exit_code"].get<int>(), kExitHypothesis);
}

TEST(CmdHypotheses, TinyGridIsConfigError) {
    const CliRun r = run("hyp_n2", "hypotheses", {{"model", "kpi"}, {"grid", {{"n", 2}}}});
    EXPECT_EQ(r.code, kExitConfig);
    EXPECT_NE(r.err.find("ConfigError"), std::string::npos) << r.err;
}

TEST(CmdSpectrum, WritesEightLowestValues) {
    const CliRun r = run("spec_black", "spectrum", {{"model", "gp-black"}, {"grid", {{"n", 256}}}}, 0.0);
    ASSERT_EQ(r.code, kExitOk) << r.err;
    const auto rows = read_csv(r.dir / "spectrum_k0.csv");
    ASSERT_EQ(rows.size(), 9u);
    EXPECT_EQ(rows[0], (std::vector<std::string>{"index", "eigenvalue"}));
    EXPECT_NEAR(std::stod(rows[1][1]), -0.5, 1e-2);
}

TEST(CmdFindK0, BlackDefaults) {
    const CliRun r = run("k0_black", "find-k0", {{"model", "gp-black"}});
    ASSERT_EQ(r.code, kExitOk) << r.err;
    const json k0 = json::parse(slurp(r.dir / "k0.json"));
    EXPECT_GE(k0["k0"].get<double>(), 0.99);
    EXPECT_LE(k0["k0"].get<double>(), 1.01);
    EXPECT_EQ(k0["kernel_file"], "kernel.csv");
    const auto rows = read_csv(r.dir / "kernel.csv");
    EXPECT_EQ(rows[0], (std::vector<std::string>{"x", "U1", "U2"}));
    EXPECT_EQ(rows.size(), 1025u);
}

TEST(CmdFindK0, KpiKernelShape) {
    const CliRun r = run("k0_kpi3", "find-k0", {{"model", "kpi"}, {"model_params", {{"p", 3}}}});
    ASSERT_EQ(r.code, kExitOk) << r.err;
    const auto rows = read_csv(r.dir / "kernel.csv");
    EXPECT_EQ(rows[0], (std::vector<std::string>{"x", "U"}));
    EXPECT_EQ(rows.size(), 1025u);
}

TEST(CmdFindK0, PositiveFamilyExits3) {
    const CliRun r = run("k0_shift", "find-k0",
                      {{"model", "gp-black"}, {"model_params", {{"shift", 1.0}}}, {"grid", {{"n", 128}}}});
    EXPECT_EQ(r.code, kExitNoK0) << r.err;
}

TEST(CmdFindK0, ByteIdenticalReruns) {
    const json cfg = {{"model", "ek-gp-dark"}, {"model_params", {{"c", 0.5}}}, {"grid", {{"n", 256}}}};
    const CliRun a = run("det_a", "find-k0", cfg);
    const CliRun b = run("det_b", "find-k0", cfg);
    ASSERT_EQ(a.code, kExitOk) << a.err;
    EXPECT_EQ(slurp(a.dir / "k0.json"), slurp(b.dir / "k0.json"));
    EXPECT_EQ(slurp(a.dir / "kernel.csv"), slurp(b.dir / "kernel.csv"));
}

TEST(CmdBranch, BlackTwentySteps) {
    const CliRun r = run("br_black", "branch",
                      {{"model", "gp-black"}, {"branch", {{"sigma_max", 0.05}, {"steps", 20}}}});
    ASSERT_EQ(r.code, kExitOk) << r.err;
    const auto rows = read_csv(r.dir / "branch.csv");
    ASSERT_EQ(rows.size(), 22u);
    EXPECT_EQ(rows[0], (std::vector<std::string>{"sigma", "k", "residual", "norm_V"}));
    const double scale = manifest(r)["scale"].get<double>();
    for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_LE(std::stod(rows[i][2]), 1e-8 * scale) << i;
    EXPECT_DOUBLE_EQ(std::stod(rows[21][0]), 0.05);
}

TEST(CmdBranch, SingleBaseRow) {
    const CliRun r = run("br_base", "branch",
                      {{"model", "gp-black"}, {"grid", {{"n", 256}}}, {"branch", {{"sigma_max", 0.0}, {"steps", 1}}}});
    ASSERT_EQ(r.code, kExitOk) << r.err;
    const auto rows = read_csv(r.dir / "branch.csv");
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(std::stod(rows[1][0]), 0.0);
    EXPECT_NEAR(std::stod(rows[1][1]), manifest(r)["k0"].get<double>(), 1e-7);
    EXPECT_LE(std::stod(rows[1][3]), 1e-6);
}

TEST(CmdBranch, AbsurdSigmaExits4) {
    const CliRun r = run("br_absurd", "branch",
                      {{"model", "gp-black"}, {"grid", {{"n", 256}}}, {"branch", {{"sigma_max", 1e6}}}});
    EXPECT_EQ(r.code, kExitContinuation) << r.err;
    const json m = manifest(r);
    EXPECT_EQ(m["status"], "failed");
    EXPECT_GT(m["failing_sigma"].get<double>(), 0.0);
}

TEST(CmdGrowth, BlackBand) {
    const CliRun r = run("gr_black", "growth",
                      {{"model", "gp-black"},
                       {"grid", {{"n", 512}}},
                       {"growth", {{"k_min", 0.2}, {"k_max", 0.95}, {"samples", 8}}}});
    ASSERT_EQ(r.code, kExitOk) << r.err;
    const auto rows = read_csv(r.dir / "growth.csv");
    ASSERT_EQ(rows.size(), 9u);
    EXPECT_EQ(rows[0], (std::vector<std::string>{"k", "sigma", "residual"}));
    for (std::size_t i = 1; i < rows.size(); ++i) {
        ASSERT_EQ(rows[i].size(), 3u);
        ASSERT_FALSE(rows[i][1].empty()) << rows[i][0];
        EXPECT_GT(std::stod(rows[i][1]), 0.0);
    }
}

TEST(CmdGrowth, AboveK0HasNoGrowth) {
    const CliRun r = run("gr_above", "growth",
                      {{"model", "gp-black"},
                       {"grid", {{"n", 256}}},
                       {"growth", {{"k_min", 1.05}, {"k_max", 1.5}, {"samples", 3}}}});
    const auto rows = read_csv(r.dir / "growth.csv");
    ASSERT_EQ(rows.size(), 4u);
    for (std::size_t i = 1; i < rows.size(); ++i) {
        if (!rows[i][1].empty()) EXPECT_LE(std::abs(std::stod(rows[i][1])), 1e-6) << rows[i][0];
    }
}

TEST(CmdGrowth, ZeroSamples) {
    const CliRun r = run("gr_zero", "growth", {{"model", "gp-black"}, {"growth", {{"samples", 0}}}});
    EXPECT_EQ(r.code, kExitOk) << r.err;
    EXPECT_EQ(slurp(r.dir / "growth.csv"), "k,sigma,residual\n");
}

TEST(Manifest, EchoesConfigAndVersions) {
    const json cfg = {{"model", "gp-black"}, {"grid", {{"n", 64}}}, {"growth", {{"samples", 0}}}};
    const CliRun r = run("manifest", "growth", cfg);
    const json m = manifest(r);
    EXPECT_EQ(json::parse(m["config"].dump()), cfg);
    EXPECT_EQ(m["versions"]["tspec"], std::string(kVersion));
    EXPECT_EQ(m["status"], "ok");
    EXPECT_TRUE(m.contains("wall_clock_seconds"));
}

TEST(RunCli, MissingConfigFile) {
    std::ostringstream err;
    EXPECT_EQ(run_cli("find-k0", "/nonexistent/config.json", std::nullopt, std::nullopt, err), kExitConfig);
    EXPECT_FALSE(err.str().empty());
}

TEST(Binary, ExitCodes) {
    const fs::path dir = fresh_dir("binary");
    std::ofstream(dir / "bad.json") << R"({"model": "kpi", "grid": {"n": 2}})";
    std::ofstream(dir / "shift.json") << R"({"model": "gp-black", "model_params": {"shift": 1}, "grid": {"n": 64}})";
    const std::string exe = TSPEC_BINARY;
    auto status = [&](const std::string& args) {
        const int raw = std::system((exe + " " + args + " > /dev/null 2>&1").c_str());
        return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    };
    EXPECT_EQ(status("--version"), 0);
    EXPECT_EQ(status("bogus --config " + (dir / "bad.json").string()), 1);
    EXPECT_EQ(status("hypotheses --config " + (dir / "bad.json").string()), 1);
    EXPECT_EQ(status("find-k0 --config " + (dir / "shift.json").string() + " --out " + dir.string()), 3);
    EXPECT_TRUE(fs::exists(dir / "manifest.json"));
}
