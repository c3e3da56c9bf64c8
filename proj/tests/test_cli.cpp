#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "empc_checks.hpp"
#include "rescontrol/config.hpp"
#include "support.hpp"

using namespace rescontrol;
namespace fs = std::filesystem;

namespace {

struct CliResult {
    int code = -1;
    std::string output;
};

CliResult run_cli(const std::string& args) {
    const fs::path log = fs::temp_directory_path() / "rescontrol_cli_output.txt";
    const std::string cmd = std::string(RESCONTROL_CLI) + " " + args + " > " + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    CliResult r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    std::ifstream in(log);
    std::stringstream ss;
    ss << in.rdbuf();
    r.output = ss.str();
    return r;
}

class Cli : public ::testing::Test {
protected:
    fs::path dir;
    fs::path config;

    void SetUp() override {
        dir = fs::temp_directory_path() / ("rescontrol_cli_" + std::string(::testing::UnitTest::GetInstance()
                                                                               ->current_test_info()
                                                                               ->name()));
        fs::remove_all(dir);
        fs::create_directories(dir);
        Json doc = testing_support::default_config().document;
        doc["sweep"]["train_years"] = 1;
        doc["sweep"]["validation_years"] = 1;
        doc["sweep"]["ensemble_size"] = 2;
        doc["dp"]["storage_nodes"] = 12;
        doc["empc"]["solver"]["max_iterations"] = 60;
        const PIDParams p = empc_checks::reference_pid();
        doc["inner_loop"]["pid_source"] = "config";
        doc["inner_loop"]["pid"] = {{"theta", {p.kp, p.ki, p.kd}}};
        config = write("config.json", doc);
    }
    void TearDown() override { fs::remove_all(dir); }

    fs::path write(const std::string& name, const Json& j) {
        std::ofstream(dir / name) << j.dump();
        return dir / name;
    }
    std::string common() const { return "--config " + config.string() + " --output-dir " + (dir / "out").string(); }
    Json read(const std::string& name) const {
        std::ifstream in(dir / "out" / name);
        return Json::parse(in);
    }
};

} // namespace

TEST_F(Cli, HelpAndUsageErrors) {
    EXPECT_EQ(run_cli("--help").code, 0);
    EXPECT_EQ(run_cli("").code, 1);
    EXPECT_EQ(run_cli("dp").code, 1); // --config missing
    EXPECT_EQ(run_cli("dp " + common() + " --alpha 2").code, 1);
    EXPECT_EQ(run_cli("frobnicate").code, 1);
}

TEST_F(Cli, ConfigErrorsExitWithOne) {
    Json doc = testing_support::default_config().document;
    doc["routing"]["typo"] = 1;
    const fs::path bad = write("bad.json", doc);
    const CliResult r = run_cli("dp --config " + bad.string() + " --output-dir " + dir.string());
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.output.find("/routing/typo"), std::string::npos) << r.output;
    EXPECT_EQ(run_cli("dp --config " + (dir / "missing.json").string()).code, 1);
}

TEST_F(Cli, GenerateHydrology) {
    const CliResult r = run_cli("gen-hydrology " + common() + " --years 2");
    ASSERT_EQ(r.code, 0) << r.output;
    std::ifstream in(dir / "out" / "train_trace.csv");
    std::string header;
    std::getline(in, header);
    EXPECT_EQ(header, "day,q_d,q_t,q_l");
    std::ifstream again(dir / "out" / "train_trace.csv");
    EXPECT_EQ(load_trace(again).size(), 2u * kDaysPerYear);
    EXPECT_EQ(run_cli("gen-hydrology " + common() + " --validation").code, 0);
    EXPECT_TRUE(fs::exists(dir / "out" / "validation_trace.csv"));
}

TEST_F(Cli, DpThenSimulatePolicy) {
    CliResult r = run_cli("dp " + common() + " --alpha 0.5");
    ASSERT_EQ(r.code, 0) << r.output;
    const Json report = read("report.json");
    EXPECT_EQ(report.at("alpha"), 0.5);
    EXPECT_EQ(report.at("horizon"), kDaysPerYear);
    EXPECT_TRUE(fs::exists(dir / "out" / "bellman.json"));

    fs::copy_file(dir / "out" / "policy.json", dir / "policy.json");
    r = run_cli("simulate " + common() + " --controller policy --policy " + (dir / "policy.json").string());
    ASSERT_EQ(r.code, 0) << r.output;
    EXPECT_EQ(read("report.json").at("J_H"), report.at("J_H"));
}

TEST_F(Cli, SdpNonConvergenceExitsWithTwo) {
    Json doc = testing_support::default_config().document;
    doc["sweep"]["ensemble_size"] = 2;
    doc["dp"]["storage_nodes"] = 12;
    doc["dp"]["max_sweeps"] = 1;
    const fs::path cfg = write("sdp.json", doc);
    const CliResult r = run_cli("sdp --config " + cfg.string() + " --output-dir " + dir.string());
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.output.find("residual"), std::string::npos) << r.output;
}

TEST_F(Cli, SimulatePidWithReference) {
    std::ofstream ref(dir / "ref.csv");
    ref << "day,s_ref\n";
    for (int d = 0; d < kDaysPerYear; ++d) ref << d << ',' << 6.5e9 << '\n';
    ref.close();
    const CliResult r = run_cli("simulate " + common() + " --controller pid --reference " + (dir / "ref.csv").string());
    ASSERT_EQ(r.code, 0) << r.output;
    EXPECT_TRUE(fs::exists(dir / "out" / "state_space.json"));
    EXPECT_TRUE(fs::exists(dir / "out" / "trajectory.csv"));

    std::ofstream bad(dir / "bad.csv");
    bad << "day,s_ref\n0,abc\n";
    bad.close();
    EXPECT_EQ(run_cli("simulate " + common() + " --controller pid --reference " + (dir / "bad.csv").string()).code, 1);
}

TEST_F(Cli, EmpcRunWritesLog) {
    const CliResult r = run_cli("empc-run " + common() + " --horizon 3 --period validation");
    ASSERT_EQ(r.code, 0) << r.output;
    const Json log = read("empc_log.json");
    EXPECT_EQ(log.size(), static_cast<std::size_t>(kDaysPerYear));
    EXPECT_EQ(read("report.json").at("horizon_days"), 3);
}

TEST_F(Cli, CompareAndVerifyManifest) {
    CliResult r = run_cli("compare " + common() + " --strategies ddp,sdp");
    ASSERT_EQ(r.code, 0) << r.output;
    std::ifstream csv(dir / "out" / "comparison.csv");
    std::string header;
    std::getline(csv, header);
    EXPECT_EQ(header, "strategy,alpha,horizon,period,J_H,J_F,status");
    fs::copy_file(dir / "out" / "manifest.json", dir / "manifest.json");
    r = run_cli("compare --config " + config.string() + " --output-dir " + (dir / "out").string() +
                " --verify-manifest " + (dir / "manifest.json").string());
    EXPECT_EQ(r.code, 0) << r.output;
    EXPECT_NE(r.output.find("bit-for-bit"), std::string::npos);
}

TEST_F(Cli, ParetoSweep) {
    const CliResult r = run_cli("pareto " + common() + " --strategies ddp --alphas 0,0.5,1");
    ASSERT_EQ(r.code, 0) << r.output;
    const Json m = read("manifest.json");
    EXPECT_EQ(m.at("runs").size(), 3u);
    EXPECT_EQ(m.at("command"), "pareto");
    EXPECT_EQ(run_cli("pareto " + common() + " --strategies lqr").code, 1);
}
