#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "empc_checks.hpp"
#include "rescontrol/harness.hpp"
#include "rescontrol/io.hpp"
#include "support.hpp"

using namespace rescontrol;
namespace fs = std::filesystem;

namespace {

Json default_document() { return testing_support::default_config().document; }

std::string error_path(const Json& doc) {
    try {
        config_from_json(doc);
    } catch (const ConfigError& e) {
        return e.path();
    }
    return "<no error>";
}

/// One training year, one validation year, a coarse grid and fixed gains.
AppConfig small_config() {
    Json doc = default_document();
    doc["sweep"]["train_years"] = 1;
    doc["sweep"]["validation_years"] = 1;
    doc["sweep"]["ensemble_size"] = 3;
    doc["dp"]["storage_nodes"] = 15;
    doc["empc"]["solver"]["max_iterations"] = 150;
    const PIDParams p = empc_checks::reference_pid();
    doc["inner_loop"]["pid_source"] = "config";
    doc["inner_loop"]["pid"] = {{"theta", {p.kp, p.ki, p.kd}}};
    return config_from_json(doc);
}

RunRecord record(Strategy s, double alpha, double jh, double jf, bool ok = true) {
    RunRecord r;
    r.spec = {s, alpha, s == Strategy::Empc ? 5 : 0, Period::Train};
    r.ok = ok;
    r.report = {jh, jf, 10};
    if (!ok) r.error = "boom";
    return r;
}

} // namespace

TEST(Config, DefaultLoads) {
    const AppConfig& cfg = testing_support::default_config();
    EXPECT_EQ(cfg.empc.horizon, 15);
    EXPECT_DOUBLE_EQ(cfg.inner_loop.scaling.storage, cfg.reservoir.s_max);
    EXPECT_EQ(cfg.inner_loop.scaling.seconds_per_step, cfg.reservoir.seconds_per_step);
    EXPECT_EQ(cfg.dp.grid.storage.front(), cfg.reservoir.s_min);
    EXPECT_EQ(cfg.cost(0.3).alpha, 0.3);
    EXPECT_EQ(cfg.empc.cost.h_bar, cfg.objectives.h_bar);
}

TEST(Config, ErrorsNameTheOffendingKey) {
    Json doc = default_document();
    doc["bogus"] = 1;
    EXPECT_EQ(error_path(doc), "/bogus");

    doc = default_document();
    doc["reservoir"].erase("s_min");
    EXPECT_EQ(error_path(doc), "/reservoir/s_min");

    doc = default_document();
    doc["routing"]["lag"] = 1.5;
    EXPECT_EQ(error_path(doc), "/routing/lag");

    doc = default_document();
    doc["inner_loop"]["pid_source"] = "config";
    EXPECT_EQ(error_path(doc), "/inner_loop/pid");

    doc = default_document();
    doc["sweep"]["validation_mu_delta"]["lo"] = Json::array({0.1});
    EXPECT_EQ(error_path(doc), "/sweep/validation_mu_delta/lo");

    doc = default_document();
    doc["inner_loop"]["scaling"]["flow"] = 0.0;
    EXPECT_EQ(error_path(doc), "/inner_loop/scaling");

    doc = default_document();
    doc["reservoir"]["initial_storage"] = 1.0;
    EXPECT_EQ(error_path(doc), "/reservoir/initial_storage");
}

TEST(Config, FileErrors) {
    EXPECT_THROW(load_config("/nonexistent/config.json"), ConfigError);
    const fs::path p = fs::temp_directory_path() / "rescontrol_bad.json";
    std::ofstream(p) << "{ not json";
    EXPECT_THROW(load_config(p.string()), ConfigError);
    fs::remove(p);
}

TEST(Config, ValidationTraceDiffersFromTraining) {
    const AppConfig& cfg = testing_support::default_config();
    const HydrologyTrace a = training_trace(cfg), b = validation_trace(cfg);
    EXPECT_EQ(a.size(), static_cast<std::size_t>(cfg.sweep.train_years) * kDaysPerYear);
    EXPECT_EQ(b.size(), static_cast<std::size_t>(cfg.sweep.validation_years) * kDaysPerYear);
    EXPECT_NE(a.q_d[0], b.q_d[0]);
}

TEST(Io, HashesAndFormatting) {
    EXPECT_EQ(hex64(fnv1a("")), "cbf29ce484222325");
    EXPECT_EQ(hex64(fnv1a("a")), "af63dc4c8601ec8c");
    EXPECT_EQ(fixed4(2.0 / 3.0), "0.6667");
}

TEST(Io, AtomicWriteReplacesTheFile) {
    const fs::path dir = fs::temp_directory_path() / "rescontrol_io_test";
    fs::remove_all(dir);
    write_text_atomically(dir / "sub" / "a.txt", "first");
    write_text_atomically(dir / "sub" / "a.txt", "second");
    std::ifstream in(dir / "sub" / "a.txt");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    EXPECT_EQ(text, "second");
    EXPECT_FALSE(fs::exists(dir / "sub" / "a.txt.tmp"));
    fs::remove_all(dir);
}

TEST(Harness, SweepCells) {
    SweepSpec s{{Strategy::Ddp, Strategy::Empc}, {0.0, 0.5}, {10, 20}, Period::Validation};
    const auto cells = s.cells();
    ASSERT_EQ(cells.size(), 6u);
    EXPECT_EQ(cells[2].label(), "empc/a=0/N=10/validation");
    EXPECT_EQ(cells[5].label(), "empc/a=0.5/N=20/validation");
    s.horizons.clear();
    EXPECT_THROW(s.validate(), ConfigError);
    s = SweepSpec{{Strategy::Ddp}, {1.5}, {}, Period::Train};
    EXPECT_THROW(s.validate(), ConfigError);
    EXPECT_THROW(strategy_from_string("lqr"), ConfigError);
    EXPECT_THROW(period_from_string("test"), ConfigError);
}

TEST(Harness, ParetoFlagsPerGroup) {
    const std::vector<RunRecord> runs{record(Strategy::Ddp, 0.0, 10, 5), record(Strategy::Ddp, 0.5, 12, 6),
                                      record(Strategy::Ddp, 1.0, 11, 7), record(Strategy::Sdp, 0.0, 1, 100),
                                      record(Strategy::Sdp, 0.5, 0, 0, false)};
    EXPECT_EQ(pareto_flags(runs), (std::vector<bool>{true, true, false, true, false}));
    std::ostringstream os;
    write_runs_csv(os, runs, true);
    std::istringstream lines(os.str());
    std::string header, first, last, line;
    std::getline(lines, header);
    std::getline(lines, first);
    while (std::getline(lines, line)) last = line;
    EXPECT_EQ(header, "strategy,alpha,horizon,period,J_H,J_F,pareto,status");
    EXPECT_EQ(first, "ddp,0,0,train,10.0000,5.0000,1,ok");
    EXPECT_EQ(last, "sdp,0.5,0,train,,,0,error");
}

TEST(Harness, MissingArtifactsAreNamed) {
    const TrainedArtifacts art;
    try {
        art.sdp_policy(0.25);
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("missing trained artifact"), std::string::npos);
    }
    EXPECT_THROW(art.inner_pid(), Error);
}

TEST(Harness, CompareAndManifestRerun) {
    const Experiment exp(small_config());
    const ExperimentOutput out = compare_train_validation(exp, {Strategy::Sdp, Strategy::Empc}, 0.05, 4);
    ASSERT_EQ(out.runs.size(), 4u);
    for (const RunRecord& r : out.runs) {
        EXPECT_TRUE(r.ok) << r.spec.label() << ": " << r.error;
        EXPECT_EQ(r.report.horizon, static_cast<std::size_t>(kDaysPerYear));
    }
    EXPECT_EQ(out.runs[3].spec.label(), "empc/a=0.05/N=4/validation");
    EXPECT_EQ(out.manifest.at("command"), "compare");
    EXPECT_EQ(out.manifest.at("training").at("pid").at("pid_source"), "config");

    // The manifest survives a text round trip and reruns identically.
    const Json reread = Json::parse(out.manifest.dump(2));
    const ManifestCheck check = verify_manifest(reread);
    EXPECT_TRUE(check.identical);
    for (const auto& m : check.mismatches) ADD_FAILURE() << m;

    Json tampered = reread;
    tampered["runs"][0]["J_F"] = tampered["runs"][0]["J_F"].get<double>() + 1.0;
    EXPECT_FALSE(verify_manifest(tampered).identical);
}

TEST(Harness, SelfValidationWithExplicitTraces) {
    const AppConfig cfg = small_config();
    const HydrologyTrace tr = training_trace(cfg);
    const Experiment exp(cfg, tr, tr);
    const TrainedArtifacts art = exp.train_artifacts({{Strategy::Ddp, 0.5, 0, Period::Train}});
    const auto runs = run_cells(exp, {{Strategy::Ddp, 0.5, 0, Period::Train}, {Strategy::Ddp, 0.5, 0, Period::Validation}},
                                art);
    EXPECT_EQ(runs[0].report.J_H, runs[1].report.J_H);
    // SDP without a trained policy fails per cell, not globally.
    const auto failed = run_cells(exp, {{Strategy::Sdp, 0.5, 0, Period::Train}}, art);
    EXPECT_FALSE(failed[0].ok);
    EXPECT_NE(failed[0].error.find("missing trained artifact"), std::string::npos);
}
