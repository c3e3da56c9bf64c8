// rescontrol: command-line front end for the reservoir control pipeline.
//
// Exit codes: 0 success, 1 usage or validation error, 2 runtime or solver
// error.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "rescontrol/config.hpp"
#include "rescontrol/dp.hpp"
#include "rescontrol/empc.hpp"
#include "rescontrol/harness.hpp"
#include "rescontrol/hydrology.hpp"
#include "rescontrol/innerloop.hpp"
#include "rescontrol/io.hpp"
#include "rescontrol/objectives.hpp"
#include "rescontrol/vrft.hpp"

namespace fs = std::filesystem;
using namespace rescontrol;

namespace {

struct Common {
    std::string config_path;
    std::string output_dir = "out";
    long long seed = -1;
    int jobs = 1;
    int storage_nodes = 0;
};

Json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open '" + path + "'");
    try {
        return Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw ConfigError(std::string("invalid JSON: ") + e.what(), path);
    }
}

// Flag overrides are written into the document so manifests record them.
AppConfig load(const Common& c) {
    if (c.config_path.empty()) throw ConfigError("--config is required");
    Json doc = read_json_file(c.config_path);
    if (c.seed >= 0 && doc.contains("hydrology") && doc["hydrology"].is_object()) doc["hydrology"]["seed"] = c.seed;
    if (c.storage_nodes > 0 && doc.contains("dp") && doc["dp"].is_object()) {
        doc["dp"].erase("storage");
        doc["dp"]["storage_nodes"] = c.storage_nodes;
    }
    return config_from_json(doc);
}

HydrologyTrace load_trace_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open trace '" + path + "'");
    return load_trace(in);
}

void write_json(const fs::path& path, const Json& j) { write_text_atomically(path, j.dump(2) + "\n"); }

void write_traj(const fs::path& path, const Trajectory& traj) {
    write_atomically(path, [&](std::ostream& os) { write_trajectory(os, traj); });
}

std::vector<double> read_reference(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open reference '" + path + "'");
    std::vector<double> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (lineno == 1 && line.find("s_ref") != std::string::npos) continue;
        if (line.empty()) continue;
        // Last comma-separated field is the reference.
        const std::string field = line.substr(line.find_last_of(',') == std::string::npos ? 0 : line.find_last_of(',') + 1);
        try {
            std::size_t used = 0;
            out.push_back(std::stod(field, &used));
            if (used != field.size()) throw std::invalid_argument(field);
        } catch (const std::exception&) {
            throw ParseError("expected a number, got '" + field + "'", lineno);
        }
    }
    if (out.empty()) throw ParseError("no reference values", lineno);
    return out;
}

std::vector<Strategy> parse_strategies(const std::vector<std::string>& names) {
    std::vector<Strategy> out;
    for (const auto& n : names) out.push_back(strategy_from_string(n));
    return out;
}

void report_runs(const std::vector<RunRecord>& runs) {
    for (const RunRecord& r : runs) {
        std::cout << r.spec.label() << ": ";
        if (r.ok) {
            std::cout << "J_H=" << fixed4(r.report.J_H) << " J_F=" << fixed4(r.report.J_F);
        } else {
            std::cout << "error: " << r.error;
        }
        std::cout << "\n";
    }
}

int failures(const std::vector<RunRecord>& runs) {
    int n = 0;
    for (const RunRecord& r : runs) n += r.ok ? 0 : 1;
    return n;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hierarchical reservoir control: DP, SDP, VRFT-tuned PID and economic MPC"};
    app.require_subcommand(1);
    Common c;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", c.config_path, "JSON config file")->required();
        sub->add_option("--output-dir", c.output_dir, "Directory for outputs");
        sub->add_option("--seed", c.seed, "Override the hydrology seed");
        sub->add_option("--jobs", c.jobs, "Worker threads")->check(CLI::PositiveNumber);
        sub->add_option("--storage-nodes", c.storage_nodes, "Override the DP storage grid size")
            ->check(CLI::Range(2, 100000));
    };

    // gen-hydrology
    auto* gen = app.add_subcommand("gen-hydrology", "Generate a synthetic inflow trace");
    add_common(gen);
    int gen_years = 0;
    bool gen_validation = false;
    gen->add_option("--years", gen_years, "Years to generate (default: the configured period length)");
    gen->add_flag("--validation", gen_validation, "Use the validation statistics and seed");

    // simulate
    auto* sim = app.add_subcommand("simulate", "Closed-loop simulation with a PID or a DP policy");
    add_common(sim);
    std::string sim_controller = "pid", sim_reference, sim_policy, sim_pid, sim_trace;
    bool sim_no_aw = false;
    sim->add_option("--controller", sim_controller, "pid or policy")->check(CLI::IsMember({"pid", "policy"}));
    sim->add_option("--reference", sim_reference, "CSV of daily storage references (pid)");
    sim->add_option("--policy", sim_policy, "policy.json from dp or sdp (policy)");
    sim->add_option("--pid", sim_pid, "JSON with theta (pid; default: fit as configured)");
    sim->add_option("--trace", sim_trace, "Inflow trace CSV (default: training trace)");
    sim->add_flag("--no-anti-windup", sim_no_aw, "Disable conditional integration");

    // dp / sdp
    double dp_alpha = 0.05;
    auto* dp = app.add_subcommand("dp", "Deterministic DP on the training trace");
    add_common(dp);
    dp->add_option("--alpha", dp_alpha, "Weight of hydropower")->check(CLI::Range(0.0, 1.0));
    auto* sdp = app.add_subcommand("sdp", "Periodic stochastic DP on the inflow model");
    add_common(sdp);
    sdp->add_option("--alpha", dp_alpha, "Weight of hydropower")->check(CLI::Range(0.0, 1.0));

    // vrft-fit
    auto* vr = app.add_subcommand("vrft-fit", "Fit the inner-loop PID by VRFT on the DDP mean annual cycle");
    add_common(vr);

    // empc-run
    auto* em = app.add_subcommand("empc-run", "Receding-horizon economic MPC run");
    add_common(em);
    double em_alpha = -1.0;
    int em_horizon = 0;
    std::string em_forecast, em_pid, em_period = "train";
    em->add_option("--alpha", em_alpha, "Weight of hydropower")->check(CLI::Range(0.0, 1.0));
    em->add_option("--horizon", em_horizon, "Prediction horizon (days)")->check(CLI::PositiveNumber);
    em->add_option("--forecast", em_forecast, "oracle or persistence")->check(CLI::IsMember({"oracle", "persistence"}));
    em->add_option("--pid", em_pid, "JSON with theta (default: fit as configured)");
    em->add_option("--period", em_period, "train or validation")->check(CLI::IsMember({"train", "validation"}));

    // pareto
    auto* pa = app.add_subcommand("pareto", "Alpha/horizon sweep and Pareto fronts");
    add_common(pa);
    std::vector<std::string> pa_strategies{"ddp"};
    std::vector<double> pa_alphas;
    std::vector<int> pa_horizons;
    std::string pa_period = "train", pa_verify;
    pa->add_option("--strategies", pa_strategies, "ddp, sdp, empc")->delimiter(',');
    pa->add_option("--alphas", pa_alphas, "Override the configured alphas")->delimiter(',');
    pa->add_option("--horizons", pa_horizons, "Override the configured horizons")->delimiter(',');
    pa->add_option("--period", pa_period, "train or validation")->check(CLI::IsMember({"train", "validation"}));
    pa->add_option("--verify-manifest", pa_verify, "Re-run a manifest and compare bit-for-bit");

    // compare
    auto* cmp = app.add_subcommand("compare", "Train/validation comparison table");
    add_common(cmp);
    std::vector<std::string> cmp_strategies{"ddp", "sdp", "empc"};
    double cmp_alpha = -1.0;
    int cmp_horizon = 0;
    cmp->add_option("--strategies", cmp_strategies, "ddp, sdp, empc")->delimiter(',');
    cmp->add_option("--alpha", cmp_alpha, "Weight of hydropower (default: empc.alpha)")->check(CLI::Range(0.0, 1.0));
    cmp->add_option("--horizon", cmp_horizon, "eMPC horizon (default: empc.horizon)")->check(CLI::PositiveNumber);
    cmp->add_option("--verify-manifest", pa_verify, "Re-run a manifest and compare bit-for-bit");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        const fs::path out = c.output_dir;

        // Manifest verification needs only the manifest.
        if (!pa_verify.empty() && (pa->parsed() || cmp->parsed())) {
            const ManifestCheck check = verify_manifest(read_json_file(pa_verify), c.jobs);
            write_json(out / "manifest.rerun.json", check.rerun);
            for (const auto& m : check.mismatches) std::cerr << "mismatch: " << m << "\n";
            std::cout << (check.identical ? "manifest reproduced bit-for-bit" : "manifest NOT reproduced") << "\n";
            return check.identical ? 0 : 2;
        }

        const AppConfig cfg = load(c);

        if (gen->parsed()) {
            HydrologyTrace trace;
            if (gen_validation) {
                AppConfig tmp = cfg;
                if (gen_years > 0) tmp.sweep.validation_years = gen_years;
                trace = validation_trace(tmp);
            } else {
                AppConfig tmp = cfg;
                if (gen_years > 0) tmp.sweep.train_years = gen_years;
                trace = training_trace(tmp);
            }
            const fs::path p = out / (gen_validation ? "validation_trace.csv" : "train_trace.csv");
            write_atomically(p, [&](std::ostream& os) { write_trace(os, trace); });
            std::cout << "wrote " << p.string() << " (" << trace.size() << " days)\n";
            return 0;
        }

        const Experiment exp(cfg);

        if (sim->parsed()) {
            const HydrologyTrace trace = sim_trace.empty() ? exp.train() : load_trace_file(sim_trace);
            Trajectory traj;
            if (sim_controller == "policy") {
                if (sim_policy.empty()) throw ConfigError("--policy is required with --controller policy");
                const Policy policy = policy_from_json(read_json_file(sim_policy));
                traj = simulate_policy(policy, cfg.reservoir, cfg.routing, trace, cfg.initial_storage);
            } else {
                if (sim_reference.empty()) throw ConfigError("--reference is required with --controller pid");
                const std::vector<double> ref = read_reference(sim_reference);
                const PIDParams pid =
                    sim_pid.empty() ? exp.fit_inner_pid(nullptr, c.jobs) : pid_from_json(read_json_file(sim_pid), sim_pid);
                InnerLoopOptions opts{cfg.inner_loop.anti_windup && !sim_no_aw};
                traj = simulate_inner_loop(cfg.reservoir, cfg.routing, pid, ref, trace, cfg.initial_storage, opts);
                write_json(out / "state_space.json", to_json(linearized_inner_loop(pid, cfg.inner_loop.scaling)));
            }
            const ObjectivesReport rep = evaluate(traj, cfg.objectives.h_bar);
            write_traj(out / "trajectory.csv", traj);
            write_json(out / "report.json", to_json(rep));
            std::cout << "J_H=" << fixed4(rep.J_H) << " J_F=" << fixed4(rep.J_F) << "\n";
            return 0;
        }

        if (dp->parsed() || sdp->parsed()) {
            const bool stochastic = sdp->parsed();
            const DpSolution sol = stochastic ? exp.sdp(dp_alpha, c.jobs) : exp.ddp(dp_alpha, exp.train(), c.jobs);
            const Trajectory traj =
                simulate_policy(sol.policy, cfg.reservoir, cfg.routing, exp.train(), cfg.initial_storage);
            const ObjectivesReport rep = evaluate(traj, cfg.objectives.h_bar);
            write_json(out / "policy.json", to_json(sol.policy));
            write_json(out / "bellman.json", to_json(sol.table));
            write_traj(out / "trajectory.csv", traj);
            Json r = to_json(rep);
            r["alpha"] = dp_alpha;
            if (stochastic) {
                r["sweeps"] = sol.table.sweeps;
                r["residual"] = sol.table.residual;
            }
            write_json(out / "report.json", r);
            std::cout << (stochastic ? "sdp" : "dp") << " alpha=" << dp_alpha << " J_H=" << fixed4(rep.J_H)
                      << " J_F=" << fixed4(rep.J_F) << "\n";
            return 0;
        }

        if (vr->parsed()) {
            Json details;
            const PIDParams pid = exp.fit_inner_pid(&details, c.jobs);
            Json j = to_json(pid);
            j["fit"] = details;
            write_json(out / "pid.json", j);
            std::cout << "theta = [" << pid.kp << ", " << pid.ki << ", " << pid.kd << "]\n";
            return 0;
        }

        if (em->parsed()) {
            AppConfig ecfg = cfg;
            if (!em_forecast.empty()) ecfg.empc.forecast = forecast_from_string(em_forecast);
            const Experiment eexp(ecfg);
            const double alpha = em_alpha >= 0.0 ? em_alpha : ecfg.empc.cost.alpha;
            const int horizon = em_horizon > 0 ? em_horizon : ecfg.empc.horizon;
            const PIDParams pid =
                em_pid.empty() ? eexp.fit_inner_pid(nullptr, c.jobs) : pid_from_json(read_json_file(em_pid), em_pid);
            const EmpcRun run = eexp.empc(alpha, horizon, pid, eexp.trace(period_from_string(em_period)));
            const ObjectivesReport rep = evaluate(run.trajectory, ecfg.objectives.h_bar);
            Json log = Json::array();
            for (const auto& l : run.log) log.push_back(to_json(l));
            write_traj(out / "trajectory.csv", run.trajectory);
            write_json(out / "empc_log.json", log);
            Json r = to_json(rep);
            r["alpha"] = alpha;
            r["horizon_days"] = horizon;
            r["fallbacks"] = run.fallbacks;
            r["theta"] = {pid.kp, pid.ki, pid.kd};
            write_json(out / "report.json", r);
            std::cout << "empc alpha=" << alpha << " N=" << horizon << " J_H=" << fixed4(rep.J_H)
                      << " J_F=" << fixed4(rep.J_F) << " fallbacks=" << run.fallbacks << "\n";
            return 0;
        }

        if (pa->parsed()) {
            SweepSpec spec;
            spec.strategies = parse_strategies(pa_strategies);
            spec.alphas = pa_alphas.empty() ? cfg.sweep.alphas : pa_alphas;
            spec.horizons = pa_horizons.empty() ? cfg.sweep.horizons : pa_horizons;
            spec.period = period_from_string(pa_period);
            const ExperimentOutput res = sweep(exp, spec, c.jobs);
            write_outputs(out, res, "pareto.csv", true);
            report_runs(res.runs);
            return failures(res.runs) == 0 ? 0 : 2;
        }

        if (cmp->parsed()) {
            const double alpha = cmp_alpha >= 0.0 ? cmp_alpha : cfg.empc.cost.alpha;
            const int horizon = cmp_horizon > 0 ? cmp_horizon : cfg.empc.horizon;
            const ExperimentOutput res =
                compare_train_validation(exp, parse_strategies(cmp_strategies), alpha, horizon, c.jobs);
            write_outputs(out, res, "comparison.csv", false);
            report_runs(res.runs);
            return failures(res.runs) == 0 ? 0 : 2;
        }
    } catch (const ConvergenceError& e) {
        std::cerr << "error: " << e.what() << " (residual " << e.residual() << " after " << e.sweeps()
                  << " sweeps)\n";
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const ParseError& e) {
        std::cerr << "parse error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    std::cerr << app.help();
    return 1;
}
