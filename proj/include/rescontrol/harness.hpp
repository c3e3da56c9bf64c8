#pragma once

// Experiment orchestration: alpha/horizon sweeps over DDP, SDP and eMPC,
// Pareto assembly, train/validation comparison and run manifests that can
// be re-executed to reproduce every number.

#include <chrono>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "rescontrol/config.hpp"
#include "rescontrol/dp.hpp"
#include "rescontrol/empc.hpp"
#include "rescontrol/error.hpp"
#include "rescontrol/hydrology.hpp"
#include "rescontrol/innerloop.hpp"
#include "rescontrol/io.hpp"
#include "rescontrol/objectives.hpp"
#include "rescontrol/parallel.hpp"
#include "rescontrol/vrft.hpp"

namespace rescontrol {

inline constexpr const char* kSoftwareVersion = "0.1.0";

enum class Strategy { Ddp, Sdp, Empc };

inline const char* to_string(Strategy s) {
    switch (s) {
    case Strategy::Ddp: return "ddp";
    case Strategy::Sdp: return "sdp";
    case Strategy::Empc: return "empc";
    }
    return "?";
}

inline Strategy strategy_from_string(const std::string& s) {
    if (s == "ddp") return Strategy::Ddp;
    if (s == "sdp") return Strategy::Sdp;
    if (s == "empc") return Strategy::Empc;
    throw ConfigError("unknown strategy '" + s + "' (expected ddp, sdp or empc)");
}

enum class Period { Train, Validation };

inline const char* to_string(Period p) { return p == Period::Train ? "train" : "validation"; }

inline Period period_from_string(const std::string& s) {
    if (s == "train") return Period::Train;
    if (s == "validation") return Period::Validation;
    throw ConfigError("unknown period '" + s + "'");
}

struct RunSpec {
    Strategy strategy = Strategy::Ddp;
    double alpha = 0.0;
    int horizon = 0; ///< eMPC only
    Period period = Period::Train;

    std::string label() const {
        std::ostringstream os;
        os << to_string(strategy) << "/a=" << alpha;
        if (strategy == Strategy::Empc) os << "/N=" << horizon;
        os << "/" << to_string(period);
        return os.str();
    }
};

struct RunRecord {
    RunSpec spec;
    bool ok = false;
    std::string error;
    ObjectivesReport report;
    double seconds = 0.0;
    Json details = Json::object();
};

struct SweepSpec {
    std::vector<Strategy> strategies{Strategy::Ddp};
    std::vector<double> alphas;
    std::vector<int> horizons;
    Period period = Period::Train;

    void validate() const {
        if (strategies.empty()) throw ConfigError("sweep needs at least one strategy");
        if (alphas.empty()) throw ConfigError("sweep needs at least one alpha");
        for (double a : alphas) {
            if (!(a >= 0.0 && a <= 1.0)) throw ConfigError("sweep alphas must lie in [0, 1]");
        }
        for (Strategy s : strategies) {
            if (s == Strategy::Empc && horizons.empty()) throw ConfigError("eMPC sweep needs at least one horizon");
        }
        for (int n : horizons) {
            if (n < 1) throw ConfigError("sweep horizons must be >= 1");
        }
    }

    std::vector<RunSpec> cells() const {
        std::vector<RunSpec> out;
        for (Strategy s : strategies) {
            for (double a : alphas) {
                if (s == Strategy::Empc) {
                    for (int n : horizons) out.push_back({s, a, n, period});
                } else {
                    out.push_back({s, a, 0, period});
                }
            }
        }
        return out;
    }
};

/// Artifacts fitted on the training period and frozen for validation.
struct TrainedArtifacts {
    std::optional<PIDParams> pid;
    std::map<double, Policy> sdp_policies; ///< keyed by alpha
    Json details = Json::object();

    const Policy& sdp_policy(double alpha) const {
        const auto it = sdp_policies.find(alpha);
        if (it == sdp_policies.end()) {
            std::ostringstream os;
            os << "missing trained artifact: SDP policy for alpha " << alpha;
            throw Error(os.str());
        }
        return it->second;
    }
    const PIDParams& inner_pid() const {
        if (!pid) throw Error("missing trained artifact: inner-loop PID gains");
        return *pid;
    }
};

/// One configured experiment: the config plus its training and validation
/// traces.
class Experiment {
public:
    explicit Experiment(AppConfig cfg) : cfg_(std::move(cfg)) {
        train_ = training_trace(cfg_);
        validation_ = validation_trace(cfg_);
    }
    /// Explicit traces (e.g. self-validation with validation == train).
    Experiment(AppConfig cfg, HydrologyTrace train, HydrologyTrace validation)
        : cfg_(std::move(cfg)), train_(std::move(train)), validation_(std::move(validation)) {
        train_.validate();
        validation_.validate();
    }

    const AppConfig& config() const { return cfg_; }
    const HydrologyTrace& train() const { return train_; }
    const HydrologyTrace& validation() const { return validation_; }
    const HydrologyTrace& trace(Period p) const { return p == Period::Train ? train_ : validation_; }

    DisturbanceEnsemble ensemble() const {
        return build_ensemble(cfg_.hydrology, static_cast<std::size_t>(cfg_.sweep.ensemble_size));
    }

    DpSolution ddp(double alpha, const HydrologyTrace& trace, int jobs = 1) const {
        return solve_ddp(cfg_.reservoir, cfg_.routing, trace, cfg_.dp.grid, cfg_.cost(alpha), DpOptions{jobs, 0});
    }

    DpSolution sdp(double alpha, int jobs = 1) const {
        SdpOptions opts = cfg_.dp.sdp;
        opts.jobs = jobs;
        return solve_sdp(cfg_.reservoir, cfg_.routing, ensemble(), cfg_.dp.grid, cfg_.cost(alpha), opts);
    }

    /// Inner-loop gains: from the config, or VRFT on the mean annual cycle
    /// of the DDP solution over the training trace.
    PIDParams fit_inner_pid(Json* details = nullptr, int jobs = 1) const {
        const InnerLoopConfig& il = cfg_.inner_loop;
        if (il.pid_source == PidSource::Config) {
            if (details) (*details)["pid_source"] = "config";
            return *il.pid;
        }
        const DpSolution sol = ddp(il.vrft_alpha, train_, jobs);
        const Trajectory traj = simulate_policy(sol.policy, cfg_.reservoir, cfg_.routing, train_, cfg_.initial_storage);
        AnnualCycle cycle = mean_annual_cycle(traj);
        if (il.vrft_net_release) {
            // The storage integrates u - q; fitting on the net release keeps
            // the inflow out of the virtual-reference residual.
            for (std::size_t t = 0; t < cycle.u.size(); ++t) cycle.u[t] -= cycle.q_d[t];
        }
        const VrftFit fit = fit_pid(cycle.u, cycle.s, il.reference_model, il.prefilter);
        if (details) {
            (*details)["pid_source"] = "vrft";
            (*details)["vrft_signal"] = il.vrft_net_release ? "net_release" : "release";
            (*details)["vrft_criterion"] = fit.criterion;
            (*details)["vrft_samples"] = fit.samples;
        }
        return fit.theta;
    }

    EmpcConfig empc_config(double alpha, int horizon) const {
        EmpcConfig e = cfg_.empc;
        e.cost = cfg_.cost(alpha);
        e.horizon = horizon;
        e.validate();
        return e;
    }

    EmpcRun empc(double alpha, int horizon, const PIDParams& pid, const HydrologyTrace& trace,
                 const RecedingHorizonOptions& extra = {}) const {
        const StateSpaceModel model = linearized_inner_loop(pid, cfg_.inner_loop.scaling);
        RecedingHorizonOptions opts = extra;
        opts.anti_windup = cfg_.inner_loop.anti_windup;
        return run_receding_horizon(cfg_.reservoir, cfg_.routing, pid, model, trace, empc_config(alpha, horizon),
                                    cfg_.initial_storage, opts);
    }

    /// Trains what `cells` need: PID gains for eMPC cells, SDP policies for
    /// SDP cells.
    TrainedArtifacts train_artifacts(const std::vector<RunSpec>& cells, int jobs = 1) const {
        TrainedArtifacts art;
        bool need_pid = false;
        std::vector<double> sdp_alphas;
        for (const RunSpec& c : cells) {
            if (c.strategy == Strategy::Empc) need_pid = true;
            if (c.strategy == Strategy::Sdp &&
                std::find(sdp_alphas.begin(), sdp_alphas.end(), c.alpha) == sdp_alphas.end()) {
                sdp_alphas.push_back(c.alpha);
            }
        }
        if (need_pid) {
            Json d;
            art.pid = fit_inner_pid(&d, jobs);
            d["theta"] = {art.pid->kp, art.pid->ki, art.pid->kd};
            art.details["pid"] = d;
        }
        std::vector<std::optional<DpSolution>> sols(sdp_alphas.size());
        std::vector<std::string> errors(sdp_alphas.size());
        parallel_for(sdp_alphas.size(), jobs, [&](std::size_t i) {
            try {
                sols[i] = sdp(sdp_alphas[i]);
            } catch (const std::exception& e) {
                errors[i] = e.what();
            }
        });
        Json sdp_details = Json::array();
        for (std::size_t i = 0; i < sdp_alphas.size(); ++i) {
            Json d{{"alpha", sdp_alphas[i]}};
            if (sols[i]) {
                art.sdp_policies.emplace(sdp_alphas[i], std::move(sols[i]->policy));
                d["sweeps"] = sols[i]->table.sweeps;
                d["residual"] = sols[i]->table.residual;
                d["gain"] = sols[i]->table.gain;
            } else {
                d["error"] = errors[i];
            }
            sdp_details.push_back(d);
        }
        if (!sdp_alphas.empty()) art.details["sdp"] = sdp_details;
        return art;
    }

    /// Runs one cell on its period's trace.
    Trajectory run(const RunSpec& spec, const TrainedArtifacts& art, Json* details = nullptr) const {
        const HydrologyTrace& trace = this->trace(spec.period);
        switch (spec.strategy) {
        case Strategy::Ddp: {
            const DpSolution sol = ddp(spec.alpha, trace);
            if (details) (*details)["clamped_transitions"] = sol.table.clamped_transitions;
            return simulate_policy(sol.policy, cfg_.reservoir, cfg_.routing, trace, cfg_.initial_storage);
        }
        case Strategy::Sdp:
            return simulate_policy(art.sdp_policy(spec.alpha), cfg_.reservoir, cfg_.routing, trace,
                                   cfg_.initial_storage);
        case Strategy::Empc: {
            EmpcRun run = empc(spec.alpha, spec.horizon, art.inner_pid(), trace);
            if (details) {
                double max_sv = 0.0, max_rv = 0.0;
                for (const auto& l : run.log) {
                    max_sv = std::max(max_sv, l.max_storage_violation);
                    max_rv = std::max(max_rv, l.max_release_violation);
                }
                (*details)["fallbacks"] = run.fallbacks;
                (*details)["max_predicted_storage_violation"] = max_sv;
                (*details)["max_predicted_release_violation"] = max_rv;
            }
            return std::move(run.trajectory);
        }
        }
        throw Error("unreachable strategy");
    }

private:
    AppConfig cfg_;
    HydrologyTrace train_;
    HydrologyTrace validation_;
};

/// Runs every cell; failures are recorded per cell.
inline std::vector<RunRecord> run_cells(const Experiment& exp, const std::vector<RunSpec>& cells,
                                        const TrainedArtifacts& art, int jobs = 1) {
    std::vector<RunRecord> out(cells.size());
    parallel_for(cells.size(), jobs, [&](std::size_t i) {
        RunRecord& rec = out[i];
        rec.spec = cells[i];
        const auto t0 = std::chrono::steady_clock::now();
        try {
            const Trajectory traj = exp.run(cells[i], art, &rec.details);
            rec.report = evaluate(traj, exp.config().objectives.h_bar);
            rec.details["negative_storage_events"] = traj.negative_storage_events;
            rec.ok = true;
        } catch (const std::exception& e) {
            rec.error = e.what();
        }
        rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    });
    return out;
}

/// Pareto flags, computed within each (strategy, horizon, period) group.
inline std::vector<bool> pareto_flags(const std::vector<RunRecord>& runs) {
    std::vector<bool> flags(runs.size(), false);
    std::map<std::string, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < runs.size(); ++i) {
        if (!runs[i].ok) continue;
        const RunSpec& s = runs[i].spec;
        groups[std::string(to_string(s.strategy)) + "/" + std::to_string(s.horizon) + "/" + to_string(s.period)]
            .push_back(i);
    }
    for (const auto& [key, idx] : groups) {
        std::vector<ObjectivePoint> pts;
        for (std::size_t i : idx) pts.push_back({std::to_string(i), runs[i].report.J_H, runs[i].report.J_F});
        for (const ObjectivePoint& p : pareto_filter(pts)) flags[std::stoul(p.label)] = true;
    }
    return flags;
}

inline void write_runs_csv(std::ostream& out, const std::vector<RunRecord>& runs, bool with_pareto) {
    const std::vector<bool> flags = with_pareto ? pareto_flags(runs) : std::vector<bool>(runs.size(), false);
    out << "strategy,alpha,horizon,period,J_H,J_F" << (with_pareto ? ",pareto" : "") << ",status\n";
    for (std::size_t i = 0; i < runs.size(); ++i) {
        const RunRecord& r = runs[i];
        out << to_string(r.spec.strategy) << ',' << r.spec.alpha << ',' << r.spec.horizon << ','
            << to_string(r.spec.period) << ',';
        if (r.ok) {
            out << fixed4(r.report.J_H) << ',' << fixed4(r.report.J_F);
        } else {
            out << ',';
        }
        if (with_pareto) out << ',' << (flags[i] ? 1 : 0);
        out << ',' << (r.ok ? "ok" : "error") << '\n';
    }
}

inline Json to_json(const RunRecord& r) {
    Json j{{"label", r.spec.label()},
           {"strategy", to_string(r.spec.strategy)},
           {"alpha", r.spec.alpha},
           {"horizon", r.spec.horizon},
           {"period", to_string(r.spec.period)},
           {"ok", r.ok},
           {"seconds", r.seconds},
           {"details", r.details}};
    if (r.ok) {
        j["J_H"] = r.report.J_H;
        j["J_F"] = r.report.J_F;
        j["days"] = r.report.horizon;
    } else {
        j["error"] = r.error;
    }
    return j;
}

/// What was run and how; enough to run it again.
struct ManifestRequest {
    std::string command;  ///< "pareto" or "compare"
    std::vector<RunSpec> cells;
    int jobs = 1;
};

inline Json build_manifest(const Experiment& exp, const ManifestRequest& req, const TrainedArtifacts& art,
                           const std::vector<RunRecord>& runs, double total_seconds) {
    const AppConfig& cfg = exp.config();
    const std::string canonical = cfg.document.dump();
    Json cells = Json::array();
    for (const RunSpec& c : req.cells) {
        cells.push_back({{"strategy", to_string(c.strategy)},
                         {"alpha", c.alpha},
                         {"horizon", c.horizon},
                         {"period", to_string(c.period)}});
    }
    Json runs_json = Json::array();
    for (const RunRecord& r : runs) runs_json.push_back(to_json(r));
    return Json{{"software", {{"name", "rescontrol"}, {"version", kSoftwareVersion}}},
                {"command", req.command},
                {"cells", cells},
                {"jobs", req.jobs},
                {"config", cfg.document},
                {"config_hash", hex64(fnv1a(canonical))},
                {"seeds",
                 {{"hydrology", cfg.hydrology.seed},
                  {"validation", cfg.hydrology.seed + cfg.sweep.validation_seed_offset}}},
                {"training", art.details},
                {"runs", runs_json},
                {"total_seconds", total_seconds}};
}

struct ExperimentOutput {
    std::vector<RunRecord> runs;
    TrainedArtifacts artifacts;
    Json manifest;
};

/// Trains, runs every cell and assembles the manifest.
inline ExperimentOutput execute(const Experiment& exp, const ManifestRequest& req) {
    const auto t0 = std::chrono::steady_clock::now();
    ExperimentOutput out;
    out.artifacts = exp.train_artifacts(req.cells, req.jobs);
    out.runs = run_cells(exp, req.cells, out.artifacts, req.jobs);
    const double total = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.manifest = build_manifest(exp, req, out.artifacts, out.runs, total);
    return out;
}

/// Pareto sweep on one period.
inline ExperimentOutput sweep(const Experiment& exp, const SweepSpec& spec, int jobs = 1) {
    spec.validate();
    return execute(exp, {"pareto", spec.cells(), jobs});
}

/// Strategy x period table with artifacts frozen from training. eMPC is
/// re-run online on each period.
inline ExperimentOutput compare_train_validation(const Experiment& exp, const std::vector<Strategy>& strategies,
                                                 double alpha, int horizon, int jobs = 1) {
    if (strategies.empty()) throw ConfigError("compare needs at least one strategy");
    std::vector<RunSpec> cells;
    for (Strategy s : strategies) {
        for (Period p : {Period::Train, Period::Validation}) {
            cells.push_back({s, alpha, s == Strategy::Empc ? horizon : 0, p});
        }
    }
    return execute(exp, {"compare", cells, jobs});
}

inline void write_outputs(const std::filesystem::path& dir, const ExperimentOutput& out, const std::string& csv_name,
                          bool with_pareto) {
    write_atomically(dir / csv_name, [&](std::ostream& os) { write_runs_csv(os, out.runs, with_pareto); });
    write_text_atomically(dir / "manifest.json", out.manifest.dump(2) + "\n");
}

inline ManifestRequest request_from_manifest(const Json& m) {
    if (!m.is_object() || !m.contains("cells") || !m.contains("config") || !m.contains("command")) {
        throw ConfigError("manifest lacks command, cells or config");
    }
    ManifestRequest req;
    req.command = m.at("command").get<std::string>();
    req.jobs = m.value("jobs", 1);
    for (const Json& c : m.at("cells")) {
        req.cells.push_back({strategy_from_string(c.at("strategy").get<std::string>()), c.at("alpha").get<double>(),
                             c.at("horizon").get<int>(), period_from_string(c.at("period").get<std::string>())});
    }
    return req;
}

struct ManifestCheck {
    bool identical = true;
    std::vector<std::string> mismatches;
    Json rerun;
};

/// Re-executes a manifest and compares every reported number bit-for-bit.
inline ManifestCheck verify_manifest(const Json& manifest, int jobs = 0) {
    ManifestRequest req = request_from_manifest(manifest);
    if (jobs > 0) req.jobs = jobs;
    const AppConfig cfg = config_from_json(manifest.at("config"));
    const std::string hash = hex64(fnv1a(cfg.document.dump()));
    ManifestCheck check;
    if (manifest.value("config_hash", "") != hash) {
        check.identical = false;
        check.mismatches.push_back("config_hash differs from the embedded config");
    }
    const Experiment exp(cfg);
    const ExperimentOutput out = execute(exp, req);
    check.rerun = out.manifest;
    const Json& old_runs = manifest.at("runs");
    if (old_runs.size() != out.runs.size()) {
        check.identical = false;
        check.mismatches.push_back("run count differs");
        return check;
    }
    for (std::size_t i = 0; i < out.runs.size(); ++i) {
        const Json& a = old_runs[i];
        const Json b = to_json(out.runs[i]);
        for (const char* key : {"label", "ok", "J_H", "J_F", "days"}) {
            const bool has_a = a.contains(key), has_b = b.contains(key);
            if (has_a != has_b || (has_a && a.at(key) != b.at(key))) {
                check.identical = false;
                check.mismatches.push_back(b.at("label").get<std::string>() + ": " + key + " differs");
            }
        }
    }
    return check;
}

} // namespace rescontrol
