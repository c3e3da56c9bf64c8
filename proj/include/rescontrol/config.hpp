#pragma once

// Application configuration: one JSON document with sections hydrology,
// reservoir, routing, inner_loop, empc, sweep, dp and objectives. Every
// section is validated on load and unknown keys are rejected.

#include <array>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "rescontrol/dp.hpp"
#include "rescontrol/empc.hpp"
#include "rescontrol/error.hpp"
#include "rescontrol/hydrology.hpp"
#include "rescontrol/innerloop.hpp"
#include "rescontrol/json_util.hpp"
#include "rescontrol/lti.hpp"
#include "rescontrol/objectives.hpp"
#include "rescontrol/reservoir.hpp"
#include "rescontrol/routing.hpp"
#include "rescontrol/vrft.hpp"

namespace rescontrol {

enum class PidSource { Vrft, Config };

struct InnerLoopConfig {
    Scaling scaling;
    LinearSISOModel reference_model = default_reference_model();
    std::optional<LinearSISOModel> prefilter;
    bool anti_windup = true;
    PidSource pid_source = PidSource::Vrft;
    std::optional<PIDParams> pid;  ///< required when pid_source is "config"
    double vrft_alpha = 0.05;      ///< DDP run whose mean cycle feeds VRFT
    /// Controller output used for the fit: "net_release" (u - q) or
    /// "release" (u).
    bool vrft_net_release = true;
};

struct SweepConfig {
    std::vector<double> alphas{0, 0.05, 0.1, 0.2, 0.4, 0.5, 0.6, 0.8, 0.9, 0.95, 1};
    std::vector<int> horizons{10, 15, 20};
    int train_years = 8;
    int validation_years = 2;
    int ensemble_size = 10;  ///< SDP scenarios per day
    /// Added to every validation log-mean (wetter or drier period).
    std::optional<std::array<std::vector<double>, 3>> validation_mu_delta;
    std::uint64_t validation_seed_offset = 1;
};

struct DpConfig {
    GridSpec grid;
    SdpOptions sdp;
};

struct AppConfig {
    InflowModel hydrology;
    ReservoirSpec reservoir;
    double initial_storage = 0.0;
    RoutingModel routing;
    InnerLoopConfig inner_loop;
    EmpcConfig empc;
    SweepConfig sweep;
    DpConfig dp;
    CostModel objectives; ///< h_bar and energy_unit; alpha is set per run
    Json document;        ///< the document as loaded, for manifests

    CostModel cost(double alpha) const {
        CostModel c = objectives;
        c.alpha = alpha;
        c.validate();
        return c;
    }
};

namespace detail {

inline LinearSISOModel lti_section(JsonReader& parent, const std::string& key) {
    JsonReader r = parent.section(key);
    LinearSISOModel m = lti_from_json(r);
    r.finish();
    return m;
}

template <class F>
auto with_path(const std::string& path, F&& f) {
    try {
        return f();
    } catch (const ConfigError& e) {
        if (!e.path().empty()) throw;
        throw ConfigError(e.what(), path);
    }
}

} // namespace detail

inline AppConfig config_from_json(const Json& doc) {
    AppConfig cfg;
    cfg.document = doc;
    JsonReader root(doc, "");

    {
        JsonReader h = root.section("hydrology");
        cfg.hydrology = inflow_model_from_json(h);
        h.finish();
    }
    {
        JsonReader r = root.section("reservoir");
        cfg.initial_storage = r.number("initial_storage");
        cfg.reservoir = reservoir_spec_from_json(r);
        if (!(cfg.initial_storage >= cfg.reservoir.s_min && cfg.initial_storage <= cfg.reservoir.s_max)) {
            throw ConfigError("initial_storage must lie in [s_min, s_max]", r.child_path("initial_storage"));
        }
        r.finish();
    }
    {
        JsonReader r = root.section("routing");
        cfg.routing = routing_model_from_json(r);
        r.finish();
    }
    {
        JsonReader o = root.section("objectives");
        cfg.objectives.h_bar = o.number_or("h_bar", kDefaultFloodThreshold);
        cfg.objectives.energy_unit = o.number_or("energy_unit", cfg.objectives.energy_unit);
        detail::with_path(o.path(), [&] { cfg.objectives.validate(); return 0; });
        o.finish();
    }
    {
        JsonReader il = root.section("inner_loop");
        InnerLoopConfig& c = cfg.inner_loop;
        JsonReader sc = il.section("scaling");
        c.scaling.storage = sc.number("storage");
        c.scaling.flow = sc.number("flow");
        sc.finish();
        c.scaling.seconds_per_step = cfg.reservoir.seconds_per_step;
        detail::with_path(sc.path(), [&] { c.scaling.validate(); return 0; });
        if (il.has("reference_model")) c.reference_model = detail::lti_section(il, "reference_model");
        if (il.has("prefilter")) c.prefilter = detail::lti_section(il, "prefilter");
        c.anti_windup = il.boolean_or("anti_windup", true);
        const std::string src = il.string_or("pid_source", "vrft");
        if (src == "vrft") {
            c.pid_source = PidSource::Vrft;
        } else if (src == "config") {
            c.pid_source = PidSource::Config;
        } else {
            throw ConfigError("expected 'vrft' or 'config'", il.child_path("pid_source"));
        }
        if (il.has("pid")) c.pid = pid_from_json(il.raw("pid"), il.child_path("pid"));
        if (c.pid_source == PidSource::Config && !c.pid) {
            throw ConfigError("pid_source 'config' needs a pid entry", il.child_path("pid"));
        }
        c.vrft_alpha = il.number_or("vrft_alpha", c.vrft_alpha);
        if (!(c.vrft_alpha >= 0.0 && c.vrft_alpha <= 1.0)) {
            throw ConfigError("must lie in [0, 1]", il.child_path("vrft_alpha"));
        }
        const std::string sig = il.string_or("vrft_signal", "net_release");
        if (sig != "net_release" && sig != "release") {
            throw ConfigError("expected 'net_release' or 'release'", il.child_path("vrft_signal"));
        }
        c.vrft_net_release = sig == "net_release";
        il.finish();
    }
    {
        JsonReader e = root.section("empc");
        cfg.empc = empc_config_from_json(e);
        cfg.empc.cost.h_bar = cfg.objectives.h_bar;
        cfg.empc.cost.energy_unit = cfg.objectives.energy_unit;
        if (e.has("sref_candidates")) cfg.empc.sref_candidates = e.numbers("sref_candidates");
        detail::with_path(e.path(), [&] { cfg.empc.validate(); return 0; });
        e.finish();
    }
    {
        JsonReader s = root.section("sweep");
        SweepConfig& c = cfg.sweep;
        if (s.has("alphas")) c.alphas = s.numbers("alphas");
        if (s.has("horizons")) {
            c.horizons.clear();
            const Json& hs = s.raw("horizons");
            if (!hs.is_array()) throw ConfigError("expected an array", s.child_path("horizons"));
            for (std::size_t i = 0; i < hs.size(); ++i) {
                c.horizons.push_back(
                    static_cast<int>(JsonReader::as_integer(hs[i], s.child_path("horizons") + "/" + std::to_string(i))));
            }
        }
        c.train_years = static_cast<int>(s.integer_or("train_years", c.train_years));
        c.validation_years = static_cast<int>(s.integer_or("validation_years", c.validation_years));
        c.ensemble_size = static_cast<int>(s.integer_or("ensemble_size", c.ensemble_size));
        const long offset = s.integer_or("validation_seed_offset", 1);
        if (offset < 0) throw ConfigError("must be >= 0", s.child_path("validation_seed_offset"));
        c.validation_seed_offset = static_cast<std::uint64_t>(offset);
        if (s.has("validation_mu_delta")) {
            JsonReader d = s.section("validation_mu_delta");
            std::array<std::vector<double>, 3> delta;
            const char* rivers[3] = {"da", "thao", "lo"};
            for (int k = 0; k < 3; ++k) {
                delta[k] = d.numbers(rivers[k]);
                if (delta[k].size() != kDaysPerYear) throw ConfigError("expected 365 values", d.child_path(rivers[k]));
            }
            d.finish();
            c.validation_mu_delta = delta;
        }
        if (c.alphas.empty()) throw ConfigError("must not be empty", s.child_path("alphas"));
        for (double a : c.alphas) {
            if (!(a >= 0.0 && a <= 1.0)) throw ConfigError("alphas must lie in [0, 1]", s.child_path("alphas"));
        }
        if (c.horizons.empty()) throw ConfigError("must not be empty", s.child_path("horizons"));
        for (int n : c.horizons) {
            if (n < 1) throw ConfigError("horizons must be >= 1", s.child_path("horizons"));
        }
        if (c.train_years < 1) throw ConfigError("must be >= 1", s.child_path("train_years"));
        if (c.validation_years < 1) throw ConfigError("must be >= 1", s.child_path("validation_years"));
        if (c.ensemble_size < 1) throw ConfigError("must be >= 1", s.child_path("ensemble_size"));
        s.finish();
    }
    {
        JsonReader d = root.section("dp");
        if (d.has("storage")) {
            cfg.dp.grid.storage = d.numbers("storage");
        } else {
            const long n = d.integer("storage_nodes");
            if (n < 2) throw ConfigError("must be >= 2", d.child_path("storage_nodes"));
            cfg.dp.grid.storage =
                GridSpec::linspace(cfg.reservoir.s_min, cfg.reservoir.s_max, static_cast<std::size_t>(n));
        }
        cfg.dp.grid.control = d.numbers("control");
        detail::with_path(d.path(), [&] { cfg.dp.grid.validate(); return 0; });
        cfg.dp.sdp.max_sweeps = static_cast<int>(d.integer_or("max_sweeps", cfg.dp.sdp.max_sweeps));
        cfg.dp.sdp.tol = d.number_or("tol", cfg.dp.sdp.tol);
        cfg.dp.sdp.relative_tol = d.number_or("relative_tol", cfg.dp.sdp.relative_tol);
        if (cfg.dp.sdp.max_sweeps < 1) throw ConfigError("must be >= 1", d.child_path("max_sweeps"));
        if (!(cfg.dp.sdp.tol >= 0.0)) throw ConfigError("must be >= 0", d.child_path("tol"));
        if (!(cfg.dp.sdp.relative_tol > 0.0)) throw ConfigError("must be > 0", d.child_path("relative_tol"));
        d.finish();
    }
    root.finish();
    return cfg;
}

inline AppConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    Json doc;
    try {
        doc = Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw ConfigError(std::string("invalid JSON: ") + e.what(), path);
    }
    return config_from_json(doc);
}

/// Training trace: `train_years` from the configured model.
inline HydrologyTrace training_trace(const AppConfig& cfg) {
    return generate_trace(cfg.hydrology, static_cast<std::size_t>(cfg.sweep.train_years) * kDaysPerYear);
}

/// Validation trace: shifted statistics, independent seed, starting on
/// day-of-year 0 like the training trace.
inline HydrologyTrace validation_trace(const AppConfig& cfg) {
    InflowModel m = cfg.sweep.validation_mu_delta ? cfg.hydrology.shifted(*cfg.sweep.validation_mu_delta)
                                                  : cfg.hydrology;
    m.seed = cfg.hydrology.seed + cfg.sweep.validation_seed_offset;
    return generate_trace(m, static_cast<std::size_t>(cfg.sweep.validation_years) * kDaysPerYear);
}

} // namespace rescontrol
