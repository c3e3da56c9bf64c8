#pragma once

// Economic MPC reference governor. Each day it picks a storage reference
// plan over N_p days, predicted through the linear inner-loop model F,
// minimizing -alpha J_hyd + (1 - alpha) J_flo subject to storage bounds and
// release bounds evaluated at the predicted storages.
//
// Solver: feasibility-first direct search. Plans are compared first on
// feasibility, then on cost (feasible) or exact-penalty merit (infeasible).
// Each start runs per-coordinate line scans followed by coordinate pattern
// search with a halving step; a schedule of penalty weights is applied in
// sequence.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "rescontrol/error.hpp"
#include "rescontrol/hydrology.hpp"
#include "rescontrol/innerloop.hpp"
#include "rescontrol/json_util.hpp"
#include "rescontrol/objectives.hpp"
#include "rescontrol/reservoir.hpp"
#include "rescontrol/routing.hpp"

namespace rescontrol {

enum class ForecastSource { Oracle, Persistence };

inline ForecastSource forecast_from_string(const std::string& s) {
    if (s == "oracle") return ForecastSource::Oracle;
    if (s == "persistence") return ForecastSource::Persistence;
    throw ConfigError("forecast must be 'oracle' or 'persistence', got '" + s + "'");
}

inline const char* to_string(ForecastSource f) { return f == ForecastSource::Oracle ? "oracle" : "persistence"; }

struct SolverSettings {
    int max_iterations = 3000;  ///< plan evaluations per solve, starting points excluded
    std::vector<double> penalty_weights{1e2, 1e4, 1e6};
    double step_tolerance = 1e-4; ///< smallest pattern step, scaled storage units
    int restarts = 4;             ///< starting plans tried
    int scan_points = 9;          ///< line-scan resolution per coordinate (0 disables)
};

struct EmpcConfig {
    int horizon = 15;
    CostModel cost;
    SolverSettings solver;
    ForecastSource forecast = ForecastSource::Oracle;
    double feasibility_tol = 1e-6; ///< scaled units
    /// Reference box: [s_min - m (s_max - s_min), s_max + m (s_max - s_min)].
    double sref_margin = 1.0;
    /// Optional soft penalty (1 - alpha) mean max(h - level_margin, 0)^2.
    std::optional<double> level_margin;
    /// When non-empty, references are restricted to these values.
    std::vector<double> sref_candidates;

    void validate() const {
        if (horizon < 1) throw ConfigError("empc horizon must be >= 1");
        cost.validate();
        if (!(feasibility_tol > 0.0)) throw ConfigError("feasibility_tol must be > 0");
        if (!(solver.step_tolerance > 0.0)) throw ConfigError("step_tolerance must be > 0");
        if (solver.max_iterations < 0) throw ConfigError("max_iterations must be >= 0");
        if (solver.restarts < 1) throw ConfigError("restarts must be >= 1");
        if (solver.scan_points < 0 || solver.scan_points == 1) throw ConfigError("scan_points must be 0 or >= 2");
        if (solver.penalty_weights.empty()) throw ConfigError("penalty_weights must not be empty");
        for (double w : solver.penalty_weights) {
            if (!(w > 0.0)) throw ConfigError("penalty weights must be > 0");
        }
        if (!(sref_margin >= 0.0)) throw ConfigError("sref_margin must be >= 0");
        for (std::size_t i = 1; i < sref_candidates.size(); ++i) {
            if (!(sref_candidates[i] > sref_candidates[i - 1])) {
                throw ConfigError("sref_candidates must be strictly increasing");
            }
        }
    }
};

/// Everything known about one candidate plan.
struct PlanEvaluation {
    std::vector<double> plan;      ///< s_ref, m^3
    Prediction prediction;
    double J_hyd = 0.0;            ///< kWh/day over the horizon
    double J_flo = 0.0;            ///< cm^2/day over the horizon
    double cost = 0.0;             ///< scalarized
    double violation = 0.0;        ///< sum of scaled violations
    double max_storage_violation = 0.0; ///< m^3
    double max_release_violation = 0.0; ///< m^3/s
    bool feasible = false;
};

struct IterateLog {
    int phase = 0;     ///< index into the penalty schedule
    bool feasible = false;
    double cost = 0.0;
    double merit = 0.0; ///< cost + weight * violation
};

struct EmpcStepResult {
    std::vector<double> s_ref_plan;
    std::vector<double> s_pred; ///< N + 1 storages
    std::vector<double> u_pred; ///< N decisions
    double applied_s_ref = 0.0;
    double J_hyd = 0.0;
    double J_flo = 0.0;
    double cost = 0.0;
    double max_storage_violation = 0.0;
    double max_release_violation = 0.0;
    bool feasible = false;
    int evaluations = 0;
    std::vector<IterateLog> iterates;
};

/// No feasible plan within the budget; carries the least infeasible one.
class InfeasiblePlanError : public SolverError {
public:
    explicit InfeasiblePlanError(EmpcStepResult best)
        : SolverError("empc: no feasible plan (max storage violation " + std::to_string(best.max_storage_violation) +
                      " m3, max release violation " + std::to_string(best.max_release_violation) + " m3/s)"),
          best_(std::move(best)) {}
    const EmpcStepResult& least_infeasible() const { return best_; }

private:
    EmpcStepResult best_;
};

/// Plan scoring against the linear prediction model.
class PlanEvaluator {
public:
    PlanEvaluator(const StateSpaceModel& model, const InnerState& x0, const RoutingFilter& routing,
                  std::span<const Inflow> forecast, const ReservoirSpec& spec, const EmpcConfig& cfg)
        : model_(&model), x0_(x0), routing_(routing), spec_(&spec), cfg_(&cfg) {
        q_d_.reserve(forecast.size());
        q_other_.reserve(forecast.size());
        for (const Inflow& q : forecast) {
            q_d_.push_back(q.q_d);
            q_other_.push_back(q.q_t + q.q_l);
        }
    }

    std::size_t horizon() const { return q_d_.size(); }

    /// Decisions can be mapped back to references when the PID has a
    /// non-zero direct feedthrough kp + ki + kd.
    bool invertible() const { return model_->D(1, 0) != 0.0; }

    /// Largest release allowed anywhere in the release table.
    double max_release() const {
        const ReleaseTable& t = spec_->release_table;
        double m = 0.0;
        for (std::size_t i = 0; i < t.storage().size(); ++i) {
            for (std::size_t j = 0; j < t.inflow().size(); ++j) m = std::max(m, t.node(i, j).r_max);
        }
        return m;
    }

    /// References whose predicted decisions equal `u_target` after each
    /// target is clamped into the window that keeps the release within
    /// bounds and the next storage within [s_min, s_max]. The window is
    /// shrunk by a small fraction of the feasibility tolerance so rounding
    /// cannot push a decision onto the saturation. References are kept in
    /// [ref_lo, ref_hi]: the controller inverse need not be stable, and a
    /// clamped reference simply yields a different decision.
    std::vector<double> references_for(const std::vector<double>& u_target, double ref_lo, double ref_hi) const {
        const StateSpaceModel& m = *model_;
        const double S = m.scaling.storage;
        const double Q = m.scaling.flow;
        const double dt = spec_->seconds_per_step;
        const double margin = 1e-3 * cfg_->feasibility_tol * Q;
        std::vector<double> plan(u_target.size());
        Eigen::Vector3d x = m.scale_state(x0_);
        for (std::size_t k = 0; k < u_target.size(); ++k) {
            const double s = x(0) * S;
            const ReleaseBounds b = release_bounds(*spec_, s, q_d_[k]);
            const double lo = std::max(b.r_min, q_d_[k] - (spec_->s_max - s) / dt) + margin;
            const double hi = std::min(b.r_max, q_d_[k] + (s - spec_->s_min) / dt) - margin;
            const double u = lo <= hi ? std::clamp(u_target[k], lo, hi) : 0.5 * (lo + hi);
            const double q = q_d_[k] / Q;
            const double sref =
                std::clamp((u / Q - m.C.row(1).dot(x) - m.D(1, 1) * q) / m.D(1, 0), ref_lo / S, ref_hi / S);
            plan[k] = sref * S;
            x = m.A * x + m.B * Eigen::Vector2d(sref, q);
        }
        return plan;
    }

    PlanEvaluation operator()(const std::vector<double>& plan) const {
        PlanEvaluation ev;
        ev.plan = plan;
        ev.prediction = predict(*model_, x0_, plan, q_d_);
        const auto& s = ev.prediction.s;
        const auto& u = ev.prediction.u;
        const double S = model_->scaling.storage;
        const double Q = model_->scaling.flow;
        const std::size_t n = plan.size();
        RoutingFilter routing = routing_;
        double energy = 0.0, flood = 0.0, margin = 0.0, max_scaled = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            const ReleaseBounds b = release_bounds(*spec_, s[k], q_d_[k]);
            const double rv = std::max(b.r_min - u[k], 0.0) + std::max(u[k] - b.r_max, 0.0);
            const double sv = std::max(spec_->s_min - s[k + 1], 0.0) + std::max(s[k + 1] - spec_->s_max, 0.0);
            ev.violation += rv / Q + sv / S;
            max_scaled = std::max({max_scaled, rv / Q, sv / S});
            ev.max_release_violation = std::max(ev.max_release_violation, rv);
            ev.max_storage_violation = std::max(ev.max_storage_violation, sv);
            // Prediction assumes u = r.
            const double r = std::max(u[k], 0.0);
            energy += step_energy(*spec_, s[k], r);
            const double level = routing.push(r + q_other_[k]);
            flood += flood_excess_squared(level, cfg_->cost.h_bar);
            if (cfg_->level_margin) margin += flood_excess_squared(level, *cfg_->level_margin);
        }
        const double dn = static_cast<double>(n);
        ev.J_hyd = energy / dn;
        ev.J_flo = flood / dn;
        const CostModel& c = cfg_->cost;
        ev.cost = -c.alpha * ev.J_hyd / c.energy_unit + (1.0 - c.alpha) * ev.J_flo;
        if (cfg_->level_margin) ev.cost += (1.0 - c.alpha) * margin / dn;
        ev.feasible = max_scaled <= cfg_->feasibility_tol;
        return ev;
    }

private:
    const StateSpaceModel* model_;
    InnerState x0_;
    RoutingFilter routing_;
    const ReservoirSpec* spec_;
    const EmpcConfig* cfg_;
    std::vector<double> q_d_;
    std::vector<double> q_other_;
};

namespace detail {

/// Feasibility-first ordering; strict, so ties keep the incumbent.
inline bool better(const PlanEvaluation& a, const PlanEvaluation& b, double weight) {
    if (a.feasible != b.feasible) return a.feasible;
    if (a.feasible) return a.cost < b.cost;
    return a.cost + weight * a.violation < b.cost + weight * b.violation;
}

/// A search point: the coordinates the search moves and the plan they
/// decode to.
struct SearchPoint {
    std::vector<double> x;
    PlanEvaluation eval;
};

/// Coordinate direct search over a box, or over a sorted lattice when
/// `lattice` is non-empty.
class DirectSearch {
public:
    using Decode = std::function<PlanEvaluation(const std::vector<double>&)>;

    DirectSearch(Decode decode, const EmpcConfig& cfg, double lo, double hi, double min_step, int budget,
                 std::vector<double> lattice = {})
        : decode_(std::move(decode)), cfg_(cfg), lo_(lo), hi_(hi), min_step_(min_step), budget_(budget),
          lattice_(std::move(lattice)) {}

    int evaluations() const { return evaluations_; }
    std::vector<IterateLog>& log() { return log_; }

    SearchPoint start(std::vector<double> x) {
        ++evaluations_;
        PlanEvaluation ev = decode_(x);
        return {std::move(x), std::move(ev)};
    }

    /// Improves `best` in place until the step vanishes or the budget is
    /// spent. Only strictly better points are accepted.
    void run(SearchPoint& best) {
        const std::size_t n = best.x.size();
        for (std::size_t phase = 0; phase < cfg_.solver.penalty_weights.size(); ++phase) {
            const double w = cfg_.solver.penalty_weights[phase];
            record(best.eval, static_cast<int>(phase), w);
            auto try_point = [&](std::vector<double> x) {
                if (evaluations_ >= budget_) return false;
                ++evaluations_;
                PlanEvaluation ev = decode_(x);
                if (better(ev, best.eval, w)) {
                    best = {std::move(x), std::move(ev)};
                    record(best.eval, static_cast<int>(phase), w);
                    return true;
                }
                return false;
            };

            // Line scans, one coordinate at a time.
            const std::vector<double> values = lattice_.empty() ? scan_values() : lattice_;
            for (std::size_t k = 0; k < n && evaluations_ < budget_; ++k) {
                for (double v : values) {
                    if (v == best.x[k]) continue;
                    std::vector<double> x = best.x;
                    x[k] = v;
                    try_point(std::move(x));
                }
            }

            // Coordinate pattern search with a halving step.
            if (lattice_.empty()) {
                double step = 0.25 * (hi_ - lo_);
                while (step >= min_step_ && evaluations_ < budget_) {
                    bool improved = false;
                    for (std::size_t k = 0; k < n; ++k) {
                        for (double dir : {1.0, -1.0}) {
                            std::vector<double> x = best.x;
                            x[k] = std::clamp(x[k] + dir * step, lo_, hi_);
                            if (x[k] == best.x[k]) continue;
                            if (try_point(std::move(x))) {
                                improved = true;
                                break;
                            }
                        }
                    }
                    if (!improved) step *= 0.5;
                }
            } else {
                std::size_t step = std::max<std::size_t>(1, lattice_.size() / 4);
                while (step >= 1 && evaluations_ < budget_) {
                    bool improved = false;
                    for (std::size_t k = 0; k < n; ++k) {
                        const std::size_t idx = lattice_index(best.x[k]);
                        for (int dir : {1, -1}) {
                            if (dir > 0 && idx + step >= lattice_.size()) continue;
                            if (dir < 0 && idx < step) continue;
                            std::vector<double> x = best.x;
                            x[k] = lattice_[dir > 0 ? idx + step : idx - step];
                            if (try_point(std::move(x))) {
                                improved = true;
                                break;
                            }
                        }
                    }
                    if (!improved) step /= 2;
                }
            }
        }
    }

private:
    std::vector<double> scan_values() const {
        const int g = cfg_.solver.scan_points;
        if (g < 2) return {};
        std::vector<double> v(static_cast<std::size_t>(g));
        for (int i = 0; i < g; ++i) v[i] = lo_ + (hi_ - lo_) * static_cast<double>(i) / static_cast<double>(g - 1);
        return v;
    }

    std::size_t lattice_index(double x) const {
        return static_cast<std::size_t>(std::lower_bound(lattice_.begin(), lattice_.end(), x) - lattice_.begin());
    }

    void record(const PlanEvaluation& ev, int phase, double w) {
        log_.push_back({phase, ev.feasible, ev.cost, ev.cost + w * ev.violation});
    }

    Decode decode_;
    const EmpcConfig& cfg_;
    double lo_;
    double hi_;
    double min_step_;
    int budget_;
    std::vector<double> lattice_;
    int evaluations_ = 0;
    std::vector<IterateLog> log_;
};

inline EmpcStepResult to_result(const PlanEvaluation& ev, int evaluations, std::vector<IterateLog> log) {
    EmpcStepResult r;
    r.s_ref_plan = ev.plan;
    r.s_pred = ev.prediction.s;
    r.u_pred = ev.prediction.u;
    r.applied_s_ref = ev.plan.front();
    r.J_hyd = ev.J_hyd;
    r.J_flo = ev.J_flo;
    r.cost = ev.cost;
    r.max_storage_violation = ev.max_storage_violation;
    r.max_release_violation = ev.max_release_violation;
    r.feasible = ev.feasible;
    r.evaluations = evaluations;
    r.iterates = std::move(log);
    return r;
}

} // namespace detail

/// Reference bounds used by the reference-space search.
inline std::pair<double, double> reference_box(const ReservoirSpec& spec, const EmpcConfig& cfg) {
    if (!cfg.sref_candidates.empty()) return {cfg.sref_candidates.front(), cfg.sref_candidates.back()};
    const double w = spec.s_max - spec.s_min;
    return {spec.s_min - cfg.sref_margin * w, spec.s_max + cfg.sref_margin * w};
}

/// One receding-horizon optimization. The forecast length sets the horizon.
///
/// With a candidate lattice the search moves the references directly.
/// Otherwise it moves the predicted decisions u_k, which map one-to-one to
/// references through the PID's direct feedthrough; every trial is first
/// clamped into the window that keeps release and storage feasible. When
/// that finds no feasible plan, the references are searched directly.
inline EmpcStepResult solve_step(const StateSpaceModel& model, const InnerState& x0, const RoutingFilter& routing,
                                 std::span<const Inflow> forecast, const ReservoirSpec& spec, const EmpcConfig& cfg,
                                 const std::vector<double>* warm_start = nullptr) {
    cfg.validate();
    if (forecast.empty()) throw Error("solve_step: empty forecast");
    const std::size_t n = forecast.size();
    if (warm_start && warm_start->size() != n) throw Error("solve_step: warm start length differs from the horizon");

    const PlanEvaluator evaluator(model, x0, routing, forecast, spec, cfg);
    std::optional<PlanEvaluation> warm_eval;
    if (warm_start) warm_eval = evaluator(*warm_start);
    if (cfg.solver.max_iterations == 0 && warm_eval) {
        EmpcStepResult r = detail::to_result(*warm_eval, 1, {{0, warm_eval->feasible, warm_eval->cost, warm_eval->cost}});
        if (!r.feasible) throw InfeasiblePlanError(std::move(r));
        return r;
    }

    const bool lattice = !cfg.sref_candidates.empty();
    const double final_weight = cfg.solver.penalty_weights.back();
    std::optional<detail::SearchPoint> best;
    std::vector<IterateLog> best_log;
    int evaluations = warm_eval ? 1 : 0;

    // Multi-start search over one parameterization with `budget` evaluations.
    auto search_from = [&](const std::vector<std::vector<double>>& all_starts, const detail::DirectSearch::Decode& decode,
                           double lo, double hi, double min_step, int budget) {
        const std::size_t n_starts = std::min(all_starts.size(), static_cast<std::size_t>(cfg.solver.restarts));
        const int per_start = budget / static_cast<int>(n_starts);
        int used = 0;
        for (std::size_t i = 0; i < n_starts; ++i) {
            // The last start inherits whatever budget the others left.
            const int b = i + 1 == n_starts ? budget - used : per_start;
            detail::DirectSearch search(decode, cfg, lo, hi, min_step, std::max(b, 0),
                                        lattice ? cfg.sref_candidates : std::vector<double>{});
            detail::SearchPoint current = search.start(all_starts[i]);
            search.run(current);
            used += search.evaluations();
            if (!best || detail::better(current.eval, best->eval, final_weight)) {
                best = std::move(current);
                best_log = std::move(search.log());
            }
        }
        evaluations += used;
    };

    // Reference-space search: the references are the coordinates.
    auto reference_search = [&](int budget) {
        const auto [lo, hi] = reference_box(spec, cfg);
        auto snap = [&](double v) {
            v = std::clamp(v, lo, hi);
            const auto& cand = cfg.sref_candidates;
            if (cand.empty()) return v;
            const auto it = std::lower_bound(cand.begin(), cand.end(), v);
            if (it == cand.begin()) return cand.front();
            if (it == cand.end()) return cand.back();
            return (v - *(it - 1) <= *it - v) ? *(it - 1) : *it;
        };
        std::vector<std::vector<double>> starts;
        if (warm_start) {
            std::vector<double> w(n);
            for (std::size_t k = 0; k < n; ++k) w[k] = snap((*warm_start)[k]);
            starts.push_back(std::move(w));
        }
        starts.emplace_back(n, snap(x0.s));
        starts.emplace_back(n, snap(spec.s_max));
        starts.emplace_back(n, snap(spec.s_min));
        search_from(starts, [&](const std::vector<double>& r) { return evaluator(r); }, lo, hi,
                    cfg.solver.step_tolerance * model.scaling.storage, budget);
    };

    if (!lattice && evaluator.invertible()) {
        const auto [ref_lo, ref_hi] = reference_box(spec, cfg);
        std::vector<std::vector<double>> starts;
        if (warm_eval) starts.push_back(warm_eval->prediction.u);
        std::vector<double> river(n), turbine(n, spec.q_turb_max), store(n, 0.0);
        for (std::size_t k = 0; k < n; ++k) river[k] = forecast[k].q_d;
        starts.push_back(std::move(river));
        starts.push_back(std::move(turbine));
        starts.push_back(std::move(store));
        search_from(
            starts,
            [&evaluator, ref_lo, ref_hi](const std::vector<double>& u) {
                return evaluator(evaluator.references_for(u, ref_lo, ref_hi));
            },
            0.0, evaluator.max_release(), cfg.solver.step_tolerance * model.scaling.flow,
            cfg.solver.max_iterations - evaluations);
        // Holding the decisions on target can demand references that the
        // box cuts off, since the controller inverse need not be stable.
        // The references themselves are then searched with a fresh budget.
        if (!best->eval.feasible) reference_search(cfg.solver.max_iterations);
    } else {
        reference_search(cfg.solver.max_iterations - evaluations);
    }
    // A feasible warm start is never worsened.
    if (warm_eval && detail::better(*warm_eval, best->eval, final_weight)) {
        best = detail::SearchPoint{*warm_start, *warm_eval};
        best_log = {{0, warm_eval->feasible, warm_eval->cost, warm_eval->cost + final_weight * warm_eval->violation}};
    }
    EmpcStepResult result = detail::to_result(best->eval, evaluations, std::move(best_log));
    if (!result.feasible) throw InfeasiblePlanError(std::move(result));
    return result;
}

struct EmpcStepLog {
    long t = 0;
    int horizon = 0;
    double applied_s_ref = 0.0;
    double J_hyd = 0.0;
    double J_flo = 0.0;
    double cost = 0.0;
    double max_storage_violation = 0.0;
    double max_release_violation = 0.0;
    int evaluations = 0;
    bool fallback = false;
    std::string message;
};

inline Json to_json(const EmpcStepLog& l) {
    return Json{{"t", l.t},
                {"horizon", l.horizon},
                {"s_ref", l.applied_s_ref},
                {"J_hyd", l.J_hyd},
                {"J_flo", l.J_flo},
                {"cost", l.cost},
                {"max_storage_violation", l.max_storage_violation},
                {"max_release_violation", l.max_release_violation},
                {"evaluations", l.evaluations},
                {"fallback", l.fallback},
                {"message", l.message}};
}

struct EmpcRun {
    Trajectory trajectory;
    std::vector<EmpcStepLog> log;
    std::vector<std::vector<IterateLog>> iterates; ///< per step, when requested
    std::size_t fallbacks = 0;
};

struct RecedingHorizonOptions {
    bool anti_windup = true;
    bool keep_iterates = false;
    /// Reference used to warm start the first step (and later steps while
    /// it lasts); indexed by absolute day.
    std::vector<double> initial_reference;
};

/// Closed-loop run: solve, apply the first reference of the plan to the
/// true inner loop for one day, shift the plan as the next warm start.
inline EmpcRun run_receding_horizon(const ReservoirSpec& spec, const RoutingModel& routing, const PIDParams& pid,
                                    const StateSpaceModel& model, const HydrologyTrace& trace, const EmpcConfig& cfg,
                                    double s0, const RecedingHorizonOptions& opts = {}) {
    cfg.validate();
    trace.validate();
    if (trace.size() < static_cast<std::size_t>(cfg.horizon) + 1) {
        throw ConfigError("run_receding_horizon: trace shorter than horizon + 1");
    }
    InnerLoop loop(spec, routing, pid, trace, s0, InnerLoopOptions{opts.anti_windup});
    EmpcRun run;
    std::vector<double> previous_plan;
    const std::size_t T = trace.size();
    for (std::size_t t = 0; t < T; ++t) {
        const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(cfg.horizon), T - t);
        std::vector<Inflow> forecast(n);
        for (std::size_t k = 0; k < n; ++k) {
            if (cfg.forecast == ForecastSource::Oracle) {
                forecast[k] = trace.at(t + k);
            } else {
                forecast[k] = trace.at(t == 0 ? 0 : t - 1);
            }
        }
        std::vector<double> warm;
        if (!opts.initial_reference.empty() && t + n <= opts.initial_reference.size() && previous_plan.empty()) {
            warm.assign(opts.initial_reference.begin() + static_cast<long>(t),
                        opts.initial_reference.begin() + static_cast<long>(t + n));
        } else if (!previous_plan.empty()) {
            for (std::size_t k = 0; k < n; ++k) warm.push_back(previous_plan[std::min(k + 1, previous_plan.size() - 1)]);
        }

        EmpcStepLog entry;
        entry.t = static_cast<long>(t);
        entry.horizon = static_cast<int>(n);
        double applied;
        try {
            EmpcStepResult res = solve_step(model, loop.state(), loop.plant().routing_filter(), forecast, spec, cfg,
                                            warm.empty() ? nullptr : &warm);
            applied = res.applied_s_ref;
            entry.J_hyd = res.J_hyd;
            entry.J_flo = res.J_flo;
            entry.cost = res.cost;
            entry.max_storage_violation = res.max_storage_violation;
            entry.max_release_violation = res.max_release_violation;
            entry.evaluations = res.evaluations;
            if (opts.keep_iterates) run.iterates.push_back(std::move(res.iterates));
            previous_plan = std::move(res.s_ref_plan);
        } catch (const InfeasiblePlanError& e) {
            const EmpcStepResult& best = e.least_infeasible();
            entry.fallback = true;
            entry.message = e.what();
            entry.max_storage_violation = best.max_storage_violation;
            entry.max_release_violation = best.max_release_violation;
            entry.evaluations = best.evaluations;
            if (!warm.empty()) {
                applied = warm.front();
                previous_plan = warm;
            } else {
                applied = best.applied_s_ref;
                previous_plan = best.s_ref_plan;
            }
            if (opts.keep_iterates) run.iterates.push_back(best.iterates);
            ++run.fallbacks;
        }
        entry.applied_s_ref = applied;
        loop.advance(applied);
        run.log.push_back(std::move(entry));
    }
    run.trajectory = loop.release_trajectory();
    return run;
}

inline EmpcConfig empc_config_from_json(JsonReader& r) {
    EmpcConfig cfg;
    cfg.horizon = static_cast<int>(r.integer("horizon"));
    cfg.cost.alpha = r.number("alpha");
    cfg.forecast = forecast_from_string(r.string_or("forecast", "oracle"));
    cfg.feasibility_tol = r.number_or("feasibility_tol", cfg.feasibility_tol);
    cfg.sref_margin = r.number_or("sref_margin", cfg.sref_margin);
    if (r.has("level_margin")) cfg.level_margin = r.number("level_margin");
    if (r.has("solver")) {
        JsonReader s = r.section("solver");
        cfg.solver.max_iterations = static_cast<int>(s.integer_or("max_iterations", cfg.solver.max_iterations));
        if (s.has("penalty_weights")) cfg.solver.penalty_weights = s.numbers("penalty_weights");
        cfg.solver.step_tolerance = s.number_or("step_tolerance", cfg.solver.step_tolerance);
        cfg.solver.restarts = static_cast<int>(s.integer_or("restarts", cfg.solver.restarts));
        cfg.solver.scan_points = static_cast<int>(s.integer_or("scan_points", cfg.solver.scan_points));
        s.finish();
    }
    try {
        cfg.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(e.what(), r.path());
    }
    return cfg;
}

} // namespace rescontrol
