#pragma once

// Deterministic and stochastic dynamic programming over a (day x storage)
// grid: backward Bellman recursion, argmin policy extraction and
// closed-loop simulation of the resulting policy.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "rescontrol/error.hpp"
#include "rescontrol/hydrology.hpp"
#include "rescontrol/json_util.hpp"
#include "rescontrol/objectives.hpp"
#include "rescontrol/parallel.hpp"
#include "rescontrol/plant.hpp"
#include "rescontrol/reservoir.hpp"
#include "rescontrol/routing.hpp"

namespace rescontrol {

struct GridSpec {
    std::vector<double> storage; ///< m^3, strictly increasing
    std::vector<double> control; ///< m^3/s, strictly increasing, >= 0

    void validate() const {
        if (storage.size() < 2 || control.size() < 2) throw ConfigError("grid needs >= 2 storage and control nodes");
        for (std::size_t i = 1; i < storage.size(); ++i) {
            if (!(storage[i] > storage[i - 1])) throw ConfigError("storage nodes must be strictly increasing");
        }
        for (std::size_t j = 1; j < control.size(); ++j) {
            if (!(control[j] > control[j - 1])) throw ConfigError("control nodes must be strictly increasing");
        }
        if (control.front() < 0.0) throw ConfigError("control nodes must be >= 0");
    }

    static std::vector<double> linspace(double lo, double hi, std::size_t n) {
        std::vector<double> v(n);
        for (std::size_t i = 0; i < n; ++i) {
            v[i] = n == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
        }
        return v;
    }

    /// Nearest storage node, ties to the lower index.
    std::size_t nearest_storage(double s) const {
        const auto it = std::lower_bound(storage.begin(), storage.end(), s);
        if (it == storage.begin()) return 0;
        if (it == storage.end()) return storage.size() - 1;
        const std::size_t hi = static_cast<std::size_t>(it - storage.begin());
        return (s - storage[hi - 1] <= storage[hi] - s) ? hi - 1 : hi;
    }
};

/// Cost-to-go H[d][i] over `stages + 1` rows. Periodic tables (SDP) repeat
/// row 0 as the last row; finite-horizon tables (DDP) end with zeros.
struct BellmanTable {
    GridSpec grid;
    CostModel cost;
    bool periodic = false;
    int stages = 0;
    std::vector<double> values;
    double residual = 0.0;     ///< last max-norm change (SDP)
    int sweeps = 0;            ///< full periods swept (SDP)
    double gain = 0.0;         ///< cost per period removed by normalization (SDP)
    std::size_t clamped_transitions = 0;

    std::size_t nodes() const { return grid.storage.size(); }
    double at(int d, std::size_t i) const { return values[static_cast<std::size_t>(d) * nodes() + i]; }
    std::span<const double> row(int d) const {
        return {values.data() + static_cast<std::size_t>(d) * nodes(), nodes()};
    }
};

struct Policy {
    GridSpec grid;
    int period = kDaysPerYear;
    bool by_day_of_year = true; ///< SDP policies; DDP policies are indexed by step
    std::vector<std::uint32_t> index; ///< [d * nodes + i] -> control node

    std::size_t nodes() const { return grid.storage.size(); }
    std::uint32_t control_index(int d, std::size_t i) const {
        return index[static_cast<std::size_t>(d) * nodes() + i];
    }
    /// Control for step t (day-of-year `day`) at storage s: the control of the
    /// nearest storage node.
    double control(long t, int day, double s) const {
        const int d = by_day_of_year ? day % period : static_cast<int>(t % period);
        return grid.control[control_index(d, grid.nearest_storage(s))];
    }
};

struct DpSolution {
    BellmanTable table;
    Policy policy;
};

struct DpOptions {
    int jobs = 1;
    std::size_t horizon = 0; ///< DDP only; 0 means the whole trace
};

struct SdpOptions {
    int jobs = 1;
    int max_sweeps = 200;
    double tol = 0.0;            ///< absolute; 0 selects relative_tol
    double relative_tol = 1e-6;  ///< times max |H| after the first sweep
};

namespace detail {

struct Transition {
    double cost;
    double s_next;
};

/// Stage cost and next storage for one (storage, decision, disturbance).
/// The flood term uses the memoryless rating of today's total flow.
inline Transition transition(const ReservoirSpec& spec, const RoutingModel& routing, const CostModel& cost, double s,
                             double u, const Inflow& q) {
    const double r = apply_release(spec, s, u, q.q_d);
    const double energy = step_energy(spec, s, r);
    const double level = routing.steady_level(r + q.q_t + q.q_l);
    return {cost.stage(energy, level), mass_balance(s, q.q_d, r, spec.seconds_per_step)};
}

/// Piecewise-linear interpolation of next-stage values; storages outside
/// the grid clamp to the boundary node and are counted.
inline double interpolate(const std::vector<double>& nodes, std::span<const double> values, double s,
                          std::size_t& clamped) {
    if (s <= nodes.front()) {
        if (s < nodes.front()) ++clamped;
        return values.front();
    }
    if (s >= nodes.back()) {
        if (s > nodes.back()) ++clamped;
        return values.back();
    }
    const std::size_t hi = static_cast<std::size_t>(std::upper_bound(nodes.begin(), nodes.end(), s) - nodes.begin());
    const std::size_t lo = hi - 1;
    const double w = (s - nodes[lo]) / (nodes[hi] - nodes[lo]);
    return (1.0 - w) * values[lo] + w * values[hi];
}

struct Scenario {
    Inflow q;
    double weight;
};

struct NodeResult {
    double value;
    std::uint32_t argmin;
    std::size_t clamped;
};

/// min over controls of sum_j w_j (g_j + H_next(s'_j)); strict comparison
/// keeps the lowest control index on ties.
inline NodeResult minimize_node(const ReservoirSpec& spec, const RoutingModel& routing, const CostModel& cost,
                                const GridSpec& grid, double s, std::span<const Scenario> scenarios,
                                std::span<const double> next) {
    NodeResult best{std::numeric_limits<double>::infinity(), 0, 0};
    std::size_t clamped = 0;
    for (std::size_t j = 0; j < grid.control.size(); ++j) {
        double expected = 0.0;
        for (const Scenario& sc : scenarios) {
            const Transition tr = transition(spec, routing, cost, s, grid.control[j], sc.q);
            expected += sc.weight * (tr.cost + interpolate(grid.storage, next, tr.s_next, clamped));
        }
        if (expected < best.value) {
            best.value = expected;
            best.argmin = static_cast<std::uint32_t>(j);
        }
    }
    best.clamped = clamped;
    return best;
}

inline std::vector<Scenario> day_scenarios(const DisturbanceEnsemble& ens, int d) {
    std::vector<Scenario> out(ens.scenarios);
    for (std::size_t j = 0; j < ens.scenarios; ++j) out[j] = {ens.sample(d, j), ens.weight(d, j)};
    return out;
}

/// One backward stage: fills `out` (values) and `arg` (argmins) for all nodes.
inline std::size_t backward_stage(const ReservoirSpec& spec, const RoutingModel& routing, const CostModel& cost,
                                  const GridSpec& grid, std::span<const Scenario> scenarios,
                                  std::span<const double> next, std::span<double> out, std::span<std::uint32_t> arg,
                                  int jobs) {
    std::vector<std::size_t> clamped(grid.storage.size(), 0);
    parallel_for(grid.storage.size(), jobs, [&](std::size_t i) {
        const NodeResult r = minimize_node(spec, routing, cost, grid, grid.storage[i], scenarios, next);
        out[i] = r.value;
        arg[i] = r.argmin;
        clamped[i] = r.clamped;
    });
    std::size_t total = 0;
    for (std::size_t c : clamped) total += c;
    return total;
}

} // namespace detail

/// Finite-horizon recursion on a known disturbance sequence, H_T = 0.
inline DpSolution solve_ddp(const ReservoirSpec& spec, const RoutingModel& routing, const HydrologyTrace& trace,
                            const GridSpec& grid, const CostModel& cost, const DpOptions& opts = {}) {
    grid.validate();
    cost.validate();
    trace.validate();
    const std::size_t horizon = opts.horizon == 0 ? trace.size() : opts.horizon;
    if (horizon > trace.size()) {
        throw ConfigError("solve_ddp: horizon of " + std::to_string(horizon) + " steps exceeds the trace (" +
                          std::to_string(trace.size()) + " days)");
    }
    const std::size_t n = grid.storage.size();

    DpSolution sol;
    BellmanTable& table = sol.table;
    table.grid = grid;
    table.cost = cost;
    table.periodic = false;
    table.stages = static_cast<int>(horizon);
    table.values.assign((horizon + 1) * n, 0.0);

    Policy& policy = sol.policy;
    policy.grid = grid;
    policy.period = static_cast<int>(horizon);
    policy.by_day_of_year = false;
    policy.index.assign(horizon * n, 0);

    for (std::size_t t = horizon; t-- > 0;) {
        const detail::Scenario sc{trace.at(t), 1.0};
        table.clamped_transitions += detail::backward_stage(
            spec, routing, cost, grid, std::span<const detail::Scenario>(&sc, 1),
            std::span<const double>(table.values.data() + (t + 1) * n, n),
            std::span<double>(table.values.data() + t * n, n), std::span<std::uint32_t>(policy.index.data() + t * n, n),
            opts.jobs);
    }
    return sol;
}

inline DpSolution solve_ddp(const ReservoirSpec& spec, const RoutingModel& routing, const HydrologyTrace& trace,
                            const GridSpec& grid, double alpha, const DpOptions& opts = {}) {
    CostModel cost;
    cost.alpha = alpha;
    return solve_ddp(spec, routing, trace, grid, cost, opts);
}

/// Argmin pass over a finite-horizon table with the trace it was built on.
inline Policy extract_policy(const BellmanTable& table, const ReservoirSpec& spec, const RoutingModel& routing,
                             const HydrologyTrace& trace, int jobs = 1) {
    if (table.periodic) throw Error("extract_policy: periodic table needs an ensemble");
    const std::size_t n = table.nodes();
    const std::size_t horizon = static_cast<std::size_t>(table.stages);
    if (horizon > trace.size()) throw ConfigError("extract_policy: trace shorter than the table horizon");
    Policy policy;
    policy.grid = table.grid;
    policy.period = table.stages;
    policy.by_day_of_year = false;
    policy.index.assign(horizon * n, 0);
    std::vector<double> scratch(n);
    for (std::size_t t = 0; t < horizon; ++t) {
        const detail::Scenario sc{trace.at(t), 1.0};
        detail::backward_stage(spec, routing, table.cost, table.grid, std::span<const detail::Scenario>(&sc, 1),
                               table.row(static_cast<int>(t + 1)), scratch,
                               std::span<std::uint32_t>(policy.index.data() + t * n, n), jobs);
    }
    return policy;
}

/// Argmin pass over a periodic table with the ensemble it was built on.
inline Policy extract_policy(const BellmanTable& table, const ReservoirSpec& spec, const RoutingModel& routing,
                             const DisturbanceEnsemble& ensemble, int jobs = 1) {
    if (!table.periodic) throw Error("extract_policy: finite-horizon table needs a trace");
    const std::size_t n = table.nodes();
    Policy policy;
    policy.grid = table.grid;
    policy.period = kDaysPerYear;
    policy.by_day_of_year = true;
    policy.index.assign(kDaysPerYear * n, 0);
    std::vector<double> scratch(n);
    for (int d = 0; d < kDaysPerYear; ++d) {
        const auto sc = detail::day_scenarios(ensemble, d);
        detail::backward_stage(spec, routing, table.cost, table.grid, sc, table.row(d + 1), scratch,
                               std::span<std::uint32_t>(policy.index.data() + static_cast<std::size_t>(d) * n, n),
                               jobs);
    }
    return policy;
}

/// Periodic value iteration over the cyclic year. Each full sweep is
/// normalized by subtracting the smallest day-0 value (relative value
/// iteration), since undiscounted yearly costs accumulate without bound.
inline DpSolution solve_sdp(const ReservoirSpec& spec, const RoutingModel& routing,
                            const DisturbanceEnsemble& ensemble, const GridSpec& grid, const CostModel& cost,
                            const SdpOptions& opts = {}) {
    grid.validate();
    cost.validate();
    ensemble.validate();
    if (opts.max_sweeps < 1) throw ConfigError("max_sweeps must be >= 1");
    if (!(opts.tol >= 0.0) || !(opts.relative_tol > 0.0)) throw ConfigError("tolerances must be > 0");
    const std::size_t n = grid.storage.size();
    const std::size_t T = kDaysPerYear;

    std::vector<std::vector<detail::Scenario>> scenarios(T);
    for (int d = 0; d < kDaysPerYear; ++d) scenarios[d] = detail::day_scenarios(ensemble, d);

    std::vector<double> previous((T + 1) * n, 0.0);
    std::vector<double> current((T + 1) * n, 0.0);
    std::vector<std::uint32_t> args(n);
    double tol = opts.tol;
    double residual = std::numeric_limits<double>::infinity();
    std::size_t clamped = 0;
    int sweep = 0;
    double gain = 0.0;
    while (sweep < opts.max_sweeps) {
        ++sweep;
        // Row T holds the start-of-year values carried over from the previous sweep.
        std::copy(previous.begin(), previous.begin() + n, current.begin() + T * n);
        clamped = 0;
        for (std::size_t d = T; d-- > 0;) {
            clamped += detail::backward_stage(spec, routing, cost, grid, scenarios[d],
                                              std::span<const double>(current.data() + (d + 1) * n, n),
                                              std::span<double>(current.data() + d * n, n), args, opts.jobs);
        }
        if (sweep == 1 && tol == 0.0) {
            double scale = 0.0;
            for (std::size_t k = 0; k < T * n; ++k) scale = std::max(scale, std::abs(current[k]));
            tol = opts.relative_tol * std::max(scale, 1e-300);
        }
        gain = *std::min_element(current.begin(), current.begin() + n);
        for (std::size_t k = 0; k < T * n; ++k) current[k] -= gain;
        std::copy(current.begin(), current.begin() + n, current.begin() + T * n);
        residual = 0.0;
        for (std::size_t k = 0; k < T * n; ++k) residual = std::max(residual, std::abs(current[k] - previous[k]));
        std::swap(previous, current);
        if (sweep > 1 && residual < tol) break;
    }
    if (!(residual < tol)) {
        throw ConvergenceError("solve_sdp: no convergence after " + std::to_string(sweep) +
                                   " sweeps (residual " + std::to_string(residual) + ", tol " +
                                   std::to_string(tol) + ")",
                               residual, sweep);
    }

    DpSolution sol;
    BellmanTable& table = sol.table;
    table.grid = grid;
    table.cost = cost;
    table.periodic = true;
    table.stages = kDaysPerYear;
    table.values = std::move(previous);
    table.residual = residual;
    table.sweeps = sweep;
    table.gain = gain;
    table.clamped_transitions = clamped;
    sol.policy = extract_policy(table, spec, routing, ensemble, opts.jobs);
    return sol;
}

inline DpSolution solve_sdp(const ReservoirSpec& spec, const RoutingModel& routing,
                            const DisturbanceEnsemble& ensemble, const GridSpec& grid, double alpha,
                            const SdpOptions& opts = {}) {
    CostModel cost;
    cost.alpha = alpha;
    return solve_sdp(spec, routing, ensemble, grid, cost, opts);
}

/// Forward closed-loop run of a policy on a trace from storage s0.
inline Trajectory simulate_policy(const Policy& policy, const ReservoirSpec& spec, const RoutingModel& routing,
                                  const HydrologyTrace& trace, double s0) {
    trace.validate();
    if (!policy.by_day_of_year && static_cast<std::size_t>(policy.period) < trace.size()) {
        throw ConfigError("simulate_policy: finite-horizon policy shorter than the trace");
    }
    Plant plant(spec, routing, trace, s0);
    for (std::size_t t = 0; t < trace.size(); ++t) {
        const ReservoirState& st = plant.state();
        plant.advance(policy.control(st.t, trace.day_of_year(t), st.s));
    }
    return plant.release_trajectory();
}

inline Json to_json(const GridSpec& g) { return Json{{"storage", g.storage}, {"control", g.control}}; }

inline Json to_json(const BellmanTable& t) {
    return Json{{"grid", to_json(t.grid)},
                {"alpha", t.cost.alpha},
                {"h_bar", t.cost.h_bar},
                {"energy_unit", t.cost.energy_unit},
                {"periodic", t.periodic},
                {"stages", t.stages},
                {"residual", t.residual},
                {"sweeps", t.sweeps},
                {"gain", t.gain},
                {"clamped_transitions", t.clamped_transitions},
                {"values", t.values}};
}

inline Json to_json(const Policy& p) {
    return Json{{"grid", to_json(p.grid)}, {"period", p.period}, {"by_day_of_year", p.by_day_of_year}, {"index", p.index}};
}

inline GridSpec grid_from_json(const Json& j) {
    GridSpec g;
    g.storage = j.at("storage").get<std::vector<double>>();
    g.control = j.at("control").get<std::vector<double>>();
    g.validate();
    return g;
}

inline BellmanTable bellman_table_from_json(const Json& j) {
    BellmanTable t;
    t.grid = grid_from_json(j.at("grid"));
    t.cost.alpha = j.at("alpha").get<double>();
    t.cost.h_bar = j.at("h_bar").get<double>();
    t.cost.energy_unit = j.at("energy_unit").get<double>();
    t.periodic = j.at("periodic").get<bool>();
    t.stages = j.at("stages").get<int>();
    t.residual = j.at("residual").get<double>();
    t.sweeps = j.at("sweeps").get<int>();
    t.gain = j.at("gain").get<double>();
    t.clamped_transitions = j.at("clamped_transitions").get<std::size_t>();
    t.values = j.at("values").get<std::vector<double>>();
    if (t.values.size() != static_cast<std::size_t>(t.stages + 1) * t.nodes()) {
        throw ConfigError("bellman table: values size does not match grid and stages");
    }
    return t;
}

inline Policy policy_from_json(const Json& j) {
    Policy p;
    p.grid = grid_from_json(j.at("grid"));
    p.period = j.at("period").get<int>();
    p.by_day_of_year = j.at("by_day_of_year").get<bool>();
    p.index = j.at("index").get<std::vector<std::uint32_t>>();
    if (p.period < 1 || p.index.size() != static_cast<std::size_t>(p.period) * p.nodes()) {
        throw ConfigError("policy: index size does not match grid and period");
    }
    for (auto k : p.index) {
        if (k >= p.grid.control.size()) throw ConfigError("policy: control index out of range");
    }
    return p;
}

} // namespace rescontrol
