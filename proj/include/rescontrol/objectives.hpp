#pragma once

// Hydropower and flood objectives, their weighted scalarization, and
// Pareto filtering of (J_H, J_F) outcomes.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "rescontrol/error.hpp"
#include "rescontrol/json_util.hpp"
#include "rescontrol/reservoir.hpp"

namespace rescontrol {

inline constexpr double kDefaultFloodThreshold = 950.0; // cm

struct ObjectivesReport {
    double J_H = 0.0;          ///< kWh/day
    double J_F = 0.0;          ///< cm^2/day
    std::size_t horizon = 0;   ///< days averaged
};

inline Json to_json(const ObjectivesReport& r) {
    return Json{{"J_H", r.J_H}, {"J_F", r.J_F}, {"horizon", r.horizon}};
}

inline double hydropower_objective(const Trajectory& traj) {
    if (traj.empty()) throw Error("hydropower_objective: empty trajectory");
    double total = 0.0;
    for (const auto& rec : traj.records) total += rec.energy;
    return total / static_cast<double>(traj.size());
}

inline double flood_excess_squared(double level, double h_bar) {
    const double excess = std::max(level - h_bar, 0.0);
    return excess * excess;
}

inline double flood_objective(const Trajectory& traj, double h_bar = kDefaultFloodThreshold) {
    if (traj.empty()) throw Error("flood_objective: empty trajectory");
    double total = 0.0;
    for (const auto& rec : traj.records) total += flood_excess_squared(rec.h_hanoi, h_bar);
    return total / static_cast<double>(traj.size());
}

inline ObjectivesReport evaluate(const Trajectory& traj, double h_bar = kDefaultFloodThreshold) {
    return {hydropower_objective(traj), flood_objective(traj, h_bar), traj.size()};
}

inline double scalarize(double J_H, double J_F, double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error("scalarize: alpha must lie in [0, 1]");
    return -alpha * J_H + (1.0 - alpha) * J_F;
}

/// Weights and units shared by every optimizer. Energy enters the
/// scalarized cost divided by `energy_unit` (kWh per cost unit), so that
/// averaging stage costs reproduces scalarize(J_H / energy_unit, J_F).
struct CostModel {
    double alpha = 0.05;
    double h_bar = kDefaultFloodThreshold;
    double energy_unit = 1e6;

    void validate() const {
        if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1]");
        if (!(energy_unit > 0.0)) throw ConfigError("energy_unit must be > 0");
    }

    double stage(double energy_kwh, double level_cm) const {
        return -alpha * (energy_kwh / energy_unit) + (1.0 - alpha) * flood_excess_squared(level_cm, h_bar);
    }

    double scalarized(const ObjectivesReport& r) const { return scalarize(r.J_H / energy_unit, r.J_F, alpha); }
};

/// Sum of stage costs accumulated from the last step backwards, which is
/// the order a backward Bellman recursion adds them in.
inline double trajectory_cost(const Trajectory& traj, const CostModel& cost) {
    double total = 0.0;
    for (auto it = traj.records.rbegin(); it != traj.records.rend(); ++it) {
        total = cost.stage(it->energy, it->h_hanoi) + total;
    }
    return total;
}

struct ObjectivePoint {
    std::string label;
    double J_H = 0.0;
    double J_F = 0.0;
};

/// p dominates q: no worse in both (max J_H, min J_F), strictly better in one.
inline bool dominates(const ObjectivePoint& p, const ObjectivePoint& q) {
    const bool no_worse = p.J_H >= q.J_H && p.J_F <= q.J_F;
    const bool better = p.J_H > q.J_H || p.J_F < q.J_F;
    return no_worse && better;
}

/// Non-dominated subset, in input order. Sorting by J_H descending lets a
/// single sweep decide dominance; duplicates are all kept.
inline std::vector<ObjectivePoint> pareto_filter(const std::vector<ObjectivePoint>& points) {
    if (points.empty()) throw Error("pareto_filter: empty input");
    std::vector<std::size_t> order(points.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (points[a].J_H != points[b].J_H) return points[a].J_H > points[b].J_H;
        return points[a].J_F < points[b].J_F;
    });

    std::vector<bool> keep(points.size(), false);
    double best_f_strictly_higher_h = INFINITY; // min J_F among points with larger J_H
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        const double h = points[order[i]].J_H;
        while (j < order.size() && points[order[j]].J_H == h) ++j;
        const double group_min_f = points[order[i]].J_F; // sorted ascending within the group
        for (std::size_t k = i; k < j; ++k) {
            const double f = points[order[k]].J_F;
            keep[order[k]] = f == group_min_f && f < best_f_strictly_higher_h;
        }
        best_f_strictly_higher_h = std::min(best_f_strictly_higher_h, group_min_f);
        i = j;
    }
    std::vector<ObjectivePoint> out;
    for (std::size_t k = 0; k < points.size(); ++k) {
        if (keep[k]) out.push_back(points[k]);
    }
    return out;
}

} // namespace rescontrol
