#pragma once

// Reservoir mass balance, release saturation and the characteristic
// curves that turn storage and release into hydraulic head and energy.

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "rescontrol/curves.hpp"
#include "rescontrol/error.hpp"
#include "rescontrol/json_util.hpp"

namespace rescontrol {

inline constexpr double kGravity = 9.81;       // m/s^2
inline constexpr double kWaterDensity = 1000.; // kg/m^3

struct ReleaseBounds {
    double r_min = 0.0;
    double r_max = 0.0;
};

/// Minimum/maximum release known only on a rectilinear (storage x inflow)
/// grid. Off-grid queries average the two nearest nodes, weighted by
/// inverse distance, after normalizing both axes by their grid range.
class ReleaseTable {
public:
    ReleaseTable() = default;
    ReleaseTable(std::vector<double> storage, std::vector<double> inflow, std::vector<double> r_min,
                 std::vector<double> r_max)
        : storage_(std::move(storage)), inflow_(std::move(inflow)), r_min_(std::move(r_min)),
          r_max_(std::move(r_max)) {
        validate();
    }

    void validate() const {
        if (storage_.empty() || inflow_.empty()) throw ConfigError("release table is empty");
        if (storage_.size() * inflow_.size() < 2) throw ConfigError("release table needs at least 2 nodes");
        auto increasing = [](const std::vector<double>& v) {
            for (std::size_t i = 1; i < v.size(); ++i) {
                if (!(v[i] > v[i - 1])) return false;
            }
            return true;
        };
        if (!increasing(storage_) || !increasing(inflow_)) {
            throw ConfigError("release table axes must be strictly increasing");
        }
        const std::size_t n = storage_.size() * inflow_.size();
        if (r_min_.size() != n || r_max_.size() != n) throw ConfigError("release table size mismatch");
        for (std::size_t k = 0; k < n; ++k) {
            if (!(r_min_[k] >= 0.0) || !(r_max_[k] >= r_min_[k])) {
                throw ConfigError("release table node " + std::to_string(k) + " violates 0 <= r_min <= r_max");
            }
        }
    }

    bool empty() const { return r_min_.empty(); }
    const std::vector<double>& storage() const { return storage_; }
    const std::vector<double>& inflow() const { return inflow_; }
    ReleaseBounds node(std::size_t i, std::size_t j) const {
        const std::size_t k = i * inflow_.size() + j;
        return {r_min_[k], r_max_[k]};
    }

    ReleaseBounds lookup(double s, double q) const {
        if (empty()) throw ConfigError("release table is empty");
        const std::size_t ns = storage_.size();
        const std::size_t nq = inflow_.size();
        const double s_range = ns > 1 ? storage_.back() - storage_.front() : 1.0;
        const double q_range = nq > 1 ? inflow_.back() - inflow_.front() : 1.0;
        s = std::clamp(s, storage_.front(), storage_.back());
        q = std::clamp(q, inflow_.front(), inflow_.back());

        const Axis as = nearest_two(storage_, s, s_range);
        const Axis aq = nearest_two(inflow_, q, q_range);

        // Nearest node is (as.first, aq.first). The second nearest differs
        // from it along exactly one axis.
        struct Candidate {
            double d2;
            std::size_t flat;
        };
        const std::size_t best = as.first * nq + aq.first;
        const double best_d2 = as.d_first * as.d_first + aq.d_first * aq.d_first;
        Candidate second{std::numeric_limits<double>::infinity(), 0};
        auto consider = [&](double d2, std::size_t flat) {
            if (d2 < second.d2 || (d2 == second.d2 && flat < second.flat)) second = {d2, flat};
        };
        if (as.has_second) consider(as.d_second * as.d_second + aq.d_first * aq.d_first, as.second * nq + aq.first);
        if (aq.has_second) consider(as.d_first * as.d_first + aq.d_second * aq.d_second, as.first * nq + aq.second);

        const double d1 = std::sqrt(best_d2);
        const double d2 = std::sqrt(second.d2);
        if (d1 == 0.0 || !std::isfinite(d2)) return {r_min_[best], r_max_[best]};
        const double w1 = d2 / (d1 + d2);
        const double w2 = d1 / (d1 + d2);
        return {w1 * r_min_[best] + w2 * r_min_[second.flat], w1 * r_max_[best] + w2 * r_max_[second.flat]};
    }

private:
    struct Axis {
        std::size_t first = 0;
        std::size_t second = 0;
        double d_first = 0.0;
        double d_second = 0.0;
        bool has_second = false;
    };

    // Nearest and second-nearest node along one sorted axis; ties go to the
    // lower index.
    static Axis nearest_two(const std::vector<double>& nodes, double x, double range) {
        Axis a;
        const std::size_t n = nodes.size();
        std::size_t hi = static_cast<std::size_t>(std::lower_bound(nodes.begin(), nodes.end(), x) - nodes.begin());
        if (hi >= n) hi = n - 1;
        std::size_t lo = hi > 0 ? hi - 1 : 0;
        auto dist = [&](std::size_t i) { return std::abs(x - nodes[i]) / range; };
        if (hi == lo) {
            a.first = lo;
        } else {
            a.first = dist(lo) <= dist(hi) ? lo : hi;
        }
        a.d_first = dist(a.first);
        if (n < 2) return a;
        // Second nearest is adjacent to the first.
        std::size_t cand_lo = a.first > 0 ? a.first - 1 : a.first;
        std::size_t cand_hi = a.first + 1 < n ? a.first + 1 : a.first;
        if (cand_lo == a.first) {
            a.second = cand_hi;
        } else if (cand_hi == a.first) {
            a.second = cand_lo;
        } else {
            a.second = dist(cand_lo) <= dist(cand_hi) ? cand_lo : cand_hi;
        }
        a.d_second = dist(a.second);
        a.has_second = true;
        return a;
    }

    std::vector<double> storage_;
    std::vector<double> inflow_;
    std::vector<double> r_min_;
    std::vector<double> r_max_;
};

struct ReservoirSpec {
    double s_min = 0.0; ///< m^3
    double s_max = 0.0; ///< m^3
    ReleaseTable release_table;
    PiecewiseLinear level_of_storage;      ///< m^3 -> m
    PiecewiseLinear tailwater_of_release;  ///< m^3/s -> m
    double q_turb_max = 0.0;               ///< m^3/s
    double eta = 0.9;
    std::optional<PiecewiseLinear> eta_of_head;
    double seconds_per_step = 86400.0;

    void validate() const {
        if (!(s_min < s_max)) throw ConfigError("s_min must be < s_max");
        if (!(q_turb_max > 0.0)) throw ConfigError("q_turb_max must be > 0");
        if (!(eta > 0.0 && eta <= 1.0)) throw ConfigError("eta must lie in (0, 1]");
        if (!(seconds_per_step > 0.0)) throw ConfigError("seconds_per_step must be > 0");
        release_table.validate();
        if (level_of_storage.empty() || tailwater_of_release.empty()) {
            throw ConfigError("characteristic curves are required");
        }
        if (!level_of_storage.strictly_increasing()) {
            throw ConfigError("level_of_storage must be strictly increasing");
        }
        if (!tailwater_of_release.nondecreasing()) {
            throw ConfigError("tailwater_of_release must be monotone");
        }
        if (eta_of_head) {
            for (double v : eta_of_head->ys()) {
                if (!(v > 0.0 && v <= 1.0)) throw ConfigError("eta_of_head values must lie in (0, 1]");
            }
        }
    }

    double efficiency(double head) const { return eta_of_head ? (*eta_of_head)(head) : eta; }
};

inline ReleaseBounds release_bounds(const ReservoirSpec& spec, double s, double q_d) {
    return spec.release_table.lookup(s, q_d);
}

/// The release function f: the decision saturated to the feasible range.
inline double apply_release(const ReservoirSpec& spec, double s, double u, double q_d) {
    const ReleaseBounds b = release_bounds(spec, s, q_d);
    return std::clamp(u, b.r_min, b.r_max);
}

struct ReservoirState {
    long t = 0;
    double s = 0.0;
};

struct StepResult {
    ReservoirState next;
    double release = 0.0;
    bool negative_storage = false; ///< diagnostic, the storage is not altered
};

/// Next storage from the mass balance; the only place it is computed.
inline double mass_balance(double s, double q_d, double r, double seconds_per_step) {
    return s + (q_d - r) * seconds_per_step;
}

inline StepResult step(const ReservoirSpec& spec, const ReservoirState& state, double u, double q_d) {
    StepResult out;
    out.release = apply_release(spec, state.s, u, q_d);
    out.next.t = state.t + 1;
    out.next.s = mass_balance(state.s, q_d, out.release, spec.seconds_per_step);
    out.negative_storage = out.next.s < 0.0;
    return out;
}

inline double hydraulic_head(const ReservoirSpec& spec, double s, double r) {
    return std::max(0.0, spec.level_of_storage(s) - spec.tailwater_of_release(std::max(r, 0.0)));
}

/// Daily energy (kWh/day): power in MW from eta g rho head q_turb 1e-6,
/// times 24 h and 1000 kW/MW.
inline double energy_production(const ReservoirSpec& spec, double head, double r) {
    if (head <= 0.0 || r <= 0.0) return 0.0;
    const double q_turb = std::min(r, spec.q_turb_max);
    const double megawatts = spec.efficiency(head) * kGravity * kWaterDensity * head * q_turb * 1e-6;
    return megawatts * 24.0 * 1000.0;
}

/// Energy of releasing r from storage s over one step.
inline double step_energy(const ReservoirSpec& spec, double s, double r) {
    return energy_production(spec, hydraulic_head(spec, s, r), r);
}

struct TrajectoryRecord {
    long t = 0;
    double s = 0.0;       ///< storage at the start of the step
    double u = 0.0;       ///< release decision
    double r = 0.0;       ///< actual release over the step
    double q_d = 0.0;     ///< inflow over the step
    double h_hanoi = 0.0; ///< downstream level for the step (cm)
    double energy = 0.0;  ///< kWh/day
};

struct Trajectory {
    int start_day = 0;
    std::vector<TrajectoryRecord> records;
    double final_storage = 0.0;
    std::size_t negative_storage_events = 0;

    std::size_t size() const { return records.size(); }
    bool empty() const { return records.empty(); }
    double storage_after(std::size_t k) const {
        return k + 1 < records.size() ? records[k + 1].s : final_storage;
    }
};

inline void write_trajectory(std::ostream& out, const Trajectory& traj) {
    out << "t,s,u,r,q_d,h_hanoi,energy\n";
    out << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (const auto& rec : traj.records) {
        out << rec.t << ',' << rec.s << ',' << rec.u << ',' << rec.r << ',' << rec.q_d << ',' << rec.h_hanoi << ','
            << rec.energy << '\n';
    }
}

inline ReservoirSpec reservoir_spec_from_json(JsonReader& r) {
    ReservoirSpec spec;
    spec.s_min = r.number("s_min");
    spec.s_max = r.number("s_max");
    spec.q_turb_max = r.number("q_turb_max");
    spec.eta = r.number("eta");
    spec.seconds_per_step = r.number_or("seconds_per_step", 86400.0);
    {
        JsonReader t = r.section("release_table");
        auto storage = t.numbers("storage");
        auto inflow = t.numbers("inflow");
        auto flatten = [&](const std::string& key) {
            const auto rows = t.matrix(key);
            if (rows.size() != storage.size()) {
                throw ConfigError("expected one row per storage node", t.child_path(key));
            }
            std::vector<double> flat;
            for (std::size_t i = 0; i < rows.size(); ++i) {
                if (rows[i].size() != inflow.size()) {
                    throw ConfigError("expected one value per inflow node",
                                      t.child_path(key) + "/" + std::to_string(i));
                }
                flat.insert(flat.end(), rows[i].begin(), rows[i].end());
            }
            return flat;
        };
        auto rmin = flatten("r_min");
        auto rmax = flatten("r_max");
        t.finish();
        try {
            spec.release_table = ReleaseTable(std::move(storage), std::move(inflow), std::move(rmin), std::move(rmax));
        } catch (const ConfigError& e) {
            throw ConfigError(e.what(), t.path());
        }
    }
    auto curve = [&](const std::string& key, const char* xk, const char* yk) {
        JsonReader c = r.section(key);
        auto xs = c.numbers(xk);
        auto ys = c.numbers(yk);
        c.finish();
        try {
            return PiecewiseLinear(std::move(xs), std::move(ys));
        } catch (const ConfigError& e) {
            throw ConfigError(e.what(), c.path());
        }
    };
    spec.level_of_storage = curve("level_of_storage", "storage", "level");
    spec.tailwater_of_release = curve("tailwater_of_release", "release", "level");
    if (r.has("eta_of_head")) spec.eta_of_head = curve("eta_of_head", "head", "eta");
    try {
        spec.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(e.what(), r.path());
    }
    return spec;
}

} // namespace rescontrol
