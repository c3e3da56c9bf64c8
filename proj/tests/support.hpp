#pragma once

// Small synthetic reservoirs shared by the unit tests.

#include <string>
#include <vector>

#include "rescontrol/config.hpp"
#include "rescontrol/reservoir.hpp"

namespace testing_support {

using namespace rescontrol;

/// Release table with r_min = lo and r_max = hi everywhere.
inline ReleaseTable flat_table(double lo, double hi, double s_lo = 0.0, double s_hi = 1e11) {
    return ReleaseTable({s_lo, s_hi}, {0.0, 1e6}, {lo, lo, lo, lo}, {hi, hi, hi, hi});
}

/// A reservoir with linear curves, no physical release limits to speak of.
inline ReservoirSpec wide_spec(double dt = 86400.0) {
    ReservoirSpec spec;
    spec.s_min = 1e9;
    spec.s_max = 9e9;
    spec.release_table = flat_table(0.0, 1e6);
    spec.level_of_storage = PiecewiseLinear({0.0, 1e10}, {50.0, 150.0});
    spec.tailwater_of_release = PiecewiseLinear({0.0, 1e4}, {10.0, 20.0});
    spec.q_turb_max = 2000.0;
    spec.eta = 0.9;
    spec.seconds_per_step = dt;
    spec.validate();
    return spec;
}

inline HydrologyTrace constant_trace(std::size_t n, double q_d, double q_t = 0.0, double q_l = 0.0) {
    HydrologyTrace tr;
    tr.q_d.assign(n, q_d);
    tr.q_t.assign(n, q_t);
    tr.q_l.assign(n, q_l);
    return tr;
}

inline const AppConfig& default_config() {
    static const AppConfig cfg = load_config(RESCONTROL_DEFAULT_CONFIG);
    return cfg;
}

} // namespace testing_support
