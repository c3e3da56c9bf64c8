#pragma once

// PID inner loop around the reservoir: nonlinear closed-loop simulation
// (release saturation included) and the linear model F that neglects the
// saturation (u = r), realized in state space for prediction.
//
// Time convention: at step t the storage s_t is observed, the controller
// emits u_t = C(z)(s_ref_t - s_t), and the inflow q_t over [t, t+1) gives
//   s_{t+1} = s_t + dt (q_t - u_t).

#include <Eigen/Dense>

#include <cmath>
#include <span>
#include <vector>

#include "rescontrol/error.hpp"
#include "rescontrol/hydrology.hpp"
#include "rescontrol/json_util.hpp"
#include "rescontrol/plant.hpp"
#include "rescontrol/reservoir.hpp"
#include "rescontrol/routing.hpp"
#include "rescontrol/vrft.hpp"

namespace rescontrol {

/// Normalization of storages (by `storage`) and flows (by `flow`).
struct Scaling {
    double storage = 1.0;
    double flow = 1.0;
    double seconds_per_step = 1.0;

    void validate() const {
        if (!(storage > 0.0) || !(flow > 0.0) || !(seconds_per_step > 0.0)) {
            throw ConfigError("scaling constants must be > 0");
        }
    }
    /// Mass-balance coefficient in scaled units.
    double ts() const { return seconds_per_step * flow / storage; }
};

/// Inner-loop state in physical units: storage, integrator (sum of past
/// errors) and previous error, all in m^3.
struct InnerState {
    double s = 0.0;
    double integral = 0.0;
    double prev_error = 0.0;
};

/// Realization of F with state x = [s_t, I_{t-1}, e_{t-1}], input
/// w = [s_ref_t, q_t], output y = [s_t, u_t]:
///   x_{t+1} = A x_t + B w_t,  y_t = C x_t + D w_t.
/// Matrices are stored scaled; `physical_*` return the unscaled ones.
struct StateSpaceModel {
    Eigen::Matrix3d A;
    Eigen::Matrix<double, 3, 2> B;
    Eigen::Matrix<double, 2, 3> C;
    Eigen::Matrix2d D;
    Scaling scaling;
    PIDParams pid;

    Eigen::Vector3d scale_state(const InnerState& x) const {
        return Eigen::Vector3d(x.s, x.integral, x.prev_error) / scaling.storage;
    }

    Eigen::Matrix3d physical_A() const { return A; }
    Eigen::Matrix<double, 3, 2> physical_B() const {
        Eigen::Matrix<double, 3, 2> b = B;
        b.col(1) *= scaling.storage / scaling.flow;
        return b;
    }
    Eigen::Matrix<double, 2, 3> physical_C() const {
        Eigen::Matrix<double, 2, 3> c = C;
        c.row(1) *= scaling.flow / scaling.storage;
        return c;
    }
    Eigen::Matrix2d physical_D() const {
        Eigen::Matrix2d d = D;
        d(0, 1) *= scaling.storage / scaling.flow;
        d(1, 0) *= scaling.flow / scaling.storage;
        return d;
    }
};

inline StateSpaceModel linearized_inner_loop(const PIDParams& pid, const Scaling& scaling) {
    pid.validate();
    scaling.validate();
    // Gains in scaled units: u/Q = (k S / Q) e/S.
    const double g = scaling.storage / scaling.flow;
    const double kp = pid.kp * g, ki = pid.ki * g, kd = pid.kd * g;
    const double k = kp + ki + kd;
    const double ts = scaling.ts();

    StateSpaceModel m;
    m.scaling = scaling;
    m.pid = pid;
    m.C << 1.0, 0.0, 0.0,
           -k, ki, -kd;
    m.D << 0.0, 0.0,
           k, 0.0;
    m.A << 1.0 + ts * k, -ts * ki, ts * kd,
           -1.0, 1.0, 0.0,
           -1.0, 0.0, 0.0;
    m.B << -ts * k, ts,
           1.0, 0.0,
           1.0, 0.0;
    return m;
}

struct Prediction {
    std::vector<double> s; ///< s_0 .. s_N (m^3)
    std::vector<double> u; ///< u_0 .. u_{N-1} (m^3/s)
    Eigen::Vector3d final_state; ///< scaled
};

/// Rollout of the realization over `s_ref.size()` steps in physical units.
inline Prediction predict(const StateSpaceModel& m, const InnerState& x0, std::span<const double> s_ref,
                          std::span<const double> q_d) {
    if (s_ref.empty()) throw Error("predict: horizon must be >= 1");
    if (q_d.size() < s_ref.size()) throw Error("predict: inflow forecast shorter than the horizon");
    const double S = m.scaling.storage;
    const double Q = m.scaling.flow;
    Prediction p;
    p.s.resize(s_ref.size() + 1);
    p.u.resize(s_ref.size());
    Eigen::Vector3d x = m.scale_state(x0);
    for (std::size_t k = 0; k < s_ref.size(); ++k) {
        const Eigen::Vector2d w(s_ref[k] / S, q_d[k] / Q);
        const Eigen::Vector2d y = m.C * x + m.D * w;
        p.s[k] = y(0) * S;
        p.u[k] = y(1) * Q;
        x = m.A * x + m.B * w;
    }
    p.s.back() = x(0) * S;
    p.final_state = x;
    return p;
}

struct InnerLoopOptions {
    /// Conditional integration: the integrator keeps its value on steps
    /// where the release is saturated.
    bool anti_windup = true;
};

/// PID in incremental form, with the integrator state held explicitly.
class PidController {
public:
    PidController(const PIDParams& pid, bool anti_windup, double integral = 0.0, double prev_error = 0.0)
        : pid_(pid), anti_windup_(anti_windup), integral_(integral), prev_error_(prev_error) {}

    double command(double error) const {
        return pid_.kp * error + pid_.ki * (integral_ + error) + pid_.kd * (error - prev_error_);
    }

    void commit(double error, bool saturated) {
        if (!(anti_windup_ && saturated)) integral_ += error;
        prev_error_ = error;
    }

    double integral() const { return integral_; }
    double prev_error() const { return prev_error_; }

private:
    PIDParams pid_;
    bool anti_windup_;
    double integral_;
    double prev_error_;
};

/// Reservoir closed by the PID, advanced one reference at a time.
class InnerLoop {
public:
    InnerLoop(const ReservoirSpec& spec, const RoutingModel& routing, const PIDParams& pid,
              const HydrologyTrace& trace, double s0, const InnerLoopOptions& opts = {})
        : plant_(spec, routing, trace, s0), pid_(pid, opts.anti_windup) {}

    const TrajectoryRecord& advance(double s_ref) {
        const double e = s_ref - plant_.state().s;
        const double u = pid_.command(e);
        const TrajectoryRecord& rec = plant_.advance(u);
        pid_.commit(e, rec.r != u);
        return rec;
    }

    InnerState state() const { return {plant_.state().s, pid_.integral(), pid_.prev_error()}; }
    const Plant& plant() const { return plant_; }
    bool done() const { return plant_.done(); }
    Trajectory release_trajectory() { return plant_.release_trajectory(); }

private:
    Plant plant_;
    PidController pid_;
};

inline Trajectory simulate_inner_loop(const ReservoirSpec& spec, const RoutingModel& routing, const PIDParams& pid,
                                      std::span<const double> s_ref, const HydrologyTrace& trace, double s0,
                                      const InnerLoopOptions& opts = {}) {
    trace.validate();
    if (s_ref.size() != trace.size()) throw Error("simulate_inner_loop: reference and trace lengths differ");
    InnerLoop loop(spec, routing, pid, trace, s0, opts);
    for (double r : s_ref) loop.advance(r);
    return loop.release_trajectory();
}

inline Json to_json(const StateSpaceModel& m) {
    auto mat = [](const auto& x) {
        Json rows = Json::array();
        for (int i = 0; i < x.rows(); ++i) {
            Json row = Json::array();
            for (int j = 0; j < x.cols(); ++j) row.push_back(x(i, j));
            rows.push_back(row);
        }
        return rows;
    };
    return Json{{"state", {"s", "integral", "prev_error"}},
                {"inputs", {"s_ref", "q_d"}},
                {"outputs", {"s", "u"}},
                {"scaling", {{"storage", m.scaling.storage}, {"flow", m.scaling.flow},
                             {"seconds_per_step", m.scaling.seconds_per_step}}},
                {"pid", to_json(m.pid)},
                {"scaled", {{"A", mat(m.A)}, {"B", mat(m.B)}, {"C", mat(m.C)}, {"D", mat(m.D)}}},
                {"physical",
                 {{"A", mat(m.physical_A())}, {"B", mat(m.physical_B())}, {"C", mat(m.physical_C())},
                  {"D", mat(m.physical_D())}}}};
}

} // namespace rescontrol
