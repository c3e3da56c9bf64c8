#pragma once

// Virtual Reference Feedback Tuning of a PID controller
//   C(z, theta) = theta1 + theta2 / (1 - z^-1) + theta3 (1 - z^-1)
// from one input/output record and a reference model M.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rescontrol/error.hpp"
#include "rescontrol/hydrology.hpp"
#include "rescontrol/lti.hpp"
#include "rescontrol/reservoir.hpp"

namespace rescontrol {

struct PIDParams {
    double kp = 0.0; ///< theta1, proportional
    double ki = 0.0; ///< theta2, integral
    double kd = 0.0; ///< theta3, derivative

    void validate() const {
        if (!std::isfinite(kp) || !std::isfinite(ki) || !std::isfinite(kd)) {
            throw ConfigError("PID gains must be finite");
        }
    }

    /// C(z) = N(z^-1) / (1 - z^-1).
    LinearSISOModel transfer_function() const {
        return {{kp + ki + kd, -(kp + 2.0 * kd), kd}, {1.0, -1.0}};
    }
};

inline Json to_json(const PIDParams& p) { return Json{{"theta", {p.kp, p.ki, p.kd}}}; }

inline PIDParams pid_from_json(const Json& j, const std::string& path = "") {
    if (!j.is_object() || !j.contains("theta") || !j.at("theta").is_array() || j.at("theta").size() != 3) {
        throw ConfigError("expected {\"theta\": [kp, ki, kd]}", path);
    }
    const auto v = JsonReader::as_numbers(j.at("theta"), path + "/theta");
    PIDParams p{v[0], v[1], v[2]};
    p.validate();
    return p;
}

/// The reference model used by default: 0.2 z^-1 / (1 - 0.8 z^-1).
inline LinearSISOModel default_reference_model() { return {{0.0, 0.2}, {1.0, -0.8}}; }

struct VirtualReference {
    std::vector<double> r_bar;  ///< aligned with s[0 .. s.size() - trimmed)
    std::size_t trimmed = 0;    ///< trailing samples lost to the model's delay
};

/// r_bar = M^-1 s. M = z^-d B / A is inverted as the causal A / B applied
/// to s advanced by d samples, so the last d samples have no reference.
inline VirtualReference virtual_reference(const LinearSISOModel& M, std::span<const double> s) {
    M.validate();
    const std::size_t d = M.delay();
    if (d >= M.num.size()) throw Error("virtual_reference: reference model has a zero numerator");
    if (s.size() <= d) throw Error("virtual_reference: series shorter than the model delay");
    const LinearSISOModel inverse{M.den, Polynomial(M.num.begin() + static_cast<long>(d), M.num.end())};
    VirtualReference out;
    out.trimmed = d;
    out.r_bar = filter(inverse, s.subspan(d));
    return out;
}

struct VrftFit {
    PIDParams theta;
    double criterion = 0.0;    ///< mean squared residual over the fitted samples
    std::size_t samples = 0;
};

namespace detail {

inline const char* pid_basis_name(int k) {
    static const char* names[3] = {"proportional", "integral", "derivative"};
    return names[k];
}

} // namespace detail

/// The three PID basis responses to the virtual error (proportional,
/// integrated, differenced).
inline std::array<std::vector<double>, 3> pid_basis(std::span<const double> e) {
    std::array<std::vector<double>, 3> phi;
    for (auto& v : phi) v.resize(e.size());
    double integral = 0.0;
    double prev = 0.0;
    for (std::size_t t = 0; t < e.size(); ++t) {
        integral += e[t];
        phi[0][t] = e[t];
        phi[1][t] = integral;
        phi[2][t] = e[t] - prev;
        prev = e[t];
    }
    return phi;
}

/// Least-squares PID fit: theta = argmin (1/N) sum (u_t - C(z, theta) e_bar_t)^2
/// with e_bar = M^-1 s - s, after optional prefiltering of u and e_bar. The
/// first max(len(num), len(den)) samples are excluded as transient.
inline VrftFit fit_pid(std::span<const double> u, std::span<const double> s, const LinearSISOModel& M,
                       const std::optional<LinearSISOModel>& prefilter = std::nullopt) {
    if (u.size() != s.size()) throw Error("fit_pid: u and s have different lengths");
    const VirtualReference vr = virtual_reference(M, s);
    const std::size_t n = vr.r_bar.size();
    std::vector<double> e(n), target(u.begin(), u.begin() + static_cast<long>(n));
    for (std::size_t t = 0; t < n; ++t) e[t] = vr.r_bar[t] - s[t];

    auto phi = pid_basis(e);
    if (prefilter) {
        target = filter(*prefilter, target);
        for (auto& col : phi) col = filter(*prefilter, col);
    }
    const std::size_t skip = std::max(M.num.size(), M.den.size());
    if (n < skip + 3 + 1) throw Error("fit_pid: series too short for three regressors");
    const std::size_t rows = n - skip;

    Eigen::MatrixXd A(rows, 3);
    Eigen::VectorXd b(rows);
    for (std::size_t t = skip; t < n; ++t) {
        for (int k = 0; k < 3; ++k) A(t - skip, k) = phi[k][t];
        b(t - skip) = target[t];
    }
    // Unit-norm columns so the rank test does not depend on scale. The
    // three bases share the units of e, so a column that is rounding noise
    // next to the largest one counts as zero.
    Eigen::Vector3d norms = A.colwise().norm().transpose();
    for (int k = 0; k < 3; ++k) {
        if (!(norms(k) > 1e-12 * norms.maxCoeff())) {
            throw Error(std::string("fit_pid: rank-deficient regressor, ") + detail::pid_basis_name(k) +
                        " basis is identically zero");
        }
        A.col(k) /= norms(k);
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
    qr.setThreshold(1e-10);
    if (qr.rank() < 3) {
        // Name the basis best explained by the other two.
        int worst = 0;
        double worst_resid = INFINITY;
        for (int k = 0; k < 3; ++k) {
            Eigen::MatrixXd others(rows, 2);
            int c = 0;
            for (int j = 0; j < 3; ++j) {
                if (j != k) others.col(c++) = A.col(j);
            }
            const Eigen::VectorXd coef = others.colPivHouseholderQr().solve(A.col(k));
            const double resid = (A.col(k) - others * coef).norm();
            if (resid < worst_resid) {
                worst_resid = resid;
                worst = k;
            }
        }
        throw Error(std::string("fit_pid: rank-deficient regressor, ") + detail::pid_basis_name(worst) +
                    " basis is collinear with the others");
    }
    const Eigen::Vector3d x = qr.solve(b);
    VrftFit fit;
    fit.theta = {x(0) / norms(0), x(1) / norms(1), x(2) / norms(2)};
    fit.samples = rows;
    fit.criterion = (A * x - b).squaredNorm() / static_cast<double>(rows);
    return fit;
}

/// VRFT criterion at an arbitrary theta, on the same samples fit_pid uses.
inline double vrft_criterion(std::span<const double> u, std::span<const double> s, const LinearSISOModel& M,
                             const PIDParams& theta, const std::optional<LinearSISOModel>& prefilter = std::nullopt) {
    const VirtualReference vr = virtual_reference(M, s);
    const std::size_t n = vr.r_bar.size();
    std::vector<double> e(n), target(u.begin(), u.begin() + static_cast<long>(n));
    for (std::size_t t = 0; t < n; ++t) e[t] = vr.r_bar[t] - s[t];
    auto phi = pid_basis(e);
    if (prefilter) {
        target = filter(*prefilter, target);
        for (auto& col : phi) col = filter(*prefilter, col);
    }
    const std::size_t skip = std::max(M.num.size(), M.den.size());
    double total = 0.0;
    for (std::size_t t = skip; t < n; ++t) {
        const double r = target[t] - (theta.kp * phi[0][t] + theta.ki * phi[1][t] + theta.kd * phi[2][t]);
        total += r * r;
    }
    return total / static_cast<double>(n - skip);
}

struct AnnualCycle {
    std::vector<double> u;
    std::vector<double> s;
    std::vector<double> q_d;
};

/// Day-of-year means of the decision and storage across all years of the
/// trajectory, tiled to `length` samples starting at day-of-year 0.
inline AnnualCycle mean_annual_cycle(const Trajectory& traj, std::size_t length = kDaysPerYear) {
    if (traj.size() < static_cast<std::size_t>(kDaysPerYear)) {
        throw Error("mean_annual_cycle: trajectory shorter than one year");
    }
    std::vector<double> su(kDaysPerYear, 0.0), ss(kDaysPerYear, 0.0), sq(kDaysPerYear, 0.0);
    std::vector<double> count(kDaysPerYear, 0.0);
    for (std::size_t k = 0; k < traj.size(); ++k) {
        const int d = static_cast<int>((static_cast<std::size_t>(traj.start_day) + k) % kDaysPerYear);
        su[d] += traj.records[k].u;
        ss[d] += traj.records[k].s;
        sq[d] += traj.records[k].q_d;
        count[d] += 1.0;
    }
    AnnualCycle cycle;
    cycle.u.resize(length);
    cycle.s.resize(length);
    cycle.q_d.resize(length);
    for (std::size_t t = 0; t < length; ++t) {
        const std::size_t d = t % kDaysPerYear;
        cycle.u[t] = su[d] / count[d];
        cycle.s[t] = ss[d] / count[d];
        cycle.q_d[t] = sq[d] / count[d];
    }
    return cycle;
}

} // namespace rescontrol
