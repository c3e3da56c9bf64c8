#pragma once

// Daily inflow series for the three rivers (Da, Thao, Lo): synthetic
// generation, CSV ingest, and per-day scenario ensembles for SDP.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "rescontrol/error.hpp"
#include "rescontrol/json_util.hpp"

namespace rescontrol {

inline constexpr int kDaysPerYear = 365;

/// One day of disturbances: reservoir inflow q_d and the two tributaries.
struct Inflow {
    double q_d = 0.0;
    double q_t = 0.0;
    double q_l = 0.0;
};

struct HydrologyTrace {
    int start_day = 0; ///< day-of-year of index 0
    std::vector<double> q_d;
    std::vector<double> q_t;
    std::vector<double> q_l;

    std::size_t size() const { return q_d.size(); }
    Inflow at(std::size_t t) const { return {q_d[t], q_t[t], q_l[t]}; }
    int day_of_year(std::size_t t) const {
        return static_cast<int>((static_cast<std::size_t>(start_day) + t) % kDaysPerYear);
    }

    void validate() const {
        if (q_d.empty()) throw ConfigError("hydrology trace is empty");
        if (q_t.size() != q_d.size() || q_l.size() != q_d.size()) {
            throw ConfigError("hydrology trace series have different lengths");
        }
        if (start_day < 0 || start_day >= kDaysPerYear) {
            throw ConfigError("hydrology trace start_day outside [0, 365)");
        }
        for (std::size_t t = 0; t < size(); ++t) {
            if (!(q_d[t] >= 0.0) || !(q_t[t] >= 0.0) || !(q_l[t] >= 0.0)) {
                throw ConfigError("negative or non-finite flow at index " + std::to_string(t));
            }
        }
    }

    HydrologyTrace slice(std::size_t begin, std::size_t n) const {
        if (begin + n > size()) throw ConfigError("trace slice out of range");
        HydrologyTrace out;
        out.start_day = day_of_year(begin);
        out.q_d.assign(q_d.begin() + begin, q_d.begin() + begin + n);
        out.q_t.assign(q_t.begin() + begin, q_t.begin() + begin + n);
        out.q_l.assign(q_l.begin() + begin, q_l.begin() + begin + n);
        return out;
    }
};

/// Seasonal lognormal AR(1) generator. Log-flows of each river follow
///   x_t = mu(d) + sigma(d) z_t,  z_t = rho z_{t-1} + sqrt(1 - rho^2) L xi_t,
/// with L the Cholesky factor of the spatial correlation R, so every day's
/// marginal is N(mu(d), sigma(d)^2) and rivers are correlated through R.
struct InflowModel {
    std::array<std::vector<double>, 3> mu;    ///< per river, 365 log-means
    std::array<std::vector<double>, 3> sigma; ///< per river, 365 log-stds
    double rho_time = 0.0;
    Eigen::Matrix3d correlation = Eigen::Matrix3d::Identity();
    std::uint64_t seed = 0;

    void validate() const {
        for (int k = 0; k < 3; ++k) {
            if (mu[k].size() != kDaysPerYear || sigma[k].size() != kDaysPerYear) {
                throw ConfigError("mu and sigma need 365 values per river");
            }
            for (int d = 0; d < kDaysPerYear; ++d) {
                if (!std::isfinite(mu[k][d])) throw ConfigError("mu must be finite");
                if (!(sigma[k][d] >= 0.0)) throw ConfigError("sigma must be >= 0");
            }
        }
        if (!(rho_time >= 0.0 && rho_time < 1.0)) throw ConfigError("rho_time must lie in [0, 1)");
        cholesky();
    }

    /// Lower Cholesky factor of the spatial correlation; rejects non-SPD input.
    Eigen::Matrix3d cholesky() const {
        for (int i = 0; i < 3; ++i) {
            if (std::abs(correlation(i, i) - 1.0) > 1e-12) {
                throw ConfigError("correlation matrix must have a unit diagonal");
            }
            for (int j = 0; j < 3; ++j) {
                if (std::abs(correlation(i, j) - correlation(j, i)) > 1e-12) {
                    throw ConfigError("correlation matrix must be symmetric");
                }
            }
        }
        Eigen::LLT<Eigen::Matrix3d> llt(correlation);
        if (llt.info() != Eigen::Success) {
            throw ConfigError("correlation matrix is not positive definite");
        }
        const Eigen::Matrix3d l = llt.matrixL();
        for (int i = 0; i < 3; ++i) {
            if (!(l(i, i) > 0.0)) throw ConfigError("correlation matrix is not positive definite");
        }
        return l;
    }

    /// Copy of the model with `delta` added to every log-mean.
    InflowModel shifted(const std::array<std::vector<double>, 3>& delta) const {
        InflowModel out = *this;
        for (int k = 0; k < 3; ++k) {
            if (delta[k].size() != kDaysPerYear) throw ConfigError("mu shift needs 365 values per river");
            for (int d = 0; d < kDaysPerYear; ++d) out.mu[k][d] += delta[k][d];
        }
        return out;
    }
};

/// Per-day scenario set: `scenarios` equally or unequally weighted triples
/// for every day-of-year.
struct DisturbanceEnsemble {
    std::size_t scenarios = 0;
    std::vector<Inflow> samples;  ///< [day * scenarios + j]
    std::vector<double> weights;  ///< [day * scenarios + j]

    const Inflow& sample(int day, std::size_t j) const { return samples[day * scenarios + j]; }
    double weight(int day, std::size_t j) const { return weights[day * scenarios + j]; }

    void validate() const {
        if (scenarios < 1) throw ConfigError("ensemble needs at least one scenario");
        if (samples.size() != scenarios * kDaysPerYear || weights.size() != samples.size()) {
            throw ConfigError("ensemble must cover all 365 days");
        }
        for (int d = 0; d < kDaysPerYear; ++d) {
            double total = 0.0;
            for (std::size_t j = 0; j < scenarios; ++j) {
                if (!(weight(d, j) >= 0.0)) throw ConfigError("ensemble weights must be >= 0");
                total += weight(d, j);
            }
            if (std::abs(total - 1.0) > 1e-12) throw ConfigError("ensemble weights must sum to 1");
        }
    }
};

namespace detail {

inline std::array<double, 3> correlated_normals(std::mt19937_64& rng, const Eigen::Matrix3d& l) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::Vector3d xi;
    for (int k = 0; k < 3; ++k) xi(k) = normal(rng);
    const Eigen::Vector3d z = l * xi;
    return {z(0), z(1), z(2)};
}

} // namespace detail

inline HydrologyTrace generate_trace(const InflowModel& model, std::size_t n_days, int start_day = 0) {
    if (n_days < 1) throw ConfigError("n_days must be >= 1");
    model.validate();
    const Eigen::Matrix3d l = model.cholesky();
    std::mt19937_64 rng(model.seed);
    const double innovation = std::sqrt(1.0 - model.rho_time * model.rho_time);

    HydrologyTrace trace;
    trace.start_day = start_day % kDaysPerYear;
    trace.q_d.resize(n_days);
    trace.q_t.resize(n_days);
    trace.q_l.resize(n_days);
    std::array<std::vector<double>*, 3> out{&trace.q_d, &trace.q_t, &trace.q_l};

    std::array<double, 3> z = detail::correlated_normals(rng, l);
    for (std::size_t t = 0; t < n_days; ++t) {
        if (t > 0) {
            const auto eta = detail::correlated_normals(rng, l);
            for (int k = 0; k < 3; ++k) z[k] = model.rho_time * z[k] + innovation * eta[k];
        }
        const int d = trace.day_of_year(t);
        for (int k = 0; k < 3; ++k) {
            (*out[k])[t] = std::exp(model.mu[k][d] + model.sigma[k][d] * z[k]);
        }
    }
    return trace;
}

/// Parses `day,q_d,q_t,q_l`. Days must be consecutive; the first row's day
/// fixes the calendar offset.
inline HydrologyTrace load_trace(std::istream& in) {
    std::string line;
    std::size_t line_no = 0;
    if (!std::getline(in, line)) throw ParseError("missing header", 1);
    ++line_no;
    auto strip = [](std::string& s) {
        while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.pop_back();
    };
    strip(line);
    if (line != "day,q_d,q_t,q_l") throw ParseError("expected header 'day,q_d,q_t,q_l'", line_no);

    HydrologyTrace trace;
    long first_day = 0;
    while (std::getline(in, line)) {
        ++line_no;
        strip(line);
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != 4) {
            throw ParseError("expected 4 columns, found " + std::to_string(cells.size()), line_no);
        }
        auto parse = [&](const std::string& s, const char* name) {
            std::size_t used = 0;
            double v = 0.0;
            try {
                v = std::stod(s, &used);
            } catch (const std::exception&) {
                throw ParseError(std::string("non-numeric ") + name + " '" + s + "'", line_no);
            }
            if (used != s.size() || !std::isfinite(v)) {
                throw ParseError(std::string("non-numeric ") + name + " '" + s + "'", line_no);
            }
            return v;
        };
        const double day = parse(cells[0], "day");
        if (day != std::floor(day) || day < 0) throw ParseError("day must be a non-negative integer", line_no);
        const long iday = static_cast<long>(day);
        if (trace.q_d.empty()) {
            first_day = iday;
            trace.start_day = static_cast<int>(iday % kDaysPerYear);
        } else if (iday != first_day + static_cast<long>(trace.q_d.size())) {
            throw ParseError("days must be consecutive", line_no);
        }
        const double qd = parse(cells[1], "q_d");
        const double qt = parse(cells[2], "q_t");
        const double ql = parse(cells[3], "q_l");
        if (qd < 0 || qt < 0 || ql < 0) throw ParseError("negative flow", line_no);
        trace.q_d.push_back(qd);
        trace.q_t.push_back(qt);
        trace.q_l.push_back(ql);
    }
    if (trace.q_d.empty()) throw ParseError("no data rows", line_no);
    return trace;
}

inline void write_trace(std::ostream& out, const HydrologyTrace& trace) {
    out << "day,q_d,q_t,q_l\n";
    out << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (std::size_t t = 0; t < trace.size(); ++t) {
        out << (static_cast<std::size_t>(trace.start_day) + t) << ',' << trace.q_d[t] << ','
            << trace.q_t[t] << ',' << trace.q_l[t] << '\n';
    }
}

/// K equally weighted samples of each day's marginal. Temporal correlation
/// is dropped: every (day, scenario) draw is independent.
inline DisturbanceEnsemble build_ensemble(const InflowModel& model, std::size_t scenarios_per_day) {
    if (scenarios_per_day < 1) throw ConfigError("scenarios_per_day must be >= 1");
    model.validate();
    const Eigen::Matrix3d l = model.cholesky();
    std::mt19937_64 rng(model.seed ^ 0x9e3779b97f4a7c15ULL);

    DisturbanceEnsemble ens;
    ens.scenarios = scenarios_per_day;
    ens.samples.resize(scenarios_per_day * kDaysPerYear);
    ens.weights.assign(ens.samples.size(), 1.0 / static_cast<double>(scenarios_per_day));
    for (int d = 0; d < kDaysPerYear; ++d) {
        for (std::size_t j = 0; j < scenarios_per_day; ++j) {
            const auto z = detail::correlated_normals(rng, l);
            Inflow& q = ens.samples[d * scenarios_per_day + j];
            q.q_d = std::exp(model.mu[0][d] + model.sigma[0][d] * z[0]);
            q.q_t = std::exp(model.mu[1][d] + model.sigma[1][d] * z[1]);
            q.q_l = std::exp(model.mu[2][d] + model.sigma[2][d] * z[2]);
        }
    }
    return ens;
}

/// Empirical ensemble: every complete year of the trace is one equally
/// weighted scenario. A one-year trace gives the degenerate K = 1 ensemble.
inline DisturbanceEnsemble ensemble_from_trace(const HydrologyTrace& trace) {
    trace.validate();
    const std::size_t years = trace.size() / kDaysPerYear;
    if (years < 1) throw ConfigError("ensemble_from_trace needs at least one full year");
    DisturbanceEnsemble ens;
    ens.scenarios = years;
    ens.samples.resize(years * kDaysPerYear);
    ens.weights.assign(ens.samples.size(), 1.0 / static_cast<double>(years));
    for (std::size_t y = 0; y < years; ++y) {
        for (int k = 0; k < kDaysPerYear; ++k) {
            const std::size_t t = y * kDaysPerYear + k;
            ens.samples[trace.day_of_year(t) * years + y] = trace.at(t);
        }
    }
    return ens;
}

inline InflowModel inflow_model_from_json(JsonReader& r) {
    InflowModel m;
    const char* rivers[3] = {"da", "thao", "lo"};
    JsonReader mu = r.section("mu");
    JsonReader sigma = r.section("sigma");
    for (int k = 0; k < 3; ++k) {
        m.mu[k] = mu.numbers(rivers[k]);
        m.sigma[k] = sigma.numbers(rivers[k]);
        if (m.mu[k].size() != kDaysPerYear) throw ConfigError("expected 365 values", mu.child_path(rivers[k]));
        if (m.sigma[k].size() != kDaysPerYear) {
            throw ConfigError("expected 365 values", sigma.child_path(rivers[k]));
        }
    }
    mu.finish();
    sigma.finish();
    m.rho_time = r.number("rho_time");
    const auto rows = r.matrix("R");
    if (rows.size() != 3) throw ConfigError("expected a 3x3 matrix", r.child_path("R"));
    for (int i = 0; i < 3; ++i) {
        if (rows[i].size() != 3) throw ConfigError("expected a 3x3 matrix", r.child_path("R"));
        for (int j = 0; j < 3; ++j) m.correlation(i, j) = rows[i][j];
    }
    const long seed = r.integer("seed");
    if (seed < 0) throw ConfigError("seed must be >= 0", r.child_path("seed"));
    m.seed = static_cast<std::uint64_t>(seed);
    try {
        m.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(e.what(), r.path());
    }
    return m;
}

} // namespace rescontrol
