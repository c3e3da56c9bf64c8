#pragma once

// Discrete-time SISO transfer functions in z^-1 and their causal
// difference-equation evaluation.

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "rescontrol/error.hpp"
#include "rescontrol/json_util.hpp"

namespace rescontrol {

using Polynomial = std::vector<double>; ///< coefficients of z^0, z^-1, ...

inline Polynomial poly_mul(const Polynomial& a, const Polynomial& b) {
    if (a.empty() || b.empty()) return {};
    Polynomial out(a.size() + b.size() - 1, 0.0);
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (std::size_t j = 0; j < b.size(); ++j) out[i + j] += a[i] * b[j];
    }
    return out;
}

inline Polynomial poly_add(const Polynomial& a, const Polynomial& b) {
    Polynomial out(std::max(a.size(), b.size()), 0.0);
    for (std::size_t i = 0; i < a.size(); ++i) out[i] += a[i];
    for (std::size_t i = 0; i < b.size(); ++i) out[i] += b[i];
    return out;
}

inline Polynomial poly_scale(const Polynomial& a, double k) {
    Polynomial out = a;
    for (double& c : out) c *= k;
    return out;
}

/// B(z^-1) / A(z^-1).
struct LinearSISOModel {
    Polynomial num{1.0};
    Polynomial den{1.0};

    void validate() const {
        if (num.empty() || den.empty()) throw ConfigError("transfer function needs numerator and denominator");
        if (den.front() == 0.0) throw ConfigError("non-causal model: leading denominator coefficient is zero");
        for (double c : num) {
            if (!std::isfinite(c)) throw ConfigError("transfer function coefficients must be finite");
        }
        for (double c : den) {
            if (!std::isfinite(c)) throw ConfigError("transfer function coefficients must be finite");
        }
    }

    /// Number of leading zero numerator coefficients (pure delay).
    std::size_t delay() const {
        std::size_t d = 0;
        while (d < num.size() && num[d] == 0.0) ++d;
        return d;
    }

    double dc_gain() const {
        double b = 0.0, a = 0.0;
        for (double c : num) b += c;
        for (double c : den) a += c;
        return b / a;
    }
};

/// Causal evaluation with zero initial conditions; output length equals
/// input length.
inline std::vector<double> filter(const LinearSISOModel& model, std::span<const double> input) {
    model.validate();
    if (input.empty()) throw Error("filter: empty input");
    const auto& b = model.num;
    const auto& a = model.den;
    const double a0 = a.front();
    std::vector<double> y(input.size(), 0.0);
    for (std::size_t t = 0; t < input.size(); ++t) {
        double acc = 0.0;
        for (std::size_t k = 0; k < b.size() && k <= t; ++k) acc += b[k] * input[t - k];
        for (std::size_t k = 1; k < a.size() && k <= t; ++k) acc -= a[k] * y[t - k];
        y[t] = acc / a0;
    }
    return y;
}

inline std::vector<double> filter(const LinearSISOModel& model, const std::vector<double>& input) {
    return filter(model, std::span<const double>(input));
}

inline LinearSISOModel lti_from_json(JsonReader& r) {
    LinearSISOModel m;
    m.num = r.numbers("num");
    m.den = r.numbers("den");
    try {
        m.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(e.what(), r.path());
    }
    return m;
}

inline Json to_json(const LinearSISOModel& m) { return Json{{"num", m.num}, {"den", m.den}}; }

} // namespace rescontrol
