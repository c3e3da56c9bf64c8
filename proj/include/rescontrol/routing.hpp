#pragma once

// Downstream routing surrogate: Hoa Binh release plus Thao and Lo flows,
// delayed by `lag` days, exponentially smoothed, then mapped to a stage
// at Hanoi through a power-law rating curve.

#include <cmath>
#include <deque>
#include <span>
#include <string>

#include "rescontrol/error.hpp"
#include "rescontrol/json_util.hpp"

namespace rescontrol {

/// Seam for alternative routing models (e.g. a learned one).
class DownstreamModel {
public:
    virtual ~DownstreamModel() = default;
    /// Level (cm) at index t from explicit histories starting at index 0.
    virtual double hanoi_level(std::span<const double> r, std::span<const double> q_t, std::span<const double> q_l,
                               std::size_t t) const = 0;
    /// Memoryless stage-discharge relation for a constant total flow.
    virtual double steady_level(double total_flow) const = 0;
};

struct RoutingModel : DownstreamModel {
    int lag = 1;
    double attenuation = 0.0;
    double rating_scale = 1.0;    ///< cm per (m^3/s)^exponent
    double rating_exponent = 1.0;

    RoutingModel() = default;
    RoutingModel(int lag_days, double a, double scale, double exponent)
        : lag(lag_days), attenuation(a), rating_scale(scale), rating_exponent(exponent) {
        validate();
    }

    void validate() const {
        if (lag < 0) throw ConfigError("routing lag must be >= 0");
        if (!(attenuation >= 0.0 && attenuation < 1.0)) throw ConfigError("attenuation must lie in [0, 1)");
        if (!(rating_scale >= 0.0)) throw ConfigError("rating_scale must be >= 0");
        if (!(rating_exponent > 0.0)) throw ConfigError("rating_exponent must be > 0");
    }

    double rating(double flow) const { return flow <= 0.0 ? 0.0 : rating_scale * std::pow(flow, rating_exponent); }

    double steady_level(double total_flow) const override { return rating(total_flow); }

    /// The smoothing recursion starts at index `lag` with Q~ = Q; levels
    /// before that would need flows that are not in the history.
    double hanoi_level(std::span<const double> r, std::span<const double> q_t, std::span<const double> q_l,
                       std::size_t t) const override {
        const std::size_t ulag = static_cast<std::size_t>(lag);
        if (t < ulag) {
            throw SolverError("hanoi_level: index " + std::to_string(t) + " needs history before index 0 (lag " +
                              std::to_string(lag) + ")");
        }
        if (r.size() <= t - ulag || q_t.size() <= t - ulag || q_l.size() <= t - ulag) {
            throw SolverError("hanoi_level: history shorter than t - lag");
        }
        double smoothed = r[0] + q_t[0] + q_l[0];
        for (std::size_t k = ulag + 1; k <= t; ++k) {
            const std::size_t i = k - ulag;
            smoothed = attenuation * smoothed + (1.0 - attenuation) * (r[i] + q_t[i] + q_l[i]);
        }
        return rating(smoothed);
    }
};

/// Sequential form of `RoutingModel::hanoi_level` for simulation: keeps the
/// lag buffer and the smoothed flow. The pre-history is an explicit
/// constant flow, not zero padding.
class RoutingFilter {
public:
    RoutingFilter(const RoutingModel& model, double steady_total_flow)
        : model_(&model), smoothed_(steady_total_flow),
          pending_(static_cast<std::size_t>(model.lag), steady_total_flow) {}

    /// Feeds the total flow leaving the upstream section today and returns
    /// today's downstream level.
    double push(double total_flow) {
        double arriving = total_flow;
        if (!pending_.empty()) {
            pending_.push_back(total_flow);
            arriving = pending_.front();
            pending_.pop_front();
        }
        smoothed_ = model_->attenuation * smoothed_ + (1.0 - model_->attenuation) * arriving;
        return model_->rating(smoothed_);
    }

    double smoothed_flow() const { return smoothed_; }

private:
    const RoutingModel* model_;
    double smoothed_;
    std::deque<double> pending_;
};

inline RoutingModel routing_model_from_json(JsonReader& r) {
    RoutingModel m;
    m.lag = static_cast<int>(r.integer("lag"));
    m.attenuation = r.number("attenuation");
    m.rating_scale = r.number("rating_scale");
    m.rating_exponent = r.number("rating_exponent");
    try {
        m.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(e.what(), r.path());
    }
    return m;
}

} // namespace rescontrol
