#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "rescontrol/error.hpp"

namespace rescontrol {

/// Piecewise-linear curve with linear extrapolation beyond the end nodes.
class PiecewiseLinear {
public:
    PiecewiseLinear() = default;
    PiecewiseLinear(std::vector<double> xs, std::vector<double> ys) : xs_(std::move(xs)), ys_(std::move(ys)) {
        if (xs_.size() < 2 || xs_.size() != ys_.size()) {
            throw ConfigError("piecewise-linear curve needs >= 2 matching nodes");
        }
        for (std::size_t i = 1; i < xs_.size(); ++i) {
            if (!(xs_[i] > xs_[i - 1])) throw ConfigError("curve abscissae must be strictly increasing");
        }
    }

    double operator()(double x) const {
        const std::size_t n = xs_.size();
        std::size_t i;
        if (x <= xs_[1]) {
            i = 0;
        } else if (x >= xs_[n - 2]) {
            i = n - 2;
        } else {
            i = static_cast<std::size_t>(std::upper_bound(xs_.begin(), xs_.end(), x) - xs_.begin()) - 1;
        }
        const double w = (x - xs_[i]) / (xs_[i + 1] - xs_[i]);
        return ys_[i] + w * (ys_[i + 1] - ys_[i]);
    }

    bool strictly_increasing() const {
        for (std::size_t i = 1; i < ys_.size(); ++i) {
            if (!(ys_[i] > ys_[i - 1])) return false;
        }
        return true;
    }

    bool nondecreasing() const {
        for (std::size_t i = 1; i < ys_.size(); ++i) {
            if (ys_[i] < ys_[i - 1]) return false;
        }
        return true;
    }

    const std::vector<double>& xs() const { return xs_; }
    const std::vector<double>& ys() const { return ys_; }
    bool empty() const { return xs_.empty(); }

private:
    std::vector<double> xs_;
    std::vector<double> ys_;
};

} // namespace rescontrol
