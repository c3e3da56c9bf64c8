#pragma once

// Closed-loop plant used by every simulator: reservoir mass balance plus
// the downstream routing filter, producing one trajectory record per day.

#include "rescontrol/hydrology.hpp"
#include "rescontrol/reservoir.hpp"
#include "rescontrol/routing.hpp"

namespace rescontrol {

class Plant {
public:
    /// The routing pre-history is a steady flow equal to the first day's
    /// inflow passed straight through plus the tributaries.
    Plant(const ReservoirSpec& spec, const RoutingModel& routing, const HydrologyTrace& trace, double s0)
        : spec_(&spec), trace_(&trace), routing_(routing, trace.q_d.at(0) + trace.q_t.at(0) + trace.q_l.at(0)) {
        state_.t = 0;
        state_.s = s0;
        traj_.start_day = trace.start_day;
        traj_.final_storage = s0;
    }

    const ReservoirState& state() const { return state_; }
    const RoutingFilter& routing_filter() const { return routing_; }
    const Trajectory& trajectory() const { return traj_; }
    Trajectory release_trajectory() { return std::move(traj_); }
    bool done() const { return static_cast<std::size_t>(state_.t) >= trace_->size(); }

    const TrajectoryRecord& advance(double u) {
        const std::size_t t = static_cast<std::size_t>(state_.t);
        const Inflow q = trace_->at(t);
        const StepResult res = step(*spec_, state_, u, q.q_d);
        TrajectoryRecord rec;
        rec.t = state_.t;
        rec.s = state_.s;
        rec.u = u;
        rec.r = res.release;
        rec.q_d = q.q_d;
        rec.h_hanoi = routing_.push(res.release + q.q_t + q.q_l);
        rec.energy = step_energy(*spec_, state_.s, res.release);
        if (res.negative_storage) ++traj_.negative_storage_events;
        state_ = res.next;
        traj_.records.push_back(rec);
        traj_.final_storage = state_.s;
        return traj_.records.back();
    }

private:
    const ReservoirSpec* spec_;
    const HydrologyTrace* trace_;
    RoutingFilter routing_;
    ReservoirState state_;
    Trajectory traj_;
};

} // namespace rescontrol
