#include <gtest/gtest.h>

#include <cmath>

#include "rescontrol/innerloop.hpp"
#include "support.hpp"

using namespace rescontrol;

namespace {

const PIDParams kPid{-4e-6, -2e-8, 2e-6};

std::vector<double> wavy_reference(std::size_t n, double base) {
    std::vector<double> r(n);
    for (std::size_t t = 0; t < n; ++t) r[t] = base + 2e8 * std::sin(0.2 * static_cast<double>(t));
    return r;
}

} // namespace

TEST(InnerLoop, ScaledMatricesDescribeTheSameSystem) {
    const Scaling a{1.0, 1.0, 86400.0}, b{9.9e9, 1e4, 86400.0};
    const StateSpaceModel ma = linearized_inner_loop(kPid, a), mb = linearized_inner_loop(kPid, b);
    EXPECT_TRUE(ma.A.isApprox(mb.physical_A(), 1e-12));
    EXPECT_TRUE(ma.B.isApprox(mb.physical_B(), 1e-12));
    EXPECT_TRUE(ma.C.isApprox(mb.physical_C(), 1e-12));
    EXPECT_TRUE(ma.D.isApprox(mb.physical_D(), 1e-12));

    const auto ref = wavy_reference(50, 5e9);
    const std::vector<double> q(50, 800.0);
    const Prediction pa = predict(ma, {5e9, 0.0, 0.0}, ref, q), pb = predict(mb, {5e9, 0.0, 0.0}, ref, q);
    for (std::size_t k = 0; k < 50; ++k) {
        EXPECT_NEAR(pa.s[k], pb.s[k], 1e-9 * 5e9);
        EXPECT_NEAR(pa.u[k], pb.u[k], 1e-9 * 1e3);
    }
    EXPECT_THROW(linearized_inner_loop(kPid, Scaling{0.0, 1.0, 1.0}), ConfigError);
}

TEST(InnerLoop, PredictionFollowsThePidEquations) {
    const Scaling sc{9.9e9, 1e4, 86400.0};
    const StateSpaceModel m = linearized_inner_loop(kPid, sc);
    const InnerState x0{6e9, 3e8, -1e7};
    const auto ref = wavy_reference(30, 6.2e9);
    std::vector<double> q(30);
    for (std::size_t t = 0; t < 30; ++t) q[t] = 500.0 + 20.0 * t;
    const Prediction p = predict(m, x0, ref, q);

    double s = x0.s, integral = x0.integral, prev = x0.prev_error;
    for (std::size_t t = 0; t < 30; ++t) {
        const double e = ref[t] - s;
        const double u = kPid.kp * e + kPid.ki * (integral + e) + kPid.kd * (e - prev);
        EXPECT_NEAR(p.s[t], s, 1e-9 * std::abs(s));
        EXPECT_NEAR(p.u[t], u, 1e-9 * std::max(1.0, std::abs(u)));
        integral += e;
        prev = e;
        s += (q[t] - u) * sc.seconds_per_step;
    }
    EXPECT_NEAR(p.s.back(), s, 1e-9 * s);
    EXPECT_THROW(predict(m, x0, std::vector<double>{}, q), Error);
    EXPECT_THROW(predict(m, x0, ref, std::vector<double>(3, 1.0)), Error);
}

TEST(InnerLoop, SimulationMatchesPredictionWithoutSaturation) {
    const ReservoirSpec spec = testing_support::wide_spec();
    const RoutingModel routing(1, 0.2, 7.0, 0.5);
    const HydrologyTrace tr = testing_support::constant_trace(60, 3000.0, 100.0, 100.0);
    const auto ref = wavy_reference(60, 5e9);
    const Trajectory traj = simulate_inner_loop(spec, routing, kPid, ref, tr, 5e9);
    const Prediction p = predict(linearized_inner_loop(kPid, {9e9, 1e4, 86400.0}), {5e9, 0.0, 0.0}, ref, tr.q_d);
    for (std::size_t t = 0; t < 60; ++t) {
        ASSERT_EQ(traj.records[t].r, traj.records[t].u) << "saturated at " << t;
        EXPECT_NEAR(traj.records[t].s, p.s[t], 1e-9 * p.s[t]);
        EXPECT_NEAR(traj.records[t].u, p.u[t], 1e-9 * std::abs(p.u[t]));
    }
}

TEST(InnerLoop, AntiWindupFreezesTheIntegrator) {
    ReservoirSpec spec = testing_support::wide_spec();
    spec.release_table = testing_support::flat_table(0.0, 100.0);
    const RoutingModel routing(0, 0.0, 1.0, 1.0);
    // Inflow equal to the release cap keeps the storage, and so the error, fixed.
    const HydrologyTrace tr = testing_support::constant_trace(5, 100.0);
    const PIDParams pid{1e-6, 1e-7, 0.0};
    const std::vector<double> ref(5, 9e9);

    InnerLoop with(spec, routing, pid, tr, 1e9, {true});
    InnerLoop without(spec, routing, pid, tr, 1e9, {false});
    for (double r : ref) {
        with.advance(r);
        without.advance(r);
    }
    EXPECT_EQ(with.state().integral, 0.0);
    EXPECT_DOUBLE_EQ(without.state().integral, 5 * 8e9);
    EXPECT_DOUBLE_EQ(with.state().prev_error, 8e9);
}

TEST(InnerLoop, StateSpaceJson) {
    const StateSpaceModel m = linearized_inner_loop(kPid, {9.9e9, 1e4, 86400.0});
    const Json j = to_json(m);
    EXPECT_EQ(j.at("scaled").at("A").size(), 3u);
    EXPECT_NEAR(j.at("physical").at("D")[1][0].get<double>(), kPid.kp + kPid.ki + kPid.kd, 1e-20);
    EXPECT_EQ(j.at("outputs")[1], "u");
}
