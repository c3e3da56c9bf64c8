#include <gtest/gtest.h>

#include <cmath>

#include "empc_checks.hpp"
#include "rescontrol/config.hpp"
#include "rescontrol/empc.hpp"
#include "support.hpp"

using namespace rescontrol;
using testing_support::default_config;

namespace {

struct Fixture {
    const AppConfig& cfg = default_config();
    PIDParams pid = empc_checks::reference_pid();
    StateSpaceModel model = linearized_inner_loop(pid, cfg.inner_loop.scaling);
    HydrologyTrace trace = generate_trace(cfg.hydrology, 260);

    EmpcConfig empc(int horizon) const {
        EmpcConfig e = cfg.empc;
        e.horizon = horizon;
        e.cost = cfg.cost(0.05);
        return e;
    }
    std::vector<Inflow> forecast(std::size_t t, std::size_t n) const {
        std::vector<Inflow> f;
        for (std::size_t k = 0; k < n; ++k) f.push_back(trace.at(t + k));
        return f;
    }
    RoutingFilter routing(std::size_t t) const {
        const Inflow q = trace.at(t);
        return RoutingFilter(cfg.routing, q.q_d + q.q_t + q.q_l);
    }
};

void expect_feasible_plan(const Fixture& su, const EmpcStepResult& r, const std::vector<Inflow>& f, double tol) {
    const ReservoirSpec& spec = su.cfg.reservoir;
    const double S = su.model.scaling.storage, Q = su.model.scaling.flow;
    ASSERT_EQ(r.s_pred.size(), f.size() + 1);
    for (std::size_t k = 0; k < f.size(); ++k) {
        const ReleaseBounds b = release_bounds(spec, r.s_pred[k], f[k].q_d);
        EXPECT_GE(r.u_pred[k], b.r_min - tol * Q) << k;
        EXPECT_LE(r.u_pred[k], b.r_max + tol * Q) << k;
        EXPECT_GE(r.s_pred[k + 1], spec.s_min - tol * S) << k;
        EXPECT_LE(r.s_pred[k + 1], spec.s_max + tol * S) << k;
    }
}

} // namespace

TEST(Empc, PlanRespectsBoundsAtPredictedStorages) {
    const Fixture su;
    const EmpcConfig cfg = su.empc(10);
    for (std::size_t t : {0ul, 120ul, 200ul}) {
        const auto f = su.forecast(t, 10);
        for (double s0 : {4.0e9, 7.0e9, 9.8e9}) {
            const EmpcStepResult r = solve_step(su.model, {s0, 0.0, 0.0}, su.routing(t), f, su.cfg.reservoir, cfg);
            EXPECT_TRUE(r.feasible);
            expect_feasible_plan(su, r, f, cfg.feasibility_tol);
            EXPECT_EQ(r.applied_s_ref, r.s_ref_plan.front());
            EXPECT_TRUE(empc_checks::monotone(r.iterates));
            EXPECT_LE(r.evaluations, cfg.solver.max_iterations + 1);
        }
    }
}

TEST(Empc, WarmStartIsNeverWorsened) {
    const Fixture su;
    EmpcConfig cfg = su.empc(8);
    const auto f = su.forecast(150, 8);
    const InnerState x0{6e9, 0.0, 0.0};
    EmpcConfig quick = cfg;
    quick.solver.max_iterations = 200;
    const EmpcStepResult first = solve_step(su.model, x0, su.routing(150), f, su.cfg.reservoir, quick);
    const EmpcStepResult again =
        solve_step(su.model, x0, su.routing(150), f, su.cfg.reservoir, quick, &first.s_ref_plan);
    EXPECT_LE(again.cost, first.cost);

    cfg.solver.max_iterations = 0;
    const EmpcStepResult kept = solve_step(su.model, x0, su.routing(150), f, su.cfg.reservoir, cfg, &first.s_ref_plan);
    EXPECT_EQ(kept.s_ref_plan, first.s_ref_plan);
    EXPECT_EQ(kept.cost, first.cost);

    const std::vector<double> wrong(3, 6e9);
    EXPECT_THROW(solve_step(su.model, x0, su.routing(150), f, su.cfg.reservoir, cfg, &wrong), Error);
}

TEST(Empc, ReportsLeastInfeasiblePlan) {
    const Fixture su;
    ReservoirSpec spec = su.cfg.reservoir;
    // A forced release of 5000 m3/s with no inflow must empty the reservoir.
    spec.release_table = testing_support::flat_table(5000.0, 5000.0);
    std::vector<Inflow> f(5, Inflow{0.0, 100.0, 100.0});
    try {
        solve_step(su.model, {spec.s_min + 1e8, 0.0, 0.0}, RoutingFilter(su.cfg.routing, 200.0), f, spec, su.empc(5));
        FAIL() << "expected InfeasiblePlanError";
    } catch (const InfeasiblePlanError& e) {
        EXPECT_FALSE(e.least_infeasible().feasible);
        EXPECT_GT(e.least_infeasible().max_storage_violation, 0.0);
        EXPECT_EQ(e.least_infeasible().s_ref_plan.size(), 5u);
    }
}

TEST(Empc, LatticeSearchOnOneStepIsExhaustive) {
    const Fixture su;
    EmpcConfig cfg = su.empc(1);
    for (int i = 0; i <= 40; ++i) cfg.sref_candidates.push_back(2e9 + 2e8 * i);
    const auto f = su.forecast(200, 1);
    const InnerState x0{8e9, -2e9, 1e8};
    const EmpcStepResult r = solve_step(su.model, x0, su.routing(200), f, su.cfg.reservoir, cfg);
    const PlanEvaluator eval(su.model, x0, su.routing(200), f, su.cfg.reservoir, cfg);
    double best = INFINITY;
    for (double c : cfg.sref_candidates) {
        const PlanEvaluation ev = eval({c});
        if (ev.feasible) best = std::min(best, ev.cost);
    }
    EXPECT_EQ(r.cost, best);
}

TEST(Empc, ConfigValidation) {
    EmpcConfig c;
    EXPECT_NO_THROW(c.validate());
    c.horizon = 0;
    EXPECT_THROW(c.validate(), ConfigError);
    c = EmpcConfig{};
    c.solver.penalty_weights = {};
    EXPECT_THROW(c.validate(), ConfigError);
    c = EmpcConfig{};
    c.sref_candidates = {2.0, 1.0};
    EXPECT_THROW(c.validate(), ConfigError);
    c = EmpcConfig{};
    c.solver.scan_points = 1;
    EXPECT_THROW(c.validate(), ConfigError);

    const Json j = {{"horizon", 5}, {"alpha", 0.1}, {"solver", {{"max_iterations", 10}, {"typo", 1}}}};
    JsonReader r(j, "/empc");
    try {
        empc_config_from_json(r);
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_EQ(e.path(), "/empc/solver/typo");
    }
    EXPECT_THROW(forecast_from_string("crystal-ball"), ConfigError);
}

TEST(Empc, RecedingHorizonKeepsMassBalance) {
    const Fixture su;
    EmpcConfig cfg = su.empc(6);
    cfg.solver.max_iterations = 400;
    const HydrologyTrace tr = su.trace.slice(180, 40);
    RecedingHorizonOptions opts;
    opts.keep_iterates = true;
    const EmpcRun run =
        run_receding_horizon(su.cfg.reservoir, su.cfg.routing, su.pid, su.model, tr, cfg, 7e9, opts);
    ASSERT_EQ(run.trajectory.size(), 40u);
    ASSERT_EQ(run.log.size(), 40u);
    EXPECT_EQ(run.log.back().horizon, 1); // truncated at the end of the trace
    for (std::size_t t = 0; t < 40; ++t) {
        const auto& rec = run.trajectory.records[t];
        EXPECT_EQ(run.trajectory.storage_after(t), rec.s + (rec.q_d - rec.r) * 86400.0);
        EXPECT_GE(run.trajectory.storage_after(t), su.cfg.reservoir.s_min);
        EXPECT_LE(run.trajectory.storage_after(t), su.cfg.reservoir.s_max);
    }
    for (const auto& it : run.iterates) EXPECT_TRUE(empc_checks::monotone(it));
    EXPECT_THROW(run_receding_horizon(su.cfg.reservoir, su.cfg.routing, su.pid, su.model, tr.slice(0, 5), cfg, 7e9),
                 ConfigError);
}

TEST(Empc, PersistenceForecastRuns) {
    const Fixture su;
    EmpcConfig cfg = su.empc(4);
    cfg.forecast = ForecastSource::Persistence;
    cfg.solver.max_iterations = 200;
    const EmpcRun run =
        run_receding_horizon(su.cfg.reservoir, su.cfg.routing, su.pid, su.model, su.trace.slice(0, 15), cfg, 6e9);
    EXPECT_EQ(run.trajectory.size(), 15u);
    EXPECT_EQ(std::string(to_string(cfg.forecast)), "persistence");
}
