#include <gtest/gtest.h>

#include <random>

#include <nlohmann/json.hpp>

#include "rpf/errors.hpp"
#include "rpf/solver.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

namespace rpf {
namespace {

using testing::make_spec;
using testing::nested_slack;
using testing::two_bus_closed_form;

ControlVector perturbed_case9_controls(Network const& net, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> scale(0.6, 1.3), vref(1.0, 1.05);
    auto layout = ControlLayout::of(net);
    auto u = ControlVector::nominal(net);
    for (int i = 0; i < layout.n_loads; ++i) {
        double s = scale(rng);
        u.entries[layout.load_p(i)] *= s;
        u.entries[layout.load_q(i)] *= s;
    }
    for (int k = 0; k < layout.n_generators; ++k) {
        u.entries[layout.gen_p(k)] *= scale(rng);
        u.entries[layout.gen_v_ref(k)] = vref(rng);
    }
    return u;
}

// Active power entering the network through Y V, summed over buses.
double network_losses(Network const& net, VoltageState const& v) {
    auto theta = reconstruct_bus_angles(net, v.branch_angles);
    Eigen::VectorXcd volt(net.n_buses());
    for (int b = 0; b < net.n_buses(); ++b) volt[b] = std::polar(v.magnitudes[b], theta[b]);
    Eigen::VectorXcd current = build_ybus(net) * volt;
    double losses = 0.0;
    for (int b = 0; b < net.n_buses(); ++b) losses += (volt[b] * std::conj(current[b])).real();
    return losses;
}

double sum_pm(Network const& net, ControlVector const& u) {
    auto layout = ControlLayout::of(net);
    double s = 0.0;
    for (int k = 0; k < layout.n_generators; ++k) s += u.entries[layout.gen_p(k)];
    return s;
}

double sum_pload(Network const& net, ControlVector const& u) {
    auto layout = ControlLayout::of(net);
    double s = 0.0;
    for (int i = 0; i < layout.n_loads; ++i) s += u.entries[layout.load_p(i)];
    return s;
}

TEST(SolveRpf, NoInjectionTwoBusIsAlreadyOptimal) {
    auto net = build_network(make_spec(2, {{1, 2, 0.0, 0.1}}));
    auto sol = solve_rpf(net, ControlVector::nominal(net));
    EXPECT_TRUE(sol.converged);
    EXPECT_LE(sol.iterations, 1);
    EXPECT_EQ(sol.rho, 0.0);
    EXPECT_EQ(sol.v_star, VoltageState::flat(net));
}

TEST(SolveRpf, TwoBusMatchesClosedForm) {
    for (auto [p, q] : {std::pair{0.5, 0.0}, std::pair{0.8, 0.2}, std::pair{1.2, -0.3}}) {
        auto c = two_bus_closed_form(p, q, 0.1, 21.0);
        auto sol = solve_rpf(c.net, ControlVector::nominal(c.net));
        EXPECT_TRUE(sol.converged);
        EXPECT_LE(sol.rho, 1e-12);
        EXPECT_NEAR(sol.v_star.magnitudes[0], 1.0, 1e-8);
        EXPECT_NEAR(sol.v_star.magnitudes[1], c.v2, 1e-8);
        EXPECT_NEAR(sol.v_star.branch_angles[0], c.phi, 1e-8);
    }
}

TEST(SolveRpf, Case9FeasibleControlsPassOracle) {
    auto net = testing::case9();
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 5; ++trial) {
        auto feasible = solve_feasible(net, perturbed_case9_controls(net, rng), SlackSpec::single(0));
        ASSERT_TRUE(feasible.feasible());
        auto sol = solve_rpf(net, feasible.u_adjusted);
        EXPECT_TRUE(sol.converged);
        EXPECT_LE(sol.rho, 1e-10);
        EXPECT_LE(max_abs(ybus_oracle_mismatch(net, sol.v_star, feasible.u_adjusted)), 1e-8);
        EXPECT_LE(max_abs(ybus_oracle_mismatch(net, feasible.v_star, feasible.u_adjusted)), 1e-8);
    }
}

TEST(SolveRpf, MonotoneAndDeterministic) {
    auto net = testing::case9();
    std::mt19937_64 rng(22);
    SolverConfig cfg;
    cfg.record_history = true;
    for (int trial = 0; trial < 10; ++trial) {
        auto u = perturbed_case9_controls(net, rng);
        auto a = solve_rpf(net, u, cfg);
        auto b = solve_rpf(net, u, cfg);
        ASSERT_GE(a.rho_history.size(), 2u);
        for (std::size_t i = 1; i < a.rho_history.size(); ++i) EXPECT_LE(a.rho_history[i], a.rho_history[i - 1]);
        EXPECT_EQ(a.rho_history, b.rho_history);
        EXPECT_EQ(a.v_star, b.v_star);
        EXPECT_DOUBLE_EQ(a.rho, residual_norm(a.residual));
        EXPECT_TRUE(a.converged);
        // unbalanced controls leave a strictly positive residual
        EXPECT_GT(a.rho, 1e-8);
    }
}

TEST(SolveRpf, WarmStartAndValidation) {
    auto net = testing::case9();
    auto u = ControlVector::nominal(net);
    auto cold = solve_rpf(net, u);
    SolverConfig cfg;
    cfg.warm_start = cold.v_star;
    auto warm = solve_rpf(net, u, cfg);
    EXPECT_LE(warm.iterations, 1);
    EXPECT_NEAR(warm.rho, cold.rho, 1e-12);

    cfg.max_iter = 0;
    EXPECT_THROW(solve_rpf(net, u, cfg), ValidationError);
    ControlVector short_u{{1.0}};
    EXPECT_THROW(solve_rpf(net, short_u), ValidationError);
    SolverConfig bad_start;
    bad_start.warm_start = VoltageState::flat(net);
    bad_start.warm_start->magnitudes[2] = 0.0;
    EXPECT_THROW(solve_rpf(net, u, bad_start), DegenerateVoltage);
}

TEST(SolveRpf, MaxIterationsReportsNotConverged) {
    auto net = testing::case9();
    SolverConfig cfg;
    cfg.max_iter = 1;
    auto sol = solve_rpf(net, ControlVector::nominal(net), cfg);
    EXPECT_FALSE(sol.converged);
    EXPECT_EQ(sol.iterations, 1);
}

TEST(SolveFeasible, AlreadyFeasibleIsFixedPoint) {
    auto net = testing::case9();
    auto first = solve_feasible(net, ControlVector::nominal(net), SlackSpec::single(0));
    ASSERT_TRUE(first.feasible());
    auto again = solve_feasible(net, first.u_adjusted, SlackSpec::single(0));
    ASSERT_TRUE(again.feasible());
    EXPECT_LE(std::abs(again.slack_value), 1e-8);
    auto plain = solve_rpf(net, first.u_adjusted);
    for (std::size_t i = 0; i < plain.v_star.flatten().size(); ++i)
        EXPECT_NEAR(plain.v_star.flatten()[i], again.v_star.flatten()[i], 1e-8);
}

TEST(SolveFeasible, SlackRecoversLosslessImbalance) {
    auto net = testing::case9();
    std::mt19937_64 rng(23);
    auto layout = ControlLayout::of(net);
    for (int trial = 0; trial < 10; ++trial) {
        auto u = perturbed_case9_controls(net, rng);
        double correction = sum_pload(net, u) / sum_pm(net, u);
        for (int k = 0; k < layout.n_generators; ++k) u.entries[layout.gen_p(k)] *= correction;
        auto sol = solve_feasible(net, u, SlackSpec::single(0));
        ASSERT_TRUE(sol.feasible());
        EXPECT_GT(sol.slack_value, 0.0);
        EXPECT_NEAR(sol.slack_value, network_losses(net, sol.v_star), 1e-6);
    }
}

TEST(SolveFeasible, DistributedSlackSplitsEqually) {
    auto net = testing::case9();
    auto u0 = ControlVector::nominal(net);
    auto sol = solve_feasible(net, u0, SlackSpec::equal_share(3));
    ASSERT_TRUE(sol.feasible());
    auto layout = ControlLayout::of(net);
    for (int k = 0; k < 3; ++k) {
        EXPECT_NEAR(sol.u_adjusted.entries[layout.gen_p(k)] - u0.entries[layout.gen_p(k)], sol.slack_value / 3.0,
                    1e-15);
    }
}

TEST(SolveFeasible, JointMatchesNestedOracle) {
    auto net = testing::case9();
    std::mt19937_64 rng(24);
    for (int trial = 0; trial < 20; ++trial) {
        auto u = perturbed_case9_controls(net, rng);
        auto slack = trial % 2 == 0 ? SlackSpec::single(trial % 3) : SlackSpec::by_rating(net);
        auto joint = solve_feasible(net, u, slack);
        ASSERT_TRUE(joint.feasible());
        EXPECT_NEAR(joint.slack_value, nested_slack(net, u, slack), 1e-6);
    }
}

TEST(SolveFeasible, ReportsFailureStatus) {
    auto net = testing::case9();
    auto u = ControlVector::nominal(net);
    // a slack acting on Q of a load cannot be expressed, so pick an absurd load instead
    auto layout = ControlLayout::of(net);
    u.entries[layout.load_q(0)] = -40.0;
    u.entries[layout.load_p(0)] = 40.0;
    auto sol = solve_feasible(net, u, SlackSpec::single(0));
    EXPECT_FALSE(sol.feasible());
    EXPECT_ANY_THROW(require_feasible(sol));
    EXPECT_THROW(solve_feasible(net, u, SlackSpec::single(7)), ValidationError);
}

TEST(SolverOutput, JsonFields) {
    auto net = testing::case9();
    auto sol = solve_feasible(net, ControlVector::nominal(net), SlackSpec::single(0));
    auto j = nlohmann::json::parse(solution_to_json(net, sol));
    EXPECT_EQ(j["status"], "converged");
    EXPECT_EQ(j["state"]["values"].size(), 18u);
    EXPECT_EQ(j["controls"]["labels"][6], "pm_gen_1");
    auto plain = nlohmann::json::parse(solution_to_json(net, solve_rpf(net, sol.u_adjusted)));
    EXPECT_TRUE(plain["converged"].get<bool>());
}

}  // namespace
}  // namespace rpf
