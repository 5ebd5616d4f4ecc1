#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "rpf/errors.hpp"
#include "rpf/po.hpp"
#include "rpf/random.hpp"
#include "test_support.hpp"

namespace rpf {
namespace {

ControlVector sampled_oc(Network const& net, std::uint64_t stream, bool lossless, SamplingMode mode) {
    SamplingConfig cfg;
    cfg.mode = mode;
    cfg.lossless_balance = lossless;
    RecordRng rng(5, stream);
    return sample_oc(rng, net, cfg);
}

NeuralSolver trained_linear(Network const& net) {
    SamplingConfig cfg;
    cfg.n_samples = 120;
    cfg.threads = 1;
    cfg.seed = 3;
    auto data = rpf_training_data(generate_dataset(net, cfg));
    NeuralSolver solver(FeatureKind::linear, data.n_inputs, data.n_outputs);
    train(solver, data, TrainConfig{});
    return solver;
}

TEST(Droop, Arithmetic) {
    DroopConfig d;
    d.p_rated = {1.0};
    EXPECT_NEAR(d.delta_p(1.004)[0], -0.1, 1e-12);
    EXPECT_EQ(d.delta_p(1.0)[0], 0.0);
    d.r = 0.0;
    EXPECT_THROW(d.validate(1), ValidationError);
}

TEST(ControlPartition, ParseNames) {
    auto net = testing::case9();
    auto p = ControlPartition::parse(net, "P1, P2");
    EXPECT_EQ(p.decision, (std::vector<int>{6, 8}));
    EXPECT_EQ(p.fixed.size(), 10u);
    EXPECT_EQ(ControlPartition::parse(net, "V3,PL5").decision, (std::vector<int>{11, 0}));
    EXPECT_THROW(ControlPartition::parse(net, "P4"), ValidationError);
    EXPECT_THROW(ControlPartition::parse(net, "X1"), ValidationError);
    EXPECT_THROW(ControlPartition::parse(net, "P1,P1"), ValidationError);
    EXPECT_THROW(ControlPartition::parse(net, ""), ValidationError);
}

TEST(MinimizeScalar, QuadraticAndMonotone) {
    auto res = minimize_scalar([](double x) { return std::pair{(x - 3.0) * (x - 3.0), 2.0 * (x - 3.0)}; }, 0.0);
    EXPECT_NEAR(res.x, 3.0, 1e-12);
    for (std::size_t i = 1; i < res.accepted_f.size(); ++i) EXPECT_LE(res.accepted_f[i], res.accepted_f[i - 1]);

    auto cosh_res = minimize_scalar([](double x) { return std::pair{std::cosh(x + 0.7), std::sinh(x + 0.7)}; }, 2.0);
    EXPECT_NEAR(cosh_res.x, -0.7, 1e-10);
}

TEST(MinimizeScalar, Failures) {
    // derivative claims descent to the right while the value rises
    EXPECT_THROW(minimize_scalar([](double x) { return std::pair{x, -1.0}; }, 0.0), NonDescent);
    EXPECT_THROW(minimize_scalar([](double x) { return std::pair{-x, -1.0}; }, 0.0), NotConverged);
    EXPECT_THROW(minimize_scalar([](double) { return std::pair{std::nan(""), 1.0}; }, 0.0), NotConverged);
}

class PfOracle : public ::testing::TestWithParam<int> {};

TEST_P(PfOracle, RecoversExactSlack) {
    auto net = testing::case9();
    auto u0 = sampled_oc(net, static_cast<std::uint64_t>(GetParam()), true, SamplingMode::feasible);
    auto exact = solve_feasible(net, u0, SlackSpec::single(0));
    ASSERT_TRUE(exact.feasible());
    RpfOraclePredictor oracle(net);
    auto res = solve_po_pf(oracle, net, u0, SlackSpec::single(0));
    EXPECT_NEAR(res.scalar, exact.slack_value, 1e-8);
    EXPECT_LT(res.rho_hat, 1e-14);
    for (std::size_t i = 1; i < res.objective_history.size(); ++i) {
        EXPECT_LE(res.objective_history[i], res.objective_history[i - 1]);
    }
}

INSTANTIATE_TEST_SUITE_P(Ocs, PfOracle, ::testing::Range(0, 4));

TEST(PoPf, DistributedEqualShares) {
    auto net = testing::case9();
    auto u0 = sampled_oc(net, 11, true, SamplingMode::feasible);
    auto layout = ControlLayout::of(net);
    RpfOraclePredictor oracle(net);
    auto res = solve_po_pf(oracle, net, u0, SlackSpec::equal_share(3));
    for (int k = 0; k < 3; ++k) {
        double delta = res.u.entries[layout.gen_p(k)] - u0.entries[layout.gen_p(k)];
        EXPECT_NEAR(delta, res.scalar / 3.0, 1e-14);
    }
    auto exact = solve_feasible(net, u0, SlackSpec::equal_share(3));
    EXPECT_NEAR(res.scalar, exact.slack_value, 1e-8);
}

TEST(PoPf, RhoHatMatchesFreshEvaluation) {
    auto net = testing::case9();
    auto solver = trained_linear(net);
    NeuralPredictor pred(solver, net);
    auto u0 = sampled_oc(net, 2, true, SamplingMode::feasible);
    auto res = solve_po_pf(pred, net, u0, SlackSpec::single(0));
    auto again = pred.predict(res.u);
    EXPECT_EQ(res.rho_hat, residual_norm(assemble_residual(net, again, res.u)));
    EXPECT_EQ(again, res.v_hat);
}

TEST(PoQss, FeasibleOcHasNominalFrequency) {
    auto net = testing::case9();
    auto u0 = sampled_oc(net, 4, false, SamplingMode::feasible);
    auto feasible = solve_feasible(net, u0, SlackSpec::single(0)).u_adjusted;
    RpfOraclePredictor oracle(net);
    auto droop = DroopConfig::from_network(net);
    auto res = solve_po_qss(oracle, net, feasible, droop);
    EXPECT_LE(std::abs(res.scalar - 1.0), 1e-8);
}

TEST(PoQss, OracleMatchesExactAndIsIdempotent) {
    auto net = testing::case9();
    auto layout = ControlLayout::of(net);
    auto droop = DroopConfig::from_network(net);
    for (std::uint64_t s = 0; s < 3; ++s) {
        auto u0 = sampled_oc(net, 20 + s, false, SamplingMode::infeasible);
        RpfOraclePredictor oracle(net);
        auto res = solve_po_qss(oracle, net, u0, droop);
        double exact = exact_qss_omega(net, u0, droop);
        EXPECT_NEAR(res.scalar, exact, 1e-8);
        // generation exceeds demand in these OCs, so frequency rises
        EXPECT_GT(res.scalar, 1.0);

        auto again = solve_po_qss(oracle, net, droop.apply(layout, u0, res.scalar), droop);
        EXPECT_LE(std::abs(again.scalar - 1.0), 1e-10);
    }
}

TEST(PoOpf, LargeLambdaReducesToSlackProblem) {
    auto net = testing::case9();
    auto layout = ControlLayout::of(net);
    auto u0 = sampled_oc(net, 6, true, SamplingMode::feasible);
    auto spec = OpfSpec::from_network(net);
    spec.q_mat.setZero();
    spec.q_vec.setZero();
    spec.lambda = spec.lambda_max = 1e6;
    spec.u_lower.assign(12, -10.0);
    spec.u_upper.assign(12, 10.0);
    auto part = ControlPartition::parse(net, "P1");
    RpfOraclePredictor oracle(net);
    auto res = solve_po_opf(oracle, net, spec, part, u0);
    auto pf = solve_feasible(net, u0, SlackSpec::single(0));
    EXPECT_NEAR(res.u.entries[layout.gen_p(0)], u0.entries[layout.gen_p(0)] + pf.slack_value, 1e-3);
    for (std::size_t i = 1; i < res.objective_history.size(); ++i) {
        EXPECT_LE(res.objective_history[i], res.objective_history[i - 1]);
    }
}

TEST(PoOpf, BindingVoltageBound) {
    auto net = testing::case9();
    auto layout = ControlLayout::of(net);
    auto u0 = solve_feasible(net, ControlVector::nominal(net), SlackSpec::single(0)).u_adjusted;
    auto spec = OpfSpec::from_network(net);
    spec.q_mat.setZero();
    spec.q_vec.setZero();
    spec.q_vec[layout.gen_v_ref(1)] = -1.0;  // rewards a high setpoint at bus 2
    spec.v_max.assign(9, std::numeric_limits<double>::infinity());
    spec.v_max[1] = 1.03;
    auto part = ControlPartition::parse(net, "V2");
    RpfOraclePredictor oracle(net);
    auto res = solve_po_opf(oracle, net, spec, part, u0);
    EXPECT_LE(res.violations.voltage, 1e-6);
    EXPECT_NEAR(res.v_hat.magnitudes[1], 1.03, 1e-5);
}

TEST(PoOpf, InfeasibleStartAndValidation) {
    auto net = testing::case9();
    auto layout = ControlLayout::of(net);
    auto spec = OpfSpec::from_network(net);
    auto u0 = ControlVector::nominal(net);
    u0.entries[layout.gen_p(0)] = 10.0;
    RpfOraclePredictor oracle(net);
    EXPECT_THROW(solve_po_opf(oracle, net, spec, ControlPartition::parse(net, "P1"), u0), InfeasibleStart);
    auto bad = spec;
    bad.q_mat(0, 0) = -1.0;
    EXPECT_THROW(bad.validate(net), ValidationError);
    bad = spec;
    bad.q_mat(0, 1) = 1.0;
    EXPECT_THROW(bad.validate(net), ValidationError);
}

TEST(OpfObjective, GradientMatchesFiniteDifferences) {
    auto net = testing::case9();
    auto solver = trained_linear(net);
    NeuralPredictor pred(solver, net);
    auto spec = OpfSpec::from_network(net);
    spec.v_max.assign(9, 1.0);  // active voltage penalties
    spec.current_max.assign(9, 0.5);
    spec.angle_max = 0.05;
    auto part = ControlPartition::parse(net, "P1,P2,V2,V3");
    auto u = solve_feasible(net, ControlVector::nominal(net), SlackSpec::single(0)).u_adjusted;
    u.entries[6] += 0.05;
    auto obj = opf_objective(pred, net, spec, part.decision, u, 10.0, 3.0);
    ASSERT_GT(obj.report.voltage, 0.0);
    ASSERT_GT(obj.report.current, 0.0);
    ASSERT_GT(obj.report.branch_angle, 0.0);
    Eigen::VectorXd x(4);
    for (int j = 0; j < 4; ++j) x[j] = u.entries[part.decision[j]];
    auto f = [&](Eigen::VectorXd const& xx) {
        auto uu = u;
        for (int j = 0; j < 4; ++j) uu.entries[part.decision[j]] = xx[j];
        Eigen::VectorXd out(1);
        out[0] = opf_objective(pred, net, spec, part.decision, uu, 10.0, 3.0).f;
        return out;
    };
    Eigen::MatrixXd fd = testing::central_jacobian(f, x, 1e-6);
    EXPECT_LT(testing::relative_error(obj.grad, fd.row(0).transpose()), 1e-5);
}

TEST(GridOracle, SinglePointAndFeasibleValue) {
    auto net = testing::case9();
    auto layout = ControlLayout::of(net);
    auto u = solve_feasible(net, ControlVector::nominal(net), SlackSpec::single(0)).u_adjusted;
    auto spec = OpfSpec::from_network(net);
    double p1 = u.entries[layout.gen_p(0)];
    auto grid = grid_search_oracle(net, spec, u, GridAxis{layout.gen_p(0), p1, p1, 1}, std::nullopt);
    ASSERT_EQ(grid.points.size(), 1u);
    ASSERT_TRUE(grid.points[0].rho.has_value());
    EXPECT_LE(*grid.points[0].rho, 1e-10);
    EXPECT_EQ(*grid.points[0].rho, solve_rpf(net, u).rho);
    EXPECT_TRUE(grid.points[0].argmin);

    auto two = grid_search_oracle(net, spec, u, GridAxis{layout.gen_p(0), p1 - 0.2, p1 + 0.2, 5},
                                  GridAxis{layout.gen_p(1), 1.4, 1.8, 5}, nullptr, 2);
    EXPECT_EQ(two.points.size(), 25u);
    auto csv = two.to_csv(net);
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "i,j,pm_gen_1,pm_gen_2,rho,rho_hat,cost,violation,objective,argmin");
    auto serial = grid_search_oracle(net, spec, u, two.ax, two.ay, nullptr, 1);
    EXPECT_EQ(serial.to_csv(net), csv);
}

}  // namespace
}  // namespace rpf
