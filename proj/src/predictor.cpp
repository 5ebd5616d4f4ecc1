#include <Eigen/Dense>

#include "rpf/errors.hpp"
#include "rpf/neural_solver.hpp"

namespace rpf {

NeuralPredictor::NeuralPredictor(NeuralSolver const& solver, Network const& network)
    : solver_(solver), network_(network) {
    if (solver.n_inputs() != network.n_controls() || solver.n_outputs() != network.n_voltage_vars()) {
        throw ValidationError("solver shape does not match the network");
    }
}

VoltageState NeuralPredictor::predict(ControlVector const& u) const { return rpf::predict(solver_, network_, u).v; }

std::vector<double> NeuralPredictor::pullback(ControlVector const& u, std::span<double const> g_v) const {
    return solver_.pullback(u.entries, g_v);
}

RpfOraclePredictor::RpfOraclePredictor(Network const& network, SolverConfig cfg) : network_(network), cfg_(cfg) {}

VoltageState RpfOraclePredictor::predict(ControlVector const& u) const {
    SolverConfig cfg = cfg_;
    cfg.warm_start = warm_;
    auto sol = solve_rpf(network_, u, cfg);
    if (!sol.converged) {
        // a poor warm start is the usual culprit
        cfg.warm_start.reset();
        sol = solve_rpf(network_, u, cfg);
    }
    warm_ = sol.v_star;
    return sol.v_star;
}

std::vector<double> RpfOraclePredictor::pullback(ControlVector const& u, std::span<double const> g_v) const {
    auto v = predict(u);
    auto eval = evaluate_residual(network_, v, u);
    Eigen::MatrixXd const& jv = eval.d_voltage;
    Eigen::MatrixXd normal = jv.transpose() * jv;
    Eigen::Map<Eigen::VectorXd const> g(g_v.data(), g_v.size());
    Eigen::VectorXd z = normal.completeOrthogonalDecomposition().solve(g);
    Eigen::VectorXd out = -(eval.d_control.transpose() * (jv * z));
    return {out.data(), out.data() + out.size()};
}

ResidualPrediction predict_residual_and_grad(VoltagePredictor const& predictor, Network const& network,
                                             ControlVector const& u, std::span<int const> decision_indices) {
    for (int idx : decision_indices) {
        if (idx < 0 || idx >= network.n_controls()) throw ValidationError("decision index out of range");
    }
    ResidualPrediction out;
    out.v = predictor.predict(u);
    auto eval = evaluate_residual(network, out.v, u);
    out.rho = residual_norm(eval.r);
    Eigen::Map<Eigen::VectorXd const> r(eval.r.values.data(), eval.r.values.size());
    Eigen::VectorXd direct = eval.d_control.transpose() * r;
    Eigen::VectorXd g_v = eval.d_voltage.transpose() * r;
    auto through = predictor.pullback(u, std::span<double const>(g_v.data(), g_v.size()));
    out.gradient.reserve(decision_indices.size());
    for (int idx : decision_indices) out.gradient.push_back(direct[idx] + through[idx]);
    return out;
}

}  // namespace rpf
