#include "rpf/solver.hpp"

#include <cmath>
#include <numbers>

#include <nlohmann/json.hpp>

#include "rpf/errors.hpp"

namespace rpf {

namespace {

constexpr double kAngleLimit = std::numbers::pi / 2 - 1e-6;

struct LmProblem {
    Network const& network;
    ControlVector const& u0;
    std::vector<double> slack_direction;  // empty for the plain problem
    std::vector<double> weights;

    int n_vars() const { return network.n_voltage_vars() + (slack_direction.empty() ? 0 : 1); }

    ControlVector controls(Eigen::VectorXd const& x) const {
        if (slack_direction.empty()) return u0;
        ControlVector u = u0;
        double s = x[network.n_voltage_vars()];
        for (std::size_t i = 0; i < u.entries.size(); ++i) u.entries[i] += s * slack_direction[i];
        return u;
    }

    VoltageState state(Eigen::VectorXd const& x) const {
        return VoltageState::from_flat(network, std::span<double const>(x.data(), network.n_voltage_vars()));
    }

    bool in_domain(Eigen::VectorXd const& x) const {
        int const n = network.n_buses();
        for (int i = 0; i < n; ++i) {
            if (!(x[i] > kVoltageFloor)) return false;
        }
        for (int i = n; i < network.n_voltage_vars(); ++i) {
            if (!(std::abs(x[i]) < kAngleLimit)) return false;
        }
        return x.allFinite();
    }

    double rho(Eigen::VectorXd const& x) const {
        auto r = assemble_residual(network, state(x), controls(x));
        return residual_norm(r, ResidualWeights{weights});
    }

    void linearize(Eigen::VectorXd const& x, Eigen::VectorXd& r, Eigen::MatrixXd& jac) const {
        auto eval = evaluate_residual(network, state(x), controls(x));
        r = Eigen::Map<Eigen::VectorXd const>(eval.r.values.data(), eval.r.values.size());
        jac.resize(r.size(), n_vars());
        jac.leftCols(network.n_voltage_vars()) = eval.d_voltage;
        if (!slack_direction.empty()) {
            Eigen::Map<Eigen::VectorXd const> dir(slack_direction.data(), slack_direction.size());
            jac.col(network.n_voltage_vars()) = eval.d_control * dir;
        }
    }
};

struct LmResult {
    Eigen::VectorXd x;
    double rho = 0.0;
    double grad_norm = 0.0;
    int iterations = 0;
    bool converged = false;
    std::vector<double> history;
};

LmResult levenberg_marquardt(LmProblem const& problem, Eigen::VectorXd x, SolverConfig const& cfg) {
    if (!problem.in_domain(x)) throw DegenerateVoltage("initial state outside the voltage domain");
    Eigen::Map<Eigen::VectorXd const> w(problem.weights.data(), problem.weights.size());

    LmResult out;
    Eigen::VectorXd r;
    Eigen::MatrixXd jac;
    problem.linearize(x, r, jac);
    double rho = 0.5 * r.dot(w.cwiseProduct(r));
    double lambda = cfg.lm_lambda0;
    if (cfg.record_history) out.history.push_back(rho);

    int iter = 0;
    for (; iter < cfg.max_iter; ++iter) {
        Eigen::MatrixXd jtw = jac.transpose() * w.asDiagonal();
        Eigen::VectorXd grad = jtw * r;
        out.grad_norm = grad.lpNorm<Eigen::Infinity>();
        if (out.grad_norm <= cfg.grad_tol) {
            out.converged = true;
            break;
        }
        Eigen::MatrixXd normal = jtw * jac;

        bool accepted = false;
        bool tiny_step = false;
        while (!accepted) {
            Eigen::MatrixXd lhs = normal;
            lhs.diagonal().array() += lambda;
            Eigen::LLT<Eigen::MatrixXd> llt(lhs);
            Eigen::VectorXd step = llt.info() == Eigen::Success
                                       ? Eigen::VectorXd(llt.solve(-grad))
                                       : Eigen::VectorXd(lhs.completeOrthogonalDecomposition().solve(-grad));
            if (step.norm() <= cfg.step_tol * (x.norm() + cfg.step_tol)) {
                tiny_step = true;
                break;
            }
            Eigen::VectorXd candidate = x + step;
            if (problem.in_domain(candidate)) {
                double rho_new = problem.rho(candidate);
                if (std::isfinite(rho_new) && rho_new < rho) {
                    x = candidate;
                    rho = rho_new;
                    lambda = std::max(lambda / cfg.lm_factor, 1e-12);
                    accepted = true;
                    continue;
                }
            }
            lambda *= cfg.lm_factor;
        }
        if (tiny_step) {
            out.converged = true;
            break;
        }
        problem.linearize(x, r, jac);
        rho = 0.5 * r.dot(w.cwiseProduct(r));
        if (cfg.record_history) out.history.push_back(rho);
    }
    if (iter == cfg.max_iter) {
        Eigen::VectorXd grad = jac.transpose() * w.asDiagonal() * r;
        out.grad_norm = grad.lpNorm<Eigen::Infinity>();
        out.converged = out.grad_norm <= cfg.grad_tol;
    }
    out.x = std::move(x);
    out.rho = rho;
    out.iterations = iter;
    return out;
}

Eigen::VectorXd initial_point(Network const& network, SolverConfig const& cfg, int extra) {
    VoltageState v0 = cfg.warm_start ? *cfg.warm_start : VoltageState::flat(network);
    auto flat = v0.flatten();
    if (static_cast<int>(flat.size()) != network.n_voltage_vars()) {
        throw ValidationError("warm start does not match the network");
    }
    Eigen::VectorXd x = Eigen::VectorXd::Zero(network.n_voltage_vars() + extra);
    x.head(flat.size()) = Eigen::Map<Eigen::VectorXd>(flat.data(), flat.size());
    return x;
}

std::vector<double> weight_vector(Network const& network, SolverConfig const& cfg) {
    auto w = cfg.weights ? *cfg.weights : ResidualWeights::identity(network.n_residuals());
    w.validate(network.n_residuals());
    return w.w;
}

void check_controls(Network const& network, ControlVector const& u) {
    if (static_cast<int>(u.entries.size()) != network.n_controls()) {
        throw ValidationError("control vector has " + std::to_string(u.entries.size()) + " entries, expected " +
                              std::to_string(network.n_controls()));
    }
}

}  // namespace

void SolverConfig::validate() const {
    if (max_iter < 1) throw ValidationError("max_iter must be at least 1");
    if (!(grad_tol > 0.0) || !(step_tol > 0.0) || !(feasibility_tol > 0.0)) {
        throw ValidationError("solver tolerances must be positive");
    }
    if (!(lm_lambda0 > 0.0) || !(lm_factor > 1.0)) throw ValidationError("invalid damping parameters");
}

std::string to_string(SolveStatus status) {
    switch (status) {
        case SolveStatus::converged: return "converged";
        case SolveStatus::not_converged: return "not_converged";
        case SolveStatus::infeasible_region: return "infeasible_region";
    }
    return "unknown";
}

RpfSolution solve_rpf(Network const& network, ControlVector const& u, SolverConfig const& cfg) {
    cfg.validate();
    check_controls(network, u);
    LmProblem problem{network, u, {}, weight_vector(network, cfg)};
    auto lm = levenberg_marquardt(problem, initial_point(network, cfg, 0), cfg);

    RpfSolution sol;
    sol.v_star = problem.state(lm.x);
    sol.residual = assemble_residual(network, sol.v_star, u);
    sol.rho = residual_norm(sol.residual, ResidualWeights{problem.weights});
    sol.iterations = lm.iterations;
    sol.converged = lm.converged;
    sol.grad_norm = lm.grad_norm;
    sol.rho_history = std::move(lm.history);
    return sol;
}

FeasibleSolution solve_feasible(Network const& network, ControlVector const& u0, SlackSpec const& slack,
                                SolverConfig const& cfg) {
    cfg.validate();
    check_controls(network, u0);
    slack.validate(static_cast<int>(network.generators.size()));
    auto layout = ControlLayout::of(network);
    LmProblem problem{network, u0, slack.direction(layout), weight_vector(network, cfg)};
    auto lm = levenberg_marquardt(problem, initial_point(network, cfg, 1), cfg);

    FeasibleSolution sol;
    sol.v_star = problem.state(lm.x);
    sol.u_adjusted = problem.controls(lm.x);
    sol.slack_value = lm.x[network.n_voltage_vars()];
    sol.residual = assemble_residual(network, sol.v_star, sol.u_adjusted);
    sol.rho = residual_norm(sol.residual, ResidualWeights{problem.weights});
    sol.iterations = lm.iterations;
    sol.grad_norm = lm.grad_norm;
    sol.rho_history = std::move(lm.history);
    if (sol.rho <= cfg.feasibility_tol) {
        sol.status = SolveStatus::converged;
    } else if (lm.converged) {
        sol.status = SolveStatus::infeasible_region;
    } else {
        sol.status = SolveStatus::not_converged;
    }
    return sol;
}

void require_feasible(FeasibleSolution const& solution) {
    switch (solution.status) {
        case SolveStatus::converged: return;
        case SolveStatus::infeasible_region:
            throw InfeasibleRegion("residual plateaus at rho = " + std::to_string(solution.rho));
        case SolveStatus::not_converged:
            throw NotConverged("no convergence after " + std::to_string(solution.iterations) + " iterations");
    }
}

namespace {

nlohmann::json state_json(Network const& network, VoltageState const& v) {
    nlohmann::json j;
    j["labels"] = state_labels(network);
    j["values"] = v.flatten();
    return j;
}

}  // namespace

std::string solution_to_json(Network const& network, RpfSolution const& solution) {
    nlohmann::json j;
    j["state"] = state_json(network, solution.v_star);
    j["residual"] = solution.residual.values;
    j["rho"] = solution.rho;
    j["iterations"] = solution.iterations;
    j["converged"] = solution.converged;
    j["grad_norm"] = solution.grad_norm;
    return j.dump(2);
}

std::string solution_to_json(Network const& network, FeasibleSolution const& solution) {
    nlohmann::json j;
    j["state"] = state_json(network, solution.v_star);
    j["controls"] = {{"labels", ControlLayout::of(network).labels(network)}, {"values", solution.u_adjusted.entries}};
    j["residual"] = solution.residual.values;
    j["slack_value"] = solution.slack_value;
    j["rho"] = solution.rho;
    j["iterations"] = solution.iterations;
    j["status"] = to_string(solution.status);
    return j.dump(2);
}

}  // namespace rpf
