#pragma once

#include <optional>
#include <string>
#include <vector>

#include "rpf/residual.hpp"

namespace rpf {

struct SolverConfig {
    int max_iter = 200;
    double grad_tol = 1e-10;
    double step_tol = 1e-12;
    double lm_lambda0 = 1e-3;
    double lm_factor = 10.0;
    double feasibility_tol = 1e-10;
    std::optional<VoltageState> warm_start;  // flat start when empty
    std::optional<ResidualWeights> weights;  // identity when empty
    bool record_history = false;

    void validate() const;
};

enum class SolveStatus { converged, not_converged, infeasible_region };

std::string to_string(SolveStatus status);

struct RpfSolution {
    VoltageState v_star;
    double rho = 0.0;
    ResidualVector residual;
    int iterations = 0;
    bool converged = false;
    double grad_norm = 0.0;          // infinity norm of J^T W r at v_star
    std::vector<double> rho_history;  // accepted iterates, when recorded
};

struct FeasibleSolution {
    VoltageState v_star;
    ControlVector u_adjusted;
    double slack_value = 0.0;
    double rho = 0.0;
    ResidualVector residual;
    int iterations = 0;
    SolveStatus status = SolveStatus::not_converged;
    double grad_norm = 0.0;
    std::vector<double> rho_history;

    bool feasible() const noexcept { return status == SolveStatus::converged; }
};

/// Levenberg-Marquardt on r(v; u) from a flat or warm start. Never throws for
/// non-convergence; inspect `converged`.
RpfSolution solve_rpf(Network const& network, ControlVector const& u, SolverConfig const& cfg = {});

/// Joint least squares over (v, u_s), with u = u0 + u_s * slack direction.
FeasibleSolution solve_feasible(Network const& network, ControlVector const& u0, SlackSpec const& slack,
                                SolverConfig const& cfg = {});

/// Throws NotConverged or InfeasibleRegion for a failed solve.
void require_feasible(FeasibleSolution const& solution);

std::string solution_to_json(Network const& network, RpfSolution const& solution);
std::string solution_to_json(Network const& network, FeasibleSolution const& solution);

}  // namespace rpf
