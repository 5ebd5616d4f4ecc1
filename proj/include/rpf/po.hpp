#pragma once

#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "rpf/neural_solver.hpp"

// Predict-then-optimize: controls are optimized while the voltage state comes
// from a predictor (neural or exact), with rho penalizing power-flow mismatch.

namespace rpf {

/// Decision entries (optimized) and fixed entries of a control vector.
struct ControlPartition {
    std::vector<int> decision;
    std::vector<int> fixed;

    static ControlPartition from_decisions(Network const& network, std::vector<int> decision);
    /// Names like "P1" (generator at bus 1, P_M), "V1" (its V_ref), "PL5"/"QL5" (load at bus 5).
    static ControlPartition parse(Network const& network, std::string const& names);
    void validate(Network const& network) const;
};

struct DroopConfig {
    std::vector<double> p_rated;  // per generator, pu
    double r = 0.04;
    double omega0 = 1.0;

    static DroopConfig from_network(Network const& network, double r = 0.04);
    void validate(int n_generators) const;
    /// Delta P_M per generator at frequency omega (pu of omega0).
    std::vector<double> delta_p(double omega) const;
    ControlVector apply(ControlLayout const& layout, ControlVector const& u0, double omega) const;
};

/// 1-D search settings shared by the slack and frequency problems.
struct ScalarSearchConfig {
    double initial_step = 1e-2;
    double x_tol = 1e-13;
    double grad_tol = 0.0;
    int max_iter = 200;
    int max_expansions = 60;
};

struct ScalarSearchResult {
    double x = 0.0;
    double f = 0.0;
    double df = 0.0;
    int iterations = 0;
    int evaluations = 0;
    std::vector<double> accepted_f;  // objective at accepted iterates
    std::vector<std::pair<double, double>> curve;  // every (x, f) evaluated
};

/// Minimizes a smooth unimodal function from value and derivative: secant
/// steps towards a root of f' while bracketing, then safeguarded
/// regula falsi (Illinois) inside the bracket.
ScalarSearchResult minimize_scalar(std::function<std::pair<double, double>(double)> const& fn, double x0,
                                   ScalarSearchConfig const& cfg = {});

struct ConstraintReport {
    double u_bounds = 0.0;
    double voltage = 0.0;
    double branch_angle = 0.0;
    double current = 0.0;

    double max() const noexcept;
};

struct PoResult {
    ControlVector u;
    VoltageState v_hat;
    double rho_hat = 0.0;
    double objective = 0.0;
    double scalar = std::numeric_limits<double>::quiet_NaN();  // slack value or omega
    ConstraintReport violations;
    int iterations = 0;
    std::string method;
    std::vector<double> objective_history;
};

PoResult solve_po_pf(VoltagePredictor const& predictor, Network const& network, ControlVector const& u0,
                     SlackSpec const& slack, ScalarSearchConfig const& cfg = {});

PoResult solve_po_qss(VoltagePredictor const& predictor, Network const& network, ControlVector const& u0,
                      DroopConfig const& droop, ScalarSearchConfig const& cfg = {});

/// Exact frequency from the joint slack solve with factors proportional to P_rated.
double exact_qss_omega(Network const& network, ControlVector const& u0, DroopConfig const& droop,
                       SolverConfig const& cfg = {});

struct OpfSpec {
    Eigen::MatrixXd q_mat;  // over all control entries
    Eigen::VectorXd q_vec;
    double lambda = 1e3;
    double lambda_max = 1e3;  // continuation x10 up to this value
    std::vector<double> u_lower, u_upper;
    std::vector<double> v_min, v_max;  // per bus
    double angle_max = std::numeric_limits<double>::infinity();  // |phi| bound per branch
    std::vector<double> current_max;  // per branch, inf when unrated
    double penalty0 = 1e2;
    double penalty_max = 1e10;
    double violation_tol = 1e-6;
    int max_iter = 500;
    double grad_tol = 1e-9;

    /// Cost from the case's generator cost table (pu power, scaled by
    /// cost_scale), P_M bounds from Pmin/Pmax, V_ref bounds [0.9, 1.1], load
    /// entries pinned, bus limits from the case, branch ratings as current limits.
    static OpfSpec from_network(Network const& network, double cost_scale = 1e-4);
    void validate(Network const& network) const;

    double cost(ControlVector const& u) const;
};

/// Constraint values g <= 0 evaluated on (v, u); also their sensitivities.
ConstraintReport evaluate_constraints(Network const& network, OpfSpec const& spec, VoltageState const& v,
                                      ControlVector const& u);

struct OpfObjective {
    double f = 0.0;
    Eigen::VectorXd grad;  // over the decision entries
    double rho = 0.0;
    ConstraintReport report;
};

/// cost(u) + lambda rho_hat + mu sum max(0, g)^2 with g on the predicted state.
OpfObjective opf_objective(VoltagePredictor const& predictor, Network const& network, OpfSpec const& spec,
                           std::vector<int> const& decision, ControlVector const& u, double lambda, double mu);

PoResult solve_po_opf(VoltagePredictor const& predictor, Network const& network, OpfSpec const& spec,
                      ControlPartition const& partition, ControlVector const& u0);

struct GridAxis {
    int control = 0;
    double lo = 0.0, hi = 0.0;
    int points = 50;

    double at(int i) const;
};

struct GridPoint {
    int i = 0, j = 0;
    double x = 0.0, y = 0.0;
    std::optional<double> rho;      // exact, missing when the solve fails
    std::optional<double> rho_hat;  // when a predictor is supplied
    double cost = 0.0;
    double violation = 0.0;  // largest constraint value on the exact state
    double objective = std::numeric_limits<double>::infinity();  // cost + lambda rho + penalty
    bool argmin = false;
};

struct GridResult {
    GridAxis ax, ay;
    bool two_dimensional = false;
    std::vector<GridPoint> points;  // row-major in (i, j)
    int argmin_index = -1;

    GridPoint const& argmin() const;
    std::string to_csv(Network const& network) const;
};

/// Exact grid over one or two decision entries; the remaining controls stay at u0.
GridResult grid_search_oracle(Network const& network, OpfSpec const& spec, ControlVector const& u0, GridAxis ax,
                              std::optional<GridAxis> ay, VoltagePredictor const* predictor = nullptr,
                              int threads = 1, SolverConfig const& cfg = {});

std::string po_result_csv_header();
std::string po_result_csv_row(int index, PoResult const& r, double reference, std::string const& status);

}  // namespace rpf
