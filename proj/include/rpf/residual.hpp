#pragma once

#include <complex>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "rpf/network.hpp"

namespace rpf {

/// Decision vector of the residual formulation: bus magnitudes then branch angles.
struct VoltageState {
    std::vector<double> magnitudes;
    std::vector<double> branch_angles;

    static VoltageState flat(Network const& network);
    static VoltageState from_flat(Network const& network, std::span<double const> values);
    std::vector<double> flatten() const;

    bool operator==(VoltageState const&) const = default;
};

/// Control entries are laid out loads first (P, Q per load, in bus order) and
/// generators next (P_M, V_ref per generator, in gen-table order).
struct ControlLayout {
    int n_loads = 0;
    int n_generators = 0;

    static ControlLayout of(Network const& network);

    int size() const noexcept { return 2 * (n_loads + n_generators); }
    int load_p(int load) const noexcept { return 2 * load; }
    int load_q(int load) const noexcept { return 2 * load + 1; }
    int gen_p(int gen) const noexcept { return 2 * n_loads + 2 * gen; }
    int gen_v_ref(int gen) const noexcept { return 2 * n_loads + 2 * gen + 1; }

    std::vector<std::string> labels(Network const& network) const;
};

struct ControlVector {
    std::vector<double> entries;

    /// Setpoints stored in the case file.
    static ControlVector nominal(Network const& network);

    LoadControl load(ControlLayout const& layout, int i) const {
        return {entries[layout.load_p(i)], entries[layout.load_q(i)]};
    }
    GeneratorControl generator(ControlLayout const& layout, int k) const {
        return {entries[layout.gen_p(k)], entries[layout.gen_v_ref(k)]};
    }

    bool operator==(ControlVector const&) const = default;
};

/// [Re c_1..c_N, Im c_1..c_N, d_1..d_C].
struct ResidualVector {
    std::vector<double> values;
    int n_buses = 0;
    int n_cycles = 0;

    double re_kcl(int bus) const { return values[bus]; }
    double im_kcl(int bus) const { return values[n_buses + bus]; }
    double kvl(int cycle) const { return values[2 * n_buses + cycle]; }
};

struct ResidualWeights {
    std::vector<double> w;

    static ResidualWeights identity(int n) { return {std::vector<double>(n, 1.0)}; }
    void validate(std::size_t n) const;
};

/// Slack variable over generator P_M setpoints; participation factors sum to one.
struct SlackSpec {
    enum class Mode { single, distributed };

    Mode mode = Mode::single;
    std::vector<std::pair<int, double>> targets;  // (generator index, factor)

    static SlackSpec single(int generator);
    static SlackSpec distributed(std::vector<std::pair<int, double>> targets);
    static SlackSpec equal_share(int n_generators);
    /// Factors proportional to P_rated, which is what the droop response uses.
    static SlackSpec by_rating(Network const& network);

    void validate(int n_generators) const;
    /// Direction in control space: d u / d u_s.
    std::vector<double> direction(ControlLayout const& layout) const;
};

ResidualVector assemble_residual(Network const& network, VoltageState const& v, ControlVector const& u);

double residual_norm(ResidualVector const& r, ResidualWeights const& w);
double residual_norm(ResidualVector const& r);

/// Residual, dr/dv and dr/du (all m control columns) from one assembly pass.
struct ResidualEval {
    ResidualVector r;
    Eigen::MatrixXd d_voltage;
    Eigen::MatrixXd d_control;
};

ResidualEval evaluate_residual(Network const& network, VoltageState const& v, ControlVector const& u);

Eigen::MatrixXd residual_jacobian_voltage(Network const& network, VoltageState const& v, ControlVector const& u);
Eigen::MatrixXd residual_jacobian_controls(Network const& network, VoltageState const& v, ControlVector const& u,
                                           std::span<int const> control_indices);

/// J_v^T W r, the gradient of rho with respect to the voltage variables.
Eigen::VectorXd residual_gradient_voltage(ResidualEval const& eval, ResidualWeights const& w);

/// Full nodal admittance matrix including bus shunts.
Eigen::MatrixXcd build_ybus(Network const& network);

/// Independent check: rebuilds absolute angles, evaluates Y V, and subtracts the
/// injector currents rotated into the common frame. Throws AngleInconsistency
/// when a cycle residual exceeds 1e-9.
std::vector<std::complex<double>> ybus_oracle_mismatch(Network const& network, VoltageState const& v,
                                                       ControlVector const& u, int ref_bus = 0);

double max_abs(std::vector<std::complex<double>> const& values);

std::vector<std::string> residual_labels(Network const& network);
std::vector<std::string> state_labels(Network const& network);
std::string residual_to_csv(Network const& network, ResidualVector const& r);
std::string state_to_csv(Network const& network, VoltageState const& v);

}  // namespace rpf
