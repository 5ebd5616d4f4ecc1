#pragma once

#include <complex>
#include <span>
#include <string>
#include <vector>

#include "rpf/neural_solver.hpp"

// Bus-injection encoding of the same data: inputs are the known quantities per
// bus type, targets the unknown bus angles and magnitudes. Predictions are
// mapped back to RPF variables so both formulations share one residual.

namespace rpf {

enum class BusRole { slack, pv, pq };

struct BimEncoding {
    std::vector<BusRole> roles;
    int slack_bus = 0;

    /// Slack at the MATPOWER reference bus (or the first generator), PV at the
    /// other generator buses, PQ elsewhere.
    static BimEncoding from_network(Network const& network);

    void validate(Network const& network) const;
    int n_inputs() const noexcept { return 2 * static_cast<int>(roles.size()); }
    int n_targets() const noexcept;
    std::vector<std::string> input_labels(Network const& network) const;
    std::vector<std::string> target_labels(Network const& network) const;
};

/// Complex power injected into the network at each bus, V conj(Y V), from a
/// KVL-consistent state (angles relative to `ref_bus`).
std::vector<std::complex<double>> bus_power_injections(Network const& network, VoltageState const& v, int ref_bus);

/// Inputs per bus in bus order: PQ (P, Q), PV (P, V), slack (theta = 0, V).
std::vector<double> bim_inputs(Network const& network, BimEncoding const& enc, VoltageState const& v);
/// Bus angles of all non-slack buses, then magnitudes of PQ buses.
std::vector<double> bim_targets(Network const& network, BimEncoding const& enc, VoltageState const& v);

TrainingData bim_training_data(Network const& network, BimEncoding const& enc, Dataset const& dataset);

struct BimDecoded {
    VoltageState v;
    ControlVector u;  // generator setpoints derived from slack P, Q and PV Q
    std::vector<double> bus_angles;
};

/// Assembles the full state from inputs and (predicted) targets, derives slack
/// P, Q and PV Q through the admittance matrix and maps them to P_M and V_ref.
/// Load setpoints are taken from `u_reference`.
BimDecoded bim_decode(Network const& network, BimEncoding const& enc, std::span<double const> inputs,
                      std::span<double const> targets, ControlVector const& u_reference);

/// Residual entries that vanish by construction under the encoding: Im KCL at
/// PV buses, both KCL parts at the slack bus, every KVL row.
std::vector<int> bim_structural_zero_indices(Network const& network, BimEncoding const& enc);

/// rho divided by the number of residuals that are not zero by construction.
double average_residual(ResidualVector const& r, std::size_t n_structural_zeros);

}  // namespace rpf
