#pragma once

#include <complex>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "rpf/injectors.hpp"

namespace rpf {

// Raw MATPOWER tables, one vector per matrix row, columns as in the file.
using Table = std::vector<std::vector<double>>;

struct NetworkSpec {
    double base_mva = 100.0;
    Table bus;
    Table gen;
    Table branch;
    Table gencost;
    std::vector<std::string> warnings;

    bool operator==(NetworkSpec const&) const = default;
};

// MATPOWER column indices (0-based) used by build_network.
namespace col {
inline constexpr int bus_i = 0, bus_type = 1, pd = 2, qd = 3, gs = 4, bs = 5, vm = 7, va = 8, base_kv = 9,
                     vmax = 11, vmin = 12;
inline constexpr int gen_bus = 0, pg = 1, qg = 2, vg = 5, gen_status = 7, pmax = 8, pmin = 9;
inline constexpr int f_bus = 0, t_bus = 1, br_r = 2, br_x = 3, br_b = 4, rate_a = 5, tap = 8, shift = 9,
                     br_status = 10;
}  // namespace col

struct Bus {
    int index = 0;        // internal, 0-based
    int external_id = 0;  // as in the case file
    std::string name;
    double base_kv = 0.0;
    int type = 1;  // MATPOWER bus type: 1 PQ, 2 PV, 3 reference
    double v_min = 0.0;
    double v_max = std::numeric_limits<double>::infinity();
    double g_shunt = 0.0;  // pu at V = 1
    double b_shunt = 0.0;
};

/// Pi-model branch with the MATPOWER admittance block, per-unit.
struct Branch {
    int index = 0;
    int from = 0;
    int to = 0;
    double r = 0.0;
    double x = 0.0;
    double b_c = 0.0;
    double tap = 1.0;
    double shift = 0.0;  // rad, fixed phase shift of the tap
    double rate = std::numeric_limits<double>::infinity();  // current/MVA limit in pu, inf if unrated
    std::complex<double> y_ff, y_ft, y_tf, y_tt;
};

/// Fundamental cycle; orientation +1 when the walk traverses the branch from -> to.
struct Cycle {
    int index = 0;
    std::vector<int> branch_ids;
    std::vector<int> orientations;
    double y_scale = 0.0;
};

struct LoadSite {
    int bus = 0;
    double p = 0.0;  // nominal setpoints from the case, pu
    double q = 0.0;
};

struct GeneratorSite {
    int bus = 0;
    double p = 0.0;
    double v_ref = 1.0;
    double p_min = -std::numeric_limits<double>::infinity();
    double p_max = std::numeric_limits<double>::infinity();
    GeneratorParams params;
    // Polynomial cost in per-unit power: c2 P^2 + c1 P + c0.
    double cost_c2 = 0.0, cost_c1 = 0.0, cost_c0 = 0.0;
};

/// BFS spanning tree rooted at bus 0; neighbours visited in branch-id order.
struct SpanningTree {
    std::vector<int> order;          // buses in visit order
    std::vector<int> parent_bus;     // -1 for the root
    std::vector<int> parent_branch;  // -1 for the root
    std::vector<bool> in_tree;       // per branch
};

struct Network {
    double base_mva = 100.0;
    std::vector<Bus> buses;
    std::vector<Branch> branches;
    std::vector<LoadSite> loads;
    std::vector<GeneratorSite> generators;
    std::vector<Cycle> cycles;
    SpanningTree tree;
    std::string fingerprint;

    int n_buses() const noexcept { return static_cast<int>(buses.size()); }
    int n_branches() const noexcept { return static_cast<int>(branches.size()); }
    int n_cycles() const noexcept { return static_cast<int>(cycles.size()); }
    int n_voltage_vars() const noexcept { return n_buses() + n_branches(); }
    int n_residuals() const noexcept { return 2 * n_buses() + n_cycles(); }
    int n_controls() const noexcept { return 2 * static_cast<int>(loads.size() + generators.size()); }

    int bus_index(int external_id) const;
};

struct GeneratorConfigEntry {
    int bus = 0;  // external id
    double k_v = 0.0;
    double p_rated = 0.0;
};

struct InjectorConfig {
    std::vector<GeneratorConfigEntry> generators;
};

NetworkSpec parse_matpower_case(std::string_view text);
std::string serialize_matpower_case(NetworkSpec const& spec);

/// `network.json`: arrays `buses`, `branches`, `loads`, `generators` and scalar `base_mva`.
NetworkSpec parse_network_json(std::string_view text);
std::string network_to_json(NetworkSpec const& spec);

InjectorConfig parse_injector_config(std::string_view text);

/// Without a config, generators take K_V from {130, 21, 13} in gen-table order
/// and P_rated from Pmax.
Network build_network(NetworkSpec const& spec, InjectorConfig const* config = nullptr);

/// Reads a `.m` or `.json` case from disk, plus an optional injector sidecar.
Network load_network(std::string const& path, std::string const& injector_config_path = {});

SpanningTree bfs_spanning_tree(int n_buses, std::vector<Branch> const& branches);
std::vector<Cycle> cycle_basis(int n_buses, std::vector<Branch> const& branches, SpanningTree const& tree);
std::vector<Cycle> cycle_basis(Network const& network);

/// Im(1 / sum of series impedances over the cycle).
double cycle_scaling(Cycle const& cycle, std::vector<Branch> const& branches);

void compute_admittance(Branch& branch);

/// Bus angles from branch angles along the spanning tree with the root at zero.
std::vector<double> reconstruct_bus_angles(Network const& network, std::vector<double> const& branch_angles);

}  // namespace rpf
