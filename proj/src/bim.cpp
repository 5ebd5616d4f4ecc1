#include "rpf/bim.hpp"

#include <cmath>

#include "rpf/errors.hpp"

namespace rpf {

namespace {

std::string bus_tag(Network const& net, int b) { return std::to_string(net.buses[b].external_id); }

int generator_at(Network const& net, int bus) {
    for (std::size_t k = 0; k < net.generators.size(); ++k) {
        if (net.generators[k].bus == bus) return static_cast<int>(k);
    }
    return -1;
}

std::vector<std::complex<double>> injections_from_angles(Network const& net, std::vector<double> const& mags,
                                                         std::vector<double> const& theta) {
    int const n = net.n_buses();
    Eigen::VectorXcd voltage(n);
    for (int b = 0; b < n; ++b) voltage[b] = std::polar(mags[b], theta[b]);
    Eigen::VectorXcd current = build_ybus(net) * voltage;
    std::vector<std::complex<double>> s(n);
    for (int b = 0; b < n; ++b) s[b] = voltage[b] * std::conj(current[b]);
    return s;
}

}  // namespace

BimEncoding BimEncoding::from_network(Network const& network) {
    if (network.generators.empty()) throw ValidationError("bus-injection encoding needs a generator");
    BimEncoding enc;
    enc.roles.assign(network.n_buses(), BusRole::pq);
    enc.slack_bus = -1;
    for (auto const& b : network.buses) {
        if (b.type == 3 && generator_at(network, b.index) >= 0) {
            enc.slack_bus = b.index;
            break;
        }
    }
    if (enc.slack_bus < 0) enc.slack_bus = network.generators.front().bus;
    for (auto const& g : network.generators) enc.roles[g.bus] = BusRole::pv;
    enc.roles[enc.slack_bus] = BusRole::slack;
    enc.validate(network);
    return enc;
}

void BimEncoding::validate(Network const& network) const {
    if (static_cast<int>(roles.size()) != network.n_buses()) throw ValidationError("one role per bus required");
    if (slack_bus < 0 || slack_bus >= network.n_buses() || roles[slack_bus] != BusRole::slack) {
        throw ValidationError("slack bus role mismatch");
    }
    std::vector<int> gens_at(network.n_buses(), 0);
    for (auto const& g : network.generators) ++gens_at[g.bus];
    int n_slack = 0;
    for (int b = 0; b < network.n_buses(); ++b) {
        if (roles[b] == BusRole::slack) ++n_slack;
        if (roles[b] != BusRole::pq && gens_at[b] != 1) {
            throw ValidationError("PV and slack buses need exactly one generator (bus " + bus_tag(network, b) + ")");
        }
    }
    if (n_slack != 1) throw ValidationError("exactly one slack bus required");
}

int BimEncoding::n_targets() const noexcept {
    int n = static_cast<int>(roles.size()) - 1;
    for (auto r : roles) n += r == BusRole::pq ? 1 : 0;
    return n;
}

std::vector<std::string> BimEncoding::input_labels(Network const& network) const {
    std::vector<std::string> out;
    for (int b = 0; b < network.n_buses(); ++b) {
        auto tag = bus_tag(network, b);
        switch (roles[b]) {
            case BusRole::pq: out.push_back("P_" + tag); out.push_back("Q_" + tag); break;
            case BusRole::pv: out.push_back("P_" + tag); out.push_back("V_" + tag); break;
            case BusRole::slack: out.push_back("theta_" + tag); out.push_back("V_" + tag); break;
        }
    }
    return out;
}

std::vector<std::string> BimEncoding::target_labels(Network const& network) const {
    std::vector<std::string> out;
    for (int b = 0; b < network.n_buses(); ++b) {
        if (b != slack_bus) out.push_back("theta_" + bus_tag(network, b));
    }
    for (int b = 0; b < network.n_buses(); ++b) {
        if (roles[b] == BusRole::pq) out.push_back("V_" + bus_tag(network, b));
    }
    return out;
}

std::vector<std::complex<double>> bus_power_injections(Network const& network, VoltageState const& v, int ref_bus) {
    auto theta = reconstruct_bus_angles(network, v.branch_angles);
    double const offset = theta.at(ref_bus);
    for (auto& t : theta) t -= offset;
    return injections_from_angles(network, v.magnitudes, theta);
}

std::vector<double> bim_inputs(Network const& network, BimEncoding const& enc, VoltageState const& v) {
    auto s = bus_power_injections(network, v, enc.slack_bus);
    std::vector<double> out;
    out.reserve(enc.n_inputs());
    for (int b = 0; b < network.n_buses(); ++b) {
        switch (enc.roles[b]) {
            case BusRole::pq: out.push_back(s[b].real()); out.push_back(s[b].imag()); break;
            case BusRole::pv: out.push_back(s[b].real()); out.push_back(v.magnitudes[b]); break;
            case BusRole::slack: out.push_back(0.0); out.push_back(v.magnitudes[b]); break;
        }
    }
    return out;
}

std::vector<double> bim_targets(Network const& network, BimEncoding const& enc, VoltageState const& v) {
    auto theta = reconstruct_bus_angles(network, v.branch_angles);
    double const offset = theta[enc.slack_bus];
    std::vector<double> out;
    out.reserve(enc.n_targets());
    for (int b = 0; b < network.n_buses(); ++b) {
        if (b != enc.slack_bus) out.push_back(theta[b] - offset);
    }
    for (int b = 0; b < network.n_buses(); ++b) {
        if (enc.roles[b] == BusRole::pq) out.push_back(v.magnitudes[b]);
    }
    return out;
}

TrainingData bim_training_data(Network const& network, BimEncoding const& enc, Dataset const& dataset) {
    enc.validate(network);
    TrainingData data;
    data.n_inputs = enc.n_inputs();
    data.n_outputs = enc.n_targets();
    for (auto const& rec : dataset.records) {
        if (!rec.feasible) continue;
        auto const& v = rec.v_star;
        auto x = bim_inputs(network, enc, v);
        auto t = bim_targets(network, enc, v);
        data.inputs.insert(data.inputs.end(), x.begin(), x.end());
        data.targets.insert(data.targets.end(), t.begin(), t.end());
        ++data.n_samples;
    }
    return data;
}

BimDecoded bim_decode(Network const& network, BimEncoding const& enc, std::span<double const> inputs,
                      std::span<double const> targets, ControlVector const& u_reference) {
    int const n = network.n_buses();
    if (static_cast<int>(inputs.size()) != enc.n_inputs() || static_cast<int>(targets.size()) != enc.n_targets()) {
        throw ValidationError("bus-injection input/target length mismatch");
    }
    if (static_cast<int>(u_reference.entries.size()) != network.n_controls()) {
        throw ValidationError("control vector length mismatch");
    }
    BimDecoded out;
    out.bus_angles.assign(n, 0.0);
    out.v.magnitudes.assign(n, 0.0);
    std::size_t t = 0;
    for (int b = 0; b < n; ++b) {
        if (b == enc.slack_bus) out.bus_angles[b] = inputs[2 * b];
        else out.bus_angles[b] = targets[t++];
    }
    for (int b = 0; b < n; ++b) {
        out.v.magnitudes[b] = enc.roles[b] == BusRole::pq ? targets[t++] : inputs[2 * b + 1];
        if (!(out.v.magnitudes[b] > kVoltageFloor)) throw DegenerateVoltage("decoded magnitude at or below floor");
    }
    out.v.branch_angles.resize(network.n_branches());
    for (auto const& br : network.branches) {
        out.v.branch_angles[br.index] = out.bus_angles[br.from] - out.bus_angles[br.to];
    }

    auto s = injections_from_angles(network, out.v.magnitudes, out.bus_angles);
    auto const layout = ControlLayout::of(network);
    out.u = u_reference;
    for (int b = 0; b < n; ++b) {
        if (enc.roles[b] == BusRole::pq) continue;
        // the network injection at the bus minus what loads there contribute
        double p_gen = enc.roles[b] == BusRole::pv ? inputs[2 * b] : s[b].real();
        double q_gen = s[b].imag();
        for (int i = 0; i < layout.n_loads; ++i) {
            if (network.loads[i].bus != b) continue;
            p_gen += u_reference.entries[layout.load_p(i)];
            q_gen -= u_reference.entries[layout.load_q(i)];
        }
        int k = generator_at(network, b);
        double const vb = out.v.magnitudes[b];
        out.u.entries[layout.gen_p(k)] = p_gen;
        out.u.entries[layout.gen_v_ref(k)] = vb + q_gen / (network.generators[k].params.k_v * vb);
    }
    return out;
}

std::vector<int> bim_structural_zero_indices(Network const& network, BimEncoding const& enc) {
    enc.validate(network);
    int const n = network.n_buses();
    std::vector<int> out;
    out.push_back(enc.slack_bus);
    for (int b = 0; b < n; ++b) {
        if (enc.roles[b] != BusRole::pq) out.push_back(n + b);
    }
    for (int c = 0; c < network.n_cycles(); ++c) out.push_back(2 * n + c);
    return out;
}

double average_residual(ResidualVector const& r, std::size_t n_structural_zeros) {
    if (n_structural_zeros >= r.values.size()) throw ValidationError("no residual entries left to average");
    return residual_norm(r) / static_cast<double>(r.values.size() - n_structural_zeros);
}

}  // namespace rpf
