#include "rpf/residual.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "rpf/errors.hpp"
#include "rpf/io.hpp"

namespace rpf {

VoltageState VoltageState::flat(Network const& network) {
    return {std::vector<double>(network.n_buses(), 1.0), std::vector<double>(network.n_branches(), 0.0)};
}

VoltageState VoltageState::from_flat(Network const& network, std::span<double const> values) {
    if (static_cast<int>(values.size()) != network.n_voltage_vars()) {
        throw FormatError("voltage vector has " + std::to_string(values.size()) + " entries, expected " +
                          std::to_string(network.n_voltage_vars()));
    }
    auto const n = static_cast<std::size_t>(network.n_buses());
    return {{values.begin(), values.begin() + n}, {values.begin() + n, values.end()}};
}

std::vector<double> VoltageState::flatten() const {
    std::vector<double> out = magnitudes;
    out.insert(out.end(), branch_angles.begin(), branch_angles.end());
    return out;
}

ControlLayout ControlLayout::of(Network const& network) {
    return {static_cast<int>(network.loads.size()), static_cast<int>(network.generators.size())};
}

std::vector<std::string> ControlLayout::labels(Network const& network) const {
    std::vector<std::string> out(size());
    for (int i = 0; i < n_loads; ++i) {
        auto id = std::to_string(network.buses[network.loads[i].bus].external_id);
        out[load_p(i)] = "p_load_" + id;
        out[load_q(i)] = "q_load_" + id;
    }
    for (int k = 0; k < n_generators; ++k) {
        auto id = std::to_string(network.buses[network.generators[k].bus].external_id);
        out[gen_p(k)] = "pm_gen_" + id;
        out[gen_v_ref(k)] = "vref_gen_" + id;
    }
    return out;
}

ControlVector ControlVector::nominal(Network const& network) {
    auto layout = ControlLayout::of(network);
    ControlVector u{std::vector<double>(layout.size())};
    for (int i = 0; i < layout.n_loads; ++i) {
        u.entries[layout.load_p(i)] = network.loads[i].p;
        u.entries[layout.load_q(i)] = network.loads[i].q;
    }
    for (int k = 0; k < layout.n_generators; ++k) {
        u.entries[layout.gen_p(k)] = network.generators[k].p;
        u.entries[layout.gen_v_ref(k)] = network.generators[k].v_ref;
    }
    return u;
}

void ResidualWeights::validate(std::size_t n) const {
    if (w.size() != n) throw ValidationError("residual weights have wrong length");
    for (double x : w) {
        if (!(x > 0.0)) throw ValidationError("residual weights must be positive");
    }
}

SlackSpec SlackSpec::single(int generator) { return {Mode::single, {{generator, 1.0}}}; }

SlackSpec SlackSpec::distributed(std::vector<std::pair<int, double>> targets) {
    return {Mode::distributed, std::move(targets)};
}

SlackSpec SlackSpec::equal_share(int n_generators) {
    std::vector<std::pair<int, double>> t;
    for (int k = 0; k < n_generators; ++k) t.emplace_back(k, 1.0 / n_generators);
    return distributed(std::move(t));
}

SlackSpec SlackSpec::by_rating(Network const& network) {
    double total = 0.0;
    for (auto const& g : network.generators) total += g.params.p_rated;
    std::vector<std::pair<int, double>> t;
    for (int k = 0; k < static_cast<int>(network.generators.size()); ++k) {
        t.emplace_back(k, network.generators[k].params.p_rated / total);
    }
    return distributed(std::move(t));
}

void SlackSpec::validate(int n_generators) const {
    if (targets.empty()) throw ValidationError("slack needs at least one target");
    double sum = 0.0;
    for (auto [k, f] : targets) {
        if (k < 0 || k >= n_generators) throw ValidationError("slack target is not a generator");
        if (f < 0.0) throw ValidationError("slack participation must be non-negative");
        sum += f;
    }
    if (std::abs(sum - 1.0) > 1e-12) throw ValidationError("slack participation factors must sum to 1");
}

std::vector<double> SlackSpec::direction(ControlLayout const& layout) const {
    std::vector<double> d(layout.size(), 0.0);
    for (auto [k, f] : targets) d[layout.gen_p(k)] += f;
    return d;
}

namespace {

void check_shapes(Network const& network, VoltageState const& v, ControlVector const& u) {
    if (static_cast<int>(v.magnitudes.size()) != network.n_buses() ||
        static_cast<int>(v.branch_angles.size()) != network.n_branches()) {
        throw FormatError("voltage state does not match network");
    }
    if (static_cast<int>(u.entries.size()) != network.n_controls()) {
        throw FormatError("control vector does not match network layout");
    }
}

}  // namespace

ResidualVector assemble_residual(Network const& network, VoltageState const& v, ControlVector const& u) {
    check_shapes(network, v, u);
    int const n = network.n_buses();
    auto const layout = ControlLayout::of(network);
    std::vector<ComplexCurrent> c(n);

    for (int i = 0; i < layout.n_loads; ++i) {
        int bus = network.loads[i].bus;
        c[bus] += load_current(u.load(layout, i), v.magnitudes[bus]);
    }
    for (int k = 0; k < layout.n_generators; ++k) {
        auto const& g = network.generators[k];
        c[g.bus] += generator_current(u.generator(layout, k), g.params, v.magnitudes[g.bus]);
    }
    for (auto const& b : network.buses) {
        if (b.g_shunt != 0.0 || b.b_shunt != 0.0) c[b.index] -= ComplexCurrent{b.g_shunt, b.b_shunt} * v.magnitudes[b.index];
    }
    for (auto const& br : network.branches) {
        auto [at_from, at_to] =
            branch_terminal_currents(br, v.magnitudes[br.from], v.magnitudes[br.to], v.branch_angles[br.index]);
        c[br.from] += at_from;
        c[br.to] += at_to;
    }

    ResidualVector r{std::vector<double>(network.n_residuals()), n, network.n_cycles()};
    for (int b = 0; b < n; ++b) {
        r.values[b] = c[b].real();
        r.values[n + b] = c[b].imag();
    }
    for (auto const& cyc : network.cycles) {
        double sum = 0.0;
        for (std::size_t k = 0; k < cyc.branch_ids.size(); ++k) sum += cyc.orientations[k] * v.branch_angles[cyc.branch_ids[k]];
        r.values[2 * n + cyc.index] = cyc.y_scale * sum;
    }
    return r;
}

double residual_norm(ResidualVector const& r, ResidualWeights const& w) {
    w.validate(r.values.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < r.values.size(); ++i) sum += w.w[i] * r.values[i] * r.values[i];
    return 0.5 * sum;
}

double residual_norm(ResidualVector const& r) {
    double sum = 0.0;
    for (double x : r.values) sum += x * x;
    return 0.5 * sum;
}

ResidualEval evaluate_residual(Network const& network, VoltageState const& v, ControlVector const& u) {
    ResidualEval out;
    out.r = assemble_residual(network, v, u);
    int const n = network.n_buses();
    auto const layout = ControlLayout::of(network);
    auto& jv = out.d_voltage;
    auto& ju = out.d_control;
    jv.setZero(network.n_residuals(), network.n_voltage_vars());
    ju.setZero(network.n_residuals(), network.n_controls());

    auto add_v = [&](int bus, int col, ComplexCurrent d) {
        jv(bus, col) += d.real();
        jv(n + bus, col) += d.imag();
    };

    for (int i = 0; i < layout.n_loads; ++i) {
        int bus = network.loads[i].bus;
        auto e = load_partials(u.load(layout, i), v.magnitudes[bus]);
        add_v(bus, bus, e.d_voltage);
        ju(bus, layout.load_p(i)) = e.d_control[0].real();
        ju(n + bus, layout.load_p(i)) = e.d_control[0].imag();
        ju(bus, layout.load_q(i)) = e.d_control[1].real();
        ju(n + bus, layout.load_q(i)) = e.d_control[1].imag();
    }
    for (int k = 0; k < layout.n_generators; ++k) {
        auto const& g = network.generators[k];
        auto e = generator_partials(u.generator(layout, k), g.params, v.magnitudes[g.bus]);
        add_v(g.bus, g.bus, e.d_voltage);
        ju(g.bus, layout.gen_p(k)) = e.d_control[0].real();
        ju(n + g.bus, layout.gen_p(k)) = e.d_control[0].imag();
        ju(g.bus, layout.gen_v_ref(k)) = e.d_control[1].real();
        ju(n + g.bus, layout.gen_v_ref(k)) = e.d_control[1].imag();
    }
    for (auto const& b : network.buses) {
        if (b.g_shunt != 0.0 || b.b_shunt != 0.0) {
            add_v(b.index, b.index, shunt_partials(b.g_shunt, b.b_shunt, v.magnitudes[b.index]).d_voltage);
        }
    }
    // Angle columns touch only the two terminal KCL rows and the cycle rows.
    for (auto const& br : network.branches) {
        auto e = branch_partials(br, v.magnitudes[br.from], v.magnitudes[br.to], v.branch_angles[br.index]);
        int const cols[3] = {br.from, br.to, n + br.index};
        for (int j = 0; j < 3; ++j) {
            add_v(br.from, cols[j], e.d_from[j]);
            add_v(br.to, cols[j], e.d_to[j]);
        }
    }
    for (auto const& cyc : network.cycles) {
        for (std::size_t k = 0; k < cyc.branch_ids.size(); ++k) {
            jv(2 * n + cyc.index, n + cyc.branch_ids[k]) += cyc.y_scale * cyc.orientations[k];
        }
    }
    return out;
}

Eigen::MatrixXd residual_jacobian_voltage(Network const& network, VoltageState const& v, ControlVector const& u) {
    return evaluate_residual(network, v, u).d_voltage;
}

Eigen::MatrixXd residual_jacobian_controls(Network const& network, VoltageState const& v, ControlVector const& u,
                                           std::span<int const> control_indices) {
    auto full = evaluate_residual(network, v, u).d_control;
    Eigen::MatrixXd out(full.rows(), static_cast<Eigen::Index>(control_indices.size()));
    for (std::size_t j = 0; j < control_indices.size(); ++j) out.col(j) = full.col(control_indices[j]);
    return out;
}

Eigen::VectorXd residual_gradient_voltage(ResidualEval const& eval, ResidualWeights const& w) {
    w.validate(eval.r.values.size());
    Eigen::VectorXd wr(eval.r.values.size());
    for (std::size_t i = 0; i < eval.r.values.size(); ++i) wr[i] = w.w[i] * eval.r.values[i];
    return eval.d_voltage.transpose() * wr;
}

Eigen::MatrixXcd build_ybus(Network const& network) {
    int const n = network.n_buses();
    Eigen::MatrixXcd y = Eigen::MatrixXcd::Zero(n, n);
    for (auto const& br : network.branches) {
        y(br.from, br.from) += br.y_ff;
        y(br.from, br.to) += br.y_ft;
        y(br.to, br.from) += br.y_tf;
        y(br.to, br.to) += br.y_tt;
    }
    for (auto const& b : network.buses) y(b.index, b.index) += std::complex<double>(b.g_shunt, b.b_shunt);
    return y;
}

std::vector<std::complex<double>> ybus_oracle_mismatch(Network const& network, VoltageState const& v,
                                                       ControlVector const& u, int ref_bus) {
    check_shapes(network, v, u);
    for (auto const& cyc : network.cycles) {
        double sum = 0.0;
        for (std::size_t k = 0; k < cyc.branch_ids.size(); ++k) sum += cyc.orientations[k] * v.branch_angles[cyc.branch_ids[k]];
        if (std::abs(cyc.y_scale * sum) > 1e-9) {
            throw AngleInconsistency("cycle " + std::to_string(cyc.index + 1) + " violates the voltage law");
        }
    }
    int const n = network.n_buses();
    auto theta = reconstruct_bus_angles(network, v.branch_angles);
    double const offset = theta.at(ref_bus);
    Eigen::VectorXcd voltage(n);
    for (int b = 0; b < n; ++b) voltage[b] = std::polar(v.magnitudes[b], theta[b] - offset);
    Eigen::VectorXcd network_current = build_ybus(network) * voltage;

    auto const layout = ControlLayout::of(network);
    std::vector<std::complex<double>> injected(n);
    for (int i = 0; i < layout.n_loads; ++i) {
        int bus = network.loads[i].bus;
        injected[bus] += load_current(u.load(layout, i), v.magnitudes[bus]) * std::polar(1.0, theta[bus] - offset);
    }
    for (int k = 0; k < layout.n_generators; ++k) {
        auto const& g = network.generators[k];
        injected[g.bus] += generator_current(u.generator(layout, k), g.params, v.magnitudes[g.bus]) *
                           std::polar(1.0, theta[g.bus] - offset);
    }
    std::vector<std::complex<double>> mismatch(n);
    for (int b = 0; b < n; ++b) mismatch[b] = injected[b] - network_current[b];
    return mismatch;
}

double max_abs(std::vector<std::complex<double>> const& values) {
    double m = 0.0;
    for (auto const& x : values) m = std::max(m, std::abs(x));
    return m;
}

std::vector<std::string> residual_labels(Network const& network) {
    std::vector<std::string> out;
    for (auto const& b : network.buses) out.push_back("re_kcl_" + std::to_string(b.external_id));
    for (auto const& b : network.buses) out.push_back("im_kcl_" + std::to_string(b.external_id));
    for (auto const& c : network.cycles) out.push_back("kvl_" + std::to_string(c.index + 1));
    return out;
}

std::vector<std::string> state_labels(Network const& network) {
    std::vector<std::string> out;
    for (auto const& b : network.buses) out.push_back("v_" + std::to_string(b.external_id));
    for (auto const& br : network.branches) out.push_back("phi_" + std::to_string(br.index + 1));
    return out;
}

namespace {

std::string label_value_csv(std::vector<std::string> const& labels, std::vector<double> const& values) {
    std::ostringstream out;
    out << "label,value\n";
    for (std::size_t i = 0; i < values.size(); ++i) out << labels[i] << ',' << io::format_real(values[i]) << '\n';
    return out.str();
}

}  // namespace

std::string residual_to_csv(Network const& network, ResidualVector const& r) {
    return label_value_csv(residual_labels(network), r.values);
}

std::string state_to_csv(Network const& network, VoltageState const& v) {
    return label_value_csv(state_labels(network), v.flatten());
}

}  // namespace rpf
