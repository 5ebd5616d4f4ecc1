#include "rpf/injectors.hpp"

#include <string>

#include "rpf/errors.hpp"
#include "rpf/network.hpp"

namespace rpf {

namespace {

void check_voltage(double v) {
    if (!(v > kVoltageFloor)) {
        throw DegenerateVoltage("voltage magnitude " + std::to_string(v) + " at or below floor");
    }
}

}  // namespace

ComplexCurrent load_current(LoadControl const& ctrl, double v) {
    check_voltage(v);
    return {-ctrl.p / v, -ctrl.q / v};
}

InjectorEval load_partials(LoadControl const& ctrl, double v) {
    check_voltage(v);
    double const inv = 1.0 / v;
    InjectorEval e;
    e.current = {-ctrl.p * inv, -ctrl.q * inv};
    e.d_voltage = {ctrl.p * inv * inv, ctrl.q * inv * inv};
    e.d_control = {ComplexCurrent{-inv, 0.0}, ComplexCurrent{0.0, -inv}};
    return e;
}

ComplexCurrent generator_current(GeneratorControl const& ctrl, GeneratorParams const& params, double v) {
    check_voltage(v);
    return {ctrl.p_m / v, params.k_v * (v - ctrl.v_ref)};
}

InjectorEval generator_partials(GeneratorControl const& ctrl, GeneratorParams const& params, double v) {
    check_voltage(v);
    double const inv = 1.0 / v;
    InjectorEval e;
    e.current = {ctrl.p_m * inv, params.k_v * (v - ctrl.v_ref)};
    e.d_voltage = {-ctrl.p_m * inv * inv, params.k_v};
    e.d_control = {ComplexCurrent{inv, 0.0}, ComplexCurrent{0.0, -params.k_v}};
    return e;
}

InjectorEval shunt_partials(double g, double b, double v) {
    InjectorEval e;
    e.current = -ComplexCurrent{g, b} * v;
    e.d_voltage = -ComplexCurrent{g, b};
    e.d_control = {};
    return e;
}

std::pair<ComplexCurrent, ComplexCurrent> branch_terminal_currents(Branch const& branch, double v_from, double v_to,
                                                                  double phi) {
    ComplexCurrent const rot = std::polar(1.0, phi);
    ComplexCurrent const at_from = -branch.y_ff * v_from - branch.y_ft * v_to * std::conj(rot);
    ComplexCurrent const at_to = -branch.y_tf * v_from * rot - branch.y_tt * v_to;
    return {at_from, at_to};
}

BranchEval branch_partials(Branch const& branch, double v_from, double v_to, double phi) {
    using namespace std::complex_literals;
    ComplexCurrent const rot = std::polar(1.0, phi);
    ComplexCurrent const back = std::conj(rot);
    BranchEval e;
    e.at_from = -branch.y_ff * v_from - branch.y_ft * v_to * back;
    e.at_to = -branch.y_tf * v_from * rot - branch.y_tt * v_to;
    e.d_from = {-branch.y_ff, -branch.y_ft * back, 1i * branch.y_ft * v_to * back};
    e.d_to = {-branch.y_tf * rot, -branch.y_tt, -1i * branch.y_tf * v_from * rot};
    return e;
}

}  // namespace rpf
