#pragma once

#include <array>
#include <complex>
#include <span>

// Current injections of grid components, each expressed in the local frame of
// its terminal bus (bus voltage phasor real and positive). Current flowing into
// the bus is positive.
//
// Branch angle convention: phi = theta_from - theta_to, so power flows
// from -> to for positive phi. In the from-bus frame the to-bus voltage is
// V_t e^{-j phi}; in the to-bus frame the from-bus voltage is V_f e^{+j phi}.
// This pairing is the one that reproduces the nodal Y-bus balance.

namespace rpf {

using ComplexCurrent = std::complex<double>;

/// Magnitudes at or below this raise DegenerateVoltage.
inline constexpr double kVoltageFloor = 1e-3;

struct LoadControl {
    double p = 0.0;
    double q = 0.0;
};

struct GeneratorControl {
    double p_m = 0.0;
    double v_ref = 1.0;
};

struct GeneratorParams {
    double k_v = 1.0;
    double p_rated = 1.0;
};

/// Value and partial derivatives of a single-terminal injector.
struct InjectorEval {
    ComplexCurrent current;
    ComplexCurrent d_voltage;               // d i / d V_k
    std::array<ComplexCurrent, 2> d_control;  // d i / d (u_k[0], u_k[1])
};

/// Both terminal currents of a branch and their derivatives w.r.t. (V_f, V_t, phi).
struct BranchEval {
    ComplexCurrent at_from;
    ComplexCurrent at_to;
    std::array<ComplexCurrent, 3> d_from;
    std::array<ComplexCurrent, 3> d_to;
};

struct Branch;

/// i = -P/V - jQ/V.
ComplexCurrent load_current(LoadControl const& ctrl, double v);
InjectorEval load_partials(LoadControl const& ctrl, double v);

/// i = P_M/V + j K_V (V - V_ref). V below V_ref gives a negative imaginary
/// current, which is capacitive and lifts the bus voltage.
ComplexCurrent generator_current(GeneratorControl const& ctrl, GeneratorParams const& params, double v);
InjectorEval generator_partials(GeneratorControl const& ctrl, GeneratorParams const& params, double v);

/// Shunt admittance at a bus: i = -(g + jb) V.
InjectorEval shunt_partials(double g, double b, double v);

std::pair<ComplexCurrent, ComplexCurrent> branch_terminal_currents(Branch const& branch, double v_from, double v_to,
                                                                  double phi);
BranchEval branch_partials(Branch const& branch, double v_from, double v_to, double phi);

/// Extension point for components with internal states resolved to steady
/// state before the current is computed (x_k = x_k^SS(v, u_k)). Implementations
/// behave exactly like a static injector towards the residual assembly.
class SteadyStateInjector {
  public:
    virtual ~SteadyStateInjector() = default;

    virtual int n_controls() const = 0;
    virtual InjectorEval evaluate(double v, std::span<double const> control) const = 0;
};

}  // namespace rpf
