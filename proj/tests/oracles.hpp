#pragma once

// Closed-form and nested-solve references for the power-flow solver.

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "rpf/solver.hpp"
#include "test_support.hpp"

namespace rpf::testing {

struct TwoBusCase {
    Network net;
    double v2, phi, v_ref;
};

// Lossless line x, generator at bus 1 held at V1 = 1, load (p, q) at bus 2.
// The load draws p and q' = -q under S = V conj(I) with i = -(p + jq)/V.
// Receiving-end quadratic: V2^4 + (2 q' x - V1^2) V2^2 + (p^2 + q'^2) x^2 = 0.
inline TwoBusCase two_bus_closed_form(double p, double q, double x, double k_v) {
    double const v1 = 1.0;
    double const q_drawn = -q;
    double b = 2 * q_drawn * x - v1 * v1;
    double c = (p * p + q_drawn * q_drawn) * x * x;
    double v2 = std::sqrt((-b + std::sqrt(b * b - 4 * c)) / 2);
    double phi = std::asin(p * x / (v1 * v2));
    double q_sent = (v1 * v1 - v1 * v2 * std::cos(phi)) / x;
    double v_ref = v1 + q_sent / (k_v * v1);

    std::vector<GenDef> gens{{1, p * 100.0, v_ref}};
    auto spec = make_spec(2, {{1, 2, 0.0, x}}, {{2, p * 100.0, q * 100.0}}, gens);
    auto config = k_v_config(gens, {k_v});
    return {build_network(spec, &config), v2, phi, v_ref};
}

// Nested form: scalar root of the envelope derivative d/ds min_v rho, whose
// value at s is (dr/ds)^T W r evaluated at the inner minimizer.
inline double nested_slack(Network const& net, ControlVector const& u0, SlackSpec const& slack) {
    auto dir = slack.direction(ControlLayout::of(net));
    Eigen::Map<Eigen::VectorXd const> d(dir.data(), dir.size());
    SolverConfig cfg;
    auto derivative = [&](double s) {
        ControlVector u = u0;
        for (std::size_t i = 0; i < dir.size(); ++i) u.entries[i] += s * dir[i];
        auto inner = solve_rpf(net, u, cfg);
        cfg.warm_start = inner.v_star;
        auto eval = evaluate_residual(net, inner.v_star, u);
        Eigen::Map<Eigen::VectorXd const> r(eval.r.values.data(), eval.r.values.size());
        return (eval.d_control * d).dot(r);
    };
    double s0 = 0.0, s1 = 0.05;
    double g0 = derivative(s0), g1 = derivative(s1);
    for (int it = 0; it < 60 && std::abs(s1 - s0) > 1e-13; ++it) {
        double s2 = s1 - g1 * (s1 - s0) / (g1 - g0);
        s0 = s1;
        g0 = g1;
        s1 = s2;
        g1 = derivative(s1);
    }
    return s1;
}

}  // namespace rpf::testing
