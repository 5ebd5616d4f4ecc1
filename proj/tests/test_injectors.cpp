#include <gtest/gtest.h>

#include <random>

#include "rpf/errors.hpp"
#include "rpf/injectors.hpp"
#include "rpf/network.hpp"
#include "test_support.hpp"

namespace rpf {
namespace {

using C = std::complex<double>;

Branch series_branch(double r, double x, double b_c = 0.0, double tap = 1.0) {
    Branch br;
    br.r = r;
    br.x = x;
    br.b_c = b_c;
    br.tap = tap;
    compute_admittance(br);
    return br;
}

TEST(LoadCurrent, Examples) {
    EXPECT_EQ(load_current({1.0, 0.0}, 1.0), C(-1.0, 0.0));
    EXPECT_EQ(load_current({1.0, 0.5}, 0.5), C(-2.0, -1.0));
    auto zero = load_current({0.0, 0.0}, 0.97);
    EXPECT_EQ(zero.real(), 0.0);
    EXPECT_EQ(zero.imag(), 0.0);
}

TEST(LoadCurrent, VoltageFloor) {
    EXPECT_THROW(load_current({1.0, 0.0}, 0.0), DegenerateVoltage);
    EXPECT_THROW(load_current({1.0, 0.0}, kVoltageFloor), DegenerateVoltage);
    EXPECT_NO_THROW(load_current({1.0, 0.0}, 2 * kVoltageFloor));
}

TEST(GeneratorCurrent, Examples) {
    EXPECT_EQ(generator_current({0.0, 1.0}, {130.0, 1.0}, 1.0), C(0.0, 0.0));
    EXPECT_EQ(generator_current({1.0, 1.0}, {130.0, 1.0}, 1.0), C(1.0, 0.0));
    auto i = generator_current({0.0, 1.05}, {21.0, 1.0}, 1.0);
    EXPECT_NEAR(std::abs(i.imag()), 1.05, 1e-12);
    // below reference the injection is capacitive (negative imaginary)
    EXPECT_LT(i.imag(), 0.0);
    EXPECT_THROW(generator_current({1.0, 1.0}, {130.0, 1.0}, -0.5), DegenerateVoltage);
}

TEST(BranchCurrent, SeriesOnlyCancelsAtFlatState) {
    auto br = series_branch(0.0, 0.1);
    auto [f, t] = branch_terminal_currents(br, 1.0, 1.0, 0.0);
    EXPECT_NEAR(std::abs(f), 0.0, 1e-15);
    EXPECT_NEAR(std::abs(t), 0.0, 1e-15);
}

TEST(BranchCurrent, AngleMagnitude) {
    auto br = series_branch(0.0, 0.1);
    auto [f, t] = branch_terminal_currents(br, 1.0, 1.0, 0.1);
    EXPECT_NEAR(std::abs(f), 20.0 * std::sin(0.05), 1e-12);
    EXPECT_NEAR(std::abs(f), 0.9996, 1e-4);
    EXPECT_NEAR(std::abs(t), std::abs(f), 1e-12);
    // positive phi carries real power from -> to: the from bus sees an outflow
    EXPECT_GT((C(1.0, 0.0) * std::conj(-f)).real(), 0.0);
}

TEST(BranchCurrent, MagnitudeDifferenceIsReactive) {
    auto br = series_branch(0.0, 0.1);
    auto [f, t] = branch_terminal_currents(br, 1.05, 1.0, 0.0);
    EXPECT_NEAR(std::abs(f), 0.5, 1e-12);
    EXPECT_NEAR(f.real(), 0.0, 1e-15);
    EXPECT_NEAR(std::abs(t), 0.5, 1e-12);
}

TEST(Partials, LoadAndGeneratorClosedForm) {
    auto load = load_partials({1.0, 0.0}, 1.0);
    EXPECT_DOUBLE_EQ(load.d_voltage.real(), 1.0);
    EXPECT_DOUBLE_EQ(load.d_control[0].real(), -1.0);
    for (double v : {0.8, 1.0, 1.2}) {
        auto gen = generator_partials({0.5, 1.0}, {21.0, 1.0}, v);
        EXPECT_DOUBLE_EQ(gen.d_voltage.imag(), 21.0);
        EXPECT_DOUBLE_EQ(gen.d_control[1].imag(), -21.0);
    }
}

// Central differences over random states, v in [0.8, 1.2], phi in [-0.5, 0.5].
TEST(Partials, FiniteDifferencePropertyAllInjectors) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> volt(0.8, 1.2), ang(-0.5, 0.5), any(-2.0, 2.0), pos(0.1, 50.0);
    for (int trial = 0; trial < 100; ++trial) {
        double v = volt(rng);
        LoadControl lc{any(rng), any(rng)};
        GeneratorControl gc{any(rng), volt(rng)};
        GeneratorParams gp{pos(rng), 1.0};

        auto lp = load_partials(lc, v);
        Eigen::VectorXd x(3);
        x << v, lc.p, lc.q;
        auto load_fd = testing::central_jacobian(
            [](Eigen::VectorXd const& z) {
                auto i = load_current({z[1], z[2]}, z[0]);
                return Eigen::Vector2d(i.real(), i.imag()).eval();
            },
            x);
        Eigen::MatrixXd load_an(2, 3);
        for (int c = 0; c < 3; ++c) {
            C d = c == 0 ? lp.d_voltage : lp.d_control[c - 1];
            load_an.col(c) << d.real(), d.imag();
        }
        EXPECT_LE(testing::relative_error(load_an, load_fd), 1e-6);

        auto gpart = generator_partials(gc, gp, v);
        x << v, gc.p_m, gc.v_ref;
        auto gen_fd = testing::central_jacobian(
            [&](Eigen::VectorXd const& z) {
                auto i = generator_current({z[1], z[2]}, gp, z[0]);
                return Eigen::Vector2d(i.real(), i.imag()).eval();
            },
            x);
        Eigen::MatrixXd gen_an(2, 3);
        for (int c = 0; c < 3; ++c) {
            C d = c == 0 ? gpart.d_voltage : gpart.d_control[c - 1];
            gen_an.col(c) << d.real(), d.imag();
        }
        EXPECT_LE(testing::relative_error(gen_an, gen_fd), 1e-6);

        auto br = series_branch(std::abs(any(rng)) * 0.05, 0.02 + std::abs(any(rng)) * 0.1, std::abs(any(rng)) * 0.2,
                                trial % 3 == 0 ? 0.95 + 0.05 * std::abs(any(rng)) : 1.0);
        br.shift = trial % 4 == 0 ? 0.05 : 0.0;
        compute_admittance(br);
        double vf = volt(rng), vt = volt(rng), phi = ang(rng);
        auto bp = branch_partials(br, vf, vt, phi);
        x << vf, vt, phi;
        auto br_fd = testing::central_jacobian(
            [&](Eigen::VectorXd const& z) {
                auto [f, t] = branch_terminal_currents(br, z[0], z[1], z[2]);
                return Eigen::Vector4d(f.real(), f.imag(), t.real(), t.imag()).eval();
            },
            x);
        Eigen::MatrixXd br_an(4, 3);
        for (int c = 0; c < 3; ++c) br_an.col(c) << bp.d_from[c].real(), bp.d_from[c].imag(), bp.d_to[c].real(),
            bp.d_to[c].imag();
        EXPECT_LE(testing::relative_error(br_an, br_fd), 1e-6);
        EXPECT_EQ(bp.at_from, branch_terminal_currents(br, vf, vt, phi).first);

        auto sp = shunt_partials(0.1, any(rng), v);
        x << v, 0.0, 0.0;
        EXPECT_NEAR(sp.d_voltage.imag() * v, sp.current.imag(), 1e-14);
    }
}

TEST(BranchCurrent, OrientationAntisymmetry) {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> volt(0.8, 1.2), ang(-0.5, 0.5), imp(0.01, 0.2);
    for (int trial = 0; trial < 100; ++trial) {
        auto br = series_branch(imp(rng) * 0.3, imp(rng), imp(rng));
        double vf = volt(rng), vt = volt(rng), phi = ang(rng);
        auto [f, t] = branch_terminal_currents(br, vf, vt, phi);
        auto [f2, t2] = branch_terminal_currents(br, vt, vf, -phi);
        EXPECT_NEAR(std::abs(f - t2), 0.0, 1e-13);
        EXPECT_NEAR(std::abs(t - f2), 0.0, 1e-13);
    }
}

TEST(BranchCurrent, LosslessBranchConservesActivePower) {
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> volt(0.8, 1.2), ang(-0.5, 0.5);
    for (int trial = 0; trial < 50; ++trial) {
        auto br = series_branch(0.0, 0.1, 0.05);
        double vf = volt(rng), vt = volt(rng), phi = ang(rng);
        auto [f, t] = branch_terminal_currents(br, vf, vt, phi);
        // power drawn out of both buses: -V conj(i) with V real in the local frame
        double p_out = -(vf * std::conj(f)).real() - (vt * std::conj(t)).real();
        EXPECT_NEAR(p_out, 0.0, 1e-12);
    }
}

// Only branch-angle differences enter: rotating both bus phasors leaves the
// local-frame currents unchanged, checked through the absolute-frame formula.
TEST(BranchCurrent, MatchesAbsoluteFrameFormula) {
    auto br = series_branch(0.01, 0.1, 0.02, 0.97);
    br.shift = 0.03;
    compute_admittance(br);
    for (double theta_f : {0.0, 0.7, -1.3}) {
        double theta_t = theta_f - 0.2;
        C vf = std::polar(1.02, theta_f), vt = std::polar(0.98, theta_t);
        C flow_f = br.y_ff * vf + br.y_ft * vt;
        C flow_t = br.y_tf * vf + br.y_tt * vt;
        auto [f, t] = branch_terminal_currents(br, 1.02, 0.98, theta_f - theta_t);
        EXPECT_NEAR(std::abs(f + flow_f * std::polar(1.0, -theta_f)), 0.0, 1e-13);
        EXPECT_NEAR(std::abs(t + flow_t * std::polar(1.0, -theta_t)), 0.0, 1e-13);
    }
}

}  // namespace
}  // namespace rpf
