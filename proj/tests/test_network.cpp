#include <gtest/gtest.h>

#include <numeric>
#include <random>
#include <set>

#include "rpf/errors.hpp"
#include "rpf/network.hpp"
#include "test_support.hpp"

namespace rpf {
namespace {

using testing::BranchDef;
using testing::make_spec;

TEST(ParseMatpower, Case9TableCounts) {
    auto spec = parse_matpower_case(testing::case9_text());
    EXPECT_EQ(spec.bus.size(), 9u);
    EXPECT_EQ(spec.branch.size(), 9u);
    EXPECT_EQ(spec.gen.size(), 3u);
    EXPECT_EQ(spec.gencost.size(), 3u);
    EXPECT_DOUBLE_EQ(spec.base_mva, 100.0);
    EXPECT_TRUE(spec.warnings.empty());
}

TEST(ParseMatpower, EmptyTextIsMissingSection) { EXPECT_THROW(parse_matpower_case(""), MissingSection); }

TEST(ParseMatpower, MissingBranchIsMissingSection) {
    EXPECT_THROW(parse_matpower_case("mpc.baseMVA = 100;\nmpc.bus = [\n1 3 0 0 0 0 1 1 0 345 1 1.1 0.9;\n];\n"),
                 MissingSection);
}

TEST(ParseMatpower, CommentLinesAreTransparent) {
    auto text = testing::case9_text();
    auto pos = text.find("mpc.bus");
    auto commented = text.substr(0, pos) + "% an extra remark about the bus table\n" + text.substr(pos);
    EXPECT_EQ(parse_matpower_case(commented), parse_matpower_case(text));
}

TEST(ParseMatpower, UnterminatedMatrixReportsOpeningLine) {
    try {
        parse_matpower_case("mpc.baseMVA = 100;\nmpc.bus = [\n1 3 0 0 0 0 1 1 0 345 1 1.1 0.9;\n");
        FAIL() << "expected SyntaxError";
    } catch (SyntaxError const& e) {
        EXPECT_EQ(e.line(), 2);
        EXPECT_EQ(e.column(), 11);
    }
}

TEST(ParseMatpower, NonNumericTokenReportsPosition) {
    try {
        parse_matpower_case("mpc.bus = [\n1 3 abc 0;\n];\nmpc.branch = [\n];\n");
        FAIL() << "expected SyntaxError";
    } catch (SyntaxError const& e) {
        EXPECT_EQ(e.line(), 2);
        EXPECT_EQ(e.column(), 5);
    }
}

TEST(ParseMatpower, UnknownMatricesAreIgnoredWithWarning) {
    auto text = testing::case9_text() + "\nmpc.areas = [\n1 5;\n];\nmpc.bus_name = {\n'a';\n};\n";
    auto spec = parse_matpower_case(text);
    EXPECT_EQ(spec.bus.size(), 9u);
    ASSERT_EQ(spec.warnings.size(), 2u);
    EXPECT_NE(spec.warnings[0].find("areas"), std::string::npos);
}

TEST(ParseMatpower, InfinityTokensAndCommas) {
    auto spec = parse_matpower_case("mpc.bus = [1, 3, 0, 0, 0, 0, 1, 1, 0, 345, 1, Inf, -inf];\nmpc.branch = [];\n");
    ASSERT_EQ(spec.bus.size(), 1u);
    EXPECT_TRUE(std::isinf(spec.bus[0][11]));
    EXPECT_LT(spec.bus[0][12], 0.0);
}

TEST(ParseMatpower, SerializeRoundTripIsIdentity) {
    auto spec = parse_matpower_case(testing::case9_text());
    EXPECT_EQ(parse_matpower_case(serialize_matpower_case(spec)), spec);

    // Random specs with awkward reals survive the text round trip bit for bit.
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> dist(-1e3, 1e3);
    for (int trial = 0; trial < 20; ++trial) {
        NetworkSpec s;
        s.base_mva = std::abs(dist(rng)) + 1.0;
        for (int i = 0; i < 5; ++i) {
            std::vector<double> row(13);
            for (auto& x : row) x = dist(rng) / 7.0;
            s.bus.push_back(row);
            std::vector<double> br(13);
            for (auto& x : br) x = dist(rng) * 1e-9;
            s.branch.push_back(br);
        }
        EXPECT_EQ(parse_matpower_case(serialize_matpower_case(s)), s);
    }
}

TEST(BuildNetwork, Case9Dimensions) {
    auto net = testing::case9();
    EXPECT_EQ(net.n_buses(), 9);
    EXPECT_EQ(net.n_branches(), 9);
    EXPECT_EQ(net.n_cycles(), 1);
    EXPECT_EQ(net.loads.size(), 3u);
    EXPECT_EQ(net.generators.size(), 3u);
    EXPECT_EQ(net.n_voltage_vars(), 18);
    EXPECT_EQ(net.n_residuals(), 19);
    EXPECT_EQ(net.n_controls(), 12);
    EXPECT_DOUBLE_EQ(net.loads[0].p, 0.9);
    EXPECT_DOUBLE_EQ(net.generators[0].params.k_v, 130.0);
    EXPECT_DOUBLE_EQ(net.generators[2].params.k_v, 13.0);
    EXPECT_DOUBLE_EQ(net.generators[1].p_max, 3.0);
}

TEST(BuildNetwork, Case9CycleIsTheRing) {
    auto net = testing::case9();
    ASSERT_EQ(net.cycles.size(), 1u);
    auto const& cycle = net.cycles[0];
    std::set<int> ids(cycle.branch_ids.begin(), cycle.branch_ids.end());
    // 4-5, 5-6, 6-7, 7-8, 8-9, 9-4
    EXPECT_EQ(ids, (std::set<int>{1, 2, 4, 5, 7, 8}));

    std::complex<double> z{0.0, 0.0};
    for (int id : {1, 2, 4, 5, 7, 8}) z += std::complex<double>(net.branches[id].r, net.branches[id].x);
    EXPECT_NEAR(cycle.y_scale, std::imag(1.0 / z), 1e-15);
    EXPECT_NEAR(cycle.y_scale, -1.4257, 1e-4);
}

TEST(BuildNetwork, DefaultsWithoutInjectorConfig) {
    auto net = build_network(parse_matpower_case(testing::case9_text()));
    EXPECT_DOUBLE_EQ(net.generators[1].params.k_v, 21.0);
    EXPECT_DOUBLE_EQ(net.generators[0].params.p_rated, 2.5);
}

TEST(BuildNetwork, TwoBusHasNoCycles) {
    auto net = build_network(make_spec(2, {{1, 2, 0.0, 0.1}}));
    EXPECT_EQ(net.n_cycles(), 0);
}

TEST(BuildNetwork, ValidationErrors) {
    EXPECT_THROW(build_network(make_spec(2, {{1, 1, 0.0, 0.1}, {1, 2, 0.0, 0.1}})), ValidationError);
    EXPECT_THROW(build_network(make_spec(2, {{1, 2, 0.0, 0.0}})), ValidationError);
    EXPECT_THROW(build_network(make_spec(3, {{1, 2, 0.0, 0.1}})), ValidationError);
    auto dup = make_spec(2, {{1, 2, 0.0, 0.1}});
    dup.bus[1][col::bus_i] = 1;
    EXPECT_THROW(build_network(dup), ValidationError);
}

TEST(BuildNetwork, ZeroLoadRowsOmitted) {
    auto net = build_network(make_spec(3, {{1, 2, 0, 0.1}, {2, 3, 0, 0.1}}, {{2, 0.0, 0.0}, {3, 10.0, 0.0}}));
    ASSERT_EQ(net.loads.size(), 1u);
    EXPECT_EQ(net.loads[0].bus, 2);
    EXPECT_DOUBLE_EQ(net.loads[0].p, 0.1);
}

TEST(BuildNetwork, ShuntsConvertedToPerUnit) {
    auto spec = make_spec(2, {{1, 2, 0.0, 0.1}});
    spec.bus[1][col::bs] = 19.0;
    auto net = build_network(spec);
    EXPECT_DOUBLE_EQ(net.buses[1].b_shunt, 0.19);
}

TEST(CycleBasis, TriangleAndStar) {
    auto tri = build_network(make_spec(3, {{1, 2, 0, 0.1}, {2, 3, 0, 0.1}, {3, 1, 0, 0.1}}));
    ASSERT_EQ(tri.n_cycles(), 1);
    EXPECT_EQ(tri.cycles[0].branch_ids.size(), 3u);

    auto star = build_network(make_spec(4, {{1, 2, 0, 0.1}, {1, 3, 0, 0.1}, {1, 4, 0, 0.1}}));
    EXPECT_TRUE(star.cycles.empty());
}

// Random connected multigraphs: cycle count identity and closed walks.
TEST(CycleBasis, PropertyCountAndClosedWalk) {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 200; ++trial) {
        int n = 2 + static_cast<int>(rng() % 12);
        std::vector<BranchDef> branches;
        for (int i = 2; i <= n; ++i) branches.push_back({static_cast<int>(1 + rng() % (i - 1)), i, 0.01, 0.1});
        int extra = static_cast<int>(rng() % 8);
        for (int e = 0; e < extra; ++e) {
            int a = 1 + static_cast<int>(rng() % n), b = 1 + static_cast<int>(rng() % n);
            if (a != b) branches.push_back({a, b, 0.02, 0.05});
        }
        std::shuffle(branches.begin(), branches.end(), rng);
        auto net = build_network(make_spec(n, branches));
        ASSERT_EQ(net.n_cycles(), net.n_branches() - net.n_buses() + 1);

        std::vector<int> uses(net.n_branches(), 0);
        for (auto const& c : net.cycles) {
            // sum of oriented (from - to) indicator vectors must vanish
            std::vector<int> balance(n, 0);
            for (std::size_t k = 0; k < c.branch_ids.size(); ++k) {
                auto const& br = net.branches[c.branch_ids[k]];
                balance[br.from] += c.orientations[k];
                balance[br.to] -= c.orientations[k];
                ++uses[br.index];
            }
            for (int x : balance) ASSERT_EQ(x, 0);
            EXPECT_FALSE(net.tree.in_tree[c.branch_ids[0]]);
        }
        for (int b = 0; b < net.n_branches(); ++b) EXPECT_LE(uses[b], net.n_cycles());
    }
}

TEST(CycleScaling, Examples) {
    std::vector<Branch> branches(3);
    for (int i = 0; i < 3; ++i) {
        branches[i].index = i;
        branches[i].x = 0.1;
    }
    Cycle c{0, {0, 1, 2}, {1, 1, 1}, 0.0};
    EXPECT_NEAR(cycle_scaling(c, branches), -10.0 / 3.0, 1e-12);

    std::vector<Branch> one(1);
    one[0].r = 0.3;
    one[0].x = 0.4;
    EXPECT_NEAR(cycle_scaling(Cycle{0, {0}, {1}, 0.0}, one), -1.6, 1e-12);

    branches[1].x = -0.2;
    branches[2].x = 0.1;
    EXPECT_THROW(cycle_scaling(c, branches), DegenerateCycle);
}

TEST(Admittance, PiModelSymmetryWithoutTap) {
    auto net = testing::case9();
    for (auto const& br : net.branches) {
        EXPECT_EQ(br.y_ft, br.y_tf);
        EXPECT_EQ(br.y_ff, br.y_tt);
    }
    Branch br;
    br.r = 0.01;
    br.x = 0.1;
    br.b_c = 0.2;
    br.tap = 1.05;
    compute_admittance(br);
    auto ys = 1.0 / std::complex<double>(0.01, 0.1);
    EXPECT_NEAR(std::abs(br.y_ft - (-ys / 1.05)), 0.0, 1e-14);
    EXPECT_NEAR(std::abs(br.y_ff - (ys + std::complex<double>(0, 0.1)) / (1.05 * 1.05)), 0.0, 1e-14);
}

TEST(NetworkJson, RoundTripKeepsFingerprint) {
    auto spec = parse_matpower_case(testing::case9_text());
    auto via_json = parse_network_json(network_to_json(spec));
    EXPECT_EQ(build_network(via_json).fingerprint, build_network(spec).fingerprint);
    EXPECT_THROW(parse_network_json("{\"branches\": []}"), MissingSection);
}

TEST(InjectorConfig, ParsesSidecarAndRejectsMissingGenerator) {
    auto config = parse_injector_config(R"([{"bus": 1, "k_v": 5, "p_rated": 2}])");
    ASSERT_EQ(config.generators.size(), 1u);
    auto spec = parse_matpower_case(testing::case9_text());
    EXPECT_THROW(build_network(spec, &config), ValidationError);
}

TEST(Fingerprint, SensitiveToParameters) {
    auto spec = parse_matpower_case(testing::case9_text());
    auto a = build_network(spec);
    spec.branch[3][col::br_x] *= 1.01;
    EXPECT_NE(build_network(spec).fingerprint, a.fingerprint);
}

TEST(BusAngles, ReconstructionFollowsTree) {
    auto net = testing::case9();
    std::vector<double> theta{0.0, 0.1, -0.05, 0.02, 0.03, -0.01, 0.04, 0.07, -0.02};
    std::vector<double> phi(net.n_branches());
    for (auto const& br : net.branches) phi[br.index] = theta[br.from] - theta[br.to];
    auto rebuilt = reconstruct_bus_angles(net, phi);
    for (int b = 0; b < 9; ++b) EXPECT_NEAR(rebuilt[b], theta[b], 1e-15);
}

}  // namespace
}  // namespace rpf
