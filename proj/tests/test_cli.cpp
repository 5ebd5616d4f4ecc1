#include <algorithm>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "cli.hpp"
#include "rpf/dataset.hpp"
#include "rpf/io.hpp"
#include "test_support.hpp"

namespace fs = std::filesystem;
using rpf::cli::json;

namespace {

struct RunResult {
    int code = 0;
    std::string out, err;
};

RunResult run_cli(std::vector<std::string> args, std::map<std::string, std::string> env = {}) {
    args.insert(args.begin(), "rpf");
    std::vector<char const*> argv;
    for (auto const& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    auto lookup = [&env](char const* name) -> char const* {
        auto it = env.find(name);
        return it == env.end() ? nullptr : it->second.c_str();
    };
    int code = rpf::cli::run(static_cast<int>(argv.size()), argv.data(), out, err, lookup);
    return {code, out.str(), err.str()};
}

class TempDir {
  public:
    TempDir() {
        path_ = fs::temp_directory_path() /
                ("rpf_cli_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) + "_" +
                 ::testing::UnitTest::GetInstance()->current_test_info()->name() + "_" + std::to_string(counter_++));
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    std::string str() const { return path_.string(); }
    std::string operator/(std::string const& name) const { return (path_ / name).string(); }

  private:
    static inline int counter_ = 0;
    fs::path path_;
};

std::string network_arg() { return rpf::testing::data_path("case9.m"); }

std::string hash_file(std::string const& path) { return rpf::io::hex64(rpf::io::fnv1a64(rpf::io::read_file(path))); }

}  // namespace

TEST(CliConfig, PrecedenceFlagsOverFileOverEnvironment) {
    json defaults = {{"seed", 7}, {"threads", 0}, {"out_dir", "."}, {"lambda", 1e3}};
    json env = {{"seed", 1}, {"threads", 4}, {"out_dir", "env"}};
    json file = {{"seed", 2}, {"out_dir", "file"}};
    json flags = {{"seed", 3}};
    auto r = rpf::cli::resolve_config(defaults, env, file, flags);
    EXPECT_EQ(r["seed"], 3);
    EXPECT_EQ(r["out_dir"], "file");
    EXPECT_EQ(r["threads"], 4);
    EXPECT_EQ(r["lambda"], 1e3);

    EXPECT_THROW(rpf::cli::resolve_config(defaults, {}, {{"sede", 1}}, {}), rpf::cli::UsageError);
    EXPECT_THROW(rpf::cli::resolve_config(defaults, {}, {{"seed", "x"}}, {}), rpf::cli::UsageError);
    EXPECT_THROW(rpf::cli::resolve_config(defaults, {}, {{"seed", 1.5}}, {}), rpf::cli::UsageError);
    // Integers are accepted where reals are expected.
    EXPECT_DOUBLE_EQ(rpf::cli::resolve_config(defaults, {}, {{"lambda", 10}}, {})["lambda"].get<double>(), 10.0);
}

TEST(CliConfig, FileSectionsAndEnvironment) {
    json file = {{"seed", 1}, {"gen", {{"seed", 5}, {"n_train", 3}}}, {"train", {{"epochs", 9}}}};
    auto gen = rpf::cli::config_file_section(file, "gen");
    EXPECT_EQ(gen, json({{"seed", 5}, {"n_train", 3}}));
    EXPECT_EQ(rpf::cli::config_file_section(file, "eval"), json({{"seed", 1}}));

    auto env = rpf::cli::environment_overrides([](char const* name) -> char const* {
        std::string n = name;
        if (n == "RPF_THREADS") return "3";
        if (n == "RPF_OUT_DIR") return "/tmp/x";
        return nullptr;
    });
    EXPECT_EQ(env, json({{"threads", 3}, {"out_dir", "/tmp/x"}}));
}

TEST(CliConfig, HashIgnoresPlacementOnlyKeys) {
    json a = {{"seed", 7}, {"threads", 1}, {"out_dir", "a"}, {"verbose", false}, {"model", "a/m.json"}};
    json b = {{"seed", 7}, {"threads", 8}, {"out_dir", "b"}, {"verbose", true}, {"model", "b/m.json"}};
    json c = {{"seed", 8}, {"threads", 1}, {"out_dir", "a"}, {"verbose", false}, {"model", "a/m.json"}};
    EXPECT_EQ(rpf::cli::config_hash(a), rpf::cli::config_hash(b));
    EXPECT_NE(rpf::cli::config_hash(a), rpf::cli::config_hash(c));
}

TEST(CliRun, HelpOnEverySubcommand) {
    EXPECT_EQ(run_cli({"--help"}).code, 0);
    for (char const* cmd : {"gen", "train", "eval", "pf", "qss", "opf", "export"}) {
        auto r = run_cli({cmd, "--help"});
        EXPECT_EQ(r.code, 0) << cmd;
        EXPECT_NE(r.out.find("--seed"), std::string::npos) << cmd;
    }
}

TEST(CliRun, UsageErrorsExitOne) {
    EXPECT_EQ(run_cli({}).code, 1);
    EXPECT_EQ(run_cli({"frobnicate"}).code, 1);
    EXPECT_EQ(run_cli({"gen", "--no-such-flag"}).code, 1);
    EXPECT_EQ(run_cli({"gen", "--n-train", "many"}).code, 1);

    TempDir dir;
    auto r = run_cli({"gen", "--network", "/nonexistent/case.m", "--out-dir", dir.str()});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("/nonexistent/case.m"), std::string::npos);

    r = run_cli({"gen", "--config", dir / "missing.json", "--out-dir", dir.str()});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("missing.json"), std::string::npos);

    r = run_cli({"pf", "--slack", "gen4", "--oracle", "--out-dir", dir.str(), "--network", network_arg()});
    EXPECT_EQ(r.code, 1);
}

TEST(CliRun, ConfigFileAndEnvironmentReachCommands) {
    TempDir dir;
    rpf::io::write_file(dir / "cfg.json", json({{"gen", {{"n_train", 4}, {"n_test", 2}}}}).dump());
    auto r = run_cli({"gen", "--config", dir / "cfg.json", "--n-test", "3", "--network", network_arg()},
                     {{"RPF_OUT_DIR", dir.str()}, {"RPF_THREADS", "1"}});
    ASSERT_EQ(r.code, 0) << r.err;
    auto report = json::parse(rpf::io::read_file(dir / "gen_report.json"));
    EXPECT_EQ(report["datasets"]["train.csv"]["records"], 4);
    EXPECT_EQ(report["datasets"]["test_feasible.csv"]["records"], 3);
}

TEST(CliRun, EmptyDatasetIsValid) {
    TempDir dir;
    auto r = run_cli({"gen", "--n-train", "0", "--n-test", "0", "--out-dir", dir.str(), "--network", network_arg()});
    ASSERT_EQ(r.code, 0) << r.err;
    auto text = rpf::io::read_file(dir / "train.csv");
    EXPECT_EQ(text.rfind("# ", 0), 0u);
    auto net = rpf::testing::case9();
    EXPECT_TRUE(rpf::load_dataset(dir / "train.csv", net).records.empty());
}

TEST(CliRun, PipelineIsDeterministicAndEmitsProvenance) {
    TempDir a, b;
    std::vector<std::string> const files = {"train.csv",   "test_feasible.csv", "test_infeasible.csv",
                                            "model.json",  "errors_voltage.csv", "eval_summary.csv",
                                            "pf_results_gen1.csv", "qss_results.csv", "opf_result.csv",
                                            "opf_grid.csv", "gen_report.json"};
    for (TempDir const* d : {&a, &b}) {
        std::string threads = d == &a ? "1" : "3";
        auto common = [&](std::vector<std::string> args) {
            for (auto const& s : std::vector<std::string>{"--out-dir", d->str(), "--network", network_arg(), "--threads", threads}) {
                args.push_back(s);
            }
            auto r = run_cli(args);
            EXPECT_EQ(r.code, 0) << args[0] << ": " << r.err;
        };
        common({"gen", "--n-train", "60", "--n-test", "20"});
        common({"train", "--epochs", "20", "--hidden", "8"});
        common({"eval"});
        common({"pf", "--n", "6"});
        common({"qss", "--n", "6"});
        common({"opf", "--grid", "6"});
    }
    for (auto const& f : files) {
        EXPECT_EQ(hash_file(a / f), hash_file(b / f)) << f;
    }
    for (auto const& f : {"errors_voltage.csv", "pf_results_gen1.csv", "opf_grid.csv"}) {
        auto text = rpf::io::read_file(a / f);
        ASSERT_EQ(text.rfind("# {", 0), 0u) << f;
        auto header = json::parse(text.substr(2, text.find('\n') - 2));
        EXPECT_EQ(header["tool"], "rpf");
        EXPECT_TRUE(header.contains("config_hash"));
        EXPECT_TRUE(header["inputs"].contains("network"));
    }
}

TEST(CliRun, FingerprintMismatchExitsTwo) {
    TempDir dir;
    auto base = std::vector<std::string>{"--out-dir", dir.str(), "--network", network_arg()};
    auto with = [&](std::vector<std::string> args) {
        args.insert(args.end(), base.begin(), base.end());
        return run_cli(args);
    };
    ASSERT_EQ(with({"gen", "--n-train", "30", "--n-test", "5"}).code, 0);
    ASSERT_EQ(with({"train", "--features", "linear"}).code, 0);
    auto model = json::parse(rpf::io::read_file(dir / "model.json"));
    model["network_fingerprint"] = "0000000000000000";
    rpf::io::write_file(dir / "model.json", model.dump());
    auto r = with({"eval"});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("network"), std::string::npos);
}

TEST(CliRun, EvalOnEmptyTestSetsWritesEmptyTables) {
    TempDir dir;
    auto base = std::vector<std::string>{"--out-dir", dir.str(), "--network", network_arg()};
    auto with = [&](std::vector<std::string> args) {
        args.insert(args.end(), base.begin(), base.end());
        return run_cli(args);
    };
    ASSERT_EQ(with({"gen", "--n-train", "30", "--n-test", "0"}).code, 0);
    ASSERT_EQ(with({"train", "--features", "linear"}).code, 0);
    auto r = with({"eval"});
    ASSERT_EQ(r.code, 0) << r.err;
    auto text = rpf::io::read_file(dir / "errors_voltage.csv");
    EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 2);  // provenance + header
}

TEST(CliRun, OracleModesAndExport) {
    TempDir dir;
    auto base = std::vector<std::string>{"--out-dir", dir.str(), "--network", network_arg()};
    auto with = [&](std::vector<std::string> args) {
        args.insert(args.end(), base.begin(), base.end());
        return run_cli(args);
    };
    auto r = with({"pf", "--oracle", "--n", "5", "--slack", "distributed"});
    ASSERT_EQ(r.code, 0) << r.err;
    auto summary = json::parse(rpf::io::read_file(dir / "pf_summary_distributed.json"));
    EXPECT_EQ(summary["solved"], 5);
    EXPECT_LE(summary["median_abs_error"].get<double>(), 1e-8);

    ASSERT_EQ(with({"export", "--kind", "network"}).code, 0);
    auto net_json = json::parse(rpf::io::read_file(dir / "network.json"));
    EXPECT_EQ(net_json["buses"].size(), 9u);
    EXPECT_EQ(with({"export", "--kind", "angles"}).code, 1);  // no dataset yet
    EXPECT_EQ(with({"export", "--kind", "pictures"}).code, 1);
}
