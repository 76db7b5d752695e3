#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "cli.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Result {
    int code;
    std::string out, err;
};

Result cli(std::vector<std::string> args) {
    std::ostringstream out, err;
    int code = dgcl::cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        dir = fs::temp_directory_path() / ("dgcl_cli_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
                                           ::testing::UnitTest::GetInstance()->current_test_info()->name());
        fs::remove_all(dir);
        fs::create_directories(dir);
        std::ofstream(dir / "synth.json") << R"({"classes": 4, "domains": 2, "tasks": 2, "m": 8, "L": 3,
            "train_per_class": 20, "test_per_class_domain": 5, "semantic_separation": 3})";
        std::ofstream(dir / "episode.json") << R"({"e_dot": 2, "e_oa": 1, "k_prototypes": 4, "heads": 2,
            "phase1_epochs": 3, "samples_per_pair": 4})";
        bank = (dir / "bank.dgfb").string();
        auto r = cli({"gen-synth", "--config", (dir / "synth.json").string(), "--unseen-domain", "--out", bank});
        ASSERT_EQ(r.code, 0) << r.err;
    }
    void TearDown() override { fs::remove_all(dir); }

    fs::path dir;
    std::string bank;
};

}  // namespace

TEST_F(Cli, InspectReportsCounts) {
    auto r = cli({"inspect", bank, "--json"});
    ASSERT_EQ(r.code, 0) << r.err;
    auto j = json::parse(r.out);
    EXPECT_EQ(j.at("statistics").at("tasks"), 2);
    EXPECT_EQ(j.at("statistics").at("unseen_domains").size(), 1u);
    EXPECT_NE(cli({"inspect", bank}).out.find("tasks=2"), std::string::npos);
}

TEST_F(Cli, RunFansOutPerSeedAndIsDeterministic) {
    auto run = [&](const std::string& out) {
        return cli({"run", "--bank", bank, "--config", (dir / "episode.json").string(), "--seeds", "0,1,2", "--out-dir",
                    (dir / out).string()});
    };
    auto a = run("a");
    ASSERT_EQ(a.code, 0) << a.err;
    for (int s = 0; s < 3; ++s) EXPECT_TRUE(fs::exists(dir / "a" / ("tensor_seed" + std::to_string(s) + ".json")));
    EXPECT_TRUE(fs::exists(dir / "a" / "report.json"));
    EXPECT_TRUE(fs::exists(dir / "a" / "report.txt"));
    auto report = json::parse(slurp(dir / "a" / "report.json"));
    EXPECT_EQ(report.at("runs").size(), 3u);
    EXPECT_EQ(report.at("config").at("episode").at("e_dot"), 2);

    ASSERT_EQ(run("b").code, 0);
    for (const char* f : {"tensor_seed0.json", "tensor_seed1.json", "tensor_seed2.json", "report.json", "report.txt"})
        EXPECT_EQ(slurp(dir / "a" / f), slurp(dir / "b" / f)) << f;

    auto e = cli({"eval", (dir / "a" / "tensor_seed0.json").string(), (dir / "a" / "tensor_seed1.json").string(),
                  "--out-dir", (dir / "e").string()});
    ASSERT_EQ(e.code, 0) << e.err;
    auto ej = json::parse(slurp(dir / "e" / "report.json"));
    EXPECT_EQ(ej.at("runs").size(), 2u);
    EXPECT_EQ(ej.at("runs")[0].at("metrics"), report.at("runs")[0].at("metrics"));
}

TEST_F(Cli, FlagsOverrideConfigAndPairWithNoDot) {
    auto r = cli({"run", "--bank", bank, "--config", (dir / "episode.json").string(), "--seeds", "0", "--e-dot", "1",
                  "--no-dot", "--out-dir", (dir / "n").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    auto t = json::parse(slurp(dir / "n" / "tensor_seed0.json"));
    EXPECT_EQ(t.at("config").at("e_dot"), 1);
    EXPECT_EQ(t.at("config").at("no_dot"), true);
    EXPECT_TRUE(t.at("dot_loss_traces").empty());
    EXPECT_EQ(t.at("bank").at("path"), bank);
}

TEST_F(Cli, SweepEmitsOnePointPerValue) {
    auto r = cli({"sweep", "--bank", bank, "--config", (dir / "episode.json").string(), "--param", "lambda", "--values",
                  "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9", "--seeds", "0", "--baseline", "--out-dir", (dir / "s").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    auto j = json::parse(slurp(dir / "s" / "sweep.json"));
    EXPECT_EQ(j.at("points").size(), 9u);
    EXPECT_TRUE(j.contains("baseline"));
    EXPECT_EQ(j.at("points")[0].at("value"), 0.1);
}

TEST_F(Cli, ErrorsAreJsonOnStderr) {
    auto r = cli({"run", "--bank", bank, "--lambda", "1.5", "--e-dot", "abc", "--out-dir", (dir / "x").string()});
    EXPECT_EQ(r.code, 1);
    auto j = json::parse(r.err);
    EXPECT_EQ(j.at("error").at("kind"), "config");
    EXPECT_EQ(j.at("error").at("fields").size(), 2u);

    r = cli({"run", "--bank", (dir / "missing.dgfb").string(), "--out-dir", (dir / "x").string()});
    EXPECT_EQ(r.code, 1);
    EXPECT_EQ(json::parse(r.err).at("error").at("kind"), "io");

    std::ofstream(dir / "garbage.dgfb") << "NOPE";
    r = cli({"inspect", (dir / "garbage.dgfb").string()});
    EXPECT_EQ(json::parse(r.err).at("error").at("kind"), "bad_magic");

    r = cli({"run"});
    EXPECT_EQ(r.code, 2);
    EXPECT_EQ(json::parse(r.err).at("error").at("kind"), "usage");

    r = cli({"sweep", "--bank", bank, "--param", "tau", "--values", "1", "--out-dir", (dir / "x").string()});
    EXPECT_EQ(r.code, 1);
}

TEST(CliStandalone, HelpAndThreadCap) {
    auto r = cli({"--help"});
    EXPECT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("gen-synth"), std::string::npos);
    setenv("DOT_ENGINE_THREADS", "3", 1);
    EXPECT_EQ(dgcl::cli::thread_cap(), 3u);
    setenv("DOT_ENGINE_THREADS", "junk", 1);
    EXPECT_GE(dgcl::cli::thread_cap(), 1u);
    unsetenv("DOT_ENGINE_THREADS");
}
