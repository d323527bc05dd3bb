#include <chrono>
#include <cstdio>
#include <filesystem>
#include <string>

#include <sys/wait.h>

#include <gtest/gtest.h>

#include "celm/io.hpp"
#include "temp_dir.hpp"

using test_support::TempDir;
namespace fs = std::filesystem;
namespace io = celm::io;

namespace {

struct Result {
    int code = -1;
    std::string output;
};

Result run(const std::string& args) {
    const std::string cmd = std::string(CELM_BIN) + " " + args + " 2>&1";
    Result r;
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) return r;
    char buf[4096];
    while (std::size_t n = std::fread(buf, 1, sizeof buf, pipe)) r.output.append(buf, n);
    const int status = pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string config(const std::string& name) { return std::string(CELM_CONFIG_DIR) + "/" + name; }

std::string quoted(const fs::path& p) { return "'" + p.string() + "'"; }

std::string slurp(const fs::path& p) { return io::read_text(p); }

}  // namespace

TEST(Cli, NoSubcommandIsUsageError) {
    EXPECT_EQ(run("").code, 2);
    EXPECT_EQ(run("frobnicate").code, 2);
}

TEST(Cli, PartitionWritesTallyingFiles) {
    TempDir a, b;
    ASSERT_EQ(run("partition " + config("smoke.conf") + " --out " + quoted(a.path())).code, 0);
    ASSERT_EQ(run("partition " + config("smoke.conf") + " --out " + quoted(b.path())).code, 0);
    const auto alloc = io::parse_allocation(io::read_csv(a.path() / "allocation_seed1.csv"));
    EXPECT_EQ(alloc.rows(), 3u);
    for (auto c : alloc.col_sums()) EXPECT_EQ(c, 200u);
    const auto bubble = io::read_json(a.path() / "bubble_seed1.json");
    EXPECT_EQ(bubble["cells"].size(), 12u);
    EXPECT_EQ(slurp(a.path() / "allocation_seed1.csv"), slurp(b.path() / "allocation_seed1.csv"));
    EXPECT_EQ(slurp(a.path() / "bubble_seed1.json"), slurp(b.path() / "bubble_seed1.json"));
}

TEST(Cli, InfeasiblePartitionFails) {
    TempDir d;
    const auto r = run("partition " + config("smoke.conf") +
                       " --set partition.regime=pls --set partition.samples_per_client=100000 --out " + quoted(d.path()));
    EXPECT_NE(r.code, 0);
    EXPECT_NE(r.output.find("supply"), std::string::npos) << r.output;
}

TEST(Cli, SmokeRunIsFastAndReproducible) {
    TempDir a, b;
    const auto start = std::chrono::steady_clock::now();
    const auto r = run("run " + config("smoke.conf") + " --workers 2 --dump-probes --out " + quoted(a.path()));
    const auto seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    ASSERT_EQ(r.code, 0) << r.output;
    EXPECT_LT(seconds, 60.0);
    ASSERT_EQ(run("run " + config("smoke.conf") + " --workers 1 --out " + quoted(b.path())).code, 0);
    for (const char* f : {"trace.csv", "summary.json", "contribution_celm_seed1.json", "contribution_fedavg_seed1.json",
                          "contribution_cgsv_seed1.json", "config.conf", "effective.conf", "allocation_seed1.csv"}) {
        ASSERT_TRUE(fs::exists(a.path() / f)) << f;
        EXPECT_EQ(slurp(a.path() / f), slurp(b.path() / f)) << f;
    }
    EXPECT_TRUE(fs::exists(a.path() / "probes" / "celm_seed1" / "global_class1.pgm"));
    EXPECT_TRUE(fs::exists(a.path() / "probes" / "celm_seed1" / "client3_class4.pgm"));
    EXPECT_FALSE(fs::exists(b.path() / "probes"));

    const auto summary = io::read_json(a.path() / "summary.json");
    EXPECT_TRUE(summary.contains("git_describe"));
    EXPECT_EQ(summary["runs"].size(), 3u);
    const auto trace = io::read_csv(a.path() / "trace.csv");
    EXPECT_EQ(trace.rows.size(), 15u);

    const auto rep = run("report " + quoted(a.path() / "summary.json"));
    EXPECT_EQ(rep.code, 0);
    EXPECT_NE(rep.output.find("celm"), std::string::npos);
}

TEST(Cli, UnknownStrategyIsUsageError) {
    TempDir d;
    const auto r = run("run " + config("smoke.conf") + " --set run.strategies=fedprox --out " + quoted(d.path()));
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.output.find("fedprox"), std::string::npos);
    EXPECT_FALSE(fs::exists(d.path() / "trace.csv"));
}

TEST(Cli, SweepEchoesValues) {
    TempDir d;
    const auto r = run("sweep " + config("smoke.conf") +
                       " --set run.strategies=celm --set train.rounds=3 --axis lm_lr --values 0.010,0.05 --out " +
                       quoted(d.path()));
    ASSERT_EQ(r.code, 0) << r.output;
    const auto t = io::read_csv(d.path() / "sweep_lm_lr.csv");
    ASSERT_EQ(t.rows.size(), 2u);
    EXPECT_EQ(t.rows[0][t.column("value")], "0.010");
    EXPECT_EQ(t.rows[1][t.column("value")], "0.05");
}

TEST(Cli, SweepEmptyValuesIsUsageError) {
    TempDir d;
    EXPECT_EQ(run("sweep " + config("smoke.conf") + " --axis lm_steps --values '' --out " + quoted(d.path())).code, 2);
    EXPECT_EQ(run("sweep " + config("smoke.conf") + " --axis depth --values 1 --out " + quoted(d.path())).code, 2);
}

TEST(Cli, DetectOnSeparatedFixture) {
    TempDir d;
    io::CsvTable t;
    t.header = io::trace_header(1, 4);
    for (int r = 1; r <= 4; ++r)
        t.rows.push_back({std::to_string(r), "celm", "1", "1", "1", "nan", "0", "1", "0.02", "0.3", "0.33", "0.35"});
    io::write_text(d.path() / "trace.csv", io::to_csv(t));
    const auto r = run("detect " + quoted(d.path() / "trace.csv") + " --free-riders 1 --thresholds '' --out " +
                       quoted(d.path() / "detect.json"));
    ASSERT_EQ(r.code, 0) << r.output;
    const auto j = io::read_json(d.path() / "detect.json");
    EXPECT_EQ(j["results"][0]["auroc"].get<double>(), 1.0);
    EXPECT_EQ(j["results"][0]["mean_fpr"].get<double>(), 0.0);
    EXPECT_EQ(j["thresholds"].size(), 7u);
}

TEST(Cli, DetectMissingTraceIsIoError) {
    EXPECT_EQ(run("detect /nonexistent/trace.csv --free-riders 1").code, 3);
}

TEST(Cli, FidelityExactAndMismatch) {
    TempDir d;
    io::Json contrib;
    contrib["strategy"] = "celm";
    contrib["estimator"] = io::Json::array({io::Json{{"round", 1}, {"Q", {{3.0, 1.0}, {0.0, 2.0}}}}});
    io::write_json(d.path() / "c.json", contrib);
    io::write_text(d.path() / "a.csv", "client,class_1,class_2\r\n1,30,10\r\n2,0,20\r\n");
    io::write_text(d.path() / "k3.csv", "client,class_1,class_2,class_3\r\n1,30,10,1\r\n2,0,20,1\r\n");
    const auto r = run("fidelity " + quoted(d.path() / "c.json") + " " + quoted(d.path() / "a.csv") + " --out " +
                       quoted(d.path() / "f.json"));
    ASSERT_EQ(r.code, 0) << r.output;
    const auto j = io::read_json(d.path() / "f.json");
    for (const char* m : {"jsd", "emd", "hellinger"}) {
        EXPECT_LT(j["clients"]["estimated"][m].get<double>(), 1e-12) << m;
        EXPECT_LT(j["global"]["estimated"][m].get<double>(), 1e-12) << m;
    }
    EXPECT_EQ(run("fidelity " + quoted(d.path() / "c.json") + " " + quoted(d.path() / "k3.csv")).code, 4);
}
