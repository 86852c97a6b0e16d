#include "bsysid/cli.hpp"
#include "bsysid/config.hpp"
#include "bsysid/experiment.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

struct Result {
    int code = 0;
    std::string out;
    std::string err;
};

Result run_cli(std::vector<std::string> args)
{
    args.insert(args.begin(), "bsysid");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    Result r;
    r.code = bsysid::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::string> lines_of(const std::string& text)
{
    std::vector<std::string> out;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) out.push_back(line);
    return out;
}

std::vector<std::string> data_rows(const std::string& text)
{
    std::vector<std::string> out;
    for (const auto& l : lines_of(text)) {
        if (!l.empty() && l[0] != '#' && l.rfind("run_id", 0) != 0) out.push_back(l);
    }
    return out;
}

std::string drop_column(const std::string& row, std::size_t col)
{
    std::vector<std::string> cells;
    std::stringstream ss(row);
    std::string c;
    while (std::getline(ss, c, ',')) cells.push_back(c);
    cells.erase(cells.begin() + static_cast<long>(col));
    std::string out;
    for (std::size_t i = 0; i < cells.size(); ++i) out += (i ? "," : "") + cells[i];
    return out;
}

class CliTest : public ::testing::Test {
protected:
    void SetUp() override
    {
        dir_ = fs::temp_directory_path()
               / ("bsysid_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
        std::ofstream cfg(dir_ / "small.cfg");
        cfg << "# small problem\n"
               "n = 20\n"
               "n_total = 300\n"
               "n_warmup = 100\n"
               "threads = 1\n"
               "record_timing = false\n"
               "methods = opt, sgp, em2\n";
    }
    void TearDown() override { fs::remove_all(dir_); }

    std::string path(const std::string& name) const { return (dir_ / name).string(); }

    fs::path dir_;
};

} // namespace

TEST_F(CliTest, SingleNkSweepGivesThreeGroups)
{
    const Result r = run_cli({"single", "--config", path("small.cfg"), "--nk", "1,10,50", "--out",
                              path("o")});
    ASSERT_EQ(r.code, 0) << r.err;
    const std::string text = slurp(dir_ / "o" / "single_trace.csv");
    EXPECT_EQ(lines_of(text).front(), bsysid::kRunRecordSchema);
    std::set<std::string> groups;
    for (const auto& row : data_rows(text)) groups.insert(row.substr(0, row.find(',')));
    EXPECT_EQ(groups, (std::set<std::string>{"0", "1", "2"}));
    // 3 methods, (200/nk + 1) rows each
    EXPECT_EQ(data_rows(text).size(), 3u * ((200 + 1) + (20 + 1) + (4 + 1)));
    EXPECT_TRUE(fs::exists(dir_ / "o" / "system.csv"));
    EXPECT_TRUE(fs::exists(dir_ / "o" / "data.csv"));
}

TEST_F(CliTest, UnknownMethodIsConfigError)
{
    const Result r = run_cli({"single", "--config", path("small.cfg"), "--methods", "sgp,newton",
                              "--out", path("o")});
    EXPECT_EQ(r.code, bsysid::cli::kExitConfig);
    EXPECT_NE(r.err.find("methods"), std::string::npos);
    EXPECT_NE(r.err.find("newton"), std::string::npos);
    EXPECT_FALSE(fs::exists(dir_ / "o" / "single_trace.csv"));
}

TEST_F(CliTest, UnknownKeyIsNamed)
{
    std::ofstream(path("bad.cfg")) << "n = 20\nstep_size = 3\n";
    const Result r = run_cli({"single", "--config", path("bad.cfg"), "--out", path("o")});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("step_size"), std::string::npos);

    std::ofstream(path("syntax.cfg")) << "n = 20\n\nthis line has no equals\n";
    const Result s = run_cli({"single", "--config", path("syntax.cfg"), "--out", path("o")});
    EXPECT_EQ(s.code, 2);
    EXPECT_NE(s.err.find(":3:"), std::string::npos);

    EXPECT_EQ(run_cli({"single", "--config", path("missing.cfg")}).code, 2);
    EXPECT_EQ(run_cli({"frobnicate"}).code, 2);
    EXPECT_EQ(run_cli({"single", "--config", path("small.cfg"), "--n", "abc"}).code, 2);
}

TEST_F(CliTest, RepeatedInvocationIsByteIdentical)
{
    ASSERT_EQ(run_cli({"single", "--config", path("small.cfg"), "--out", path("a")}).code, 0);
    ASSERT_EQ(run_cli({"single", "--config", path("small.cfg"), "--out", path("b")}).code, 0);
    EXPECT_EQ(slurp(dir_ / "a" / "single_trace.csv"), slurp(dir_ / "b" / "single_trace.csv"));
    EXPECT_EQ(slurp(dir_ / "a" / "data.csv"), slurp(dir_ / "b" / "data.csv"));
}

TEST_F(CliTest, OverridesTakePrecedence)
{
    ASSERT_EQ(run_cli({"single", "--config", path("small.cfg"), "--seed", "5", "--out", path("a")}).code, 0);
    ASSERT_EQ(run_cli({"single", "--config", path("small.cfg"), "--seed=5", "--out", path("b")}).code, 0);
    ASSERT_EQ(run_cli({"single", "--config", path("small.cfg"), "--out", path("c")}).code, 0);
    EXPECT_EQ(slurp(dir_ / "a" / "data.csv"), slurp(dir_ / "b" / "data.csv"));
    EXPECT_NE(slurp(dir_ / "a" / "data.csv"), slurp(dir_ / "c" / "data.csv"));

    ASSERT_EQ(run_cli({"single", "--config", path("small.cfg"), "--methods", "bb", "--n-total", "200",
                       "--out", path("d")})
                  .code,
              0);
    const auto rows = data_rows(slurp(dir_ / "d" / "single_trace.csv"));
    EXPECT_EQ(rows.size(), 11u);
    EXPECT_NE(rows.back().find(",BB,"), std::string::npos);
}

TEST_F(CliTest, MontecarloRowAccounting)
{
    const Result r = run_cli({"montecarlo", "--config", path("small.cfg"), "--runs", "2", "--out",
                              path("mc")});
    ASSERT_EQ(r.code, 0) << r.err;
    // 2 runs x 3 methods x (warmup row + 20 batches)
    const auto rows = data_rows(slurp(dir_ / "mc" / "runs.csv"));
    EXPECT_EQ(rows.size(), 2u * 3u * 21u);
    const auto summary = lines_of(slurp(dir_ / "mc" / "summary.csv"));
    ASSERT_EQ(summary.size(), 4u);
    EXPECT_EQ(summary[0].rfind("method,", 0), 0u);
    EXPECT_NE(r.out.find("OPT"), std::string::npos);
    EXPECT_EQ(run_cli({"montecarlo", "--config", path("small.cfg"), "--nk", "1,10"}).code, 2);
}

TEST_F(CliTest, OptTakesLongerThanOneStep)
{
    const Result r = run_cli({"montecarlo", "--config", path("small.cfg"), "--runs", "2",
                              "--record-timing", "true", "--methods", "opt,sgp", "--out", path("mc")});
    ASSERT_EQ(r.code, 0) << r.err;
    std::ifstream in(dir_ / "mc" / "summary.csv");
    std::string header, opt_row, one_row;
    std::getline(in, header);
    std::getline(in, opt_row);
    std::getline(in, one_row);
    auto time_median = [](const std::string& row) {
        std::vector<std::string> cells;
        std::stringstream ss(row);
        std::string c;
        while (std::getline(ss, c, ',')) cells.push_back(c);
        return std::stod(cells.at(6));
    };
    ASSERT_EQ(opt_row.rfind("OPT,", 0), 0u);
    ASSERT_EQ(one_row.rfind("SGP,", 0), 0u);
    EXPECT_GT(time_median(opt_row), time_median(one_row));
}

TEST_F(CliTest, StreamRoundTripMatchesSingle)
{
    ASSERT_EQ(run_cli({"single", "--config", path("small.cfg"), "--out", path("s")}).code, 0);
    const Result r = run_cli({"stream", path("s/data.csv"), "--config", path("small.cfg"), "--out",
                              path("t")});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto single = data_rows(slurp(dir_ / "s" / "single_trace.csv"));
    const auto stream = data_rows(slurp(dir_ / "t" / "stream_trace.csv"));
    ASSERT_EQ(single.size(), stream.size());
    for (std::size_t i = 0; i < single.size(); ++i) {
        EXPECT_EQ(drop_column(single[i], 5), stream[i]) << "row " << i;
    }
}

TEST_F(CliTest, MalformedDatasetRowCitesLine)
{
    {
        std::ofstream f(path("bad.csv"));
        f << "u,y\n";
        for (int line = 2; line <= 30; ++line) {
            f << (line == 17 ? "0.5,oops" : "0.5,0.25") << "\n";
        }
    }
    const Result r = run_cli({"stream", path("bad.csv"), "--config", path("small.cfg")});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find(":17:"), std::string::npos) << r.err;
}

TEST_F(CliTest, EmptyDatasetIsConfigError)
{
    std::ofstream(path("empty.csv")).close();
    EXPECT_EQ(run_cli({"stream", path("empty.csv"), "--config", path("small.cfg")}).code, 2);
    EXPECT_EQ(run_cli({"stream", "--config", path("small.cfg")}).code, 2);
}

TEST_F(CliTest, RuntimeFailureLeavesNoOutputs)
{
    const Result r = run_cli({"single", "--config", path("small.cfg"), "--decay-ratio", "0",
                              "--max-retries", "2", "--out", path("o")});
    EXPECT_EQ(r.code, bsysid::cli::kExitRuntime);
    EXPECT_FALSE(fs::exists(dir_ / "o" / "single_trace.csv"));
    EXPECT_FALSE(fs::exists(dir_ / "o" / "data.csv"));
}

TEST_F(CliTest, InstalledBinaryRuns)
{
    const std::string cmd = std::string(BSYSID_TOOL) + " single --config " + path("small.cfg")
                            + " --methods sgp --out " + path("bin") + " > " + path("log.txt") + " 2>&1";
    EXPECT_EQ(std::system(cmd.c_str()), 0) << slurp(dir_ / "log.txt");
    EXPECT_TRUE(fs::exists(dir_ / "bin" / "single_trace.csv"));
    const std::string bad = std::string(BSYSID_TOOL) + " single --methods nope > " + path("log2.txt") + " 2>&1";
    const int status = std::system(bad.c_str());
    EXPECT_EQ(WEXITSTATUS(status), 2);
}

TEST(ReadDataset, HeaderCommentsAndValues)
{
    const fs::path p = fs::temp_directory_path() / "bsysid_read_dataset.csv";
    std::ofstream(p) << "u,y\n# note\n1,2\n-0.5,1e-3\r\n";
    const bsysid::cli::IoSeries s = bsysid::cli::read_dataset(p.string());
    ASSERT_EQ(s.u.size(), 2);
    EXPECT_EQ(s.u(1), -0.5);
    EXPECT_EQ(s.y(1), 1e-3);
    fs::remove(p);
    EXPECT_THROW(bsysid::cli::read_dataset(p.string()), bsysid::ConfigError);
}
