#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mstest/cli.hpp"

using namespace mstest;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result cli(std::vector<std::string> args) {
    args.insert(args.begin(), "mstest-cli");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = run_cli(int(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
    auto p = fs::temp_directory_path() / ("mstest_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void put(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> v;
    std::stringstream ss(line);
    for (std::string x; std::getline(ss, x, ',');) v.push_back(x);
    return v;
}

}  // namespace

TEST(Cli, DesignThreeGaussian) {
    auto r = cli({"design", "three", "--alpha", "1e-4", "--beta", "1e-4", "--model", "gaussian", "--eta", "0.5",
                  "--seed", "7"});
    EXPECT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("\nN = 61\n"), std::string::npos) << r.out;
}

TEST(Cli, DesignWritesFileUnderOut) {
    auto dir = scratch("design");
    auto r = cli({"design", "four-hat", "--alpha", "1e-4", "--beta", "1e-4", "--model", "gaussian", "--eta", "0.5",
                  "--out", dir.string(), "--prefix", "x_"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto text = slurp(dir / "x_design.txt");
    EXPECT_NE(text.find("\nN = 63\n"), std::string::npos);
    EXPECT_NE(text.find("gamma_prime = "), std::string::npos);
}

TEST(Cli, RatesAr1CrossAtChernoffInformation) {
    auto dir = scratch("rates");
    auto r = cli({"rates", "--model", "ar1", "--mu0", "-0.5", "--mu1", "0.5", "--out", dir.string()});
    ASSERT_EQ(r.code, 0) << r.err;
    std::ifstream in(dir / "rates.csv");
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "kappa,psi0,psi1,zeta0,zeta1");
    bool found = false;
    while (std::getline(in, line)) {
        auto f = split(line);
        ASSERT_EQ(f.size(), 5u);
        if (std::abs(std::stod(f[0])) < 1e-12) {
            found = true;
            EXPECT_NEAR(std::stod(f[1]), 0.11157, 1e-4);
            EXPECT_NEAR(std::stod(f[2]), 0.11157, 1e-4);
        }
    }
    EXPECT_TRUE(found);
}

TEST(Cli, MissingKeyNamesIt) {
    auto r = cli({"design", "three", "--alpha", "1e-4", "--model", "gaussian", "--eta", "0.5"});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("levels.beta"), std::string::npos) << r.err;
    r = cli({"design", "three", "--alpha", "1e-4", "--beta", "1e-4", "--model", "ar1", "--mu0", "-0.5"});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("model.mu1"), std::string::npos) << r.err;
}

TEST(Cli, BadInputsAreConfigErrors) {
    EXPECT_EQ(cli({"design", "five", "--alpha", "0.1", "--beta", "0.1", "--model", "gaussian", "--eta", "1"}).code, 2);
    EXPECT_EQ(cli({"design", "three", "--alpha", "1.5", "--beta", "0.1", "--model", "gaussian", "--eta", "1"}).code, 2);
    EXPECT_EQ(cli({"design", "three", "--alpha", "0.1", "--beta", "0.1", "--model", "gaussian", "--eta", "-1"}).code, 2);
    EXPECT_EQ(cli({"design", "three", "--alpha", "abc"}).code, 2);
    EXPECT_EQ(cli({"frobnicate"}).code, 2);
    EXPECT_EQ(cli({"run", "sprt", "--alpha", "0.1", "--beta", "0.1", "--model", "ar1", "--mu0", "-0.5", "--mu1", "0.5",
                   "--true-param", "1.5"})
                  .code,
              2);
    EXPECT_EQ(cli({"--help"}).code, 0);
}

TEST(Cli, InfeasibleBudgetExitCode) {
    auto r = cli({"design", "fss", "--alpha", "1e-6", "--beta", "1e-6", "--model", "ar1", "--mu0", "-0.5", "--mu1",
                  "0.5", "--max-n", "8", "--sim-reps", "2000"});
    EXPECT_EQ(r.code, 3) << r.err;
}

TEST(Cli, ConfigFileWithFlagOverride) {
    auto dir = scratch("config");
    put(dir / "c.ini", "[model]\nkind = gaussian\neta = 0.5\n[levels]\nalpha = 1e-2\nbeta = 1e-2\n");
    auto a = cli({"design", "fss", "--config", (dir / "c.ini").string()});
    ASSERT_EQ(a.code, 0) << a.err;
    EXPECT_NE(a.out.find("alpha = 0.01\n"), std::string::npos);
    auto b = cli({"design", "fss", "--config", (dir / "c.ini").string(), "--alpha", "1e-4", "--beta", "1e-4"});
    ASSERT_EQ(b.code, 0) << b.err;
    EXPECT_NE(b.out.find("n_star = 56\n"), std::string::npos) << b.out;

    put(dir / "bad.ini", "[model]\nkind = gaussian\nheight = 3\n");
    auto c = cli({"design", "fss", "--config", (dir / "bad.ini").string()});
    EXPECT_EQ(c.code, 2);
    EXPECT_NE(c.err.find("model.height"), std::string::npos) << c.err;
    put(dir / "bad2.ini", "[extras]\nx = 1\n");
    EXPECT_EQ(cli({"design", "fss", "--config", (dir / "bad2.ini").string()}).code, 2);
    EXPECT_EQ(cli({"design", "fss", "--config", (dir / "missing.ini").string()}).code, 2);
}

TEST(Config, RoundTrip) {
    RunConfig c;
    c.kind = "markov";
    c.statistic = "mean";
    c.p = 0.5;
    c.mu0 = 0.25;
    c.mu1 = 0.1 + 0.65;  // not exactly representable in short decimal
    c.alpha = 1e-4;
    c.regime = "logoverbeta";
    c.reps = 2000;
    c.seed = 18446744073709551557ull;
    c.dir = "out dir";
    const auto text = serialize_config(c);
    std::istringstream is(text);
    auto d = parse_config(is);
    EXPECT_EQ(c, d);
    EXPECT_EQ(serialize_config(d), text);
    std::istringstream empty("");
    EXPECT_EQ(parse_config(empty), RunConfig{});
}

TEST(Config, ValueErrorsNameTheKey) {
    std::istringstream is("[budget]\nreps = many\n");
    try {
        parse_config(is);
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("budget.reps"), std::string::npos);
    }
}

TEST(Cli, SameSeedByteIdenticalOutputs) {
    auto a = scratch("same_a"), b = scratch("same_b");
    for (const auto& d : {a, b}) {
        auto r = cli({"evaluate", "fss", "sprt", "--alpha", "0.05", "--beta", "0.05", "--model", "markov", "--p", "0.5",
                      "--mu0", "0.25", "--mu1", "0.75", "--reps", "300", "--seed", "13", "--out", d.string()});
        ASSERT_EQ(r.code, 0) << r.err;
    }
    const auto text = slurp(a / "evaluation.csv");
    EXPECT_EQ(text, slurp(b / "evaluation.csv"));
    std::istringstream is(text);
    std::string header;
    std::getline(is, header);
    EXPECT_EQ(header, kReportHeader);
    int rows = 0;
    for (std::string line; std::getline(is, line);) {
        EXPECT_EQ(split(line).size(), 14u);
        ++rows;
    }
    EXPECT_EQ(rows, 4);
}

TEST(Cli, RunPrintsOutcome) {
    auto r = cli({"run", "four-check", "--alpha", "1e-3", "--beta", "1e-3", "--model", "gaussian", "--eta", "0.5",
                  "--true-param", "0.5", "--seed", "3"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("decision = "), std::string::npos);
    EXPECT_NE(r.out.find("sample_size = "), std::string::npos);
}

TEST(Cli, SweepWritesOneFilePerRegime) {
    auto dir = scratch("sweep");
    auto r = cli({"sweep", "--model", "gaussian", "--eta", "0.5", "--regime", "all", "--betas", "1e-2", "1e-3", "--reps",
                  "200", "--out", dir.string()});
    ASSERT_EQ(r.code, 0) << r.err;
    for (const char* g : {"equal", "power4", "logpower", "logoverbeta"}) {
        const auto text = slurp(dir / (std::string("sweep_") + g + ".csv"));
        EXPECT_EQ(text.substr(0, text.find('\n')), std::string(kReportHeader) + ",regime,ratio,ratio_se");
        EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 9);
    }
}

TEST(Cli, FiguresEmitsEveryDataFile) {
    auto dir = scratch("figures");
    auto r = cli({"figures", "--reps", "200", "--betas", "1e-1", "1e-2", "--points", "21", "--out", dir.string()});
    ASSERT_EQ(r.code, 0) << r.err;
    for (const char* f : {"rates_gaussian.csv", "rates_ar1.csv", "rates_markov.csv", "are.csv", "sweep_equal.csv",
                          "sweep_power4.csv", "sweep_logpower.csv", "sweep_logoverbeta.csv", "robustness.csv"}) {
        EXPECT_TRUE(fs::exists(dir / f)) << f;
        EXPECT_GT(fs::file_size(dir / f), 30u) << f;
    }
    // Gaussian rates cross at kappa = 0 at height I/4 = 0.125.
    std::ifstream in(dir / "rates_gaussian.csv");
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
        auto f = split(line);
        if (std::abs(std::stod(f[0])) < 1e-12) {
            EXPECT_NEAR(std::stod(f[1]), 0.125, 1e-12);
        }
    }
    EXPECT_EQ(slurp(dir / "robustness.csv").substr(0, std::string(kReportHeader).size()), kReportHeader);
}

TEST(Config, SamplesParseAndBuildModels) {
    int seen = 0;
    for (const auto& entry : fs::directory_iterator(MSTEST_SAMPLES_DIR)) {
        if (entry.path().extension() != ".ini") continue;
        auto c = load_config(entry.path().string());
        EXPECT_NO_THROW(model_from_config(c)) << entry.path();
        EXPECT_TRUE(c.alpha || c.regime) << entry.path();
        std::istringstream is(serialize_config(c));
        EXPECT_EQ(parse_config(is), c);
        ++seen;
    }
    EXPECT_GE(seen, 4);
}
