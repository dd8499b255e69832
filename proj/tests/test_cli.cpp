#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "mpsens/cli.hpp"

namespace fs = std::filesystem;

namespace mpsens::cli {

namespace {

fs::path scratch(const std::string& name)
{
    const auto dir = fs::temp_directory_path() / ("mpsens_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p)
{
    std::ifstream f(p, std::ios::binary);
    std::ostringstream s;
    s << f.rdbuf();
    return s.str();
}

fs::path write_config(const fs::path& dir, const std::string& text)
{
    const auto p = dir / "config.yaml";
    std::ofstream(p) << text;
    return p;
}

int invoke(const std::string& args, const fs::path& dir)
{
    const std::string cmd = std::string(MPSENS_CLI_BINARY) + " " + args + " 2> " + (dir / "stderr.txt").string();
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

const char* bernoulli_hstar = R"(system:
  kind: bernoulli
  probs: [0.5, 0.5]
partition:
  kind: letters
  alphabet: 2
params:
  k_max: 5
  T: 10
)";

// every floating value in the results sits in a {value, exact} pair
void expect_flagged(const json& j, const std::string& path)
{
    if (j.is_object()) {
        if (j.contains("value") && j.contains("exact")) {
            EXPECT_TRUE(j["exact"].is_boolean()) << path;
            return;
        }
        for (const auto& [k, v] : j.items()) {
            expect_flagged(v, path + "." + k);
        }
    } else if (j.is_array()) {
        for (std::size_t i = 0; i < j.size(); ++i) {
            expect_flagged(j[i], path + "[" + std::to_string(i) + "]");
        }
    } else {
        EXPECT_FALSE(j.is_number_float()) << path;
    }
}

} // namespace

TEST(Config, SystemsFromYaml)
{
    const auto sys = build_system(YAML::Load("{kind: markov, matrix: [[0.5, 0.5], [1.0, 0.0]]}"));
    EXPECT_EQ(sys.alphabet_size(), 2);
    const auto st = build_system(YAML::Load("{kind: sturmian, alpha: '0.6180339887498948482'}"));
    EXPECT_EQ(st.as<sturmian_system>()->alpha, 0.6180339887498948482);
    const auto pr = build_system(YAML::Load("{kind: product, parts: [{kind: thue_morse}, {kind: bernoulli, probs: [0.3, 0.7]}]}"));
    EXPECT_EQ(pr.as<product_system>()->parts.size(), 2u);
    const auto part = build_partition(YAML::Load("{kind: product, parts: [{kind: letters, alphabet: 2}, {kind: words, length: 2}]}"));
    EXPECT_NO_THROW(atom_count(pr, part));
}

TEST(Config, RationalAlphaRejectedWithContinuedFraction)
{
    try {
        build_system(YAML::Load("kind: rotation\nalpha: \"0.4142857142857143\"\n"));
        FAIL() << "rational alpha accepted";
    } catch (const config_error& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("continued fraction"), std::string::npos) << msg;
        EXPECT_NE(msg.find("line 1"), std::string::npos) << msg;
    }
}

TEST(Config, DiagnosticsNameTheField)
{
    try {
        build_system(YAML::Load("kind: bernoulli\nprobs: [0.5, half]\n"));
        FAIL();
    } catch (const config_error& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("line 2"), std::string::npos) << msg;
        EXPECT_NE(msg.find("system.probs[1]"), std::string::npos) << msg;
    }
    EXPECT_THROW(build_system(YAML::Load("kind: tent")), config_error);
    EXPECT_THROW(build_system(YAML::Load("probs: [1.0]")), config_error);
    EXPECT_THROW(build_partition(YAML::Load("{kind: words, length: -1}")), config_error);
    EXPECT_THROW(build_system(YAML::Load("{kind: bernoulli, probs: [0.5, 0.6]}")), config_error);
}

TEST(Config, EchoKeepsDecimalText)
{
    const auto e = detail::echo(YAML::Load("{alpha: '0.61803398874989484820', k: 3, flag: true, xs: [1, 2.5]}"));
    EXPECT_EQ(e["alpha"], "0.61803398874989484820");
    EXPECT_EQ(e["k"], 3);
    EXPECT_EQ(e["flag"], true);
    EXPECT_EQ(e["xs"][1], "2.5");
}

TEST(Run, MissingSeedIsValidation)
{
    const auto dir = scratch("noseed");
    options o;
    o.command = "pairs";
    o.config_path = write_config(dir, bernoulli_hstar).string();
    o.out_dir = dir;
    std::ostringstream log;
    EXPECT_EQ(run(o, log), exit_validation);
    EXPECT_NE(log.str().find("seed"), std::string::npos);
}

TEST(Run, ParseErrorReportsLine)
{
    const auto dir = scratch("parse");
    options o;
    o.command = "hstar";
    o.config_path = write_config(dir, "system:\n  kind: bernoulli\n  probs: [0.5, 0.5\n").string();
    o.out_dir = dir;
    std::ostringstream log;
    EXPECT_EQ(run(o, log), exit_validation);
    EXPECT_NE(log.str().find("line "), std::string::npos) << log.str();
}

TEST(Binary, HStarBernoulliCsv)
{
    const auto dir = scratch("hstar");
    const auto cfg = write_config(dir, bernoulli_hstar);
    ASSERT_EQ(invoke("hstar --config " + cfg.string() + " --out " + dir.string(), dir), 0);
    std::istringstream csv(slurp(dir / "hstar.csv"));
    std::string line;
    std::getline(csv, line);
    EXPECT_EQ(line, "k,p_star_nats,p_star_over_k,exact_flag");
    int rows = 0;
    while (std::getline(csv, line)) {
        std::istringstream fields(line);
        std::string k, p, ratio, exact;
        std::getline(fields, k, ',');
        std::getline(fields, p, ',');
        std::getline(fields, ratio, ',');
        std::getline(fields, exact, ',');
        EXPECT_NEAR(std::stod(ratio), std::log(2.0), 1e-12) << line;
        EXPECT_EQ(exact, "1");
        ++rows;
    }
    EXPECT_EQ(rows, 5);
    const auto report = json::parse(slurp(dir / "report.json"));
    EXPECT_EQ(report["units"], "nats");
    EXPECT_EQ(report["config"]["source"]["params"]["k_max"], 5);
    expect_flagged(report["results"], "results");
}

TEST(Binary, Log2RescalesOutput)
{
    const auto dir = scratch("log2");
    const auto cfg = write_config(dir, bernoulli_hstar);
    ASSERT_EQ(invoke("hstar --log2 --config " + cfg.string() + " --out " + dir.string(), dir), 0);
    const auto report = json::parse(slurp(dir / "report.json"));
    EXPECT_EQ(report["units"], "bits");
    EXPECT_NEAR(report["results"]["profile"]["infimum_proxy"]["value"].get<double>(), 1.0, 1e-12);
}

TEST(Binary, ReportsAreByteReproducible)
{
    const auto a = scratch("repro_a");
    const auto b = scratch("repro_b");
    const std::string text = R"(system:
  kind: markov
  matrix: [[0.5, 0.5], [1.0, 0.0]]
partition:
  kind: letters
  alphabet: 2
params:
  trials: 6
  N: 4096
)";
    const auto cfg = write_config(a, text);
    ASSERT_EQ(invoke("pairs --seed 11 --config " + cfg.string() + " --out " + a.string(), a), 0);
    ASSERT_EQ(invoke("pairs --seed 11 --config " + cfg.string() + " --out " + b.string(), b), 0);
    EXPECT_EQ(slurp(a / "report.json"), slurp(b / "report.json"));
    EXPECT_EQ(slurp(a / "density.csv"), slurp(b / "density.csv"));
    const auto c = scratch("repro_c");
    ASSERT_EQ(invoke("pairs --seed 12 --config " + cfg.string() + " --out " + c.string(), c), 0);
    EXPECT_NE(slurp(a / "density.csv"), slurp(c / "density.csv"));
    EXPECT_EQ(slurp(a / "density.csv").rfind("trial,window_N,count,density\n0,", 0), 0u);
    expect_flagged(json::parse(slurp(a / "report.json"))["results"], "results");
}

TEST(Binary, MeanSensitivityCesaroCsv)
{
    const auto dir = scratch("mean");
    const auto cfg = write_config(dir, R"(system:
  kind: rotation
  alpha: "0.4142135623730950488"
params:
  notion: mean
  n: 2
  N: 2048
  trials: 2
  targets:
    - kind: arc
      from: "0.25"
      to: "0.26"
)");
    ASSERT_EQ(invoke("sensitivity --seed 4 --config " + cfg.string() + " --out " + dir.string(), dir), 0);
    EXPECT_EQ(slurp(dir / "cesaro.csv").rfind("set,trial,checkpoint_N,cesaro_value\n0,0,", 0), 0u);
    const auto report = json::parse(slurp(dir / "report.json"));
    EXPECT_LE(report["results"]["delta_estimate"]["value"].get<double>(), 0.01);
}

TEST(Binary, ExitCodes)
{
    const auto dir = scratch("codes");
    const auto bad = write_config(dir, "system:\n  kind: rotation\n  alpha: \"0.5\"\n");
    EXPECT_EQ(invoke("hstar --config " + bad.string() + " --out " + dir.string(), dir), 1);
    EXPECT_NE(slurp(dir / "stderr.txt").find("continued fraction"), std::string::npos);
    EXPECT_EQ(invoke("hstar --out " + dir.string(), dir), 1);
    EXPECT_EQ(invoke("frobnicate", dir), 1);
    EXPECT_FALSE(fs::exists(dir / "report.json"));
}

// trivial budget: the exploratory searches go inconclusive while every hard
// check still passes, and a new seed leaves the hard outcomes unchanged
TEST(Binary, VerifyUnderTrivialBudget)
{
    auto hard_outcomes = [](const json& report) {
        std::vector<std::string> out;
        for (const auto& s : report["results"]["sections"]) {
            for (const auto& c : s["checks"]) {
                if (c["kind"] == "hard") {
                    out.push_back(c["check"].get<std::string>() + ":" + c["outcome"].get<std::string>());
                }
            }
        }
        return out;
    };
    const auto a = scratch("verify_a");
    const auto b = scratch("verify_b");
    ASSERT_EQ(invoke("verify --budget 1 --seed 1 --out " + a.string(), a), 0);
    ASSERT_EQ(invoke("verify --budget 1 --seed 2 --out " + b.string(), b), 0);
    const auto ra = json::parse(slurp(a / "report.json"));
    const auto rb = json::parse(slurp(b / "report.json"));
    EXPECT_EQ(hard_outcomes(ra), hard_outcomes(rb));
    EXPECT_EQ(ra["results"]["sections"].size(), 3u);
    bool inconclusive = false;
    for (const auto& s : ra["results"]["sections"]) {
        for (const auto& c : s["checks"]) {
            if (c["kind"] == "hard") {
                EXPECT_EQ(c["outcome"], "pass") << c["check"];
            } else {
                inconclusive = inconclusive || c["outcome"] == "inconclusive";
            }
        }
    }
    EXPECT_TRUE(inconclusive);
    expect_flagged(ra["results"], "results");
}

} // namespace mpsens::cli
