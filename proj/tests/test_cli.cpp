// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "modrec/binary_io.hpp"
#include "modrec/dataset.hpp"
#include "modrec/evaluate.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
    int code;
    std::string out;
};

Result run(const std::string& args) {
    const std::string cmd = std::string(MODREC_CLI) + " " + args + " 2>&1";
    FILE* p = ::popen(cmd.c_str(), "r");
    if (!p) return {-1, ""};
    std::string out;
    char buf[4096];
    while (std::size_t n = std::fread(buf, 1, sizeof buf, p)) out.append(buf, n);
    const int status = ::pclose(p);
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), {}};
}

class Cli : public ::testing::Test {
protected:
    fs::path dir = fs::temp_directory_path() / ("modrec_cli_" + std::to_string(::getpid()));
    void SetUp() override {
        fs::remove_all(dir);
        fs::create_directories(dir);
        modrec::write_text(dir / "small.cfg",
                           "classes = BPSK,QPSK,WBFM,AM-DSB\nsnrs = 10,18\nsignals_per_cell = 10\n"
                           "windows_per_signal = 4\nmax_epochs = 2\nbatch_size = 32\nbench_repetitions = 2\n"
                           "bench_batch = 32\n");
    }
    void TearDown() override { fs::remove_all(dir); }
    std::string p(const std::string& name) const { return (dir / name).string(); }
};

} // namespace

TEST_F(Cli, DefaultsRoundTripThroughConfigFile) {
    const Result d = run("defaults");
    ASSERT_EQ(d.code, 0);
    modrec::write_text(dir / "defaults.cfg", d.out);
    const Result g = run("generate --config " + p("defaults.cfg") + " --out " + p("x/y.rmd") + " --threads 0");
    EXPECT_EQ(g.code, 1) << g.out;  // --threads must be positive
    const Result h = run("--help");
    EXPECT_EQ(h.code, 0);
    for (const char* key : {"signals_per_cell", "cfo_walk_std", "svm_max_train", "bench_batch"})
        EXPECT_NE(h.out.find(key), std::string::npos) << key;
    EXPECT_EQ(run("").code, 1);
}

TEST_F(Cli, GenerateIsDeterministicAndLoads) {
    const Result a = run("generate --config " + p("small.cfg") + " --seed 9 --out " + p("a.rmd"));
    const Result b = run("generate --config " + p("small.cfg") + " --seed 9 --out " + p("b.rmd"));
    ASSERT_EQ(a.code, 0) << a.out;
    ASSERT_EQ(b.code, 0) << b.out;
    const auto hash_of = [](const std::string& out) { return out.substr(out.find("sha256 ") + 7, 64); };
    EXPECT_EQ(hash_of(a.out), hash_of(b.out));
    EXPECT_EQ(hash_of(a.out), modrec::sha256_hex(modrec::read_file(p("a.rmd"))));
    EXPECT_NE(a.out.find("QPSK,18,40"), std::string::npos) << a.out;
    EXPECT_EQ(modrec::load(p("a.rmd")).size(), 320u);
    const Result c = run("generate --config " + p("small.cfg") + " --seed 10 --out " + p("c.rmd"));
    EXPECT_NE(hash_of(c.out), hash_of(a.out));
}

TEST_F(Cli, MalformedConfigNamesLine) {
    modrec::write_text(dir / "bad.cfg", "seed = 1\n\nwindows_per_signal 3\n");
    const Result r = run("generate --config " + p("bad.cfg") + " --out " + p("z.rmd"));
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.out.find("line 3"), std::string::npos) << r.out;
    EXPECT_FALSE(fs::exists(dir / "z.rmd"));
}

TEST_F(Cli, FeaturesTrainEvalBench) {
    ASSERT_EQ(run("generate --config " + p("small.cfg") + " --out " + p("d.rmd")).code, 0);
    ASSERT_EQ(run("features --in " + p("d.rmd") + " --out " + p("f.csv")).code, 0);
    const std::string csv = slurp(dir / "f.csv");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 321);
    EXPECT_EQ(csv.substr(0, 33), "class,snr,lag0_complex_pow1_mean,");
    ASSERT_EQ(run("features --in " + p("d.rmd") + " --out " + p("f2.csv")).code, 0);
    EXPECT_EQ(slurp(dir / "f2.csv"), csv);

    const Result t1 = run("train --in " + p("d.rmd") + " --config " + p("small.cfg") + " --out " + p("t1"));
    const Result t2 = run("train --in " + p("d.rmd") + " --config " + p("small.cfg") + " --out " + p("t2"));
    ASSERT_EQ(t1.code, 0) << t1.out;
    ASSERT_EQ(t2.code, 0) << t2.out;
    EXPECT_EQ(slurp(dir / "t1" / "history.csv"), slurp(dir / "t2" / "history.csv"));
    EXPECT_EQ(slurp(dir / "t1" / "model.rmm"), slurp(dir / "t2" / "model.rmm"));
    EXPECT_TRUE(fs::exists(dir / "t1" / "manifest.json"));
    EXPECT_TRUE(fs::exists(dir / "t1" / "config.txt"));

    const Result e = run("eval --in " + p("d.rmd") + " --model " + p("t1/model.rmm") + " --out " + p("r") + " --snr 18");
    ASSERT_EQ(e.code, 0) << e.out;
    for (const char* f : {"summary.json", "accuracy_by_snr.csv", "confusion_all.csv", "confusion_18.csv", "snr_curve.svg"})
        EXPECT_TRUE(fs::exists(dir / "r" / f)) << f;
    EXPECT_FALSE(fs::exists(dir / "r" / "confusion_0.csv"));
    const auto summary = modrec::read_summary(dir / "r" / "summary.json");
    EXPECT_EQ(summary["n_examples"], 64);
    // the per-SNR confusion matrix holds only +18 dB examples
    EXPECT_EQ(summary["per_snr"][19]["n"], 32);
    const std::string c18 = slurp(dir / "r" / "confusion_18.csv");
    std::uint64_t total = 0;
    std::istringstream lines(c18);
    std::string line;
    std::getline(lines, line);
    while (std::getline(lines, line))
        for (std::size_t pos = line.find(','); pos != std::string::npos; pos = line.find(',', pos + 1))
            total += std::stoull(line.substr(pos + 1));
    EXPECT_EQ(total, 32u);

    const Result missing = run("eval --in " + p("d.rmd") + " --model " + p("nope.rmm"));
    EXPECT_EQ(missing.code, 2);
    EXPECT_NE(missing.out.find("does not exist"), std::string::npos);

    const Result b = run("bench --in " + p("d.rmd") + " --config " + p("small.cfg") + " --models gnb,knn1 --out " + p("b"));
    ASSERT_EQ(b.code, 0) << b.out;
    const std::string timing = slurp(dir / "b" / "timing.csv");
    EXPECT_EQ(std::count(timing.begin(), timing.end(), '\n'), 3);
    const auto tj = nlohmann::json::parse(slurp(dir / "b" / "timing.json"));
    EXPECT_EQ(tj["entries"][0]["seconds"].size(), 2u);
    EXPECT_FALSE(tj["environment"].get<std::string>().empty());
}

TEST_F(Cli, NumericFailureExitsNonZero) {
    ASSERT_EQ(run("generate --config " + p("small.cfg") + " --out " + p("d.rmd")).code, 0);
    modrec::write_text(dir / "hot.cfg", "learning_rate = 1e30\nmax_epochs = 5\nbatch_size = 8\nl2_conv = 0\nl1_act = 0\n");
    const Result r = run("train --in " + p("d.rmd") + " --config " + p("hot.cfg") + " --out " + p("hot"));
    EXPECT_EQ(r.code, 2) << r.out;
    EXPECT_NE(r.out.find("non-finite"), std::string::npos) << r.out;
}

TEST_F(Cli, OutputRootFromEnvironment) {
    const std::string root = p("envroot");
    const std::string cmd = "MODREC_OUT=" + root + " " + std::string(MODREC_CLI) + " generate --config " + p("small.cfg") +
                            " > /dev/null 2>&1";
    ASSERT_EQ(std::system(cmd.c_str()), 0);
    EXPECT_TRUE(fs::exists(fs::path(root) / "dataset.rmd"));
    EXPECT_TRUE(fs::exists(fs::path(root) / "dataset.json"));
}
