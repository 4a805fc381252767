#include <gtest/gtest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

struct Run {
    int status = -1;
    std::string output;
};

Run run(const std::string& args) {
    const std::string cmd = std::string(SEQMETA_CLI_PATH) + " " + args + " 2>&1";
    Run r;
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) return r;
    std::array<char, 512> buf{};
    while (fgets(buf.data(), buf.size(), pipe)) r.output += buf.data();
    const int raw = pclose(pipe);
    r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    return r;
}

fs::path temp_dir(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("seqmeta_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

const std::string kConfig = std::string(SEQMETA_SOURCE_DIR) + "/configs/smoke.json";

}  // namespace

TEST(Cli, HelpAndUsageErrors) {
    const auto help = run("--help");
    EXPECT_EQ(help.status, 0);
    for (const char* sub : {"meta-train", "evaluate", "fit-decay", "report"})
        EXPECT_NE(help.output.find(sub), std::string::npos) << sub;
    EXPECT_NE(run("").status, 0);
    EXPECT_NE(run("meta-train").status, 0);
    EXPECT_NE(run("meta-train --config /no/such/file.json").status, 0);
    EXPECT_NE(run("meta-train --config " + kConfig + " --head-mode triple").status, 0);
}

TEST(Cli, FullPipeline) {
    const auto dir = temp_dir("pipeline");
    for (const char* L : {"1", "2", "3"}) {
        const auto out = (dir / (std::string("L") + L)).string();
        const auto common = " --config " + kConfig + " --out " + out + " --sequence-length " + L;
        auto r = run("meta-train" + common + " --workers 1");
        ASSERT_EQ(r.status, 0) << r.output;
        r = run("evaluate" + common);
        ASSERT_EQ(r.status, 0) << r.output;
        EXPECT_TRUE(fs::exists(fs::path(out) / "eval" / "curves.svg"));
    }
    const auto fit = run("fit-decay --out " + dir.string() + " " + (dir / "L1/eval/mean_matrix.csv").string() + " " +
                         (dir / "L2/eval/mean_matrix.csv").string() + " " + (dir / "L3/eval/mean_matrix.csv").string());
    ASSERT_EQ(fit.status, 0) << fit.output;
    EXPECT_TRUE(fs::exists(dir / "fits" / "correlation.json"));
    for (const char* L : {"L1", "L2", "L3"}) EXPECT_TRUE(fs::exists(dir / "fits" / (std::string(L) + ".json")));
    const auto report = run("report " + dir.string());
    ASSERT_EQ(report.status, 0) << report.output;
    EXPECT_TRUE(fs::exists(dir / "report.md"));
    fs::remove_all(dir);
}

TEST(Cli, SeedOverrideAndReproducibility) {
    const auto dir = temp_dir("seed");
    for (const char* sub : {"a", "b"})
        ASSERT_EQ(run("meta-train --config " + kConfig + " --seed 5 --out " + (dir / sub).string()).status, 0);
    const auto read = [](const fs::path& p) {
        std::string s;
        FILE* f = fopen(p.c_str(), "rb");
        for (int c; f && (c = fgetc(f)) != EOF;) s += static_cast<char>(c);
        if (f) fclose(f);
        return s;
    };
    EXPECT_EQ(read(dir / "a/init/init.bin"), read(dir / "b/init/init.bin"));
    EXPECT_NE(read(dir / "a/init/init.json").find("\"seed\": 5"), std::string::npos);
    fs::remove_all(dir);
}

TEST(Cli, FailuresExitNonzeroWithPaths) {
    const auto dir = temp_dir("failures");
    const auto eval = run("evaluate --config " + kConfig + " --out " + dir.string());
    EXPECT_NE(eval.status, 0);
    EXPECT_NE(eval.output.find((dir / "init" / "init.bin").string()), std::string::npos) << eval.output;
    FILE* f = fopen((dir / "bad.csv").c_str(), "w");
    fputs("t,i,accuracy\n1,1,zz\n", f);
    fclose(f);
    const auto fit = run("fit-decay --chance 0.2 " + (dir / "bad.csv").string());
    EXPECT_NE(fit.status, 0);
    EXPECT_NE(fit.output.find((dir / "bad.csv").string() + ":2"), std::string::npos) << fit.output;
    const auto empty = run("report " + dir.string());
    EXPECT_EQ(empty.status, 0);
    EXPECT_NE(empty.output.find("no runs found"), std::string::npos);
    fs::remove_all(dir);
}

TEST(Cli, FitDecayDefaultsToConfigOutputDirectory) {
    const auto dir = temp_dir("fit_default_out");
    std::ostringstream text;
    text << std::ifstream(kConfig).rdbuf();
    std::string cfg = text.str();
    cfg.replace(cfg.find("../runs/smoke"), std::string("../runs/smoke").size(), (dir / "run").string());
    // Relative data paths do not occur in the smoke config, so it can move.
    std::ofstream(dir / "cfg.json") << cfg;
    const auto config = " --config " + (dir / "cfg.json").string();
    ASSERT_EQ(run("meta-train" + config).status, 0);
    ASSERT_EQ(run("evaluate" + config).status, 0);
    const auto fit = run("fit-decay" + config + " " + (dir / "run/eval/mean_matrix.csv").string());
    ASSERT_EQ(fit.status, 0) << fit.output;
    EXPECT_TRUE(fs::exists(dir / "run" / "fits")) << fit.output;
    fs::remove_all(dir);
}
