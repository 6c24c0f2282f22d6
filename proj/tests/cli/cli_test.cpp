#include <gtest/gtest.h>

#include <sys/wait.h>

#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>

#include <json.hpp>

#include "birdfcn/audio/manifest.hpp"
#include "birdfcn/audio/wav.hpp"
#include "test_util.hpp"

using namespace birdfcn;
namespace fs = std::filesystem;

namespace {

struct Run {
    int status = -1;
    std::string out;
};

/// Runs the CLI with `args`; stdout is captured, stderr goes to `err_file` when given.
Run cli(const std::string& args, const fs::path& err_file = "/dev/null") {
    const std::string cmd = std::string(BIRDFCN_CLI) + " " + args + " 2>" + err_file.string();
    Run r;
    FILE* p = popen(cmd.c_str(), "r");
    if (!p) return r;
    std::array<char, 4096> buf;
    while (std::size_t n = fread(buf.data(), 1, buf.size(), p)) r.out.append(buf.data(), n);
    const int raw = pclose(p);
    r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    return r;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<float> tone(double seconds, double hz, std::mt19937_64& rng) {
    std::normal_distribution<double> noise(0.0, 0.01);
    std::vector<float> x(static_cast<std::size_t>(seconds * 44100));
    for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] = static_cast<float>(0.4 * std::sin(2 * std::numbers::pi * hz * i / 44100.0) + noise(rng));
    }
    return x;
}

/// Two tone classes, 8 clips each, written as WAVs with a manifest.
class CliTest : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        dir_ = new test_support::TempDir("cli");
        std::mt19937_64 rng(3);
        audio::DatasetManifest m;
        m.label_set = {"low", "high"};
        for (int i = 0; i < 16; ++i) {
            const bool high = i % 2;
            const std::string name = "clip" + std::to_string(i) + ".wav";
            audio::AudioClip clip;
            clip.samples = tone(0.6 + 0.05 * (i % 4), high ? 3000.0 : 700.0, rng);
            audio::write_wav(dir_->path() / name, clip);
            m.entries.push_back({name, high ? "high" : "low", 0.0});
        }
        audio::write_manifest(dir_->path() / "data.csv", m);
        // Mixed clip for detection: 4 s low then 4 s high.
        audio::AudioClip mixed;
        mixed.samples = tone(4.0, 700.0, rng);
        const auto b = tone(4.0, 3000.0, rng);
        mixed.samples.insert(mixed.samples.end(), b.begin(), b.end());
        audio::write_wav(dir_->path() / "mixed.wav", mixed);
    }
    static void TearDownTestSuite() { delete dir_; }

    static std::string path(const std::string& name) { return (dir_->path() / name).string(); }
    static std::string small() {
        return " --widths 4,8 --n-mels 16 --fmax 8000 --epochs 15 --batch-size 4 --patience 5 --learning-rate 0.01";
    }

    static test_support::TempDir* dir_;
};
test_support::TempDir* CliTest::dir_ = nullptr;

}  // namespace

TEST_F(CliTest, HelpDocumentsExitCodes) {
    for (std::string sub : {"", "fetch", "prepare", "features", "train", "gridsearch", "eval", "durations", "detect",
                            "gradcheck"}) {
        const auto r = cli(sub + " --help");
        EXPECT_EQ(r.status, 0) << sub;
        EXPECT_NE(r.out.find("Exit codes"), std::string::npos) << sub;
    }
    EXPECT_NE(cli("train --help").out.find("--batch-size UINT [80]"), std::string::npos);
}

TEST_F(CliTest, UsageErrorsExitTwo) {
    EXPECT_EQ(cli("").status, 2);
    EXPECT_EQ(cli("nosuch").status, 2);
    EXPECT_EQ(cli("train --manifest " + path("data.csv") + " --bogus").status, 2);
    EXPECT_EQ(cli("train --manifest " + path("data.csv") + " --activation swish").status, 2);
    EXPECT_EQ(cli("--jobs 0 gradcheck").status, 2);
}

TEST_F(CliTest, ModuleErrorsMapToTheirCodes) {
    const fs::path err = dir_->path() / "err.txt";
    auto r = cli("train --manifest " + path("missing.csv"), err);
    EXPECT_EQ(r.status, 3);
    const auto diag = slurp(err);
    EXPECT_EQ(std::count(diag.begin(), diag.end(), '\n'), 1);
    EXPECT_EQ(cli("train --manifest " + path("data.csv") + " --depth 5").status, 5);
    EXPECT_EQ(cli("train --folds 0 --manifest " + path("data.csv")).status, 5);
    // Not a weights file.
    EXPECT_EQ(cli("eval --model " + path("data.csv") + " --manifest " + path("data.csv")).status, 4);
}

TEST_F(CliTest, GradcheckPasses) {
    const auto r = cli("gradcheck");
    EXPECT_EQ(r.status, 0);
    for (const char* layer : {"conv3x3", "conv1x1", "maxpool", "gap", "relu", "tanh", "adaptive-tanh", "dropout-off",
                              "softmax+ce", "dense", "fcn-adaptive", "injected-fault"}) {
        EXPECT_NE(r.out.find(layer), std::string::npos) << layer;
    }
}

TEST_F(CliTest, CrossValidationIsReproducible) {
    const std::string args = "--seed 7 train --manifest " + path("data.csv") + " --folds 2 --knn 3" + small();
    const auto a = cli(args + " --report " + path("cv1.json"));
    const auto b = cli(args + " --report " + path("cv2.json"));
    ASSERT_EQ(a.status, 0);
    EXPECT_EQ(a.out, b.out);
    EXPECT_EQ(slurp(path("cv1.json")), slurp(path("cv2.json")));
    const auto j = nlohmann::json::parse(slurp(path("cv1.json")));
    EXPECT_EQ(j["folds"].size(), 2u);
    EXPECT_EQ(j["seed"], 7);
}

TEST_F(CliTest, ConfigFileOverridesFlags) {
    {
        std::ofstream cfg(path("run.ini"));
        cfg << "seed = 7\n[train]\nfolds = 2\nknn = 3\n";
    }
    const auto direct = cli("--seed 7 train --manifest " + path("data.csv") + " --folds 2 --knn 3" + small());
    const auto viaconfig = cli("--config " + path("run.ini") + " train --manifest " + path("data.csv") + small());
    ASSERT_EQ(direct.status, 0);
    EXPECT_EQ(direct.out, viaconfig.out);
    {
        std::ofstream cfg(path("bad.ini"));
        cfg << "[train]\nbogus = 1\n";
    }
    EXPECT_EQ(cli("--config " + path("bad.ini") + " train --manifest " + path("data.csv")).status, 2);
}

TEST_F(CliTest, TrainEvalDurationsDetect) {
    const auto t = cli("train --folds 0 --manifest " + path("data.csv") + " --model-out " + path("m.fcnw") + small());
    ASSERT_EQ(t.status, 0) << t.out;
    ASSERT_TRUE(fs::exists(path("m.fcnw")));

    const auto e = cli("eval --model " + path("m.fcnw") + " --manifest " + path("data.csv") + " --report " +
                       path("eval.json") + " --confusion " + path("conf.csv"));
    ASSERT_EQ(e.status, 0);
    EXPECT_NE(e.out.find("weighted avg"), std::string::npos);
    EXPECT_EQ(slurp(path("conf.csv")).rfind("truth\\predicted,low,high\n", 0), 0u);
    EXPECT_TRUE(nlohmann::json::parse(slurp(path("eval.json"))).contains("accuracy"));

    const auto d = cli("durations --model " + path("m.fcnw") + " --manifest " + path("data.csv") + " --durations 0.2,1");
    ASSERT_EQ(d.status, 0);
    EXPECT_NE(d.out.find("seconds  accuracy"), std::string::npos);

    const auto ev = cli("detect --model " + path("m.fcnw") + " --input " + path("mixed.wav") + " --chunk 2 --hop 1");
    ASSERT_EQ(ev.status, 0);
    std::istringstream lines(ev.out);
    std::string line;
    std::size_t n = 0;
    double last = -1.0;
    while (std::getline(lines, line)) {
        const auto j = nlohmann::json::parse(line);
        EXPECT_GT(j["t_start"].get<double>(), last);
        last = j["t_start"].get<double>();
        for (const char* key : {"t_start", "t_end", "species", "confidence", "low_energy"}) EXPECT_TRUE(j.contains(key));
        ++n;
    }
    EXPECT_EQ(n, 7u);  // 1 + (8 - 2) / 1
    EXPECT_EQ(cli("detect --model " + path("m.fcnw") + " --input " + path("mixed.wav") + " --min-confidence 1.1").out,
              "");
    EXPECT_EQ(cli("detect --model " + path("m.fcnw") + " --input " + path("mixed.wav") + " --hop 4 --chunk 3").status, 5);

    const auto ms = cli("detect --model " + path("m.fcnw") + " --manifest " + path("data.csv") + " --chunk 0.3 --hop 0.3" +
                        " --cooccurrence " + path("co.csv"));
    ASSERT_EQ(ms.status, 0);
    EXPECT_TRUE(nlohmann::json::parse(ms.out).contains("chunk_accuracy"));
    EXPECT_EQ(slurp(path("co.csv")).rfind("primary\\detected,low,high\n", 0), 0u);
}

TEST_F(CliTest, PrepareAndFeatures) {
    // A raw clip with leading silence and one that is silent throughout.
    std::mt19937_64 rng(5);
    audio::AudioClip loud;
    loud.samples.assign(44100, 0.0f);
    const auto t = tone(1.0, 1000.0, rng);
    loud.samples.insert(loud.samples.end(), t.begin(), t.end());
    audio::write_wav(dir_->path() / "raw_loud.wav", loud);
    audio::AudioClip silent;
    silent.samples.assign(44100, 0.0f);
    audio::write_wav(dir_->path() / "raw_silent.wav", silent);
    audio::DatasetManifest raw;
    raw.label_set = {"x"};
    raw.entries = {{"raw_loud.wav", "x", 0.0}, {"raw_silent.wav", "x", 0.0}};
    audio::write_manifest(dir_->path() / "raw.csv", raw);

    ASSERT_EQ(cli("prepare --manifest " + path("raw.csv") + " --out-dir " + path("prepared") + " --max-seconds 0.5").status, 0);
    const auto out = audio::load_manifest(dir_->path() / "prepared" / "manifest.csv");
    ASSERT_EQ(out.manifest.entries.size(), 1u);
    EXPECT_NEAR(out.manifest.entries[0].duration_seconds, 0.5, 1e-4);

    const std::string feats = "features --manifest " + path("data.csv") + " --cache-dir " + path("cache") + " --n-mels 16";
    EXPECT_NE(cli(feats).out.find("0 cached, 16 computed"), std::string::npos);
    EXPECT_NE(cli(feats).out.find("16 cached, 0 computed"), std::string::npos);
}
