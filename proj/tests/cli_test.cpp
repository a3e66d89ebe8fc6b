#include <gtest/gtest.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "app/commands.hpp"
#include "app/config.hpp"

using namespace xfer;
using namespace xfer::app;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const fs::path kSource = XFER_SOURCE_DIR;

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / "xfer_cli_test" / name;
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<std::string> lines(const fs::path& p) {
    std::istringstream in(slurp(p));
    std::vector<std::string> out;
    for (std::string l; std::getline(in, l);) {
        if (!l.empty() && l.back() == '\r') l.pop_back();
        out.push_back(l);
    }
    return out;
}

std::vector<std::string> split(const std::string& row) {
    std::vector<std::string> out;
    std::stringstream in(row);
    for (std::string c; std::getline(in, c, ',');) out.push_back(c);
    if (!row.empty() && row.back() == ',') out.emplace_back();
    return out;
}

// Same directory tree with the same bytes in every file.
void expect_identical_dirs(const fs::path& a, const fs::path& b) {
    std::size_t files = 0;
    for (const auto& e : fs::recursive_directory_iterator(a)) {
        if (!e.is_regular_file()) continue;
        const fs::path rel = fs::relative(e.path(), a);
        ASSERT_TRUE(fs::exists(b / rel)) << rel;
        EXPECT_EQ(slurp(e.path()), slurp(b / rel)) << rel;
        ++files;
    }
    std::size_t other = 0;
    for (const auto& e : fs::recursive_directory_iterator(b)) other += e.is_regular_file();
    EXPECT_EQ(files, other);
}

std::string config_error_path(const json& j) {
    try {
        parse_config(j, kSource);
    } catch (const ConfigError& e) {
        return e.path();
    }
    return "<accepted>";
}

json blob_pair_config() {
    std::ifstream in(kSource / "configs" / "blobs_perpendicular.json");
    return json::parse(in);
}

// Small, fast blob setup for commands downstream of train-pair.
json tiny_blob_config(const std::string& goal) {
    json j = blob_pair_config();
    j["dataset"]["train_per_class"] = 100;
    j["dataset"]["test_per_class"] = 20;
    j["train"]["goal"] = goal;
    j["train"]["epochs"] = 3;
    j["seeds"] = {3, 4};
    return j;
}

std::vector<std::string> run(const std::string& cmd, const json& cfg, const fs::path& out, std::size_t workers = 1) {
    return run_command(cmd, parse_config(cfg, kSource), RunOptions{out, workers, true});
}

}  // namespace

TEST(Config, ErrorsNameTheField) {
    json j = blob_pair_config();
    j["train"]["goal"] = "sideways";
    EXPECT_EQ(config_error_path(j), "train.goal");

    j = blob_pair_config();
    j["train"]["learning_rate"] = 0.1;
    EXPECT_EQ(config_error_path(j), "train.learning_rate");

    j = blob_pair_config();
    j["train"]["epochs"] = -3;
    EXPECT_EQ(config_error_path(j), "train.epochs");

    j = blob_pair_config();
    j["train"]["separate_penalty_optimizer"] = 1;
    EXPECT_EQ(config_error_path(j), "train.separate_penalty_optimizer");

    j = blob_pair_config();
    j["attacks"] = {{{"kind", "fgs"}, {"epsilon", 0.0}}};
    EXPECT_EQ(config_error_path(j), "attacks[0]");

    j = blob_pair_config();
    j["dataset"] = {{"kind", "mnist"}};
    EXPECT_EQ(config_error_path(j), "dataset.path");

    j = blob_pair_config();
    j["model"] = {{"kind", "lenet"}};
    EXPECT_EQ(config_error_path(j), "model.kind");

    j = blob_pair_config();
    j["seeds"] = json::array();
    EXPECT_EQ(config_error_path(j), "seeds");
}

TEST(Config, ResolvedFormRoundTrips) {
    const ExperimentConfig a = parse_config(blob_pair_config(), kSource);
    const json resolved = to_json(a);
    const ExperimentConfig b = parse_config(resolved, kSource);
    EXPECT_EQ(to_json(b), resolved);
    EXPECT_EQ(resolved["train"]["lr"], 0.01);
    EXPECT_EQ(resolved["train"]["beta2"], 0.999);
    EXPECT_EQ(resolved["model"]["hidden"], json({64}));
}

TEST(Config, ShippedConfigsParse) {
    for (const auto& e : fs::directory_iterator(kSource / "configs"))
        if (e.path().extension() == ".json") EXPECT_NO_THROW(load_config(e.path())) << e.path();
}

TEST(TrainPairCommand, DeskPerpendicularBlobsRun) {
    const fs::path out = scratch("desk_perp");
    const auto start = std::chrono::steady_clock::now();
    run("train-pair", blob_pair_config(), out);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    EXPECT_LT(seconds, 60.0);

    json gs = blob_pair_config();
    gs["scenarios"] = {{{"name", "perpendicular"}, {"dir", out.string()}}};
    const fs::path stats = scratch("desk_perp_stats");
    run("grad-stats", gs, stats);
    const auto rows = lines(stats / "grad_stats.csv");
    ASSERT_EQ(rows.size(), 3u);  // header, train, test
    const auto header = split(rows[0]);
    const auto test = split(rows[2]);
    ASSERT_EQ(test[1], "test");
    const auto col = std::find(header.begin(), header.end(), "mean_abs_cos") - header.begin();
    EXPECT_LT(std::stod(test[static_cast<std::size_t>(col)]), 0.05);
}

TEST(TrainPairCommand, RerunFromManifestIsByteIdentical) {
    const fs::path a = scratch("rerun_a"), b = scratch("rerun_b");
    const auto outputs = run("train-pair", tiny_blob_config("antiparallel"), a);
    EXPECT_EQ(outputs.back(), "manifest.json");
    const ExperimentConfig again = load_config(a / "manifest.json");
    run_command("train-pair", again, RunOptions{b, 1, true});
    expect_identical_dirs(a, b);
}

TEST(TrainPairCommand, WorkerCountDoesNotChangeOutputs) {
    const fs::path a = scratch("workers_1"), b = scratch("workers_3");
    run("train-pair", tiny_blob_config("perpendicular"), a, 1);
    run("train-pair", tiny_blob_config("perpendicular"), b, 3);
    expect_identical_dirs(a, b);
}

TEST(TrainPairCommand, SeedOffsetShiftsReplicates) {
    json j = tiny_blob_config("none");
    j["seed_offset"] = 10;
    const fs::path out = scratch("offset");
    run("train-pair", j, out);
    EXPECT_TRUE(fs::exists(out / "pair_s13_m1.ckpt"));
    EXPECT_TRUE(fs::exists(out / "pair_s14_m2.ckpt"));
}

class DownstreamCommands : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        pairs_ = new fs::path(scratch("pairs_perp"));
        run("train-pair", tiny_blob_config("perpendicular"), *pairs_);
        single_ = new fs::path(scratch("pairs_single"));
        json one = tiny_blob_config("none");
        one["seeds"] = {5};
        run("train-pair", one, *single_);
    }
    static void TearDownTestSuite() {
        delete pairs_;
        delete single_;
    }
    static json eval_config(const fs::path& dir, json attacks) {
        json j = tiny_blob_config("none");
        j.erase("train");
        j["scenarios"] = {{{"name", "perp"}, {"dir", dir.string()}}};
        j["attacks"] = std::move(attacks);
        j["eval"] = {{"attack_samples", 30}};
        return j;
    }
    static inline fs::path* pairs_ = nullptr;
    static inline fs::path* single_ = nullptr;
};

TEST_F(DownstreamCommands, TransferReportShape) {
    const fs::path out = scratch("transfer");
    run("transfer", eval_config(*pairs_, {{{"kind", "igs"}, {"epsilon", 0.5}, {"iterations", 3}}}), out);
    const auto rows = lines(out / "transfer.csv");
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[0],
              "scenario,attack,M1,M1_std,M2,M2_std,M1_to_M2,M1_to_M2_std,M2_to_M1,M2_to_M1_std,replicates,"
              "eligible_M1_to_M2,eligible_M2_to_M1");
    EXPECT_EQ(split(rows[1])[0], "perp");
    EXPECT_NE(slurp(out / "transfer.md").find("| Scenario | Attack | M1 | M2 | M1 to M2 | M2 to M1 |"),
              std::string::npos);
    EXPECT_EQ(lines(out / "transfer_replicates.csv").size(), 3u);
}

TEST_F(DownstreamCommands, SingleReplicateLeavesStdEmpty) {
    const fs::path out = scratch("transfer_single");
    run("transfer", eval_config(*single_, {{{"kind", "fgs"}, {"epsilon", 0.3}}}), out);
    const auto cells = split(lines(out / "transfer.csv")[1]);
    EXPECT_FALSE(cells[2].empty());
    EXPECT_TRUE(cells[3].empty());
    EXPECT_TRUE(cells[5].empty());
}

TEST_F(DownstreamCommands, EmptyAdversarialSetIsUndefined) {
    const fs::path out = scratch("transfer_empty");
    run("transfer", eval_config(*single_, {{{"kind", "fgs"}, {"epsilon", 1e-12}}}), out);
    const auto cells = split(lines(out / "transfer.csv")[1]);
    EXPECT_EQ(cells[6], "undefined");
    EXPECT_EQ(cells[8], "undefined");
    EXPECT_EQ(cells[11], "0");
    EXPECT_NE(slurp(out / "transfer.md").find("undefined"), std::string::npos);
}

TEST_F(DownstreamCommands, GradStatsTwoRowsPerScenario) {
    const fs::path out = scratch("gradstats");
    json j = eval_config(*pairs_, json::array());
    j["scenarios"].push_back({{"name", "again"}, {"dir", pairs_->string()}});
    run("grad-stats", j, out);
    const auto rows = lines(out / "grad_stats.csv");
    ASSERT_EQ(rows.size(), 5u);
    EXPECT_EQ(split(rows[1])[1], "train");
    EXPECT_EQ(split(rows[2])[1], "test");
    EXPECT_EQ(split(rows[1]).back(), "2");
}

TEST_F(DownstreamCommands, DetectEmitsRoc) {
    const fs::path out = scratch("detect");
    run("detect", eval_config(*pairs_, {{{"kind", "fgs"}, {"epsilon", 0.3}}}), out);
    const auto roc = lines(out / "detect_roc.csv");
    EXPECT_EQ(roc[0], "scenario,attack,threshold,fpr,tpr");
    EXPECT_GT(roc.size(), 2u);
    EXPECT_EQ(lines(out / "detect_summary.csv").size(), 2u);
}

TEST_F(DownstreamCommands, AttackWritesPerSampleCsv) {
    const fs::path out = scratch("attack");
    run("attack", eval_config(*single_, {{{"kind", "fgs"}, {"epsilon", 0.3}}}), out);
    const auto rows = lines(out / "attack_perp_s5_m1_FGS-0.3.csv");
    EXPECT_EQ(rows.size(), 31u);
    EXPECT_EQ(lines(out / "attack_summary.csv").size(), 3u);
}

TEST_F(DownstreamCommands, ReportCollectsTables) {
    const fs::path t = scratch("report_transfer"), out = scratch("report");
    run("transfer", eval_config(*pairs_, {{{"kind", "fgs"}, {"epsilon", 0.3}}}), t);
    json j;
    j["report"] = {{"inputs", {t.string()}}};
    run("report", j, out);
    const std::string md = slurp(out / "report.md");
    EXPECT_NE(md.find("## transfer"), std::string::npos);
    EXPECT_NE(md.find("| scenario | attack | M1 |"), std::string::npos);
}

TEST_F(DownstreamCommands, SpecMismatchIsRejected) {
    json j = eval_config(*pairs_, {{{"kind", "fgs"}, {"epsilon", 0.3}}});
    j["model"]["hidden"] = {8};
    EXPECT_THROW(run("transfer", j, scratch("mismatch")), std::runtime_error);
}

TEST(AsymmetryCommand, RefusesTooFewMagnitudes) {
    json j = tiny_blob_config("none");
    j["attacks"] = {{{"kind", "fgs"}, {"epsilon", 0.3}}};
    j["asymmetry"] = {{"base", 0.1}, {"targets", {0.1, 1.0, 3.0}}};
    try {
        run("asymmetry", j, scratch("asym_few"));
        FAIL() << "accepted two distinct magnitudes";
    } catch (const ConfigError& e) {
        EXPECT_EQ(e.path(), "asymmetry.targets");
    }
}

TEST(AsymmetryCommand, WritesTableAndFit) {
    json j = tiny_blob_config("none");
    j["attacks"] = {{{"kind", "igs"}, {"epsilon", 0.5}, {"iterations", 3}}};
    j["asymmetry"] = {{"base", 0.05}, {"targets", {0.2, 0.4, 0.8}}};
    j["eval"] = {{"attack_samples", 30}};
    const fs::path out = scratch("asym");
    run("asymmetry", j, out);
    EXPECT_EQ(lines(out / "asymmetry.csv").size(), 4u);
    EXPECT_EQ(lines(out / "asymmetry_fit.csv")[0], "a,b,c,r_squared,adjusted_r_squared,n,error");
    EXPECT_TRUE(fs::exists(out / "models" / "mag_0.05_s3.ckpt"));
}

TEST(MainEntry, ExitCodes) {
    const fs::path dir = scratch("main");
    fs::create_directories(dir);
    json bad = blob_pair_config();
    bad["train"]["goal"] = "sideways";
    std::ofstream(dir / "bad.json") << bad.dump();
    json good = tiny_blob_config("none");
    good["seeds"] = {1};
    std::ofstream(dir / "good.json") << good.dump();

    const auto call = [](std::vector<std::string> args) {
        std::vector<char*> argv;
        for (auto& a : args) argv.push_back(a.data());
        return main_entry(static_cast<int>(argv.size()), argv.data());
    };
    testing::internal::CaptureStderr();
    const int bad_rc = call({"xfer", "train-pair", "--config", (dir / "bad.json").string(), "--out", (dir / "bad").string()});
    const std::string err = testing::internal::GetCapturedStderr();
    EXPECT_NE(bad_rc, 0);
    EXPECT_NE(err.find("train.goal"), std::string::npos);
    EXPECT_FALSE(fs::exists(dir / "bad" / "manifest.json"));

    EXPECT_EQ(call({"xfer", "train-pair", "--config", (dir / "good.json").string(), "--out", (dir / "good").string(),
                    "--quiet"}),
              0);
    EXPECT_TRUE(fs::exists(dir / "good" / "manifest.json"));
    EXPECT_NE(call({"xfer", "transfer", "--config", (dir / "good.json").string(), "--out", (dir / "t").string(), "--quiet"}),
              0);
}
