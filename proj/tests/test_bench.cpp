// SPDX-License-Identifier: Apache-2.0
#include <catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "sfloc/bench.hpp"

using namespace sfloc;
using namespace sfloc::bench;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("sfloc_bench_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

int run_cli(const std::string& args, const fs::path& log) {
    const std::string cmd = std::string(SFLOC_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) { return io::read_text_file(p); }

ExperimentConfig small_config() {
    ExperimentConfig c;
    c.synthetic.samples = 500;
    c.models = {"knn", "ridge"};
    c.seed = 3;
    return c;
}

}  // namespace

TEST_CASE("config text parsing") {
    const auto kv = parse_config_text("# comment\n\nseed = 7\nmodels = knn, tree  # trailing\nsvg=true\n");
    CHECK(kv.at("seed") == "7");
    CHECK(kv.at("models") == "knn, tree");
    ExperimentConfig c;
    apply_config(c, kv);
    CHECK(c.seed == 7);
    CHECK(c.models == std::vector<std::string>{"knn", "tree"});
    CHECK(c.svg);
    CHECK_THROWS_AS(parse_config_text("seed 7\n"), ParseError);
    CHECK_THROWS_AS(apply_setting(c, "bogus", "1"), std::invalid_argument);
    CHECK_THROWS_AS(apply_setting(c, "seed", "-1"), std::invalid_argument);
    CHECK_THROWS_AS(apply_setting(c, "features", "sometimes"), std::invalid_argument);
    apply_setting(c, "models", "all");
    CHECK(c.models.size() == 5);
    apply_setting(c, "models", "knn,svm");
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("describe round-trips through the parser") {
    ExperimentConfig c = small_config();
    c.precision_m = 12.5;
    c.synthetic.sf_policy = "fixed:9";
    ExperimentConfig d;
    apply_config(d, parse_config_text(describe(c)));
    CHECK(describe(d) == describe(c));
}

TEST_CASE("SF policy specs") {
    const auto layout = place_gateways(1000, 1000, 4, PlacementScheme::grid, 0);
    CHECK(std::holds_alternative<DistanceBinnedSf>(make_sf_policy("binned", layout)));
    CHECK(std::get<FixedSf>(make_sf_policy("fixed:11", layout)).sf.value() == 11);
    CHECK(std::get<DistanceBinnedSf>(make_sf_policy("binned:1,2,3,4,5", layout)).thresholds_m[4] == 5);
    CHECK_THROWS(make_sf_policy("fixed:6", layout));
    CHECK_THROWS(make_sf_policy("binned:1,2", layout));
    CHECK_THROWS(make_sf_policy("adr", layout));
}

TEST_CASE("benchmark on a small synthetic set") {
    const auto c = small_config();
    const auto d = prepare(c);
    CHECK(d.train.size() + d.validation.size() + d.test.size() == 500);
    const auto r = run_benchmark(c, d);
    REQUIRE(r.models.size() == 2);
    REQUIRE(r.models[0].report);
    REQUIRE(r.models[1].report);
    const auto m = r.improvement_matrix();
    REQUIRE(m.size() == 2);
    CHECK(m[0][0] == 0.0);
    CHECK(m[1][1] == 0.0);
    CHECK(m[0][1] == improvement(r.models[0].report->mde_m, r.models[1].report->mde_m));

    // A failing model is recorded without aborting the others.
    auto bad = c;
    bad.models = {"ridge", "knn"};
    bad.knn_k = 100000;
    const auto rb = run_benchmark(bad, d);
    CHECK(rb.models[0].report);
    CHECK_FALSE(rb.models[1].report);
    CHECK_FALSE(rb.models[1].error.empty());
    CHECK(std::isnan(rb.improvement_matrix()[0][1]));
}

TEST_CASE("CDF and rolling mean") {
    const auto rows = cdf_rows({1, 2, 2, 5});
    REQUIRE(rows.size() == 3);
    CHECK(rows[0] == std::pair{1.0, 0.25});
    CHECK(rows[1] == std::pair{2.0, 0.75});
    CHECK(rows[2] == std::pair{5.0, 1.0});
    const auto r = rolling_mean({1, 2, 3, 4, 5}, 2);
    CHECK(r == std::vector<double>{1, 1.5, 2.5, 3.5, 4.5});
}

TEST_CASE("run logs and figures round-trip") {
    const auto dir = scratch("figs");
    BenchmarkResult r;
    ModelResult knn{"knn", make_report({3, 1, 2}), "", {}};
    knn.report->loss_curve = {{1, 0.5, 0.6}, {2, 0.25, 0.3}};
    ModelResult dqn{"dqn", make_report({4, 4}), "", {}};
    for (std::size_t e = 1; e <= 5; ++e) dqn.episodes.push_back({e, 0.1 * e, 1.0 * e, 7, 100.0 / e, 1.0});
    r.models = {knn, dqn};
    write_run_logs(r, dir);
    CHECK(fs::exists(dir / "summary.csv"));
    CHECK(slurp(dir / "summary.csv") == "model,mde_m,n,status\nknn,2,3,ok\ndqn,4,2,ok\n");
    CHECK(slurp(dir / "improvement.csv") == "model,knn,dqn\nknn,0,0.5\ndqn,-1,0\n");

    const auto in = load_figure_inputs(dir);
    CHECK(in.reports.at("knn").mde_m == 2);
    CHECK(in.loss_curves.at("knn").size() == 2);
    REQUIRE(in.episodes.size() == 5);
    CHECK(in.episodes[4].error_m == 20);

    std::vector<std::string> warnings;
    const auto files = emit_figures(in, dir / "fig", {2, true}, &warnings);
    CHECK(warnings.empty());
    for (const char* f : {"episode_iow.csv", "episode_reward.csv", "episode_steps.csv", "episode_error.csv",
                          "cdf_knn.csv", "cdf_dqn.csv", "loss_knn.csv", "cdf.svg"})
        CHECK(fs::exists(dir / "fig" / f));
    CHECK(slurp(dir / "fig" / "cdf_knn.csv") == "error_m,fraction\n1,0.3333333333333333\n2,0.6666666666666666\n3,1\n");
    CHECK(slurp(dir / "fig" / "episode_error.csv").rfind("episode,value,rolling_mean\n1,100,100\n2,50,75\n", 0) == 0);

    warnings.clear();
    emit_figures(FigureInputs{}, dir / "empty", {}, &warnings);
    CHECK(warnings.size() == 3);
    fs::remove_all(dir);
}

TEST_CASE("cli: usage errors exit 1, help exits 0") {
    const auto dir = scratch("cli_usage");
    CHECK(run_cli("--help", dir / "log") == 0);
    CHECK(run_cli("", dir / "log") == 1);
    CHECK(run_cli("frobnicate", dir / "log") == 1);
    CHECK(run_cli("simulate --bogus 1 --out x.csv", dir / "log") == 1);
    CHECK(run_cli("simulate", dir / "log") == 1);
    CHECK(run_cli("simulate --gateways many --out " + (dir / "a.csv").string(), dir / "log") == 1);
    CHECK_FALSE(fs::exists(dir / "a.csv"));
    {
        std::ofstream(dir / "bad.cfg") << "seed = 1\nno equals sign here\n";
    }
    CHECK(run_cli("bench --config " + (dir / "bad.cfg").string(), dir / "log") == 1);
    CHECK(slurp(dir / "log").find("line 2") != std::string::npos);
    {
        std::ofstream(dir / "unknown.cfg") << "sead = 1\n";
    }
    CHECK(run_cli("bench --config " + (dir / "unknown.cfg").string(), dir / "log") == 1);
    CHECK(run_cli("train-dnn --help", dir / "log") == 0);
    CHECK(slurp(dir / "log").find("--features") != std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("cli: runtime failures exit 2 and leave no output") {
    const auto dir = scratch("cli_fail");
    {
        std::ofstream(dir / "broken.csv") << "rssi_1,sf,x_m,y_m\n-80,7,1\n";
    }
    CHECK(run_cli("train-dnn --data " + (dir / "broken.csv").string() + " --out " + (dir / "m.ckpt").string(),
                  dir / "log") == 2);
    CHECK(slurp(dir / "log").find("line 2") != std::string::npos);
    CHECK_FALSE(fs::exists(dir / "m.ckpt"));
    CHECK(fs::is_empty(dir) == false);
    for (const auto& e : fs::directory_iterator(dir)) CHECK(e.path().extension() != ".partial");
    fs::remove_all(dir);
}

TEST_CASE("cli: simulate is deterministic") {
    const auto dir = scratch("cli_sim");
    const std::string base = "simulate --gateways 9 --samples 2000 --sigma 4 --seed 1 --out ";
    REQUIRE(run_cli(base + (dir / "a.csv").string(), dir / "log") == 0);
    REQUIRE(run_cli(base + (dir / "b.csv").string(), dir / "log") == 0);
    CHECK(slurp(dir / "a.csv") == slurp(dir / "b.csv"));
    const auto loaded = load_csv(dir / "a.csv");
    CHECK(loaded.samples.size() == 2000);
    CHECK(loaded.gateway_count == 9);
    REQUIRE(run_cli("simulate --gateways 9 --samples 2000 --sigma 4 --seed 2 --out " + (dir / "c.csv").string(),
                    dir / "log") == 0);
    CHECK(slurp(dir / "a.csv") != slurp(dir / "c.csv"));
    fs::remove_all(dir);
}

TEST_CASE("cli: bench twice gives identical metric files and flags override the config") {
    const auto dir = scratch("cli_bench");
    {
        std::ofstream(dir / "exp.cfg") << "samples = 600\nmodels = knn,ridge,tree,dnn\ndnn_epochs = 3\nseed = 4\n"
                                          "out_dir = "
                                       << (dir / "ignored").string() << "\n";
    }
    const std::string cfg = " --config " + (dir / "exp.cfg").string();
    REQUIRE(run_cli("bench" + cfg + " --out-dir " + (dir / "r1").string(), dir / "log") == 0);
    REQUIRE(run_cli("bench" + cfg + " --out-dir " + (dir / "r2").string(), dir / "log") == 0);
    CHECK_FALSE(fs::exists(dir / "ignored"));
    for (const char* f : {"summary.csv", "improvement.csv", "errors_knn.csv", "errors_dnn.csv", "loss_curve_dnn.csv",
                          "figures/cdf_tree.csv", "figures/loss_dnn.csv"})
        CHECK(slurp(dir / "r1" / f) == slurp(dir / "r2" / f));
    CHECK(fs::exists(dir / "r1" / "manifest.txt"));
    CHECK(slurp(dir / "r1" / "manifest.txt").find("fnv1a:") != std::string::npos);

    REQUIRE(run_cli("bench" + cfg + " --seed 5 --models knn --out-dir " + (dir / "r3").string(), dir / "log") == 0);
    CHECK(slurp(dir / "r3" / "summary.csv").find("ridge") == std::string::npos);
    CHECK(slurp(dir / "r3" / "manifest.txt").find("seed = 5") != std::string::npos);

    REQUIRE(run_cli("figures --run-dir " + (dir / "r1").string() + " --out-dir " + (dir / "f").string() + " --svg",
                    dir / "log") == 0);
    CHECK(slurp(dir / "f" / "cdf_knn.csv") == slurp(dir / "r1" / "figures" / "cdf_knn.csv"));
    CHECK(fs::exists(dir / "f" / "cdf.svg"));
    fs::remove_all(dir);
}

TEST_CASE("cli: train then eval reproduces the training-time test MDE") {
    const auto dir = scratch("cli_eval");
    REQUIRE(run_cli("simulate --samples 800 --sigma 2 --seed 6 --out " + (dir / "d.csv").string(), dir / "log") == 0);
    const std::string data = " --data " + (dir / "d.csv").string() + " --seed 6";
    REQUIRE(run_cli("train-dnn" + data + " --epochs 4 --out " + (dir / "dnn.ckpt").string(), dir / "train.log") == 0);
    REQUIRE(run_cli("eval" + data + " --checkpoint " + (dir / "dnn.ckpt").string() + " --out " +
                        (dir / "e.csv").string(),
                    dir / "eval.log") == 0);
    const auto line = [](const std::string& s) { return s.substr(s.find("test MDE")); };
    CHECK(line(slurp(dir / "train.log")) == line(slurp(dir / "eval.log")));

    REQUIRE(run_cli("train-dqn" + data + " --episodes 40 --precision 10 --dqn-batch 16 --out " +
                        (dir / "dqn.ckpt").string() + " --episode-log " + (dir / "ep.csv").string(),
                    dir / "log") == 0);
    CHECK(load_checkpoint(dir / "dqn.ckpt").meta_or("precision_m", "") == "10");
    REQUIRE(run_cli("eval" + data + " --checkpoint " + (dir / "dqn.ckpt").string() + " --out " +
                        (dir / "q.csv").string(),
                    dir / "log") == 0);
    CHECK(slurp(dir / "q.csv").rfind("kind,error_m\n", 0) == 0);
    fs::remove_all(dir);
}

TEST_CASE("cli: ingest converts geographic CSVs") {
    const auto dir = scratch("cli_ingest");
    {
        std::ofstream(dir / "ant.csv") << "BS1,BS2,SF,HDOP,Latitude,Longitude\n-200,-110,9,1,51.2,4.4\n-95,-200,12,1,51.21,4.41\n";
    }
    REQUIRE(run_cli("ingest --schema antwerp --impute --input " + (dir / "ant.csv").string() + " --out " +
                        (dir / "out.csv").string(),
                    dir / "log") == 0);
    const auto l = load_csv(dir / "out.csv");
    CHECK(l.planar);
    CHECK(count_missing(l.samples) == 0);
    CHECK(*l.samples[0].rssi_dbm[0] == sensitivity(SensitivityParams{}, SpreadingFactor{9}));
    fs::remove_all(dir);
}

TEST_CASE("shipped sample configs parse and validate") {
    std::size_t seen = 0;
    for (const auto& entry : fs::directory_iterator(SFLOC_CONFIG_DIR)) {
        if (entry.path().extension() != ".cfg") continue;
        INFO(entry.path().string());
        ExperimentConfig c;
        CHECK_NOTHROW(apply_config(c, parse_config_text(slurp(entry.path()))));
        CHECK_NOTHROW(c.validate());
        ++seen;
    }
    CHECK(seen >= 3);
}
