#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "tag/runner.hpp"

namespace fs = std::filesystem;

namespace {

tag::ExperimentConfig small_run_config(const std::string& out_dir) {
    tag::ExperimentConfig cfg;
    cfg.manifest.seed = 11;
    cfg.manifest.batch_size = 30;
    cfg.manifest.schedule.num_inference_steps = 5;
    cfg.manifest.distribution.branch.depth = 2;
    cfg.manifest.distribution.branch.points_per_segment = 3;
    cfg.output_dir = out_dir;
    cfg.emit_plots = true;
    return cfg;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("a run writes the full set of output files") {
    fs::remove_all("runner_scratch_basic");
    tag::ExperimentConfig cfg = small_run_config("runner_scratch_basic/a");
    tag::RunOutcome out = tag::run_experiment(cfg);

    CHECK(out.dir == fs::path("runner_scratch_basic/a"));
    CHECK(fs::exists(out.dir / "record.txt"));
    CHECK(fs::exists(out.dir / "distribution.txt"));
    CHECK(fs::exists(out.dir / "finals.csv"));
    CHECK(fs::exists(out.dir / "gt.csv"));
    CHECK(fs::exists(out.dir / "timing.txt"));
    CHECK(fs::exists(out.dir / "plot.svg"));

    REQUIRE(out.record.metrics.size() == 4);
    CHECK(out.record.samples == 30);
    CHECK(out.record.wall_seconds > 0.0);

    // The record on disk is the serialized outcome.
    tag::ResultRecord back = tag::ResultRecord::parse(slurp(out.dir / "record.txt"));
    CHECK(back.serialize() == out.record.serialize());

    std::vector<tag::Vec> finals =
        tag::runner_detail::read_points_csv(out.dir / "finals.csv");
    REQUIRE(finals.size() == 30);
    CHECK(finals.front().size() == 2);

    CHECK(slurp(out.dir / "plot.svg").rfind("<svg", 0) == 0);
    CHECK(slurp(out.dir / "timing.txt").rfind("wall_seconds = ", 0) == 0);
}

TEST_CASE("identical configs produce byte-identical outputs") {
    fs::remove_all("runner_scratch_repeat");
    tag::ExperimentConfig cfg = small_run_config("runner_scratch_repeat/a");
    tag::run_experiment(cfg);
    cfg.output_dir = "runner_scratch_repeat/b";
    tag::RunOverrides ov;
    ov.threads = 3;  // thread count must not leak into any output
    tag::run_experiment(cfg, ov);

    for (const char* name : {"record.txt", "distribution.txt", "finals.csv",
                             "gt.csv", "plot.svg"}) {
        CHECK(slurp(fs::path("runner_scratch_repeat/a") / name) ==
              slurp(fs::path("runner_scratch_repeat/b") / name));
    }
}

TEST_CASE("overrides replace seed and output directory") {
    fs::remove_all("runner_scratch_override");
    tag::ExperimentConfig cfg = small_run_config("runner_scratch_override/ignored");
    tag::RunOverrides ov;
    ov.seed = 99;
    ov.out_dir = "runner_scratch_override/actual";
    tag::RunOutcome out = tag::run_experiment(cfg, ov);
    CHECK(out.dir == fs::path("runner_scratch_override/actual"));
    CHECK(!fs::exists("runner_scratch_override/ignored"));
    CHECK(out.record.config.manifest.seed == 99);

    tag::RunOutcome base = tag::run_experiment(cfg);
    CHECK(base.record.serialize() != out.record.serialize());
}

TEST_CASE("sweep runs one directory per value plus a summary") {
    fs::remove_all("runner_scratch_sweep");
    tag::ExperimentConfig cfg = small_run_config("runner_scratch_sweep");
    cfg.emit_plots = false;
    cfg.manifest.guidance.mode = tag::GuidanceMode::tag;
    cfg.manifest.guidance.eta = 1.0;
    cfg.sweep_param = "eta";
    cfg.sweep_values = {1.0, 1.15, 1.3};

    CHECK_THROWS_AS(tag::run_experiment(cfg), tag::ConfigError);

    std::vector<tag::RunOutcome> outs = tag::sweep_experiment(cfg);
    REQUIRE(outs.size() == 3);
    CHECK(outs[0].dir.filename() == "eta_00_1");
    CHECK(outs[1].dir.filename() == "eta_01_1.15");
    CHECK(outs[2].dir.filename() == "eta_02_1.3");
    for (const tag::RunOutcome& o : outs) {
        CHECK(fs::exists(o.dir / "record.txt"));
        CHECK(!o.record.config.sweep_param.has_value());
    }
    CHECK(outs[1].record.config.manifest.guidance.eta == 1.15);

    std::string sweep = slurp("runner_scratch_sweep/sweep.txt");
    CHECK(sweep.rfind("# sweep over eta\n", 0) == 0);
    CHECK(sweep.find("# columns: eta ood_fraction") != std::string::npos);
    int rows = 0;
    for (char c : sweep) {
        if (c == '\n') ++rows;
    }
    CHECK(rows == 5);  // two header lines plus one row per value

    tag::ExperimentConfig no_sweep = small_run_config("runner_scratch_sweep/x");
    CHECK_THROWS_AS(tag::sweep_experiment(no_sweep), tag::ConfigError);
}

TEST_CASE("plotting after the fact covers runs and sweep charts") {
    fs::remove_all("runner_scratch_plot");
    tag::ExperimentConfig cfg = small_run_config("runner_scratch_plot");
    cfg.emit_plots = false;
    cfg.manifest.guidance.mode = tag::GuidanceMode::tag;
    cfg.manifest.guidance.eta = 1.0;
    cfg.sweep_param = "eta";
    cfg.sweep_values = {1.0, 1.3};
    tag::sweep_experiment(cfg);

    std::vector<fs::path> written = tag::plot_results("runner_scratch_plot");
    // One scatter per value directory, one chart per metric.
    CHECK(written.size() == 6);
    CHECK(fs::exists("runner_scratch_plot/eta_00_1/plot.svg"));
    CHECK(fs::exists("runner_scratch_plot/eta_01_1.3/plot.svg"));
    CHECK(fs::exists("runner_scratch_plot/sweep_ood_fraction.svg"));
    CHECK(fs::exists("runner_scratch_plot/sweep_dispersion.svg"));

    std::string chart = slurp("runner_scratch_plot/sweep_dispersion.svg");
    std::vector<fs::path> again = tag::plot_results("runner_scratch_plot");
    CHECK(again == written);
    CHECK(slurp("runner_scratch_plot/sweep_dispersion.svg") == chart);
}

TEST_CASE("plotting failure modes") {
    CHECK_THROWS_AS(tag::plot_results("no_such_results_dir"), tag::ConfigError);

    fs::remove_all("runner_scratch_empty");
    fs::create_directories("runner_scratch_empty");
    CHECK_THROWS_AS(tag::plot_results("runner_scratch_empty"), tag::ConfigError);

    fs::remove_all("runner_scratch_nofinals");
    tag::ExperimentConfig cfg = small_run_config("runner_scratch_nofinals");
    cfg.emit_plots = false;
    cfg.store_finals = false;
    tag::run_experiment(cfg);
    try {
        tag::plot_results("runner_scratch_nofinals");
        FAIL("expected a config error");
    } catch (const tag::ConfigError& e) {
        CHECK(std::string(e.what()).find("store_finals") != std::string::npos);
    }
}
