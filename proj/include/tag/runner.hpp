#pragma once

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "tag/analysis.hpp"
#include "tag/config.hpp"
#include "tag/errors.hpp"
#include "tag/sampler.hpp"
#include "tag/scoremodel.hpp"
#include "tag/svg.hpp"

namespace tag {

// Ground-truth draws use a stream window far above any sample index, so
// they can never collide with the per-sample streams.
inline constexpr std::uint64_t kGtStreamBase = 1ULL << 40;

struct RunOverrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
    int threads = 1;
};

struct RunOutcome {
    ResultRecord record;
    std::filesystem::path dir;
};

namespace runner_detail {

inline void write_text(const std::filesystem::path& path,
                       const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open '" + path.string() + "' for writing");
    out << content;
    out.flush();
    if (!out) throw Error("failed writing '" + path.string() + "'");
}

inline std::string points_csv(const std::vector<Vec>& points) {
    std::ostringstream os;
    char buf[40];
    if (points.empty()) throw EmptyBatch("points_csv: no points");
    os << "sample_index";
    for (std::size_t i = 0; i < points.front().size(); ++i) os << ",dim" << i;
    os << "\n";
    for (std::size_t i = 0; i < points.size(); ++i) {
        os << i;
        for (double v : points[i]) {
            std::snprintf(buf, sizeof(buf), "%.17g", v);
            os << ',' << buf;
        }
        os << "\n";
    }
    return os.str();
}

inline std::vector<Vec> read_points_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open '" + path.string() + "'");
    std::string line;
    if (!std::getline(in, line)) {
        throw ConfigError("'" + path.string() + "' is empty");
    }
    std::vector<Vec> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string field;
        Vec row;
        bool first = true;
        while (std::getline(ls, field, ',')) {
            if (first) {
                first = false;  // sample_index column
                continue;
            }
            char* end = nullptr;
            double v = std::strtod(field.c_str(), &end);
            if (end == field.c_str()) {
                throw ConfigError("'" + path.string() + "': bad number '" +
                                  field + "'");
            }
            row.push_back(v);
        }
        if (!row.empty()) out.push_back(std::move(row));
    }
    return out;
}

inline std::string run_title(const ExperimentConfig& cfg) {
    std::ostringstream os;
    const GuidanceConfig& g = cfg.manifest.guidance;
    os << "mode=" << to_string(g.mode);
    if (g.mode == GuidanceMode::tag || g.mode == GuidanceMode::normal_amp ||
        g.mode == GuidanceMode::ctag) {
        os << " eta=" << svg_detail::num(g.eta, "%.4g");
    }
    if (g.mode == GuidanceMode::cfg || g.mode == GuidanceMode::ctag) {
        os << " omega=" << svg_detail::num(g.omega, "%.4g");
    }
    if (g.mode == GuidanceMode::truncation && g.truncation_radius) {
        os << " radius=" << svg_detail::num(*g.truncation_radius, "%.4g");
    }
    os << " seed=" << cfg.manifest.seed;
    return os.str();
}

}  // namespace runner_detail

// Executes one configured run end to end: sample, measure, write the
// record, the point files, and optionally the scatter plot. Thread count
// and timing never reach the record, so identical configs give identical
// files.
inline RunOutcome run_experiment(ExperimentConfig cfg,
                                 const RunOverrides& ov = {}) {
    if (ov.seed) cfg.manifest.seed = *ov.seed;
    if (ov.out_dir) cfg.output_dir = *ov.out_dir;
    if (cfg.sweep_param.has_value()) {
        throw ConfigError("config declares a sweep; run it with the sweep command");
    }
    cfg.validate();

    auto t0 = std::chrono::steady_clock::now();
    ConditionalMixture mixture = cfg.manifest.distribution.build();
    NoiseSchedule schedule = cfg.manifest.schedule.make();

    std::vector<Trajectory> trajs =
        sample_batch(cfg.manifest, mixture, schedule, ov.threads);
    std::vector<Vec> finals;
    finals.reserve(trajs.size());
    long fallback_total = 0;
    for (const Trajectory& t : trajs) {
        finals.push_back(t.final_state());
        fallback_total += static_cast<long>(t.ctag_fallback_steps.size());
    }

    std::vector<Vec> gt;
    gt.reserve(finals.size());
    for (int i = 0; i < cfg.manifest.batch_size; ++i) {
        CounterRng rng(cfg.manifest.seed,
                       kGtStreamBase + static_cast<std::uint64_t>(i));
        gt.push_back(sample_from(mixture.marginal(), rng));
    }

    ResultRecord rec;
    rec.config = cfg;
    rec.samples = static_cast<int>(finals.size());
    rec.ctag_fallback_total = fallback_total;
    for (const std::string& name : cfg.metrics) {
        double v = 0.0;
        if (name == "ood_fraction") {
            v = ood_fraction(finals, mixture.marginal(),
                             cfg.ood_threshold_multiplier);
        } else if (name == "mean_manifold_distance") {
            v = mean_manifold_distance(finals, mixture.marginal());
        } else if (name == "energy_distance") {
            v = energy_distance(finals, gt);
        } else if (name == "dispersion") {
            v = dispersion(finals);
        } else {
            throw ConfigError("unknown metric '" + name + "'");
        }
        rec.metrics.emplace_back(name, v);
    }
    auto t1 = std::chrono::steady_clock::now();
    rec.wall_seconds = std::chrono::duration<double>(t1 - t0).count();

    std::filesystem::path dir(cfg.output_dir);
    std::filesystem::create_directories(dir);
    runner_detail::write_text(dir / "record.txt", rec.serialize());
    {
        std::ostringstream os;
        dump_components(mixture.marginal(), os);
        runner_detail::write_text(dir / "distribution.txt", os.str());
    }
    if (cfg.store_finals) {
        runner_detail::write_text(dir / "finals.csv",
                                  runner_detail::points_csv(finals));
        runner_detail::write_text(dir / "gt.csv", runner_detail::points_csv(gt));
    }
    {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "wall_seconds = %.3f\n",
                      rec.wall_seconds);
        runner_detail::write_text(dir / "timing.txt", buf);
    }
    if (cfg.emit_plots) {
        std::ostringstream os;
        scatter_svg(os, mixture.marginal(), finals, runner_detail::run_title(cfg));
        runner_detail::write_text(dir / "plot.svg", os.str());
    }

    RunOutcome out;
    out.record = std::move(rec);
    out.dir = dir;
    return out;
}

// Expands the configured sweep into one run per value, all under the base
// seed, and writes a summary table next to the per-value directories.
inline std::vector<RunOutcome> sweep_experiment(ExperimentConfig cfg,
                                                const RunOverrides& ov = {}) {
    if (ov.seed) cfg.manifest.seed = *ov.seed;
    if (ov.out_dir) cfg.output_dir = *ov.out_dir;
    cfg.validate();
    if (!cfg.sweep_param.has_value()) {
        throw ConfigError("config has no sweep_param; nothing to sweep");
    }
    std::string param = *cfg.sweep_param;
    std::vector<double> values = cfg.sweep_values;
    std::filesystem::path base(cfg.output_dir);
    std::filesystem::create_directories(base);

    std::vector<RunOutcome> outcomes;
    for (std::size_t i = 0; i < values.size(); ++i) {
        ExperimentConfig sub = cfg;
        sub.sweep_param.reset();
        sub.sweep_values.clear();
        if (param == "eta") {
            sub.manifest.guidance.eta = values[i];
        } else if (param == "omega") {
            sub.manifest.guidance.omega = values[i];
        } else {
            sub.manifest.guidance.truncation_radius = values[i];
        }
        char name[64];
        std::snprintf(name, sizeof(name), "%s_%02zu_%g", param.c_str(), i,
                      values[i]);
        sub.output_dir = (base / name).string();
        RunOverrides sub_ov;
        sub_ov.threads = ov.threads;
        outcomes.push_back(run_experiment(std::move(sub), sub_ov));
    }

    std::ostringstream os;
    os << "# sweep over " << param << "\n";
    os << "# columns: " << param;
    for (const std::string& m : cfg.metrics) os << ' ' << m;
    os << "\n";
    char buf[40];
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.17g", values[i]);
        os << buf;
        for (const auto& m : outcomes[i].record.metrics) {
            std::snprintf(buf, sizeof(buf), "%.17g", m.second);
            os << ' ' << buf;
        }
        os << "\n";
    }
    runner_detail::write_text(base / "sweep.txt", os.str());
    return outcomes;
}

namespace runner_detail {

inline bool plot_run_dir(const std::filesystem::path& dir,
                         std::vector<std::filesystem::path>* written) {
    if (!std::filesystem::exists(dir / "record.txt")) return false;
    std::ifstream rin(dir / "record.txt");
    std::ostringstream rss;
    rss << rin.rdbuf();
    ResultRecord rec = ResultRecord::parse(rss.str());

    if (!std::filesystem::exists(dir / "finals.csv")) {
        throw ConfigError("'" + dir.string() +
                          "': no finals.csv (store_finals was off)");
    }
    std::vector<Vec> finals = read_points_csv(dir / "finals.csv");
    if (finals.empty()) {
        throw ConfigError("'" + dir.string() + "': finals.csv holds no samples");
    }
    if (finals.front().size() != 2) {
        throw ConfigError("'" + dir.string() +
                          "': plotting needs 2-d samples, got dimension " +
                          std::to_string(finals.front().size()));
    }
    std::ifstream din(dir / "distribution.txt");
    if (!din) {
        throw ConfigError("'" + dir.string() + "': missing distribution.txt");
    }
    GaussianMixture reference = load_components(din);

    std::ostringstream os;
    scatter_svg(os, reference, finals, run_title(rec.config));
    write_text(dir / "plot.svg", os.str());
    written->push_back(dir / "plot.svg");
    return true;
}

}  // namespace runner_detail

// Renders plots for previously written results: a scatter per run
// directory and, where a sweep summary exists, one value-vs-metric chart
// per metric. Returns the list of files written.
inline std::vector<std::filesystem::path> plot_results(
    const std::string& results_dir) {
    namespace fs = std::filesystem;
    fs::path base(results_dir);
    if (!fs::exists(base)) {
        throw ConfigError("results directory '" + results_dir + "' does not exist");
    }
    std::vector<fs::path> written;

    bool any = runner_detail::plot_run_dir(base, &written);

    std::vector<fs::path> subdirs;
    if (fs::is_directory(base)) {
        for (const auto& entry : fs::directory_iterator(base)) {
            if (entry.is_directory()) subdirs.push_back(entry.path());
        }
    }
    std::sort(subdirs.begin(), subdirs.end());
    for (const fs::path& sub : subdirs) {
        if (runner_detail::plot_run_dir(sub, &written)) any = true;
    }

    fs::path sweep_file = base / "sweep.txt";
    if (fs::exists(sweep_file)) {
        std::ifstream in(sweep_file);
        std::string line;
        std::string param;
        std::vector<std::string> columns;
        std::vector<std::vector<double>> rows;
        while (std::getline(in, line)) {
            if (line.rfind("# sweep over ", 0) == 0) {
                param = line.substr(13);
                continue;
            }
            if (line.rfind("# columns: ", 0) == 0) {
                std::istringstream cs(line.substr(11));
                std::string c;
                while (cs >> c) columns.push_back(c);
                continue;
            }
            if (line.empty() || line[0] == '#') continue;
            std::istringstream vs(line);
            std::vector<double> row;
            double v = 0.0;
            while (vs >> v) row.push_back(v);
            if (!row.empty()) rows.push_back(std::move(row));
        }
        if (columns.size() < 2 || rows.size() < 2) {
            throw ConfigError("sweep summary '" + sweep_file.string() +
                              "' has too few rows or columns to chart");
        }
        std::vector<double> xs;
        for (const auto& r : rows) xs.push_back(r.at(0));
        for (std::size_t c = 1; c < columns.size(); ++c) {
            std::vector<double> ys;
            for (const auto& r : rows) ys.push_back(r.at(c));
            std::ostringstream os;
            line_chart_svg(os, xs, ys, param, columns[c],
                           columns[c] + " vs " + param);
            fs::path out = base / ("sweep_" + columns[c] + ".svg");
            runner_detail::write_text(out, os.str());
            written.push_back(out);
        }
        any = true;
    }

    if (!any) {
        throw ConfigError("no run results found under '" + results_dir + "'");
    }
    return written;
}

}  // namespace tag
