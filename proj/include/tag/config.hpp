#pragma once

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "tag/analysis.hpp"
#include "tag/errors.hpp"
#include "tag/sampler.hpp"

namespace tag {

namespace config_detail {

inline std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

struct Entry {
    std::string section;
    std::string key;
    std::string value;
    int line;
};

// Line-oriented INI: [section] headers, key = value pairs, '#' or ';'
// comments. Full-line comments only; values may contain any character.
inline std::vector<Entry> parse_ini(const std::string& text) {
    std::vector<Entry> entries;
    std::istringstream is(text);
    std::string line;
    std::string section;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[') {
            if (t.back() != ']' || t.size() < 3) {
                throw ConfigError("config line " + std::to_string(lineno) +
                                  ": malformed section header '" + t + "'");
            }
            section = trim(t.substr(1, t.size() - 2));
            continue;
        }
        std::size_t eq = t.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(lineno) +
                              ": expected 'key = value', got '" + t + "'");
        }
        Entry e;
        e.section = section;
        e.key = trim(t.substr(0, eq));
        e.value = trim(t.substr(eq + 1));
        e.line = lineno;
        if (e.key.empty()) {
            throw ConfigError("config line " + std::to_string(lineno) +
                              ": empty key");
        }
        if (e.section.empty()) {
            throw ConfigError("config line " + std::to_string(lineno) +
                              ": key '" + e.key + "' outside any section");
        }
        entries.push_back(std::move(e));
    }
    return entries;
}

inline ConfigError bad_value(const Entry& e, const char* expected) {
    return ConfigError("config line " + std::to_string(e.line) + ": key '" +
                       e.key + "' expects " + expected + ", got '" + e.value +
                       "'");
}

inline double parse_double(const Entry& e) {
    errno = 0;
    char* end = nullptr;
    double v = std::strtod(e.value.c_str(), &end);
    if (end == e.value.c_str() || *end != '\0' || errno == ERANGE) {
        throw bad_value(e, "a real number");
    }
    return v;
}

inline long long parse_int(const Entry& e) {
    errno = 0;
    char* end = nullptr;
    long long v = std::strtoll(e.value.c_str(), &end, 10);
    if (end == e.value.c_str() || *end != '\0' || errno == ERANGE) {
        throw bad_value(e, "an integer");
    }
    return v;
}

inline std::uint64_t parse_u64(const Entry& e) {
    errno = 0;
    char* end = nullptr;
    unsigned long long v = std::strtoull(e.value.c_str(), &end, 10);
    if (end == e.value.c_str() || *end != '\0' || errno == ERANGE ||
        e.value.front() == '-') {
        throw bad_value(e, "a nonnegative integer");
    }
    return static_cast<std::uint64_t>(v);
}

inline bool parse_bool(const Entry& e) {
    if (e.value == "true") return true;
    if (e.value == "false") return false;
    throw bad_value(e, "'true' or 'false'");
}

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(s);
    while (std::getline(is, cur, ',')) {
        std::string t = trim(cur);
        if (!t.empty()) out.push_back(t);
    }
    return out;
}

inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline const char* fmt_bool(bool b) { return b ? "true" : "false"; }

}  // namespace config_detail

inline const std::vector<std::string>& known_metric_names() {
    static const std::vector<std::string> names = {
        "ood_fraction", "mean_manifold_distance", "energy_distance",
        "dispersion"};
    return names;
}

// A full experiment description: the run manifest plus output and metric
// settings. Parsed from a strict INI file where every unknown section or
// key is an error that names the offending line.
struct ExperimentConfig {
    RunManifest manifest;
    std::vector<std::string> metrics = known_metric_names();
    double ood_threshold_multiplier = kDefaultOodMultiplier;
    std::string output_dir = "out";
    bool emit_plots = false;
    bool store_finals = true;
    std::optional<std::string> sweep_param;
    std::vector<double> sweep_values;

    static ExperimentConfig from_string(const std::string& text);
    static ExperimentConfig from_file(const std::string& path);
    std::string to_canonical_string() const;
    void validate() const;
};

inline void ExperimentConfig::validate() const {
    manifest.validate();
    if (metrics.empty()) throw ConfigError("config: metrics list is empty");
    for (const std::string& m : metrics) {
        bool ok = false;
        for (const std::string& k : known_metric_names()) {
            if (m == k) ok = true;
        }
        if (!ok) throw ConfigError("config: unknown metric '" + m + "'");
        int count = 0;
        for (const std::string& other : metrics) {
            if (other == m) ++count;
        }
        if (count > 1) throw ConfigError("config: metric '" + m + "' listed twice");
    }
    if (!(ood_threshold_multiplier > 0.0)) {
        throw ConfigError("config: ood_threshold_multiplier must be positive");
    }
    if (output_dir.empty()) throw ConfigError("config: output_dir is empty");
    if (sweep_param.has_value()) {
        const std::string& p = *sweep_param;
        if (p != "eta" && p != "omega" && p != "truncation_radius") {
            throw ConfigError("config: sweep_param must be one of eta, omega, "
                              "truncation_radius; got '" + p + "'");
        }
        if (sweep_values.empty()) {
            throw ConfigError("config: sweep_param given but sweep_values empty");
        }
    } else if (!sweep_values.empty()) {
        throw ConfigError("config: sweep_values given without sweep_param");
    }
    if (emit_plots && manifest.distribution.dim() != 2) {
        throw ConfigError("config: emit_plots requires a 2-d distribution");
    }
}

inline ExperimentConfig ExperimentConfig::from_string(const std::string& text) {
    using namespace config_detail;
    std::vector<Entry> entries = parse_ini(text);

    ExperimentConfig cfg;
    RunManifest& mf = cfg.manifest;

    bool saw_seed = false, saw_batch = false, saw_kind = false, saw_mode = false;
    bool saw_eta = false, saw_omega = false, saw_metrics = false;
    std::vector<std::string> branch_keys_seen;
    std::vector<std::string> seen;  // "section.key" for duplicate detection

    for (const Entry& e : entries) {
        std::string id = e.section + "." + e.key;
        bool repeatable = (e.section == "distribution" && e.key == "component");
        if (!repeatable) {
            for (const std::string& s : seen) {
                if (s == id) {
                    throw ConfigError("config line " + std::to_string(e.line) +
                                      ": duplicate key '" + e.key +
                                      "' in section [" + e.section + "]");
                }
            }
            seen.push_back(id);
        }

        if (e.section == "run") {
            if (e.key == "seed") {
                mf.seed = parse_u64(e);
                saw_seed = true;
            } else if (e.key == "batch_size") {
                long long v = parse_int(e);
                if (v < 1 || v > 100000000) throw bad_value(e, "a count >= 1");
                mf.batch_size = static_cast<int>(v);
                saw_batch = true;
            } else if (e.key == "record_trajectories") {
                mf.record_trajectories = parse_bool(e);
            } else {
                throw ConfigError("config line " + std::to_string(e.line) +
                                  ": unknown key '" + e.key + "' in [run]");
            }
        } else if (e.section == "schedule") {
            if (e.key == "num_train_steps") {
                mf.schedule.num_train_steps = static_cast<int>(parse_int(e));
            } else if (e.key == "num_inference_steps") {
                mf.schedule.num_inference_steps = static_cast<int>(parse_int(e));
            } else if (e.key == "beta_start") {
                mf.schedule.beta_start = parse_double(e);
            } else if (e.key == "beta_end") {
                mf.schedule.beta_end = parse_double(e);
            } else {
                throw ConfigError("config line " + std::to_string(e.line) +
                                  ": unknown key '" + e.key + "' in [schedule]");
            }
        } else if (e.section == "distribution") {
            if (e.key == "kind") {
                if (e.value == "branching") {
                    mf.distribution.kind = DistributionSpec::Kind::branching;
                } else if (e.value == "gmm") {
                    mf.distribution.kind = DistributionSpec::Kind::gmm;
                } else {
                    throw bad_value(e, "'branching' or 'gmm'");
                }
                saw_kind = true;
            } else if (e.key == "depth") {
                mf.distribution.branch.depth = static_cast<int>(parse_int(e));
                branch_keys_seen.push_back(e.key);
            } else if (e.key == "branching_factor") {
                mf.distribution.branch.branching_factor =
                    static_cast<int>(parse_int(e));
                branch_keys_seen.push_back(e.key);
            } else if (e.key == "segment_length") {
                mf.distribution.branch.segment_length = parse_double(e);
                branch_keys_seen.push_back(e.key);
            } else if (e.key == "spread_angle") {
                mf.distribution.branch.spread_angle = parse_double(e);
                branch_keys_seen.push_back(e.key);
            } else if (e.key == "points_per_segment") {
                mf.distribution.branch.points_per_segment =
                    static_cast<int>(parse_int(e));
                branch_keys_seen.push_back(e.key);
            } else if (e.key == "component_stdev") {
                mf.distribution.branch.component_stdev = parse_double(e);
                branch_keys_seen.push_back(e.key);
            } else if (e.key == "build_seed") {
                mf.distribution.build_seed = parse_u64(e);
            } else if (e.key == "component") {
                // weight | mean coordinates | stdev
                std::vector<std::string> parts;
                std::string cur;
                std::istringstream ps(e.value);
                while (std::getline(ps, cur, '|')) parts.push_back(trim(cur));
                if (parts.size() != 3) {
                    throw bad_value(e, "'weight | mean coords | stdev'");
                }
                GmmComponent comp;
                {
                    Entry w{e.section, e.key, parts[0], e.line};
                    comp.weight = parse_double(w);
                }
                {
                    std::istringstream ms(parts[1]);
                    double v = 0.0;
                    while (ms >> v) comp.mean.push_back(v);
                    if (comp.mean.empty() || !ms.eof()) {
                        throw bad_value(e, "space-separated mean coordinates");
                    }
                }
                {
                    Entry s{e.section, e.key, parts[2], e.line};
                    comp.stdev = parse_double(s);
                }
                mf.distribution.components.push_back(std::move(comp));
            } else {
                throw ConfigError("config line " + std::to_string(e.line) +
                                  ": unknown key '" + e.key +
                                  "' in [distribution]");
            }
        } else if (e.section == "guidance") {
            if (e.key == "mode") {
                mf.guidance.mode = guidance_mode_from_string(e.value);
                saw_mode = true;
            } else if (e.key == "eta") {
                mf.guidance.eta = parse_double(e);
                saw_eta = true;
            } else if (e.key == "omega") {
                mf.guidance.omega = parse_double(e);
                saw_omega = true;
            } else if (e.key == "truncation_radius") {
                mf.guidance.truncation_radius = parse_double(e);
            } else if (e.key == "condition_label") {
                mf.guidance.condition_label = static_cast<int>(parse_int(e));
            } else if (e.key == "allow_sub_unit") {
                mf.guidance.allow_sub_unit = parse_bool(e);
            } else if (e.key == "ctag_form") {
                mf.guidance.ctag_form = ctag_form_from_string(e.value);
            } else {
                throw ConfigError("config line " + std::to_string(e.line) +
                                  ": unknown key '" + e.key + "' in [guidance]");
            }
        } else if (e.section == "experiment") {
            if (e.key == "metrics") {
                cfg.metrics = split_list(e.value);
                saw_metrics = true;
            } else if (e.key == "ood_threshold_multiplier") {
                cfg.ood_threshold_multiplier = parse_double(e);
            } else if (e.key == "output_dir") {
                cfg.output_dir = e.value;
            } else if (e.key == "emit_plots") {
                cfg.emit_plots = parse_bool(e);
            } else if (e.key == "store_finals") {
                cfg.store_finals = parse_bool(e);
            } else if (e.key == "sweep_param") {
                cfg.sweep_param = e.value;
            } else if (e.key == "sweep_values") {
                for (const std::string& v : split_list(e.value)) {
                    Entry ve{e.section, e.key, v, e.line};
                    cfg.sweep_values.push_back(parse_double(ve));
                }
            } else {
                throw ConfigError("config line " + std::to_string(e.line) +
                                  ": unknown key '" + e.key + "' in [experiment]");
            }
        } else {
            throw ConfigError("config line " + std::to_string(e.line) +
                              ": unknown section [" + e.section + "]");
        }
    }

    if (!saw_seed) throw ConfigError("config: [run] seed is required");
    if (!saw_batch) throw ConfigError("config: [run] batch_size is required");
    if (!saw_kind) throw ConfigError("config: [distribution] kind is required");
    if (!saw_mode) throw ConfigError("config: [guidance] mode is required");

    if (mf.distribution.kind == DistributionSpec::Kind::gmm) {
        if (!branch_keys_seen.empty()) {
            throw ConfigError("config: key '" + branch_keys_seen.front() +
                              "' requires kind = branching");
        }
        if (mf.distribution.components.empty()) {
            throw ConfigError(
                "config: kind = gmm needs at least one component line");
        }
    } else if (!mf.distribution.components.empty()) {
        throw ConfigError("config: component lines require kind = gmm");
    }

    GuidanceMode mode = mf.guidance.mode;
    bool needs_eta = mode == GuidanceMode::tag || mode == GuidanceMode::normal_amp ||
                     mode == GuidanceMode::ctag;
    bool needs_omega = mode == GuidanceMode::cfg || mode == GuidanceMode::ctag;
    if (needs_eta && !saw_eta) {
        throw ConfigError("config: mode '" + std::string(to_string(mode)) +
                          "' requires an explicit eta");
    }
    if (needs_omega && !saw_omega) {
        throw ConfigError("config: mode '" + std::string(to_string(mode)) +
                          "' requires an explicit omega");
    }
    if (saw_metrics && cfg.metrics.empty()) {
        throw ConfigError("config: metrics list is empty");
    }

    cfg.validate();
    return cfg;
}

inline ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return from_string(ss.str());
}

// Stable, fully explicit rendering: every manifest field appears, floats
// carry enough digits to round-trip exactly, and re-parsing the output
// reproduces the run bit for bit. Where the results land (output_dir) is an
// execution detail like the thread count and is deliberately left out, so
// the same experiment gives the same record wherever it is written.
inline std::string ExperimentConfig::to_canonical_string() const {
    using namespace config_detail;
    std::ostringstream os;
    const RunManifest& mf = manifest;

    os << "[run]\n";
    os << "seed = " << mf.seed << "\n";
    os << "batch_size = " << mf.batch_size << "\n";
    os << "record_trajectories = " << fmt_bool(mf.record_trajectories) << "\n";

    os << "\n[schedule]\n";
    os << "num_train_steps = " << mf.schedule.num_train_steps << "\n";
    os << "num_inference_steps = " << mf.schedule.num_inference_steps << "\n";
    os << "beta_start = " << fmt_double(mf.schedule.beta_start) << "\n";
    os << "beta_end = " << fmt_double(mf.schedule.beta_end) << "\n";

    os << "\n[distribution]\n";
    if (mf.distribution.kind == DistributionSpec::Kind::branching) {
        const BranchSpec& b = mf.distribution.branch;
        os << "kind = branching\n";
        os << "depth = " << b.depth << "\n";
        os << "branching_factor = " << b.branching_factor << "\n";
        os << "segment_length = " << fmt_double(b.segment_length) << "\n";
        os << "spread_angle = " << fmt_double(b.spread_angle) << "\n";
        os << "points_per_segment = " << b.points_per_segment << "\n";
        os << "component_stdev = " << fmt_double(b.component_stdev) << "\n";
        os << "build_seed = " << mf.distribution.build_seed << "\n";
    } else {
        os << "kind = gmm\n";
        for (const GmmComponent& c : mf.distribution.components) {
            os << "component = " << fmt_double(c.weight) << " |";
            for (double m : c.mean) os << " " << fmt_double(m);
            os << " | " << fmt_double(c.stdev) << "\n";
        }
    }

    os << "\n[guidance]\n";
    os << "mode = " << to_string(mf.guidance.mode) << "\n";
    os << "eta = " << fmt_double(mf.guidance.eta) << "\n";
    os << "omega = " << fmt_double(mf.guidance.omega) << "\n";
    if (mf.guidance.truncation_radius.has_value()) {
        os << "truncation_radius = " << fmt_double(*mf.guidance.truncation_radius)
           << "\n";
    }
    if (mf.guidance.condition_label.has_value()) {
        os << "condition_label = " << *mf.guidance.condition_label << "\n";
    }
    os << "allow_sub_unit = " << fmt_bool(mf.guidance.allow_sub_unit) << "\n";
    os << "ctag_form = " << to_string(mf.guidance.ctag_form) << "\n";

    os << "\n[experiment]\n";
    os << "metrics = ";
    for (std::size_t i = 0; i < metrics.size(); ++i) {
        if (i) os << ", ";
        os << metrics[i];
    }
    os << "\n";
    os << "ood_threshold_multiplier = " << fmt_double(ood_threshold_multiplier)
       << "\n";
    os << "emit_plots = " << fmt_bool(emit_plots) << "\n";
    os << "store_finals = " << fmt_bool(store_finals) << "\n";
    if (sweep_param.has_value()) {
        os << "sweep_param = " << *sweep_param << "\n";
        os << "sweep_values = ";
        for (std::size_t i = 0; i < sweep_values.size(); ++i) {
            if (i) os << ", ";
            os << fmt_double(sweep_values[i]);
        }
        os << "\n";
    }
    return os.str();
}

// Outcome of one run: the exact config echo plus the computed metrics.
// Wall-clock time is reported separately and never serialized here, so
// rerunning a record byte-compares clean.
struct ResultRecord {
    ExperimentConfig config;
    int samples = 0;
    std::vector<std::pair<std::string, double>> metrics;
    long ctag_fallback_total = 0;
    double wall_seconds = 0.0;  // not serialized

    std::string serialize() const {
        using namespace config_detail;
        std::ostringstream os;
        os << config.to_canonical_string();
        os << "\n[result]\n";
        os << "samples = " << samples << "\n";
        for (const auto& m : metrics) {
            os << "metric." << m.first << " = " << fmt_double(m.second) << "\n";
        }
        os << "ctag_fallback_steps = " << ctag_fallback_total << "\n";
        return os.str();
    }

    static ResultRecord parse(const std::string& text) {
        using namespace config_detail;
        std::istringstream is(text);
        std::string line;
        std::string config_part;
        std::string result_part;
        bool in_result = false;
        while (std::getline(is, line)) {
            if (trim(line) == "[result]") {
                in_result = true;
                continue;
            }
            (in_result ? result_part : config_part) += line + "\n";
        }
        if (!in_result) {
            throw ConfigError("record: missing [result] section");
        }
        ResultRecord rec;
        rec.config = ExperimentConfig::from_string(config_part);
        std::istringstream rs(result_part);
        while (std::getline(rs, line)) {
            std::string t = trim(line);
            if (t.empty() || t[0] == '#') continue;
            std::size_t eq = t.find('=');
            if (eq == std::string::npos) {
                throw ConfigError("record: malformed result line '" + t + "'");
            }
            std::string key = trim(t.substr(0, eq));
            std::string value = trim(t.substr(eq + 1));
            Entry e{"result", key, value, 0};
            if (key == "samples") {
                rec.samples = static_cast<int>(parse_int(e));
            } else if (key == "ctag_fallback_steps") {
                rec.ctag_fallback_total = parse_int(e);
            } else if (key.rfind("metric.", 0) == 0) {
                rec.metrics.emplace_back(key.substr(7), parse_double(e));
            } else {
                throw ConfigError("record: unknown result key '" + key + "'");
            }
        }
        return rec;
    }
};

}  // namespace tag
