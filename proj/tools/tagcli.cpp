#include <cstdio>
#include <cstdlib>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tag/tag.hpp"

namespace {

constexpr const char* kUsage =
    "usage: tagcli <command> [options]\n"
    "\n"
    "commands:\n"
    "  run <config>      execute one configured run\n"
    "  sweep <config>    run the parameter sweep declared in the config\n"
    "  verify            run the built-in identity and oracle checks\n"
    "  plot <results>    render plots for results written earlier\n"
    "\n"
    "options:\n"
    "  --seed N          override the config seed\n"
    "  --threads N       worker threads (0 = all cores, default 1)\n"
    "  --out DIR         override the output directory\n";

struct Args {
    std::string command;
    std::vector<std::string> positionals;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    int threads = 1;
};

Args parse_args(int argc, char** argv) {
    Args args;
    auto need_value = [&](int i, std::string_view flag) {
        if (i + 1 >= argc) {
            throw tag::ConfigError(std::string(flag) + " needs a value");
        }
        return std::string(argv[i + 1]);
    };
    for (int i = 1; i < argc; ++i) {
        std::string_view arg = argv[i];
        if (arg == "--help" || arg == "-h") {
            std::fputs(kUsage, stdout);
            std::exit(0);
        } else if (arg == "--seed") {
            std::string v = need_value(i, arg);
            char* end = nullptr;
            args.seed = std::strtoull(v.c_str(), &end, 10);
            if (end == v.c_str() || *end != '\0') {
                throw tag::ConfigError("--seed expects an integer, got '" + v + "'");
            }
            ++i;
        } else if (arg == "--threads") {
            std::string v = need_value(i, arg);
            char* end = nullptr;
            long t = std::strtol(v.c_str(), &end, 10);
            if (end == v.c_str() || *end != '\0' || t < 0 || t > 4096) {
                throw tag::ConfigError("--threads expects a count >= 0, got '" +
                                       v + "'");
            }
            args.threads = static_cast<int>(t);
            ++i;
        } else if (arg == "--out") {
            args.out = need_value(i, arg);
            ++i;
        } else if (!arg.empty() && arg[0] == '-') {
            throw tag::ConfigError("unknown option '" + std::string(arg) + "'");
        } else if (args.command.empty()) {
            args.command = std::string(arg);
        } else {
            args.positionals.push_back(std::string(arg));
        }
    }
    return args;
}

void print_record_tail(const tag::ResultRecord& rec) {
    std::printf("samples = %d\n", rec.samples);
    for (const auto& m : rec.metrics) {
        std::printf("metric.%s = %.17g\n", m.first.c_str(), m.second);
    }
    if (rec.ctag_fallback_total > 0) {
        std::printf("ctag_fallback_steps = %ld\n", rec.ctag_fallback_total);
    }
    std::printf("wall_seconds = %.3f\n", rec.wall_seconds);
}

int cmd_run(const Args& args) {
    if (args.positionals.size() != 1) {
        throw tag::ConfigError("run needs exactly one config file argument");
    }
    tag::ExperimentConfig cfg =
        tag::ExperimentConfig::from_file(args.positionals[0]);
    tag::RunOverrides ov;
    ov.seed = args.seed;
    ov.out_dir = args.out;
    ov.threads = args.threads;
    tag::RunOutcome out = tag::run_experiment(cfg, ov);
    std::printf("wrote %s\n", out.dir.string().c_str());
    print_record_tail(out.record);
    return 0;
}

int cmd_sweep(const Args& args) {
    if (args.positionals.size() != 1) {
        throw tag::ConfigError("sweep needs exactly one config file argument");
    }
    tag::ExperimentConfig cfg =
        tag::ExperimentConfig::from_file(args.positionals[0]);
    tag::RunOverrides ov;
    ov.seed = args.seed;
    ov.out_dir = args.out;
    ov.threads = args.threads;
    std::vector<tag::RunOutcome> outs = tag::sweep_experiment(cfg, ov);
    for (const tag::RunOutcome& o : outs) {
        std::printf("wrote %s\n", o.dir.string().c_str());
        print_record_tail(o.record);
    }
    return 0;
}

int cmd_verify(const Args& args) {
    tag::VerifyOptions opts;
    if (args.seed) opts.seed = *args.seed;
    std::vector<tag::CheckResult> results = tag::run_verification(opts);
    std::size_t passed = 0;
    for (const tag::CheckResult& r : results) {
        if (r.pass) {
            std::printf("[PASS] %s (%zu cases)\n", r.name.c_str(), r.cases);
            ++passed;
        } else {
            std::printf("[FAIL] %s: %s\n", r.name.c_str(), r.detail.c_str());
        }
    }
    std::printf("%zu/%zu checks passed\n", passed, results.size());
    return passed == results.size() ? 0 : 1;
}

int cmd_plot(const Args& args) {
    if (args.positionals.size() != 1) {
        throw tag::ConfigError("plot needs exactly one results directory argument");
    }
    std::vector<std::filesystem::path> written =
        tag::plot_results(args.positionals[0]);
    for (const auto& p : written) {
        std::printf("wrote %s\n", p.string().c_str());
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        Args args = parse_args(argc, argv);
        if (args.command.empty()) {
            std::fputs(kUsage, stderr);
            return 2;
        }
        if (args.command == "run") return cmd_run(args);
        if (args.command == "sweep") return cmd_sweep(args);
        if (args.command == "verify") return cmd_verify(args);
        if (args.command == "plot") return cmd_plot(args);
        std::fprintf(stderr, "unknown command '%s'\n\n%s", args.command.c_str(),
                     kUsage);
        return 2;
    } catch (const tag::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
}
