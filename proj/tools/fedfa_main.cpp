#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "fedfa/config.hpp"
#include "fedfa/runner.hpp"

namespace {

struct LogLevel {
    bool quiet = false;
};

LogLevel read_log_env() {
    LogLevel level;
    if (const char* env = std::getenv("FEDFA_LOG")) {
        level.quiet = std::string(env) == "off";
    }
    return level;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Deterministic federated-learning simulation engine"};
    app.require_subcommand(1);

    std::string config_arg;
    std::string out_dir;
    std::uint64_t seed = 0;
    int workers = -1;
    bool seed_set = false;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--out", out_dir, "Output directory (overrides config)");
        sub->add_option("--seed", seed, "Seed override")->each([&](const std::string&) {
            seed_set = true;
        });
        sub->add_option("--workers", workers, "Worker thread count (0 = hardware)");
    };

    auto* run = app.add_subcommand("run", "Run an experiment from a config file or preset");
    run->add_option("config", config_arg, "Config path or preset name")->required();
    add_common(run);

    auto* verify = app.add_subcommand("verify", "Run the verification oracle suites");

    auto* report = app.add_subcommand("partition-report",
                                      "Emit per-client per-class counts without training");
    report->add_option("config", config_arg, "Config path or preset name")->required();
    add_common(report);

    auto* preset = app.add_subcommand("preset", "Print a built-in preset as JSON");
    std::string preset_name;
    preset->add_option("name", preset_name, "Preset name (omit to list)");

    CLI11_PARSE(app, argc, argv);

    const LogLevel log = read_log_env();
    fedfa::CliOverrides overrides;
    if (!out_dir.empty()) overrides.out_dir = out_dir;
    if (seed_set) overrides.seed = seed;
    if (workers >= 0) overrides.workers = workers;

    try {
        if (run->parsed()) {
            if (!log.quiet) std::cerr << "running " << config_arg << "\n";
            return fedfa::cmd_run(config_arg, overrides, std::cout, std::cerr);
        }
        if (verify->parsed()) {
            return fedfa::cmd_verify(std::cout);
        }
        if (report->parsed()) {
            return fedfa::cmd_partition_report(config_arg, overrides, std::cout, std::cerr);
        }
        if (preset->parsed()) {
            if (preset_name.empty()) {
                for (const auto& name : fedfa::preset_names()) std::cout << name << "\n";
                return 0;
            }
            std::cout << fedfa::resolved_config(fedfa::preset_config(preset_name)).dump(2)
                      << "\n";
            return 0;
        }
    } catch (const fedfa::ConfigError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << e.what() << "\n";
        return 1;
    }
    return 0;
}
