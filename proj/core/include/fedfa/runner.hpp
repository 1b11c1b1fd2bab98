#pragma once

#include <optional>
#include <ostream>
#include <string>

#include "fedfa/config.hpp"
#include "fedfa/io.hpp"
#include "fedfa/server.hpp"

namespace fedfa {

/// Materialized experiment inputs derived from a validated config.
struct ExperimentSetup {
    Dataset train;
    Dataset test;
    std::vector<ClientPartition> partitions;
    std::vector<std::size_t> extractor_dims;  // [d_in, hidden..., feature_dim]
};

ExperimentSetup build_setup(const ExperimentConfig& config);

/// Runs all rounds against the sink: a round-0 record for the initial model,
/// one record per round, anchor trajectories for FedFA, final checkpoint.
void run_experiment(const ExperimentConfig& config, RunSink& sink);

struct CliOverrides {
    std::optional<std::string> out_dir;
    std::optional<std::uint64_t> seed;
    std::optional<int> workers;
};

/// Applies overrides to a loaded config (path or preset name).
ExperimentConfig resolve_cli_config(const std::string& config_path_or_preset,
                                    const CliOverrides& overrides);

/// Exit codes: 0 ok, 1 runtime failure, 2 configuration problem.
int cmd_run(const std::string& config_path_or_preset, const CliOverrides& overrides,
            std::ostream& out, std::ostream& err);
int cmd_verify(std::ostream& out);
int cmd_partition_report(const std::string& config_path_or_preset, const CliOverrides& overrides,
                         std::ostream& out, std::ostream& err);

}  // namespace fedfa
