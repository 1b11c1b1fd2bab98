#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fedfa/anchors.hpp"
#include "fedfa/metrics.hpp"
#include "fedfa/model.hpp"
#include "fedfa/strategies.hpp"

namespace fedfa {

enum class DatasetKind { Synthetic, Idx, Csv };

struct SyntheticSpec {
    int classes = 4;
    std::size_t per_class = 200;
    std::size_t input_dim = 8;
    double separation = 2.5;
    double within_std = 1.0;
    std::size_t test_per_class = 100;
};

struct DatasetSpec {
    DatasetKind kind = DatasetKind::Synthetic;
    SyntheticSpec synthetic;
    std::string train_images, train_labels, test_images, test_labels;  // idx
    std::string train_csv, test_csv;                                   // csv
    int csv_classes = 0;  // 0 = infer from labels
};

enum class PartitionScheme { Shards, Dirichlet, FeatureSkew, Combined };

struct FeatureSkewSpec {
    int groups = 2;
    double strength = 0.5;
};

struct PartitionSpec {
    PartitionScheme scheme = PartitionScheme::Shards;
    int classes_per_client = 2;                    // shards
    double alpha = 0.5;                            // dirichlet
    std::optional<FeatureSkewSpec> feature_skew;   // feature-skew / combined
    PartitionScheme combined_label_scheme = PartitionScheme::Shards;
};

struct ModelSpec {
    std::vector<std::size_t> hidden = {16};
    std::size_t feature_dim = 4;
};

struct AggregationSpec {
    bool uniform_model_weights = false;
    AnchorWeighting anchor_weighting = AnchorWeighting::ClientSize;
};

enum class FeatureDistanceScope {
    Holders,  // compare only clients that hold the class; skip classes with < 2
    All,      // compare every sampled client's mapping
};

struct MetricsSpec {
    std::size_t probe_per_class = 20;
    SimilarityKind similarity = SimilarityKind::Cosine;
    FeatureDistanceScope feature_distance_scope = FeatureDistanceScope::All;
};

struct ExperimentConfig {
    DatasetSpec dataset;
    PartitionSpec partition;
    StrategySpec strategy;
    Hyper hyper;
    ModelSpec model;
    int clients = 10;
    double sample_rate = 1.0;
    int rounds = 30;
    std::uint64_t seed = 42;
    std::string out_dir = "out";
    int eval_every = 1;
    int workers = 0;  // 0 = hardware concurrency
    AggregationSpec aggregation;
    MetricsSpec metrics;
};

/// Parses a config document; unknown keys are rejected. Throws ConfigError
/// with all problems listed.
ExperimentConfig parse_config(const nlohmann::json& doc);

/// Reads a config file; // and /* */ comments are permitted.
ExperimentConfig load_config_file(const std::string& path);

/// Full config with every default materialized; parse_config(resolved) is the
/// identity.
nlohmann::json resolved_config(const ExperimentConfig& config);

/// All validation problems (empty = valid). File existence is checked here.
std::vector<std::string> validate_config(const ExperimentConfig& config);

/// Built-in presets addressable by name from the CLI.
std::vector<std::string> preset_names();
ExperimentConfig preset_config(const std::string& name);
bool is_preset_name(const std::string& name);

}  // namespace fedfa
