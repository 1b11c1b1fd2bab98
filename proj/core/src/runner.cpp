#include "fedfa/runner.hpp"

#include <filesystem>
#include <fstream>
#include <thread>

#include "fedfa/verify.hpp"

namespace fedfa {

namespace {

Dataset load_train(const ExperimentConfig& cfg) {
    switch (cfg.dataset.kind) {
        case DatasetKind::Synthetic: {
            const auto& s = cfg.dataset.synthetic;
            Rng rng(derive_seed(cfg.seed, {0}, StreamTag::DataGen));
            return generate_synthetic(s.classes, s.per_class, s.input_dim, s.separation,
                                      s.within_std, rng);
        }
        case DatasetKind::Idx:
            return load_idx(cfg.dataset.train_images, cfg.dataset.train_labels);
        case DatasetKind::Csv:
            return load_csv(cfg.dataset.train_csv, cfg.dataset.csv_classes);
    }
    throw std::logic_error("unknown dataset kind");
}

Dataset load_test(const ExperimentConfig& cfg) {
    switch (cfg.dataset.kind) {
        case DatasetKind::Synthetic: {
            const auto& s = cfg.dataset.synthetic;
            Rng rng(derive_seed(cfg.seed, {1}, StreamTag::DataGen));
            return generate_synthetic(s.classes, s.test_per_class, s.input_dim, s.separation,
                                      s.within_std, rng);
        }
        case DatasetKind::Idx:
            return load_idx(cfg.dataset.test_images, cfg.dataset.test_labels);
        case DatasetKind::Csv:
            return load_csv(cfg.dataset.test_csv, cfg.dataset.csv_classes);
    }
    throw std::logic_error("unknown dataset kind");
}

std::vector<ClientPartition> build_partitions(const ExperimentConfig& cfg, const Dataset& train) {
    Rng rng(derive_seed(cfg.seed, {}, StreamTag::Partition));
    std::vector<ClientPartition> partitions;
    const PartitionScheme label_scheme = cfg.partition.scheme == PartitionScheme::Combined
                                             ? cfg.partition.combined_label_scheme
                                             : cfg.partition.scheme;
    switch (label_scheme) {
        case PartitionScheme::Shards:
            partitions =
                partition_shards(train, cfg.clients, cfg.partition.classes_per_client, rng);
            break;
        case PartitionScheme::Dirichlet:
            partitions = partition_dirichlet(train, cfg.clients, cfg.partition.alpha, rng);
            break;
        case PartitionScheme::FeatureSkew:
            // IID label split: every client holds every class.
            partitions = partition_shards(train, cfg.clients, train.class_count, rng);
            break;
        case PartitionScheme::Combined:
            throw std::logic_error("combined scheme must name a label scheme");
    }
    const bool wants_skew = cfg.partition.scheme == PartitionScheme::FeatureSkew ||
                            cfg.partition.scheme == PartitionScheme::Combined ||
                            cfg.partition.feature_skew.has_value();
    if (wants_skew) {
        const FeatureSkewSpec spec = cfg.partition.feature_skew.value_or(FeatureSkewSpec{});
        Rng skew_rng(derive_seed(cfg.seed, {}, StreamTag::Skew));
        attach_feature_skew(partitions, spec.groups, spec.strength, train.X.cols(), skew_rng);
    }
    return partitions;
}

}  // namespace

ExperimentSetup build_setup(const ExperimentConfig& cfg) {
    ExperimentSetup setup;
    setup.train = load_train(cfg);
    setup.test = load_test(cfg);
    if (setup.train.class_count != setup.test.class_count)
        throw ConfigError("train/test class counts disagree");
    setup.partitions = build_partitions(cfg, setup.train);

    // Anchor initialization needs feature_dim >= C; promote if configured lower.
    std::size_t feature_dim = cfg.model.feature_dim;
    if (cfg.strategy.kind == StrategyKind::FedFA)
        feature_dim = std::max(feature_dim, static_cast<std::size_t>(setup.train.class_count));
    setup.extractor_dims.push_back(setup.train.X.cols());
    for (std::size_t h : cfg.model.hidden) setup.extractor_dims.push_back(h);
    setup.extractor_dims.push_back(feature_dim);
    return setup;
}

void run_experiment(const ExperimentConfig& cfg, RunSink& sink) {
    const auto problems = validate_config(cfg);
    if (!problems.empty()) {
        std::string msg = "invalid configuration:";
        for (const auto& p : problems) msg += "\n  - " + p;
        throw ConfigError(msg);
    }

    ExperimentSetup setup = build_setup(cfg);

    ExperimentState state;
    state.seed = cfg.seed;
    {
        Rng rng(derive_seed(cfg.seed, {}, StreamTag::ModelInit));
        state.global_model = init_model(setup.extractor_dims,
                                        static_cast<std::size_t>(setup.train.class_count), rng);
    }
    state.anchor_set = init_orthogonal(static_cast<std::size_t>(setup.train.class_count),
                                       setup.extractor_dims.back());

    EvalContext eval;
    eval.test = &setup.test;
    eval.train_union = &setup.train;
    eval.similarity = cfg.metrics.similarity;
    eval.feature_distance_holders_only =
        cfg.metrics.feature_distance_scope == FeatureDistanceScope::Holders;
    build_probe(setup.test, cfg.metrics.probe_per_class, cfg.seed, eval.probe_X, eval.probe_y);

    ServerOptions options;
    options.sample_rate = cfg.sample_rate;
    options.uniform_model_weights = cfg.aggregation.uniform_model_weights;
    options.anchor_weighting = cfg.aggregation.anchor_weighting;
    options.workers = cfg.workers > 0
                          ? cfg.workers
                          : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));

    // Round 0: the initial model, before any training.
    {
        RoundRecord initial;
        initial.round = 0;
        initial.test_accuracy = top1_accuracy(state.global_model, setup.test);
        initial.per_class_grad_sq_norm = classifier_grad_sq_norm(state.global_model, setup.train);
        initial.classifier_grad_sq_norm = total_grad_sq_norm(initial.per_class_grad_sq_norm);
        sink.on_record(initial);
        if (cfg.strategy.kind == StrategyKind::FedFA)
            sink.on_anchors(0, state.anchor_set.anchors);
    }

    for (int t = 1; t <= cfg.rounds; ++t) {
        eval.evaluate_accuracy = (t % cfg.eval_every == 0) || t == cfg.rounds;
        RoundRecord record = run_round(state, cfg.strategy, setup.partitions, setup.train,
                                       cfg.hyper, options, eval);
        sink.on_record(record);
        if (cfg.strategy.kind == StrategyKind::FedFA && cfg.strategy.fedfa.update_anchors)
            sink.on_anchors(t, state.anchor_set.anchors);
    }
    sink.on_finish(state.global_model, state.anchor_set, state.round);
}

ExperimentConfig resolve_cli_config(const std::string& config_path_or_preset,
                                    const CliOverrides& overrides) {
    ExperimentConfig cfg = is_preset_name(config_path_or_preset)
                               ? preset_config(config_path_or_preset)
                               : load_config_file(config_path_or_preset);
    if (overrides.out_dir) cfg.out_dir = *overrides.out_dir;
    if (overrides.seed) cfg.seed = *overrides.seed;
    if (overrides.workers) cfg.workers = *overrides.workers;
    return cfg;
}

int cmd_run(const std::string& config_path_or_preset, const CliOverrides& overrides,
            std::ostream& out, std::ostream& err) {
    ExperimentConfig cfg;
    try {
        cfg = resolve_cli_config(config_path_or_preset, overrides);
        const auto problems = validate_config(cfg);
        if (!problems.empty()) {
            err << "invalid configuration:\n";
            for (const auto& p : problems) err << "  - " << p << "\n";
            return 2;
        }
    } catch (const ConfigError& e) {
        err << e.what() << "\n";
        return 2;
    }
    try {
        std::filesystem::create_directories(cfg.out_dir);
        {
            std::ofstream snapshot(cfg.out_dir + "/config.resolved");
            snapshot << resolved_config(cfg).dump(2) << "\n";
        }
        FileRunSink sink(cfg.out_dir);
        run_experiment(cfg, sink);
        out << "run complete: " << cfg.out_dir << "\n";
        return 0;
    } catch (const std::exception& e) {
        err << "run failed: " << e.what() << "\n";
        return 1;
    }
}

int cmd_verify(std::ostream& out) {
    const auto results = run_verification_suites();
    bool all_pass = true;
    for (const auto& r : results) {
        out << (r.passed ? "[PASS] " : "[FAIL] ") << r.name;
        if (!r.detail.empty()) out << " (" << r.detail << ")";
        out << "\n";
        all_pass = all_pass && r.passed;
    }
    out << (all_pass ? "verification OK" : "verification FAILED") << "\n";
    return all_pass ? 0 : 1;
}

int cmd_partition_report(const std::string& config_path_or_preset, const CliOverrides& overrides,
                         std::ostream& out, std::ostream& err) {
    ExperimentConfig cfg;
    try {
        cfg = resolve_cli_config(config_path_or_preset, overrides);
        const auto problems = validate_config(cfg);
        if (!problems.empty()) {
            err << "invalid configuration:\n";
            for (const auto& p : problems) err << "  - " << p << "\n";
            return 2;
        }
    } catch (const ConfigError& e) {
        err << e.what() << "\n";
        return 2;
    }
    try {
        const Dataset train = load_train(cfg);
        const auto partitions = build_partitions(cfg, train);
        out << partition_report_json(partitions).dump(2) << "\n";
        return 0;
    } catch (const std::exception& e) {
        err << "partition report failed: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace fedfa
