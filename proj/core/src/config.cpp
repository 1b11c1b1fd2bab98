#include "fedfa/config.hpp"

#include <filesystem>
#include <fstream>
#include <set>

namespace fedfa {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::vector<std::string>& problems) {
    std::string msg = "invalid configuration:";
    for (const auto& p : problems) msg += "\n  - " + p;
    throw ConfigError(msg);
}

void reject_unknown(const json& obj, const std::set<std::string>& known,
                    const std::string& where, std::vector<std::string>& problems) {
    for (const auto& [key, value] : obj.items()) {
        (void)value;
        if (!known.contains(key)) problems.push_back(where + ": unknown key '" + key + "'");
    }
}

DatasetKind parse_dataset_kind(const std::string& s) {
    if (s == "synthetic") return DatasetKind::Synthetic;
    if (s == "idx") return DatasetKind::Idx;
    if (s == "csv") return DatasetKind::Csv;
    throw ConfigError("dataset.kind: expected synthetic|idx|csv, got '" + s + "'");
}

std::string to_string(DatasetKind k) {
    switch (k) {
        case DatasetKind::Synthetic: return "synthetic";
        case DatasetKind::Idx: return "idx";
        case DatasetKind::Csv: return "csv";
    }
    return "unknown";
}

PartitionScheme parse_scheme(const std::string& s) {
    if (s == "shards") return PartitionScheme::Shards;
    if (s == "dirichlet") return PartitionScheme::Dirichlet;
    if (s == "feature-skew") return PartitionScheme::FeatureSkew;
    if (s == "combined") return PartitionScheme::Combined;
    throw ConfigError("partition.scheme: expected shards|dirichlet|feature-skew|combined, got '" +
                      s + "'");
}

std::string to_string(PartitionScheme s) {
    switch (s) {
        case PartitionScheme::Shards: return "shards";
        case PartitionScheme::Dirichlet: return "dirichlet";
        case PartitionScheme::FeatureSkew: return "feature-skew";
        case PartitionScheme::Combined: return "combined";
    }
    return "unknown";
}

StrategyKind parse_strategy_kind(const std::string& s) {
    if (s == "fedavg") return StrategyKind::FedAvg;
    if (s == "fedprox") return StrategyKind::FedProx;
    if (s == "fedfa") return StrategyKind::FedFA;
    throw ConfigError("strategy.kind: expected fedavg|fedprox|fedfa, got '" + s + "'");
}

CalibrationTiming parse_calibration(const std::string& s) {
    if (s == "per_batch") return CalibrationTiming::PerBatch;
    if (s == "per_epoch") return CalibrationTiming::PerEpoch;
    if (s == "after_training") return CalibrationTiming::AfterTraining;
    if (s == "off") return CalibrationTiming::Off;
    throw ConfigError(
        "strategy.calibrate: expected per_batch|per_epoch|after_training|off, got '" + s + "'");
}

}  // namespace

ExperimentConfig parse_config(const json& doc) {
    std::vector<std::string> problems;
    if (!doc.is_object()) throw ConfigError("config root must be a JSON object");
    reject_unknown(doc,
                   {"dataset", "partition", "strategy", "hyper", "model", "clients", "sample_rate",
                    "rounds", "seed", "out_dir", "eval_every", "workers", "aggregation",
                    "metrics"},
                   "config", problems);

    ExperimentConfig cfg;
    try {
        if (doc.contains("dataset")) {
            const auto& d = doc.at("dataset");
            reject_unknown(d,
                           {"kind", "classes", "per_class", "input_dim", "separation",
                            "within_std", "test_per_class", "train_images", "train_labels",
                            "test_images", "test_labels", "train_csv", "test_csv", "csv_classes"},
                           "dataset", problems);
            if (d.contains("kind")) cfg.dataset.kind = parse_dataset_kind(d.at("kind"));
            auto& s = cfg.dataset.synthetic;
            if (d.contains("classes")) s.classes = d.at("classes");
            if (d.contains("per_class")) s.per_class = d.at("per_class");
            if (d.contains("input_dim")) s.input_dim = d.at("input_dim");
            if (d.contains("separation")) s.separation = d.at("separation");
            if (d.contains("within_std")) s.within_std = d.at("within_std");
            if (d.contains("test_per_class")) s.test_per_class = d.at("test_per_class");
            if (d.contains("train_images")) cfg.dataset.train_images = d.at("train_images");
            if (d.contains("train_labels")) cfg.dataset.train_labels = d.at("train_labels");
            if (d.contains("test_images")) cfg.dataset.test_images = d.at("test_images");
            if (d.contains("test_labels")) cfg.dataset.test_labels = d.at("test_labels");
            if (d.contains("train_csv")) cfg.dataset.train_csv = d.at("train_csv");
            if (d.contains("test_csv")) cfg.dataset.test_csv = d.at("test_csv");
            if (d.contains("csv_classes")) cfg.dataset.csv_classes = d.at("csv_classes");
        }
        if (doc.contains("partition")) {
            const auto& p = doc.at("partition");
            reject_unknown(p,
                           {"scheme", "classes_per_client", "alpha", "feature_skew",
                            "combined_label_scheme"},
                           "partition", problems);
            if (p.contains("scheme")) cfg.partition.scheme = parse_scheme(p.at("scheme"));
            if (p.contains("classes_per_client"))
                cfg.partition.classes_per_client = p.at("classes_per_client");
            if (p.contains("alpha")) cfg.partition.alpha = p.at("alpha");
            if (p.contains("combined_label_scheme"))
                cfg.partition.combined_label_scheme =
                    parse_scheme(p.at("combined_label_scheme"));
            if (p.contains("feature_skew")) {
                const auto& fs = p.at("feature_skew");
                reject_unknown(fs, {"groups", "strength"}, "partition.feature_skew", problems);
                FeatureSkewSpec spec;
                if (fs.contains("groups")) spec.groups = fs.at("groups");
                if (fs.contains("strength")) spec.strength = fs.at("strength");
                cfg.partition.feature_skew = spec;
            }
        }
        if (doc.contains("strategy")) {
            const auto& s = doc.at("strategy");
            reject_unknown(s,
                           {"kind", "prox_mu", "mu", "lambda", "calibrate", "update_anchors",
                            "after_training_steps"},
                           "strategy", problems);
            if (s.contains("kind")) cfg.strategy.kind = parse_strategy_kind(s.at("kind"));
            if (s.contains("prox_mu")) cfg.strategy.prox_mu = s.at("prox_mu");
            if (s.contains("mu")) cfg.strategy.fedfa.mu = s.at("mu");
            if (s.contains("lambda")) cfg.strategy.fedfa.lambda = s.at("lambda");
            if (s.contains("calibrate"))
                cfg.strategy.fedfa.calibrate = parse_calibration(s.at("calibrate"));
            if (s.contains("update_anchors"))
                cfg.strategy.fedfa.update_anchors = s.at("update_anchors");
            if (s.contains("after_training_steps"))
                cfg.strategy.fedfa.after_training_steps = s.at("after_training_steps");
        }
        if (doc.contains("hyper")) {
            const auto& h = doc.at("hyper");
            reject_unknown(h, {"lr", "weight_decay", "momentum", "batch_size", "local_epochs"},
                           "hyper", problems);
            if (h.contains("lr")) cfg.hyper.lr = h.at("lr");
            if (h.contains("weight_decay")) cfg.hyper.weight_decay = h.at("weight_decay");
            if (h.contains("momentum")) cfg.hyper.momentum = h.at("momentum");
            if (h.contains("batch_size")) cfg.hyper.batch_size = h.at("batch_size");
            if (h.contains("local_epochs")) cfg.hyper.local_epochs = h.at("local_epochs");
        }
        if (doc.contains("model")) {
            const auto& m = doc.at("model");
            reject_unknown(m, {"hidden", "feature_dim"}, "model", problems);
            if (m.contains("hidden")) cfg.model.hidden = m.at("hidden").get<std::vector<std::size_t>>();
            if (m.contains("feature_dim")) cfg.model.feature_dim = m.at("feature_dim");
        }
        if (doc.contains("clients")) cfg.clients = doc.at("clients");
        if (doc.contains("sample_rate")) cfg.sample_rate = doc.at("sample_rate");
        if (doc.contains("rounds")) cfg.rounds = doc.at("rounds");
        if (doc.contains("seed")) cfg.seed = doc.at("seed");
        if (doc.contains("out_dir")) cfg.out_dir = doc.at("out_dir");
        if (doc.contains("eval_every")) cfg.eval_every = doc.at("eval_every");
        if (doc.contains("workers")) cfg.workers = doc.at("workers");
        if (doc.contains("aggregation")) {
            const auto& a = doc.at("aggregation");
            reject_unknown(a, {"uniform_model_weights", "anchor_weighting"}, "aggregation",
                           problems);
            if (a.contains("uniform_model_weights"))
                cfg.aggregation.uniform_model_weights = a.at("uniform_model_weights");
            if (a.contains("anchor_weighting")) {
                const std::string w = a.at("anchor_weighting");
                if (w == "client_size")
                    cfg.aggregation.anchor_weighting = AnchorWeighting::ClientSize;
                else if (w == "class_count")
                    cfg.aggregation.anchor_weighting = AnchorWeighting::ClassCount;
                else
                    problems.push_back("aggregation.anchor_weighting: expected "
                                       "client_size|class_count");
            }
        }
        if (doc.contains("metrics")) {
            const auto& m = doc.at("metrics");
            reject_unknown(m, {"probe_per_class", "similarity", "feature_distance_scope"},
                           "metrics", problems);
            if (m.contains("probe_per_class")) cfg.metrics.probe_per_class = m.at("probe_per_class");
            if (m.contains("similarity")) {
                const std::string s = m.at("similarity");
                if (s == "cosine")
                    cfg.metrics.similarity = SimilarityKind::Cosine;
                else if (s == "dot")
                    cfg.metrics.similarity = SimilarityKind::Dot;
                else
                    problems.push_back("metrics.similarity: expected cosine|dot");
            }
            if (m.contains("feature_distance_scope")) {
                const std::string s = m.at("feature_distance_scope");
                if (s == "holders")
                    cfg.metrics.feature_distance_scope = FeatureDistanceScope::Holders;
                else if (s == "all")
                    cfg.metrics.feature_distance_scope = FeatureDistanceScope::All;
                else
                    problems.push_back(
                        "metrics.feature_distance_scope: expected holders|all");
            }
        }
    } catch (const json::exception& e) {
        problems.push_back(std::string("malformed value: ") + e.what());
    }
    if (!problems.empty()) fail(problems);
    return cfg;
}

ExperimentConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config file not found: " + path);
    json doc;
    try {
        doc = json::parse(in, nullptr, /*allow_exceptions=*/true, /*ignore_comments=*/true);
    } catch (const json::parse_error& e) {
        throw ConfigError(path + ": " + e.what());
    }
    return parse_config(doc);
}

nlohmann::json resolved_config(const ExperimentConfig& cfg) {
    json d;
    d["dataset"]["kind"] = to_string(cfg.dataset.kind);
    if (cfg.dataset.kind == DatasetKind::Synthetic) {
        d["dataset"]["classes"] = cfg.dataset.synthetic.classes;
        d["dataset"]["per_class"] = cfg.dataset.synthetic.per_class;
        d["dataset"]["input_dim"] = cfg.dataset.synthetic.input_dim;
        d["dataset"]["separation"] = cfg.dataset.synthetic.separation;
        d["dataset"]["within_std"] = cfg.dataset.synthetic.within_std;
        d["dataset"]["test_per_class"] = cfg.dataset.synthetic.test_per_class;
    } else if (cfg.dataset.kind == DatasetKind::Idx) {
        d["dataset"]["train_images"] = cfg.dataset.train_images;
        d["dataset"]["train_labels"] = cfg.dataset.train_labels;
        d["dataset"]["test_images"] = cfg.dataset.test_images;
        d["dataset"]["test_labels"] = cfg.dataset.test_labels;
    } else {
        d["dataset"]["train_csv"] = cfg.dataset.train_csv;
        d["dataset"]["test_csv"] = cfg.dataset.test_csv;
        d["dataset"]["csv_classes"] = cfg.dataset.csv_classes;
    }
    d["partition"]["scheme"] = to_string(cfg.partition.scheme);
    if (cfg.partition.scheme == PartitionScheme::Shards ||
        (cfg.partition.scheme == PartitionScheme::Combined &&
         cfg.partition.combined_label_scheme == PartitionScheme::Shards))
        d["partition"]["classes_per_client"] = cfg.partition.classes_per_client;
    if (cfg.partition.scheme == PartitionScheme::Dirichlet ||
        (cfg.partition.scheme == PartitionScheme::Combined &&
         cfg.partition.combined_label_scheme == PartitionScheme::Dirichlet))
        d["partition"]["alpha"] = cfg.partition.alpha;
    if (cfg.partition.scheme == PartitionScheme::Combined)
        d["partition"]["combined_label_scheme"] = to_string(cfg.partition.combined_label_scheme);
    if (cfg.partition.feature_skew) {
        d["partition"]["feature_skew"]["groups"] = cfg.partition.feature_skew->groups;
        d["partition"]["feature_skew"]["strength"] = cfg.partition.feature_skew->strength;
    }
    d["strategy"]["kind"] = to_string(cfg.strategy.kind);
    if (cfg.strategy.kind == StrategyKind::FedProx)
        d["strategy"]["prox_mu"] = cfg.strategy.prox_mu;
    if (cfg.strategy.kind == StrategyKind::FedFA) {
        d["strategy"]["mu"] = cfg.strategy.fedfa.mu;
        d["strategy"]["lambda"] = cfg.strategy.fedfa.lambda;
        d["strategy"]["calibrate"] = to_string(cfg.strategy.fedfa.calibrate);
        d["strategy"]["update_anchors"] = cfg.strategy.fedfa.update_anchors;
        d["strategy"]["after_training_steps"] = cfg.strategy.fedfa.after_training_steps;
    }
    d["hyper"]["lr"] = cfg.hyper.lr;
    d["hyper"]["weight_decay"] = cfg.hyper.weight_decay;
    d["hyper"]["momentum"] = cfg.hyper.momentum;
    d["hyper"]["batch_size"] = cfg.hyper.batch_size;
    d["hyper"]["local_epochs"] = cfg.hyper.local_epochs;
    d["model"]["hidden"] = cfg.model.hidden;
    d["model"]["feature_dim"] = cfg.model.feature_dim;
    d["clients"] = cfg.clients;
    d["sample_rate"] = cfg.sample_rate;
    d["rounds"] = cfg.rounds;
    d["seed"] = cfg.seed;
    d["out_dir"] = cfg.out_dir;
    d["eval_every"] = cfg.eval_every;
    d["workers"] = cfg.workers;
    d["aggregation"]["uniform_model_weights"] = cfg.aggregation.uniform_model_weights;
    d["aggregation"]["anchor_weighting"] =
        cfg.aggregation.anchor_weighting == AnchorWeighting::ClientSize ? "client_size"
                                                                        : "class_count";
    d["metrics"]["probe_per_class"] = cfg.metrics.probe_per_class;
    d["metrics"]["similarity"] =
        cfg.metrics.similarity == SimilarityKind::Cosine ? "cosine" : "dot";
    d["metrics"]["feature_distance_scope"] =
        cfg.metrics.feature_distance_scope == FeatureDistanceScope::Holders ? "holders" : "all";
    return d;
}

std::vector<std::string> validate_config(const ExperimentConfig& cfg) {
    std::vector<std::string> problems;
    auto check_file = [&](const std::string& path, const std::string& field) {
        if (path.empty()) {
            problems.push_back("dataset." + field + " is required for this dataset kind");
        } else if (!std::filesystem::exists(path)) {
            problems.push_back("dataset." + field + ": file not found: " + path);
        }
    };
    switch (cfg.dataset.kind) {
        case DatasetKind::Synthetic: {
            const auto& s = cfg.dataset.synthetic;
            if (s.classes < 2) problems.push_back("dataset.classes must be >= 2");
            if (s.per_class == 0) problems.push_back("dataset.per_class must be positive");
            if (s.test_per_class == 0) problems.push_back("dataset.test_per_class must be positive");
            if (s.input_dim < static_cast<std::size_t>(std::max(s.classes, 1)))
                problems.push_back("dataset.input_dim must be >= dataset.classes");
            if (s.within_std < 0) problems.push_back("dataset.within_std must be >= 0");
            break;
        }
        case DatasetKind::Idx:
            check_file(cfg.dataset.train_images, "train_images");
            check_file(cfg.dataset.train_labels, "train_labels");
            check_file(cfg.dataset.test_images, "test_images");
            check_file(cfg.dataset.test_labels, "test_labels");
            break;
        case DatasetKind::Csv:
            check_file(cfg.dataset.train_csv, "train_csv");
            check_file(cfg.dataset.test_csv, "test_csv");
            break;
    }
    if (cfg.partition.scheme == PartitionScheme::Combined) {
        if (!cfg.partition.feature_skew)
            problems.push_back("partition.feature_skew is required for the combined scheme");
        if (cfg.partition.combined_label_scheme != PartitionScheme::Shards &&
            cfg.partition.combined_label_scheme != PartitionScheme::Dirichlet)
            problems.push_back("partition.combined_label_scheme must be shards or dirichlet");
    }
    if (cfg.partition.scheme == PartitionScheme::Shards ||
        (cfg.partition.scheme == PartitionScheme::Combined &&
         cfg.partition.combined_label_scheme == PartitionScheme::Shards)) {
        if (cfg.partition.classes_per_client < 1)
            problems.push_back("partition.classes_per_client must be >= 1");
    }
    if (cfg.partition.scheme == PartitionScheme::Dirichlet ||
        (cfg.partition.scheme == PartitionScheme::Combined &&
         cfg.partition.combined_label_scheme == PartitionScheme::Dirichlet)) {
        if (cfg.partition.alpha <= 0.0) problems.push_back("partition.alpha must be positive");
    }
    if (cfg.partition.feature_skew) {
        if (cfg.partition.feature_skew->groups < 1)
            problems.push_back("partition.feature_skew.groups must be >= 1");
        if (cfg.partition.feature_skew->groups > cfg.clients)
            problems.push_back("partition.feature_skew.groups must be <= clients");
        if (cfg.partition.feature_skew->strength < 0.0 ||
            cfg.partition.feature_skew->strength >= 1.0)
            problems.push_back("partition.feature_skew.strength must lie in [0, 1)");
    }
    try {
        cfg.strategy.validate();
    } catch (const std::exception& e) {
        problems.push_back(e.what());
    }
    try {
        cfg.hyper.validate();
    } catch (const std::exception& e) {
        problems.push_back(e.what());
    }
    if (cfg.model.feature_dim == 0) problems.push_back("model.feature_dim must be positive");
    for (std::size_t h : cfg.model.hidden)
        if (h == 0) problems.push_back("model.hidden widths must be positive");
    if (cfg.clients < 1) problems.push_back("clients must be >= 1");
    if (cfg.sample_rate <= 0.0 || cfg.sample_rate > 1.0)
        problems.push_back("sample_rate must lie in (0, 1]");
    if (cfg.rounds < 0) problems.push_back("rounds must be >= 0");
    if (cfg.eval_every < 1) problems.push_back("eval_every must be >= 1");
    if (cfg.workers < 0) problems.push_back("workers must be >= 0");
    return problems;
}

namespace {

ExperimentConfig desk_synthetic_base() {
    ExperimentConfig cfg;
    cfg.dataset.kind = DatasetKind::Synthetic;
    cfg.dataset.synthetic = {4, 200, 8, 2.5, 1.0, 100};
    cfg.partition.scheme = PartitionScheme::Shards;
    cfg.partition.classes_per_client = 2;
    cfg.model.hidden = {16};
    cfg.model.feature_dim = 4;
    cfg.clients = 10;
    cfg.sample_rate = 1.0;
    cfg.rounds = 30;
    cfg.hyper.lr = 0.01;
    cfg.hyper.weight_decay = 0.001;
    cfg.hyper.momentum = 0.0;
    cfg.hyper.batch_size = 32;
    cfg.hyper.local_epochs = 5;
    cfg.seed = 42;
    return cfg;
}

}  // namespace

std::vector<std::string> preset_names() {
    return {"desk-synthetic-shards", "desk-synthetic-fedavg", "desk-synthetic-dirichlet",
            "desk-synthetic-combined", "paper-fmnist-shards"};
}

bool is_preset_name(const std::string& name) {
    const auto names = preset_names();
    return std::find(names.begin(), names.end(), name) != names.end();
}

ExperimentConfig preset_config(const std::string& name) {
    if (name == "desk-synthetic-shards") {
        ExperimentConfig cfg = desk_synthetic_base();
        cfg.strategy.kind = StrategyKind::FedFA;
        cfg.out_dir = "out/desk-synthetic-shards";
        return cfg;
    }
    if (name == "desk-synthetic-fedavg") {
        ExperimentConfig cfg = desk_synthetic_base();
        cfg.strategy.kind = StrategyKind::FedAvg;
        cfg.out_dir = "out/desk-synthetic-fedavg";
        return cfg;
    }
    if (name == "desk-synthetic-dirichlet") {
        ExperimentConfig cfg = desk_synthetic_base();
        cfg.strategy.kind = StrategyKind::FedFA;
        cfg.partition.scheme = PartitionScheme::Dirichlet;
        cfg.partition.alpha = 0.1;
        cfg.out_dir = "out/desk-synthetic-dirichlet";
        return cfg;
    }
    if (name == "desk-synthetic-combined") {
        ExperimentConfig cfg = desk_synthetic_base();
        cfg.strategy.kind = StrategyKind::FedFA;
        cfg.partition.scheme = PartitionScheme::Combined;
        cfg.partition.combined_label_scheme = PartitionScheme::Shards;
        cfg.partition.feature_skew = FeatureSkewSpec{2, 0.5};
        cfg.out_dir = "out/desk-synthetic-combined";
        return cfg;
    }
    if (name == "paper-fmnist-shards") {
        ExperimentConfig cfg;
        cfg.dataset.kind = DatasetKind::Idx;
        cfg.dataset.train_images = "data/fmnist/train-images-idx3-ubyte";
        cfg.dataset.train_labels = "data/fmnist/train-labels-idx1-ubyte";
        cfg.dataset.test_images = "data/fmnist/t10k-images-idx3-ubyte";
        cfg.dataset.test_labels = "data/fmnist/t10k-labels-idx1-ubyte";
        cfg.partition.scheme = PartitionScheme::Shards;
        cfg.partition.classes_per_client = 2;
        cfg.strategy.kind = StrategyKind::FedFA;
        cfg.strategy.fedfa.mu = 0.1;
        cfg.strategy.fedfa.lambda = 0.5;
        cfg.model.hidden = {384};
        cfg.model.feature_dim = 100;
        cfg.clients = 100;
        cfg.sample_rate = 0.1;
        cfg.rounds = 200;
        cfg.hyper.lr = 0.01;
        cfg.hyper.weight_decay = 0.001;
        cfg.hyper.batch_size = 64;
        cfg.hyper.local_epochs = 5;
        cfg.eval_every = 10;
        cfg.out_dir = "out/paper-fmnist-shards";
        return cfg;
    }
    throw ConfigError("unknown preset: " + name);
}

}  // namespace fedfa
