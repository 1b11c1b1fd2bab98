#include "fedfa/strategies.hpp"

#include <cmath>
#include <stdexcept>

namespace fedfa {

namespace {

LocalReport finish_report(int client_id, const ModelParams& global_model, ModelParams updated,
                          const ClientPartition& partition, std::vector<double> trace) {
    LocalReport report;
    report.client_id = client_id;
    report.classifier_update = updated.classifier.proxies;
    report.classifier_update -= global_model.classifier.proxies;
    report.updated_params = std::move(updated);
    report.class_presence = partition.per_class_counts;
    report.sample_count = partition.size();
    report.local_loss_trace = std::move(trace);
    return report;
}

double param_sq_distance(const ModelParams& a, const ModelParams& b) {
    double acc = 0.0;
    std::size_t cursor = 0;
    std::vector<double> flat_b;
    visit_params(b, [&](std::span<const double> s) {
        flat_b.insert(flat_b.end(), s.begin(), s.end());
    });
    visit_params(a, [&](std::span<const double> s) {
        for (double v : s) {
            const double diff = v - flat_b[cursor++];
            acc += diff * diff;
        }
    });
    return acc;
}

}  // namespace

std::string to_string(StrategyKind kind) {
    switch (kind) {
        case StrategyKind::FedAvg: return "fedavg";
        case StrategyKind::FedProx: return "fedprox";
        case StrategyKind::FedFA: return "fedfa";
    }
    return "unknown";
}

std::string to_string(CalibrationTiming timing) {
    switch (timing) {
        case CalibrationTiming::PerBatch: return "per_batch";
        case CalibrationTiming::PerEpoch: return "per_epoch";
        case CalibrationTiming::AfterTraining: return "after_training";
        case CalibrationTiming::Off: return "off";
    }
    return "unknown";
}

void StrategySpec::validate() const {
    if (prox_mu < 0.0) throw std::invalid_argument("strategy: prox_mu must be >= 0");
    if (fedfa.mu < 0.0) throw std::invalid_argument("strategy: mu must be >= 0");
    if (fedfa.lambda < 0.0 || fedfa.lambda > 1.0)
        throw std::invalid_argument("strategy: lambda must lie in [0, 1]");
    if (fedfa.after_training_steps < 0)
        throw std::invalid_argument("strategy: after_training_steps must be >= 0");
}

LocalReport local_train_fedavg(const ModelParams& global_model, const ClientPartition& partition,
                               const Dataset& dataset, const Hyper& hyper,
                               std::uint64_t rng_seed) {
    if (partition.size() == 0) throw ConfigError("local_train: empty partition");
    ModelParams model = global_model;
    GradientSet velocity = zeros_like(model);
    std::vector<double> trace;
    for (std::size_t k = 0; k < hyper.local_epochs; ++k) {
        for (const Batch& batch : batch_iter(partition, dataset, hyper.batch_size, k, rng_seed)) {
            LossGrads lg = supervised_loss_grads(model, batch.X, batch.y);
            sgd_step(model, lg.grads, hyper, &velocity);
            trace.push_back(lg.loss);
        }
    }
    return finish_report(partition.client_id, global_model, std::move(model), partition,
                         std::move(trace));
}

LocalReport local_train_fedprox(const ModelParams& global_model, const ClientPartition& partition,
                                const Dataset& dataset, const Hyper& hyper, double prox_mu,
                                std::uint64_t rng_seed) {
    if (partition.size() == 0) throw ConfigError("local_train: empty partition");
    if (prox_mu == 0.0) {
        // Degenerate coefficient: identical trajectory to FedAvg.
        return local_train_fedavg(global_model, partition, dataset, hyper, rng_seed);
    }
    ModelParams model = global_model;
    GradientSet velocity = zeros_like(model);
    std::vector<double> trace;
    std::vector<std::span<const double>> global_spans;
    visit_params(global_model,
                 [&](std::span<const double> s) { global_spans.push_back(s); });
    for (std::size_t k = 0; k < hyper.local_epochs; ++k) {
        for (const Batch& batch : batch_iter(partition, dataset, hyper.batch_size, k, rng_seed)) {
            LossGrads lg = supervised_loss_grads(model, batch.X, batch.y);
            // Proximal pull toward the round's global model; weight decay is
            // applied to w itself inside sgd_step, not double-counted here.
            std::size_t tensor = 0;
            visit_params(model, lg.grads,
                         [&](std::span<double> w, std::span<double> g) {
                             const auto gw = global_spans[tensor++];
                             for (std::size_t i = 0; i < w.size(); ++i)
                                 g[i] += prox_mu * (w[i] - gw[i]);
                         });
            sgd_step(model, lg.grads, hyper, &velocity);
            trace.push_back(lg.loss +
                            0.5 * prox_mu * param_sq_distance(model, global_model));
        }
    }
    return finish_report(partition.client_id, global_model, std::move(model), partition,
                         std::move(trace));
}

void calibrate_after_training(ModelParams& model, const Matrix& anchors, int steps, double lr) {
    if (steps < 0) throw std::invalid_argument("calibrate_after_training: steps must be >= 0");
    for (int s = 0; s < steps; ++s) {
        ClassifierLossGrad cal = calibration_loss_grad(model.classifier, anchors);
        auto w = model.classifier.proxies.data();
        const auto g = cal.grad.data();
        for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * g[i];
    }
}

LocalReport local_train_fedfa(const ModelParams& global_model, const AnchorSet& anchors,
                              const ClientPartition& partition, const Dataset& dataset,
                              const Hyper& hyper, const FedFAOptions& options,
                              std::uint64_t rng_seed) {
    if (partition.size() == 0) throw ConfigError("local_train: empty partition");
    if (anchors.dim() != global_model.feature_dim())
        throw ShapeError("local_train_fedfa: anchor dim != feature dim");

    ModelParams model = global_model;
    GradientSet velocity = zeros_like(model);
    MomentumState momentum = make_momentum_state(anchors.anchors);
    std::vector<double> trace;
    const std::size_t total_batches =
        (partition.size() + hyper.batch_size - 1) / hyper.batch_size;

    for (std::size_t k = 0; k < hyper.local_epochs; ++k) {
        for (const Batch& batch : batch_iter(partition, dataset, hyper.batch_size, k, rng_seed)) {
            LossGrads lg = local_loss_grads(model, batch.X, batch.y, anchors.anchors, options.mu);
            sgd_step(model, lg.grads, hyper, &velocity);
            if (options.calibrate == CalibrationTiming::PerBatch)
                calibrate_after_training(model, anchors.anchors, 1, hyper.lr);
            if (options.update_anchors) {
                // Post-step extractor features of the same batch.
                Matrix features = forward_features(model.extractor, batch.X);
                accumulate_batch(momentum, features, batch.y, total_batches);
            }
            trace.push_back(lg.loss);
        }
        if (options.calibrate == CalibrationTiming::PerEpoch)
            calibrate_after_training(model, anchors.anchors, 1, hyper.lr);
        if (options.update_anchors) epoch_estimate(momentum, options.lambda);
    }
    if (options.calibrate == CalibrationTiming::AfterTraining)
        calibrate_after_training(model, anchors.anchors, options.after_training_steps, hyper.lr);

    LocalReport report = finish_report(partition.client_id, global_model, std::move(model),
                                       partition, std::move(trace));
    if (options.update_anchors) report.anchor_estimate = momentum.estimate;
    return report;
}

LocalReport local_train(const StrategySpec& spec, const ModelParams& global_model,
                        const AnchorSet& anchors, const ClientPartition& partition,
                        const Dataset& dataset, const Hyper& hyper, std::uint64_t rng_seed) {
    switch (spec.kind) {
        case StrategyKind::FedAvg:
            return local_train_fedavg(global_model, partition, dataset, hyper, rng_seed);
        case StrategyKind::FedProx:
            return local_train_fedprox(global_model, partition, dataset, hyper, spec.prox_mu,
                                       rng_seed);
        case StrategyKind::FedFA:
            return local_train_fedfa(global_model, anchors, partition, dataset, hyper, spec.fedfa,
                                     rng_seed);
    }
    throw std::logic_error("local_train: unknown strategy kind");
}

}  // namespace fedfa
