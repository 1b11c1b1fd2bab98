#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedfa/anchors.hpp"
#include "fedfa/data.hpp"
#include "fedfa/model.hpp"

namespace fedfa {

enum class StrategyKind { FedAvg, FedProx, FedFA };

enum class CalibrationTiming { PerBatch, PerEpoch, AfterTraining, Off };

std::string to_string(StrategyKind kind);
std::string to_string(CalibrationTiming timing);

struct FedFAOptions {
    double mu = 0.1;
    double lambda = 0.5;
    CalibrationTiming calibrate = CalibrationTiming::PerBatch;
    bool update_anchors = true;
    int after_training_steps = 1;
};

struct StrategySpec {
    StrategyKind kind = StrategyKind::FedAvg;
    double prox_mu = 0.0;  // FedProx only
    FedFAOptions fedfa;    // FedFA only

    void validate() const;
};

/// Everything a client sends back after local training.
struct LocalReport {
    int client_id = 0;
    ModelParams updated_params;
    Matrix anchor_estimate;  // C x d; empty unless FedFA with anchor updating
    std::vector<std::size_t> class_presence;  // n_{i,c}
    std::size_t sample_count = 0;             // n_i
    Matrix classifier_update;                 // phi_after - phi_before
    std::vector<double> local_loss_trace;     // one entry per mini-batch
};

/// K epochs of mini-batch SGD on the supervised loss.
LocalReport local_train_fedavg(const ModelParams& global_model, const ClientPartition& partition,
                               const Dataset& dataset, const Hyper& hyper,
                               std::uint64_t rng_seed);

/// FedAvg plus the proximal gradient prox_mu * (w - w_global) each step.
LocalReport local_train_fedprox(const ModelParams& global_model, const ClientPartition& partition,
                                const Dataset& dataset, const Hyper& hyper, double prox_mu,
                                std::uint64_t rng_seed);

/// Per mini-batch: (1) step on supervised + mu * anchor loss, (2) calibration
/// step on the classifier when timing is PerBatch, (3) feature accumulation
/// from the post-step extractor. Epoch boundaries roll the anchor estimate.
LocalReport local_train_fedfa(const ModelParams& global_model, const AnchorSet& anchors,
                              const ClientPartition& partition, const Dataset& dataset,
                              const Hyper& hyper, const FedFAOptions& options,
                              std::uint64_t rng_seed);

/// Applies `steps` calibration gradient steps to the classifier proxies.
void calibrate_after_training(ModelParams& model, const Matrix& anchors, int steps, double lr);

/// Dispatch on spec.kind.
LocalReport local_train(const StrategySpec& spec, const ModelParams& global_model,
                        const AnchorSet& anchors, const ClientPartition& partition,
                        const Dataset& dataset, const Hyper& hyper, std::uint64_t rng_seed);

}  // namespace fedfa
