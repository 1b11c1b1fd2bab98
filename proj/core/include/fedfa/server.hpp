#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "fedfa/anchors.hpp"
#include "fedfa/data.hpp"
#include "fedfa/metrics.hpp"
#include "fedfa/model.hpp"
#include "fedfa/strategies.hpp"

namespace fedfa {

/// ceil(rate * N) distinct ids, uniform without replacement, deterministic in
/// (seed, round). Returned ascending.
std::vector<int> sample_clients(int client_count, double sample_rate, int round,
                                std::uint64_t seed);

/// Parameter-wise weighted mean with weights n_i / sum(n_i) (or uniform),
/// summed in ascending client-id order.
ModelParams aggregate_models(const std::vector<LocalReport>& reports, bool uniform_weights = false);

struct ExperimentState {
    ModelParams global_model;
    AnchorSet anchor_set;
    int round = 0;
    std::uint64_t seed = 0;
};

/// Everything run_round needs to fill a RoundRecord.
struct EvalContext {
    const Dataset* test = nullptr;
    const Dataset* train_union = nullptr;
    Matrix probe_X;
    std::vector<int> probe_y;
    bool evaluate_accuracy = true;
    SimilarityKind similarity = SimilarityKind::Cosine;
    bool feature_distance_holders_only = true;
};

struct ServerOptions {
    double sample_rate = 1.0;
    bool uniform_model_weights = false;
    AnchorWeighting anchor_weighting = AnchorWeighting::ClientSize;
    int workers = 1;
};

/// One synchronous round: sample clients, local training in parallel,
/// aggregate models (and anchors for FedFA), advance the round counter.
RoundRecord run_round(ExperimentState& state, const StrategySpec& strategy,
                      const std::vector<ClientPartition>& partitions, const Dataset& dataset,
                      const Hyper& hyper, const ServerOptions& options, const EvalContext& eval);

/// Seeded class-balanced probe subset of `source` (per_class samples each).
void build_probe(const Dataset& source, std::size_t per_class, std::uint64_t seed, Matrix& probe_X,
                 std::vector<int>& probe_y);

}  // namespace fedfa
