#pragma once

#include <optional>
#include <vector>

#include "fedfa/data.hpp"
#include "fedfa/model.hpp"

namespace fedfa {

enum class SimilarityKind { Cosine, Dot };

/// Per-round metrics and diagnostics feeding the exported curves.
struct RoundRecord {
    int round = 0;
    std::optional<double> test_accuracy;
    std::optional<double> classifier_update_cosine;
    std::vector<double> per_class_feature_distance;
    double mean_feature_distance = 0.0;
    double classifier_grad_sq_norm = 0.0;
    std::vector<double> per_class_grad_sq_norm;
    std::vector<double> client_loss_means;
    double mean_local_loss = 0.0;
};

/// Fraction of samples whose argmax logit equals the label; ties go to the
/// lowest class index.
double top1_accuracy(const ModelParams& model, const Dataset& dataset);

/// Mean pairwise similarity of flattened per-client classifier updates.
/// Zero-norm updates contribute cosine 0.
double classifier_update_similarity(const std::vector<Matrix>& updates,
                                    SimilarityKind kind = SimilarityKind::Cosine);

/// For each class: each client's mean feature over the probe's class-c
/// samples, then the mean pairwise Euclidean distance across clients.
/// When holder_counts (per client n_{i,c}) is given, class-c pairs are
/// restricted to clients that hold class c, mirroring the diagnostic's
/// measurement protocol; classes with fewer than two holders fall back to
/// all pairs.
std::vector<double> cross_client_feature_distance(
    const std::vector<const ExtractorParams*>& client_extractors, const Matrix& probe_X,
    const std::vector<int>& probe_y, std::size_t class_count,
    const std::vector<std::vector<std::size_t>>& holder_counts = {});

/// Exact per-sample classifier-update-deviation check: the closed form
/// (eta/n) * [sum_j (1[y_j=c] - p_c_j) h_j]_a - [...]_b per class against the
/// measured difference of two independent single-step classifier updates.
struct Lemma1Result {
    Matrix formula_delta;   // C x d
    Matrix measured_delta;  // C x d
    double max_abs_err = 0.0;
    /// Gap between the exact per-sample form and the mean-feature
    /// approximation of the published statement (informational).
    double mean_feature_form_gap = 0.0;
};

Lemma1Result lemma1_deviation_oracle(const ModelParams& model, const Batch& batch_a,
                                     const Batch& batch_b, double lr);

/// Per-class squared norms of the supervised-loss gradient w.r.t. each proxy
/// row, evaluated over the full dataset; last helper sums them.
std::vector<double> classifier_grad_sq_norm(const ModelParams& model, const Dataset& dataset);
double total_grad_sq_norm(const std::vector<double>& per_class);

}  // namespace fedfa
