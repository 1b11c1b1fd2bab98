#pragma once

#include <cstddef>
#include <vector>

#include "fedfa/matrix.hpp"

namespace fedfa {

/// One feature anchor per class, shared by all clients within a round.
struct AnchorSet {
    Matrix anchors;  // C x d, row c is a_c
    int round_index = 0;

    std::size_t class_count() const { return anchors.rows(); }
    std::size_t dim() const { return anchors.cols(); }
};

/// a_c = e_c in R^d; Gram matrix exactly I_C. Requires d >= C.
AnchorSet init_orthogonal(std::size_t class_count, std::size_t dim);

/// Per-client, per-round momentum pipeline state. The running sum resets at
/// each local-epoch start; the snapshot carries the previous epoch's sum
/// (seeded with the incoming round anchors at epoch 1).
struct MomentumState {
    Matrix running;    // m^(t,k_tau)
    Matrix snapshot;   // m^(t,k-1)
    Matrix estimate;   // a-bar
    std::vector<std::size_t> batch_presence;  // batches containing each class

    void begin_epoch();
};

MomentumState make_momentum_state(const Matrix& incoming_anchors);

/// Eq-style accumulation: for each class present in the batch,
/// m_c += (1 / (total_batches * n_batch_c)) * sum of class-c features.
/// Absent classes are untouched.
void accumulate_batch(MomentumState& state, const Matrix& features, const std::vector<int>& y,
                      std::size_t total_batches);

/// a-bar <- lambda * snapshot + (1 - lambda) * running; rolls the snapshot
/// and resets the running sum.
void epoch_estimate(MomentumState& state, double lambda);

enum class AnchorWeighting {
    ClientSize,  // weight by n_i (as the aggregation formula is written)
    ClassCount,  // weight by n_{i,c} (sensitivity variant)
};

struct AnchorContribution {
    Matrix estimate;                          // C x d
    double client_weight = 0.0;               // n_i
    std::vector<std::size_t> class_presence;  // n_{i,c}
};

/// Per class: weighted average over contributions with n_{i,c} > 0, weights
/// renormalized over that subset; classes no active client holds carry over
/// from `previous`. Advances round_index by one.
AnchorSet aggregate_anchors(const std::vector<AnchorContribution>& contributions,
                            const AnchorSet& previous,
                            AnchorWeighting weighting = AnchorWeighting::ClientSize);

}  // namespace fedfa
