#include "fedfa/anchors.hpp"

#include <stdexcept>

#include "fedfa/data.hpp"

namespace fedfa {

AnchorSet init_orthogonal(std::size_t class_count, std::size_t dim) {
    if (dim < class_count)
        throw ConfigError("init_orthogonal: anchor dim " + std::to_string(dim) +
                          " < class count " + std::to_string(class_count));
    AnchorSet set;
    set.anchors = Matrix(class_count, dim, 0.0);
    for (std::size_t c = 0; c < class_count; ++c) set.anchors(c, c) = 1.0;
    return set;
}

void MomentumState::begin_epoch() {
    running = Matrix(running.rows(), running.cols(), 0.0);
}

MomentumState make_momentum_state(const Matrix& incoming_anchors) {
    MomentumState state;
    state.running = Matrix(incoming_anchors.rows(), incoming_anchors.cols(), 0.0);
    state.snapshot = incoming_anchors;
    state.estimate = incoming_anchors;
    state.batch_presence.assign(incoming_anchors.rows(), 0);
    return state;
}

void accumulate_batch(MomentumState& state, const Matrix& features, const std::vector<int>& y,
                      std::size_t total_batches) {
    if (total_batches == 0) throw std::invalid_argument("accumulate_batch: total_batches >= 1");
    if (features.rows() != y.size())
        throw ShapeError("accumulate_batch: feature/label count mismatch");
    if (features.cols() != state.running.cols())
        throw ShapeError("accumulate_batch: feature dim mismatch");
    const std::size_t C = state.running.rows();

    std::vector<std::size_t> batch_counts(C, 0);
    for (int label : y) {
        if (label < 0 || static_cast<std::size_t>(label) >= C)
            throw std::out_of_range("accumulate_batch: label out of range");
        batch_counts[static_cast<std::size_t>(label)] += 1;
    }
    for (std::size_t c = 0; c < C; ++c) {
        if (batch_counts[c] == 0) continue;
        state.batch_presence[c] += 1;
        const double factor =
            1.0 / (static_cast<double>(total_batches) * static_cast<double>(batch_counts[c]));
        for (std::size_t j = 0; j < y.size(); ++j) {
            if (static_cast<std::size_t>(y[j]) != c) continue;
            auto dst = state.running.row(c);
            const auto src = features.row(j);
            for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += factor * src[k];
        }
    }
}

void epoch_estimate(MomentumState& state, double lambda) {
    if (lambda < 0.0 || lambda > 1.0)
        throw std::invalid_argument("epoch_estimate: lambda must lie in [0, 1]");
    for (std::size_t i = 0; i < state.estimate.data().size(); ++i) {
        state.estimate.data()[i] =
            lambda * state.snapshot.data()[i] + (1.0 - lambda) * state.running.data()[i];
    }
    state.snapshot = state.running;
    state.begin_epoch();
}

AnchorSet aggregate_anchors(const std::vector<AnchorContribution>& contributions,
                            const AnchorSet& previous, AnchorWeighting weighting) {
    if (contributions.empty())
        throw std::invalid_argument("aggregate_anchors: need at least one contribution");
    const std::size_t C = previous.class_count();
    const std::size_t d = previous.dim();
    for (const auto& contrib : contributions) {
        if (contrib.estimate.rows() != C || contrib.estimate.cols() != d)
            throw ShapeError("aggregate_anchors: estimate shape mismatch");
        if (contrib.class_presence.size() != C)
            throw ShapeError("aggregate_anchors: class presence length mismatch");
    }

    AnchorSet next;
    next.anchors = Matrix(C, d, 0.0);
    next.round_index = previous.round_index + 1;
    for (std::size_t c = 0; c < C; ++c) {
        double total = 0.0;
        for (const auto& contrib : contributions) {
            if (contrib.class_presence[c] == 0) continue;
            total += weighting == AnchorWeighting::ClientSize
                         ? contrib.client_weight
                         : static_cast<double>(contrib.class_presence[c]);
        }
        if (total <= 0.0) {
            // No active client holds class c this round: carry over.
            const auto prev = previous.anchors.row(c);
            auto dst = next.anchors.row(c);
            std::copy(prev.begin(), prev.end(), dst.begin());
            continue;
        }
        auto dst = next.anchors.row(c);
        for (const auto& contrib : contributions) {
            if (contrib.class_presence[c] == 0) continue;
            const double w = (weighting == AnchorWeighting::ClientSize
                                  ? contrib.client_weight
                                  : static_cast<double>(contrib.class_presence[c])) /
                             total;
            const auto src = contrib.estimate.row(c);
            for (std::size_t k = 0; k < d; ++k) dst[k] += w * src[k];
        }
    }
    ensure_finite(next.anchors, "aggregated anchors");
    return next;
}

}  // namespace fedfa
