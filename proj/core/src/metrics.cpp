#include "fedfa/metrics.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace fedfa {

namespace {

/// Classifier gradient of the mean cross-entropy at fixed features, as a
/// C x d matrix: row c = (1/n) sum_j (p_c_j - 1[y_j=c]) h_j.
Matrix classifier_gradient_at_features(const ClassifierParams& classifier, const Matrix& H,
                                       const std::vector<int>& y) {
    const std::size_t n = H.rows();
    const std::size_t C = classifier.class_count();
    Matrix logits = matmul(H, transpose(classifier.proxies));
    Matrix P = softmax_rows(logits);
    Matrix grad(C, classifier.feature_dim(), 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t c = 0; c < C; ++c) {
            const double coeff =
                (P(j, c) - (static_cast<std::size_t>(y[j]) == c ? 1.0 : 0.0)) /
                static_cast<double>(n);
            auto dst = grad.row(c);
            const auto h = H.row(j);
            for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += coeff * h[k];
        }
    }
    return grad;
}

}  // namespace

double top1_accuracy(const ModelParams& model, const Dataset& dataset) {
    const Matrix H = forward_features(model.extractor, dataset.X);
    const Matrix logits = forward_logits(model.classifier, H);
    std::size_t correct = 0;
    for (std::size_t j = 0; j < logits.rows(); ++j) {
        std::size_t arg = 0;
        double best = logits(j, 0);
        for (std::size_t c = 1; c < logits.cols(); ++c) {
            if (logits(j, c) > best) {  // strict: ties keep the lowest index
                best = logits(j, c);
                arg = c;
            }
        }
        if (arg == static_cast<std::size_t>(dataset.y[j])) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(logits.rows());
}

double classifier_update_similarity(const std::vector<Matrix>& updates, SimilarityKind kind) {
    if (updates.size() < 2)
        throw std::invalid_argument("classifier_update_similarity: need at least 2 updates");
    double total = 0.0;
    std::size_t pairs = 0;
    for (std::size_t a = 0; a < updates.size(); ++a) {
        for (std::size_t b = a + 1; b < updates.size(); ++b) {
            const auto u = updates[a].data();
            const auto v = updates[b].data();
            if (u.size() != v.size())
                throw ShapeError("classifier_update_similarity: update shape mismatch");
            const double uv = dot(u, v);
            if (kind == SimilarityKind::Dot) {
                total += uv;
            } else {
                const double nu = std::sqrt(dot(u, u));
                const double nv = std::sqrt(dot(v, v));
                total += (nu == 0.0 || nv == 0.0) ? 0.0 : uv / (nu * nv);
            }
            ++pairs;
        }
    }
    return total / static_cast<double>(pairs);
}

std::vector<double> cross_client_feature_distance(
    const std::vector<const ExtractorParams*>& client_extractors, const Matrix& probe_X,
    const std::vector<int>& probe_y, std::size_t class_count,
    const std::vector<std::vector<std::size_t>>& holder_counts) {
    if (client_extractors.empty())
        throw std::invalid_argument("cross_client_feature_distance: no client models");
    if (!holder_counts.empty() && holder_counts.size() != client_extractors.size())
        throw std::invalid_argument(
            "cross_client_feature_distance: holder counts do not match client models");
    std::vector<std::size_t> counts(class_count, 0);
    for (int label : probe_y) {
        if (label < 0 || static_cast<std::size_t>(label) >= class_count)
            throw std::out_of_range("cross_client_feature_distance: probe label out of range");
        counts[static_cast<std::size_t>(label)] += 1;
    }
    for (std::size_t c = 0; c < class_count; ++c) {
        if (counts[c] == 0)
            throw std::invalid_argument("cross_client_feature_distance: class " +
                                        std::to_string(c) + " absent from probe");
    }

    // Per client: mean feature per class.
    std::vector<Matrix> means;
    means.reserve(client_extractors.size());
    for (const auto* extractor : client_extractors) {
        const Matrix H = forward_features(*extractor, probe_X);
        Matrix m(class_count, H.cols(), 0.0);
        for (std::size_t j = 0; j < H.rows(); ++j) {
            const auto c = static_cast<std::size_t>(probe_y[j]);
            auto dst = m.row(c);
            const auto src = H.row(j);
            for (std::size_t k = 0; k < dst.size(); ++k)
                dst[k] += src[k] / static_cast<double>(counts[c]);
        }
        means.push_back(std::move(m));
    }

    // Classes with fewer than two holders have no comparable pair that round
    // and report NaN (the diagnostic only compares clients that trained the
    // class). Without holder information every client counts as a holder.
    std::vector<double> out(class_count, std::numeric_limits<double>::quiet_NaN());
    const std::size_t m = means.size();
    if (m < 2) return out;
    for (std::size_t c = 0; c < class_count; ++c) {
        std::vector<std::size_t> members;
        if (!holder_counts.empty()) {
            for (std::size_t i = 0; i < m; ++i)
                if (holder_counts[i][c] > 0) members.push_back(i);
        } else {
            members.resize(m);
            for (std::size_t i = 0; i < m; ++i) members[i] = i;
        }
        if (members.size() < 2) continue;
        double total = 0.0;
        std::size_t pairs = 0;
        for (std::size_t a = 0; a < members.size(); ++a) {
            for (std::size_t b = a + 1; b < members.size(); ++b) {
                double sq = 0.0;
                const auto u = means[members[a]].row(c);
                const auto v = means[members[b]].row(c);
                for (std::size_t k = 0; k < u.size(); ++k) {
                    const double diff = u[k] - v[k];
                    sq += diff * diff;
                }
                total += std::sqrt(sq);
                ++pairs;
            }
        }
        out[c] = total / static_cast<double>(pairs);
    }
    return out;
}

Lemma1Result lemma1_deviation_oracle(const ModelParams& model, const Batch& batch_a,
                                     const Batch& batch_b, double lr) {
    if (batch_a.y.size() != batch_b.y.size())
        throw std::invalid_argument("lemma1_deviation_oracle: batches must have equal counts");
    const std::size_t n = batch_a.y.size();
    const std::size_t C = model.class_count();
    const std::size_t d = model.feature_dim();

    const Matrix Ha = forward_features(model.extractor, batch_a.X);
    const Matrix Hb = forward_features(model.extractor, batch_b.X);
    const Matrix Pa = softmax_rows(forward_logits(model.classifier, Ha));
    const Matrix Pb = softmax_rows(forward_logits(model.classifier, Hb));

    Lemma1Result result;

    // Exact per-sample closed form: (eta/n) [sum_j (1[y_j=c] - p_c_j) h_j] per
    // side; identical batches produce bitwise-identical sides, so their
    // difference is exactly zero.
    auto side_update = [&](const Matrix& H, const Matrix& P, const std::vector<int>& y) {
        Matrix update(C, d, 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            for (std::size_t c = 0; c < C; ++c) {
                const double coeff = lr / static_cast<double>(n) *
                                     ((static_cast<std::size_t>(y[j]) == c ? 1.0 : 0.0) - P(j, c));
                auto dst = update.row(c);
                const auto h = H.row(j);
                for (std::size_t k = 0; k < d; ++k) dst[k] += coeff * h[k];
            }
        }
        return update;
    };
    result.formula_delta = side_update(Ha, Pa, batch_a.y);
    result.formula_delta -= side_update(Hb, Pb, batch_b.y);

    // Measured: two independent single-step supervised classifier updates.
    const LossGrads ga = supervised_loss_grads(model, batch_a.X, batch_a.y);
    const LossGrads gb = supervised_loss_grads(model, batch_b.X, batch_b.y);
    result.measured_delta = Matrix(C, d, 0.0);
    for (std::size_t i = 0; i < result.measured_delta.data().size(); ++i) {
        const double delta_a = -lr * ga.grads.classifier.proxies.data()[i];
        const double delta_b = -lr * gb.grads.classifier.proxies.data()[i];
        result.measured_delta.data()[i] = delta_a - delta_b;
    }
    result.max_abs_err = max_abs_diff(result.formula_delta, result.measured_delta);

    // Mean-feature approximation of the published statement, for reference:
    // per class c, n_c (1 - pbar_c) hbar_c for positives and
    // n_cbar pbar_c^(cbar) hbar_cbar for negatives.
    Matrix approx(C, d, 0.0);
    auto add_mean_side = [&](const Matrix& H, const Matrix& P, const std::vector<int>& y,
                             double sign) {
        for (std::size_t c = 0; c < C; ++c) {
            // Group samples by their own class cbar; mean feature and mean
            // p_c within each group.
            for (std::size_t cbar = 0; cbar < C; ++cbar) {
                std::size_t count = 0;
                std::vector<double> hbar(d, 0.0);
                double pbar = 0.0;
                for (std::size_t j = 0; j < n; ++j) {
                    if (static_cast<std::size_t>(y[j]) != cbar) continue;
                    ++count;
                    pbar += P(j, c);
                    const auto h = H.row(j);
                    for (std::size_t k = 0; k < d; ++k) hbar[k] += h[k];
                }
                if (count == 0) continue;
                pbar /= static_cast<double>(count);
                for (auto& v : hbar) v /= static_cast<double>(count);
                const double coeff =
                    sign * lr / static_cast<double>(n) * static_cast<double>(count) *
                    (cbar == c ? (1.0 - pbar) : -pbar);
                auto dst = approx.row(c);
                for (std::size_t k = 0; k < d; ++k) dst[k] += coeff * hbar[k];
            }
        }
    };
    add_mean_side(Ha, Pa, batch_a.y, +1.0);
    add_mean_side(Hb, Pb, batch_b.y, -1.0);
    result.mean_feature_form_gap = max_abs_diff(approx, result.formula_delta);

    return result;
}

std::vector<double> classifier_grad_sq_norm(const ModelParams& model, const Dataset& dataset) {
    const Matrix H = forward_features(model.extractor, dataset.X);
    const Matrix grad = classifier_gradient_at_features(model.classifier, H, dataset.y);
    std::vector<double> out(grad.rows(), 0.0);
    for (std::size_t c = 0; c < grad.rows(); ++c) {
        const auto row = grad.row(c);
        out[c] = dot(row, row);
    }
    return out;
}

double total_grad_sq_norm(const std::vector<double>& per_class) {
    return sum(per_class);
}

}  // namespace fedfa
