#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "fedfa/matrix.hpp"
#include "fedfa/rng.hpp"

namespace fedfa {

struct DenseLayer {
    Matrix weight;             // d_out x d_in
    std::vector<double> bias;  // d_out
};

/// Feature extractor: rectifier on hidden layers, identity on the final
/// (feature) layer so features can reach arbitrary anchor coordinates.
struct ExtractorParams {
    std::vector<DenseLayer> layers;

    std::size_t input_dim() const { return layers.empty() ? 0 : layers.front().weight.cols(); }
    std::size_t feature_dim() const { return layers.empty() ? 0 : layers.back().weight.rows(); }
};

/// Bias-free linear classifier; row c is the proxy for class c.
struct ClassifierParams {
    Matrix proxies;  // C x d

    std::size_t class_count() const { return proxies.rows(); }
    std::size_t feature_dim() const { return proxies.cols(); }
};

struct ModelParams {
    ExtractorParams extractor;
    ClassifierParams classifier;

    std::size_t class_count() const { return classifier.class_count(); }
    std::size_t feature_dim() const { return classifier.feature_dim(); }
};

/// Shape-congruent with ModelParams; holds partial derivatives.
struct GradientSet {
    ExtractorParams extractor;
    ClassifierParams classifier;
};

GradientSet zeros_like(const ModelParams& model);

/// Applies fn to every parameter tensor of the model, in a fixed order
/// (extractor weights/biases front to back, then classifier proxies).
void visit_params(ModelParams& model, const std::function<void(std::span<double>)>& fn);
void visit_params(const ModelParams& model,
                  const std::function<void(std::span<const double>)>& fn);
void visit_params(ModelParams& model, GradientSet& grads,
                  const std::function<void(std::span<double>, std::span<double>)>& fn);

bool bit_identical(const ModelParams& a, const ModelParams& b);

struct Hyper {
    double lr = 0.01;
    double weight_decay = 0.0;
    double momentum = 0.0;
    std::size_t batch_size = 64;
    std::size_t local_epochs = 1;
    double mu = 0.1;      // feature-anchor loss coefficient
    double lambda = 0.5;  // anchor momentum EMA coefficient

    void validate() const;
};

/// dims is the extractor chain [d_in, hidden..., feature_dim]. Weights are
/// Normal(0, 1/fan_in), biases zero; classifier proxies drawn likewise.
ModelParams init_model(const std::vector<std::size_t>& dims, std::size_t class_count, Rng& rng);

Matrix forward_features(const ExtractorParams& extractor, const Matrix& X);

/// logits[j][c] = proxy_c . h_j (no bias).
Matrix forward_logits(const ClassifierParams& classifier, const Matrix& H);

struct LossGrads {
    double loss = 0.0;
    GradientSet grads;
};

/// Mean cross-entropy over the batch plus exact analytic partials for every
/// parameter. Labels must lie in [0, C).
LossGrads supervised_loss_grads(const ModelParams& model, const Matrix& X,
                                const std::vector<int>& y);

struct ExtractorLossGrads {
    double loss = 0.0;
    ExtractorParams grads;
};

/// Mean squared feature-anchor distance over the batch; gradients flow
/// through the extractor only (anchors are constants during local training).
ExtractorLossGrads anchor_loss_grads(const ExtractorParams& extractor, const Matrix& X,
                                     const std::vector<int>& y, const Matrix& anchors);

/// supervised + mu * anchor. The classifier receives only the supervised
/// part; mu == 0 delegates to supervised_loss_grads bit-identically.
LossGrads local_loss_grads(const ModelParams& model, const Matrix& X, const std::vector<int>& y,
                           const Matrix& anchors, double mu);

struct ClassifierLossGrad {
    double loss = 0.0;
    Matrix grad;  // C x d
};

/// Calibration objective: anchors fed through the classifier as one labeled
/// mini-batch; gradient w.r.t. proxies only.
ClassifierLossGrad calibration_loss_grad(const ClassifierParams& classifier,
                                         const Matrix& anchors);

/// w <- w - lr * (g + weight_decay * w), with optional heavy-ball momentum:
/// v <- momentum * v + (g + weight_decay * w); w <- w - lr * v.
/// velocity may be null when hyper.momentum == 0.
void sgd_step(ModelParams& params, const GradientSet& grads, const Hyper& hyper,
              GradientSet* velocity);

}  // namespace fedfa
