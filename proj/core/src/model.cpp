#include "fedfa/model.hpp"

#include <cmath>
#include <stdexcept>

namespace fedfa {

namespace {

struct ForwardCache {
    std::vector<Matrix> inputs;       // activation entering each layer
    std::vector<Matrix> pre_act;      // z of each layer
    Matrix features;                  // final-layer output (identity activation)
};

Matrix layer_forward(const DenseLayer& layer, const Matrix& X) {
    Matrix z = matmul(X, transpose(layer.weight));
    for (std::size_t i = 0; i < z.rows(); ++i)
        for (std::size_t j = 0; j < z.cols(); ++j) z(i, j) += layer.bias[j];
    return z;
}

ForwardCache forward_with_cache(const ExtractorParams& extractor, const Matrix& X) {
    if (extractor.layers.empty()) throw ShapeError("extractor has no layers");
    if (X.cols() != extractor.input_dim())
        throw ShapeError("forward_features: input dim " + std::to_string(X.cols()) +
                         " != extractor input dim " + std::to_string(extractor.input_dim()));
    ForwardCache cache;
    Matrix a = X;
    const std::size_t L = extractor.layers.size();
    for (std::size_t l = 0; l < L; ++l) {
        cache.inputs.push_back(a);
        Matrix z = layer_forward(extractor.layers[l], a);
        cache.pre_act.push_back(z);
        if (l + 1 < L) {
            // rectifier on hidden layers
            for (double& v : z.data()) v = v > 0.0 ? v : 0.0;
        }
        a = std::move(z);
    }
    cache.features = a;
    return cache;
}

/// Backpropagates d(loss)/d(features) through the extractor, accumulating
/// into grads (which must be zero-initialized or hold prior contributions).
void backprop_extractor(const ExtractorParams& extractor, const ForwardCache& cache,
                        Matrix d_features, ExtractorParams& grads) {
    const std::size_t L = extractor.layers.size();
    Matrix d_out = std::move(d_features);
    for (std::size_t l = L; l-- > 0;) {
        Matrix d_z = std::move(d_out);
        if (l + 1 < L) {
            const Matrix& z = cache.pre_act[l];
            for (std::size_t i = 0; i < d_z.data().size(); ++i) {
                if (z.data()[i] <= 0.0) d_z.data()[i] = 0.0;
            }
        }
        grads.layers[l].weight += matmul(transpose(d_z), cache.inputs[l]);
        for (std::size_t j = 0; j < d_z.cols(); ++j) {
            double acc = 0.0;
            for (std::size_t i = 0; i < d_z.rows(); ++i) acc += d_z(i, j);
            grads.layers[l].bias[j] += acc;
        }
        if (l > 0) d_out = matmul(d_z, extractor.layers[l].weight);
    }
}

ExtractorParams extractor_zeros(const ExtractorParams& extractor) {
    ExtractorParams z;
    for (const auto& layer : extractor.layers) {
        z.layers.push_back({Matrix(layer.weight.rows(), layer.weight.cols()),
                            std::vector<double>(layer.bias.size(), 0.0)});
    }
    return z;
}

void check_labels(const std::vector<int>& y, std::size_t class_count) {
    for (int label : y) {
        if (label < 0 || static_cast<std::size_t>(label) >= class_count)
            throw std::out_of_range("label " + std::to_string(label) + " outside [0, " +
                                    std::to_string(class_count) + ")");
    }
}

}  // namespace

GradientSet zeros_like(const ModelParams& model) {
    GradientSet g;
    g.extractor = extractor_zeros(model.extractor);
    g.classifier.proxies = Matrix(model.classifier.proxies.rows(), model.classifier.proxies.cols());
    return g;
}

void visit_params(ModelParams& model, const std::function<void(std::span<double>)>& fn) {
    for (auto& layer : model.extractor.layers) {
        fn(layer.weight.data());
        fn(std::span<double>(layer.bias));
    }
    fn(model.classifier.proxies.data());
}

void visit_params(const ModelParams& model,
                  const std::function<void(std::span<const double>)>& fn) {
    for (const auto& layer : model.extractor.layers) {
        fn(layer.weight.data());
        fn(std::span<const double>(layer.bias));
    }
    fn(model.classifier.proxies.data());
}

void visit_params(ModelParams& model, GradientSet& grads,
                  const std::function<void(std::span<double>, std::span<double>)>& fn) {
    for (std::size_t l = 0; l < model.extractor.layers.size(); ++l) {
        fn(model.extractor.layers[l].weight.data(), grads.extractor.layers[l].weight.data());
        fn(std::span<double>(model.extractor.layers[l].bias),
           std::span<double>(grads.extractor.layers[l].bias));
    }
    fn(model.classifier.proxies.data(), grads.classifier.proxies.data());
}

bool bit_identical(const ModelParams& a, const ModelParams& b) {
    if (a.extractor.layers.size() != b.extractor.layers.size()) return false;
    for (std::size_t l = 0; l < a.extractor.layers.size(); ++l) {
        if (!(a.extractor.layers[l].weight == b.extractor.layers[l].weight)) return false;
        if (a.extractor.layers[l].bias != b.extractor.layers[l].bias) return false;
    }
    return a.classifier.proxies == b.classifier.proxies;
}

void Hyper::validate() const {
    if (lr <= 0.0) throw std::invalid_argument("hyper: lr must be positive");
    if (weight_decay < 0.0) throw std::invalid_argument("hyper: weight_decay must be >= 0");
    if (momentum < 0.0 || momentum >= 1.0)
        throw std::invalid_argument("hyper: momentum must lie in [0, 1)");
    if (batch_size == 0) throw std::invalid_argument("hyper: batch_size must be positive");
    if (local_epochs == 0) throw std::invalid_argument("hyper: local_epochs must be positive");
    if (mu < 0.0) throw std::invalid_argument("hyper: mu must be >= 0");
    if (lambda < 0.0 || lambda > 1.0)
        throw std::invalid_argument("hyper: lambda must lie in [0, 1]");
}

ModelParams init_model(const std::vector<std::size_t>& dims, std::size_t class_count, Rng& rng) {
    if (dims.size() < 2) throw ShapeError("init_model: dims needs at least [d_in, d_feature]");
    for (std::size_t d : dims) {
        if (d == 0) throw ShapeError("init_model: zero layer width");
    }
    if (class_count == 0) throw ShapeError("init_model: class_count must be positive");
    ModelParams model;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        const std::size_t fan_in = dims[l];
        const std::size_t fan_out = dims[l + 1];
        DenseLayer layer;
        layer.weight = rng_normal(rng, fan_out, fan_in, 0.0, 1.0 / std::sqrt(double(fan_in)));
        layer.bias.assign(fan_out, 0.0);
        model.extractor.layers.push_back(std::move(layer));
    }
    const std::size_t d = dims.back();
    model.classifier.proxies = rng_normal(rng, class_count, d, 0.0, 1.0 / std::sqrt(double(d)));
    return model;
}

Matrix forward_features(const ExtractorParams& extractor, const Matrix& X) {
    return forward_with_cache(extractor, X).features;
}

Matrix forward_logits(const ClassifierParams& classifier, const Matrix& H) {
    if (H.cols() != classifier.feature_dim())
        throw ShapeError("forward_logits: feature dim mismatch");
    return matmul(H, transpose(classifier.proxies));
}

LossGrads supervised_loss_grads(const ModelParams& model, const Matrix& X,
                                const std::vector<int>& y) {
    check_labels(y, model.class_count());
    if (X.rows() != y.size()) throw ShapeError("supervised_loss_grads: batch size mismatch");
    const std::size_t n = X.rows();
    const std::size_t C = model.class_count();

    ForwardCache cache = forward_with_cache(model.extractor, X);
    Matrix logits = forward_logits(model.classifier, cache.features);
    Matrix log_p = log_softmax_rows(logits);

    double loss = 0.0;
    for (std::size_t j = 0; j < n; ++j) loss -= log_p(j, static_cast<std::size_t>(y[j]));
    loss /= static_cast<double>(n);

    // d(loss)/d(logits) = (softmax - onehot) / n
    Matrix d_logits(n, C);
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t c = 0; c < C; ++c) {
            double p = std::exp(log_p(j, c));
            d_logits(j, c) = (p - (static_cast<std::size_t>(y[j]) == c ? 1.0 : 0.0)) /
                             static_cast<double>(n);
        }
    }

    LossGrads out;
    out.loss = loss;
    out.grads = zeros_like(model);
    out.grads.classifier.proxies = matmul(transpose(d_logits), cache.features);
    Matrix d_features = matmul(d_logits, model.classifier.proxies);
    backprop_extractor(model.extractor, cache, std::move(d_features), out.grads.extractor);
    return out;
}

ExtractorLossGrads anchor_loss_grads(const ExtractorParams& extractor, const Matrix& X,
                                     const std::vector<int>& y, const Matrix& anchors) {
    if (X.rows() != y.size()) throw ShapeError("anchor_loss_grads: batch size mismatch");
    check_labels(y, anchors.rows());
    if (anchors.cols() != extractor.feature_dim())
        throw ShapeError("anchor_loss_grads: anchor dim != feature dim");
    const std::size_t n = X.rows();

    ForwardCache cache = forward_with_cache(extractor, X);
    const Matrix& H = cache.features;

    double loss = 0.0;
    Matrix d_features(n, H.cols());
    for (std::size_t j = 0; j < n; ++j) {
        const auto c = static_cast<std::size_t>(y[j]);
        for (std::size_t k = 0; k < H.cols(); ++k) {
            const double diff = H(j, k) - anchors(c, k);
            loss += diff * diff;
            d_features(j, k) = 2.0 * diff / static_cast<double>(n);
        }
    }
    loss /= static_cast<double>(n);

    ExtractorLossGrads out;
    out.loss = loss;
    out.grads = extractor_zeros(extractor);
    backprop_extractor(extractor, cache, std::move(d_features), out.grads);
    return out;
}

LossGrads local_loss_grads(const ModelParams& model, const Matrix& X, const std::vector<int>& y,
                           const Matrix& anchors, double mu) {
    LossGrads sup = supervised_loss_grads(model, X, y);
    if (mu == 0.0) return sup;  // bit-identical degeneration

    ExtractorLossGrads fa = anchor_loss_grads(model.extractor, X, y, anchors);
    sup.loss += mu * fa.loss;
    for (std::size_t l = 0; l < sup.grads.extractor.layers.size(); ++l) {
        auto dst_w = sup.grads.extractor.layers[l].weight.data();
        auto src_w = fa.grads.layers[l].weight.data();
        for (std::size_t i = 0; i < dst_w.size(); ++i) dst_w[i] += mu * src_w[i];
        auto& dst_b = sup.grads.extractor.layers[l].bias;
        const auto& src_b = fa.grads.layers[l].bias;
        for (std::size_t i = 0; i < dst_b.size(); ++i) dst_b[i] += mu * src_b[i];
    }
    return sup;
}

ClassifierLossGrad calibration_loss_grad(const ClassifierParams& classifier,
                                         const Matrix& anchors) {
    if (anchors.rows() != classifier.class_count())
        throw ShapeError("calibration_loss_grad: anchor count != class count");
    if (anchors.cols() != classifier.feature_dim())
        throw ShapeError("calibration_loss_grad: anchor dim != proxy dim");
    const std::size_t C = classifier.class_count();

    Matrix logits = matmul(anchors, transpose(classifier.proxies));  // C x C
    Matrix log_p = log_softmax_rows(logits);

    double loss = 0.0;
    for (std::size_t c = 0; c < C; ++c) loss -= log_p(c, c);
    loss /= static_cast<double>(C);

    Matrix d_logits(C, C);
    for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t z = 0; z < C; ++z) {
            const double p = std::exp(log_p(c, z));
            d_logits(c, z) = (p - (c == z ? 1.0 : 0.0)) / static_cast<double>(C);
        }
    }

    ClassifierLossGrad out;
    out.loss = loss;
    out.grad = matmul(transpose(d_logits), anchors);
    return out;
}

void sgd_step(ModelParams& params, const GradientSet& grads, const Hyper& hyper,
              GradientSet* velocity) {
    const bool use_momentum = hyper.momentum != 0.0;
    if (use_momentum && velocity == nullptr)
        throw std::invalid_argument("sgd_step: momentum > 0 requires velocity state");

    auto step_span = [&](std::span<double> w, std::span<const double> g, std::span<double> v) {
        if (w.size() != g.size()) throw ShapeError("sgd_step: gradient shape mismatch");
        for (std::size_t i = 0; i < w.size(); ++i) {
            double eff = g[i];
            if (hyper.weight_decay != 0.0) eff += hyper.weight_decay * w[i];
            if (use_momentum) {
                v[i] = hyper.momentum * v[i] + eff;
                eff = v[i];
            }
            w[i] -= hyper.lr * eff;
        }
    };
    for (std::size_t l = 0; l < params.extractor.layers.size(); ++l) {
        auto& layer = params.extractor.layers[l];
        const auto& glayer = grads.extractor.layers[l];
        step_span(layer.weight.data(), glayer.weight.data(),
                  use_momentum ? velocity->extractor.layers[l].weight.data()
                               : std::span<double>{});
        step_span(std::span<double>(layer.bias), std::span<const double>(glayer.bias),
                  use_momentum ? std::span<double>(velocity->extractor.layers[l].bias)
                               : std::span<double>{});
    }
    step_span(params.classifier.proxies.data(), grads.classifier.proxies.data(),
              use_momentum ? velocity->classifier.proxies.data() : std::span<double>{});
}

}  // namespace fedfa
