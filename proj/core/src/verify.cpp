#include "fedfa/verify.hpp"

#include <cmath>
#include <functional>
#include <sstream>

#include "fedfa/anchors.hpp"
#include "fedfa/data.hpp"
#include "fedfa/metrics.hpp"
#include "fedfa/model.hpp"
#include "fedfa/server.hpp"
#include "fedfa/strategies.hpp"

namespace fedfa {

namespace {

constexpr double kFdEpsilon = 1e-6;
constexpr double kFdTolerance = 1e-5;

struct Instance {
    ModelParams model;
    Matrix X;
    std::vector<int> y;
    Matrix anchors;
};

Instance random_instance(std::uint64_t seed) {
    Rng rng(seed);
    const std::size_t n = 2 + rng.below(4);        // 2..5 samples
    const std::size_t d_in = 3 + rng.below(4);     // 3..6
    const std::size_t C = 2 + rng.below(3);        // 2..4 classes
    const std::size_t d = C + rng.below(3);        // >= C
    std::vector<std::size_t> dims{d_in};
    const std::size_t hidden_layers = rng.below(2);  // 0 or 1 hidden layer
    for (std::size_t l = 0; l < hidden_layers; ++l) dims.push_back(3 + rng.below(5));
    dims.push_back(d);

    Instance inst;
    inst.model = init_model(dims, C, rng);
    inst.X = rng_normal(rng, n, d_in, 0.0, 1.0);
    inst.y.resize(n);
    for (auto& label : inst.y) label = static_cast<int>(rng.below(C));
    inst.anchors = rng_normal(rng, C, d, 0.0, 1.0);
    return inst;
}

/// Central finite difference of `loss_at` w.r.t. every model parameter,
/// compared against `analytic` with relative tolerance.
bool finite_difference_check(ModelParams model, const GradientSet& analytic,
                             const std::function<double(const ModelParams&)>& loss_at,
                             double& worst) {
    std::vector<double> flat_grads;
    {
        const GradientSet& g = analytic;
        for (const auto& layer : g.extractor.layers) {
            const auto w = layer.weight.data();
            flat_grads.insert(flat_grads.end(), w.begin(), w.end());
            flat_grads.insert(flat_grads.end(), layer.bias.begin(), layer.bias.end());
        }
        const auto p = g.classifier.proxies.data();
        flat_grads.insert(flat_grads.end(), p.begin(), p.end());
    }

    std::vector<std::span<double>> spans;
    visit_params(model, [&](std::span<double> s) { spans.push_back(s); });

    std::size_t cursor = 0;
    bool ok = true;
    for (auto s : spans) {
        for (std::size_t i = 0; i < s.size(); ++i, ++cursor) {
            const double saved = s[i];
            s[i] = saved + kFdEpsilon;
            const double up = loss_at(model);
            s[i] = saved - kFdEpsilon;
            const double down = loss_at(model);
            s[i] = saved;
            const double fd = (up - down) / (2.0 * kFdEpsilon);
            const double a = flat_grads[cursor];
            const double rel = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-3});
            worst = std::max(worst, rel);
            if (rel > kFdTolerance) ok = false;
        }
    }
    return ok;
}

VerifyResult verify_gradients() {
    VerifyResult result{"finite-difference gradients (supervised/anchor/combined/calibration)",
                        true, ""};
    double worst = 0.0;
    for (std::uint64_t seed = 1; seed <= 20 && result.passed; ++seed) {
        Instance inst = random_instance(seed * 7919);

        LossGrads sup = supervised_loss_grads(inst.model, inst.X, inst.y);
        result.passed &= finite_difference_check(
            inst.model, sup.grads,
            [&](const ModelParams& m) { return supervised_loss_grads(m, inst.X, inst.y).loss; },
            worst);

        ExtractorLossGrads fa =
            anchor_loss_grads(inst.model.extractor, inst.X, inst.y, inst.anchors);
        GradientSet fa_full = zeros_like(inst.model);
        fa_full.extractor = fa.grads;
        result.passed &= finite_difference_check(
            inst.model, fa_full,
            [&](const ModelParams& m) {
                return anchor_loss_grads(m.extractor, inst.X, inst.y, inst.anchors).loss;
            },
            worst);

        LossGrads combined = local_loss_grads(inst.model, inst.X, inst.y, inst.anchors, 0.1);
        result.passed &= finite_difference_check(
            inst.model, combined.grads,
            [&](const ModelParams& m) {
                return local_loss_grads(m, inst.X, inst.y, inst.anchors, 0.1).loss;
            },
            worst);

        ClassifierLossGrad cal = calibration_loss_grad(inst.model.classifier, inst.anchors);
        GradientSet cal_full = zeros_like(inst.model);
        cal_full.classifier.proxies = cal.grad;
        result.passed &= finite_difference_check(
            inst.model, cal_full,
            [&](const ModelParams& m) {
                return calibration_loss_grad(m.classifier, inst.anchors).loss;
            },
            worst);
    }
    std::ostringstream os;
    os << "worst relative error " << worst;
    result.detail = os.str();
    return result;
}

VerifyResult verify_lemma1() {
    VerifyResult result{"classifier-update deviation, exact per-sample form", true, ""};
    double worst = 0.0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        Instance inst = random_instance(seed * 104729);
        Rng rng(seed * 13);
        const std::size_t n = inst.y.size();
        Batch a{inst.X, inst.y};
        Batch b{rng_normal(rng, n, inst.X.cols(), 0.0, 1.0), inst.y};
        for (auto& label : b.y) label = static_cast<int>(rng.below(inst.model.class_count()));
        const auto res = lemma1_deviation_oracle(inst.model, a, b, 0.01);
        worst = std::max(worst, res.max_abs_err);
        if (res.max_abs_err >= 1e-10) result.passed = false;

        // Identical batches: exactly zero deltas.
        const auto same = lemma1_deviation_oracle(inst.model, a, a, 0.01);
        if (same.max_abs_err != 0.0 || max_abs_diff(same.formula_delta,
                                                    Matrix(same.formula_delta.rows(),
                                                           same.formula_delta.cols())) != 0.0)
            result.passed = false;
    }
    std::ostringstream os;
    os << "worst |formula - measured| " << worst;
    result.detail = os.str();
    return result;
}

VerifyResult verify_degenerations() {
    VerifyResult result{"degeneration identities (FedFA->FedAvg, FedProx->FedAvg, centralized)",
                        true, ""};
    Rng rng(20240815);
    Dataset ds = generate_synthetic(4, 30, 8, 2.5, 1.0, rng);
    Rng prng(99);
    auto partitions = partition_shards(ds, 4, 2, prng);
    Rng mrng(7);
    ModelParams model = init_model({8, 10, 4}, 4, mrng);
    AnchorSet anchors = init_orthogonal(4, 4);
    Hyper hyper;
    hyper.lr = 0.01;
    hyper.weight_decay = 0.001;
    hyper.batch_size = 16;
    hyper.local_epochs = 2;

    const std::uint64_t seed = 555;
    const auto avg = local_train_fedavg(model, partitions[0], ds, hyper, seed);

    FedFAOptions degenerate;
    degenerate.mu = 0.0;
    degenerate.calibrate = CalibrationTiming::Off;
    degenerate.update_anchors = false;
    const auto fa = local_train_fedfa(model, anchors, partitions[0], ds, hyper, degenerate, seed);
    if (!bit_identical(avg.updated_params, fa.updated_params)) result.passed = false;

    const auto prox = local_train_fedprox(model, partitions[0], ds, hyper, 0.0, seed);
    if (!bit_identical(avg.updated_params, prox.updated_params)) result.passed = false;

    // Single-client full participation == centralized SGD replay.
    Rng crng(11);
    auto single = partition_shards(ds, 1, 4, crng);
    ExperimentState state;
    state.global_model = model;
    state.anchor_set = anchors;
    state.seed = 2024;
    StrategySpec spec;
    spec.kind = StrategyKind::FedAvg;
    ServerOptions options;
    EvalContext eval;  // no datasets: skip evaluation
    eval.evaluate_accuracy = false;
    const int rounds = 3;
    for (int t = 0; t < rounds; ++t) run_round(state, spec, single, ds, hyper, options, eval);

    ModelParams central = model;
    GradientSet velocity = zeros_like(central);
    for (int t = 1; t <= rounds; ++t) {
        const std::uint64_t client_seed = derive_seed(
            2024, {static_cast<std::uint64_t>(t), 0}, StreamTag::LocalTrain);
        velocity = zeros_like(central);
        for (std::size_t k = 0; k < hyper.local_epochs; ++k) {
            for (const Batch& batch : batch_iter(single[0], ds, hyper.batch_size, k, client_seed)) {
                LossGrads lg = supervised_loss_grads(central, batch.X, batch.y);
                sgd_step(central, lg.grads, hyper, &velocity);
            }
        }
    }
    if (!bit_identical(state.global_model, central)) result.passed = false;
    return result;
}

VerifyResult verify_aggregation() {
    VerifyResult result{"aggregation identities", true, ""};
    Rng rng(31);
    ModelParams model = init_model({4, 6, 3}, 3, rng);

    auto make_report = [&](int id, std::size_t n, const ModelParams& params) {
        LocalReport r;
        r.client_id = id;
        r.updated_params = params;
        r.sample_count = n;
        r.class_presence = {n, 0, 0};
        r.classifier_update = Matrix(3, 3, 0.0);
        return r;
    };

    // Identical reports aggregate to the identical model (1 ulp scale: the
    // non-dyadic weights round each term once).
    std::vector<LocalReport> same{make_report(0, 10, model), make_report(1, 30, model)};
    {
        const ModelParams out = aggregate_models(same);
        std::vector<double> flat;
        visit_params(model, [&](std::span<const double> s) {
            flat.insert(flat.end(), s.begin(), s.end());
        });
        std::size_t i = 0;
        visit_params(out, [&](std::span<const double> s) {
            for (double v : s) {
                if (std::abs(v - flat[i++]) > 1e-15) result.passed = false;
            }
        });
    }

    // Weights (3,1) on scalar parameters 0 and 4 -> 1.
    ModelParams a = model, b = model;
    visit_params(a, [](std::span<double> s) { std::fill(s.begin(), s.end(), 0.0); });
    visit_params(b, [](std::span<double> s) { std::fill(s.begin(), s.end(), 4.0); });
    std::vector<LocalReport> weighted{make_report(0, 3, a), make_report(1, 1, b)};
    const ModelParams mixed = aggregate_models(weighted);
    bool all_one = true;
    visit_params(mixed, [&](std::span<const double> s) {
        for (double v : s) all_one &= (v == 1.0);
    });
    if (!all_one) result.passed = false;

    // Arrival order must not matter (reduction sorts by client id).
    std::vector<LocalReport> reversed{weighted[1], weighted[0]};
    if (!bit_identical(aggregate_models(weighted), aggregate_models(reversed)))
        result.passed = false;
    return result;
}

VerifyResult verify_anchor_pipeline() {
    VerifyResult result{"anchor momentum/estimate/aggregation oracle", true, ""};
    Rng rng(77);
    const std::size_t C = 3, d = 4;
    AnchorSet init = init_orthogonal(C, d);

    // Accumulate one full epoch over B batches and compare against a direct
    // two-pass mean of per-batch class means.
    const std::size_t B = 4;
    MomentumState state = make_momentum_state(init.anchors);
    state.begin_epoch();
    Matrix expectation(C, d, 0.0);
    std::vector<std::size_t> present(C, 0);
    for (std::size_t tau = 0; tau < B; ++tau) {
        const std::size_t n = 3 + rng.below(3);
        Matrix H = rng_normal(rng, n, d, 0.0, 1.0);
        std::vector<int> y(n);
        for (auto& label : y) label = static_cast<int>(rng.below(C));
        accumulate_batch(state, H, y, B);
        for (std::size_t c = 0; c < C; ++c) {
            std::size_t count = 0;
            std::vector<double> mean(d, 0.0);
            for (std::size_t j = 0; j < n; ++j) {
                if (static_cast<std::size_t>(y[j]) != c) continue;
                ++count;
                for (std::size_t k = 0; k < d; ++k) mean[k] += H(j, k);
            }
            if (count == 0) continue;
            present[c] += 1;
            for (std::size_t k = 0; k < d; ++k)
                expectation(c, k) += mean[k] / (static_cast<double>(count) * B);
        }
    }
    if (max_abs_diff(state.running, expectation) > 1e-12) result.passed = false;

    // Estimate arithmetic at lambda = 0.5.
    MomentumState est = make_momentum_state(Matrix(1, 2, 0.0));
    est.snapshot = Matrix::from_rows({{2.0, 0.0}});
    est.running = Matrix::from_rows({{0.0, 2.0}});
    epoch_estimate(est, 0.5);
    if (max_abs_diff(est.estimate, Matrix::from_rows({{1.0, 1.0}})) != 0.0) result.passed = false;

    // Carry-over when no client holds a class.
    AnchorContribution contrib;
    contrib.estimate = Matrix(C, d, 5.0);
    contrib.client_weight = 10.0;
    contrib.class_presence = {4, 0, 2};
    const AnchorSet next = aggregate_anchors({contrib}, init);
    for (std::size_t k = 0; k < d; ++k) {
        if (next.anchors(0, k) != 5.0) result.passed = false;
        if (next.anchors(1, k) != init.anchors(1, k)) result.passed = false;
        if (next.anchors(2, k) != 5.0) result.passed = false;
    }
    return result;
}

VerifyResult verify_partitioners() {
    VerifyResult result{"partitioner properties (disjoint/exhaustive, shards, dirichlet)", true,
                        ""};
    Rng gen(4242);
    Dataset ds = generate_synthetic(10, 60, 12, 3.0, 1.0, gen);

    auto check_partition_property = [&](const std::vector<ClientPartition>& parts) {
        std::vector<int> seen(ds.size(), 0);
        for (const auto& p : parts) {
            for (std::size_t idx : p.sample_indices) {
                if (idx >= ds.size()) return false;
                seen[idx] += 1;
            }
            const auto recomputed = count_per_class(ds, p.sample_indices);
            if (recomputed != p.per_class_counts) return false;
        }
        for (int s : seen)
            if (s != 1) return false;
        return true;
    };

    Rng r1(1);
    const auto shards = partition_shards(ds, 10, 2, r1);
    if (!check_partition_property(shards)) result.passed = false;
    std::vector<int> holders(10, 0);
    for (const auto& p : shards) {
        int nonzero = 0;
        for (std::size_t c = 0; c < 10; ++c) {
            if (p.per_class_counts[c] > 0) {
                ++nonzero;
                holders[c] += 1;
            }
        }
        if (nonzero != 2) result.passed = false;
    }
    for (int h : holders)
        if (h != 2) result.passed = false;

    Rng r2(2);
    const auto dir = partition_dirichlet(ds, 10, 1e6, r2);
    if (!check_partition_property(dir)) result.passed = false;
    for (const auto& p : dir) {
        for (std::size_t c = 0; c < 10; ++c) {
            const double share = static_cast<double>(p.per_class_counts[c]) / 60.0;
            if (share > 0.1 + 0.05) result.passed = false;
        }
    }
    return result;
}

VerifyResult verify_numerics() {
    VerifyResult result{"numerics oracles (matmul, softmax, rng reproducibility)", true, ""};
    Rng rng(5);
    Matrix a = rng_normal(rng, 5, 7, 0.0, 1.0);
    Matrix b = rng_normal(rng, 7, 3, 0.0, 1.0);
    const Matrix ab = matmul(a, b);
    Matrix naive(5, 3, 0.0);
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 3; ++j)
            for (std::size_t k = 0; k < 7; ++k) naive(i, j) += a(i, k) * b(k, j);
    if (max_abs_diff(ab, naive) > 1e-12) result.passed = false;

    Matrix big = Matrix::from_rows({{1000.0, 1000.0, 1000.0}});
    const Matrix sm = softmax_rows(big);
    if (std::abs(sum(sm.row(0)) - 1.0) > 1e-12) result.passed = false;

    Rng s1(99), s2(99);
    for (int i = 0; i < 1000; ++i) {
        if (s1.next_u64() != s2.next_u64()) {
            result.passed = false;
            break;
        }
    }
    return result;
}

}  // namespace

std::vector<VerifyResult> run_verification_suites() {
    return {
        verify_numerics(),      verify_gradients(),       verify_lemma1(),
        verify_degenerations(), verify_aggregation(),     verify_anchor_pipeline(),
        verify_partitioners(),
    };
}

}  // namespace fedfa
