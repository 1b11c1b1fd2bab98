#include <doctest.h>

#include <cmath>

#include "fedfa/strategies.hpp"

using namespace fedfa;

namespace {

struct Fixture {
    Dataset dataset;
    std::vector<ClientPartition> partitions;
    ModelParams model;
    AnchorSet anchors;
    Hyper hyper;

    Fixture() {
        Rng gen(101);
        dataset = generate_synthetic(4, 30, 8, 2.5, 1.0, gen);
        Rng prng(102);
        partitions = partition_shards(dataset, 4, 2, prng);
        Rng mrng(103);
        model = init_model({8, 10, 4}, 4, mrng);
        anchors = init_orthogonal(4, 4);
        hyper.lr = 0.01;
        hyper.weight_decay = 0.001;
        hyper.batch_size = 16;
        hyper.local_epochs = 2;
    }
};

}  // namespace

TEST_CASE("fedavg with lr 0 leaves parameters unchanged") {
    Fixture f;
    Hyper frozen = f.hyper;
    frozen.lr = 0.0;
    // lr must be positive by contract; emulate with zero-effect steps instead
    CHECK_THROWS_AS(frozen.validate(), std::invalid_argument);
    frozen.lr = 1e-300;  // vanishing step as the degenerate case
    const auto report = local_train_fedavg(f.model, f.partitions[0], f.dataset, frozen, 9);
    CHECK(max_abs_diff(report.updated_params.classifier.proxies, f.model.classifier.proxies) <
          1e-290);
}

TEST_CASE("fedavg K=1 single batch equals one sgd step") {
    Fixture f;
    Hyper hyper = f.hyper;
    hyper.local_epochs = 1;
    hyper.batch_size = 1024;  // one batch covers the partition
    const std::uint64_t seed = 77;
    const auto report = local_train_fedavg(f.model, f.partitions[1], f.dataset, hyper, seed);

    const auto batches = batch_iter(f.partitions[1], f.dataset, hyper.batch_size, 0, seed);
    REQUIRE(batches.size() == 1);
    ModelParams expect = f.model;
    GradientSet velocity = zeros_like(expect);
    const auto lg = supervised_loss_grads(expect, batches[0].X, batches[0].y);
    sgd_step(expect, lg.grads, hyper, &velocity);
    CHECK(bit_identical(report.updated_params, expect));
    REQUIRE(report.local_loss_trace.size() == 1);
    CHECK(report.local_loss_trace[0] == lg.loss);
}

TEST_CASE("fedavg loss trace is finite, one entry per batch") {
    Fixture f;
    const auto report = local_train_fedavg(f.model, f.partitions[0], f.dataset, f.hyper, 5);
    const std::size_t batches_per_epoch =
        (f.partitions[0].size() + f.hyper.batch_size - 1) / f.hyper.batch_size;
    CHECK(report.local_loss_trace.size() == batches_per_epoch * f.hyper.local_epochs);
    for (double loss : report.local_loss_trace) CHECK(std::isfinite(loss));
}

TEST_CASE("report carries classifier update and class presence") {
    Fixture f;
    const auto report = local_train_fedavg(f.model, f.partitions[2], f.dataset, f.hyper, 5);
    CHECK(report.client_id == 2);
    CHECK(report.sample_count == f.partitions[2].size());
    CHECK(report.class_presence == f.partitions[2].per_class_counts);
    Matrix recomputed = report.updated_params.classifier.proxies;
    recomputed -= f.model.classifier.proxies;
    CHECK(max_abs_diff(recomputed, report.classifier_update) == 0.0);
}

TEST_CASE("fedprox at the global model has zero proximal gradient") {
    Fixture f;
    Hyper hyper = f.hyper;
    hyper.local_epochs = 1;
    hyper.batch_size = 1024;
    const std::uint64_t seed = 31;
    // One step from w == w_global: the proximal term vanishes, so the first
    // step matches FedAvg's exactly; afterwards trajectories may differ.
    const auto prox = local_train_fedprox(f.model, f.partitions[0], f.dataset, hyper, 0.05, seed);
    const auto avg = local_train_fedavg(f.model, f.partitions[0], f.dataset, hyper, seed);
    CHECK(bit_identical(prox.updated_params, avg.updated_params));
}

TEST_CASE("fedprox prox_mu 0 is bit-identical to fedavg") {
    Fixture f;
    const std::uint64_t seed = 32;
    const auto prox = local_train_fedprox(f.model, f.partitions[0], f.dataset, f.hyper, 0.0, seed);
    const auto avg = local_train_fedavg(f.model, f.partitions[0], f.dataset, f.hyper, seed);
    CHECK(bit_identical(prox.updated_params, avg.updated_params));
    CHECK(prox.local_loss_trace == avg.local_loss_trace);
}

TEST_CASE("fedprox pulls toward the global model") {
    Fixture f;
    Hyper hyper = f.hyper;
    hyper.local_epochs = 4;
    const std::uint64_t seed = 33;
    const auto strong =
        local_train_fedprox(f.model, f.partitions[0], f.dataset, hyper, 10.0, seed);
    const auto avg = local_train_fedavg(f.model, f.partitions[0], f.dataset, hyper, seed);
    auto sq_dist_to_global = [&](const ModelParams& p) {
        double acc = 0.0;
        std::vector<double> flat;
        visit_params(f.model, [&](std::span<const double> s) {
            flat.insert(flat.end(), s.begin(), s.end());
        });
        std::size_t i = 0;
        visit_params(p, [&](std::span<const double> s) {
            for (double v : s) {
                const double d = v - flat[i++];
                acc += d * d;
            }
        });
        return acc;
    };
    CHECK(sq_dist_to_global(strong.updated_params) < sq_dist_to_global(avg.updated_params));
}

TEST_CASE("fedfa degenerate switches reproduce fedavg bit-exactly") {
    Fixture f;
    FedFAOptions off;
    off.mu = 0.0;
    off.calibrate = CalibrationTiming::Off;
    off.update_anchors = false;
    const std::uint64_t seed = 41;
    const auto fa =
        local_train_fedfa(f.model, f.anchors, f.partitions[0], f.dataset, f.hyper, off, seed);
    const auto avg = local_train_fedavg(f.model, f.partitions[0], f.dataset, f.hyper, seed);
    CHECK(bit_identical(fa.updated_params, avg.updated_params));
    CHECK(fa.local_loss_trace == avg.local_loss_trace);
    CHECK(fa.anchor_estimate.empty());
}

TEST_CASE("per-batch calibration descends the calibration loss") {
    Fixture f;
    FedFAOptions options;  // per-batch calibration, anchors updated
    ModelParams model = f.model;
    GradientSet velocity = zeros_like(model);
    const auto batches = batch_iter(f.partitions[0], f.dataset, f.hyper.batch_size, 0, 51);
    for (const auto& batch : batches) {
        LossGrads lg = local_loss_grads(model, batch.X, batch.y, f.anchors.anchors, options.mu);
        sgd_step(model, lg.grads, f.hyper, &velocity);
        const double before = calibration_loss_grad(model.classifier, f.anchors.anchors).loss;
        calibrate_after_training(model, f.anchors.anchors, 1, f.hyper.lr);
        const double after = calibration_loss_grad(model.classifier, f.anchors.anchors).loss;
        CHECK(after <= before);
    }
}

TEST_CASE("calibration touches only classifier parameters") {
    Fixture f;
    FedFAOptions with_cc;
    with_cc.mu = 0.1;
    with_cc.calibrate = CalibrationTiming::PerBatch;
    with_cc.update_anchors = false;
    FedFAOptions without_cc = with_cc;
    without_cc.calibrate = CalibrationTiming::Off;
    const std::uint64_t seed = 52;
    // With a single batch and epoch the only difference is the trailing
    // calibration step, which must leave the extractor bytes untouched.
    Hyper hyper = f.hyper;
    hyper.local_epochs = 1;
    hyper.batch_size = 1024;
    const auto a =
        local_train_fedfa(f.model, f.anchors, f.partitions[0], f.dataset, hyper, with_cc, seed);
    const auto b =
        local_train_fedfa(f.model, f.anchors, f.partitions[0], f.dataset, hyper, without_cc, seed);
    for (std::size_t l = 0; l < a.updated_params.extractor.layers.size(); ++l) {
        CHECK(a.updated_params.extractor.layers[l].weight ==
              b.updated_params.extractor.layers[l].weight);
        CHECK(a.updated_params.extractor.layers[l].bias ==
              b.updated_params.extractor.layers[l].bias);
    }
    CHECK(max_abs_diff(a.updated_params.classifier.proxies,
                       b.updated_params.classifier.proxies) > 0.0);
}

TEST_CASE("anchor accumulation never mutates model parameters") {
    Fixture f;
    FedFAOptions with_au;
    with_au.mu = 0.1;
    with_au.calibrate = CalibrationTiming::Off;
    with_au.update_anchors = true;
    FedFAOptions without_au = with_au;
    without_au.update_anchors = false;
    const std::uint64_t seed = 53;
    const auto a =
        local_train_fedfa(f.model, f.anchors, f.partitions[0], f.dataset, f.hyper, with_au, seed);
    const auto b = local_train_fedfa(f.model, f.anchors, f.partitions[0], f.dataset, f.hyper,
                                     without_au, seed);
    CHECK(bit_identical(a.updated_params, b.updated_params));
    CHECK_FALSE(a.anchor_estimate.empty());
    CHECK(b.anchor_estimate.empty());
}

TEST_CASE("identical twins produce bit-identical classifier updates") {
    // Two clients with the same data, init and batch order: the classifier
    // update deviation is exactly zero.
    Fixture f;
    ClientPartition twin = f.partitions[0];
    twin.client_id = 9;
    const std::uint64_t seed = 54;
    const auto a = local_train_fedfa(f.model, f.anchors, f.partitions[0], f.dataset, f.hyper,
                                     FedFAOptions{}, seed);
    const auto b =
        local_train_fedfa(f.model, f.anchors, twin, f.dataset, f.hyper, FedFAOptions{}, seed);
    CHECK(a.classifier_update == b.classifier_update);
}

TEST_CASE("calibrate_after_training steps=0 leaves the model unchanged") {
    Fixture f;
    ModelParams model = f.model;
    calibrate_after_training(model, f.anchors.anchors, 0, 0.01);
    CHECK(bit_identical(model, f.model));
}

TEST_CASE("calibrate_after_training is non-increasing over steps") {
    Fixture f;
    ModelParams model = f.model;
    double prev = calibration_loss_grad(model.classifier, f.anchors.anchors).loss;
    for (int s = 0; s < 25; ++s) {
        calibrate_after_training(model, f.anchors.anchors, 1, 0.01);
        const double now = calibration_loss_grad(model.classifier, f.anchors.anchors).loss;
        CHECK(now <= prev);
        prev = now;
    }
}

TEST_CASE("per-epoch calibration equals composing one step at each epoch end") {
    Fixture f;
    FedFAOptions per_epoch;
    per_epoch.mu = 0.1;
    per_epoch.calibrate = CalibrationTiming::PerEpoch;
    per_epoch.update_anchors = false;
    const std::uint64_t seed = 55;
    const auto reported = local_train_fedfa(f.model, f.anchors, f.partitions[0], f.dataset,
                                            f.hyper, per_epoch, seed);

    // Manual composition: plain batches plus calibrate_after_training(1) at
    // every epoch boundary.
    ModelParams model = f.model;
    GradientSet velocity = zeros_like(model);
    for (std::size_t k = 0; k < f.hyper.local_epochs; ++k) {
        for (const auto& batch :
             batch_iter(f.partitions[0], f.dataset, f.hyper.batch_size, k, seed)) {
            LossGrads lg = local_loss_grads(model, batch.X, batch.y, f.anchors.anchors, 0.1);
            sgd_step(model, lg.grads, f.hyper, &velocity);
        }
        calibrate_after_training(model, f.anchors.anchors, 1, f.hyper.lr);
    }
    CHECK(bit_identical(reported.updated_params, model));
}

TEST_CASE("fedfa defaults match the published configuration") {
    FedFAOptions defaults;
    CHECK(defaults.mu == 0.1);
    CHECK(defaults.lambda == 0.5);
    CHECK(defaults.calibrate == CalibrationTiming::PerBatch);
    CHECK(defaults.update_anchors);
}

TEST_CASE("strategy spec validation") {
    StrategySpec spec;
    spec.prox_mu = -1.0;
    CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
    spec.prox_mu = 0.05;
    spec.fedfa.lambda = 1.5;
    CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
    spec.fedfa.lambda = 0.5;
    CHECK_NOTHROW(spec.validate());
}
