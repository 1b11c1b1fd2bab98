#include <benchmark/benchmark.h>

#include "fedfa/server.hpp"
#include "fedfa/strategies.hpp"

using namespace fedfa;

namespace {

struct BenchFixture {
    Dataset dataset;
    std::vector<ClientPartition> partitions;
    ModelParams model;
    AnchorSet anchors;
    Hyper hyper;

    BenchFixture() {
        Rng gen(1);
        dataset = generate_synthetic(4, 200, 8, 2.5, 1.0, gen);
        Rng prng(2);
        partitions = partition_shards(dataset, 10, 2, prng);
        Rng mrng(3);
        model = init_model({8, 16, 4}, 4, mrng);
        anchors = init_orthogonal(4, 4);
        hyper.lr = 0.01;
        hyper.weight_decay = 0.001;
        hyper.batch_size = 32;
        hyper.local_epochs = 1;
    }
};

BenchFixture& fixture() {
    static BenchFixture f;
    return f;
}

}  // namespace

static void BM_Matmul(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    Rng rng(5);
    Matrix a = rng_normal(rng, n, n, 0.0, 1.0);
    Matrix b = rng_normal(rng, n, n, 0.0, 1.0);
    for (auto _ : state) {
        Matrix c = matmul(a, b);
        benchmark::DoNotOptimize(c.data().data());
    }
    state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_Matmul)->RangeMultiplier(2)->Range(8, 128)->Complexity();

static void BM_SupervisedLossGrads(benchmark::State& state) {
    auto& f = fixture();
    const auto batch = batch_iter(f.partitions[0], f.dataset, f.hyper.batch_size, 0, 1);
    for (auto _ : state) {
        auto lg = supervised_loss_grads(f.model, batch[0].X, batch[0].y);
        benchmark::DoNotOptimize(lg.loss);
    }
}
BENCHMARK(BM_SupervisedLossGrads);

static void BM_LocalEpochFedAvg(benchmark::State& state) {
    auto& f = fixture();
    for (auto _ : state) {
        auto report = local_train_fedavg(f.model, f.partitions[0], f.dataset, f.hyper, 7);
        benchmark::DoNotOptimize(report.sample_count);
    }
}
BENCHMARK(BM_LocalEpochFedAvg);

static void BM_LocalEpochFedFA(benchmark::State& state) {
    auto& f = fixture();
    FedFAOptions options;
    for (auto _ : state) {
        auto report =
            local_train_fedfa(f.model, f.anchors, f.partitions[0], f.dataset, f.hyper, options, 7);
        benchmark::DoNotOptimize(report.sample_count);
    }
}
BENCHMARK(BM_LocalEpochFedFA);

static void BM_FullRound(benchmark::State& state) {
    auto& f = fixture();
    StrategySpec spec;
    spec.kind = StrategyKind::FedFA;
    EvalContext eval;
    eval.evaluate_accuracy = false;
    ServerOptions options;
    for (auto _ : state) {
        ExperimentState s{f.model, f.anchors, 0, 11};
        auto record = run_round(s, spec, f.partitions, f.dataset, f.hyper, options, eval);
        benchmark::DoNotOptimize(record.round);
    }
}
BENCHMARK(BM_FullRound);

BENCHMARK_MAIN();
