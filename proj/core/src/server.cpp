#include "fedfa/server.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <thread>

namespace fedfa {

std::vector<int> sample_clients(int client_count, double sample_rate, int round,
                                std::uint64_t seed) {
    if (sample_rate <= 0.0 || sample_rate > 1.0)
        throw ConfigError("sample_clients: sample_rate must lie in (0, 1]");
    if (client_count < 1) throw ConfigError("sample_clients: need at least one client");
    const auto k = static_cast<std::size_t>(
        std::ceil(sample_rate * static_cast<double>(client_count)));
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(round)}, StreamTag::ClientSampling));
    auto picked = rng.sample_without_replacement(static_cast<std::size_t>(client_count), k);
    std::vector<int> out(picked.size());
    for (std::size_t i = 0; i < picked.size(); ++i) out[i] = static_cast<int>(picked[i]);
    std::sort(out.begin(), out.end());
    return out;
}

ModelParams aggregate_models(const std::vector<LocalReport>& reports, bool uniform_weights) {
    if (reports.empty()) throw std::invalid_argument("aggregate_models: no reports");

    std::vector<const LocalReport*> ordered;
    ordered.reserve(reports.size());
    for (const auto& r : reports) ordered.push_back(&r);
    std::sort(ordered.begin(), ordered.end(),
              [](const LocalReport* a, const LocalReport* b) { return a->client_id < b->client_id; });

    double total = 0.0;
    for (const auto* r : ordered)
        total += uniform_weights ? 1.0 : static_cast<double>(r->sample_count);

    ModelParams out = ordered.front()->updated_params;
    std::vector<std::span<double>> out_spans;
    visit_params(out, [&](std::span<double> s) { out_spans.push_back(s); });
    for (auto s : out_spans) std::fill(s.begin(), s.end(), 0.0);

    for (const auto* r : ordered) {
        const double w =
            (uniform_weights ? 1.0 : static_cast<double>(r->sample_count)) / total;
        std::size_t tensor = 0;
        visit_params(r->updated_params, [&](std::span<const double> src) {
            auto dst = out_spans[tensor++];
            if (src.size() != dst.size())
                throw ShapeError("aggregate_models: report shape mismatch");
            for (std::size_t i = 0; i < src.size(); ++i) dst[i] += w * src[i];
        });
    }
    visit_params(out, [](std::span<const double> s) {
        for (double v : s) {
            if (!std::isfinite(v))
                throw std::runtime_error("aggregate_models: non-finite parameter");
        }
    });
    return out;
}

void build_probe(const Dataset& source, std::size_t per_class, std::uint64_t seed, Matrix& probe_X,
                 std::vector<int>& probe_y) {
    std::vector<std::vector<std::size_t>> pools(source.class_count);
    for (std::size_t j = 0; j < source.size(); ++j)
        pools[static_cast<std::size_t>(source.y[j])].push_back(j);
    Rng rng(derive_seed(seed, {}, StreamTag::Probe));
    std::vector<std::size_t> chosen;
    for (auto& pool : pools) {
        if (pool.empty()) throw ConfigError("build_probe: a class is absent from the probe source");
        rng.shuffle(pool);
        const std::size_t take = std::min(per_class, pool.size());
        chosen.insert(chosen.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(take));
    }
    Batch b = gather(source, chosen, std::nullopt);
    probe_X = std::move(b.X);
    probe_y = std::move(b.y);
}

RoundRecord run_round(ExperimentState& state, const StrategySpec& strategy,
                      const std::vector<ClientPartition>& partitions, const Dataset& dataset,
                      const Hyper& hyper, const ServerOptions& options, const EvalContext& eval) {
    const int round = state.round + 1;
    const auto sampled =
        sample_clients(static_cast<int>(partitions.size()), options.sample_rate, round, state.seed);

    std::vector<LocalReport> reports(sampled.size());
    auto train_one = [&](std::size_t slot) {
        const int client = sampled[slot];
        const std::uint64_t client_seed =
            derive_seed(state.seed,
                        {static_cast<std::uint64_t>(round), static_cast<std::uint64_t>(client)},
                        StreamTag::LocalTrain);
        reports[slot] = local_train(strategy, state.global_model, state.anchor_set,
                                    partitions[static_cast<std::size_t>(client)], dataset, hyper,
                                    client_seed);
    };
    const int workers = std::max(1, options.workers);
    if (workers == 1 || sampled.size() <= 1) {
        for (std::size_t i = 0; i < sampled.size(); ++i) train_one(i);
    } else {
        std::vector<std::thread> threads;
        std::size_t next = 0;
        const std::size_t stride =
            (sampled.size() + static_cast<std::size_t>(workers) - 1) /
            static_cast<std::size_t>(workers);
        for (int w = 0; w < workers && next < sampled.size(); ++w) {
            const std::size_t begin = next;
            const std::size_t end = std::min(sampled.size(), begin + stride);
            next = end;
            threads.emplace_back([&, begin, end] {
                for (std::size_t i = begin; i < end; ++i) train_one(i);
            });
        }
        for (auto& t : threads) t.join();
    }

    state.global_model = aggregate_models(reports, options.uniform_model_weights);

    const bool fedfa_anchors =
        strategy.kind == StrategyKind::FedFA && strategy.fedfa.update_anchors;
    if (fedfa_anchors) {
        std::vector<AnchorContribution> contributions;
        contributions.reserve(reports.size());
        for (const auto& r : reports) {
            AnchorContribution c;
            c.estimate = r.anchor_estimate;
            c.client_weight = static_cast<double>(r.sample_count);
            c.class_presence = r.class_presence;
            contributions.push_back(std::move(c));
        }
        state.anchor_set =
            aggregate_anchors(contributions, state.anchor_set, options.anchor_weighting);
    }
    state.round = round;

    RoundRecord record;
    record.round = round;
    if (eval.evaluate_accuracy && eval.test != nullptr)
        record.test_accuracy = top1_accuracy(state.global_model, *eval.test);
    if (reports.size() >= 2) {
        std::vector<Matrix> updates;
        updates.reserve(reports.size());
        for (const auto& r : reports) updates.push_back(r.classifier_update);
        record.classifier_update_cosine = classifier_update_similarity(updates, eval.similarity);

        if (!eval.probe_y.empty()) {
            std::vector<const ExtractorParams*> extractors;
            std::vector<std::vector<std::size_t>> presence;
            extractors.reserve(reports.size());
            for (const auto& r : reports) {
                extractors.push_back(&r.updated_params.extractor);
                if (eval.feature_distance_holders_only) presence.push_back(r.class_presence);
            }
            record.per_class_feature_distance = cross_client_feature_distance(
                extractors, eval.probe_X, eval.probe_y, state.global_model.class_count(),
                presence);
            double total = 0.0;
            int defined = 0;
            for (double v : record.per_class_feature_distance) {
                if (std::isfinite(v)) {
                    total += v;
                    ++defined;
                }
            }
            record.mean_feature_distance =
                defined > 0 ? total / defined : std::numeric_limits<double>::quiet_NaN();
        }
    }
    if (eval.train_union != nullptr) {
        record.per_class_grad_sq_norm = classifier_grad_sq_norm(state.global_model,
                                                                *eval.train_union);
        record.classifier_grad_sq_norm = total_grad_sq_norm(record.per_class_grad_sq_norm);
    }
    record.client_loss_means.reserve(reports.size());
    double loss_total = 0.0;
    for (const auto& r : reports) {
        const double m = r.local_loss_trace.empty()
                             ? 0.0
                             : sum(r.local_loss_trace) /
                                   static_cast<double>(r.local_loss_trace.size());
        record.client_loss_means.push_back(m);
        loss_total += m;
    }
    record.mean_local_loss = loss_total / static_cast<double>(reports.size());
    return record;
}

}  // namespace fedfa
