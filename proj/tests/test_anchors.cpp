#include <doctest.h>

#include "fedfa/anchors.hpp"
#include "fedfa/data.hpp"
#include "fedfa/rng.hpp"

using namespace fedfa;

TEST_CASE("init_orthogonal identity when d == C") {
    AnchorSet set = init_orthogonal(3, 3);
    CHECK(set.anchors == Matrix::identity(3));
}

TEST_CASE("init_orthogonal zero-pads when d > C") {
    AnchorSet set = init_orthogonal(3, 5);
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t k = 0; k < 5; ++k)
            CHECK(set.anchors(c, k) == (c == k ? 1.0 : 0.0));
}

TEST_CASE("init_orthogonal Gram matrix is exactly the identity") {
    AnchorSet set = init_orthogonal(4, 7);
    Matrix gram = matmul(set.anchors, transpose(set.anchors));
    CHECK(gram == Matrix::identity(4));
}

TEST_CASE("init_orthogonal rejects d < C") {
    CHECK_THROWS_AS(init_orthogonal(5, 3), ConfigError);
}

TEST_CASE("accumulate single batch of identical class features") {
    MomentumState state = make_momentum_state(Matrix(2, 3, 0.0));
    state.begin_epoch();
    Matrix H = Matrix::from_rows({{1.0, 2.0, 3.0}, {1.0, 2.0, 3.0}});
    accumulate_batch(state, H, {1, 1}, 1);
    for (std::size_t k = 0; k < 3; ++k) {
        CHECK(state.running(1, k) == doctest::Approx(static_cast<double>(k + 1)));
        CHECK(state.running(0, k) == 0.0);
    }
}

TEST_CASE("accumulate leaves absent classes untouched") {
    MomentumState state = make_momentum_state(Matrix(3, 2, 0.0));
    state.begin_epoch();
    state.running(2, 0) = 42.0;
    Matrix H = Matrix::from_rows({{1.0, 1.0}});
    accumulate_batch(state, H, {0}, 4);
    CHECK(state.running(2, 0) == 42.0);
    CHECK(state.running(1, 0) == 0.0);
    CHECK(state.batch_presence[0] == 1);
    CHECK(state.batch_presence[2] == 0);
}

TEST_CASE("two batches average per-batch class means") {
    MomentumState state = make_momentum_state(Matrix(1, 2, 0.0));
    state.begin_epoch();
    accumulate_batch(state, Matrix::from_rows({{2.0, 0.0}}), {0}, 2);
    accumulate_batch(state, Matrix::from_rows({{0.0, 2.0}}), {0}, 2);
    CHECK(state.running(0, 0) == doctest::Approx(1.0));
    CHECK(state.running(0, 1) == doctest::Approx(1.0));
}

TEST_CASE("full epoch accumulation matches two-pass oracle") {
    Rng rng(5);
    const std::size_t C = 3, d = 4, B = 5;
    MomentumState state = make_momentum_state(Matrix(C, d, 0.0));
    state.begin_epoch();
    Matrix expect(C, d, 0.0);
    for (std::size_t tau = 0; tau < B; ++tau) {
        const std::size_t n = 2 + rng.below(4);
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
            for (std::size_t k = 0; k < d; ++k)
                expect(c, k) += mean[k] / (static_cast<double>(count) * B);
        }
    }
    CHECK(max_abs_diff(state.running, expect) < 1e-12);
}

TEST_CASE("epoch_estimate arithmetic at lambda 0.5") {
    MomentumState state = make_momentum_state(Matrix(1, 2, 0.0));
    state.snapshot = Matrix::from_rows({{2.0, 0.0}});
    state.running = Matrix::from_rows({{0.0, 2.0}});
    epoch_estimate(state, 0.5);
    CHECK(state.estimate(0, 0) == 1.0);
    CHECK(state.estimate(0, 1) == 1.0);
    // snapshot rolled, running reset
    CHECK(state.snapshot(0, 1) == 2.0);
    CHECK(state.running(0, 0) == 0.0);
}

TEST_CASE("epoch_estimate lambda 1 keeps the previous epoch") {
    MomentumState state = make_momentum_state(Matrix::from_rows({{7.0, 7.0}}));
    state.running = Matrix::from_rows({{1.0, 2.0}});
    epoch_estimate(state, 1.0);
    CHECK(state.estimate(0, 0) == 7.0);
    CHECK(state.estimate(0, 1) == 7.0);
}

TEST_CASE("epoch_estimate lambda 0 takes the latest epoch mean") {
    MomentumState state = make_momentum_state(Matrix::from_rows({{7.0, 7.0}}));
    state.running = Matrix::from_rows({{1.0, 2.0}});
    epoch_estimate(state, 0.0);
    CHECK(state.estimate(0, 0) == 1.0);
    CHECK(state.estimate(0, 1) == 2.0);
}

TEST_CASE("epoch_estimate is affine in snapshot and running") {
    Rng rng(6);
    const double lambda = 0.3;
    Matrix s1 = rng_normal(rng, 2, 3, 0.0, 1.0), r1 = rng_normal(rng, 2, 3, 0.0, 1.0);
    Matrix s2 = rng_normal(rng, 2, 3, 0.0, 1.0), r2 = rng_normal(rng, 2, 3, 0.0, 1.0);
    auto estimate = [&](const Matrix& s, const Matrix& r) {
        MomentumState st = make_momentum_state(Matrix(2, 3, 0.0));
        st.snapshot = s;
        st.running = r;
        epoch_estimate(st, lambda);
        return st.estimate;
    };
    Matrix sum_s = s1, sum_r = r1;
    sum_s += s2;
    sum_r += r2;
    Matrix combined = estimate(sum_s, sum_r);
    Matrix split = estimate(s1, r1);
    split += estimate(s2, r2);
    CHECK(max_abs_diff(combined, split) < 1e-12);
}

TEST_CASE("aggregate equal-weight estimates averages them") {
    AnchorSet prev = init_orthogonal(1, 2);
    AnchorContribution a{Matrix::from_rows({{1.0, 0.0}}), 10.0, {5}};
    AnchorContribution b{Matrix::from_rows({{0.0, 1.0}}), 10.0, {5}};
    AnchorSet next = aggregate_anchors({a, b}, prev);
    CHECK(next.anchors(0, 0) == doctest::Approx(0.5));
    CHECK(next.anchors(0, 1) == doctest::Approx(0.5));
    CHECK(next.round_index == prev.round_index + 1);
}

TEST_CASE("aggregate single holder takes its estimate") {
    AnchorSet prev = init_orthogonal(2, 2);
    AnchorContribution holder{Matrix::from_rows({{3.0, 4.0}, {0.0, 0.0}}), 8.0, {2, 0}};
    AnchorContribution absent{Matrix::from_rows({{9.0, 9.0}, {1.0, 1.0}}), 100.0, {0, 3}};
    AnchorSet next = aggregate_anchors({holder, absent}, prev);
    CHECK(next.anchors(0, 0) == 3.0);
    CHECK(next.anchors(0, 1) == 4.0);
    CHECK(next.anchors(1, 0) == 1.0);  // only `absent` holds class 1
}

TEST_CASE("aggregate carries over classes nobody holds") {
    AnchorSet prev = init_orthogonal(2, 3);
    AnchorContribution contrib{Matrix(2, 3, 5.0), 4.0, {3, 0}};
    AnchorSet next = aggregate_anchors({contrib}, prev);
    for (std::size_t k = 0; k < 3; ++k) {
        CHECK(next.anchors(0, k) == 5.0);
        CHECK(next.anchors(1, k) == prev.anchors(1, k));
    }
}

TEST_CASE("aggregate identical estimates returns them exactly") {
    Rng rng(7);
    Matrix estimate = rng_normal(rng, 3, 4, 0.0, 1.0);
    AnchorSet prev = init_orthogonal(3, 4);
    std::vector<AnchorContribution> contribs;
    for (double w : {10.0, 20.0, 70.0}) contribs.push_back({estimate, w, {1, 1, 1}});
    AnchorSet next = aggregate_anchors(contribs, prev);
    for (std::size_t i = 0; i < estimate.data().size(); ++i)
        CHECK(next.anchors.data()[i] == doctest::Approx(estimate.data()[i]).epsilon(1e-15));
}

TEST_CASE("aggregate per-class weighting variant") {
    AnchorSet prev = init_orthogonal(1, 2);
    AnchorContribution a{Matrix::from_rows({{1.0, 0.0}}), 100.0, {1}};
    AnchorContribution b{Matrix::from_rows({{0.0, 1.0}}), 100.0, {3}};
    AnchorSet next = aggregate_anchors({a, b}, prev, AnchorWeighting::ClassCount);
    CHECK(next.anchors(0, 0) == doctest::Approx(0.25));
    CHECK(next.anchors(0, 1) == doctest::Approx(0.75));
}
