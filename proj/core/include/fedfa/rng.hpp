#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "fedfa/matrix.hpp"

namespace fedfa {

/// splitmix64 mixing step. Used both as a standalone stream and to expand
/// seeds into xoshiro state.
std::uint64_t splitmix64_next(std::uint64_t& state);

/// Purpose tags for substream derivation; see derive_seed.
enum class StreamTag : std::uint64_t {
    DataGen = 1,
    Partition = 2,
    Skew = 3,
    ModelInit = 4,
    ClientSampling = 5,
    LocalTrain = 6,
    Probe = 7,
    BatchShuffle = 8,
};

/// Deterministic substream derivation: every consumer of randomness owns a
/// seed derived from (base seed, words..., tag) so streams never alias.
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> words,
                          StreamTag tag);

/// xoshiro256++ seeded via splitmix64. Identical seeds produce identical
/// streams on every platform; no libc or std distribution involved anywhere.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next_u64();

    /// Uniform double in [0, 1) with 53 random bits.
    double next_double();

    /// Uniform double in [lo, hi).
    double uniform(double lo, double hi);

    /// Unbiased uniform integer in [0, n) via rejection sampling.
    std::uint64_t below(std::uint64_t n);

    /// Standard normal via Box-Muller. Draws are generated in pairs; the
    /// second value of a pair is cached for the next call.
    double normal();

    double normal(double mean, double std);

    /// Gamma(alpha, 1) via Marsaglia-Tsang squeeze (alpha >= 1) with the
    /// standard boost for alpha < 1.
    double gamma(double alpha);

    /// Proportions from Dir(alpha * 1_n).
    std::vector<double> dirichlet(double alpha, std::size_t n);

    /// In-place Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    /// k distinct values from [0, n), ascending order not guaranteed.
    std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

    std::span<const std::uint64_t, 4> state() const { return state_; }

private:
    std::array<std::uint64_t, 4> state_{};
    double spare_normal_ = 0.0;
    bool has_spare_ = false;
};

/// rows x cols matrix of Normal(mean, std^2) draws in row-major fill order.
/// std must be >= 0; std == 0 yields a constant matrix.
Matrix rng_normal(Rng& rng, std::size_t rows, std::size_t cols, double mean, double std);

}  // namespace fedfa
